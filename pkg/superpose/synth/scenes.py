"""Synthetic fixtures: two parallel fluorescent lines and atomic emission multiplets."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field

from superpose.config.logging import get_logger
from superpose.core.signal import PixelGrid, SampledSignal
from superpose.core.truth import GroundTruth
from superpose.errors import InputError
from superpose.evaluation.lobes import LineSpec
from superpose.model.irf import IrfModel, asymmetric_irf, gaussian_irf
from superpose.synth.noise import NoiseModel

logger = get_logger(__name__)

CAMERA_RANGE = (0.0, 65535.0)

NA_DOUBLET = [(589.00, 1000.0), (589.59, 500.0)]
KR_TRIPLET = [(557.03, 300.0), (556.22, 80.0), (558.04, 13.0)]


class GridSpec(BaseModel):
    extents: list[int]
    pitch: list[float]
    origin: list[float] | None = None

    def build(self) -> PixelGrid:
        return PixelGrid.from_dict(self.model_dump())

    @classmethod
    def of(cls, grid: PixelGrid) -> GridSpec:
        return cls(**grid.to_dict())


class Scenario(BaseModel):
    """Everything needed to render one synthetic acquisition deterministically."""

    name: str
    grid: GridSpec
    support: list[list[float]]
    intensities: list[float]
    irf: dict
    background: float = 0.0
    peak: float | None = Field(default=None, description="scale the noiseless render to this maximum")
    noise: NoiseModel = Field(default_factory=NoiseModel)
    clip: tuple[float, float] | None = None
    seed: int = 0
    lines: list[LineSpec] | None = None
    reference: dict[str, float] = Field(default_factory=dict)

    def build_grid(self) -> PixelGrid:
        return self.grid.build()

    def build_irf(self) -> IrfModel:
        return IrfModel.from_dict(self.irf)

    def ground_truth(self) -> GroundTruth:
        return GroundTruth(support=np.asarray(self.support), intensities=np.asarray(self.intensities))

    def render(self, seed: int | None = None, noise: bool = True) -> SceneRender:
        grid = self.build_grid()
        irf = self.build_irf()
        truth = self.ground_truth()
        fields = irf(grid.centers()[:, None, :] - truth.support[None, :, :])
        clean = fields @ truth.intensities
        scale = 1.0
        if self.peak is not None:
            if clean.max() <= 0:
                raise InputError(f"scenario {self.name!r} renders no positive counts")
            scale = self.peak / clean.max()
        clean = clean * scale
        truth = GroundTruth(support=truth.support, intensities=truth.intensities * scale)

        expected = clean + self.background
        eta = np.zeros_like(expected)
        if noise:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed if seed is None else seed]))
            eta = self.noise.sample(expected, rng)
        values = expected + eta
        if self.clip is not None:
            values = np.clip(values, *self.clip)

        signal = SampledSignal(grid=grid, values=values, label=self.name)
        logger.info(
            "scene_rendered",
            name=self.name,
            sources=truth.m,
            peak=float(clean.max()),
            background=self.background,
            noise_power=float(eta @ eta),
        )
        return SceneRender(
            signal=signal,
            clean=SampledSignal(grid=grid, values=expected, label=f"{self.name} (clean)"),
            truth=truth,
            noise_power=float(eta @ eta),
            expected_noise_power=self.noise.expected_power(expected) if noise else 0.0,
        )


@dataclass(frozen=True, eq=False)
class SceneRender:
    signal: SampledSignal
    clean: SampledSignal
    truth: GroundTruth
    noise_power: float
    expected_noise_power: float

    @property
    def source_weight(self) -> float:
        """Per-source intensity when every support point carries the same weight."""
        return float(self.truth.intensities.mean())


def make_two_line_scene(
    per_line: int = 71,
    spacing: float = 9.6,
    separation: float = 144.0,
    pitch: float = 68.0,
    extents: tuple[int, int] = (32, 32),
    sigma_px: float = 1.435,
    peak: float = 40000.0,
    background: float = 20000.0,
    noise: NoiseModel | None = None,
    seed: int = 0,
) -> Scenario:
    """Two vertical lines of equally bright point sources, in nanometres."""
    grid = PixelGrid(extents=extents, pitch=pitch)
    cx, cy = grid.center
    along = cy + spacing * (np.arange(per_line) - (per_line - 1) / 2.0)
    xs = (cx - separation / 2.0, cx + separation / 2.0)
    support = [[x, y] for x in xs for y in along]
    irf = gaussian_irf(sigma_px * pitch, pitch, dimension=2)
    return Scenario(
        name="two-line",
        grid=GridSpec.of(grid),
        support=support,
        intensities=[1.0] * len(support),
        irf=irf.to_dict(),
        background=background,
        peak=peak,
        noise=noise or NoiseModel(kind="shot_floor", floor=23.0, shot=1.0),
        clip=CAMERA_RANGE,
        seed=seed,
        lines=[LineSpec(point=(x, cy), direction=(0.0, 1.0)) for x in xs],
        reference={
            "line_separation_px": separation / pitch,
            "reported_line_offset_px": 2.1214,
            "irf_sigma_nm": sigma_px * pitch,
        },
    )


def spectrometer_irf(pitch: float = 0.22, b1: float = 2.4, b2: float = 2.7) -> IrfModel:
    """Unit-sum asymmetric line shape with decay rates per nanometre."""
    return asymmetric_irf(1.0, b1, b2, pitch).normalized()


def make_spectral_scene(
    lines: list[tuple[float, float]],
    irf: IrfModel | None = None,
    grid: PixelGrid | None = None,
    noise: NoiseModel | None = None,
    background: float = 0.0,
    seed: int = 0,
    name: str = "spectrum",
) -> Scenario:
    """Delta lines (wavelength, intensity) convolved with a 1-D IRF."""
    irf = irf or spectrometer_irf()
    if grid is None:
        wavelengths = [w for w, _ in lines]
        center = (min(wavelengths) + max(wavelengths)) / 2.0
        grid = PixelGrid(extents=(64,), pitch=irf.pitch, origin=(center - 31.5 * irf.pitch[0],))
    lo, hi = grid.edges(0)[0], grid.edges(0)[-1]
    outside = [w for w, _ in lines if not lo <= w <= hi]
    if outside:
        raise InputError(f"lines {outside} fall outside the grid [{lo:.4f}, {hi:.4f}]")
    return Scenario(
        name=name,
        grid=GridSpec.of(grid),
        support=[[w] for w, _ in lines],
        intensities=[i for _, i in lines],
        irf=irf.to_dict(),
        background=background,
        noise=noise or NoiseModel(kind="shot_floor", floor=2.0, shot=1.0),
        seed=seed,
    )


def make_na_doublet(seed: int = 0) -> Scenario:
    return make_spectral_scene(NA_DOUBLET, seed=seed, name="na-doublet")


def make_kr_triplet(seed: int = 0) -> Scenario:
    return make_spectral_scene(KR_TRIPLET, seed=seed, name="kr-triplet")


PRESETS = {
    "two-line": make_two_line_scene,
    "na-doublet": make_na_doublet,
    "kr-triplet": make_kr_triplet,
}


def load_scenario(name_or_path: str, seed: int | None = None) -> Scenario:
    """A preset by name, or a Scenario JSON file."""
    if name_or_path in PRESETS:
        scenario = PRESETS[name_or_path]()
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise InputError(f"unknown scenario {name_or_path!r}; presets are {sorted(PRESETS)}")
        scenario = Scenario.model_validate_json(path.read_text())
    if seed is not None:
        scenario = scenario.model_copy(update={"seed": seed})
    return scenario
