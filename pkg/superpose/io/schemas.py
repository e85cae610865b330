"""Pydantic models for run configuration and the JSON manifests."""

from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, Field

from superpose import __version__
from superpose.errors import InputError
from superpose.evaluation.report import EvalReport
from superpose.model.forward import BackgroundMode
from superpose.model.irf import IrfFamily
from superpose.selection.bounds import BoundReport
from superpose.solver.ga import GaConfig

DEFAULTS_PATH = Path(__file__).parent.parent / "config" / "defaults.yaml"


class BoundConfig(BaseModel):
    epsilon: float = Field(default=1.0, gt=0.0)
    small_m_threshold: int = Field(default=10, ge=1, description="m below this uses q = 4")
    noise_power: float | None = Field(default=None, ge=0.0, description="<||eta||^2>; None estimates it")
    support_levels: int = Field(default=3, ge=0)
    support_tolerance: float = Field(default=0.05, gt=0.0)


class SelectionConfig(BaseModel):
    greedy_steps_per_peak: float = Field(default=10.0, gt=0.0, description="alpha0 = max S / (k max I~)")
    max_greedy_sources: int | None = Field(default=None, ge=1)
    scan_global: bool = False
    preliminary_generations: int = Field(default=2000, ge=1)


class CalibrationConfig(BaseModel):
    family: IrfFamily = IrfFamily.GAUSSIAN_HALO
    normalize: bool = True
    width_min: float | None = Field(default=None, gt=0.0)
    width_max: float | None = Field(default=None, gt=0.0)
    expected_width: float | None = Field(default=None, gt=0.0, description="spot detection scale, physical units")
    spot_threshold_mads: float = Field(default=5.0, gt=0.0)
    patch_radius_factor: float = Field(default=3.0, gt=0.0)


class RenderConfig(BaseModel):
    kernel: Literal["none", "delta", "sphere"] = "none"
    sphere_diameter: float | None = Field(default=None, gt=0.0)
    histogram_levels: int = Field(default=3, ge=0)
    pad: bool = True
    png: bool = False


class RunConfig(BaseModel):
    mode: BackgroundMode = BackgroundMode.NONE
    ga: GaConfig = Field(default_factory=GaConfig)
    bounds: BoundConfig = Field(default_factory=BoundConfig)
    selection: SelectionConfig = Field(default_factory=SelectionConfig)
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    render: RenderConfig = Field(default_factory=RenderConfig)


def deep_merge(base: dict, overlay: dict) -> dict:
    merged = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _read_yaml(path: Path) -> dict:
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except OSError as e:
        raise InputError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise InputError(f"config {path} is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise InputError(f"config {path} must be a mapping")
    return data


def load_run_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Packaged defaults, overlaid by the user YAML, overlaid by ``overrides``."""
    data = _read_yaml(DEFAULTS_PATH)
    if path is not None:
        data = deep_merge(data, _read_yaml(Path(path)))
    if overrides:
        data = deep_merge(data, overrides)
    return RunConfig.model_validate(data)


class RunManifest(BaseModel):
    tool_version: str = __version__
    command: str
    config: RunConfig
    seed: int
    n_request: str | None = None
    grid: dict | None = None
    d0: float | None = None
    inputs: dict[str, str] = Field(default_factory=dict, description="path -> sha256")
    outputs: dict[str, str] = Field(default_factory=dict, description="role -> file name")
    bounds: BoundReport | None = None
    ga: dict | None = None
    preliminary: dict | None = None
    greedy: dict | None = None
    evaluation: EvalReport | None = None
    flagged: bool = False
    notes: list[str] = Field(default_factory=list)


class CalibrationManifest(BaseModel):
    tool_version: str = __version__
    family: IrfFamily
    irf: dict
    d0: float
    cost: float
    starts: int
    converged: int
    residual_norm2: float
    autocorrelation_zero: float
    records: list[dict] = Field(default_factory=list)
    dispersion: dict | None = None
    inputs: dict[str, str] = Field(default_factory=dict)
    outputs: dict[str, str] = Field(default_factory=dict)
