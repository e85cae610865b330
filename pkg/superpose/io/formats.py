"""Readers and writers for signals, source lists, tables and manifests.

1-D signals are two-column CSV (coordinate, counts). 2-D images are binary
16-bit PGM (P5) stored little-endian, with a ``<file>.json`` sidecar for the
pixel pitch, origin and label. Every file is written through a temporary
file and ``os.replace`` so a run never leaves half-written outputs.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from PIL import Image
from pydantic import BaseModel

from superpose.config.logging import get_logger
from superpose.core.signal import PixelGrid, SampledSignal, SourceSet
from superpose.core.truth import GroundTruth
from superpose.errors import InputError
from superpose.evaluation.histogram import SourceHistogram

logger = get_logger(__name__)

AXES = ("x", "y")
PGM_MAX = 65535

_PGM_HEADER = re.compile(
    rb"^P5\s(?:\s*#.*[\r\n])*(\d+)\s(?:\s*#.*[\r\n])*(\d+)\s(?:\s*#.*[\r\n])*(\d+)\s"
)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_json(data: BaseModel | dict, path: str | Path) -> Path:
    path = Path(path)
    text = data.model_dump_json(indent=2) if isinstance(data, BaseModel) else json.dumps(data, indent=2)
    _atomic_write(path, (text + "\n").encode())
    return path


def read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from e


def write_frame(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    _atomic_write(path, frame.to_csv(index=False).encode())
    return path


def read_frame(path: str | Path, columns: list[str] | None = None) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputError(f"cannot read table {path}: {e}") from e
    missing = [c for c in columns or [] if c not in frame.columns]
    if missing:
        raise InputError(f"{path} lacks columns {missing}")
    return frame


# --- PGM ---


def write_pgm(signal: SampledSignal, path: str | Path) -> Path:
    """Write a 2-D signal rounded and clipped to 16-bit counts."""
    if signal.grid.dimension != 2:
        raise InputError("PGM holds 2-D images only")
    path = Path(path)
    height, width = signal.grid.shape
    counts = np.clip(np.rint(signal.values), 0, PGM_MAX).astype("<u2")
    clipped = int(np.count_nonzero((signal.values < 0) | (signal.values > PGM_MAX)))
    if clipped:
        logger.warning("pgm_values_clipped", path=str(path), pixels=clipped)
    header = f"P5\n{width} {height}\n{PGM_MAX}\n".encode()
    _atomic_write(path, header + counts.tobytes())
    sidecar = {**signal.grid.to_dict(), "label": signal.label}
    write_json(sidecar, path.with_name(path.name + ".json"))
    return path


def read_pgm(path: str | Path) -> SampledSignal:
    path = Path(path)
    try:
        buffer = path.read_bytes()
    except OSError as e:
        raise InputError(f"cannot read image {path}: {e}") from e
    match = _PGM_HEADER.match(buffer)
    if match is None:
        raise InputError(f"{path} is not a binary PGM (P5) file")
    width, height, maxval = (int(v) for v in match.groups())
    dtype = "u1" if maxval < 256 else "<u2"
    expected = width * height * np.dtype(dtype).itemsize
    if len(buffer) - match.end() < expected:
        raise InputError(f"{path} is truncated: expected {expected} bytes of pixel data")
    values = np.frombuffer(buffer, dtype=dtype, count=width * height, offset=match.end())
    values = values.reshape(height, width).astype(np.float64)

    sidecar_path = path.with_name(path.name + ".json")
    if sidecar_path.exists():
        sidecar = read_json(sidecar_path)
        grid = PixelGrid(
            extents=(width, height),
            pitch=tuple(sidecar["pitch"]),
            origin=tuple(sidecar["origin"]) if sidecar.get("origin") else None,
        )
        label = sidecar.get("label", path.stem)
    else:
        logger.warning("pgm_sidecar_missing", path=str(path), pitch=1.0)
        grid = PixelGrid(extents=(width, height), pitch=(1.0, 1.0))
        label = path.stem
    return SampledSignal(grid=grid, values=values, label=label)


# --- signals ---


def signal_frame(signal: SampledSignal) -> pd.DataFrame:
    centers = signal.grid.centers()
    frame = pd.DataFrame(centers, columns=list(AXES[: signal.grid.dimension]))
    frame["counts"] = signal.flat
    return frame


def _uniform_axis(values: np.ndarray, name: str, path) -> tuple[int, float, float]:
    axis = np.unique(values)
    if axis.size == 1:
        raise InputError(f"{path}: axis {name} has a single sample; its pitch is undefined")
    steps = np.diff(axis)
    if not np.allclose(steps, steps[0], rtol=1e-6):
        raise InputError(f"{path}: axis {name} is not uniformly sampled")
    return axis.size, float(steps.mean()), float(axis[0])


def read_signal_csv(path: str | Path) -> SampledSignal:
    """A 1-D (coordinate, counts) table or a 2-D long table (x, y, counts)."""
    frame = read_frame(path)
    if frame.shape[1] < 2:
        raise InputError(f"{path} needs coordinate and counts columns")
    columns = list(frame.columns)
    dimension = frame.shape[1] - 1
    if dimension == 1:
        frame = frame.sort_values(columns[0])
        n, pitch, origin = _uniform_axis(frame[columns[0]].to_numpy(), columns[0], path)
        grid = PixelGrid(extents=(n,), pitch=(pitch,), origin=(origin,))
        values = frame[columns[1]].to_numpy(dtype=np.float64)
    elif dimension == 2:
        x, y, counts = columns[:3]
        frame = frame.sort_values([y, x])
        nx, px, ox = _uniform_axis(frame[x].to_numpy(), x, path)
        ny, py, oy = _uniform_axis(frame[y].to_numpy(), y, path)
        if len(frame) != nx * ny:
            raise InputError(f"{path}: {len(frame)} rows do not fill a {nx}x{ny} grid")
        grid = PixelGrid(extents=(nx, ny), pitch=(px, py), origin=(ox, oy))
        values = frame[counts].to_numpy(dtype=np.float64).reshape(ny, nx)
    else:
        raise InputError(f"{path}: only 1-D and 2-D signals are supported")
    return SampledSignal(grid=grid, values=values, label=Path(path).stem)


def read_signal(path: str | Path) -> SampledSignal:
    path = Path(path)
    if not path.exists():
        raise InputError(f"signal file {path} does not exist")
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    return read_signal_csv(path)


def write_signal(signal: SampledSignal, path: str | Path) -> Path:
    """PGM for ``.pgm`` paths, otherwise a CSV table."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return write_pgm(signal, path)
    return write_frame(signal_frame(signal), path)


# --- sources ---


def write_positions(sources: SourceSet, path: str | Path) -> Path:
    frame = pd.DataFrame(sources.positions, columns=list(AXES[: sources.grid.dimension]))
    return write_frame(frame, path)


def read_positions(path: str | Path, grid: PixelGrid, alpha: float) -> SourceSet:
    columns = list(AXES[: grid.dimension])
    frame = read_frame(path, columns)
    return SourceSet(positions=frame[columns].to_numpy(dtype=np.float64), alpha=alpha, grid=grid)


def write_ground_truth(truth: GroundTruth, path: str | Path) -> Path:
    frame = pd.DataFrame(truth.support, columns=list(AXES[: truth.dimension]))
    frame["intensity"] = truth.intensities
    return write_frame(frame, path)


def read_ground_truth(path: str | Path) -> GroundTruth:
    frame = read_frame(path, ["x", "intensity"])
    columns = [c for c in AXES if c in frame.columns]
    return GroundTruth(
        support=frame[columns].to_numpy(dtype=np.float64),
        intensities=frame["intensity"].to_numpy(dtype=np.float64),
    )


def write_chi2_trace(history: list[float], path: str | Path) -> Path:
    return write_frame(pd.DataFrame({"generation": np.arange(len(history)), "chi2": history}), path)


def write_histogram_png(hist: SourceHistogram, path: str | Path) -> Path:
    """Monochrome raster of a 2-D histogram, brightest bin white, y up."""
    if hist.counts.ndim != 2:
        raise InputError("PNG rasters need a 2-D histogram")
    path = Path(path)
    peak = hist.counts.max()
    scaled = np.zeros(hist.counts.shape, dtype=np.uint8) if peak == 0 else (255 * hist.counts / peak)
    image = Image.fromarray(np.flipud(np.rint(scaled)).astype(np.uint8), mode="L")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".png")
    os.close(fd)
    try:
        image.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path
