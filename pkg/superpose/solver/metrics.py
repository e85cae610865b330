"""Prometheus metrics for fits and calibrations."""

from pathlib import Path

from prometheus_client import REGISTRY, Counter, Gauge, Histogram, Info, write_to_textfile

from superpose import __version__

app_info = Info("superpose", "superpose build info")
app_info.info({"version": __version__})

# Solver metrics
generations_total = Counter(
    "superpose_generations_total",
    "Total GA generations evaluated",
)
best_chi2 = Gauge(
    "superpose_best_chi2",
    "Best chi-squared of the current generation",
)
generation_seconds = Histogram(
    "superpose_generation_seconds",
    "Wall time per GA generation",
    buckets=[0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0],
)
fits_total = Counter(
    "superpose_fits_total",
    "Completed GA runs",
    ["stop_reason"],  # noise_floor, stalled, max_generations
)

# Calibration metrics
calibration_records = Counter(
    "superpose_calibration_records_total",
    "Calibration records seen by the IRF fit",
    ["status"],  # accepted, rejected
)


def write_metrics(path: Path) -> None:
    """Dump the default registry in the text exposition format."""
    path.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(path), REGISTRY)
