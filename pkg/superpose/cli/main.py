"""Batch command line for synthesis, calibration, fitting, evaluation and N sweeps.

Usage:
    python -m superpose synth --scenario two-line --out runs/scene
    python -m superpose calibrate records/ --family asymmetric_1d --out runs/cal
    python -m superpose fit runs/scene/signal.pgm --calibration runs/scene/calibration.json --n auto --mode constant-bg
    python -m superpose evaluate runs/fit/positions.csv --run runs/fit/manifest.json --truth runs/scene/truth.csv
    python -m superpose sweep runs/scene/signal.pgm --calibration runs/scene/calibration.json --counts 142,461,2555

Exit codes: 0 success, 2 input error, 3 generation ceiling reached without
meeting the configured noise floor (outputs are still written).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from superpose import __version__
from superpose.calibration.fitting import fit_irf_family
from superpose.calibration.records import cocenter_normalize, fit_dispersion, normalize_spectrum
from superpose.calibration.residual import Autocorrelation, ResidualMap, autocorrelate, compute_residual_and_autocorr
from superpose.calibration.spots import detect_spots
from superpose.config.logging import bind_run, get_logger, setup_logging
from superpose.core.signal import PixelGrid, SampledSignal
from superpose.errors import InputError, SuperposeError
from superpose.evaluation.report import evaluate_reconstruction
from superpose.evaluation.sweep import run_n_sweep, sweep_frame
from superpose.io import formats
from superpose.io.schemas import CalibrationManifest, RunConfig, RunManifest, load_run_config
from superpose.model.forward import BackgroundMode
from superpose.model.irf import IrfFamily, IrfModel
from superpose.pipeline import FitPipeline
from superpose.solver import metrics
from superpose.synth.scenes import PRESETS, Scenario, load_scenario

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CEILING = 3

SIGNAL_SUFFIXES = (".csv", ".pgm")


def _print_progress(generation: int, best: float) -> None:
    print(f"{generation}\t{best:.10g}", flush=True)


def _config(args) -> RunConfig:
    overrides = {}
    if args.seed is not None:
        overrides["ga"] = {"seed": args.seed}
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    return load_run_config(args.config, overrides)


def _signal_path(signal: SampledSignal, out: Path, stem: str) -> Path:
    return out / f"{stem}{'.pgm' if signal.grid.dimension == 2 else '.csv'}"


def _load_calibration(path: str | Path) -> tuple[IrfModel, Autocorrelation | None]:
    """IRF from a calibration manifest, with G rebuilt from its g table when present."""
    path = Path(path)
    manifest = CalibrationManifest.model_validate(formats.read_json(path))
    irf = IrfModel.from_dict(manifest.irf)
    g_name = manifest.outputs.get("g")
    if not g_name:
        return irf, None
    g = formats.read_signal_csv(path.parent / g_name)
    return irf, autocorrelate(ResidualMap(grid=g.grid, values=g.values))


def _collect_inputs(paths: list[str]) -> list[Path]:
    files = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(p for p in path.iterdir() if p.suffix.lower() in SIGNAL_SUFFIXES))
        elif path.exists():
            files.append(path)
        else:
            raise InputError(f"input {path} does not exist")
    if not files:
        raise InputError(f"no calibration records found in {paths}")
    return files


# --- subcommands ---


def cmd_synth(args) -> int:
    scenario = load_scenario(args.scenario, seed=args.seed)
    rendered = scenario.render(noise=not args.no_noise)
    out = Path(args.out)

    signal_path = formats.write_signal(rendered.signal, _signal_path(rendered.signal, out, "signal"))
    truth_path = formats.write_ground_truth(rendered.truth, out / "truth.csv")
    scenario_path = formats.write_json(scenario, out / "scenario.json")
    irf = scenario.build_irf()
    calibration_path = formats.write_json(
        CalibrationManifest(
            family=irf.family,
            irf=irf.to_dict(),
            d0=irf.width,
            cost=0.0,
            starts=0,
            converged=0,
            residual_norm2=0.0,
            autocorrelation_zero=0.0,
        ),
        out / "calibration.json",
    )
    print(f"  Scenario: {scenario.name} ({rendered.truth.m} support points, seed {scenario.seed})")
    print(f"  Signal: {signal_path}")
    print(f"  Noise power: {rendered.noise_power:.6g} (expected {rendered.expected_noise_power:.6g})")
    for key, value in scenario.reference.items():
        print(f"  {key}: {value:.6g}")
    logger.info(
        "synth_finished",
        scenario=scenario.name,
        signal=str(signal_path),
        truth=str(truth_path),
        scenario_file=str(scenario_path),
        calibration=str(calibration_path),
        noise_power=rendered.noise_power,
    )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    config = _config(args)
    cal = config.calibration
    family = IrfFamily(args.family or cal.family)
    files = _collect_inputs(args.inputs)
    signals = [formats.read_signal(p) for p in files]

    if args.lamp:
        lamp = formats.read_signal(args.lamp)
        dark = formats.read_signal(args.dark) if args.dark else lamp.with_values(lamp.values * 0.0, "dark")
        signals = [normalize_spectrum(s, lamp, dark) for s in signals]

    records: list[SampledSignal] = []
    for signal in signals:
        if signal.grid.dimension == 2 and cal.expected_width is not None:
            spots = detect_spots(signal, cal.expected_width, cal.spot_threshold_mads, cal.patch_radius_factor)
            logger.info("spots_detected", image=signal.label, spots=len(spots))
            records.extend(spots)
        else:
            records.append(signal)
    if not records:
        raise InputError("no point-source records were found in the calibration inputs")

    fit = fit_irf_family(
        cocenter_normalize(records, (cal.width_min, cal.width_max)),
        family,
        records[0].grid.pitch,
        normalize=cal.normalize,
    )
    centered = fit.records
    residual, G = compute_residual_and_autocorr(centered, fit.irf)

    out = Path(args.out)
    outputs = {
        "g": formats.write_frame(residual.to_frame(), out / "g.csv").name,
        "G": formats.write_frame(G.to_frame(), out / "G.csv").name,
    }
    dispersion = None
    if args.wavelengths:
        accepted = [r for r in centered if r.accepted]
        if len(accepted) != len(args.wavelengths):
            raise InputError(f"{len(args.wavelengths)} wavelengths given for {len(accepted)} accepted records")
        dmap = fit_dispersion([r.center[0] for r in accepted], args.wavelengths)
        dispersion = {"slope": dmap.slope, "intercept": dmap.intercept, "rms": dmap.rms}

    manifest = CalibrationManifest(
        family=family,
        irf=fit.irf.to_dict(),
        d0=fit.irf.width,
        cost=fit.cost,
        starts=fit.starts,
        converged=fit.converged,
        residual_norm2=residual.norm2(),
        autocorrelation_zero=G.at_zero,
        records=[r.diagnostics() for r in centered],
        dispersion=dispersion,
        inputs={str(p): formats.sha256_file(p) for p in files},
        outputs=outputs,
    )
    formats.write_json(manifest, out / "calibration.json")
    metrics.write_metrics(out / "metrics.prom")
    print(f"  IRF: {family.value} {fit.irf.parameter_dict}")
    print(f"  d0 = {fit.irf.width:.6g}, ||g||^2 = {residual.norm2():.6g}")
    return EXIT_OK


def cmd_fit(args) -> int:
    config = _config(args)
    signal = formats.read_signal(args.signal)
    irf, G = _load_calibration(args.calibration)
    n_sources = None if args.n == "auto" else _parse_count(args.n)

    pipeline = FitPipeline(
        irf,
        config,
        autocorrelation=G,
        progress=_print_progress if args.progress else None,
    )
    outcome = pipeline.fit(signal, n_sources)
    record = outcome.record

    out = Path(args.out)
    outputs = {
        "positions": formats.write_positions(record.sources, out / "positions.csv").name,
        "chi2": formats.write_chi2_trace(record.best_chi2, out / "chi2.csv").name,
    }
    if outcome.bounds is not None:
        outputs["bounds"] = formats.write_json(outcome.bounds, out / "bounds.json").name
        outputs["bound_curve"] = formats.write_frame(
            _curve_frame(outcome.bounds.curve), out / "bound_curve.csv"
        ).name
    for hist in outcome.histograms:
        name = f"histogram_{hist.d_bin:.6g}.csv"
        outputs[f"histogram_{hist.d_bin:.6g}"] = formats.write_frame(hist.to_frame(), out / name).name
    if config.render.png and signal.grid.dimension == 2 and outcome.histograms:
        outputs["histogram_png"] = formats.write_histogram_png(outcome.histograms[-1], out / "histogram.png").name
    if outcome.render is not None:
        outputs["render"] = formats.write_frame(formats.signal_frame(outcome.render), out / "render.csv").name

    inputs = {str(args.signal): formats.sha256_file(args.signal), str(args.calibration): formats.sha256_file(args.calibration)}
    manifest = RunManifest(
        command="fit",
        config=config,
        seed=config.ga.seed,
        n_request=str(args.n),
        grid=signal.grid.to_dict(),
        d0=irf.width,
        inputs=inputs,
        outputs=outputs,
        bounds=outcome.bounds,
        ga=record.summary(),
        preliminary=outcome.preliminary.summary() if outcome.preliminary else None,
        greedy={"n_sources": outcome.greedy.n_sources, "alpha0": outcome.greedy.alpha0, "total_intensity": outcome.total_intensity},
        flagged=outcome.flagged,
        notes=["generation ceiling reached before the noise floor"] if outcome.flagged else [],
    )
    formats.write_json(manifest, out / "manifest.json")
    metrics.write_metrics(out / "metrics.prom")
    print(f"  N = {record.sources.n_sources}, alpha = {record.sources.alpha:.6g}, chi2 = {record.final_chi2:.6g}")
    if outcome.bounds is not None:
        print(f"  N_op = {outcome.bounds.n_op:.4g}, sigma_op = {outcome.bounds.sigma_op:.4g}, M_s = {outcome.bounds.superresolution:.3g}")
    print(f"  Stop: {record.stop_reason.value} after {record.generations} generations")
    return EXIT_CEILING if outcome.flagged else EXIT_OK


def cmd_evaluate(args) -> int:
    run = RunManifest.model_validate(formats.read_json(args.run))
    if run.grid is None or run.ga is None:
        raise InputError(f"{args.run} is not a fit manifest")
    grid = PixelGrid.from_dict(run.grid)
    fitted = formats.read_positions(args.positions, grid, run.ga["alpha"])
    truth = formats.read_ground_truth(args.truth) if args.truth else None
    lines = None
    if args.scenario:
        lines = Scenario.model_validate(formats.read_json(args.scenario)).lines
    report = evaluate_reconstruction(
        fitted,
        truth,
        run.d0 if run.d0 is not None else grid.pixel_size,
        sigma_op=run.bounds.sigma_op if run.bounds else None,
        superpixel=run.bounds.superpixel if run.bounds else None,
        lines=lines,
        levels=run.config.render.histogram_levels,
    )
    out = Path(args.out)
    formats.write_json(report, out / "evaluation.json")
    if report.sigma is not None:
        print(f"  sigma = {report.sigma:.6g}, M_s = {report.superresolution}")
    if report.nn_rms is not None:
        print(f"  nearest-neighbour RMS (diagnostic) = {report.nn_rms:.6g}")
    for lobe in report.lobes or []:
        print(f"  line {lobe.line}: offset {lobe.mean_offset_px:.4f} px, std {lobe.std_px:.4f} px ({lobe.count} sources)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _config(args)
    signal = formats.read_signal(args.signal)
    irf, _ = _load_calibration(args.calibration)
    truth = formats.read_ground_truth(args.truth) if args.truth else None
    lines = Scenario.model_validate(formats.read_json(args.scenario)).lines if args.scenario else None
    total = args.total_intensity
    if total is None:
        total = FitPipeline(irf, config).greedy(signal).total_intensity

    rows = run_n_sweep(
        signal,
        irf,
        args.counts,
        config.ga,
        mode=config.mode,
        total_intensity=total,
        truth=truth,
        lines=lines,
        progress=(lambda n, g, best: print(f"{n}\t{g}\t{best:.10g}", flush=True)) if args.progress else None,
    )
    out = Path(args.out)
    formats.write_frame(sweep_frame(rows), out / "sweep.csv")
    metrics.write_metrics(out / "metrics.prom")
    for row in rows:
        print(f"  N={row.n_sources}: chi2={row.chi2:.6g} lobe_std_px={row.lobe_std_px} sigma={row.sigma}")
    return EXIT_OK


# --- parser ---


def _parse_count(value: str) -> int:
    try:
        count = int(value)
    except ValueError as e:
        raise InputError(f"--n takes 'auto' or a positive integer, got {value!r}") from e
    if count < 1:
        raise InputError(f"--n must be positive, got {count}")
    return count


def _parse_counts(value: str) -> list[int]:
    return [_parse_count(v) for v in value.split(",") if v.strip()]


def _parse_floats(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def _curve_frame(curve) -> pd.DataFrame:
    return pd.DataFrame(curve, columns=["n_sources", "sigma_bound"])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML overlay on the packaged defaults")
    common.add_argument("--seed", type=int, help="GA / scene seed")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--progress", action="store_true", help="print generation<TAB>best_chi2 to stdout")
    common.add_argument("--log-level", help="override SUPERPOSE_LOG_LEVEL")

    parser = argparse.ArgumentParser(prog="superpose", description="Fit signals as superpositions of equal point sources")
    parser.add_argument("--version", action="version", version=f"superpose {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="render a synthetic scene")
    synth.add_argument("--scenario", default="two-line", help=f"preset ({', '.join(PRESETS)}) or Scenario JSON")
    synth.add_argument("--no-noise", action="store_true")
    synth.set_defaults(func=cmd_synth)

    calibrate = sub.add_parser("calibrate", parents=[common], help="fit the IRF from point-source records")
    calibrate.add_argument("inputs", nargs="+", help="record files or directories")
    calibrate.add_argument("--family", choices=[f.value for f in IrfFamily if f is not IrfFamily.TABULATED])
    calibrate.add_argument("--lamp", help="lamp reference spectrum for normalization")
    calibrate.add_argument("--dark", help="dark background spectrum for normalization")
    calibrate.add_argument("--wavelengths", type=_parse_floats, help="known line wavelengths, one per record")
    calibrate.set_defaults(func=cmd_calibrate)

    fit = sub.add_parser("fit", parents=[common], help="fit N sources to a signal")
    fit.add_argument("signal")
    fit.add_argument("--calibration", required=True, help="calibration manifest JSON")
    fit.add_argument("--n", default="auto", help="'auto' or a source count")
    fit.add_argument("--mode", choices=[m.value for m in BackgroundMode])
    fit.set_defaults(func=cmd_fit)

    evaluate = sub.add_parser("evaluate", parents=[common], help="score a solution against a ground truth")
    evaluate.add_argument("positions")
    evaluate.add_argument("--run", required=True, help="fit manifest JSON")
    evaluate.add_argument("--truth", help="ground truth CSV")
    evaluate.add_argument("--scenario", help="Scenario JSON with line definitions")
    evaluate.set_defaults(func=cmd_evaluate)

    sweep = sub.add_parser("sweep", parents=[common], help="fit one signal at several N")
    sweep.add_argument("signal")
    sweep.add_argument("--calibration", required=True)
    sweep.add_argument("--counts", type=_parse_counts, required=True, help="comma-separated source counts")
    sweep.add_argument("--total-intensity", type=float, help="Z; estimated by the greedy pass when omitted")
    sweep.add_argument("--mode", choices=[m.value for m in BackgroundMode])
    sweep.add_argument("--truth")
    sweep.add_argument("--scenario")
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    bind_run(args.command, seed=args.seed, out=args.out)
    try:
        return args.func(args)
    except (SuperposeError, ValidationError) as e:
        logger.error(f"{args.command}_failed", error=str(e), error_type=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
