"""
CLI interface for DriveContext.

Subcommands run the pipeline stages:

    drivecontext synth        --n 100 --out-trajs t.csv --out-annotations a.csv
    drivecontext build-model  t.csv --out model.dcmm
    drivecontext segment      t.csv --model model.dcmm --out cuts.csv
    drivecontext describe     --cuts cuts.csv --trajs t.csv --events e.csv --out report.csv
    drivecontext evaluate     --trajs t.csv --annotations a.csv --model model.dcmm --out pr.csv

Exit codes: 0 success, 2 usage/config error, 3 data error.
"""

import functools
import logging
import sys
from dataclasses import asdict, replace
from functools import partial
from typing import Any, Callable, List, Optional, Tuple

import click

from . import __version__, csvio
from .config import RunConfig, load_config, with_overrides
from .context import correlation, group_by_context, report_json, summarize_routes, write_report_csv
from .errors import DegenerateTrajectoryError, DriveContextError
from .evaluation import evaluate, load_annotations, write_annotations, write_pr_csv
from .events import EventDatabase, load_events
from .markov import build_model, export_json, load_model, save_model
from .parallel import derive_seed, run_parallel
from .pmd import PmdSignal, write_signals
from .progress import ProgressIndicator
from .segmentation import Segmentation, load_cuts, segment_trajectory, write_cuts
from .segmenters.base import SegmentRequest
from .segmenters.registry import default_registry
from .synth import generate_synthetic, load_synth_spec
from .trajectory import Trajectory, load_trajectories, write_trajectories

logger = logging.getLogger(__name__)

DEFAULT_ALGORITHMS = "dsegment,equal_length,random,stable_criteria"


class _EchoHandler(logging.Handler):
    """Writes records through click so they follow the current stderr."""

    def emit(self, record: logging.LogRecord) -> None:
        click.echo(self.format(record), err=True)


def configure_logging(verbose: bool) -> None:
    """Plain `%(message)s` lines on stderr; --verbose shows debug output."""
    package_logger = logging.getLogger("drive_context")
    for handler in list(package_logger.handlers):
        if isinstance(handler, _EchoHandler):
            package_logger.removeHandler(handler)
    handler = _EchoHandler()
    handler.setFormatter(logging.Formatter("%(message)s"))
    package_logger.addHandler(handler)
    package_logger.setLevel(logging.DEBUG if verbose else logging.WARNING)


def common_options(func: Callable) -> Callable:
    """Options shared by every subcommand."""
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="TOML or JSON config file"),
        click.option("--seed", type=int, default=None, help="Run seed (all randomness derives from it)"),
        click.option("--jobs", type=int, default=None, help="Worker processes for per-trajectory stages"),
        click.option("--timezone", default=None, help="IANA timezone of the dataset's local time"),
        click.option("--verbose", "-v", is_flag=True, help="Show debug logging"),
        click.option("--quiet", "-q", is_flag=True, help="Suppress stage progress output"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def handle_errors(func: Callable) -> Callable:
    """Turn package errors into one stderr line and the matching exit code."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except DriveContextError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(e.exit_code)

    return wrapper


def resolve_config(
    config_path: Optional[str],
    seed: Optional[int],
    jobs: Optional[int],
    timezone: Optional[str],
    verbose: bool,
    **overrides: Any,
) -> RunConfig:
    configure_logging(verbose)
    cfg = load_config(config_path)
    return with_overrides(cfg, seed=seed, jobs=jobs, timezone=timezone, **overrides)


@click.group()
@click.version_option(__version__, prog_name="drivecontext")
def cli():
    """
    DriveContext - trajectory segmentation and driving-context analysis.

    Build a population Markov model, segment trajectories through their PMD
    signal, correlate cutting points with events, and evaluate against
    annotations.
    """


@cli.command("build-model")
@click.argument("train_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Model file to write")
@click.option("--json-out", type=click.Path(dir_okay=False), help="Also write a JSON export of the model")
@common_options
@handle_errors
def build_model_command(train_csv, out_path, json_out, config_path, seed, jobs, timezone, verbose, quiet):
    """Build the population Markov model from TRAIN_CSV."""
    cfg = resolve_config(config_path, seed, jobs, timezone, verbose)
    progress = ProgressIndicator(enabled=not quiet)

    with progress.stage("load", path=train_csv) as info:
        trajs = load_trajectories(train_csv, columns=cfg.columns)
        info["detail"] = f"{len(trajs)} trajectories"
    with progress.stage("build-model", levels=cfg.model.n_levels, jobs=cfg.jobs):
        model = build_model(trajs, cfg.model, jobs=cfg.jobs)
        model = replace(model, metadata=cfg.echo())
    with progress.stage("save", path=out_path):
        save_model(model, out_path)
        if json_out:
            csvio.write_json(json_out, export_json(model))
    progress.print_summary()

    for row in model.stats():
        click.echo(
            f"level={row['level']} states={row['states']} "
            f"transitions={row['transitions']} observations={row['observations']}"
        )


def _segment_one(
    traj: Trajectory,
    algorithm: str,
    cfg: RunConfig,
    model,
) -> Optional[Tuple[Segmentation, Optional[PmdSignal]]]:
    try:
        if algorithm == "dsegment":
            return segment_trajectory(traj, model, cfg.model, cfg.segment)
        _, execute = default_registry().get(algorithm)
        eta = cfg.evaluate.eta or cfg.evaluate.eta_easy
        request = SegmentRequest(
            eta=min(eta, len(traj)),
            seed=derive_seed(cfg.seed, f"{algorithm}:{traj.id}"),
            config=cfg,
            model=model,
        )
        return execute(traj, request), None
    except DegenerateTrajectoryError as e:
        logger.warning(f"skipping trajectory: {e}")
        return None


@cli.command("segment")
@click.argument("trajs_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), help="Model file")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Cutting-point CSV")
@click.option("--signals-out", type=click.Path(dir_okay=False), help="Also write PMD signals")
@click.option("--algorithm", default="dsegment", show_default=True, help="Segmentation algorithm")
@click.option("--min-len", type=int, default=None, help="Minimum segment length")
@click.option("--theta", type=float, default=None, help="Elbow threshold for choosing k")
@click.option("--unknown-state", type=click.Choice(["error", "sentinel"]), default=None,
              help="Policy for driving states unknown to the model")
@common_options
@handle_errors
def segment_command(trajs_csv, model_path, out_path, signals_out, algorithm, min_len, theta, unknown_state,
                    config_path, seed, jobs, timezone, verbose, quiet):
    """Segment trajectories in TRAJS_CSV and write their cutting points."""
    cfg = resolve_config(
        config_path, seed, jobs, timezone, verbose,
        **{"segment.min_len": min_len, "segment.theta": theta, "segment.unknown_state": unknown_state},
    )
    registry = default_registry()
    registry.resolve([algorithm])
    if registry.needs_model([algorithm]) and model_path is None:
        raise click.UsageError(f"--model is required for algorithm '{algorithm}'")
    progress = ProgressIndicator(enabled=not quiet)

    model = load_model(model_path) if model_path else None
    trajs = load_trajectories(trajs_csv, columns=cfg.columns)
    if not trajs:
        logger.warning(f"no trajectories in {trajs_csv}")

    with progress.stage("segment", algorithm=algorithm, trajectories=len(trajs), jobs=cfg.jobs) as info:
        results = run_parallel(
            partial(_segment_one, algorithm=algorithm, cfg=cfg, model=model),
            trajs,
            cfg.jobs,
        )
        done = [r for r in results if r is not None]
        info["detail"] = f"{sum(s.k for s, _ in done)} segments"

    echo = cfg.echo()
    write_cuts(out_path, [s for s, _ in done], echo)
    if signals_out:
        write_signals(signals_out, [sig for _, sig in done if sig is not None], echo)
    click.echo(f"trajectories={len(done)} cuts={sum(s.k for s, _ in done)}")


@cli.command("describe")
@click.option("--cuts", "cuts_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--trajs", "trajs_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--events", "events_path", type=click.Path(exists=True, dir_okay=False),
              help="Events CSV or JSON (no file means an empty database)")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Report CSV")
@click.option("--json-out", type=click.Path(dir_okay=False), help="Also write the JSON report")
@click.option("--mode", type=click.Choice(["physical", "temporal", "all"]), default="all", show_default=True)
@click.option("--th", type=float, default=None, help="Relevancy distance threshold in meters")
@click.option("--min-cuts", type=int, default=None, help="Smallest context reported")
@click.option("--include-trip-end/--exclude-trip-end", default=None, help="Count the final cut of each trip")
@click.option("--temporal-strategy", type=click.Choice(["evidence", "overlap"]), default=None)
@common_options
@handle_errors
def describe_command(cuts_csv, trajs_csv, events_path, out_path, json_out, mode, th, min_cuts,
                     include_trip_end, temporal_strategy, config_path, seed, jobs, timezone, verbose, quiet):
    """Correlate cutting points with events per driving context."""
    cfg = resolve_config(
        config_path, seed, jobs, timezone, verbose,
        **{
            "describe.th_m": th,
            "describe.min_cuts": min_cuts,
            "describe.include_trip_end": include_trip_end,
            "describe.temporal_strategy": temporal_strategy,
        },
    )
    tz = cfg.require_timezone()
    progress = ProgressIndicator(enabled=not quiet)

    trajs = load_trajectories(trajs_csv, columns=cfg.columns)
    cuts = load_cuts(cuts_csv)
    db = load_events(events_path) if events_path else EventDatabase()

    with progress.stage("describe", mode=mode, jobs=cfg.jobs) as info:
        groups = group_by_context(trajs, cuts, tz, cfg.describe.include_trip_end)
        reports = correlation(groups, db, mode, cfg, tz, jobs=cfg.jobs)
        info["detail"] = f"{len(reports)} of {len(groups)} contexts"

    echo = cfg.echo()
    write_report_csv(out_path, reports, echo)
    if json_out:
        routes = summarize_routes(trajs, cuts)
        csvio.write_json(
            json_out,
            report_json(reports, mode, routes, db, tz, echo, cfg.evidence.congestion_subtypes),
        )
    for report in reports:
        c = report.context
        click.echo(f"{c.route_id} {c.day_type.value} {c.period.value} {mode}={report.value(mode):.4f}")


@cli.command("evaluate")
@click.option("--trajs", "trajs_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--annotations", "annotations_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--algorithms", default=DEFAULT_ALGORITHMS, show_default=True, help="Comma-separated names")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), help="Model file (dsegment)")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="PR curve CSV")
@click.option("--eta", type=int, default=None, help="Segment count for the fixed-count baselines")
@click.option("--eta-from-annotations", is_flag=True,
              help="Give each trajectory one baseline segment more than its annotated borders")
@common_options
@handle_errors
def evaluate_command(trajs_csv, annotations_csv, algorithms, model_path, out_path, eta, eta_from_annotations,
                     config_path, seed, jobs, timezone, verbose, quiet):
    """Precision/recall of segmentation algorithms against annotations."""
    cfg = resolve_config(
        config_path, seed, jobs, timezone, verbose,
        **{"evaluate.eta": eta, "evaluate.eta_from_annotations": True if eta_from_annotations else None},
    )
    names: List[str] = [n.strip() for n in algorithms.split(",") if n.strip()]
    registry = default_registry()
    registry.resolve(names)
    if registry.needs_model(names) and model_path is None:
        raise click.UsageError("--model is required when evaluating dsegment")
    progress = ProgressIndicator(enabled=not quiet)

    model = load_model(model_path) if model_path else None
    trajs = load_trajectories(trajs_csv, columns=cfg.columns)
    ants = load_annotations(annotations_csv)

    with progress.stage("evaluate", algorithms=",".join(names), jobs=cfg.jobs):
        curves = evaluate(names, trajs, ants, cfg, model=model, jobs=cfg.jobs)

    write_pr_csv(out_path, curves, cfg.echo())
    last = cfg.evaluate.thresholds_m[-1]
    for curve in curves:
        p, r = curve.at(last)
        click.echo(f"{curve.algorithm} th={last:g} precision={p:.4f} recall={r:.4f}")


@cli.command("synth")
@click.option("--n", "n_trajs", type=int, default=100, show_default=True, help="Number of trajectories")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), help="Regime spec (TOML/JSON)")
@click.option("--out-trajs", required=True, type=click.Path(dir_okay=False))
@click.option("--out-annotations", required=True, type=click.Path(dir_okay=False))
@common_options
@handle_errors
def synth_command(n_trajs, spec_path, out_trajs, out_annotations, config_path, seed, jobs, timezone, verbose, quiet):
    """Generate planted-regime synthetic trajectories and annotations."""
    cfg = resolve_config(config_path, seed, jobs, timezone, verbose)
    spec = load_synth_spec(spec_path)
    progress = ProgressIndicator(enabled=not quiet)

    with progress.stage("synth", n=n_trajs, seed=cfg.seed):
        trajs, ants = generate_synthetic(n_trajs, spec, cfg.seed)

    echo = {**cfg.echo(), "synth": {"n_trajs": n_trajs, **asdict(spec)}}
    write_trajectories(out_trajs, trajs, echo)
    write_annotations(out_annotations, ants, echo)
    click.echo(f"trajectories={len(trajs)} annotations={sum(len(a) for a in ants)}")


def main():
    cli()


if __name__ == "__main__":
    main()
