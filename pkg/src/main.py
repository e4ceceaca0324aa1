import logging
import sys
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import List, Optional

import typer

from .config import TrackerConfig, load_config
from .exceptions import ConfigError, TrackerError
from .metrics import DEFAULT_IOU_GATE, evaluate
from .parser import (
    read_detections,
    read_ground_truth,
    read_scenario_spec,
    read_tracks,
    write_detections,
    write_ground_truth,
    write_tracks,
)
from .pipeline import hyperparameter_sweep, process_video, run_bench, suite_videos
from .report_writer import ReportWriter
from .simulator import generate, scenario_by_name

logger = logging.getLogger(__name__)

# exceptions of the click build typer runs on (typer may vendor its own copy)
_click_exceptions = sys.modules[typer.Exit.__module__]

USAGE_ERROR = 1
DATA_ERROR = 2

app = typer.Typer(add_completion=False, help="Cross-clip object association: track, simulate, evaluate.")


class Suite(str, Enum):
    standard = "standard"


class BenchMode(str, Enum):
    lamb = "lamb"
    naive = "naive"
    both = "both"


@contextmanager
def _exit_codes():
    """Map tracker errors onto the CLI exit codes."""
    try:
        yield
    except (ConfigError, ValueError) as e:
        logger.error(f"Configuration error: {e}")
        raise typer.Exit(USAGE_ERROR)
    except TrackerError as e:
        logger.error(f"{e.code}: {e}")
        raise typer.Exit(DATA_ERROR)
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        raise typer.Exit(DATA_ERROR)


def _config(path: Optional[Path]) -> TrackerConfig:
    return load_config(path) if path is not None else TrackerConfig()


@app.callback()
def cli(verbose: bool = typer.Option(False, "--verbose", "-v", help="Log per-step decisions.")):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stderr)],
    )


@app.command()
def track(
    detections: Path = typer.Option(..., "--detections", help="Line-delimited detection records."),
    out: Path = typer.Option(..., "--out", help="Where to write the tracks."),
    config: Optional[Path] = typer.Option(None, "--config", help="KEY=value tracker config."),
):
    """Assign global ids to the tubes of a detection stream."""
    with _exit_codes():
        tracker_config = _config(config)
        clips = read_detections(detections, tracker_config.clip_length, tracker_config.overlap)
        output = process_video(clips, tracker_config)
        write_tracks(output, out)


@app.command()
def simulate(
    scenario: str = typer.Option(..., "--scenario", help="Standard scenario name or a JSON spec file."),
    out: Path = typer.Option(..., "--out", help="Where to write the detections."),
    gt_out: Optional[Path] = typer.Option(None, "--gt-out", help="Ground truth path (default: <out stem>.gt.jsonl)."),
    clip_length: int = typer.Option(2, "--clip-length"),
    overlap: int = typer.Option(1, "--overlap"),
):
    """Render a synthetic scenario into detections and ground truth."""
    with _exit_codes():
        spec_path = Path(scenario)
        spec = read_scenario_spec(spec_path) if spec_path.suffix == ".json" else scenario_by_name(scenario)
        gt, clips = generate(spec, clip_length, overlap)
        write_detections(clips, out)
        write_ground_truth(gt, gt_out or out.with_name(f"{out.stem}.gt.jsonl"))


@app.command(name="eval")
def evaluate_tracks(
    tracks: Path = typer.Option(..., "--tracks"),
    gt: Path = typer.Option(..., "--gt"),
    report: Path = typer.Option(..., "--report", help="JSON report path."),
    iou_gate: float = typer.Option(DEFAULT_IOU_GATE, "--iou-gate", min=0.0, max=1.0),
):
    """Score tracks against ground truth (id switches, identity F1)."""
    with _exit_codes():
        result = evaluate(read_tracks(tracks), read_ground_truth(gt), iou_gate)
        ReportWriter(report).write_eval(result)
        typer.echo(f"id_switches={result.id_switches} aq_proxy={result.aq_proxy:.4f}")


@app.command()
def sweep(
    report: Path = typer.Option(..., "--report", help="CSV output path."),
    config: Optional[Path] = typer.Option(None, "--config"),
    tau: Optional[List[int]] = typer.Option(None, "--tau", help="Repeat for each tau in the grid."),
    alpha: Optional[List[float]] = typer.Option(None, "--alpha", help="Repeat for each alpha in the grid."),
    suite: Suite = typer.Option(Suite.standard, "--suite"),
):
    """Grid over tau x alpha on the scenario suite."""
    with _exit_codes():
        base = _config(config)
        result = hyperparameter_sweep(suite_videos(base), base, tau or [base.tau], alpha or [base.alpha])
        ReportWriter(report).write_table(result.table)
        typer.echo(f"aq_proxy mean={result.mean:.4f} std={result.std:.4f}")


@app.command()
def bench(
    report: Path = typer.Option(..., "--report", help="JSON output path."),
    suite: Suite = typer.Option(Suite.standard, "--suite"),
    mode: BenchMode = typer.Option(BenchMode.both, "--mode"),
    tau: Optional[int] = typer.Option(None, "--tau", help="Override tau for every buffer mode."),
    config: Optional[Path] = typer.Option(None, "--config"),
):
    """Run the scenario suite under the location-aware and/or naive buffer."""
    with _exit_codes():
        base = _config(config)
        modes = ["lamb", "naive"] if mode is BenchMode.both else [mode.value]
        result = run_bench(None, modes, base, tau)
        ReportWriter(report).write_bench(result.table, result.reductions, base)
        for name, ratio in result.reductions.items():
            typer.echo(f"{name}: matching space reduced {ratio:.2f}x")


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    try:
        rv = app(args=argv, prog_name="lambtrack", standalone_mode=False)
    except _click_exceptions.UsageError as e:
        e.show(file=sys.stderr)
        return USAGE_ERROR
    except _click_exceptions.Abort:
        return USAGE_ERROR
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())
