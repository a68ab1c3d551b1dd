from pathlib import Path
from typing import Optional

import typer

from lsilab.graph.builder import build_graph
from lsilab.graph.state import PipelineState
from lsilab.utils.logs import configure_logging, detach_log_file

app = typer.Typer(help="Solve, simulate and verify local stochastic intensity models.")

ConfigOption = typer.Option(
    ..., "--config", "-c", exists=True, dir_okay=False, help="Experiment YAML file."
)
OutOption = typer.Option(None, "--out", help="Output directory override.")
SeedOption = typer.Option(None, "--seed", min=0, help="Master seed override.")
ThreadsOption = typer.Option(None, "--threads", min=1, help="Worker threads.")


def get_initial_state(
    command: str,
    config_path: Path,
    out: Optional[Path] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> PipelineState:
    """Creates a fresh pipeline state for one subcommand."""
    return {
        "command": command,
        "config_path": str(config_path),
        "output_override": str(out) if out is not None else None,
        "seed_override": seed,
        "threads_override": threads,
        "config": None,
        "config_hash": None,
        "output_dir": None,
        "problem": None,
        "solution": None,
        "ensemble": None,
        "reports": [],
        "artifacts": [],
        "log_handler": None,
        "error_message": None,
        "exit_code": 0,
    }


def run(
    command: str,
    config_path: Path,
    out: Optional[Path] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> int:
    """Runs one subcommand through the pipeline and returns its exit code."""
    configure_logging()
    graph = build_graph()
    state = get_initial_state(command, config_path, out, seed, threads)
    final_state = graph.invoke(state)
    handler = final_state.get("log_handler")
    if handler is not None:
        detach_log_file(handler)
    return int(final_state.get("exit_code", 0))


@app.command()
def solve(
    config: Path = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    threads: Optional[int] = ThreadsOption,
) -> None:
    """Solves the leverage fixed point and writes gamma.csv and residuals.csv."""
    raise typer.Exit(code=run("solve", config, out, seed, threads))


@app.command()
def simulate(
    config: Path = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    threads: Optional[int] = ThreadsOption,
) -> None:
    """Simulates LSI paths from a solved gamma.csv and writes paths.csv."""
    raise typer.Exit(code=run("simulate", config, out, seed, threads))


@app.command()
def check(
    config: Path = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    threads: Optional[int] = ThreadsOption,
) -> None:
    """Runs the statistical checks against a solved gamma.csv."""
    raise typer.Exit(code=run("check", config, out, seed, threads))


@app.command("demo-nonuniqueness")
def demo_nonuniqueness(
    config: Path = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    threads: Optional[int] = ThreadsOption,
) -> None:
    """Shows two processes with the same marginals but different laws."""
    raise typer.Exit(code=run("demo-nonuniqueness", config, out, seed, threads))


@app.command("all")
def run_all(
    config: Path = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    threads: Optional[int] = ThreadsOption,
) -> None:
    """Solve, simulate, check and demo in one run."""
    raise typer.Exit(code=run("all", config, out, seed, threads))


if __name__ == "__main__":  # pragma: no cover
    app()
