import logging
from pathlib import Path
from typing import List

import pandas as pd
import yaml
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from .. import verify
from ..config import (
    RuntimeSettings,
    config_hash,
    format_validation_error,
)
from ..config import load_experiment as read_experiment
from ..cox import paths_to_frame, simulate_paths
from ..exceptions import (
    InsufficientMassError,
    InsufficientSamplesError,
    MassLeakError,
    NonConvergenceError,
    ProvenanceError,
    WordBudgetError,
)
from ..experiment import build_problem, solve
from ..fixed_point import FpSolution
from ..li_model import li_forward_marginals
from ..services.storage import StorageService
from ..utils.files import (
    frame_to_csv,
    gamma_to_frame,
    read_gamma_csv,
    read_provenance,
    records_to_jsonl,
)
from ..utils.logs import attach_log_file
from .state import PipelineState

# Module-level services, patched in tests.
storage_service = StorageService()
console = Console()
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED_REPORT = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_PROVENANCE = 4
EXIT_DOMAIN = 5

DomainError = (
    InsufficientMassError,
    InsufficientSamplesError,
    MassLeakError,
    WordBudgetError,
)


def _fail(state: PipelineState, message: str, code: int) -> PipelineState:
    state["error_message"] = message
    state["exit_code"] = code
    return state


def _artifact_path(state: PipelineState, name: str) -> str:
    return Path(state["output_dir"] or ".", name).as_posix()


def _save(state: PipelineState, name: str, content: str) -> None:
    cfg = state["config"]
    file_path = _artifact_path(state, name)
    storage_service.save(
        content=content,
        file_path=file_path,
        target=cfg.output.target,
        s3_bucket=cfg.output.s3_bucket,
    )
    state["artifacts"].append(file_path)


def _save_frame(state: PipelineState, name: str, frame: pd.DataFrame) -> None:
    cfg = state["config"]
    if "csv" not in cfg.output.formats:
        return
    _save(state, name, frame_to_csv(frame, state["config_hash"] or "", cfg.seed))


def _persist_trace(state: PipelineState, error: NonConvergenceError) -> None:
    """Write whatever residual history the failed solve left behind."""
    if isinstance(error.solution, FpSolution):
        frame = error.solution.trace_frame()
    else:
        frame = pd.DataFrame(
            {
                "iteration": range(1, len(error.residual_trace) + 1),
                "residual": error.residual_trace,
            }
        )
    try:
        _save_frame(state, "residuals.csv", frame)
    except Exception as e:
        logger.error("Could not persist the residual trace: %s", e)


def load_experiment(state: PipelineState) -> PipelineState:
    """
    Validates the config, applies the command-line overrides and prepares the
    fixed-point problem.
    """
    console.print("Loading experiment...")
    config_path = state["config_path"]
    try:
        cfg = read_experiment(config_path)
    except ValidationError as e:
        return _fail(
            state,
            f"Invalid config {config_path}:\n{format_validation_error(e)}",
            EXIT_CONFIG,
        )
    except (OSError, yaml.YAMLError, ValueError) as e:
        return _fail(state, f"Could not read config {config_path}: {e}", EXIT_CONFIG)

    seed = state.get("seed_override")
    if seed is not None:
        if not 0 <= seed < 2**64:
            return _fail(state, f"seed: {seed} is not a 64-bit seed", EXIT_CONFIG)
        cfg = cfg.model_copy(update={"seed": seed})
    threads = state.get("threads_override")
    if threads is not None:
        if threads < 1:
            return _fail(state, "runtime.threads: must be at least 1", EXIT_CONFIG)
        runtime = cfg.runtime.model_copy(update={"threads": threads})
        cfg = cfg.model_copy(update={"runtime": runtime})

    output_dir = (
        state.get("output_override")
        or RuntimeSettings().output_dir
        or cfg.output.directory
    )
    state["config"] = cfg
    state["config_hash"] = config_hash(cfg)
    state["output_dir"] = str(output_dir)
    state["log_handler"] = attach_log_file(Path(str(output_dir)) / "run.log")
    logger.info(
        "Experiment %s: config_hash=%s seed=%d",
        config_path,
        state["config_hash"],
        cfg.seed,
    )

    if state["command"] != "demo-nonuniqueness":
        try:
            state["problem"] = build_problem(cfg)
        except WordBudgetError as e:
            return _fail(state, str(e), EXIT_DOMAIN)
        except ValueError as e:
            return _fail(state, f"Invalid model: {e}", EXIT_CONFIG)
    return state


def solve_gamma(state: PipelineState) -> PipelineState:
    """Solves the fixed point and persists γ with its convergence record."""
    console.print("Solving the leverage fixed point...")
    cfg = state["config"]
    try:
        solution = solve(state["problem"], cfg.solver)
    except NonConvergenceError as e:
        _persist_trace(state, e)
        return _fail(state, f"Solver did not converge: {e}", EXIT_NONCONVERGENCE)
    except DomainError as e:
        return _fail(state, str(e), EXIT_DOMAIN)

    try:
        _save_frame(state, "gamma.csv", gamma_to_frame(solution.gamma))
        _save_frame(state, "residuals.csv", solution.trace_frame())
        if solution.word_stats is not None:
            _save_frame(state, "word_stats.csv", solution.word_stats)
    except Exception as e:
        return _fail(state, f"Failed to save the solution: {e}", EXIT_DOMAIN)

    state["solution"] = solution
    console.print(
        f"Solved {solution.gamma.lattice.size} states, "
        f"max iterations {int(solution.iterations.max())}, "
        f"max residual {float(solution.residuals.max()):.3g}"
    )
    if solution.unresolved_states:
        console.print(
            f"[bold yellow]Unresolved states:[/bold yellow] "
            f"{list(solution.unresolved_states)}"
        )
    return state


def load_solution(state: PipelineState) -> PipelineState:
    """Reads γ from a previous solve, refusing files from another config."""
    console.print("Loading solved γ...")
    cfg, problem = state["config"], state["problem"]
    file_path = _artifact_path(state, "gamma.csv")
    try:
        text = storage_service.load(
            file_path, target=cfg.output.target, s3_bucket=cfg.output.s3_bucket
        )
    except FileNotFoundError:
        return _fail(
            state,
            f"No solution at {file_path}; run `lsi-lab solve` first.",
            EXIT_DOMAIN,
        )
    except Exception as e:
        return _fail(state, f"Failed to read {file_path}: {e}", EXIT_DOMAIN)

    found, _ = read_provenance(text)
    expected = state["config_hash"] or ""
    if found != expected:
        error = ProvenanceError(file_path, expected, found)
        return _fail(state, str(error), EXIT_PROVENANCE)
    try:
        gamma = read_gamma_csv(text, problem.lattice, problem.grid, problem.bounds)
    except ValueError as e:
        return _fail(state, f"Malformed {file_path}: {e}", EXIT_DOMAIN)
    state["solution"] = FpSolution.from_gamma(gamma)
    return state


def simulate_ensemble(state: PipelineState) -> PipelineState:
    """Simulates the verification ensemble and the LI reference marginals."""
    cfg, problem, solution = state["config"], state["problem"], state["solution"]
    console.print(f"Simulating {cfg.verify.n_paths} paths...")
    try:
        ensemble = simulate_paths(
            problem.eta_model,
            solution.gamma,
            problem.lam,
            problem.nu,
            cfg.verify.n_paths,
            cfg.seed,
            threads=cfg.runtime.threads,
        )
        curve = li_forward_marginals(
            problem.lam, problem.nu, problem.lattice, problem.grid
        )
    except DomainError as e:
        return _fail(state, str(e), EXIT_DOMAIN)

    try:
        _save_frame(state, "paths.csv", paths_to_frame(ensemble))
        _save_frame(state, "marginals.csv", curve.to_frame())
    except Exception as e:
        return _fail(state, f"Failed to save the ensemble: {e}", EXIT_DOMAIN)
    state["ensemble"] = ensemble
    if ensemble.exited:
        console.print(
            f"[bold yellow]{ensemble.exited} paths left the lattice[/bold yellow]"
        )
    return state


def run_checks(state: PipelineState) -> PipelineState:
    """Runs the configured statistical checks on the ensemble."""
    console.print("Running checks...")
    cfg, problem = state["config"], state["problem"]
    solution, ensemble = state["solution"], state["ensemble"]
    settings = cfg.verify
    reports: List[verify.TestReport] = []
    try:
        curve = verify.reference_curve(problem)
        if "projection" in settings.tests:
            reports.append(
                verify.projection_check(
                    problem,
                    solution,
                    settings.n_paths,
                    settings.probe_times,
                    ensemble=ensemble,
                    tv_limit=settings.tv_limit,
                    curve=curve,
                )
            )
        if "exp_clock" in settings.tests:
            reports.append(
                verify.exp_clock_test(
                    ensemble.paths,
                    ensemble.etas,
                    solution.gamma,
                    problem.lam,
                    problem.nu,
                )
            )
        if "martingale" in settings.tests:
            reports.append(
                verify.martingale_test(
                    ensemble.paths,
                    ensemble.etas,
                    solution.gamma,
                    problem.lam,
                    problem.nu,
                    settings.checkpoints,
                )
            )
        if "consistency" in settings.tests:
            reports.append(
                verify.consistency_check(ensemble, solution, settings.probe_times)
            )
        if "power" in settings.tests:
            reports.extend(
                verify.power_checks(
                    problem,
                    solution,
                    ensemble,
                    settings.probe_times,
                    settings.checkpoints,
                    seed=cfg.seed,
                    threads=cfg.runtime.threads,
                )
            )
        curves = verify.projection_curves(ensemble, curve, settings.probe_times)
    except DomainError as e:
        return _fail(state, str(e), EXIT_DOMAIN)

    try:
        _save_frame(state, "curves.csv", curves)
    except Exception as e:
        return _fail(state, f"Failed to save the curves: {e}", EXIT_DOMAIN)
    state["reports"].extend(reports)
    return state


def run_demo(state: PipelineState) -> PipelineState:
    """Runs the two-construction non-uniqueness demonstration."""
    console.print("Running the non-uniqueness demonstration...")
    cfg = state["config"]
    try:
        report, cdf = verify.nonuniqueness_demo(
            n_paths=cfg.verify.demo_paths,
            seed=cfg.seed,
            n_steps=cfg.verify.demo_steps,
            mc_paths=cfg.verify.demo_mc_paths,
            tol=cfg.solver.tol,
            max_iter=cfg.solver.max_iter,
            threads=cfg.runtime.threads,
            horizon=cfg.model.grid.horizon,
        )
    except NonConvergenceError as e:
        _persist_trace(state, e)
        return _fail(state, f"Demo solver did not converge: {e}", EXIT_NONCONVERGENCE)
    except DomainError as e:
        return _fail(state, str(e), EXIT_DOMAIN)

    try:
        _save_frame(state, "demo_cdf.csv", cdf)
    except Exception as e:
        return _fail(state, f"Failed to save the demo CDFs: {e}", EXIT_DOMAIN)
    state["reports"].append(report)
    return state


def write_reports(state: PipelineState) -> PipelineState:
    """
    Persists the reports, prints the summary table and sets the exit code.
    """
    cfg = state["config"]
    reports = state["reports"]
    if reports and "jsonl" in cfg.output.formats:
        records = [r.model_dump(mode="json", by_alias=True) for r in reports]
        try:
            _save(
                state,
                "reports.jsonl",
                records_to_jsonl(records, state["config_hash"] or "", cfg.seed),
            )
        except Exception as e:
            return _fail(state, f"Failed to save the reports: {e}", EXIT_DOMAIN)

    if reports:
        table = Table(title="Reports")
        table.add_column("Check", style="cyan")
        table.add_column("Statistic", justify="right")
        table.add_column("Threshold", justify="right")
        table.add_column("Result")
        for report in reports:
            relation = "≥" if report.criterion == "min" else "≤"
            table.add_row(
                report.name,
                f"{report.statistic:.4g}",
                f"{relation} {report.threshold:.4g}",
                "[green]pass[/green]" if report.passed else "[red]FAIL[/red]",
            )
        console.print(table)
    for path in state["artifacts"]:
        console.print(f"Wrote {path}")

    failed = [r.name for r in reports if not r.passed]
    if failed:
        logger.warning("Failed reports: %s", ", ".join(failed))
    state["exit_code"] = EXIT_FAILED_REPORT if failed else EXIT_OK
    return state


def handle_error(state: PipelineState) -> PipelineState:
    """
    Prints the error and makes sure the run ends with a non-zero exit code.
    """
    error_message = state.get("error_message")
    if error_message:
        console.print(f"[bold red]Error:[/bold red] {error_message}")
        logger.error(error_message)
    if not state.get("exit_code"):
        state["exit_code"] = EXIT_DOMAIN
    return state
