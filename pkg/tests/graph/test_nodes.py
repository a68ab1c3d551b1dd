import json
from pathlib import Path

import pytest
from pytest_mock import MockerFixture

from lsilab.cli import get_initial_state
from lsilab.config import config_hash, load_experiment
from lsilab.exceptions import NonConvergenceError
from lsilab.experiment import build_problem
from lsilab.fixed_point import CountingFpProblem
from lsilab.graph import nodes
from lsilab.graph.builder import (
    route_after_checks,
    route_after_simulate,
    route_after_solve,
    route_by_command,
)
from lsilab.graph.nodes import (
    EXIT_CONFIG,
    EXIT_DOMAIN,
    EXIT_FAILED_REPORT,
    EXIT_NONCONVERGENCE,
    EXIT_OK,
    EXIT_PROVENANCE,
    handle_error,
    load_solution,
    solve_gamma,
    write_reports,
)
from lsilab.graph.state import PipelineState
from lsilab.utils.logs import detach_log_file
from lsilab.verify import TestReport


@pytest.fixture
def loaded_state(config_factory, tmp_path: Path) -> PipelineState:
    """A state as load_experiment leaves it, without the sidecar log."""
    path = config_factory()
    cfg = load_experiment(path)
    state = get_initial_state("check", path)
    state["config"] = cfg
    state["config_hash"] = config_hash(cfg)
    state["output_dir"] = str(tmp_path / "outputs")
    state["problem"] = build_problem(cfg)
    return state


def report(name: str, statistic: float) -> TestReport:
    return TestReport(
        name=name,
        statistic=statistic,
        threshold=1e-3,
        criterion="min",
        n_samples=100,
    )


def test_load_experiment_rejects_invalid_config(config_factory):
    """
    Tests that a validation error ends the run with the config exit code.
    """
    # Arrange
    state = get_initial_state("solve", config_factory(solver={"mc_paths": 10}))

    # Act
    result = nodes.load_experiment(state)

    # Assert
    assert result["exit_code"] == EXIT_CONFIG
    assert "solver.mc_paths" in result["error_message"]
    assert result["config"] is None


def test_load_experiment_applies_overrides(config_factory, tmp_path: Path):
    """
    Tests that --seed, --threads and --out take precedence over the file.
    """
    # Arrange
    out = tmp_path / "elsewhere"
    state = get_initial_state(
        "solve", config_factory(), out=out, seed=11, threads=3
    )

    # Act
    result = nodes.load_experiment(state)
    detach_log_file(result["log_handler"])

    # Assert
    assert result["error_message"] is None
    assert result["config"].seed == 11
    assert result["config"].runtime.threads == 3
    assert result["output_dir"] == str(out)
    assert result["config_hash"] == config_hash(result["config"])
    assert isinstance(result["problem"], CountingFpProblem)
    assert (out / "run.log").exists()


def test_load_experiment_skips_the_problem_for_the_demo(config_factory):
    """
    Tests that the demo command does not build the configured problem.
    """
    state = get_initial_state("demo-nonuniqueness", config_factory())

    result = nodes.load_experiment(state)
    detach_log_file(result["log_handler"])

    assert result["problem"] is None
    assert result["error_message"] is None


def test_load_solution_refuses_other_configs(
    mocker: MockerFixture, loaded_state: PipelineState
):
    """
    Tests that a gamma.csv written by another config is a provenance error.
    """
    # Arrange
    mock_storage = mocker.patch("lsilab.graph.nodes.storage_service")
    mock_storage.load.return_value = "# config_hash=abc123 seed=7\nstate,t,gamma\n"

    # Act
    result = load_solution(loaded_state)

    # Assert
    assert result["exit_code"] == EXIT_PROVENANCE
    assert "abc123" in result["error_message"]
    assert result["solution"] is None


def test_load_solution_without_a_solve(
    mocker: MockerFixture, loaded_state: PipelineState
):
    """
    Tests that a missing gamma.csv points the user at the solve command.
    """
    mock_storage = mocker.patch("lsilab.graph.nodes.storage_service")
    mock_storage.load.side_effect = FileNotFoundError("gamma.csv")

    result = load_solution(loaded_state)

    assert result["exit_code"] == EXIT_DOMAIN
    assert "lsi-lab solve" in result["error_message"]


def test_solve_gamma_persists_the_trace_on_nonconvergence(
    mocker: MockerFixture, loaded_state: PipelineState
):
    """
    Tests that a failed solve writes residuals.csv and exits with code 3.
    """
    # Arrange
    mock_storage = mocker.patch("lsilab.graph.nodes.storage_service")
    mocker.patch(
        "lsilab.graph.nodes.solve",
        side_effect=NonConvergenceError("no luck", [0.5, 0.4], level=0),
    )

    # Act
    result = solve_gamma(loaded_state)

    # Assert
    assert result["exit_code"] == EXIT_NONCONVERGENCE
    saved = mock_storage.save.call_args.kwargs
    assert saved["file_path"].endswith("residuals.csv")
    assert "iteration,residual" in saved["content"]


def test_write_reports_fails_on_a_failed_report(
    mocker: MockerFixture, loaded_state: PipelineState
):
    """
    Tests that one failing report sets exit code 1 and is recorded as such.
    """
    # Arrange
    mock_storage = mocker.patch("lsilab.graph.nodes.storage_service")
    loaded_state["reports"] = [report("projection", 0.5), report("martingale", 0.0)]

    # Act
    result = write_reports(loaded_state)

    # Assert
    assert result["exit_code"] == EXIT_FAILED_REPORT
    content = mock_storage.save.call_args.kwargs["content"]
    records = [json.loads(line) for line in content.splitlines()]
    assert [r["pass"] for r in records] == [True, False]
    assert {r["config_hash"] for r in records} == {loaded_state["config_hash"]}


def test_write_reports_respects_the_formats(
    mocker: MockerFixture, loaded_state: PipelineState
):
    """
    Tests that reports.jsonl is skipped when jsonl is not an output format.
    """
    mock_storage = mocker.patch("lsilab.graph.nodes.storage_service")
    output = loaded_state["config"].output.model_copy(update={"formats": ["csv"]})
    loaded_state["config"] = loaded_state["config"].model_copy(
        update={"output": output}
    )
    loaded_state["reports"] = [report("projection", 0.5)]

    result = write_reports(loaded_state)

    assert result["exit_code"] == EXIT_OK
    mock_storage.save.assert_not_called()


@pytest.mark.parametrize(("preset", "expected"), [(0, EXIT_DOMAIN), (3, 3)])
def test_handle_error_keeps_a_nonzero_exit_code(loaded_state, preset, expected):
    """
    Tests that the error handler never lets a failed run exit with zero.
    """
    loaded_state["error_message"] = "boom"
    loaded_state["exit_code"] = preset

    result = handle_error(loaded_state)

    assert result["exit_code"] == expected


@pytest.mark.parametrize(
    ("command", "expected"),
    [
        ("solve", "solve_gamma"),
        ("all", "solve_gamma"),
        ("simulate", "load_solution"),
        ("check", "load_solution"),
        ("demo-nonuniqueness", "run_demo"),
    ],
)
def test_route_by_command(command, expected):
    """
    Tests that every subcommand enters the pipeline at its first stage.
    """
    state = get_initial_state(command, Path("experiment.yaml"))

    assert route_by_command(state) == expected


def test_routes_leave_the_chain_where_the_command_ends():
    """
    Tests the exits after solving, simulating and checking.
    """
    solve = get_initial_state("solve", Path("x.yaml"))
    simulate = get_initial_state("simulate", Path("x.yaml"))
    everything = get_initial_state("all", Path("x.yaml"))
    failed = get_initial_state("all", Path("x.yaml"))
    failed["error_message"] = "boom"

    assert route_after_solve(solve) == "write_reports"
    assert route_after_solve(everything) == "simulate_ensemble"
    assert route_after_simulate(simulate) == "write_reports"
    assert route_after_simulate(everything) == "run_checks"
    assert route_after_checks(everything) == "run_demo"
    assert route_after_checks(failed) == "handle_error"
