import json
from pathlib import Path
from typing import Any

import pandas as pd
from pytest_mock import MockerFixture

from lsilab.cli import get_initial_state
from lsilab.graph.builder import build_graph
from lsilab.graph.nodes import (
    EXIT_CONFIG,
    EXIT_DOMAIN,
    EXIT_NONCONVERGENCE,
    EXIT_OK,
    EXIT_PROVENANCE,
)
from lsilab.graph.state import PipelineState
from lsilab.utils.files import read_provenance
from lsilab.utils.logs import detach_log_file
from lsilab.verify import TestReport


def invoke(command: str, config: Path, **overrides: Any) -> PipelineState:
    """Runs one subcommand through the compiled graph and closes its log."""
    app = build_graph()
    final_state: Any = app.invoke(get_initial_state(command, config, **overrides))
    if final_state.get("log_handler") is not None:
        detach_log_file(final_state["log_handler"])
    return final_state


def test_solve_then_check(config_factory, tmp_path: Path):
    """
    Integration test for a solve followed by a check of the saved γ.

    Constant η makes the LSI model an LI model, so both checks pass.
    """
    # Arrange
    config = config_factory()
    outputs = tmp_path / "outputs"

    # Act
    solved = invoke("solve", config)
    checked = invoke("check", config)

    # Assert
    assert solved["exit_code"] == EXIT_OK, solved["error_message"]
    gamma_text = (outputs / "gamma.csv").read_text()
    assert read_provenance(gamma_text) == (solved["config_hash"], 7)
    assert (outputs / "residuals.csv").exists()

    assert checked["exit_code"] == EXIT_OK, checked["error_message"]
    for name in ("paths.csv", "marginals.csv", "curves.csv", "run.log"):
        assert (outputs / name).exists()
    records = [
        json.loads(line)
        for line in (outputs / "reports.jsonl").read_text().splitlines()
    ]
    assert [r["name"] for r in records] == ["projection", "consistency"]
    assert all(r["pass"] for r in records)


def test_check_refuses_a_solution_from_another_seed(config_factory):
    """
    Tests that reseeding after a solve is caught by the provenance check.
    """
    config = config_factory()
    assert invoke("solve", config)["exit_code"] == EXIT_OK

    result = invoke("check", config, seed=99)

    assert result["exit_code"] == EXIT_PROVENANCE
    assert "gamma.csv" in result["error_message"]


def test_simulate_without_a_solution(config_factory):
    """
    Tests that simulating before solving fails with a domain error.
    """
    result = invoke("simulate", config_factory())

    assert result["exit_code"] == EXIT_DOMAIN
    assert result["ensemble"] is None


def test_invalid_config_exits_with_code_two(config_factory):
    """
    Tests that an invalid experiment never reaches the solver.
    """
    result = invoke("solve", config_factory(solver={"tol": -1.0}))

    assert result["exit_code"] == EXIT_CONFIG
    assert result["solution"] is None


def test_nonconvergence_keeps_the_residual_trace(config_factory, tmp_path: Path):
    """
    Tests that a solve hitting max_iter exits with 3 and keeps its trace.
    """
    config = config_factory(
        model={"eta": {"kind": "constant", "value": 1.2}}, solver={"max_iter": 1}
    )

    result = invoke("solve", config)

    assert result["exit_code"] == EXIT_NONCONVERGENCE
    trace = pd.read_csv(tmp_path / "outputs" / "residuals.csv", comment="#")
    assert trace["residual"].iloc[0] > 0.29
    assert not (tmp_path / "outputs" / "gamma.csv").exists()


def test_all_runs_every_stage(mocker: MockerFixture, config_factory, tmp_path):
    """
    Tests that the all command solves, simulates, checks and runs the demo.
    """
    # Arrange
    demo_report = TestReport(
        name="nonuniqueness_demo",
        statistic=0.9,
        threshold=0.1,
        criterion="min",
        n_samples=200,
    )
    cdf = pd.DataFrame({"t": [0.0, 1.0], "cox": [0.0, 0.6], "coupled": [0.0, 0.6]})
    mock_demo = mocker.patch(
        "lsilab.graph.nodes.verify.nonuniqueness_demo", return_value=(demo_report, cdf)
    )

    # Act
    result = invoke("all", config_factory())

    # Assert
    assert result["exit_code"] == EXIT_OK, result["error_message"]
    mock_demo.assert_called_once()
    assert mock_demo.call_args.kwargs["n_paths"] == 200
    assert [r.name for r in result["reports"]] == [
        "projection",
        "consistency",
        "nonuniqueness_demo",
    ]
    assert (tmp_path / "outputs" / "demo_cdf.csv").exists()


def test_artifacts_do_not_depend_on_the_thread_count(config_factory, tmp_path):
    """
    Tests that two runs with the same seed write byte-identical artifacts.
    """
    # Arrange
    eta = {"kind": "two-state-markov", "low": 1.0, "high": 2.0}
    config = config_factory(model={"eta": {**eta, "rate_up": 1.0, "rate_down": 1.0}})
    serial, pooled = tmp_path / "serial", tmp_path / "pooled"

    # Act
    for out, threads in ((serial, 1), (pooled, 3)):
        assert invoke("solve", config, out=out, threads=threads)["exit_code"] == 0
        assert invoke("simulate", config, out=out, threads=threads)["exit_code"] == 0

    # Assert
    for name in ("gamma.csv", "residuals.csv", "paths.csv", "marginals.csv"):
        assert (serial / name).read_bytes() == (pooled / name).read_bytes()
