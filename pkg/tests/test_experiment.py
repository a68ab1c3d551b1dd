from pathlib import Path

import numpy as np
import pytest
from pytest_mock import MockerFixture
from scipy import stats

from lsilab.config import load_experiment
from lsilab.core import build_lattice, poisson_truncation_depth
from lsilab.experiment import build_intensity, build_problem, lattice_depth, solve
from lsilab.fixed_point import (
    CountingFpProblem,
    GeneralFpProblem,
    default_holder_limit,
)

SIGNED = {"atoms": [1.0, -1.0], "probs": [0.7, 0.3]}


def test_auto_depth_uses_the_poisson_tail(config_factory):
    """The automatic depth bounds the jump count at rate U²/L."""
    cfg = load_experiment(config_factory(solver={"max_jumps": "auto"}))

    K = lattice_depth(cfg)

    assert stats.poisson.sf(K, 4.0) < 1e-6


def test_counting_config_builds_a_level_problem(config_factory):
    """Counting mode gives a level-by-level problem on {0..K}."""
    cfg = load_experiment(config_factory())

    problem = build_problem(cfg)

    assert isinstance(problem, CountingFpProblem)
    assert problem.max_level == 10
    assert problem.seed == 7


def test_general_config_builds_a_coupled_problem(config_factory):
    """General mode carries ν, the damping and the word cap."""
    cfg = load_experiment(
        config_factory(
            model={"jumps": SIGNED},
            solver={"mode": "general", "max_jumps": 3, "damping": 0.7},
        )
    )

    problem = build_problem(cfg)

    assert isinstance(problem, GeneralFpProblem)
    assert problem.damping == 0.7
    assert problem.lattice.size == 7


def test_holder_limit_rejects_rough_eta(config_factory):
    """A single-jump η fails a tiny Hölder limit before any solve."""
    cfg = load_experiment(
        config_factory(
            model={"jumps": SIGNED, "eta": {"kind": "single-jump", "rate": 1.0}},
            solver={"mode": "general", "max_jumps": 2, "holder_limit": 1e-3},
        )
    )

    with pytest.raises(ValueError, match="Hölder"):
        build_problem(cfg)


def test_affine_intensity_is_clipped_to_the_bounds(config_factory):
    """λ = 1 + x is tabulated per state and clipped to [L, U]."""
    cfg = load_experiment(
        config_factory(
            model={"intensity": {"kind": "affine-state", "base": 1.0, "slope": 1.0}}
        )
    )
    lattice = build_lattice(cfg.model.jumps, 3)

    lam = build_intensity(cfg.model, lattice)

    np.testing.assert_allclose(lam.table[:, 0], [1.0, 2.0, 2.0, 2.0])


def test_table_intensity_is_read_from_csv(config_factory, tmp_path: Path):
    """A λ table covers every state and cell of the lattice."""
    # Arrange
    rows = ["state,t,lambda"]
    for state in range(4):
        for i in range(8):
            rows.append(f"{state},{i / 8},{1.0 + state / 4}")
    (tmp_path / "lambda.csv").write_text("\n".join(rows) + "\n")
    cfg = load_experiment(
        config_factory(model={"intensity": {"kind": "table", "path": "lambda.csv"}})
    )
    lattice = build_lattice(cfg.model.jumps, 3)

    # Act
    lam = build_intensity(cfg.model, lattice)

    # Assert
    np.testing.assert_allclose(lam.table[:, 3], [1.0, 1.25, 1.5, 1.75])


def test_solve_dispatches_on_the_problem(config_factory):
    """A counting config with constant η solves to γ ≡ η."""
    cfg = load_experiment(config_factory())

    solution = solve(build_problem(cfg), cfg.solver)

    np.testing.assert_allclose(solution.gamma.table, 1.5, atol=1e-12)


def test_default_general_config_checks_regularity_and_restarts(
    mocker: MockerFixture, config_factory
):
    """
    A general config without solver options runs the Hölder check with the
    derived limit and solves from all three starts.
    """
    # Arrange
    cfg = load_experiment(
        config_factory(
            model={"jumps": SIGNED}, solver={"mode": "general", "max_jumps": 2}
        )
    )
    diagnostic = mocker.patch(
        "lsilab.experiment.regularity_diagnostic", return_value=0.0
    )
    restarts = mocker.patch("lsilab.experiment.solve_with_restarts")
    single = mocker.patch("lsilab.experiment.solve_system")

    # Act
    problem = build_problem(cfg)
    solve(problem, cfg.solver)

    # Assert
    limit = default_holder_limit(cfg.model.eta_model())
    assert limit == pytest.approx(5.0)
    diagnostic.assert_called_once_with(problem.eta_model, 7, limit=limit)
    restarts.assert_called_once_with(problem, tol=1e-6, max_iter=20)
    single.assert_not_called()


def test_default_holder_limit_rejects_a_fast_switching_eta(config_factory):
    """A single-jump η with a rate far above 1/T fails the derived limit."""
    cfg = load_experiment(
        config_factory(
            model={"jumps": SIGNED, "eta": {"kind": "single-jump", "rate": 50.0}},
            solver={"mode": "general", "max_jumps": 2},
        )
    )

    with pytest.raises(ValueError, match="Hölder"):
        build_problem(cfg)


@pytest.mark.parametrize(
    "path", sorted((Path(__file__).parents[1] / "config").glob("*.yaml"))
)
def test_shipped_configs_truncate_at_the_poisson_depth(path: Path):
    """Every example config loads and its lattice is at least the Poisson depth."""
    cfg = load_experiment(path)

    depth = lattice_depth(cfg)

    assert depth >= poisson_truncation_depth(cfg.model.bounds, cfg.model.grid.horizon)
