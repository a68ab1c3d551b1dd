import numpy as np
import pytest
from scipy import stats

from lsilab.core import Bounds, JumpDistribution, TimeGrid, build_lattice
from lsilab.cox import GammaFamily, IntensitySpec, simulate_paths
from lsilab.eta import ConstantEta, EtaModel
from lsilab.exceptions import InsufficientSamplesError, MassLeakError
from lsilab.li_model import (
    li_forward_marginals,
    marginal_distance,
    pooled_cells,
)

BOUNDS = Bounds(L=1.0, U=2.0)
GRID = TimeGrid(horizon=1.0, n_steps=20)


def test_counting_marginals_are_poisson():
    """λ ≡ 1 with unit jumps gives Poisson(t) marginals at every node."""
    # Arrange
    nu = JumpDistribution.counting()
    lattice = build_lattice(nu, 15)
    lam = IntensitySpec.constant(lattice, GRID, BOUNDS, 1.0)

    # Act
    curve = li_forward_marginals(lam, nu, lattice, GRID)

    # Assert
    for t in (0.25, 0.5, 1.0):
        expected = stats.poisson.pmf(lattice.states, t)
        np.testing.assert_allclose(curve.at(t), expected, atol=1e-6)
    assert curve.leak[-1] < 1e-6


def test_signed_jump_marginals_are_skellam():
    """Jumps ±1 with probabilities 0.7/0.3 give a Skellam(0.7t, 0.3t) law."""
    nu = JumpDistribution(atoms=(1.0, -1.0), probs=(0.7, 0.3))
    lattice = build_lattice(nu, 12)
    lam = IntensitySpec.constant(lattice, GRID, BOUNDS, 1.0)

    curve = li_forward_marginals(lam, nu, lattice, GRID)

    expected = stats.skellam.pmf(lattice.states, 0.7, 0.3)
    np.testing.assert_allclose(curve.at(1.0), expected, atol=1e-6)


def test_marginal_frame_schema():
    """The exported curve has (t, state, prob) rows that sum to one per node."""
    nu = JumpDistribution.counting()
    lattice = build_lattice(nu, 15)
    lam = IntensitySpec.constant(lattice, GRID, BOUNDS, 1.0)

    frame = li_forward_marginals(lam, nu, lattice, GRID).to_frame()

    assert list(frame.columns) == ["t", "state", "prob"]
    totals = frame.groupby("t")["prob"].sum()
    np.testing.assert_allclose(totals.to_numpy(), 1.0, atol=1e-6)


def test_shallow_lattice_leaks_mass():
    """Too small a lattice for the intensity raises instead of renormalizing."""
    nu = JumpDistribution.counting()
    lattice = build_lattice(nu, 2)
    lam = IntensitySpec.constant(lattice, GRID, BOUNDS, 2.0)

    with pytest.raises(MassLeakError) as excinfo:
        li_forward_marginals(lam, nu, lattice, GRID)

    assert excinfo.value.leak > 1e-6


def test_pooled_cells_merge_sparse_tails():
    """Adjacent cells merge until each group expects at least five counts."""
    labels = pooled_cells(np.array([1.0, 2.0, 3.0, 10.0, 1.0]))

    np.testing.assert_array_equal(labels, [0, 0, 0, 1, 1])


def test_marginal_distance_needs_enough_paths():
    """Fewer than 100 paths cannot support a chi-square test."""
    nu = JumpDistribution.counting()
    lattice = build_lattice(nu, 15)
    lam = IntensitySpec.constant(lattice, GRID, BOUNDS, 1.0)
    curve = li_forward_marginals(lam, nu, lattice, GRID)

    with pytest.raises(InsufficientSamplesError):
        marginal_distance([], curve, 1.0)


def test_simulated_constant_eta_matches_li_marginals():
    """With constant η the LSI paths are LI paths, so the marginals agree."""
    # Arrange
    nu = JumpDistribution.counting()
    lattice = build_lattice(nu, 15)
    lam = IntensitySpec.constant(lattice, GRID, BOUNDS, 1.0)
    gamma = GammaFamily.constant(lattice, GRID, BOUNDS, 1.5)
    eta_model = EtaModel(spec=ConstantEta(value=1.5), bounds=BOUNDS, grid=GRID)
    curve = li_forward_marginals(lam, nu, lattice, GRID)

    # Act
    ensemble = simulate_paths(eta_model, gamma, lam, nu, 3000, seed=8)
    tv, p_value = marginal_distance(ensemble, curve, 1.0)

    # Assert
    assert tv < 0.05
    assert p_value >= 1e-3
