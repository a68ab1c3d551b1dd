import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from lsilab.core import (
    SIMULATION_STREAM,
    Bounds,
    GridFunction,
    JumpDistribution,
    RngStream,
    Substream,
    TimeGrid,
    build_lattice,
    poisson_truncation_depth,
)


def test_bounds_reject_inverted_order():
    """Bounds require 0 < L < U."""
    with pytest.raises(ValidationError):
        Bounds(L=2.0, U=1.0)


def test_bounds_derived_constants():
    """The rate envelope and the contraction constant follow from L and U."""
    bounds = Bounds(L=1.0, U=2.0)

    assert bounds.rate_floor == pytest.approx(0.5)
    assert bounds.rate_ceiling == pytest.approx(4.0)
    assert bounds.midpoint == pytest.approx(1.5)
    assert bounds.contraction_constant(1.0) == pytest.approx(16.0 * math.exp(4.0))


@pytest.mark.parametrize(
    ("t", "cell", "left"),
    [(0.0, 0, 0), (0.1, 0, 0), (0.25, 1, 0), (0.3, 1, 1), (1.0, 3, 3)],
)
def test_time_grid_cells(t, cell, left):
    """Nodes belong to the cell on their right; left_cell looks backwards."""
    grid = TimeGrid(horizon=1.0, n_steps=4)

    assert grid.cell_of(t) == cell
    assert grid.left_cell(t) == left


def test_time_grid_rejects_times_outside_horizon():
    """Times beyond T are an error rather than silently clipped."""
    grid = TimeGrid(horizon=1.0, n_steps=4)

    with pytest.raises(ValueError):
        grid.cell_of(1.5)


def test_time_grid_nodes():
    """Node lookup tolerates floating-point noise and rejects mid-cell times."""
    grid = TimeGrid(horizon=1.0, n_steps=10)

    assert grid.is_node(0.3)
    assert grid.node_index(0.1 + 0.2) == 3
    assert not grid.is_node(0.35)
    with pytest.raises(ValueError):
        grid.node_index(0.35)


def test_grid_function_integral_is_exact_for_step_functions():
    """∫ of a piecewise-constant function is computed without quadrature error."""
    # Arrange
    grid = TimeGrid(horizon=1.0, n_steps=4)
    f = GridFunction(grid, np.array([1.0, 2.0, 3.0, 4.0]))

    # Act / Assert
    assert f.integral(0.0, 1.0) == pytest.approx(2.5)
    assert f.integral(0.125, 0.375) == pytest.approx(0.375)
    assert f(0.5) == 3.0
    with pytest.raises(ValueError):
        f.integral(0.5, 0.25)


def test_grid_function_rejects_wrong_length():
    """One value per cell is required."""
    with pytest.raises(ValueError):
        GridFunction(TimeGrid(horizon=1.0, n_steps=4), np.ones(3))


@pytest.mark.parametrize(
    ("atoms", "probs"),
    [((1.0, 1.0), (0.5, 0.5)), ((0.0,), (1.0,)), ((1.0, -1.0), (0.6, 0.6))],
)
def test_jump_distribution_validation(atoms, probs):
    """Atoms are distinct and nonzero, probabilities positive and normalized."""
    with pytest.raises(ValidationError):
        JumpDistribution(atoms=atoms, probs=probs)


def test_jump_distribution_mean_and_sampling():
    """The first moment and CDF inversion agree with the atom table."""
    nu = JumpDistribution(atoms=(1.0, -1.0), probs=(0.7, 0.3))

    assert nu.mean == pytest.approx(0.4)
    assert not nu.is_counting
    assert JumpDistribution.counting().is_counting
    assert nu.sample_index(0.5) == 0
    assert nu.sample_index(0.8) == 1
    assert nu.atom_index(-1.0) == 1


def test_counting_lattice_structure():
    """δ₁ gives the chain 0 → 1 → ... → K with the top state absorbing."""
    lattice = build_lattice(JumpDistribution.counting(), 3)

    np.testing.assert_array_equal(lattice.states, [0.0, 1.0, 2.0, 3.0])
    np.testing.assert_array_equal(lattice.successors[:, 0], [1, 2, 3, -1])
    np.testing.assert_array_equal(lattice.depth, [0, 1, 2, 3])
    np.testing.assert_array_equal(lattice.parent, [-1, 0, 1, 2])


def test_symmetric_lattice_order_and_successors():
    """Zero comes first, the other states ascend, and exits are marked -1."""
    nu = JumpDistribution(atoms=(1.0, -1.0), probs=(0.5, 0.5))

    lattice = build_lattice(nu, 2)

    assert lattice.states[0] == 0.0
    np.testing.assert_array_equal(lattice.states[1:], [-2.0, -1.0, 1.0, 2.0])
    low = lattice.locate(-2.0)
    assert lattice.successors[low, nu.atom_index(-1.0)] == -1
    assert lattice.states[lattice.successors[low, 0]] == -1.0
    np.testing.assert_array_equal(
        lattice.states[lattice.value_order()], [-2.0, -1.0, 0.0, 1.0, 2.0]
    )


def test_lattice_merges_equal_sums():
    """Different words with the same sum share one state."""
    nu = JumpDistribution(atoms=(0.5, 1.0), probs=(0.5, 0.5))

    lattice = build_lattice(nu, 2)

    np.testing.assert_allclose(np.sort(lattice.states), [0.0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(KeyError):
        lattice.locate(0.25)


def test_poisson_truncation_depth_is_the_smallest_admissible():
    """K is the first depth whose Poisson tail drops below the target."""
    bounds = Bounds(L=1.0, U=2.0)

    K = poisson_truncation_depth(bounds, 1.0, tail=1e-6)

    assert stats.poisson.sf(K, 4.0) < 1e-6
    assert stats.poisson.sf(K - 1, 4.0) >= 1e-6


def test_rng_stream_is_reproducible_and_separated():
    """Draws depend only on (seed, stream, substream, position)."""
    # Arrange
    first = RngStream(seed=5, stream_id=SIMULATION_STREAM + 3)
    again = RngStream.for_path(5, SIMULATION_STREAM, 3)

    # Act
    clocks = first.exponentials(Substream.CLOCKS, 8)

    # Assert
    np.testing.assert_array_equal(clocks, again.exponentials(Substream.CLOCKS, 8))
    assert not np.array_equal(
        first.uniforms(Substream.CLOCKS, 8), first.uniforms(Substream.JUMPS, 8)
    )
    assert not np.array_equal(
        first.uniforms(Substream.ETA, 8),
        RngStream(6, SIMULATION_STREAM + 3).uniforms(Substream.ETA, 8),
    )
    assert first.child(0) != first.child(1)


def test_rng_stream_rejects_out_of_range_seed():
    """Seeds are 64-bit unsigned integers."""
    with pytest.raises(ValueError):
        RngStream(seed=-1, stream_id=0)
    with pytest.raises(ValueError):
        RngStream(seed=2**64, stream_id=0)
