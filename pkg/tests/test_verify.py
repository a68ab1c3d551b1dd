import math

import numpy as np
import pytest

from lsilab.core import Bounds, JumpDistribution, TimeGrid, build_lattice
from lsilab.cox import GammaFamily, IntensitySpec, simulate_paths
from lsilab.eta import (
    ClampedDiffusionEta,
    ConstantEta,
    EtaModel,
    RandomConstantEta,
    TwoStateMarkovEta,
)
from lsilab.exceptions import InsufficientSamplesError
from lsilab.fixed_point import CountingFpProblem, FpSolution, solve_all_levels
from lsilab.verify import (
    TestReport,
    censored_ks,
    consistency_check,
    exp_clock_test,
    martingale_test,
    nonuniqueness_demo,
    perturb_gamma,
    power_checks,
    projection_check,
    projection_curves,
    reference_curve,
    scale_intensity,
    truncated_pit,
    unconditional_gamma,
)

BOUNDS = Bounds(L=1.0, U=2.0)
GRID = TimeGrid(horizon=1.0, n_steps=16)
NU = JumpDistribution.counting()
LATTICE = build_lattice(NU, 15)
LAM = IntensitySpec.constant(LATTICE, GRID, BOUNDS, 1.0)


def counting_problem(spec, mc_paths=2000, seed=0) -> CountingFpProblem:
    return CountingFpProblem(
        eta_model=EtaModel(spec=spec, bounds=BOUNDS, grid=GRID),
        lam=LAM,
        bounds=BOUNDS,
        grid=GRID,
        mc_paths=mc_paths,
        max_level=15,
        seed=seed,
    )


@pytest.fixture(scope="module")
def constant_run():
    """η ≡ γ ≡ 1.5 and λ ≡ 1: the LSI paths are unit-rate Poisson paths."""
    problem = counting_problem(ConstantEta(value=1.5))
    gamma = GammaFamily.constant(LATTICE, GRID, BOUNDS, 1.5)
    ensemble = simulate_paths(problem.eta_model, gamma, LAM, NU, 3000, seed=21)
    return problem, FpSolution.from_gamma(gamma), ensemble


def test_report_direction_and_conditions():
    """A report passes only on the right side of its threshold with all conditions."""
    low = TestReport(
        name="a", statistic=0.5, threshold=1e-3, criterion="min", n_samples=10
    )
    high = TestReport(
        name="b", statistic=0.5, threshold=0.1, criterion="max", n_samples=10
    )
    blocked = low.model_copy(update={"conditions": {"tv@1": False}})
    undefined = low.model_copy(update={"statistic": math.nan})

    assert low.passed
    assert not high.passed
    assert not blocked.passed
    assert not undefined.passed


def test_report_serializes_pass_under_its_alias():
    """The JSON line carries the verdict as "pass"."""
    report = TestReport(
        name="a", statistic=0.5, threshold=1e-3, criterion="min", n_samples=10
    )

    dumped = report.model_dump(by_alias=True)

    assert dumped["pass"] is True
    assert '"pass":true' in report.to_json_line()


def test_truncated_pit_without_censoring_is_the_exp1_cdf():
    """An infinite budget leaves the plain probability transform."""
    pit = truncated_pit(np.array([0.5, 2.0]), np.array([np.inf, np.inf]))

    np.testing.assert_allclose(pit, 1.0 - np.exp(-np.array([0.5, 2.0])))


def test_truncated_pit_rescales_by_the_budget():
    """A clock at its budget maps to one."""
    pit = truncated_pit(np.array([0.2, 0.7]), np.array([0.7, 0.7]))

    assert pit[1] == pytest.approx(1.0)
    assert pit[0] == pytest.approx((1 - np.exp(-0.2)) / (1 - np.exp(-0.7)))


def test_censored_ks_on_exact_quantiles():
    """Samples placed on Exp(1) quantiles are close to the reference."""
    # Arrange
    n = 1000
    samples = -np.log1p(-(np.arange(n) + 0.5) / n)

    # Act
    distance, p_value = censored_ks(samples, lambda x: 1 - np.exp(-x), 1.0)

    # Assert
    assert distance <= 1.0 / n
    assert p_value > 0.99


def test_censored_ks_with_everything_censored():
    """With no observation before T the distance is the reference mass at T."""
    distance, _ = censored_ks(
        np.full(10, np.inf), lambda x: 1 - np.exp(-x), 1.0
    )

    assert distance == pytest.approx(1 - np.exp(-1.0))


def test_exp_clock_test_accepts_the_true_leverage(constant_run):
    """Clocks extracted with the leverage used to simulate look Exp(1)."""
    problem, solution, ensemble = constant_run

    report = exp_clock_test(
        ensemble.paths, ensemble.etas, solution.gamma, LAM, nu=NU
    )

    assert report.n_samples >= 1000
    assert report.passed
    assert report.conditions["jump_law"]


def test_exp_clock_test_rejects_a_wrong_leverage(constant_run):
    """Extracting clocks with γ ≡ U shrinks them and fails the KS test."""
    _, _, ensemble = constant_run
    wrong = GammaFamily.constant(LATTICE, GRID, BOUNDS, 2.0)

    report = exp_clock_test(ensemble.paths, ensemble.etas, wrong, LAM)

    assert not report.passed


def test_exp_clock_test_needs_enough_intervals(constant_run):
    """A handful of paths cannot support the KS test."""
    _, solution, ensemble = constant_run

    with pytest.raises(InsufficientSamplesError):
        exp_clock_test(
            ensemble.paths[:20], ensemble.etas[:20], solution.gamma, LAM
        )


def test_martingale_test_accepts_the_true_compensator(constant_run):
    """X_t - t has mean zero at every checkpoint and within every bin."""
    _, solution, ensemble = constant_run

    report = martingale_test(
        ensemble.paths, ensemble.etas, solution.gamma, LAM, NU, [0.5, 1.0]
    )

    assert report.passed
    assert report.details["n_tests"] > 2
    assert report.threshold > 3.0


def test_martingale_test_rejects_a_wrong_compensator(constant_run):
    """A compensator growing at rate 1.5 drifts away from X."""
    _, _, ensemble = constant_run
    slow = GammaFamily.constant(LATTICE, GRID, BOUNDS, 1.0)

    report = martingale_test(ensemble.paths, ensemble.etas, slow, LAM, NU, [0.5, 1.0])

    assert not report.passed


def test_martingale_test_needs_enough_paths(constant_run):
    """Fewer than 1000 paths is refused."""
    _, solution, ensemble = constant_run

    with pytest.raises(InsufficientSamplesError):
        martingale_test(
            ensemble.paths[:50], ensemble.etas[:50], solution.gamma, LAM, NU, [1.0]
        )


def test_projection_check_on_li_paths(constant_run):
    """Constant η paths match the LI forward marginals."""
    problem, solution, ensemble = constant_run

    report = projection_check(
        problem, solution, 3000, [0.5, 1.0], ensemble=ensemble, tv_limit=0.05
    )

    assert report.passed
    assert report.details["exit_rate"] == 0.0


def test_projection_curves_schema(constant_run):
    """One row per probe time and state, with both laws summing to one."""
    problem, _, ensemble = constant_run

    frame = projection_curves(ensemble, reference_curve(problem), [0.5, 1.0])

    assert list(frame.columns) == ["t", "state", "empirical", "reference"]
    assert len(frame) == 2 * LATTICE.size
    sums = frame.groupby("t")[["empirical", "reference"]].sum()
    np.testing.assert_allclose(sums.to_numpy(), 1.0, atol=1e-6)


def test_consistency_check_with_constant_eta(constant_run):
    """E[η | X] equals the constant leverage exactly."""
    _, solution, ensemble = constant_run

    report = consistency_check(ensemble, solution, [0.5, 1.0])

    assert report.statistic == 0.0
    assert report.passed


def test_perturb_gamma_scales_one_state():
    """Only the chosen row moves and it stays inside the bounds."""
    gamma = GammaFamily.constant(LATTICE, GRID, BOUNDS, 1.9)

    perturbed = perturb_gamma(gamma, 0.0, 1.1)

    np.testing.assert_allclose(perturbed.row(0), 2.0)
    np.testing.assert_allclose(perturbed.row(1), 1.9)


def test_unconditional_gamma_uses_the_mean_path():
    """Every state gets E[η_t]; models without a closed form are refused."""
    model = EtaModel(
        spec=RandomConstantEta(values=(1.0, 2.0), weights=(0.25, 0.75)),
        bounds=BOUNDS,
        grid=GRID,
    )
    diffusion = EtaModel(spec=ClampedDiffusionEta(), bounds=BOUNDS, grid=GRID)

    gamma = unconditional_gamma(model, LATTICE)

    np.testing.assert_allclose(gamma.table, 1.75)
    with pytest.raises(ValueError):
        unconditional_gamma(diffusion, LATTICE)


def test_scale_intensity_widens_the_bounds():
    """Doubling λ ≡ 1.5 needs an upper bound of at least 3."""
    lam = IntensitySpec.constant(LATTICE, GRID, BOUNDS, 1.5)

    doubled = scale_intensity(lam, 2.0)

    np.testing.assert_allclose(doubled.table, 3.0)
    assert doubled.bounds.U == 4.0
    with pytest.raises(ValueError):
        scale_intensity(lam, 0.0)


@pytest.mark.slow
def test_power_checks_detect_corrupted_inputs():
    """Raising γ_0 and doubling λ both break the projection check."""
    # Arrange
    spec = TwoStateMarkovEta(low=1.0, high=2.0, rate_up=1.0, rate_down=1.0)
    problem = counting_problem(spec, mc_paths=4000, seed=2)
    solution = solve_all_levels(problem, tol=1e-6)
    ensemble = simulate_paths(
        problem.eta_model, solution.gamma, LAM, NU, 4000, seed=2
    )

    # Act
    reports = {
        report.name: report
        for report in power_checks(problem, solution, ensemble, [1.0], [0.5, 1.0])
    }

    # Assert
    assert set(reports) == {
        "power_perturbed_gamma",
        "power_wrong_gamma",
        "power_unconditional_gamma",
        "power_scaled_intensity",
    }
    assert reports["power_perturbed_gamma"].passed
    assert reports["power_wrong_gamma"].passed
    assert reports["power_scaled_intensity"].passed


@pytest.mark.slow
def test_nonuniqueness_demo_separates_the_two_processes():
    """The coupled process ties its first clock to η's driver; Cox does not."""
    report, cdf = nonuniqueness_demo(
        n_paths=2000, seed=3, n_steps=16, mc_paths=2000, tol=1e-4
    )

    assert report.statistic > 0.9
    assert report.statistic >= report.threshold
    assert report.conditions["coupled_first_arrival_exp1"]
    assert list(cdf.columns) == ["t", "cox", "coupled", "exp1"]
    assert cdf["exp1"].iloc[-1] == pytest.approx(1 - np.exp(-1.0))
