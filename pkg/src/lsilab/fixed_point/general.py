"""
Coupled fixed point for general discrete jump laws.

The event {X_{t-} = x} splits over the words a of atoms whose partial sums end
at x. For a word the jump times are "frozen": τ^a_i is the first time the
integrated intensity at the state S_{i-1}(a) reaches the clock E_i, so prefix
times are shared by every word with that prefix. Φ is therefore estimated by a
depth-first walk over the word trie that carries, per node, only the samples
whose prefix still jumps before T.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from ..core import (
    DIAGNOSTIC_STREAM,
    Bounds,
    GridFunction,
    JumpDistribution,
    RngStream,
    StateLattice,
    TimeGrid,
)
from ..cox import GammaFamily, IntensitySpec, cumulative_rates, first_passage
from ..cox import integrated_at
from ..eta import (
    HOLDER_MIN_SEPARATION,
    EtaModel,
    EtaPath,
    holder_constant_estimate,
)
from ..exceptions import InsufficientMassError, NonConvergenceError, WordBudgetError
from .common import (
    FpSolution,
    SampleSet,
    check_sample_budget,
    contraction_factor,
    draw_samples,
    leverage_from_fg,
    weighted_residual,
)
from .counting import word_terms

logger = logging.getLogger(__name__)

DEFAULT_WORD_CAP = 1_000_000
# Largest mean change of η over the shortest tested lag, as a fraction of U - L.
HOLDER_SPREAD_FRACTION = 0.5


@dataclass(eq=False)
class GeneralFpProblem:
    eta_model: EtaModel
    nu: JumpDistribution
    lam: IntensitySpec
    lattice: StateLattice
    grid: TimeGrid
    mc_paths: int
    damping: float = 0.5
    seed: int = 0
    word_cap: int = DEFAULT_WORD_CAP
    weight_rate: Optional[float] = None
    strict_mass: bool = False
    _samples: Optional[SampleSet] = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        check_sample_budget(self.mc_paths)
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if tuple(self.lattice.atoms) != tuple(self.nu.atoms):
            raise ValueError("the lattice was not built from this jump law")
        if not np.array_equal(self.lam.lattice.states, self.lattice.states):
            raise ValueError("λ must be tabulated on the problem's lattice")
        if self.eta_model.bounds != self.lam.bounds:
            raise ValueError("η and λ must share the same bounds")
        if self.eta_model.grid != self.grid or self.lam.grid != self.grid:
            raise ValueError("η, λ and the problem must share the same grid")

    @property
    def bounds(self) -> Bounds:
        return self.eta_model.bounds

    @property
    def max_jumps(self) -> int:
        return self.lattice.max_jumps

    @property
    def rate(self) -> float:
        if self.weight_rate is not None:
            return self.weight_rate
        return 2.0 * self.bounds.contraction_constant(self.grid.horizon)

    @property
    def samples(self) -> SampleSet:
        if self._samples is None:
            self._samples = draw_samples(
                self.eta_model, self.mc_paths, self.max_jumps + 1, self.seed
            )
        return self._samples


@dataclass(frozen=True, eq=False)
class FrozenWordTimes:
    """Frozen jump times of one word: times[0] = 0, then τ^a_1..τ^a_{k+1}."""

    word: Tuple[float, ...]
    times: np.ndarray

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float, copy=True)
        if times.shape != (len(self.word) + 2,) or times[0] != 0.0:
            raise ValueError("need times 0 = τ_0, τ_1, ..., τ_{k+1}")
        finite = times[np.isfinite(times)]
        if np.any(np.diff(finite) <= 0.0) or not np.all(
            np.isfinite(times[: finite.size])
        ):
            raise ValueError("frozen times must increase until the first inf")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)


def word_states(word: Sequence[float], lattice: StateLattice) -> List[int]:
    """Ordinals S_0(a) = 0, S_1(a), ..., S_k(a) of the partial sums of a word."""
    atoms = list(lattice.atoms)
    ordinals = [lattice.locate(0.0)]
    for atom in word:
        matches = [j for j, a in enumerate(atoms) if abs(a - atom) <= 1e-12]
        if not matches:
            raise ValueError(f"{atom} is not an atom of the jump law")
        nxt = int(lattice.successors[ordinals[-1], matches[0]])
        if nxt < 0:
            raise ValueError(f"word {tuple(word)} leaves the lattice")
        ordinals.append(nxt)
    return ordinals


def frozen_word_times(
    word: Sequence[float],
    gamma: GammaFamily,
    eta_values: np.ndarray,
    clocks: np.ndarray,
    lam: IntensitySpec,
) -> FrozenWordTimes:
    """τ^a_i for one η path, using clock E_i at the state S_{i-1}(a)."""
    grid, lattice = gamma.grid, gamma.lattice
    ordinals = word_states(word, lattice)
    if len(clocks) < len(word) + 1:
        raise ValueError(f"need {len(word) + 1} clocks, got {len(clocks)}")
    times = [0.0]
    tau = np.zeros(1)
    for i, ordinal in enumerate(ordinals):
        rates = (eta_values * lam.row(ordinal) / gamma.row(ordinal))[None, :]
        cum = cumulative_rates(rates, grid)
        tau = first_passage(cum, rates, grid, tau, np.array([clocks[i]]))
        times.append(float(tau[0]))
    return FrozenWordTimes(tuple(float(a) for a in word), np.asarray(times))


def count_words(lattice: StateLattice, nu: JumpDistribution, K: int) -> np.ndarray:
    """counts[k, ordinal]: number of words of length k whose sum is that state."""
    counts = np.zeros((K + 1, lattice.size))
    counts[0, lattice.locate(0.0)] = 1.0
    for k in range(K):
        for j in range(len(nu.atoms)):
            targets = lattice.successors[:, j]
            inside = targets >= 0
            np.add.at(counts[k + 1], targets[inside], counts[k, inside])
    return counts


def _check_word_budget(
    lattice: StateLattice, nu: JumpDistribution, K: int, cap: int
) -> np.ndarray:
    counts = count_words(lattice, nu, K)
    totals = counts.sum(axis=0)
    if totals.max() > cap:
        over = {
            float(lattice.states[i]): int(totals[i])
            for i in np.flatnonzero(totals > cap)
        }
        raise WordBudgetError(over, cap)
    return counts


def _reachable_within(lattice: StateLattice, target: int, K: int) -> np.ndarray:
    """reach[r, ordinal]: some word of length at most r leads from ordinal to target."""
    reach = np.zeros((K + 1, lattice.size), dtype=bool)
    reach[0, target] = True
    for r in range(1, K + 1):
        step = np.zeros(lattice.size, dtype=bool)
        for j in range(lattice.successors.shape[1]):
            targets = lattice.successors[:, j]
            inside = targets >= 0
            step[inside] |= reach[r - 1, targets[inside]]
        reach[r] = reach[r - 1] | step
    return reach


def enumerate_words(
    x: float,
    lattice: StateLattice,
    nu: JumpDistribution,
    K: int,
    cap: int = DEFAULT_WORD_CAP,
) -> List[Tuple[Tuple[float, ...], float]]:
    """Every word of length at most K summing to x, with its probability weight."""
    target = lattice.locate(x)
    total = int(count_words(lattice, nu, K)[:, target].sum())
    if total > cap:
        raise WordBudgetError({float(lattice.states[target]): total}, cap)
    reach = _reachable_within(lattice, target, K)
    words: List[Tuple[Tuple[float, ...], float]] = []

    def visit(ordinal: int, prefix: Tuple[float, ...], weight: float) -> None:
        if ordinal == target:
            words.append((prefix, weight))
        remaining = K - len(prefix)
        if remaining == 0:
            return
        for j, (atom, p) in enumerate(zip(nu.atoms, nu.probs)):
            nxt = int(lattice.successors[ordinal, j])
            if nxt >= 0 and reach[remaining - 1, nxt]:
                visit(nxt, prefix + (atom,), weight * p)

    visit(lattice.locate(0.0), (), 1.0)
    return words


@dataclass
class _TrieTotals:
    f: np.ndarray
    g: np.ndarray
    visited: Dict[Tuple[int, int], int]


def _walk_words(
    gamma_table: np.ndarray,
    samples: SampleSet,
    lam: IntensitySpec,
    nu: JumpDistribution,
    lattice: StateLattice,
    K: int,
    targets: Optional[Set[int]] = None,
) -> _TrieTotals:
    """
    Sums over samples and words of Π p_a·η_t·1{τ^a_k < t}·exp(-∫ ...) per
    target state. Samples whose prefix has not jumped before T are dropped from
    the subtree, and subtrees that cannot reach a target are skipped.
    """
    grid = samples.grid
    f = np.zeros((lattice.size, grid.n_steps))
    g = np.zeros_like(f)
    visited: Dict[Tuple[int, int], int] = {}
    ratios = lam.table / gamma_table
    if targets is None:
        reach = None
    else:
        reach = np.zeros((K + 1, lattice.size), dtype=bool)
        for target in targets:
            reach |= _reachable_within(lattice, target, K)

    def visit(
        ordinal: int, depth: int, weight: float, active: np.ndarray, tau: np.ndarray
    ) -> None:
        eta = samples.eta[active]
        f_sum, g_sum, cum, rates = word_terms(tau, eta, ratios[ordinal], grid)
        key = (ordinal, depth)
        visited[key] = visited.get(key, 0) + int(active.size)
        if targets is None or ordinal in targets:
            f[ordinal] += weight * f_sum
            g[ordinal] += weight * g_sum
        if depth == K:
            return
        clocks = samples.clocks[active, depth]
        passage = first_passage(cum, rates, grid, tau, clocks)
        jumped = np.isfinite(passage)
        if not jumped.any():
            return
        next_active, next_tau = active[jumped], passage[jumped]
        for j, p in enumerate(nu.probs):
            nxt = int(lattice.successors[ordinal, j])
            if nxt < 0:
                continue
            if reach is not None and not reach[K - depth - 1, nxt]:
                continue
            visit(nxt, depth + 1, weight * p, next_active, next_tau)

    everyone = np.arange(samples.size)
    visit(lattice.locate(0.0), 0, 1.0, everyone, np.zeros(samples.size))
    return _TrieTotals(f / samples.size, g / samples.size, visited)


def estimate_fg_general(
    x_n: float,
    gamma: GammaFamily,
    samples: SampleSet,
    lam: IntensitySpec,
    nu: JumpDistribution,
    word_cap: int = DEFAULT_WORD_CAP,
) -> Tuple[GridFunction, GridFunction]:
    """Monte Carlo numerator and denominator of Φ(γ)_{x_n} over all words to x_n."""
    lattice = gamma.lattice
    target = lattice.locate(x_n)
    _check_word_budget(lattice, nu, lattice.max_jumps, word_cap)
    if samples.clocks.shape[1] < lattice.max_jumps + 1:
        raise ValueError(f"samples need {lattice.max_jumps + 1} clocks each")
    totals = _walk_words(
        np.asarray(gamma.table), samples, lam, nu, lattice, lattice.max_jumps, {target}
    )
    return GridFunction(samples.grid, totals.f[target]), GridFunction(
        samples.grid, totals.g[target]
    )


def word_fg(
    x_n: float,
    word: Sequence[float],
    gamma: GammaFamily,
    samples: SampleSet,
    lam: IntensitySpec,
    t: float,
) -> Tuple[float, float]:
    """
    Monte Carlo E[η_t 1{τ^a_k < t} exp(-∫_{τ^a_k}^t ...)] for a single word
    (without its probability weight), and the standard error of the mean.
    """
    grid, lattice = samples.grid, gamma.lattice
    ordinals = word_states(word, lattice)
    if ordinals[-1] != lattice.locate(x_n):
        raise ValueError(f"word {tuple(word)} does not sum to {x_n}")
    tau = np.zeros(samples.size)
    for i, ordinal in enumerate(ordinals[:-1]):
        rates = samples.eta * (lam.row(ordinal) / gamma.row(ordinal))[None, :]
        cum = cumulative_rates(rates, grid)
        tau = first_passage(cum, rates, grid, tau, samples.clocks[:, i])
    last = ordinals[-1]
    rates = samples.eta * (lam.row(last) / gamma.row(last))[None, :]
    cum = cumulative_rates(rates, grid)
    at_t = integrated_at(cum, rates, grid, np.full(samples.size, t))
    at_tau = integrated_at(cum, rates, grid, tau)
    cell = grid.left_cell(t)
    with np.errstate(over="ignore", invalid="ignore"):
        values = np.where(
            tau < t, samples.eta[:, cell] * np.exp(-(at_t - at_tau)), 0.0
        )
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(samples.size))


def _fill_unresolved(
    proposal: np.ndarray, resolved: np.ndarray, lattice: StateLattice
) -> List[int]:
    """Copy the parent's row into states without mass, shallowest first."""
    missing = []
    for ordinal in np.argsort(lattice.depth, kind="stable"):
        if resolved[ordinal]:
            continue
        parent = int(lattice.parent[ordinal])
        if parent < 0:
            parent = lattice.locate(0.0)
        proposal[ordinal] = proposal[parent]
        missing.append(int(ordinal))
    return missing


def _word_stats_frame(
    counts: np.ndarray, visited: Dict[Tuple[int, int], int], lattice: StateLattice
) -> pd.DataFrame:
    rows = []
    for length in range(counts.shape[0]):
        for ordinal in lattice.value_order():
            if counts[length, ordinal] > 0:
                rows.append(
                    {
                        "state": float(lattice.states[ordinal]),
                        "length": length,
                        "words": int(counts[length, ordinal]),
                        "visited": visited.get((int(ordinal), length), 0),
                    }
                )
    return pd.DataFrame(rows, columns=["state", "length", "words", "visited"])


def _initial_table(
    problem: GeneralFpProblem, initial: Union[None, float, GammaFamily]
) -> np.ndarray:
    shape = (problem.lattice.size, problem.grid.n_steps)
    if initial is None:
        return np.full(shape, problem.bounds.midpoint)
    if isinstance(initial, GammaFamily):
        return np.array(initial.table, copy=True)
    return np.full(shape, float(initial))


def solve_system(
    problem: GeneralFpProblem,
    tol: float = 1e-4,
    max_iter: int = 60,
    initial: Union[None, float, GammaFamily] = None,
) -> FpSolution:
    """
    Damped simultaneous iteration γ ← (1-θ)γ + θ·clamp(Φ(γ)) over every
    lattice state at once, on common random numbers.

    Stops once the largest sup residual and the largest weighted residual over
    the states are both below `tol`. Convergence is not guaranteed; on failure
    the error carries the per-iteration residuals and the best iterate.
    """
    lattice, grid, bounds = problem.lattice, problem.grid, problem.bounds
    K = problem.max_jumps
    counts = _check_word_budget(lattice, problem.nu, K, problem.word_cap)
    samples = problem.samples
    theta = problem.damping

    current = _initial_table(problem, initial)
    history: List[np.ndarray] = []
    best, best_residual = current, np.inf
    clamp = 0.0
    missing: List[int] = []
    totals = None
    for iteration in range(1, max_iter + 1):
        totals = _walk_words(current, samples, problem.lam, problem.nu, lattice, K)
        proposal = np.empty_like(current)
        resolved = np.zeros(lattice.size, dtype=bool)
        clamp = 0.0
        for ordinal in range(lattice.size):
            state = float(lattice.states[ordinal])
            if not (totals.g[ordinal] > 0.0).any() and not problem.strict_mass:
                continue
            proposal[ordinal], distance = leverage_from_fg(
                totals.f[ordinal], totals.g[ordinal], bounds, grid, state
            )
            resolved[ordinal] = True
            clamp = max(clamp, distance)
        if not resolved[lattice.locate(0.0)]:
            raise InsufficientMassError(0.0, float(grid.horizon))
        missing = _fill_unresolved(proposal, resolved, lattice)

        updated = (1.0 - theta) * current + theta * proposal
        per_state = np.array(
            [weighted_residual(row, grid, problem.rate) for row in updated - current]
        )
        history.append(per_state)
        sup, weighted = per_state.max(axis=0)
        logger.debug(
            "iteration %d: max residual %.3e (weighted %.3e), %d states without mass",
            iteration,
            sup,
            weighted,
            len(missing),
        )
        current = updated
        if sup < best_residual:
            best, best_residual = updated, sup
        if sup <= tol and weighted <= tol:
            break
    else:
        trace = [float(h[:, 0].max()) for h in history]
        raise NonConvergenceError(
            f"damped iteration did not reach tol={tol:g} in {max_iter} iterations "
            f"(last residual {trace[-1]:.3e})",
            trace,
            best_iterate=best,
            solution=FpSolution(
                gamma=GammaFamily(lattice, grid, bounds, best),
                residuals=history[-1][:, 0],
                iterations=np.full(lattice.size, max_iter, dtype=np.int64),
                traces=_per_state_traces(history),
            ),
        )

    if missing:
        logger.warning(
            "states %s have no sample mass before T; their leverage copies the "
            "parent state",
            [float(lattice.states[i]) for i in missing],
        )
    if clamp > 0.0:
        logger.warning("clamping moved Φ by up to %.3g in the last iteration", clamp)
    traces = _per_state_traces(history)
    n_iter = len(history) - 1
    logger.info(
        "System with %d states solved in %d iterations (residual %.2e)",
        lattice.size,
        n_iter,
        history[-1][:, 0].max(),
    )
    return FpSolution(
        gamma=GammaFamily(lattice, grid, bounds, current),
        residuals=history[-1][:, 0],
        iterations=np.full(lattice.size, n_iter, dtype=np.int64),
        traces=traces,
        clamp_distance=clamp,
        occupancy=None if totals is None else totals.g,
        unresolved_states=tuple(missing),
        contraction_factors=np.array(
            [contraction_factor(trace[:, 0]) for _, trace in sorted(traces.items())]
        ),
        mc_paths=problem.mc_paths,
        word_stats=_word_stats_frame(
            counts, {} if totals is None else totals.visited, lattice
        ),
    )


def _per_state_traces(history: List[np.ndarray]) -> Dict[int, np.ndarray]:
    stacked = np.stack(history)
    return {ordinal: stacked[:, ordinal, :] for ordinal in range(stacked.shape[1])}


def solve_with_restarts(
    problem: GeneralFpProblem, tol: float = 1e-4, max_iter: int = 60
) -> FpSolution:
    """
    Run `solve_system` from γ ≡ L, (L+U)/2 and U and keep the midpoint start.

    The largest disagreement between the converged starts is stored on the
    solution and logged when it exceeds `tol`; the runs are never averaged.
    """
    bounds = problem.bounds
    solutions: Dict[str, FpSolution] = {}
    for label, start in (
        ("lower", bounds.L),
        ("midpoint", bounds.midpoint),
        ("upper", bounds.U),
    ):
        try:
            solutions[label] = solve_system(problem, tol, max_iter, initial=start)
        except NonConvergenceError:
            if label == "midpoint":
                raise
            logger.warning("restart from the %s bound did not converge", label)
    kept = solutions["midpoint"]
    tables = [np.asarray(s.gamma.table) for s in solutions.values()]
    disagreement = max(
        (float(np.abs(a - b).max()) for a in tables for b in tables), default=0.0
    )
    if disagreement > tol:
        logger.warning(
            "restarts disagree by %.3g (> tol=%g) across %d converged starts",
            disagreement,
            tol,
            len(tables),
        )
    kept.restart_disagreement = disagreement
    return kept


def _stage_probability(
    stage_rates: np.ndarray, grid: TimeGrid, t: float
) -> float:
    """
    P(a pure-birth chain with per-stage rates (stages x cells) is in its last
    stage at time t), from exact per-cell matrix exponentials.
    """
    n_stages = stage_rates.shape[0]
    p = np.zeros(n_stages)
    p[0] = 1.0
    for i in range(grid.n_steps):
        start = grid.left_nodes[i]
        h = min(grid.step, t - start)
        if h <= 0.0:
            break
        rates = stage_rates[:, i]
        generator = np.diag(-rates) + np.diag(rates[:-1], k=1)
        p = p @ linalg.expm(generator * h)
    return float(p[-1])


def theta_xi_components(
    x_n: float,
    word: Sequence[float],
    gamma: GammaFamily,
    eta_values: np.ndarray,
    lam: IntensitySpec,
    t: float,
) -> Tuple[float, float]:
    """
    θ_t = exp(∫_t^T r) at the final state and the iterated integral ξ_t for one
    η path. Their product is the probability that the frozen chain has made
    exactly k jumps by t.
    """
    grid, lattice = gamma.grid, gamma.lattice
    ordinals = word_states(word, lattice)
    if ordinals[-1] != lattice.locate(x_n):
        raise ValueError(f"word {tuple(word)} does not sum to {x_n}")
    stage_rates = np.stack(
        [eta_values * lam.row(o) / gamma.row(o) for o in ordinals]
    )
    last = GridFunction(grid, stage_rates[-1])
    theta = float(np.exp(last.integral(t, grid.horizon)))
    in_stage = _stage_probability(stage_rates, grid, t)
    return theta, in_stage / theta


def theta_xi_oracle(
    x_n: float,
    word: Sequence[float],
    gamma: GammaFamily,
    eta: Union[EtaPath, EtaModel],
    lam: IntensitySpec,
    t: float,
) -> float:
    """
    Exact E[η_t θ_t ξ_t] for one word, for a deterministic η path or a model
    whose law is a finite mixture of deterministic paths. η_t is read as the
    left limit at t, matching the Monte Carlo estimators.
    """
    if isinstance(eta, EtaPath):
        branches = [(1.0, eta.values)]
    else:
        if not eta.is_finite_law:
            raise ValueError(f"{eta.kind} η has no finite law; use Monte Carlo")
        branches = eta.branches()
    grid = gamma.grid
    cell = grid.left_cell(t) if t > 0.0 else 0
    total = 0.0
    for weight, values in branches:
        theta, xi = theta_xi_components(x_n, word, gamma, values, lam, t)
        total += weight * values[cell] * theta * xi
    return total


def theta_xi_band(
    bounds: Bounds, horizon: float, k: int, t0: float
) -> Tuple[float, float]:
    """Lower and upper bounds on ξ_t for t in [t0, T] and words of length k."""
    lower = (
        bounds.rate_floor**k * np.exp(-bounds.rate_ceiling * horizon)
        * t0**k / math.factorial(k)
    )
    upper = (
        bounds.rate_ceiling**k * np.exp(-bounds.rate_floor * horizon)
        * horizon**k / math.factorial(k)
    )
    return float(lower), float(upper)


def default_holder_limit(eta_model: EtaModel) -> float:
    """Hölder limit used when the experiment does not set one."""
    spread = eta_model.bounds.U - eta_model.bounds.L
    lag = HOLDER_MIN_SEPARATION * eta_model.grid.horizon
    return HOLDER_SPREAD_FRACTION * spread / lag**eta_model.holder_exponent


def regularity_diagnostic(
    eta_model: EtaModel,
    seed: int,
    pairs: int = 200,
    limit: Optional[float] = None,
    n_paths: int = 2000,
) -> float:
    """
    Estimate the Hölder-in-mean constant of η. Raises when it exceeds `limit`,
    which disqualifies the model for the coupled solver.
    """
    estimate = holder_constant_estimate(
        eta_model, pairs, RngStream(seed, DIAGNOSTIC_STREAM), n_paths=n_paths
    )
    logger.info(
        "Hölder constant of %s η: %.4g (alpha=%.2f)",
        eta_model.kind,
        estimate,
        eta_model.holder_exponent,
    )
    if limit is not None and estimate > limit:
        raise ValueError(
            f"{eta_model.kind} η has Hölder constant {estimate:.4g} > {limit:g}"
        )
    return estimate
