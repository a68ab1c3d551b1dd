"""Domain errors raised by the solvers, the simulator and the harness."""

from typing import Any, Dict, Optional, Sequence

import numpy as np


class LatticeExitError(ValueError):
    """A simulated path left the truncated state lattice."""

    def __init__(self, message: str, partial_path: Any) -> None:
        super().__init__(message)
        self.partial_path = partial_path


class InsufficientMassError(ValueError):
    """No Monte Carlo sample reaches a state before some grid time."""

    def __init__(self, state: float, first_failing_time: float) -> None:
        super().__init__(
            f"no sample occupies state {state} at t={first_failing_time:.6g}; "
            "increase mc_paths or lower the lattice depth"
        )
        self.state = state
        self.first_failing_time = first_failing_time


class WordBudgetError(ValueError):
    """The number of jump words ending in some state exceeds the configured cap."""

    def __init__(self, counts: Dict[float, int], cap: int) -> None:
        worst = max(counts, key=lambda state: counts[state])
        super().__init__(
            f"{counts[worst]} words end in state {worst}, above the cap of {cap}"
        )
        self.counts = counts
        self.cap = cap


class NonConvergenceError(RuntimeError):
    """A fixed-point iteration hit max_iter before reaching its tolerance."""

    def __init__(
        self,
        message: str,
        residual_trace: Sequence[float],
        best_iterate: Optional[np.ndarray] = None,
        level: Optional[int] = None,
        solution: Any = None,
    ) -> None:
        super().__init__(message)
        self.residual_trace = list(residual_trace)
        self.best_iterate = best_iterate
        self.level = level
        self.solution = solution


class ProvenanceError(ValueError):
    """An artifact was produced by a different configuration."""

    def __init__(self, path: str, expected: str, found: Optional[str]) -> None:
        super().__init__(
            f"{path} was written by config {found or '<unknown>'}, "
            f"expected {expected}"
        )
        self.path = path
        self.expected = expected
        self.found = found


class InsufficientSamplesError(ValueError):
    """Too few paths or intervals for a statistical test."""

    def __init__(self, what: str, available: int, required: int) -> None:
        super().__init__(f"{what}: {available} available, at least {required} needed")
        self.available = available
        self.required = required


class MassLeakError(ValueError):
    """The forward equation lost more probability to truncation than allowed."""

    def __init__(self, time: float, leak: float, tolerance: float) -> None:
        super().__init__(
            f"lattice truncation leaks {leak:.3g} of the mass by t={time:.6g} "
            f"(tolerance {tolerance:.3g}); enlarge the lattice depth"
        )
        self.time = time
        self.leak = leak
        self.tolerance = tolerance
