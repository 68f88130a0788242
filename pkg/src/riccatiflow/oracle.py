"""Independent ground truth: direct integration of the evolution equation.

The decomposition engine is checked against straightforward column-wise
integration of i U' = H(t) U, with exact exponentials on constant
segments.  Nothing here shares state with the engine beyond the step
controller; the flows integrate different objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, ValidationError
from .schedule import ConstantLaw, HamiltonianSchedule, law_hamiltonian
from .stepper import IntegratorConfig, integrate_adaptive

__all__ = [
    "ORACLE_CONFIG",
    "DirectTrajectory",
    "matrix_exponential",
    "propagate_direct",
    "compare_unitaries",
]

# Tighter than the engine defaults so that oracle error never dominates a
# comparison; constant segments are exact either way.
ORACLE_CONFIG = IntegratorConfig(rtol=1e-12, atol=1e-14)

_HERM_TOL = 1e-12


def matrix_exponential(A: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(-i A t); eigendecomposition when A is Hermitian, Pade otherwise.

    The Hermitian path is unitary by construction.  The general path uses
    scaling-and-squaring on -i A t.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"matrix must be square, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix has non-finite entries")
    if np.linalg.norm(A - A.conj().T) <= _HERM_TOL * max(1.0, np.linalg.norm(A)):
        w, Q = np.linalg.eigh(A)
        return (Q * np.exp(-1j * w * t)) @ Q.conj().T
    return scipy.linalg.expm(-1j * t * A)


@dataclass(frozen=True)
class DirectTrajectory:
    times: np.ndarray
    operators: np.ndarray  # shape (T, N, N)

    def at(self, k: int) -> np.ndarray:
        return self.operators[k]


def propagate_direct(
    schedule: HamiltonianSchedule,
    grid,
    cfg: IntegratorConfig = ORACLE_CONFIG,
) -> DirectTrajectory:
    """Integrate i U' = H(t) U on the grid; U(0) = I.

    Constant segments use the exact exponential; time-dependent segments
    use the adaptive pair restarted at each segment boundary (samples stay
    one-sided, so discontinuous schedules integrate cleanly).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValidationError("output grid must be a non-empty 1-d array")
    if np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValidationError("output grid must be strictly increasing and non-negative")
    total = schedule.total_duration
    if grid[-1] > total * (1 + 1e-12) + 1e-12:
        raise ValidationError(f"grid extends past the schedule span {total}")

    N = schedule.n_levels
    out = np.empty((grid.size, N, N), dtype=complex)
    gi = 0
    while gi < grid.size and grid[gi] <= 1e-15:
        out[gi] = np.eye(N)
        gi += 1

    U = np.eye(N, dtype=complex)
    edges = schedule.boundaries()
    for si, seg in enumerate(schedule.segments):
        a, b = edges[si], edges[si + 1]
        if gi >= grid.size or a >= grid[-1] + 1e-15:
            break
        local = [float(t) for t in grid[gi:] if t <= b + 1e-12 * max(1.0, b)]
        if isinstance(seg.law, ConstantLaw):
            H = law_hamiltonian(schedule, seg, a)
            for t in local:
                out[gi] = matrix_exponential(H, t - a) @ U
                gi += 1
            U = matrix_exponential(H, b - a) @ U
        else:
            def rhs(t, y):
                return (-1j * law_hamiltonian(schedule, seg, t) @ y.reshape(N, N)).ravel()

            want = list(local)
            need_edge = not want or want[-1] < b - 1e-12
            pts = want + ([b] if need_edge else [])
            result = integrate_adaptive(rhs, (a, b), U.ravel(), cfg, np.array(pts))
            for k in range(len(want)):
                out[gi] = result.states[k].reshape(N, N)
                gi += 1
            U = result.states[-1].reshape(N, N)
    while gi < grid.size:
        out[gi] = U
        gi += 1
    return DirectTrajectory(times=grid.copy(), operators=out)


def compare_unitaries(U1: np.ndarray, U2: np.ndarray) -> tuple[float, float]:
    """(Frobenius distance, distance minimized over a global phase).

    The minimizing phase comes in closed form from Tr(U1^dag U2); the
    distance is then evaluated on the explicitly rotated difference, which
    avoids the catastrophic cancellation of the textbook square-root
    expression when the operators nearly coincide.
    """
    U1 = np.asarray(U1, dtype=complex)
    U2 = np.asarray(U2, dtype=complex)
    if U1.shape != U2.shape or U1.ndim != 2:
        raise DimensionError(f"shape mismatch {U1.shape} vs {U2.shape}")
    frob = float(np.linalg.norm(U1 - U2))
    overlap = complex(np.trace(U1.conj().T @ U2))
    if abs(overlap) < 1e-300:
        return frob, frob  # orthogonal: no phase helps
    phase = overlap.conjugate() / abs(overlap)
    return frob, float(np.linalg.norm(U1 - phase * U2))
