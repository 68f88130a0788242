"""Plucker coordinates of the evolving two-plane spanned by the last two
operator columns.

Six quadratic combinations of an evolution operator identify the complex
two-plane of its third and fourth columns.  They satisfy one quadric
relation and one normalization, evolve linearly under a 6x6 Hermitian
image of the four-level Hamiltonian, and carry a symplectic pairing that
is conserved between co-evolving vectors.

Component conventions in this module are pinned jointly by three
requirements exercised in the tests: the 6x6 image must generate the same
flow as extraction from the propagated operator, the quadric must be the
plain anti-diagonal bilinear form, and the vector must match the linear
image of the Bloch 6-vector along trajectories.  (These requirements
leave no further sign or transpose freedom.)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .bloch import MVector
from .decompose import TAU_PD, ZChart
from .errors import ChartBreakdownError, DimensionError, ValidationError
from .schedule import ConstantLaw, HamiltonianSchedule, law_hamiltonian, make_traceless
from .stepper import IntegratorConfig, integrate_adaptive

__all__ = [
    "OMEGA",
    "symplectic_form",
    "PluckerVector",
    "plucker_from_unitary",
    "plucker_from_m",
    "m_from_plucker",
    "plucker_hamiltonian",
    "propagate_plucker",
    "symplectic_pairing",
    "z_from_unitary",
    "PluckerTrajectory",
]

TAU_UNIT = 1e-9          # orthonormality tolerance on the extracted columns
TAU_CONSTRAINT = 1e-8    # acceptance tolerance for external vectors

OMEGA = np.fliplr(np.eye(6))
OMEGA.setflags(write=False)


def symplectic_form() -> np.ndarray:
    """The anti-diagonal 6x6 form: symmetric, squares to the identity."""
    return OMEGA.copy()


@dataclass(frozen=True)
class PluckerVector:
    """Six complex components in the slot order (12, 13, 14, 23, 24, 34)
    of level pairs, with the sign convention that makes the quadric the
    plain anti-diagonal form: quadric = P^T Omega P / 2."""

    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=complex)
        if c.shape != (6,):
            raise DimensionError(f"expected six components, got {c.shape}")
        object.__setattr__(self, "components", c)
        c.setflags(write=False)

    def quadric_residual(self) -> float:
        c = self.components
        return abs(complex(c @ OMEGA @ c)) / 2.0

    def norm_residual(self) -> float:
        return abs(float(np.sum(np.abs(self.components) ** 2)) - 1.0)

    def validate(self, tol: float = TAU_CONSTRAINT) -> "PluckerVector":
        q, nr = self.quadric_residual(), self.norm_residual()
        if q > tol or nr > tol:
            raise ValidationError("vector violates the quadric/normalization", max(q, nr))
        return self

    @classmethod
    def origin(cls) -> "PluckerVector":
        """The vector of the identity operator's last two columns."""
        return cls(np.array([1j, 0, 0, 0, 0, 0], dtype=complex))


def _minors(W: np.ndarray) -> np.ndarray:
    """The six 2x2 minors of a 4x2 frame, row-pair order (12,13,14,23,24,34)."""
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    return np.array([W[k, 0] * W[l, 1] - W[l, 0] * W[k, 1] for k, l in pairs])


def plucker_from_unitary(U: np.ndarray, tol: float = TAU_UNIT) -> PluckerVector:
    """Extract the vector of the plane spanned by columns 3 and 4 of U.

    The columns must be orthonormal within `tol`.  Components combine the
    conjugated frame minors of the complementary row pairs with unit
    imaginary weight, e.g. the (12) slot is i times the conjugate (34)
    minor, so the identity maps to (i, 0, 0, 0, 0, 0).
    """
    U = np.asarray(U, dtype=complex)
    if U.shape != (4, 4):
        raise DimensionError(f"expected a 4x4 operator, got {U.shape}")
    W = U[:, 2:4]
    gram = W.conj().T @ W
    dev = float(np.linalg.norm(gram - np.eye(2)))
    if dev > tol:
        raise ValidationError("columns 3 and 4 are not orthonormal", dev)
    M = _minors(W).conj()
    return PluckerVector(1j * np.array([M[5], M[4], M[3], M[2], -M[1], M[0]]))


def plucker_from_m(m: MVector, tol: float = TAU_CONSTRAINT) -> PluckerVector:
    """Linear image of the Bloch 6-vector (antilinear in m: the plane
    components pair with the conjugated vector)."""
    if m.dim != 6:
        raise DimensionError("the plane map needs the six-component variant")
    m.validate(tol)
    c = m.components.conj()
    comps = 0.5 * np.array(
        [
            1j * c[4] + c[5],
            c[0] - 1j * c[1],
            c[2] + 1j * c[3],
            c[2] - 1j * c[3],
            c[0] + 1j * c[1],
            -1j * c[4] + c[5],
        ]
    )
    return PluckerVector(comps)


def m_from_plucker(P: PluckerVector, tol: float = TAU_CONSTRAINT) -> MVector:
    """Inverse of :func:`plucker_from_m` (the map is sqrt(1/2) times unitary)."""
    P.validate(tol)
    p = P.components
    mbar = np.array(
        [
            p[1] + p[4],
            1j * (p[1] - p[4]),
            p[2] + p[3],
            1j * (p[3] - p[2]),
            1j * (p[5] - p[0]),
            p[0] + p[5],
        ]
    )
    m = mbar.conj()
    denom = complex(m[4] + 1j * m[5])
    phase = float(-np.angle(denom)) if abs(denom) > 1e-12 else None
    return MVector(m, phase=phase)


def plucker_hamiltonian(H: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """The 6x6 Hermitian generator of the plane flow i P' = H_P P.

    Diagonal entries are the pair sums H_ii + H_jj; the off-diagonal
    pattern is forced by requiring extraction and direct propagation to
    produce the same trajectories (tested), which also makes H_P a
    symplectic generator: H_P Omega + Omega H_P^T = 0 for traceless H.
    """
    H = np.asarray(H, dtype=complex)
    if H.shape != (4, 4):
        raise DimensionError(f"expected a 4x4 Hamiltonian, got {H.shape}")
    if np.linalg.norm(H - H.conj().T) > tol * max(1.0, np.linalg.norm(H)):
        raise ValidationError("Hamiltonian is not Hermitian within tolerance")

    def e(a: int, b: int) -> complex:
        return H[a - 1, b - 1]

    return np.array(
        [
            [e(1,1)+e(2,2), -e(2,3),      e(2,4),       -e(1,3),       -e(1,4),       0],
            [-e(3,2),       e(1,1)+e(3,3), -e(3,4),     -e(1,2),       0,             e(1,4)],
            [e(4,2),        -e(4,3),      e(1,1)+e(4,4), 0,            e(1,2),        e(1,3)],
            [-e(3,1),       -e(2,1),      0,             e(2,2)+e(3,3), e(3,4),       -e(2,4)],
            [-e(4,1),       0,            e(2,1),        e(4,3),       e(2,2)+e(4,4), e(2,3)],
            [0,             e(4,1),       e(3,1),        -e(4,2),      e(3,2),        e(3,3)+e(4,4)],
        ],
        dtype=complex,
    )


@dataclass(frozen=True)
class PluckerTrajectory:
    times: np.ndarray
    values: np.ndarray  # (T, 6)

    def vector_at(self, k: int) -> PluckerVector:
        return PluckerVector(self.values[k])


def propagate_plucker(
    schedule: HamiltonianSchedule,
    P0: PluckerVector,
    grid,
    cfg: IntegratorConfig | None = None,
) -> PluckerTrajectory:
    """Propagate i P' = H_P P on the grid, starting from a valid vector.

    The trace of the sampled Hamiltonian is removed first (it contributes
    only an overall operator phase, and the plane is insensitive to it);
    constant segments use the exact exponential of the traceless image,
    and the adaptive default is tight because the linear flow costs
    nearly nothing.
    """
    if cfg is None:
        cfg = IntegratorConfig(rtol=1e-12, atol=1e-14)
    P0.validate()
    if not schedule.hermitian or schedule.n_levels != 4:
        raise ValidationError("plane propagation needs a Hermitian four-level schedule")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValidationError("output grid must be non-empty, increasing, non-negative")
    total = schedule.total_duration
    if grid[-1] > total * (1 + 1e-12) + 1e-12:
        raise ValidationError(f"grid extends past the schedule span {total}")

    def hp(seg, t: float) -> np.ndarray:
        H0, _ = make_traceless(law_hamiltonian(schedule, seg, t))
        return plucker_hamiltonian(H0)

    out = np.empty((grid.size, 6), dtype=complex)
    gi = 0
    while gi < grid.size and grid[gi] <= 1e-15:
        out[gi] = P0.components
        gi += 1

    y = P0.components.copy()
    edges = schedule.boundaries()
    for si, seg in enumerate(schedule.segments):
        if gi >= grid.size:
            break
        a, b = float(edges[si]), float(edges[si + 1])
        local = [float(t) for t in grid[gi:] if t <= b + 1e-12 * max(1.0, b)]
        if isinstance(seg.law, ConstantLaw):
            HP = hp(seg, a)
            w, Q = np.linalg.eigh(HP)
            for t in local:
                out[gi] = (Q * np.exp(-1j * w * (t - a))) @ (Q.conj().T @ y)
                gi += 1
            y = (Q * np.exp(-1j * w * (b - a))) @ (Q.conj().T @ y)
        else:
            def rhs(t, yy):
                return -1j * hp(seg, t) @ yy

            pts = local + ([b] if (not local or local[-1] < b - 1e-12) else [])
            result = integrate_adaptive(rhs, (a, b), y, cfg, np.array(pts))
            for k in range(len(local)):
                out[gi] = result.states[k]
                gi += 1
            y = result.states[-1]
    while gi < grid.size:
        out[gi] = y
        gi += 1
    return PluckerTrajectory(times=grid.copy(), values=out)


def symplectic_pairing(P1: PluckerVector, P2: PluckerVector) -> complex:
    """P1^T Omega P2: zero self-pairing on the quadric, conserved between
    co-evolving vectors; zero pairing means the two planes intersect."""
    return complex(P1.components @ OMEGA @ P2.components)


def z_from_unitary(U: np.ndarray, tau_pd: float = TAU_PD) -> ZChart:
    """Chart of the plane of columns 3 and 4: upper 2x2 times inverse lower 2x2.

    Singular lower minor means the plane lies outside the chart; that is
    exactly where the chart flow diverges.
    """
    U = np.asarray(U, dtype=complex)
    if U.shape != (4, 4):
        raise DimensionError(f"expected a 4x4 operator, got {U.shape}")
    top = U[:2, 2:4]
    bot = U[2:4, 2:4]
    det = complex(bot[0, 0] * bot[1, 1] - bot[0, 1] * bot[1, 0])
    if abs(det) <= tau_pd:
        raise ChartBreakdownError(
            f"lower minor singular (|det| = {abs(det):.3e}); plane outside the chart",
            time=float("nan"),
        )
    return ZChart(top @ np.linalg.inv(bot))
