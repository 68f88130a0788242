"""Generalized Bloch vectors: stereographic images of the coset chart.

A real four-component chart maps onto a unit vector on the four-sphere;
the full complex chart plus its accumulated phase maps onto six complex
components obeying two quadratic constraints (vanishing square sum, fixed
modulus sum), i.e. a pair of orthonormal real 6-vectors.  Either way the
nonlinear chart flow becomes the linear rotation m' = 2 F m, so conserved
quantities are exact and trajectories are cheap to audit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import AntipodeError, DegenerateChartError, DimensionError, ValidationError
from .generators import AntisymmetricCoeffs, coeffs_from_hamiltonian
from .schedule import ConstantLaw, HamiltonianSchedule
from .stepper import IntegratorConfig, integrate_adaptive

__all__ = [
    "TAU_CONSTRAINT",
    "MVector",
    "m_from_z_so5",
    "m_from_z_su4",
    "z_from_m",
    "bloch_rhs",
    "propagate_bloch",
    "stiefel_residuals",
    "phase_stripped_distance",
    "BlochTrajectory",
]

TAU_CONSTRAINT = 1e-8  # acceptance tolerance for externally supplied vectors


@dataclass(frozen=True)
class MVector:
    """Bloch-type vector: five real components (four-sphere variant) or six
    complex components plus the chart phase (full two-qubit variant).

    The phase is carried explicitly so the inverse stereographic map is a
    true inverse; comparisons modulo a global phase go through
    :func:`phase_stripped_distance`.
    """

    components: np.ndarray
    phase: float | None = None

    def __post_init__(self):
        c = np.asarray(self.components)
        if c.shape == (5,):
            c = np.asarray(c, dtype=float)
        elif c.shape == (6,):
            c = np.asarray(c, dtype=complex)
        else:
            raise DimensionError(f"expected 5 or 6 components, got shape {c.shape}")
        object.__setattr__(self, "components", c)
        c.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.components.shape[0]

    @property
    def is_sphere(self) -> bool:
        return self.dim == 5

    def residuals(self) -> tuple[float, float]:
        if self.is_sphere:
            return abs(float(np.sum(self.components**2)) - 1.0), 0.0
        return stiefel_residuals(self)

    def validate(self, tol: float = TAU_CONSTRAINT) -> "MVector":
        r1, r2 = self.residuals()
        if r1 > tol or r2 > tol:
            raise ValidationError("vector violates its constraint set", max(r1, r2))
        return self

    @classmethod
    def sphere_origin(cls) -> "MVector":
        return cls(np.array([0.0, 0.0, 0.0, 0.0, 1.0]))

    @classmethod
    def chart_origin(cls) -> "MVector":
        return cls(np.array([0, 0, 0, 0, 1.0, -1.0j]), phase=0.0)


def m_from_z_so5(zvec) -> MVector:
    """Inverse stereographic map of four real chart components onto the
    four-sphere: m_mu = -2 z_mu / (1 + z^2), m_5 = (1 - z^2) / (1 + z^2)."""
    z = np.asarray(zvec, dtype=float)
    if z.shape != (4,):
        raise DimensionError("expected four real chart components")
    zsq = float(np.sum(z * z))
    scale = 1.0 + zsq
    return MVector(np.concatenate([-2.0 * z / scale, [(1.0 - zsq) / scale]]))


def m_from_z_su4(zvec, phi: float, tau: float = 1e-12) -> MVector:
    """Six complex components from the complex chart and its phase.

    The normalization D = sqrt(1 + 2 sum|z|^2 + |sum z^2|^2) never drops
    below one for finite charts; the degenerate branch is kept as a guard.
    """
    z = np.asarray(zvec, dtype=complex)
    if z.shape != (4,):
        raise DimensionError("expected four complex chart components")
    zsq = complex(np.sum(z * z))
    d2 = 1.0 + 2.0 * float(np.sum(np.abs(z) ** 2)) + abs(zsq) ** 2
    if not np.isfinite(d2) or d2 <= tau:
        raise DegenerateChartError(f"normalization degenerate (D^2 = {d2:.3e})")
    denom = np.sqrt(d2) * np.exp(1j * phi)
    comps = np.concatenate([-2.0 * z, [1.0 - zsq, -1j * (1.0 + zsq)]]) / denom
    return MVector(comps, phase=float(phi))


def z_from_m(m: MVector, tol: float = TAU_CONSTRAINT) -> tuple[np.ndarray, float]:
    """Invert the stereographic maps; returns (chart components, phase).

    The sphere variant excludes its antipode m_5 = -1; the full variant
    excludes m_5 + i m_6 = 0 (both are the chart's point at infinity).
    """
    m.validate(tol)
    c = m.components
    if m.is_sphere:
        denom = 1.0 + float(c[4])
        if abs(denom) < 1e-12:
            raise AntipodeError("chart inverse undefined at the antipodal point m5 = -1")
        return np.asarray(-c[:4] / denom, dtype=float), 0.0
    denom = complex(c[4] + 1j * c[5])
    if abs(denom) < 1e-12:
        raise AntipodeError("chart inverse undefined where m5 + i m6 vanishes")
    phi = float(-np.angle(denom))
    return -c[:4] / denom, phi


def bloch_rhs(m: MVector, F: AntisymmetricCoeffs) -> np.ndarray:
    """Linear rotation flow m' = 2 F m (dimension 5 or 6)."""
    if F.dim != m.dim:
        if F.dim == 6 and m.dim == 5:
            F = F.restrict(5)
        elif F.dim == 5 and m.dim == 6:
            F = F.embed(6)
        else:
            raise DimensionError(f"coefficient dim {F.dim} vs vector dim {m.dim}")
    return 2.0 * (F.matrix @ m.components)


def stiefel_residuals(m: MVector) -> tuple[float, float]:
    """(|sum m^2|, |sum |m|^2 - 2|): both vanish on the constraint manifold."""
    c = np.asarray(m.components if isinstance(m, MVector) else m, dtype=complex)
    if c.shape != (6,):
        raise DimensionError("constraint residuals are defined for six components")
    return abs(complex(np.sum(c * c))), abs(float(np.sum(np.abs(c) ** 2)) - 2.0)


def phase_stripped_distance(m1, m2) -> float:
    """Distance minimized over a global phase: the quotient-manifold view.

    The optimal phase is the argument of the inner product; evaluating the
    rotated difference directly keeps the result meaningful down to
    round-off (the square-root form loses half the digits).
    """
    a = np.asarray(m1.components if isinstance(m1, MVector) else m1, dtype=complex)
    b = np.asarray(m2.components if isinstance(m2, MVector) else m2, dtype=complex)
    if a.shape != b.shape:
        raise DimensionError("vectors must share a dimension")
    overlap = complex(np.vdot(a, b))
    if abs(overlap) < 1e-300:
        return float(np.linalg.norm(a - b))
    phase = overlap.conjugate() / abs(overlap)
    return float(np.linalg.norm(a - phase * b))


@dataclass(frozen=True)
class BlochTrajectory:
    times: np.ndarray
    values: np.ndarray  # (T, 5) real or (T, 6) complex

    def vector_at(self, k: int) -> MVector:
        return MVector(self.values[k])


def _seg_coeffs(schedule: HamiltonianSchedule, seg, t: float, dim: int) -> AntisymmetricCoeffs:
    value = seg.law(t)
    if isinstance(value, AntisymmetricCoeffs):
        F = value if value.dim == 6 else value.embed(6)
    else:
        if schedule.n_levels != 4 or not schedule.hermitian:
            raise ValidationError(
                "schedule is not expressible in antisymmetric-coefficient form"
            )
        H = np.asarray(value, dtype=complex)
        F = coeffs_from_hamiltonian(H - np.trace(H) / 4.0 * np.eye(4))
    if dim == 5:
        F = F.restrict(5, tol=1e-12)
    return F


def propagate_bloch(
    schedule: HamiltonianSchedule,
    m0: MVector,
    grid,
    cfg: IntegratorConfig | None = None,
) -> BlochTrajectory:
    """Propagate the linear rotation flow on the output grid.

    Constant segments apply the exact orthogonal exponential of 2 F, so
    their constraint conservation is exact; time-dependent segments use
    the shared adaptive pair, with tight default tolerances (the flow is
    six-dimensional and linear, so accuracy is nearly free and constraint
    drift stays at round-off scale over long horizons).  The
    five-component variant requires the schedule to stay inside the
    index-1..5 coefficient planes.
    """
    if cfg is None:
        cfg = IntegratorConfig(rtol=1e-12, atol=1e-14)
    m0.validate()
    dim = m0.dim
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValidationError("output grid must be non-empty, increasing, non-negative")
    total = schedule.total_duration
    if grid[-1] > total * (1 + 1e-12) + 1e-12:
        raise ValidationError(f"grid extends past the schedule span {total}")

    dtype = float if dim == 5 else complex
    out = np.empty((grid.size, dim), dtype=dtype)
    gi = 0
    while gi < grid.size and grid[gi] <= 1e-15:
        out[gi] = m0.components
        gi += 1

    y = np.asarray(m0.components, dtype=complex)
    edges = schedule.boundaries()
    for si, seg in enumerate(schedule.segments):
        if gi >= grid.size:
            break
        a, b = float(edges[si]), float(edges[si + 1])
        local = [float(t) for t in grid[gi:] if t <= b + 1e-12 * max(1.0, b)]
        if isinstance(seg.law, ConstantLaw):
            twoF = 2.0 * _seg_coeffs(schedule, seg, a, dim).matrix
            for t in local:
                out[gi] = _cast(scipy.linalg.expm(twoF * (t - a)) @ y, dtype)
                gi += 1
            y = scipy.linalg.expm(twoF * (b - a)) @ y
        else:
            def rhs(t, yy):
                F = _seg_coeffs(schedule, seg, t, dim)
                return 2.0 * (F.matrix @ yy)

            pts = local + ([b] if (not local or local[-1] < b - 1e-12) else [])
            result = integrate_adaptive(rhs, (a, b), y, cfg, np.array(pts))
            for k in range(len(local)):
                out[gi] = _cast(result.states[k], dtype)
                gi += 1
            y = result.states[-1]
    while gi < grid.size:
        out[gi] = _cast(y, dtype)
        gi += 1
    return BlochTrajectory(times=grid.copy(), values=out)


def _cast(vec, dtype):
    if dtype is float:
        return np.real(vec)
    return vec
