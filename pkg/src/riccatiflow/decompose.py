"""Core engine: evolution operators from the coset-chart flow.

The N-level evolution factorizes as a coupling factor built from a
rectangular chart matrix z, a gauge pair unitarizing it, and residual
block problems of sizes (N-n) and n that are solved by the same scheme
recursively (two-level problems integrate directly).  The chart obeys a
matrix Riccati equation

    i z' = H_top z + V - z (V^dag z + H_bot),

the gauge factors are gamma_1 = I + z z^dag and gamma_2 = I + z^dag z with
Hermitian square roots, and the residual problems evolve under explicitly
Hermitian effective Hamiltonians whose traces (equal and opposite) split
off into an inter-block phase.  A non-Hermitian variant keeps the
lower-left block independent and skips unitarization.

The chart covers only part of the group: trajectories can run off to
infinity in finite time while the evolution itself stays regular.  By
default that aborts with diagnostics; opting into chart recovery restarts
the flow on a block-swapped chart and chains the legs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ChartBreakdownError,
    DimensionError,
    DivergenceError,
    NearSingularGaugeError,
    ValidationError,
)
from .generators import AntisymmetricCoeffs, project_coeffs
from .schedule import (
    BlockPartition,
    ConstantLaw,
    HamiltonianSchedule,
    law_hamiltonian,
    make_traceless,
)
from .stepper import AbortIntegration, IntegratorConfig, integrate_adaptive

__all__ = [
    "Z_MAX_DEFAULT",
    "Z_SWITCH_DEFAULT",
    "TAU_PD",
    "ZChart",
    "GaugeFactors",
    "EvolutionRecord",
    "z_components",
    "z_matrix",
    "riccati_rhs",
    "so5_component_rhs",
    "su4_component_rhs",
    "phase_rate",
    "gamma_matrices",
    "hermitian_sqrt",
    "gauge_factors",
    "effective_hamiltonians",
    "assemble_unitary",
    "propagate_decomposed",
    "non_hermitian_propagate",
]

Z_MAX_DEFAULT = 1e6      # hard chart-singularity threshold on ||z||_F
Z_SWITCH_DEFAULT = 4.0   # rebase threshold when chart recovery is enabled
TAU_PD = 1e-12           # positive-definiteness floor for gauge factors
U_MAX_DEFAULT = 1e100    # norm overflow guard for non-unitary evolution

_SIGMA = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)


@dataclass(frozen=True)
class ZChart:
    """Coset chart state: z is (N-n) x n; w_dagger carried only when the
    evolution is non-unitary (otherwise it is determined by z)."""

    z: np.ndarray
    w_dagger: np.ndarray | None = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=complex)
        object.__setattr__(self, "z", z)
        if self.w_dagger is not None:
            wd = np.asarray(self.w_dagger, dtype=complex)
            if wd.shape != (z.shape[1], z.shape[0]):
                raise DimensionError(f"w_dagger shape {wd.shape} incompatible with z {z.shape}")
            object.__setattr__(self, "w_dagger", wd)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.z))

    def is_valid(self, z_max: float = Z_MAX_DEFAULT) -> bool:
        return bool(np.all(np.isfinite(self.z)) and self.norm <= z_max)

    @property
    def components(self) -> np.ndarray:
        """Quaternion components (z1, z2, z3, z4) of a 2x2 chart."""
        return z_components(self.z)

    def implied_w_dagger(self) -> np.ndarray:
        """Unitary-mode relation: w^dag = -(I + z^dag z)^{-1} z^dag."""
        z = self.z
        g2 = np.eye(z.shape[1], dtype=complex) + z.conj().T @ z
        return -np.linalg.solve(g2, z.conj().T)


def z_components(z: np.ndarray) -> np.ndarray:
    """(z1, z2, z3, z4) with z = z4 I - i (z1 s1 + z2 s2 + z3 s3)."""
    z = np.asarray(z, dtype=complex)
    if z.shape != (2, 2):
        raise DimensionError(f"component form needs a 2x2 chart, got {z.shape}")
    return np.array(
        [
            0.5j * (z[0, 1] + z[1, 0]),
            0.5 * (z[1, 0] - z[0, 1]),
            0.5j * (z[0, 0] - z[1, 1]),
            0.5 * (z[0, 0] + z[1, 1]),
        ]
    )


def z_matrix(components) -> np.ndarray:
    """Inverse of :func:`z_components`."""
    c = np.asarray(components, dtype=complex)
    if c.shape != (4,):
        raise DimensionError("expected four components (z1, z2, z3, z4)")
    out = c[3] * np.eye(2, dtype=complex)
    for k in range(3):
        out = out - 1j * c[k] * _SIGMA[k]
    return out


def riccati_rhs(z: np.ndarray, blocks: BlockPartition) -> np.ndarray:
    """dz/dt of the chart flow i z' = H_top z + V - z (Y^dag z + H_bot).

    The lower coupling block plays the role of Y^dag; in Hermitian mode it
    equals V^dag and this is the standard matrix Riccati flow.
    """
    z = np.asarray(z, dtype=complex)
    m, n = blocks.n_top, blocks.n_bottom
    if z.shape != (m, n):
        raise DimensionError(f"chart shape {z.shape} does not match split ({m},{n})")
    return -1j * (
        blocks.top @ z + blocks.coupling - z @ (blocks.lower_coupling @ z + blocks.bottom)
    )


def _coeff_vectors(F: AntisymmetricCoeffs):
    if F.dim == 5:
        F = F.embed(6)
    if F.dim != 6:
        raise DimensionError("component flows need 5x5 or 6x6 coefficients")
    M = F.matrix
    f4 = M[:4, :4]           # rotation part among the four chart components
    f5 = M[4, :4]            # row F[5, mu]
    f6 = M[5, :4]            # row F[6, mu]
    f65 = M[5, 4]
    return f4, f5, f6, f65


def so5_component_rhs(zvec, F: AntisymmetricCoeffs) -> np.ndarray:
    """Component form of the chart flow when no index-6 coefficient is active:
    z_mu' = F_5mu (1 - z^2) + 2 F_munu z_nu + 2 F_5nu z_nu z_mu, real-valued."""
    z = np.asarray(zvec, dtype=complex)
    f4, f5, f6, f65 = _coeff_vectors(F)
    if np.any(f6 != 0.0) or f65 != 0.0:
        raise ValidationError("index-6 coefficients active; use the full component flow")
    zsq = np.sum(z * z)
    return f5 * (1.0 - zsq) + 2.0 * (f4 @ z) + 2.0 * np.sum(f5 * z) * z


def su4_component_rhs(zvec, F: AntisymmetricCoeffs) -> np.ndarray:
    """Full component form of the chart flow for complex components."""
    z = np.asarray(zvec, dtype=complex)
    f4, f5, f6, f65 = _coeff_vectors(F)
    zsq = np.sum(z * z)
    return (
        f5 * (1.0 - zsq)
        - 1j * f6 * (1.0 + zsq)
        + 2.0 * (f4 @ z)
        + 2.0 * np.sum((f5 + 1j * f6) * z) * z
        - 2j * f65 * z
    )


def phase_rate(zvec_or_chart, F: AntisymmetricCoeffs) -> float:
    """Rate of the chart phase: -2 F_65 + i F_5mu (z*_mu - z_mu) + F_6mu (z*_mu + z_mu).

    Real by construction; only the rate is defined, the value is a gauge
    choice fixed to zero at t = 0.
    """
    if isinstance(zvec_or_chart, ZChart):
        z = zvec_or_chart.components
    else:
        z = np.asarray(zvec_or_chart, dtype=complex)
        if z.shape == (2, 2):
            z = z_components(z)
    _, f5, f6, f65 = _coeff_vectors(F)
    val = -2.0 * f65 + 1j * np.sum(f5 * (z.conj() - z)) + np.sum(f6 * (z.conj() + z))
    return float(val.real)


# --------------------------------------------------------------------------
# Gauge factors


def gamma_matrices(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """gamma_1 = I + z z^dag and gamma_2 = I + z^dag z (both Hermitian, >= 1)."""
    z = np.asarray(z, dtype=complex)
    m, n = z.shape
    return np.eye(m) + z @ z.conj().T, np.eye(n) + z.conj().T @ z


def hermitian_sqrt(gamma: np.ndarray, tau_pd: float = TAU_PD) -> np.ndarray:
    """Hermitian principal square root of a positive-definite matrix.

    2x2 inputs use the closed form for gamma = a I + b.sigma:
    sqrt = c I + (b.sigma) / (sqrt(a+|b|) + sqrt(a-|b|)) with
    c = (sqrt(a+|b|) + sqrt(a-|b|)) / 2, which is smooth through |b| = 0.
    Larger inputs use the eigendecomposition.
    """
    gamma = np.asarray(gamma, dtype=complex)
    if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1]:
        raise DimensionError(f"gauge factor must be square, got {gamma.shape}")
    herm = np.linalg.norm(gamma - gamma.conj().T)
    if herm > 1e-10 * max(1.0, np.linalg.norm(gamma)):
        raise ValidationError("gauge factor is not Hermitian", float(herm))
    if gamma.shape == (2, 2):
        a = 0.5 * np.trace(gamma).real
        bvec = np.array([0.5 * np.trace(gamma @ s).real for s in _SIGMA])
        b = float(np.linalg.norm(bvec))
        lo, hi = a - b, a + b
        if lo <= tau_pd:
            raise NearSingularGaugeError(
                f"gauge eigenvalue {lo:.3e} at or below the positivity floor {tau_pd:.1e}"
            )
        sp, sm = math.sqrt(hi), math.sqrt(lo)
        out = 0.5 * (sp + sm) * np.eye(2, dtype=complex)
        for k in range(3):
            out = out + (bvec[k] / (sp + sm)) * _SIGMA[k]
        return out
    w, Q = np.linalg.eigh(gamma)
    if w[0] <= tau_pd:
        raise NearSingularGaugeError(
            f"gauge eigenvalue {w[0]:.3e} at or below the positivity floor {tau_pd:.1e}"
        )
    return (Q * np.sqrt(w)) @ Q.conj().T


def _sqrt_pair_with_derivative(gamma: np.ndarray, gamma_dot: np.ndarray):
    """(gamma^{1/2}, gamma^{-1/2}, d/dt gamma^{1/2}, d/dt gamma^{-1/2}).

    The derivative solves the commutator-free Sylvester relation
    g' g + g g' = gamma' exactly in the eigenbasis; analytic in the inputs,
    no finite differencing anywhere.
    """
    w, Q = np.linalg.eigh(gamma)
    if w[0] <= TAU_PD:
        raise NearSingularGaugeError(f"gauge eigenvalue {w[0]:.3e} below positivity floor")
    sq = np.sqrt(w)
    g = (Q * sq) @ Q.conj().T
    ginv = (Q * (1.0 / sq)) @ Q.conj().T
    gd = Q.conj().T @ gamma_dot @ Q
    gdot = Q @ (gd / (sq[:, None] + sq[None, :])) @ Q.conj().T
    ginv_dot = -ginv @ gdot @ ginv
    return g, ginv, gdot, ginv_dot


def _pauli_mat(p, v1, v2, v3) -> np.ndarray:
    """p I + v . sigma as an explicit 2x2 array (v may be complex)."""
    return np.array([[p + v3, v1 - 1j * v2], [v1 + 1j * v2, p - v3]])


def _herm_parts(M) -> tuple[float, float, float, float]:
    """(scalar, vector) components of a Hermitian 2x2: M = a I + b . sigma."""
    return (
        0.5 * (M[0, 0].real + M[1, 1].real),
        M[0, 1].real,
        -M[0, 1].imag,
        0.5 * (M[0, 0].real - M[1, 1].real),
    )


def _sqrt22_scalars(a, b1, b2, b3):
    """Closed-form ingredients of the 2x2 principal root: returns
    (c, q, det_root) with sqrt = c I + q b.sigma and det_root = det(sqrt)."""
    bb = math.sqrt(b1 * b1 + b2 * b2 + b3 * b3)
    lo = a - bb
    if lo <= TAU_PD:
        raise NearSingularGaugeError(f"gauge eigenvalue {lo:.3e} below positivity floor")
    sp, sm = math.sqrt(a + bb), math.sqrt(lo)
    return 0.5 * (sp + sm), 1.0 / (sp + sm), sp * sm


def _gauge_fast_2x2(z: np.ndarray, zd: np.ndarray) -> GaugeFactors:
    """Scalar-algebra gauge factors for the 2x2 chart (the hot path).

    Both gauge matrices are a I + b.sigma with real components, so roots,
    inverses and the Sylvester-equation derivatives reduce to a handful of
    real scalars.
    """
    zdag = z.conj().T
    zddag = zd.conj().T
    gamma1 = z @ zdag
    gamma1[0, 0] += 1.0
    gamma1[1, 1] += 1.0
    gamma2 = zdag @ z
    gamma2[0, 0] += 1.0
    gamma2[1, 1] += 1.0
    dg1 = zd @ zdag + z @ zddag
    dg2 = zddag @ z + zdag @ zd

    a1, x1, y1, w1 = _herm_parts(gamma1)
    c1, q1, d1 = _sqrt22_scalars(a1, x1, y1, w1)
    g1 = _pauli_mat(c1, q1 * x1, q1 * y1, q1 * w1)
    g1_inv = _pauli_mat(c1 / d1, -q1 * x1 / d1, -q1 * y1 / d1, -q1 * w1 / d1)
    da1, dx1, dy1, dw1 = _herm_parts(dg1)
    sdot = (c1 * da1 - q1 * (x1 * dx1 + y1 * dy1 + w1 * dw1)) / (2.0 * d1)
    vd = [(dv - 2.0 * sdot * q1 * bv) / (2.0 * c1) for dv, bv in ((dx1, x1), (dy1, y1), (dw1, w1))]
    g1_dot = _pauli_mat(sdot, *vd)
    dg1_inv = -g1_inv @ g1_dot @ g1_inv

    a2, x2, y2, w2 = _herm_parts(gamma2)
    c2, q2, d2 = _sqrt22_scalars(a2, x2, y2, w2)
    g2_inv = _pauli_mat(c2, q2 * x2, q2 * y2, q2 * w2)          # plain root
    g2 = _pauli_mat(c2 / d2, -q2 * x2 / d2, -q2 * y2 / d2, -q2 * w2 / d2)
    da2, dx2, dy2, dw2 = _herm_parts(dg2)
    sdot2 = (c2 * da2 - q2 * (x2 * dx2 + y2 * dy2 + w2 * dw2)) / (2.0 * d2)
    vd2 = [(dv - 2.0 * sdot2 * q2 * bv) / (2.0 * c2) for dv, bv in ((dx2, x2), (dy2, y2), (dw2, w2))]
    dg2_inv = _pauli_mat(sdot2, *vd2)                            # derivative of the plain root
    return GaugeFactors(gamma1, gamma2, g1, g2, g1_inv, g2_inv, dg1_inv, dg2_inv)


@dataclass(frozen=True)
class GaugeFactors:
    """Gauge pair for one chart state, with analytic time derivatives.

    g1 = gamma_1^{1/2} and g2 = gamma_2^{-1/2}: the assignment of the
    inverse is forced by unitarity of the dressed coupling factor, which
    the oracle-equivalence tests pin down.
    """

    gamma1: np.ndarray
    gamma2: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    g1_inv: np.ndarray
    g2_inv: np.ndarray
    dg1_inv: np.ndarray | None = None
    dg2_inv: np.ndarray | None = None


def gauge_factors(z: np.ndarray, z_dot: np.ndarray | None = None) -> GaugeFactors:
    """Gauge factors of a chart state; pass dz/dt to get their derivatives."""
    z = np.asarray(z, dtype=complex)
    if z_dot is not None and z.shape == (2, 2):
        return _gauge_fast_2x2(z, np.asarray(z_dot, dtype=complex))
    gamma1, gamma2 = gamma_matrices(z)
    if z_dot is None:
        zero1 = np.zeros_like(gamma1)
        zero2 = np.zeros_like(gamma2)
        g1, g1i, _, _ = _sqrt_pair_with_derivative(gamma1, zero1)
        g2p, g2pi, _, _ = _sqrt_pair_with_derivative(gamma2, zero2)
        return GaugeFactors(gamma1, gamma2, g1, g2pi, g1i, g2p)
    zd = np.asarray(z_dot, dtype=complex)
    dgamma1 = zd @ z.conj().T + z @ zd.conj().T
    dgamma2 = zd.conj().T @ z + z.conj().T @ zd
    g1, g1i, _, dg1i = _sqrt_pair_with_derivative(gamma1, dgamma1)
    g2p, g2pi, dg2p, dg2pi = _sqrt_pair_with_derivative(gamma2, dgamma2)
    # g2 is the inverse root of gamma_2, so its "inverse" is the plain root.
    return GaugeFactors(gamma1, gamma2, g1, g2pi, g1i, g2p, dg1_inv=dg1i, dg2_inv=dg2p)


def _dressed_residual_generators(
    z: np.ndarray, blocks: BlockPartition, gauge: GaugeFactors
) -> tuple[np.ndarray, np.ndarray]:
    """The two residual generators, symmetrized (they are Hermitian on-shell)."""
    raw_top = blocks.top - z @ blocks.lower_coupling
    raw_bot = blocks.bottom + blocks.lower_coupling @ z
    x1 = 1j * gauge.dg1_inv @ gauge.g1 + gauge.g1_inv @ raw_top @ gauge.g1
    x2 = 1j * gauge.dg2_inv @ gauge.g2 + gauge.g2_inv @ raw_bot @ gauge.g2
    return 0.5 * (x1 + x1.conj().T), 0.5 * (x2 + x2.conj().T)


def effective_hamiltonians(
    z: np.ndarray, blocks: BlockPartition, gauge: GaugeFactors
) -> tuple[np.ndarray, np.ndarray, float]:
    """Traceless Hermitian residual Hamiltonians plus the inter-block rate.

    The dressed residual generators are
        X_top = i (d g1^{-1}/dt) g1 + g1^{-1} (H_top - z V^dag) g1,
        X_bot = i (d g2^{-1}/dt) g2 + g2^{-1} (H_bot + V^dag z) g2,
    Hermitian on-shell; they are symmetrized to keep round-off out of the
    residual problems.  Their traces are equal and opposite; the returned
    rate is Tr(X_top), which integrates into the phase between the blocks.
    """
    if gauge.dg1_inv is None or gauge.dg2_inv is None:
        raise ValidationError("gauge factors need derivatives; call gauge_factors(z, z_dot)")
    z = np.asarray(z, dtype=complex)
    m, n = blocks.n_top, blocks.n_bottom
    x1, x2 = _dressed_residual_generators(z, blocks, gauge)
    s = float(np.trace(x1).real)
    return x1 - (s / m) * np.eye(m), x2 - (np.trace(x2).real / n) * np.eye(n), s


# --------------------------------------------------------------------------
# Recursive propagation plan

_REBASE = "rebase"
_BREAKDOWN = "breakdown"
_OVERFLOW = "overflow"


class _Plan:
    """State layout and dynamics of one decomposition problem.

    Layout per internal node: chart z (m*n), [w_dagger (n*m) non-Hermitian
    only], two trace integrals, then the two children.  A two-level leaf
    stores its 2x2 operator; a one-level leaf stores nothing (its traceless
    Hamiltonian vanishes identically).
    """

    def __init__(self, N: int, split: int | None, hermitian: bool):
        self.N = N
        self.hermitian = hermitian
        if N <= 2:
            self.leaf = True
            self.size = N * N if N == 2 else 0
            return
        self.leaf = False
        n = split if split is not None else N // 2
        if not 1 <= n < N:
            raise DimensionError(f"split n={n} invalid for N={N}")
        self.n = n
        self.m = N - n
        self.top = _Plan(self.m, None, hermitian)
        self.bottom = _Plan(self.n, None, hermitian)
        self.z_len = self.m * self.n
        self.w_len = 0 if hermitian else self.n * self.m
        self.size = self.z_len + self.w_len + 2 + self.top.size + self.bottom.size

    def initial_state(self) -> np.ndarray:
        y = np.zeros(self.size, dtype=complex)
        if self.leaf:
            if self.N == 2:
                y[:] = np.eye(2, dtype=complex).ravel()
            return y
        off = self.z_len + self.w_len + 2
        y[off : off + self.top.size] = self.top.initial_state()
        y[off + self.top.size :] = self.bottom.initial_state()
        return y

    def rhs(self, y: np.ndarray, H: np.ndarray) -> np.ndarray:
        if self.leaf:
            if self.N == 2:
                U = y.reshape(2, 2)
                return (-1j * H @ U).ravel()
            return y[:0]
        m, n = self.m, self.n
        z = y[: self.z_len].reshape(m, n)
        A, V = H[:m, :m], H[:m, m:]
        Yd, B = H[m:, :m], H[m:, m:]
        zdot = -1j * (A @ z + V - z @ (Yd @ z + B))
        raw_top = A - z @ Yd
        raw_bot = B + Yd @ z
        out = np.empty(self.size, dtype=complex)
        out[: self.z_len] = zdot.ravel()

        if self.hermitian:
            gauge = gauge_factors(z, zdot)
            x1 = 1j * gauge.dg1_inv @ gauge.g1 + gauge.g1_inv @ raw_top @ gauge.g1
            x2 = 1j * gauge.dg2_inv @ gauge.g2 + gauge.g2_inv @ raw_bot @ gauge.g2
            x1 = 0.5 * (x1 + x1.conj().T)
            x2 = 0.5 * (x2 + x2.conj().T)
            s1 = complex(np.trace(x1).real)
            s2 = complex(np.trace(x2).real)
            h_top = x1
            h_bot = x2
            base = self.z_len
        else:
            wd = y[self.z_len : self.z_len + self.w_len].reshape(n, m)
            wddot = -1j * (wd @ (z @ Yd - A) + raw_bot @ wd + Yd)
            s1 = complex(np.trace(raw_top))
            s2 = complex(np.trace(raw_bot))
            h_top = raw_top
            h_bot = raw_bot
            out[self.z_len : self.z_len + self.w_len] = wddot.ravel()
            base = self.z_len + self.w_len

        h_top = h_top - (s1 / m) * np.eye(m)
        h_bot = h_bot - (s2 / n) * np.eye(n)
        out[base] = s1
        out[base + 1] = s2
        off = base + 2
        out[off : off + self.top.size] = self.top.rhs(y[off : off + self.top.size], h_top)
        out[off + self.top.size :] = self.bottom.rhs(y[off + self.top.size :], h_bot)
        return out

    def assemble(self, y: np.ndarray) -> np.ndarray:
        if self.leaf:
            return y.reshape(2, 2) if self.N == 2 else np.ones((1, 1), dtype=complex)
        m, n = self.m, self.n
        z = y[: self.z_len].reshape(m, n)
        base = self.z_len + self.w_len
        th1, th2 = y[base], y[base + 1]
        off = base + 2
        u_top = np.exp(-1j * th1 / m) * self.top.assemble(y[off : off + self.top.size])
        u_bot = np.exp(-1j * th2 / n) * self.bottom.assemble(y[off + self.top.size :])
        if self.hermitian:
            wd = None
        else:
            wd = y[self.z_len : self.z_len + self.w_len].reshape(n, m)
        return assemble_unitary(z, u_top, u_bot, w_dagger=wd, hermitian=self.hermitian)

    def chart_norms(self, y: np.ndarray, acc: list) -> None:
        if self.leaf:
            return
        z = y[: self.z_len]
        acc.append(float(np.linalg.norm(z)))
        if self.w_len:
            acc.append(float(np.linalg.norm(y[self.z_len : self.z_len + self.w_len])))
        off = self.z_len + self.w_len + 2
        self.top.chart_norms(y[off : off + self.top.size], acc)
        self.bottom.chart_norms(y[off + self.top.size :], acc)

    def top_view(self, y: np.ndarray):
        """(z, w_dagger or None, theta1, theta2, top sub-operator, bottom
        sub-operator with phases applied) of the outermost level."""
        m, n = self.m, self.n
        z = y[: self.z_len].reshape(m, n).copy()
        wd = None
        if self.w_len:
            wd = y[self.z_len : self.z_len + self.w_len].reshape(n, m).copy()
        base = self.z_len + self.w_len
        th1, th2 = complex(y[base]), complex(y[base + 1])
        off = base + 2
        u_top = np.exp(-1j * th1 / m) * self.top.assemble(y[off : off + self.top.size])
        u_bot = np.exp(-1j * th2 / n) * self.bottom.assemble(y[off + self.top.size :])
        return z, wd, th1, th2, u_top, u_bot


def assemble_unitary(
    z: np.ndarray,
    sub_top: np.ndarray,
    sub_bottom: np.ndarray,
    interblock_phase: float | complex = 0.0,
    global_phase: complex = 0.0,
    w_dagger: np.ndarray | None = None,
    hermitian: bool = True,
) -> np.ndarray:
    """Assemble the full operator from chart, residual blocks, and phases.

    sub_top / sub_bottom are the residual operators; when an explicit
    interblock_phase is given it is applied as exp(-i phase / dim) on the
    top block and the opposite on the bottom (pass 0 when the residual
    operators already include their phases).  The global phase multiplies
    everything as exp(-i global_phase).

    Hermitian mode dresses the triangular factor with the gauge roots,
    which makes the result exactly unitary; non-Hermitian mode keeps the
    plain triangular factor built from z and the independent w_dagger.
    """
    z = np.asarray(z, dtype=complex)
    m, n = z.shape
    if sub_top.shape != (m, m) or sub_bottom.shape != (n, n):
        raise DimensionError("residual operator shapes do not match the chart split")
    N = m + n
    fac = np.zeros((N, N), dtype=complex)
    if hermitian:
        gamma1, gamma2 = gamma_matrices(z)
        w1, Q1 = np.linalg.eigh(gamma1)
        w2, Q2 = np.linalg.eigh(gamma2)
        if w1[0] <= TAU_PD or w2[0] <= TAU_PD:
            raise NearSingularGaugeError("gauge factor lost positive-definiteness")
        g1mi = (Q1 * (w1 ** -0.5)) @ Q1.conj().T  # gamma_1^{-1/2}
        g2mi = (Q2 * (w2 ** -0.5)) @ Q2.conj().T  # gamma_2^{-1/2}
        fac[:m, :m] = g1mi
        fac[:m, m:] = z @ g2mi
        fac[m:, :m] = -g2mi @ z.conj().T
        fac[m:, m:] = g2mi
    else:
        if w_dagger is None:
            raise ValidationError("non-Hermitian assembly needs w_dagger")
        wd = np.asarray(w_dagger, dtype=complex)
        fac[:m, :m] = np.eye(m) + z @ wd
        fac[:m, m:] = z
        fac[m:, :m] = wd
        fac[m:, m:] = np.eye(n)
    sub = np.zeros((N, N), dtype=complex)
    sub[:m, :m] = np.exp(-1j * complex(interblock_phase) / m) * sub_top
    sub[m:, m:] = np.exp(+1j * complex(interblock_phase) / n) * sub_bottom
    return np.exp(-1j * complex(global_phase)) * (fac @ sub)


# --------------------------------------------------------------------------
# Records and the driver


@dataclass
class EvolutionRecord:
    """Trajectory of the decomposed evolution on the output grid.

    `chart` holds the outermost z per output time in the frame of the
    active leg (`legs` marks leg index; frames beyond leg 0 are related to
    the original one by repeated block swaps).  `sub_top`/`sub_bottom` are
    the residual operators with their inter-block phases applied;
    `interblock_phase` is the integral of the extracted trace rate, and
    `global_phase` the integral of the removed overall trace.
    """

    times: np.ndarray
    operators: np.ndarray
    chart: np.ndarray
    sub_top: np.ndarray
    sub_bottom: np.ndarray
    interblock_phase: np.ndarray
    global_phase: np.ndarray
    phi: np.ndarray
    unitarity_residual: np.ndarray
    chart_norm: np.ndarray
    legs: np.ndarray
    hermitian: bool
    split: int
    w_dagger: np.ndarray | None = None
    breakdown_events: list = field(default_factory=list)

    def gauge_at(self, k: int) -> GaugeFactors:
        return gauge_factors(self.chart[k])

    def zchart_at(self, k: int) -> ZChart:
        wd = None if self.w_dagger is None else self.w_dagger[k]
        return ZChart(self.chart[k], wd)

    @property
    def max_unitarity_residual(self) -> float:
        return float(self.unitarity_residual.max()) if self.unitarity_residual.size else 0.0


def _block_swap(N: int, m: int) -> np.ndarray:
    """Permutation that moves the bottom block of size N - m in front."""
    order = np.concatenate([np.arange(m, N), np.arange(m)])
    P = np.zeros((N, N))
    P[np.arange(N), order] = 1.0
    return P


def _validate_grid(grid, total: float) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValidationError("output grid must be a non-empty 1-d array")
    if np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValidationError("output grid must be strictly increasing and non-negative")
    if grid[-1] > total * (1 + 1e-12) + 1e-12:
        raise ValidationError(f"grid extends past the schedule span {total}")
    return grid


def _propagate(
    schedule: HamiltonianSchedule,
    n: int,
    grid,
    cfg: IntegratorConfig | None,
    hermitian: bool,
    chart_recovery: str,
    z_max: float,
    z_switch: float,
    u_max: float,
) -> EvolutionRecord:
    if cfg is None:
        cfg = IntegratorConfig()
    if chart_recovery not in ("abort", "switch"):
        raise ValidationError(f"chart_recovery must be abort|switch, got {chart_recovery!r}")
    N = schedule.n_levels
    if not 1 <= n < N:
        raise DimensionError(f"split n={n} invalid for N={N}")
    grid = _validate_grid(grid, schedule.total_duration)
    T = grid.size
    m = N - n

    track_phi = hermitian and N == 4 and n == 2

    # Output buffers
    ops = np.empty((T, N, N), dtype=complex)
    chart = np.zeros((T, m, n), dtype=complex)
    wdag = None if hermitian else np.zeros((T, n, m), dtype=complex)
    subt = np.empty((T, m, m), dtype=complex)
    subb = np.empty((T, n, n), dtype=complex)
    ibp = np.zeros(T, dtype=complex)
    gph = np.zeros(T, dtype=complex)
    phis = np.zeros(T, dtype=float)
    legs = np.zeros(T, dtype=int)
    events: list = []

    def partial_record(upto: int) -> EvolutionRecord:
        sl = slice(0, upto)
        ur = np.array([
            np.linalg.norm(ops[k].conj().T @ ops[k] - np.eye(N)) for k in range(upto)
        ])
        cn = np.array([np.linalg.norm(chart[k]) for k in range(upto)])
        return EvolutionRecord(
            times=grid[sl].copy(), operators=ops[sl].copy(), chart=chart[sl].copy(),
            sub_top=subt[sl].copy(), sub_bottom=subb[sl].copy(),
            interblock_phase=ibp[sl].copy(), global_phase=gph[sl].copy(),
            phi=phis[sl].copy(), unitarity_residual=ur, chart_norm=cn, legs=legs[sl].copy(),
            hermitian=hermitian, split=n,
            w_dagger=None if wdag is None else wdag[sl].copy(),
            breakdown_events=list(events),
        )

    # Leg state: accumulated operator, frame permutation, split of the leg.
    U_base = np.eye(N, dtype=complex)
    perm = np.eye(N)
    permuted = False
    leg_idx = 0
    leg_split = n
    plan = _Plan(N, leg_split, hermitian)

    # Wrapper state: [global trace integral, (phi)] + plan state
    extra = 2 if track_phi else 1
    y = np.zeros(extra + plan.size, dtype=complex)
    y[extra:] = plan.initial_state()
    base_gph = 0.0 + 0.0j  # trace integral accumulated in earlier legs

    gi = 0
    while gi < T and grid[gi] <= 1e-15:
        ops[gi] = np.eye(N)
        chart[gi] = 0.0
        subt[gi] = np.eye(m)
        subb[gi] = np.eye(n)
        gi += 1

    # Coefficient rows feeding the chart-phase rate, by canonical pair index.
    _PHI_ROW5 = (3, 7, 10, 12)
    _PHI_ROW6 = (4, 8, 11, 13)

    def phi_rows(H0):
        upper = project_coeffs(H0)
        return -upper[list(_PHI_ROW5)], -upper[list(_PHI_ROW6)], -upper[14]

    def phi_rate_fast(plan_state, f5, f6, f65) -> float:
        zt = plan_state[: plan.z_len].reshape(2, 2)
        zv = z_components(zt)
        return -2.0 * f65 + 2.0 * float(f5 @ zv.imag) + 2.0 * float(f6 @ zv.real)

    def make_rhs(seg):
        """Per-segment RHS for the active leg; constants cached for constant laws."""
        if isinstance(seg.law, ConstantLaw):
            H = law_hamiltonian(schedule, seg, 0.0)
            if permuted:
                H = perm @ H @ perm.T
            H0c, ratec = make_traceless(H)
            rows = phi_rows(H0c) if track_phi else None

            def rhs(t, yy):
                out = np.empty_like(yy)
                out[0] = ratec
                if track_phi:
                    out[1] = phi_rate_fast(yy[extra:], *rows)
                out[extra:] = plan.rhs(yy[extra:], H0c)
                return out

            return rhs

        def rhs(t, yy):
            H = law_hamiltonian(schedule, seg, t)
            if permuted:
                H = perm @ H @ perm.T
            H0, rate = make_traceless(H)
            out = np.empty_like(yy)
            out[0] = rate
            if track_phi:
                out[1] = phi_rate_fast(yy[extra:], *phi_rows(H0))
            out[extra:] = plan.rhs(yy[extra:], H0)
            return out

        return rhs

    def on_step(t, yy):
        norms: list = []
        plan.chart_norms(yy[extra:], norms)
        worst = max(norms) if norms else 0.0
        if not np.isfinite(worst) or worst > z_max:
            raise AbortIntegration(_BREAKDOWN, payload=(t, worst))
        if not hermitian:
            state = yy[extra:]
            if not np.all(np.isfinite(state)) or np.abs(state).max() > u_max:
                raise AbortIntegration(_OVERFLOW, payload=(t, float(np.abs(state).max())))
        if chart_recovery == "switch" and worst > z_switch:
            raise AbortIntegration(_REBASE, payload=(t, worst))

    def emit(upto_states):
        nonlocal gi
        for yy in upto_states:
            z, wd_leg, th1, th2, u_top, u_bot = plan.top_view(yy[extra:])
            U_leg = plan.assemble(yy[extra:])
            phase = complex(yy[0]) + base_gph
            U_abs = np.exp(-1j * phase) * (perm.T @ U_leg @ perm if permuted else U_leg) @ U_base
            ops[gi] = U_abs
            if permuted and leg_split != n:
                # frame is swapped; record the leg chart in its own shape slot
                chart[gi] = 0.0
            else:
                chart[gi] = z if z.shape == (m, n) else 0.0
            if wdag is not None and wd_leg is not None and wd_leg.shape == (n, m):
                wdag[gi] = wd_leg
            if u_top.shape == (m, m):
                subt[gi] = u_top
                subb[gi] = u_bot
            else:
                subt[gi] = np.eye(m)
                subb[gi] = np.eye(n)
            ibp[gi] = th1
            gph[gi] = phase
            if track_phi:
                phis[gi] = float(yy[1].real)
            legs[gi] = leg_idx
            gi += 1

    edges = schedule.boundaries()
    for si in range(len(schedule.segments)):
        if gi >= T:
            break
        a, b = float(edges[si]), float(edges[si + 1])
        t_cursor = max(a, 0.0)
        while t_cursor < b - 1e-14 * max(1.0, b):
            pts = [float(t) for t in grid[gi:] if t_cursor < t <= b + 1e-12 * max(1.0, b)]
            need_edge = not pts or pts[-1] < b - 1e-12
            run_grid = np.array(pts + ([b] if need_edge else []))
            rhs = make_rhs(schedule.segments[si])
            result = integrate_adaptive(rhs, (t_cursor, b), y, cfg, run_grid, on_step=on_step)
            emit(result.states[: min(len(result.states), len(pts))])
            if result.abort is None:
                y = result.y_final
                t_cursor = b
                break
            kind = result.abort.reason
            t_ev, norm_ev = result.abort.payload
            if kind == _REBASE:
                events.append({"time": t_ev, "kind": "rebase", "chart_norm": norm_ev})
                U_leg = plan.assemble(result.y_final[extra:])
                base_gph = base_gph + complex(result.y_final[0])
                U_base = (perm.T @ U_leg @ perm if permuted else U_leg) @ U_base
                perm = _block_swap(N, N - leg_split) @ perm
                permuted = not np.allclose(perm, np.eye(N))
                leg_split = N - leg_split
                plan = _Plan(N, leg_split, hermitian)
                leg_idx += 1
                y = np.zeros(extra + plan.size, dtype=complex)
                y[extra:] = plan.initial_state()
                t_cursor = result.t_final
            elif kind == _OVERFLOW:
                events.append({"time": t_ev, "kind": "overflow", "norm": norm_ev})
                raise DivergenceError(
                    f"operator norm overflow at t={t_ev:.6g}", time=t_ev,
                    record=partial_record(gi),
                )
            else:
                events.append({"time": t_ev, "kind": "breakdown", "chart_norm": norm_ev})
                raise ChartBreakdownError(
                    f"chart left its validity region at t={t_ev:.6g} "
                    f"(norm {norm_ev:.3e} > {z_max:.1e})",
                    time=t_ev,
                    record=partial_record(gi),
                )

    while gi < T:  # grid points at the final time (already integrated)
        emit([y])

    ur = np.array([np.linalg.norm(ops[k].conj().T @ ops[k] - np.eye(N)) for k in range(T)])
    cn = np.array([np.linalg.norm(chart[k]) for k in range(T)])
    return EvolutionRecord(
        times=grid.copy(), operators=ops, chart=chart, sub_top=subt, sub_bottom=subb,
        interblock_phase=ibp, global_phase=gph, phi=phis, unitarity_residual=ur,
        chart_norm=cn, legs=legs, hermitian=hermitian, split=n, w_dagger=wdag,
        breakdown_events=events,
    )


def propagate_decomposed(
    schedule: HamiltonianSchedule,
    n: int,
    grid,
    cfg: IntegratorConfig | None = None,
    *,
    chart_recovery: str = "abort",
    z_max: float = Z_MAX_DEFAULT,
    z_switch: float = Z_SWITCH_DEFAULT,
) -> EvolutionRecord:
    """Propagate a Hermitian schedule through the decomposition engine.

    The chart flow, the residual problems (recursively decomposed until
    two-level problems remain), and all extracted phases integrate as one
    joint state.  The assembled operator satisfies U(0) = I and is unitary
    up to integration error.  Chart breakdown raises ChartBreakdownError
    carrying the partial record unless chart_recovery="switch", which
    restarts on a block-swapped chart and chains the legs.
    """
    if not schedule.hermitian:
        raise ValidationError("schedule is flagged non-Hermitian; use non_hermitian_propagate")
    return _propagate(
        schedule, n, grid, cfg, True, chart_recovery, z_max, z_switch, U_MAX_DEFAULT
    )


def non_hermitian_propagate(
    schedule: HamiltonianSchedule,
    n: int,
    grid,
    cfg: IntegratorConfig | None = None,
    *,
    z_max: float = Z_MAX_DEFAULT,
    u_max: float = U_MAX_DEFAULT,
) -> EvolutionRecord:
    """Propagate without unitarization: chart and its left partner evolve
    independently and the residual problems keep their non-Hermitian form.

    Works for any schedule; on a Hermitian one the result matches the
    unitarized pipeline (the partner chart then follows from z).  Norm
    overflow raises DivergenceError (expected for gain media).
    """
    return _propagate(schedule, n, grid, cfg, False, "abort", z_max, Z_SWITCH_DEFAULT, u_max)
