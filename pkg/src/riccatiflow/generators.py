"""Generator tables for the two-qubit algebra and its six-dimensional twin.

A traceless Hermitian 4x4 Hamiltonian is encoded by a real antisymmetric
coefficient matrix F of size 6x6 (15 independent entries).  Each pair
(mu, nu) is paired with one Pauli tensor-product generator, arranged so
that the familiar physics labels hold, e.g. only F[6,5] nonzero gives
sigma_z (x) I, only F[2,1] nonzero gives I (x) sigma_z.  The same F, read
as a matrix acting on 6-vectors, generates rotations: the two pictures are
intertwined by the group isomorphism SU(4) ~ Spin(6), which the tests pin
down through the commutation relations.

Index conventions are 1-based (mu, nu in 1..6) to match the standard
antisymmetric-coefficient notation; array storage is 0-based internally.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DimensionError, InvalidIndexError, ValidationError

__all__ = [
    "PAULI",
    "pair_index",
    "pairs",
    "So6Generator",
    "so6_generator",
    "so6_commutator_table",
    "su4_generator",
    "su4_generator_table",
    "b1_array_entry",
    "AntisymmetricCoeffs",
    "hamiltonian_from_coeffs",
    "coeffs_from_hamiltonian",
    "lie_closure_dimension",
]

TAU_HERM = 1e-10  # relative Frobenius tolerance for Hermiticity validation

PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)


def _kron(a: int, b: int) -> np.ndarray:
    return np.kron(PAULI[a], PAULI[b])


def pairs(dim: int) -> tuple[tuple[int, int], ...]:
    """Canonical strict-upper pair order (1,2),(1,3),...,(dim-1,dim)."""
    return tuple(combinations(range(1, dim + 1), 2))


PAIRS6 = pairs(6)
PAIRS5 = pairs(5)

_PAIR_INDEX6 = {p: k for k, p in enumerate(PAIRS6)}


def pair_index(mu: int, nu: int, dim: int = 6) -> tuple[int, int]:
    """Return (flat index, sign) of the ordered pair within the canonical order."""
    if mu == nu or not (1 <= mu <= dim) or not (1 <= nu <= dim):
        raise InvalidIndexError(f"invalid antisymmetric pair ({mu},{nu}) for dim {dim}")
    if mu < nu:
        return pairs(dim).index((mu, nu)), 1
    return pairs(dim).index((nu, mu)), -1


# Upper triangle of the antisymmetric generator array, in the layout whose
# rows/columns are indexed like F itself.  Entry (mu, nu) here multiplies
# F[nu, mu] in the Hamiltonian; equivalently the generator attached to the
# physics label F[mu, nu] (mu > nu) is _B1[(nu, mu)] read with a sign flip.
_B1_UPPER: dict[tuple[int, int], np.ndarray] = {
    (1, 2): _kron(0, 3),
    (1, 3): -_kron(0, 2),
    (1, 4): -_kron(3, 1),
    (1, 5): _kron(1, 1),
    (1, 6): _kron(2, 1),
    (2, 3): _kron(0, 1),
    (2, 4): -_kron(3, 2),
    (2, 5): _kron(1, 2),
    (2, 6): _kron(2, 2),
    (3, 4): -_kron(3, 3),
    (3, 5): _kron(1, 3),
    (3, 6): _kron(2, 3),
    (4, 5): -_kron(2, 0),
    (4, 6): _kron(1, 0),
    (5, 6): _kron(3, 0),
}


def b1_array_entry(mu: int, nu: int) -> np.ndarray:
    """Entry (mu, nu) of the antisymmetric Pauli tensor array."""
    if mu == nu:
        if not 1 <= mu <= 6:
            raise InvalidIndexError(f"index {mu} out of range 1..6")
        return np.zeros((4, 4), dtype=complex)
    if mu < nu:
        return _B1_UPPER[(mu, nu)].copy()
    return -_B1_UPPER[(nu, mu)]


def su4_generator(mu: int, nu: int) -> np.ndarray:
    """Hermitian traceless 4x4 generator multiplying the coefficient F[mu, nu].

    Antisymmetric in (mu, nu).  Normalized so Tr(G G) = 4 and so that the
    six-dimensional rotation flow m' = 2 F m matches the four-dimensional
    evolution generated by the assembled Hamiltonian.
    """
    if mu == nu or not (1 <= mu <= 6) or not (1 <= nu <= 6):
        raise InvalidIndexError(f"invalid generator pair ({mu},{nu})")
    return -b1_array_entry(mu, nu)


def su4_generator_table() -> dict[tuple[int, int], np.ndarray]:
    """All 15 generators keyed by canonical (mu < nu) pair."""
    return {(m, n): su4_generator(m, n) for (m, n) in PAIRS6}


@dataclass(frozen=True)
class So6Generator:
    """Rotation generator in the (mu, nu) coordinate plane: +1 at (mu,nu), -1 at (nu,mu)."""

    mu: int
    nu: int
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix.setflags(write=False)


def so6_generator(mu: int, nu: int) -> So6Generator:
    """Elementary antisymmetric 6x6 generator with exactly two non-zero entries."""
    if mu == nu or not (1 <= mu <= 6) or not (1 <= nu <= 6):
        raise InvalidIndexError(f"invalid rotation plane ({mu},{nu})")
    m = np.zeros((6, 6))
    m[mu - 1, nu - 1] = 1.0
    m[nu - 1, mu - 1] = -1.0
    return So6Generator(mu, nu, m)


def so6_commutator_table() -> dict[tuple[tuple[int, int], tuple[int, int]], dict[tuple[int, int], int]]:
    """Commutators of the elementary rotation generators, exact integers.

    Maps ((mu,nu),(rho,sigma)) over canonical pairs to a dict of canonical
    pairs with integer coefficients:
    [l_mn, l_rs] = d_nr l_ms + d_ms l_nr - d_ns l_mr - d_mr l_ns.
    Zero results are stored as empty dicts.
    """
    table: dict = {}
    for a in PAIRS6:
        for b in PAIRS6:
            mu, nu = a
            rho, sigma = b
            terms: dict[tuple[int, int], int] = {}

            def _add(p: int, q: int, coeff: int):
                if p == q or coeff == 0:
                    return
                key, sgn = (p, q), 1
                if p > q:
                    key, sgn = (q, p), -1
                terms[key] = terms.get(key, 0) + sgn * coeff
                if terms[key] == 0:
                    del terms[key]

            if nu == rho:
                _add(mu, sigma, 1)
            if mu == sigma:
                _add(nu, rho, 1)
            if nu == sigma:
                _add(mu, rho, -1)
            if mu == rho:
                _add(nu, sigma, -1)
            table[(a, b)] = terms
    return table


@dataclass(frozen=True)
class AntisymmetricCoeffs:
    """Real antisymmetric coefficient matrix, stored as its strict upper triangle.

    `upper` follows the canonical pair order of :func:`pairs`, so
    antisymmetry is structural rather than a runtime property.  Values are
    addressed with the usual signed convention: get(6, 5) == -get(5, 6).
    """

    dim: int
    upper: np.ndarray

    def __post_init__(self):
        want = self.dim * (self.dim - 1) // 2
        arr = np.asarray(self.upper, dtype=float)
        if arr.shape != (want,):
            raise DimensionError(
                f"expected {want} upper-triangle entries for dim {self.dim}, got {arr.shape}"
            )
        object.__setattr__(self, "upper", arr)
        arr.setflags(write=False)

    @classmethod
    def zeros(cls, dim: int = 6) -> "AntisymmetricCoeffs":
        return cls(dim, np.zeros(dim * (dim - 1) // 2))

    @classmethod
    def from_matrix(cls, mat, tol: float = 1e-12) -> "AntisymmetricCoeffs":
        m = np.asarray(mat, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"coefficient matrix must be square, got {m.shape}")
        dim = m.shape[0]
        sym = np.abs(m + m.T).max()
        if sym > tol * max(1.0, np.abs(m).max()):
            raise ValidationError("coefficient matrix is not antisymmetric", float(sym))
        return cls(dim, np.array([m[a - 1, b - 1] for a, b in pairs(dim)]))

    @classmethod
    def from_pairs(cls, values: dict, dim: int = 6) -> "AntisymmetricCoeffs":
        """Build from {(mu, nu): value}; either index order is accepted.

        Supplying both orders of one pair is rejected to avoid silent
        sign ambiguity.
        """
        upper = np.zeros(dim * (dim - 1) // 2)
        seen = set()
        plist = pairs(dim)
        for (mu, nu), val in values.items():
            idx, sgn = pair_index(mu, nu, dim)
            key = plist[idx]
            if key in seen:
                raise ValidationError(f"pair ({mu},{nu}) specified twice (both index orders?)")
            seen.add(key)
            upper[idx] = sgn * float(val)
        return cls(dim, upper)

    def get(self, mu: int, nu: int) -> float:
        idx, sgn = pair_index(mu, nu, self.dim)
        return sgn * float(self.upper[idx])

    @property
    def matrix(self) -> np.ndarray:
        """The full antisymmetric dim x dim matrix."""
        m = np.zeros((self.dim, self.dim))
        for k, (a, b) in enumerate(pairs(self.dim)):
            m[a - 1, b - 1] = self.upper[k]
            m[b - 1, a - 1] = -self.upper[k]
        return m

    def active_pairs(self, tol: float = 0.0) -> set[tuple[int, int]]:
        return {p for k, p in enumerate(pairs(self.dim)) if abs(self.upper[k]) > tol}

    def embed(self, dim: int = 6) -> "AntisymmetricCoeffs":
        """Embed into a larger coefficient space (extra planes inactive)."""
        if dim < self.dim:
            raise DimensionError("embed target smaller than source")
        out = AntisymmetricCoeffs.zeros(dim)
        vals = {p: self.upper[k] for k, p in enumerate(pairs(self.dim))}
        upper = np.array([vals.get(p, 0.0) for p in pairs(dim)])
        return AntisymmetricCoeffs(dim, upper)

    def restrict(self, dim: int = 5, tol: float = 0.0) -> "AntisymmetricCoeffs":
        """Drop planes touching indices beyond `dim`; they must be inactive."""
        for k, (a, b) in enumerate(pairs(self.dim)):
            if b > dim and abs(self.upper[k]) > tol:
                raise ValidationError(f"pair ({a},{b}) active; cannot restrict to dim {dim}")
        vals = {p: self.upper[k] for k, p in enumerate(pairs(self.dim))}
        return AntisymmetricCoeffs(dim, np.array([vals[p] for p in pairs(dim)]))

    def __add__(self, other: "AntisymmetricCoeffs") -> "AntisymmetricCoeffs":
        if self.dim != other.dim:
            raise DimensionError("coefficient dims differ")
        return AntisymmetricCoeffs(self.dim, self.upper + other.upper)

    def __mul__(self, scalar: float) -> "AntisymmetricCoeffs":
        return AntisymmetricCoeffs(self.dim, self.upper * float(scalar))

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.sqrt(2.0) * np.linalg.norm(self.upper))


_GEN6 = None


def _generator_stack() -> np.ndarray:
    """15 x 4 x 4 stack of generators in canonical pair order (cached)."""
    global _GEN6
    if _GEN6 is None:
        stack = np.stack([su4_generator(a, b) for a, b in PAIRS6])
        stack.setflags(write=False)
        _GEN6 = stack
    return _GEN6


def hamiltonian_from_coeffs(F: AntisymmetricCoeffs) -> np.ndarray:
    """Assemble the traceless Hermitian 4x4 Hamiltonian sum_{mu<nu} F_mn G_mn."""
    if isinstance(F, np.ndarray):
        F = AntisymmetricCoeffs.from_matrix(F)
    if F.dim == 5:
        F = F.embed(6)
    if F.dim != 6:
        raise DimensionError(f"need 6x6 (or 5x5) coefficients, got dim {F.dim}")
    return np.tensordot(F.upper, _generator_stack(), axes=(0, 0))


def project_coeffs(H: np.ndarray) -> np.ndarray:
    """Coefficient vector of a (presumed valid) traceless Hermitian matrix,
    canonical pair order; no validation.  Hot-path helper."""
    return np.real(np.einsum("kij,ji->k", _generator_stack(), H)) / 4.0


def coeffs_from_hamiltonian(H, tol: float = TAU_HERM) -> AntisymmetricCoeffs:
    """Invert :func:`hamiltonian_from_coeffs` via trace orthogonality.

    Raises ValidationError when H is not Hermitian and traceless within
    `tol` (relative Frobenius).
    """
    H = np.asarray(H, dtype=complex)
    if H.shape != (4, 4):
        raise DimensionError(f"expected a 4x4 matrix, got {H.shape}")
    scale = max(1.0, float(np.linalg.norm(H)))
    herm = float(np.linalg.norm(H - H.conj().T))
    if herm > tol * scale:
        raise ValidationError("matrix is not Hermitian within tolerance", herm / scale)
    tr = abs(complex(np.trace(H)))
    if tr > tol * scale:
        raise ValidationError("matrix is not traceless within tolerance", tr / scale)
    return AntisymmetricCoeffs(6, project_coeffs(H))


def lie_closure_dimension(elements, tol: float = 1e-9, max_rounds: int = 10) -> int:
    """Dimension of the Lie algebra generated by antisymmetric 6x6 matrices.

    Iterates commutators until the span stops growing; rank via SVD.  The
    inputs during classification have integer entries, so the float rank
    is exact for any sensible tolerance.
    """
    mats = [np.asarray(m, dtype=float) for m in elements]
    if not mats:
        return 0

    def _vec(m):
        return np.array([m[a - 1, b - 1] for a, b in PAIRS6])

    def _rank_basis(vecs):
        stack = np.array(vecs)
        u, s, vt = np.linalg.svd(stack, full_matrices=False)
        keep = s > tol * max(1.0, s[0])
        return [vt[i] * s[i] for i in range(len(s)) if keep[i]]

    def _mat(v):
        m = np.zeros((6, 6))
        for k, (a, b) in enumerate(PAIRS6):
            m[a - 1, b - 1] = v[k]
            m[b - 1, a - 1] = -v[k]
        return m

    basis = _rank_basis([_vec(m) for m in mats])
    for _ in range(max_rounds):
        cur = [_mat(v) for v in basis]
        new = list(basis)
        for x, y in combinations(cur, 2):
            new.append(_vec(x @ y - y @ x))
        grown = _rank_basis(new)
        if len(grown) == len(basis):
            return len(basis)
        basis = grown
    return len(basis)
