import numpy as np
import pytest

from riccatiflow.errors import InvalidIndexError, ValidationError
from riccatiflow.generators import (
    PAIRS6,
    AntisymmetricCoeffs,
    coeffs_from_hamiltonian,
    hamiltonian_from_coeffs,
    lie_closure_dimension,
    pairs,
    project_coeffs,
    so6_commutator_table,
    so6_generator,
    su4_generator,
    su4_generator_table,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def test_so6_generator_two_entries():
    g = so6_generator(1, 2)
    expect = np.zeros((6, 6))
    expect[0, 1] = 1.0
    expect[1, 0] = -1.0
    assert np.array_equal(g.matrix, expect)


def test_so6_generator_antisymmetric_in_indices():
    assert np.array_equal(so6_generator(2, 1).matrix, -so6_generator(1, 2).matrix)


@pytest.mark.parametrize("mu,nu", [(3, 3), (0, 2), (1, 7), (7, 7)])
def test_so6_generator_invalid_indices(mu, nu):
    with pytest.raises(InvalidIndexError):
        so6_generator(mu, nu)


def test_commutator_table_closes_exactly():
    # integer arithmetic: every tabulated combination must reproduce the
    # matrix commutator with no tolerance at all
    table = so6_commutator_table()
    mats = {p: so6_generator(*p).matrix for p in PAIRS6}
    for a in PAIRS6:
        for b in PAIRS6:
            lhs = mats[a] @ mats[b] - mats[b] @ mats[a]
            rhs = np.zeros((6, 6))
            for p, coeff in table[(a, b)].items():
                rhs = rhs + coeff * mats[p]
            assert np.array_equal(lhs, rhs), (a, b)


def test_commutator_examples():
    table = so6_commutator_table()
    assert table[((1, 2), (2, 3))] == {(1, 3): 1}
    assert table[((1, 2), (3, 4))] == {}
    assert table[((1, 2), (1, 2))] == {}


def test_basis_hermitian_traceless_orthogonal():
    G = su4_generator_table()
    for a in PAIRS6:
        assert np.allclose(G[a], G[a].conj().T)
        assert abs(np.trace(G[a])) == 0.0
    for a in PAIRS6:
        for b in PAIRS6:
            want = 4.0 if a == b else 0.0
            assert abs(np.trace(G[a] @ G[b]) - want) < 1e-14


def test_basis_antisymmetric_in_indices():
    for a, b in PAIRS6:
        assert np.array_equal(su4_generator(b, a), -su4_generator(a, b))


def test_hamiltonian_from_single_coefficients():
    F = AntisymmetricCoeffs.from_pairs({(6, 5): 1.0})
    assert np.allclose(hamiltonian_from_coeffs(F), np.kron(SZ, I2))
    F = AntisymmetricCoeffs.from_pairs({(2, 1): 1.0})
    assert np.allclose(hamiltonian_from_coeffs(F), np.kron(I2, SZ))
    assert np.allclose(hamiltonian_from_coeffs(AntisymmetricCoeffs.zeros(6)), 0.0)


def test_section_terms_match_physics_labels():
    # each paper-style coefficient label lands on its Pauli product
    cases = {
        (3, 1): -np.kron(I2, SY),
        (3, 2): np.kron(I2, SX),
        (4, 3): -np.kron(SZ, SZ),
        (5, 2): np.kron(SX, SY),
        (5, 4): -np.kron(SY, I2),
        (6, 4): np.kron(SX, I2),
        (6, 2): np.kron(SY, SY),
    }
    for pair, mat in cases.items():
        F = AntisymmetricCoeffs.from_pairs({pair: 1.0})
        assert np.allclose(hamiltonian_from_coeffs(F), mat), pair


def test_coeffs_from_hamiltonian_roundtrip():
    rng = np.random.default_rng(42)
    for _ in range(6):
        A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        H = (A + A.conj().T) / 2
        H -= np.trace(H) / 4 * np.eye(4)
        F = coeffs_from_hamiltonian(H)
        assert np.abs(hamiltonian_from_coeffs(F) - H).max() < 1e-14
    F = AntisymmetricCoeffs(6, rng.normal(size=15))
    back = coeffs_from_hamiltonian(hamiltonian_from_coeffs(F))
    assert np.abs(back.upper - F.upper).max() < 1e-14


def test_coeffs_from_hamiltonian_sigma_z():
    F = coeffs_from_hamiltonian(np.kron(SZ, I2))
    assert abs(F.get(6, 5) - 1.0) < 1e-15
    others = [p for p in PAIRS6 if p != (5, 6)]
    assert all(abs(F.get(*p)) < 1e-15 for p in others)


def test_coeffs_from_hamiltonian_rejects_bad_input():
    with pytest.raises(ValidationError):
        coeffs_from_hamiltonian(np.diag([1.0, 0, 0, 0]))  # not traceless
    bad = np.zeros((4, 4), dtype=complex)
    bad[0, 1] = 1.0  # not Hermitian
    with pytest.raises(ValidationError):
        coeffs_from_hamiltonian(bad)


def test_structure_constants_match_rotation_algebra():
    # commutators of the 4x4 basis, divided by 2i, reproduce the rotation
    # structure constants entry for entry on all 105 unordered pairs
    G = su4_generator_table()
    table = so6_commutator_table()
    worst = 0.0
    for i, a in enumerate(PAIRS6):
        for b in PAIRS6[i + 1:]:
            lhs = (G[a] @ G[b] - G[b] @ G[a]) / 2j
            rhs = sum((c * G[p] for p, c in table[(a, b)].items()), np.zeros((4, 4), complex))
            worst = max(worst, np.abs(lhs - rhs).max())
    assert worst < 1e-13


@pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
def test_block_nesting_closure(k):
    # generators within the leading k x k index block close among themselves
    G = su4_generator_table()
    inside = [p for p in PAIRS6 if p[1] <= k]
    for a in inside:
        for b in inside:
            comm = (G[a] @ G[b] - G[b] @ G[a]) / 2j
            support = AntisymmetricCoeffs(6, project_coeffs(comm)).active_pairs(1e-12)
            assert support <= set(inside), (a, b, support)


def test_antisymmetric_coeffs_pairs_api():
    F = AntisymmetricCoeffs.from_pairs({(6, 5): 2.0, (1, 2): -0.5})
    assert F.get(6, 5) == 2.0
    assert F.get(5, 6) == -2.0
    assert F.get(1, 2) == -0.5
    M = F.matrix
    assert np.array_equal(M, -M.T)
    assert M[5, 4] == 2.0
    with pytest.raises(ValidationError):
        AntisymmetricCoeffs.from_pairs({(1, 2): 1.0, (2, 1): 1.0})


def test_antisymmetric_coeffs_from_matrix_validation():
    good = so6_generator(2, 5).matrix * 0.3
    F = AntisymmetricCoeffs.from_matrix(good)
    assert F.get(2, 5) == pytest.approx(0.3)
    with pytest.raises(ValidationError):
        AntisymmetricCoeffs.from_matrix(np.eye(6))


def test_restrict_and_embed():
    F = AntisymmetricCoeffs.from_pairs({(5, 4): 1.0})
    F5 = F.restrict(5)
    assert F5.dim == 5 and F5.get(5, 4) == 1.0
    assert F5.embed(6).get(5, 4) == 1.0
    with pytest.raises(ValidationError):
        AntisymmetricCoeffs.from_pairs({(6, 5): 1.0}).restrict(5)


def test_lie_closure_dimensions():
    def mats(ps):
        return [so6_generator(*p).matrix for p in ps]

    assert lie_closure_dimension(mats([(1, 2)])) == 1
    assert lie_closure_dimension(mats([(1, 2), (2, 3)])) == 3
    so5 = [p for p in PAIRS6 if p[1] <= 5]
    assert lie_closure_dimension(mats(so5)) == 10
    assert lie_closure_dimension(mats(list(PAIRS6))) == 15
