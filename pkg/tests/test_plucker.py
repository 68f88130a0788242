import numpy as np
import pytest
import scipy.linalg

from riccatiflow.bloch import MVector, phase_stripped_distance, propagate_bloch
from riccatiflow.decompose import propagate_decomposed, z_components
from riccatiflow.errors import ChartBreakdownError, DimensionError, ValidationError
from riccatiflow.generators import AntisymmetricCoeffs
from riccatiflow.oracle import propagate_direct
from riccatiflow.plucker import (
    OMEGA,
    PluckerVector,
    m_from_plucker,
    plucker_from_m,
    plucker_from_unitary,
    plucker_hamiltonian,
    propagate_plucker,
    symplectic_form,
    symplectic_pairing,
    z_from_unitary,
)
from riccatiflow.schedule import ConstantLaw, HamiltonianSchedule, HarmonicLaw, Segment

SX = np.array([[0, 1], [1, 0]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def su4_coeffs(rng, scale=1.0):
    return AntisymmetricCoeffs(6, rng.normal(size=15) * scale)


def random_unitary(rng):
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    Q, R = np.linalg.qr(A)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def test_symplectic_form_properties():
    W = symplectic_form()
    assert np.array_equal(W, W.T)
    assert np.array_equal(W @ W, np.eye(6))
    assert np.array_equal(W, np.fliplr(np.eye(6)))


def test_identity_extraction():
    P = plucker_from_unitary(np.eye(4))
    assert np.allclose(P.components, [1j, 0, 0, 0, 0, 0])
    assert P.quadric_residual() == 0.0
    assert P.norm_residual() == 0.0


def test_block_diagonal_stabilizer():
    # block-diagonal operators only change the extracted vector by a phase
    rng = np.random.default_rng(0)
    for _ in range(4):
        q1, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        q2, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        U = np.zeros((4, 4), dtype=complex)
        U[:2, :2], U[2:, 2:] = q1, q2
        P = plucker_from_unitary(U)
        overlap = np.vdot(PluckerVector.origin().components, P.components)
        assert abs(abs(overlap) - 1.0) < 1e-12


def test_extraction_constraints_random():
    rng = np.random.default_rng(1)
    for _ in range(8):
        P = plucker_from_unitary(random_unitary(rng))
        assert P.quadric_residual() < 1e-12
        assert P.norm_residual() < 1e-12


def test_extraction_rejects_bad_columns():
    U = np.eye(4, dtype=complex)
    U[2, 2] = 2.0
    with pytest.raises(ValidationError):
        plucker_from_unitary(U)


def test_plane_map_of_bloch_vector_and_back():
    rng = np.random.default_rng(2)
    F = su4_coeffs(rng)
    O = scipy.linalg.expm(2.0 * F.matrix * 0.9)
    m = MVector(O @ MVector.chart_origin().components)
    P = plucker_from_m(m)
    assert P.norm_residual() < 1e-12  # |P|^2 = |m|^2 / 2 = 1
    assert P.quadric_residual() < 1e-12
    back = m_from_plucker(P)
    assert np.abs(back.components - m.components).max() < 1e-13
    # chart origin maps onto the identity plane vector
    assert np.allclose(
        plucker_from_m(MVector.chart_origin()).components, [1j, 0, 0, 0, 0, 0]
    )


def test_plane_map_norm_relation():
    rng = np.random.default_rng(3)
    F = su4_coeffs(rng)
    m = MVector(scipy.linalg.expm(2.0 * F.matrix * 1.3) @ MVector.chart_origin().components)
    P = plucker_from_m(m)
    assert np.sum(np.abs(P.components) ** 2) == pytest.approx(
        0.5 * np.sum(np.abs(m.components) ** 2)
    )


def test_generator_zero_and_diagonal():
    assert np.abs(plucker_hamiltonian(np.zeros((4, 4)))).max() == 0.0
    h = np.diag([1.0, 2.0, -0.5, -2.5])
    HP = plucker_hamiltonian(h)
    assert np.allclose(np.diag(HP), [3.0, 0.5, -1.5, 1.5, -0.5, -3.0])
    assert np.abs(HP - np.diag(np.diag(HP))).max() == 0.0


def test_generator_hermitian_and_symplectic():
    rng = np.random.default_rng(4)
    for _ in range(6):
        A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        H = (A + A.conj().T) / 2
        H -= np.trace(H) / 4 * np.eye(4)
        HP = plucker_hamiltonian(H)
        assert np.abs(HP - HP.conj().T).max() < 1e-13
        assert np.abs(HP @ OMEGA + OMEGA @ HP.T).max() < 1e-13
    with pytest.raises(ValidationError):
        plucker_hamiltonian(np.triu(np.ones((4, 4))))


def test_propagation_trivial_and_constant():
    sched = HamiltonianSchedule(4, (Segment(1.0, ConstantLaw(AntisymmetricCoeffs.zeros(6))),))
    P0 = PluckerVector.origin()
    traj = propagate_plucker(sched, P0, np.linspace(0, 1, 4))
    assert np.abs(traj.values - P0.components).max() < 1e-14

    rng = np.random.default_rng(5)
    F = su4_coeffs(rng, 0.8)
    sched = HamiltonianSchedule(4, (Segment(1.0, ConstantLaw(F)),))
    grid = np.linspace(0.0, 1.0, 6)
    traj = propagate_plucker(sched, P0, grid)
    orc = propagate_direct(sched, grid)
    for k in range(grid.size):
        P_ext = plucker_from_unitary(orc.operators[k])
        assert np.abs(P_ext.components - traj.values[k]).max() < 1e-10


def test_propagation_matches_extraction_time_dependent():
    rng = np.random.default_rng(6)
    sched = HamiltonianSchedule(4, (
        Segment(0.5, HarmonicLaw(su4_coeffs(rng, 0.5), su4_coeffs(rng, 0.5), 2.9, 0.1)),
        Segment(0.5, ConstantLaw(su4_coeffs(rng, 0.6))),
    ))
    grid = np.linspace(0.0, 1.0, 6)
    traj = propagate_plucker(sched, PluckerVector.origin(), grid)
    orc = propagate_direct(sched, grid)
    worst = max(
        np.abs(plucker_from_unitary(orc.operators[k]).components - traj.values[k]).max()
        for k in range(grid.size)
    )
    assert worst < 1e-8


def test_conservation_long_run():
    rng = np.random.default_rng(7)
    sched = HamiltonianSchedule(4, (
        Segment(10.0, HarmonicLaw(su4_coeffs(rng, 0.4), su4_coeffs(rng, 0.4), 1.7, 0.0)),
    ))
    grid = np.linspace(0.0, 10.0, 26)
    traj = propagate_plucker(sched, PluckerVector.origin(), grid)
    for row in traj.values:
        vec = PluckerVector(row)
        assert vec.quadric_residual() < 1e-10
        assert vec.norm_residual() < 1e-10


def test_pairing_examples_and_conservation():
    rng = np.random.default_rng(8)
    P = plucker_from_unitary(random_unitary(rng))
    assert abs(symplectic_pairing(P, P)) < 1e-12  # self-pairing is the quadric
    assert abs(symplectic_pairing(PluckerVector.origin(), PluckerVector.origin())) == 0.0

    sched = HamiltonianSchedule(4, (Segment(2.0, ConstantLaw(su4_coeffs(rng, 0.7))),))
    grid = np.linspace(0.0, 2.0, 9)
    t1 = propagate_plucker(sched, PluckerVector.origin(), grid)
    t2 = propagate_plucker(sched, P, grid)
    pairings = [
        symplectic_pairing(PluckerVector(t1.values[k]), PluckerVector(t2.values[k]))
        for k in range(grid.size)
    ]
    assert max(abs(p - pairings[0]) for p in pairings) < 1e-10


def test_plane_bloch_consistency_phase_stripped():
    rng = np.random.default_rng(9)
    F = su4_coeffs(rng, 0.6)
    sched = HamiltonianSchedule(4, (Segment(1.0, ConstantLaw(F)),))
    grid = np.linspace(0.0, 1.0, 6)
    orc = propagate_direct(sched, grid)
    mtraj = propagate_bloch(sched, MVector.chart_origin(), grid)
    for k in range(grid.size):
        mv = m_from_plucker(plucker_from_unitary(orc.operators[k]))
        assert phase_stripped_distance(mv, MVector(mtraj.values[k])) < 1e-8


def test_chart_from_operator():
    assert np.abs(z_from_unitary(np.eye(4)).z).max() == 0.0
    t = np.pi / 4
    U = np.cos(t) * np.eye(4) - 1j * np.sin(t) * np.kron(SX, I2)
    chart = z_from_unitary(U)
    assert np.abs(chart.z - (-1j * np.tan(t)) * I2).max() < 1e-14

    singular = np.zeros((4, 4), dtype=complex)
    singular[:2, 2:] = I2
    singular[2:, :2] = I2
    with pytest.raises(ChartBreakdownError):
        z_from_unitary(singular)


def test_chart_from_operator_matches_engine():
    rng = np.random.default_rng(10)
    F = su4_coeffs(rng, 0.6)
    sched = HamiltonianSchedule(4, (Segment(1.0, ConstantLaw(F)),))
    grid = np.linspace(0.2, 1.0, 5)
    rec = propagate_decomposed(sched, 2, grid)
    orc = propagate_direct(sched, grid)
    for k in range(grid.size):
        chart = z_from_unitary(orc.operators[k])
        assert np.abs(chart.z - rec.chart[k]).max() < 1e-9


def test_vector_validation():
    with pytest.raises(DimensionError):
        PluckerVector(np.zeros(5))
    bad = PluckerVector(np.array([1.0, 0, 0, 0, 0, 1.0]))  # violates the quadric
    with pytest.raises(ValidationError):
        bad.validate()
