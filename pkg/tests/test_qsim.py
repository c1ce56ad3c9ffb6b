import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quinr import qsim
from quinr.gradcheck import central_difference, compare, random_circuit
from quinr.qsim import CircuitProgram, GateOp


def test_new_statevector_is_all_zeros_state():
    assert np.array_equal(qsim.new_statevector(1).amps, [1, 0])
    assert np.array_equal(qsim.new_statevector(2).amps, [1, 0, 0, 0])


@pytest.mark.parametrize("n", [0, -1, qsim.MAX_QUBITS + 1])
def test_new_statevector_capacity(n):
    with pytest.raises(qsim.CapacityError):
        qsim.new_statevector(n)


def test_rx_pi_flips():
    s = qsim.apply_gate(qsim.new_statevector(1), GateOp("RX", 0), np.pi)
    np.testing.assert_allclose(qsim.probabilities(s), [0, 1], atol=1e-15)


def test_rx_half_pi_equal_superposition():
    s = qsim.apply_gate(qsim.new_statevector(1), GateOp("RX", 0), np.pi / 2)
    np.testing.assert_allclose(qsim.probabilities(s), [0.5, 0.5], atol=1e-15)


@pytest.mark.parametrize("theta", [0.0, 0.3, np.pi, -2.1, 7.0])
@pytest.mark.parametrize("basis", range(8))
def test_diagonal_gates_keep_basis_probabilities(theta, basis):
    amps = np.zeros(8, dtype=complex)
    amps[basis] = 1
    s = qsim.Statevector(3, amps)
    for op in (GateOp("RZ", 1), GateOp("CRZ", 2, control=0), GateOp("CRZ", 0, control=2)):
        s = qsim.apply_gate(s, op, theta)
        np.testing.assert_allclose(qsim.probabilities(s), np.abs(amps) ** 2, atol=1e-15)


def test_crz_on_zero_state_is_identity():
    s = qsim.apply_gate(qsim.new_statevector(2), GateOp("CRZ", 1, control=0), 1.234)
    np.testing.assert_array_equal(s.amps, [1, 0, 0, 0])


def test_crz_matrix_convention():
    # diag(1, 1, e^{-it/2}, e^{it/2}) in (control, target) order
    u = qsim.gate_matrix(GateOp("CRZ", 1, control=0), 2, 0.8)
    np.testing.assert_allclose(u, np.diag([1, 1, np.exp(-0.4j), np.exp(0.4j)]), atol=1e-15)


def test_qubit_zero_is_most_significant_bit():
    s = qsim.apply_gate(qsim.new_statevector(3), GateOp("RX", 0), np.pi)
    assert np.argmax(qsim.probabilities(s)) == 0b100


def test_gate_validation():
    with pytest.raises(qsim.CircuitError):
        GateOp("CRZ", 1)
    with pytest.raises(qsim.CircuitError):
        GateOp("RX", 1, control=0)
    with pytest.raises(qsim.CircuitError):
        GateOp("CRZ", 1, control=1)
    with pytest.raises(qsim.CircuitError):
        GateOp("H", 0)
    with pytest.raises(qsim.CircuitError):
        qsim.apply_gate(qsim.new_statevector(2), GateOp("RX", 2), 0.1)
    with pytest.raises(qsim.CircuitError):
        CircuitProgram(2, [GateOp("RX", 0, param=3)], n_angles=3)


def test_run_circuit_basics():
    assert np.array_equal(qsim.run_circuit(CircuitProgram(3), []).amps, qsim.new_statevector(3).amps)
    prog = CircuitProgram(1, [GateOp("RX", 0, param=0)], 1)
    np.testing.assert_allclose(qsim.probabilities(qsim.run_circuit(prog, [np.pi])), [0, 1], atol=1e-15)
    with pytest.raises(qsim.CircuitError):
        qsim.run_circuit(prog, [0.1, 0.2])


def test_literal_angles_ignore_angle_vector():
    prog = CircuitProgram(1, [GateOp("RX", 0, angle=np.pi)], 1)
    np.testing.assert_allclose(qsim.probabilities(qsim.run_circuit(prog, [0.7])), [0, 1], atol=1e-15)


def test_dense_oracle_definitions():
    np.testing.assert_array_equal(qsim.dense_matrix_oracle(CircuitProgram(2), []), np.eye(4))
    prog = CircuitProgram(1, [GateOp("RX", 0, param=0)], 1)
    np.testing.assert_allclose(qsim.dense_matrix_oracle(prog, [np.pi]), [[0, -1j], [-1j, 0]], atol=1e-15)
    with pytest.raises(qsim.CapacityError):
        qsim.dense_matrix_oracle(CircuitProgram(7), [])


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 4), n_gates=st.integers(0, 30), seed=st.integers(0, 2**32 - 1))
def test_oracle_equivalence_and_norm(n, n_gates, seed):
    rng = np.random.default_rng(seed)
    prog = random_circuit(rng, n, n_gates, max(n_gates, 1))
    angles = rng.uniform(-2 * np.pi, 2 * np.pi, prog.n_angles)
    state = qsim.run_circuit(prog, angles)
    ref = qsim.dense_matrix_oracle(prog, angles)[:, 0]
    assert np.max(np.abs(state.amps - ref)) < 1e-12
    assert abs(state.norm() - 1) < 1e-12
    p = qsim.probabilities(state)
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_trailing_diagonal_gates_keep_probabilities(seed):
    rng = np.random.default_rng(seed)
    prog = random_circuit(rng, 3, 12)
    angles = rng.uniform(0, 6, prog.n_angles)
    extra = CircuitProgram(3, prog.ops + [GateOp("RZ", 1, angle=0.9), GateOp("CRZ", 0, control=2, angle=-1.3)],
                           prog.n_angles)
    p0 = qsim.probabilities(qsim.run_circuit(prog, angles))
    p1 = qsim.probabilities(qsim.run_circuit(extra, angles))
    assert np.max(np.abs(p0 - p1)) < 1e-12


def test_batched_matches_single(rng):
    prog = random_circuit(rng, 3, 15)
    angles = rng.uniform(0, 6, (5, prog.n_angles))
    batched = qsim.run_circuit(prog, angles).amps
    for i in range(5):
        np.testing.assert_array_equal(batched[i], qsim.run_circuit(prog, angles[i]).amps)


def test_run_is_deterministic(rng):
    prog = random_circuit(rng, 4, 25)
    angles = rng.uniform(0, 6, prog.n_angles)
    assert qsim.run_circuit(prog, angles).amps.tobytes() == qsim.run_circuit(prog, angles).amps.tobytes()


def test_gradient_trivial_cases():
    prog = CircuitProgram(1, [GateOp("RX", 0, param=0)], 1)
    np.testing.assert_array_equal(qsim.circuit_gradient(prog, [0.4], [0.0, 0.0]), [0.0])
    assert qsim.circuit_gradient(prog, [0.0], [0.0, 1.0])[0] == pytest.approx(0.0, abs=1e-15)
    # d sin^2(t/2)/dt = sin(t)/2
    assert qsim.circuit_gradient(prog, [0.9], [0.0, 1.0])[0] == pytest.approx(np.sin(0.9) / 2, abs=1e-14)
    with pytest.raises(qsim.CircuitError):
        qsim.circuit_gradient(prog, [0.9], [0.0, 1.0, 2.0])


@pytest.mark.parametrize("method", ["adjoint", "parameter-shift"])
@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(method, seed):
    rng = np.random.default_rng(seed)
    prog = random_circuit(rng, 4, 30, 20)
    angles = rng.uniform(0, 2 * np.pi, 20)
    up = rng.normal(size=16)
    numeric = central_difference(lambda a: float(up @ qsim.probabilities(qsim.run_circuit(prog, a))), angles)
    result = compare("circuit", qsim.circuit_gradient(prog, angles, up, method=method), numeric)
    assert result.passed, result.line()


def test_gradient_methods_agree_batched(rng):
    prog = random_circuit(rng, 3, 20, 10)
    angles = rng.uniform(0, 6, (4, 10))
    up = rng.normal(size=(4, 8))
    a = qsim.circuit_gradient(prog, angles, up)
    b = qsim.circuit_gradient(prog, angles, up, method="parameter-shift")
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_shared_segments_match_unfused(rng):
    prog = random_circuit(rng, 3, 40, 16)
    shared = np.zeros(16, dtype=bool)
    shared[::2] = True
    angles = rng.uniform(0, 6, (6, 16))
    angles[:, shared] = angles[0, shared]
    plain = qsim.run_circuit(prog, angles)
    fused = qsim.run_circuit(prog, angles, shared)
    assert np.max(np.abs(plain.amps - fused.amps)) < 1e-12
    up = rng.normal(size=(6, 8))
    g_plain = qsim.circuit_gradient(prog, angles, up)
    g_fused = qsim.circuit_gradient(prog, angles, up, shared=shared)
    np.testing.assert_allclose(g_fused[:, ~shared], g_plain[:, ~shared], atol=1e-12)
    np.testing.assert_allclose(g_fused[:, shared].sum(0), g_plain[:, shared].sum(0), atol=1e-12)
    assert np.all(g_fused[1:, shared] == 0)
