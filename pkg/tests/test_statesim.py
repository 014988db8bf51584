import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qevae.statesim import (GATE_KINDS, Circuit, Distribution, GateOp, ParamOp,
                            ParametricCircuit, StateVector, apply_gate, bitstring, gate_matrix,
                            probabilities, run, run_batch, sample, unitary)


def random_state(n, rng):
    a = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return StateVector(n, a / np.linalg.norm(a))


def random_op(n, rng):
    kind = GATE_KINDS[rng.integers(len(GATE_KINDS))]
    if kind == "CX":
        qs = rng.choice(n, 2, replace=False)
    else:
        qs = [rng.integers(n)]
    angle = rng.uniform(-2 * np.pi, 2 * np.pi) if kind in ("RX", "RY", "RZ", "PHASE") else None
    return GateOp(kind, tuple(int(q) for q in qs), angle)


def random_circuit(n, depth, rng):
    return Circuit(n, [random_op(n, rng) for _ in range(depth)])


# --- gate application -------------------------------------------------------

def test_hadamard_on_zero():
    out = apply_gate(StateVector.zeros(1), GateOp("H", (0,)))
    np.testing.assert_allclose(out.amps, [2**-0.5, 2**-0.5], atol=1e-15)


def test_rx_pi_flips_with_phase():
    out = apply_gate(StateVector.zeros(1), GateOp("RX", (0,), np.pi))
    np.testing.assert_allclose(out.amps, [0, -1j], atol=1e-15)


def test_cx_truth_table():
    # |q1=0, q0=1> is index 1; CX(0 -> 1) yields |q1=1, q0=1> = index 3
    out = apply_gate(StateVector.basis(2, 1), GateOp("CX", (0, 1)))
    np.testing.assert_allclose(out.amps, [0, 0, 0, 1], atol=0)


def test_invalid_ops_rejected():
    with pytest.raises(ValueError):
        GateOp("RX", (0,))
    with pytest.raises(ValueError):
        GateOp("CX", (1, 1))
    with pytest.raises(ValueError):
        GateOp("H", (0, 1))
    with pytest.raises(ValueError):
        GateOp("FOO", (0,))
    with pytest.raises(ValueError):
        apply_gate(StateVector.zeros(2), GateOp("H", (2,)))
    with pytest.raises(ValueError):
        Circuit(2, [GateOp("CX", (0, 3))])


@pytest.mark.parametrize("kind", GATE_KINDS)
def test_every_gate_preserves_norm(kind):
    rng = np.random.default_rng(11)
    n = 3
    for _ in range(100):
        psi = random_state(n, rng)
        qs = (0, 2) if kind == "CX" else (int(rng.integers(n)),)
        angle = rng.uniform(-7, 7) if kind in ("RX", "RY", "RZ", "PHASE") else None
        out = apply_gate(psi, GateOp(kind, qs, angle))
        assert abs(out.norm() - 1.0) < 1e-10


def test_involutions_and_inverse_rotations():
    rng = np.random.default_rng(2)
    for _ in range(20):
        psi = random_state(3, rng)
        th = rng.uniform(-np.pi, np.pi)
        for ops in ([GateOp("RX", (1,), th), GateOp("RX", (1,), -th)],
                    [GateOp("H", (2,)), GateOp("H", (2,))],
                    [GateOp("CX", (2, 0)), GateOp("CX", (2, 0))]):
            out = run(Circuit(3, ops), psi)
            np.testing.assert_allclose(out.amps, psi.amps, atol=1e-10)


def test_gate_matrices_unitary():
    for kind in GATE_KINDS:
        if kind == "CX":
            continue
        m = gate_matrix(kind, 0.37 if kind in ("RX", "RY", "RZ", "PHASE") else None)
        np.testing.assert_allclose(m @ m.conj().T, np.eye(2), atol=1e-14)


def test_strided_application_matches_kronecker_unitary():
    rng = np.random.default_rng(5)
    for n in (2, 3, 4):
        c = random_circuit(n, 30, rng)
        psi = random_state(n, rng)
        np.testing.assert_allclose(run(c, psi).amps, unitary(c) @ psi.amps, atol=1e-12)


# --- circuits ---------------------------------------------------------------

def test_empty_circuit_is_identity():
    assert np.array_equal(run(Circuit(3)).amps, StateVector.zeros(3).amps)


def test_hh_is_identity():
    out = run(Circuit(1).append("H", 0).append("H", 0))
    np.testing.assert_allclose(out.amps, [1, 0], atol=1e-15)


def test_bell_state():
    out = run(Circuit(2).append("H", 0).append("CX", 0, 1))
    np.testing.assert_allclose(out.amps, [2**-0.5, 0, 0, 2**-0.5], atol=1e-15)
    np.testing.assert_allclose(probabilities(out).probs, [0.5, 0, 0, 0.5], atol=1e-15)


def test_probabilities_little_endian():
    out = probabilities(run(Circuit(2).append("H", 0)))
    np.testing.assert_allclose(out.probs, [0.5, 0.5, 0, 0], atol=1e-15)
    np.testing.assert_allclose(probabilities(StateVector.basis(1, 1)).probs, [0, 1])
    assert bitstring(1, 3) == "001"


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 8), depth=st.integers(0, 100), seed=st.integers(0, 2**31))
def test_probabilities_normalized_for_random_circuits(n, depth, seed):
    rng = np.random.default_rng(seed)
    ops = []
    for _ in range(depth):
        op = random_op(max(n, 2), rng)
        if max(op.qubits) < n:
            ops.append(op)
    p = probabilities(run(Circuit(n, ops))).probs
    assert abs(p.sum() - 1.0) < 1e-9
    assert p.min() >= 0


def test_distribution_validation():
    with pytest.raises(ValueError):
        Distribution(1, np.array([0.6, 0.6]))
    with pytest.raises(ValueError):
        Distribution(1, np.array([1.1, -0.1]))
    with pytest.raises(ValueError):
        Distribution(2, np.array([0.5, 0.5]))


# --- batched parametric execution -------------------------------------------

def test_run_batch_matches_bound_circuits():
    rng = np.random.default_rng(8)
    ops = [ParamOp("H", (0,)), ParamOp("RX", (1,), 0), ParamOp("CX", (0, 2)),
           ParamOp("RY", (2,), 1), ParamOp("PHASE", (0,), 2), ParamOp("RZ", (1,), 0),
           ParamOp("S", (2,)), ParamOp("CX", (2, 1))]
    template = ParametricCircuit(3, ops, 3)
    angles = rng.uniform(-4, 4, (6, 3))
    batch = run_batch(template, angles)
    for row, a in zip(batch, angles):
        np.testing.assert_allclose(row, run(template.bind(a)).amps, atol=1e-13)


# --- sampling ---------------------------------------------------------------

def test_sample_delta():
    assert sample(Distribution.delta(3, 0b101), 10, 0) == ["101"] * 10


def test_sample_fair_coin_concentration():
    shots = sample(Distribution(1, np.array([0.5, 0.5])), 100_000, 7)
    ones = sum(s == "1" for s in shots)
    assert 0.49 <= ones / 1e5 <= 0.51
    assert stats.chisquare([1e5 - ones, ones]).pvalue > 0.001


def test_sample_deterministic():
    d = Distribution(2, np.array([0.1, 0.2, 0.3, 0.4]))
    assert sample(d, 500, 3) == sample(d, 500, 3)
    assert sample(d, 500, 3) != sample(d, 500, 4)


def test_sample_total_variation_small():
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.ones(16))
    shots = sample(Distribution(4, p), 1_000_000, 9)
    counts = np.bincount([int(s, 2) for s in shots], minlength=16) / 1e6
    assert 0.5 * np.abs(counts - p).sum() < 0.01


def test_sample_rejects_zero_shots():
    with pytest.raises(ValueError):
        sample(Distribution.uniform(1), 0, 0)
