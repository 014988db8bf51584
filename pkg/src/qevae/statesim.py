"""Dense statevector simulation.

Qubit ``q`` is bit ``q`` of the integer basis index (little-endian), so the
bitstring of index ``u`` is ``format(u, "0{n}b")`` with qubit 0 rightmost.

Two execution paths share the same gate definitions:

* ``apply_gate`` / ``run`` work on a single :class:`StateVector`;
* ``run_batch`` evolves a stack of states through a :class:`ParametricCircuit`
  where every rotation angle may differ per row. Training and gradient code
  use this path.

Gates update amplitude pairs in place over a ``(rows, hi, 2, lo)`` view, which
costs O(2^n) per gate. ``unitary`` builds the full matrix by Kronecker products
and is kept as an independent reference for tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import cos, sin, sqrt

import numpy as np

FIXED_GATES = ("H", "X", "Y", "Z", "S")
ROTATION_GATES = ("RX", "RY", "RZ", "PHASE")
TWO_QUBIT_GATES = ("CX",)
GATE_KINDS = FIXED_GATES + ROTATION_GATES + TWO_QUBIT_GATES

_S2 = 1.0 / sqrt(2.0)
_FIXED = {
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
}


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        want = 2 if self.kind in TWO_QUBIT_GATES else 1
        if len(self.qubits) != want:
            raise ValueError(f"{self.kind} acts on {want} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated qubit in {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise ValueError(f"negative qubit index in {self.qubits}")
        if self.kind in ROTATION_GATES:
            if self.angle is None:
                raise ValueError(f"{self.kind} requires an angle")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.angle is not None:
            raise ValueError(f"{self.kind} takes no angle")


@dataclass
class Circuit:
    n_qubits: int
    ops: list[GateOp] = field(default_factory=list)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        for op in self.ops:
            _check_range(op, self.n_qubits)

    def append(self, kind: str, *qubits: int, angle: float | None = None) -> "Circuit":
        op = GateOp(kind, qubits, angle)
        _check_range(op, self.n_qubits)
        self.ops.append(op)
        return self

    def __len__(self):
        return len(self.ops)


@dataclass
class StateVector:
    n_qubits: int
    amps: np.ndarray

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        if self.amps.shape != (2**self.n_qubits,):
            raise ValueError(
                f"expected {2**self.n_qubits} amplitudes, got shape {self.amps.shape}"
            )

    @classmethod
    def zeros(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


@dataclass
class Distribution:
    n_qubits: int
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != (2**self.n_qubits,):
            raise ValueError(
                f"expected {2**self.n_qubits} probabilities, got shape {self.probs.shape}"
            )
        if np.any(self.probs < -1e-12):
            raise ValueError("negative probability")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {self.probs.sum()!r}")
        self.probs = np.clip(self.probs, 0.0, None)

    @classmethod
    def uniform(cls, n_qubits: int) -> "Distribution":
        return cls(n_qubits, np.full(2**n_qubits, 2.0**-n_qubits))

    @classmethod
    def delta(cls, n_qubits: int, index: int) -> "Distribution":
        p = np.zeros(2**n_qubits)
        p[index] = 1.0
        return cls(n_qubits, p)


def _check_range(op: GateOp, n_qubits: int) -> None:
    if any(q >= n_qubits for q in op.qubits):
        raise ValueError(f"{op.kind} on qubits {op.qubits} out of range for {n_qubits} qubits")


def gate_matrix(kind: str, angle: float | None = None) -> np.ndarray:
    """2x2 matrix of a single-qubit gate (CX is handled separately)."""
    if kind in _FIXED:
        return _FIXED[kind]
    if angle is None:
        raise ValueError(f"{kind} requires an angle")
    c, s = cos(angle / 2), sin(angle / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]])
    if kind == "PHASE":
        return np.array([[1, 0], [0, cos(angle) + 1j * sin(angle)]])
    raise ValueError(f"no 2x2 matrix for {kind!r}")


def _rotation_batch(kind: str, angles: np.ndarray) -> tuple[np.ndarray, ...]:
    """Matrix entries (m00, m01, m10, m11) for a column of angles."""
    if kind == "PHASE":
        one = np.ones_like(angles, dtype=complex)
        zero = np.zeros_like(one)
        return one, zero, zero, np.exp(1j * angles)
    c, s = np.cos(angles / 2), np.sin(angles / 2)
    if kind == "RX":
        return c + 0j, -1j * s, -1j * s, c + 0j
    if kind == "RY":
        return c + 0j, -s + 0j, s + 0j, c + 0j
    if kind == "RZ":
        zero = np.zeros_like(c, dtype=complex)
        return c - 1j * s, zero, zero, c + 1j * s
    raise ValueError(f"{kind!r} is not a rotation gate")


def _apply_1q(states: np.ndarray, n: int, q: int, m00, m01, m10, m11) -> np.ndarray:
    # states: (rows, 2**n); m**: scalars or (rows,) arrays
    rows = states.shape[0]
    view = states.reshape(rows, 2 ** (n - q - 1), 2, 2**q)
    a0 = view[:, :, 0, :]
    a1 = view[:, :, 1, :]
    if np.ndim(m00):
        m00, m01, m10, m11 = (np.asarray(m)[:, None, None] for m in (m00, m01, m10, m11))
    out = np.empty_like(view)
    out[:, :, 0, :] = m00 * a0 + m01 * a1
    out[:, :, 1, :] = m10 * a0 + m11 * a1
    return out.reshape(rows, 2**n)


def _apply_diag(states: np.ndarray, n: int, q: int, d0, d1) -> np.ndarray:
    rows = states.shape[0]
    view = states.reshape(rows, 2 ** (n - q - 1), 2, 2**q).copy()
    if np.ndim(d0):
        d0, d1 = np.asarray(d0)[:, None, None], np.asarray(d1)[:, None, None]
    view[:, :, 0, :] *= d0
    view[:, :, 1, :] *= d1
    return view.reshape(rows, 2**n)


_CX_PERM_CACHE: dict[tuple[int, int, int], np.ndarray] = {}


def _cx_permutation(n: int, control: int, target: int) -> np.ndarray:
    key = (n, control, target)
    perm = _CX_PERM_CACHE.get(key)
    if perm is None:
        idx = np.arange(2**n)
        perm = np.where((idx >> control) & 1, idx ^ (1 << target), idx)
        _CX_PERM_CACHE[key] = perm
    return perm


def _apply_op_rows(states: np.ndarray, n: int, kind: str, qubits, angle) -> np.ndarray:
    if kind == "CX":
        return states[:, _cx_permutation(n, qubits[0], qubits[1])]
    q = qubits[0]
    if kind in _FIXED:
        m = _FIXED[kind]
        return _apply_1q(states, n, q, m[0, 0], m[0, 1], m[1, 0], m[1, 1])
    m00, m01, m10, m11 = _rotation_batch(kind, np.asarray(angle, dtype=float))
    if kind in ("RZ", "PHASE"):
        return _apply_diag(states, n, q, m00, m11)
    return _apply_1q(states, n, q, m00, m01, m10, m11)


def apply_gate(state: StateVector, op: GateOp) -> StateVector:
    """Return ``U @ state`` for the unitary of ``op`` on its target qubits."""
    _check_range(op, state.n_qubits)
    rows = state.amps[None, :]
    out = _apply_op_rows(rows, state.n_qubits, op.kind, op.qubits, op.angle)
    return StateVector(state.n_qubits, out[0])


def run(circuit: Circuit, initial: StateVector | None = None) -> StateVector:
    if initial is None:
        initial = StateVector.zeros(circuit.n_qubits)
    elif initial.n_qubits != circuit.n_qubits:
        raise ValueError("initial state and circuit disagree on qubit count")
    rows = initial.amps[None, :].copy()
    for op in circuit.ops:
        rows = _apply_op_rows(rows, circuit.n_qubits, op.kind, op.qubits, op.angle)
    return StateVector(circuit.n_qubits, rows[0])


def probabilities(state: StateVector) -> Distribution:
    p = np.abs(state.amps) ** 2
    return Distribution(state.n_qubits, p / p.sum())


def bitstring(index: int, n_qubits: int) -> str:
    return format(int(index), f"0{n_qubits}b")


def bits_to_index(bits: str) -> int:
    return int(bits, 2)


def sample(dist: Distribution, shots: int, rng_seed: int) -> list[str]:
    """Draw ``shots`` iid bitstrings from ``dist`` with a seeded generator."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(rng_seed)
    idx = rng.choice(dist.probs.size, size=shots, p=dist.probs / dist.probs.sum())
    return [bitstring(i, dist.n_qubits) for i in idx]


def unitary(circuit: Circuit) -> np.ndarray:
    """Full 2^n x 2^n unitary of ``circuit`` built from Kronecker products."""
    n = circuit.n_qubits
    u = np.eye(2**n, dtype=complex)
    for op in circuit.ops:
        u = _embed(op, n) @ u
    return u


def _embed(op: GateOp, n: int) -> np.ndarray:
    if op.kind == "CX":
        c, t = op.qubits
        p0 = np.diag([1.0, 0.0]).astype(complex)
        p1 = np.diag([0.0, 1.0]).astype(complex)
        a = {c: p0}
        b = {c: p1, t: _FIXED["X"]}
        return _kron_map(a, n) + _kron_map(b, n)
    return _kron_map({op.qubits[0]: gate_matrix(op.kind, op.angle)}, n)


def _kron_map(factors: dict[int, np.ndarray], n: int) -> np.ndarray:
    # leftmost Kronecker factor is the most significant qubit
    out = np.array([[1.0 + 0j]])
    for q in reversed(range(n)):
        out = np.kron(out, factors.get(q, np.eye(2)))
    return out


@dataclass(frozen=True)
class ParamOp:
    """Gate in a :class:`ParametricCircuit`; rotations read ``angles[:, slot]``."""

    kind: str
    qubits: tuple[int, ...]
    slot: int | None = None


@dataclass
class ParametricCircuit:
    n_qubits: int
    ops: list[ParamOp]
    n_slots: int

    def bind(self, angles) -> Circuit:
        angles = np.asarray(angles, dtype=float)
        if angles.shape != (self.n_slots,):
            raise ValueError(f"expected {self.n_slots} angles, got shape {angles.shape}")
        return Circuit(
            self.n_qubits,
            [GateOp(op.kind, op.qubits, None if op.slot is None else angles[op.slot])
             for op in self.ops],
        )


def run_batch(template: ParametricCircuit, angles: np.ndarray,
              initial: np.ndarray | None = None) -> np.ndarray:
    """Evolve one state per row of ``angles`` (shape ``(rows, n_slots)``).

    Returns complex amplitudes of shape ``(rows, 2**n)``.
    """
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    rows, n = angles.shape[0], template.n_qubits
    if angles.shape[1] != template.n_slots:
        raise ValueError(f"expected {template.n_slots} angle columns, got {angles.shape[1]}")
    if initial is None:
        states = np.zeros((rows, 2**n), dtype=complex)
        states[:, 0] = 1.0
    else:
        states = np.array(np.broadcast_to(initial, (rows, 2**n)), dtype=complex)
    for op in template.ops:
        col = None if op.slot is None else angles[:, op.slot]
        states = _apply_op_rows(states, n, op.kind, op.qubits, col)
    return states


def adjoint_angle_grads(template: ParametricCircuit, angles: np.ndarray,
                        outcomes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Probability of ``outcomes[r]`` per row and its derivative w.r.t. each slot.

    Reverse sweep over the circuit: with ``psi`` the state after a rotation and
    ``lam`` the basis bra pulled back to the same point, the amplitude
    derivative is ``<lam| -i G/2 |psi>`` for generator ``G``. PHASE shares the
    RZ generator up to a global phase, which drops out of the probability.
    """
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    rows, n = angles.shape[0], template.n_qubits
    psi = run_batch(template, angles)
    r = np.arange(rows)
    amp = psi[r, outcomes]
    lam = np.zeros_like(psi)
    lam[r, outcomes] = 1.0
    grads = np.zeros((rows, template.n_slots))
    for op in reversed(template.ops):
        col = None if op.slot is None else angles[:, op.slot]
        if op.slot is not None:
            q = op.qubits[0]
            gen = _generator_rows(psi, n, q, op.kind)
            damp = np.einsum("rk,rk->r", lam.conj(), gen) * (-0.5j)
            grads[:, op.slot] += 2.0 * np.real(np.conj(amp) * damp)
        psi = _apply_inverse_rows(psi, n, op, col)
        lam = _apply_inverse_rows(lam, n, op, col)
    return np.abs(amp) ** 2, grads


def _generator_rows(states: np.ndarray, n: int, q: int, kind: str) -> np.ndarray:
    gen = {"RX": "X", "RY": "Y", "RZ": "Z", "PHASE": "Z"}[kind]
    m = _FIXED[gen]
    return _apply_1q(states, n, q, m[0, 0], m[0, 1], m[1, 0], m[1, 1])


def _apply_inverse_rows(states, n, op: ParamOp, col):
    if op.kind == "CX":
        return _apply_op_rows(states, n, "CX", op.qubits, None)
    if op.kind in _FIXED:
        m = _FIXED[op.kind].conj().T
        return _apply_1q(states, n, op.qubits[0], m[0, 0], m[0, 1], m[1, 0], m[1, 1])
    return _apply_op_rows(states, n, op.kind, op.qubits, -col)
