"""Circuit templates: Pauli feature maps, two-local ansatz, random state
builders, gate tallies and OpenQASM 2.0 export/import."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from math import pi

import numpy as np

from .statesim import Circuit, GateOp, ParametricCircuit, ParamOp

ROTATIONS = ("RX", "RY", "RZ")


def linear_pairs(n_qubits: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(n_qubits - 1)]


@dataclass
class FeatureMapSpec:
    kind: str
    n_qubits: int
    reps: int = 1
    entanglement_pairs: list[tuple[int, int]] | None = None

    def __post_init__(self):
        self.kind = self.kind.upper()
        if self.kind not in ("Z", "ZZ"):
            raise ValueError(f"feature map kind must be Z or ZZ, got {self.kind!r}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.kind == "Z":
            if self.entanglement_pairs:
                raise ValueError("a Z feature map takes no entanglement pairs")
            self.entanglement_pairs = []
        elif self.entanglement_pairs is None:
            self.entanglement_pairs = linear_pairs(self.n_qubits)
        pairs = [tuple(int(q) for q in p) for p in self.entanglement_pairs]
        for i, j in pairs:
            if i == j or not (0 <= i < self.n_qubits and 0 <= j < self.n_qubits):
                raise ValueError(f"invalid entanglement pair {(i, j)}")
        self.entanglement_pairs = pairs

    def template(self) -> tuple[ParametricCircuit, list[tuple]]:
        """Parametric circuit plus, per slot, the input indices it reads.

        A slot tagged ``(i,)`` holds ``2 x_i``; ``(i, j)`` holds
        ``2 (pi - x_i)(pi - x_j)``.
        """
        ops, sources = [], []
        n = self.n_qubits
        for _ in range(self.reps):
            ops.extend(ParamOp("H", (q,)) for q in range(n))
            for q in range(n):
                ops.append(ParamOp("PHASE", (q,), len(sources)))
                sources.append((q,))
            for i, j in self.entanglement_pairs:
                ops.append(ParamOp("CX", (i, j)))
                ops.append(ParamOp("PHASE", (j,), len(sources)))
                sources.append((i, j))
                ops.append(ParamOp("CX", (i, j)))
        return ParametricCircuit(n, ops, len(sources)), sources

    def angles(self, x: np.ndarray) -> np.ndarray:
        """Slot angles for one input (shape ``(n,)``) or a batch ``(rows, n)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_qubits:
            raise ValueError(f"feature map expects {self.n_qubits} inputs, got {x.shape[-1]}")
        _, sources = self.template()
        cols = []
        for src in sources:
            if len(src) == 1:
                cols.append(2.0 * x[..., src[0]])
            else:
                cols.append(2.0 * (pi - x[..., src[0]]) * (pi - x[..., src[1]]))
        return np.stack(cols, axis=-1)

    def angle_jacobian(self, x: np.ndarray) -> np.ndarray:
        """d(slot angle)/d(input) with shape ``(..., n_slots, n)``."""
        x = np.asarray(x, dtype=float)
        _, sources = self.template()
        jac = np.zeros(x.shape[:-1] + (len(sources), self.n_qubits))
        for s, src in enumerate(sources):
            if len(src) == 1:
                jac[..., s, src[0]] = 2.0
            else:
                i, j = src
                jac[..., s, i] += -2.0 * (pi - x[..., j])
                jac[..., s, j] += -2.0 * (pi - x[..., i])
        return jac


@dataclass
class AnsatzSpec:
    n_qubits: int
    reps: int = 2
    rotation_kinds: list[str] = field(default_factory=lambda: ["RX", "RY"])
    entanglement: str = "linear"

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        self.rotation_kinds = [k.upper() for k in self.rotation_kinds]
        if not self.rotation_kinds or any(k not in ROTATIONS for k in self.rotation_kinds):
            raise ValueError(f"rotation kinds must come from {ROTATIONS}")
        if self.entanglement != "linear":
            raise ValueError("only linear entanglement is supported")

    @property
    def n_params(self) -> int:
        return self.reps * len(self.rotation_kinds) * self.n_qubits

    def template(self) -> ParametricCircuit:
        ops, slot = [], 0
        for _ in range(self.reps):
            for kind in self.rotation_kinds:
                for q in range(self.n_qubits):
                    ops.append(ParamOp(kind, (q,), slot))
                    slot += 1
            ops.extend(ParamOp("CX", pair) for pair in linear_pairs(self.n_qubits))
        return ParametricCircuit(self.n_qubits, ops, slot)


def build_feature_map(spec: FeatureMapSpec, x) -> Circuit:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.n_qubits,):
        raise ValueError(f"feature map expects {spec.n_qubits} inputs, got shape {x.shape}")
    template, _ = spec.template()
    return template.bind(spec.angles(x))


def build_two_local(spec: AnsatzSpec, theta) -> Circuit:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n_params,):
        raise ValueError(f"ansatz expects {spec.n_params} parameters, got shape {theta.shape}")
    return spec.template().bind(theta)


def build_random_product_circuit(n: int, seed: int) -> Circuit:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2 * pi, size=(n, 3))
    circuit = Circuit(n)
    for q in range(n):
        for kind, a in zip(ROTATIONS, angles[q]):
            circuit.append(kind, q, angle=a)
    return circuit


def build_random_layered_circuit(n: int, layers: int, seed: int) -> Circuit:
    """``layers`` x (RX layer, RY layer, linear CX chain) with uniform angles."""
    if n < 2:
        raise ValueError("layered circuits need n >= 2")
    if layers < 0:
        raise ValueError("layers must be >= 0")
    rng = np.random.default_rng(seed)
    circuit = Circuit(n)
    for _ in range(layers):
        for kind in ("RX", "RY"):
            for q, a in enumerate(rng.uniform(0.0, 2 * pi, size=n)):
                circuit.append(kind, q, angle=a)
        for i, j in linear_pairs(n):
            circuit.append("CX", i, j)
    return circuit


def gate_counts(circuit: Circuit) -> dict[str, int]:
    return dict(Counter(op.kind for op in circuit.ops))


def concat(*circuits: Circuit) -> Circuit:
    n = circuits[0].n_qubits
    if any(c.n_qubits != n for c in circuits):
        raise ValueError("circuits disagree on qubit count")
    return Circuit(n, [op for c in circuits for op in c.ops])


# PHASE is emitted as u1, which qelib1.inc defines as diag(1, e^{i lambda}).
_QASM_NAME = {"H": "h", "X": "x", "Y": "y", "Z": "z", "S": "s",
              "RX": "rx", "RY": "ry", "RZ": "rz", "PHASE": "u1", "CX": "cx"}
_QASM_KIND = {v: k for k, v in _QASM_NAME.items()}
_QASM_LINE = re.compile(
    r"^(?P<name>[a-z][a-z0-9]*)(?:\((?P<arg>[^)]*)\))?\s+"
    r"q\[(?P<q0>\d+)\](?:\s*,\s*q\[(?P<q1>\d+)\])?;$"
)
_MEASURE_LINE = re.compile(r"^measure\s+q\[(\d+)\]\s*->\s*c\[(\d+)\];$")


def to_qasm(circuit: Circuit) -> str:
    n = circuit.n_qubits
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{n}];", f"creg c[{n}];"]
    for op in circuit.ops:
        name = _QASM_NAME[op.kind]
        args = f"({op.angle:.17g})" if op.angle is not None else ""
        targets = ",".join(f"q[{q}]" for q in op.qubits)
        lines.append(f"{name}{args} {targets};")
    lines.extend(f"measure q[{q}] -> c[{q}];" for q in range(n))
    return "\n".join(lines) + "\n"


def from_qasm(text: str) -> Circuit:
    """Parse the OpenQASM 2.0 subset written by :func:`to_qasm`."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("//")]
    if len(lines) < 4 or lines[0] != "OPENQASM 2.0;" or lines[1] != 'include "qelib1.inc";':
        raise ValueError("missing OpenQASM 2.0 header")
    m = re.fullmatch(r"qreg q\[(\d+)\];", lines[2])
    if not m or not re.fullmatch(r"creg c\[\d+\];", lines[3]):
        raise ValueError("expected one qreg q and one creg c")
    circuit = Circuit(int(m.group(1)))
    for ln in lines[4:]:
        if _MEASURE_LINE.match(ln):
            continue
        g = _QASM_LINE.match(ln)
        if not g or g.group("name") not in _QASM_KIND:
            raise ValueError(f"cannot parse QASM line {ln!r}")
        kind = _QASM_KIND[g.group("name")]
        qubits = [int(g.group("q0"))] + ([int(g.group("q1"))] if g.group("q1") else [])
        angle = float(g.group("arg")) if g.group("arg") is not None else None
        circuit.append(kind, *qubits, angle=angle)
    return circuit
