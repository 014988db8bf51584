"""Derivatives of decoder output probabilities.

The decoder circuit is ``V(theta) U(z) |0...0>``. Every rotation in it owns
one angle slot: the feature-map slots come first (angles are functions of
``z``), then one slot per ansatz parameter. Slot derivatives are taken with
the two-term shift rule and chain-ruled onto ``theta`` and ``z``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import pi

import numpy as np

from .pqc import AnsatzSpec, FeatureMapSpec
from .statesim import ParametricCircuit, ParamOp, adjoint_angle_grads, run_batch

LOG_CLAMP = 1e-12
SHIFT = pi / 2


@dataclass
class DecoderSpec:
    feature_map: FeatureMapSpec
    ansatz: AnsatzSpec

    def __post_init__(self):
        if self.feature_map.n_qubits != self.ansatz.n_qubits:
            raise ValueError("feature map and ansatz disagree on qubit count")

    @property
    def n_qubits(self) -> int:
        return self.ansatz.n_qubits

    @property
    def n_params(self) -> int:
        return self.ansatz.n_params

    @cached_property
    def _fm_template(self):
        return self.feature_map.template()

    @property
    def n_fm_slots(self) -> int:
        return self._fm_template[0].n_slots

    @cached_property
    def template(self) -> ParametricCircuit:
        fm, _ = self._fm_template
        off = fm.n_slots
        ops = list(fm.ops) + [
            ParamOp(op.kind, op.qubits, None if op.slot is None else op.slot + off)
            for op in self.ansatz.template().ops
        ]
        return ParametricCircuit(self.n_qubits, ops, off + self.n_params)

    def angles(self, z: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Slot angles, shape ``(rows, n_slots)`` for ``z`` of shape ``(rows, n)``."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} ansatz parameters, got {theta.shape}")
        fm = self.feature_map.angles(z)
        return np.concatenate([fm, np.broadcast_to(theta, (z.shape[0], theta.size))], axis=1)

    def probs(self, z: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Exact outcome probabilities, shape ``(rows, 2**n)``."""
        amps = run_batch(self.template, self.angles(z, theta))
        return np.abs(amps) ** 2


@dataclass
class GradientRecord:
    d_theta: np.ndarray
    d_input: np.ndarray


def slot_grads_shift(template: ParametricCircuit, angles: np.ndarray) -> np.ndarray:
    """dp(x)/d(slot) for every row, outcome and slot: shape ``(rows, 2**n, n_slots)``.

    All ``2 * n_slots`` shifted circuits of all rows are evaluated in one
    batch; the reduction order is fixed.
    """
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    rows, g = angles.shape
    shifts = np.concatenate([np.eye(g), -np.eye(g)]) * SHIFT
    shifted = (angles[:, None, :] + shifts[None, :, :]).reshape(rows * 2 * g, g)
    p = np.abs(run_batch(template, shifted)) ** 2
    p = p.reshape(rows, 2, g, -1)
    return np.transpose(0.5 * (p[:, 0] - p[:, 1]), (0, 2, 1))


def dist_grad_theta(spec: DecoderSpec, z, theta) -> np.ndarray:
    """Matrix ``(2**n, n_params)`` of dp(x|z)/dtheta_k by the shift rule."""
    angles = spec.angles(z, theta)
    return slot_grads_shift(spec.template, angles)[0, :, spec.n_fm_slots:]


def dist_grad_input(spec: DecoderSpec, z, theta) -> np.ndarray:
    """Matrix ``(2**n, n)`` of dp(x|z)/dz_j: slot shifts times the angle Jacobian."""
    z = np.asarray(z, dtype=float)
    angles = spec.angles(z, theta)
    d_slot = slot_grads_shift(spec.template, angles)[0, :, : spec.n_fm_slots]
    return d_slot @ spec.feature_map.angle_jacobian(z)


def batch_outcome_grads(spec: DecoderSpec, z: np.ndarray, theta: np.ndarray,
                        outcomes: np.ndarray, method: str = "shift"):
    """p(x_r|z_r) and its gradients for a batch of (z_r, x_r) pairs.

    Returns ``(p, d_theta, d_input)`` with shapes ``(rows,)``,
    ``(rows, n_params)`` and ``(rows, n)``. ``method`` is ``"shift"`` or
    ``"adjoint"``; both give the exact derivative.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    outcomes = np.asarray(outcomes, dtype=int)
    angles = spec.angles(z, theta)
    rows = np.arange(z.shape[0])
    if method == "shift":
        p = np.abs(run_batch(spec.template, angles)[rows, outcomes]) ** 2
        d_slot = slot_grads_shift(spec.template, angles)[rows, outcomes, :]
    elif method == "adjoint":
        p, d_slot = adjoint_angle_grads(spec.template, angles, outcomes)
    else:
        raise ValueError(f"unknown gradient method {method!r}")
    f = spec.n_fm_slots
    jac = spec.feature_map.angle_jacobian(z)
    d_input = np.einsum("rs,rsj->rj", d_slot[:, :f], jac)
    return p, d_slot[:, f:], d_input


def logprob_grad(spec: DecoderSpec, z, theta, x: str | int) -> GradientRecord:
    """Gradient of ``log max(p(x|z), 1e-12)`` w.r.t. theta and z."""
    idx = int(x, 2) if isinstance(x, str) else int(x)
    p, d_theta, d_input = batch_outcome_grads(spec, z, theta, np.array([idx]))
    denom = max(float(p[0]), LOG_CLAMP)
    return GradientRecord(d_theta[0] / denom, d_input[0] / denom)


def finite_diff_oracle(spec: DecoderSpec, z, theta, h: float = 1e-5):
    """Central differences of exact probabilities.

    Returns ``(d_theta, d_input)`` with shapes ``(2**n, n_params)`` and
    ``(2**n, n)``.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    z = np.asarray(z, dtype=float)
    theta = np.asarray(theta, dtype=float)

    def p(zz, tt):
        return spec.probs(zz, tt)[0]

    d_theta = np.zeros((2**spec.n_qubits, theta.size))
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        d_theta[:, k] = (p(z, theta + e) - p(z, theta - e)) / (2 * h)
    d_input = np.zeros((2**spec.n_qubits, z.size))
    for j in range(z.size):
        e = np.zeros_like(z)
        e[j] = h
        d_input[:, j] = (p(z + e, theta) - p(z - e, theta)) / (2 * h)
    return d_theta, d_input
