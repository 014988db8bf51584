"""Fidelity between outcome distributions, model output distributions, the
density-matrix form of the QeVAE marginal, and compilation reports."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import pqc
from .statesim import Circuit, Distribution, probabilities, run, unitary


def _probs(d) -> np.ndarray:
    return d.probs if isinstance(d, Distribution) else np.asarray(d, dtype=float)


def fidelity(p, q) -> float:
    """Squared Bhattacharyya coefficient ``(sum_i sqrt(p_i q_i))^2``."""
    p, q = _probs(p), _probs(q)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    bc = np.sum(np.sqrt(np.clip(p, 0, None) * np.clip(q, 0, None)))
    return float(min(bc * bc, 1.0))


def uniform_baseline(target) -> float:
    p = _probs(target)
    return fidelity(p, np.full(p.size, 1.0 / p.size))


@dataclass
class FidelityReport:
    fidelity: float
    n_latent_samples: int
    model_kind: str
    dataset_id: str = ""

    def __post_init__(self):
        if not 0.0 <= self.fidelity <= 1.0:
            raise ValueError("fidelity must lie in [0, 1]")


def model_distribution(model, n_z_samples: int = 5000, rng=None) -> Distribution:
    """Mean of the exact decoder distribution over ``n_z_samples`` prior draws.

    ``rng`` may be a Generator or an integer seed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(0 if rng is None else rng)
    return model.output_distribution(n_z_samples, rng)


def evaluate(model, target: Distribution, n_z_samples: int = 5000, rng=None,
             dataset_id: str = "") -> FidelityReport:
    dist = model_distribution(model, n_z_samples, rng)
    used = 0 if model.latent_dim == 0 else n_z_samples
    kind = "qcbm" if model.kind == "qevae" and model.latent_dim == 0 else model.kind
    return FidelityReport(fidelity(dist, target), used, kind, dataset_id)


@dataclass
class DensityMatrix:
    rho: np.ndarray

    def check(self, tol: float = 1e-10) -> None:
        rho = self.rho
        if not np.allclose(rho, rho.conj().T, atol=tol, rtol=0):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > tol:
            raise ValueError(f"trace {np.trace(rho)!r} != 1")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
            raise ValueError("density matrix has a negative eigenvalue")

    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))


def latent_density_matrix(model, z_samples) -> DensityMatrix:
    """Average of the feature-map projectors over the given latent samples.

    Each state is prepared gate by gate with :func:`statesim.run`, separate
    from the batched path used for training.
    """
    z_samples = np.atleast_2d(np.asarray(z_samples, dtype=float))
    if z_samples.shape[0] == 0:
        raise ValueError("need at least one latent sample")
    inputs = model.angles_input(z_samples)
    dim = 2**model.n_qubits
    rho = np.zeros((dim, dim), dtype=complex)
    for a in inputs:
        psi = run(pqc.build_feature_map(model.decoder.feature_map, a)).amps
        rho += np.outer(psi, psi.conj())
    return DensityMatrix(rho / inputs.shape[0])


def density_matrix_distribution(model, z_samples) -> Distribution:
    """``diag(V rho V^dagger)`` with ``rho`` from :func:`latent_density_matrix`.

    ``V`` is the ansatz unitary assembled from Kronecker products.
    """
    rho = latent_density_matrix(model, z_samples).rho
    V = unitary(pqc.build_two_local(model.decoder.ansatz, model.theta))
    p = np.real(np.einsum("xi,ij,xj->x", V, rho, V.conj()))
    return Distribution(model.n_qubits, np.clip(p, 0, None))


def sample_average_distribution(model, z_samples) -> np.ndarray:
    """Plain mean of the conditionals p(x|z_m) over the same latent samples."""
    z_samples = np.atleast_2d(np.asarray(z_samples, dtype=float))
    return model.conditional_probs(z_samples).mean(axis=0)


def state_prep_unitary(psi: np.ndarray) -> np.ndarray:
    """A unitary whose first column is ``psi`` (Householder reflection times a phase)."""
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    dim = psi.size
    phase = psi[0] / abs(psi[0]) if abs(psi[0]) > 1e-15 else 1.0
    # H = I - 2 w w^dag maps e0 to psi / phase when w is parallel to e0 - psi / phase
    w = -psi / phase
    w[0] += 1.0
    nw = np.linalg.norm(w)
    if nw < 1e-15:
        return phase * np.eye(dim, dtype=complex)
    w /= nw
    return phase * (np.eye(dim) - 2.0 * np.outer(w, w.conj()))


def mixture_distribution_mc(rho: np.ndarray, V: np.ndarray, n_samples: int,
                            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Reproduce ``diag(V rho V^dagger)`` from a latent prior over eigenvectors.

    Draws z with probability equal to the z-th eigenvalue of ``rho``, prepares
    the eigenvector with :func:`state_prep_unitary` applied to |0...0>, and
    measures ``V`` times it. Returns the Monte-Carlo estimate of the
    distribution and the per-outcome standard error.
    """
    lam, vecs = np.linalg.eigh(rho)
    lam = np.clip(lam, 0, None)
    lam /= lam.sum()
    dim = rho.shape[0]
    e0 = np.zeros(dim, dtype=complex)
    e0[0] = 1.0
    cond = np.empty((dim, dim))
    for k in range(dim):
        prepared = state_prep_unitary(vecs[:, k]) @ e0
        cond[k] = np.abs(V @ prepared) ** 2
    draws = rng.choice(dim, size=n_samples, p=lam)
    outcomes = _sample_rows(cond, draws, rng)
    est = np.bincount(outcomes, minlength=dim) / n_samples
    return est, np.sqrt(est * (1 - est) / n_samples)


def _sample_rows(cond: np.ndarray, rows: np.ndarray, rng) -> np.ndarray:
    cdf = np.cumsum(cond, axis=1)
    cdf /= cdf[:, -1:]
    u = rng.random(rows.size)
    return np.minimum((cdf[rows] < u[:, None]).sum(axis=1), cond.shape[1] - 1)


def decoder_circuit(model, z=None) -> tuple[Circuit, Circuit]:
    """(feature map, ansatz) circuits of the decoder bound at latent ``z`` (default 0)."""
    z = np.zeros(model.latent_dim) if z is None else np.asarray(z, dtype=float)
    a = model.angles_input(z[None, :])[0]
    return (pqc.build_feature_map(model.decoder.feature_map, a),
            pqc.build_two_local(model.decoder.ansatz, model.theta))


def compile_report(original: Circuit, model, n_z_samples: int = 5000, rng=None) -> dict:
    """Gate counts of ``original`` against the trained decoder, plus fidelities."""
    target = probabilities(run(original))
    fm, ansatz = decoder_circuit(model)
    full = pqc.concat(fm, ansatz)
    before = pqc.gate_counts(original)
    after = pqc.gate_counts(full)
    dist = model_distribution(model, n_z_samples, rng)
    at_zero = probabilities(run(full))
    n_before, n_after = sum(before.values()), sum(after.values())
    return {
        "gate_counts_before": before,
        "gate_counts_after": after,
        "gate_counts_ansatz": pqc.gate_counts(ansatz),
        "total_gates_before": n_before,
        "total_gates_after": n_after,
        "total_reduction": n_before / n_after,
        "cx_reduction": before.get("CX", 0) / after["CX"] if after.get("CX") else float("inf"),
        "fidelity_model": fidelity(dist, target),
        "fidelity_at_zero": fidelity(at_zero, target),
        "fidelity_uniform": uniform_baseline(target),
        "n_z_samples": 0 if model.latent_dim == 0 else n_z_samples,
    }
