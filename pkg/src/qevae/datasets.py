"""Measurement datasets: product, Haar-random, random-circuit and quantum
kicked rotor (QKR) states, sampled in the Z basis."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from math import pi

import numpy as np

from . import pqc
from .statesim import Distribution, StateVector, probabilities, run, sample

SCHEMA_VERSION = 1
FAMILIES = ("product", "haar", "circuit", "qkr")
DEFAULT_SHOTS = 1024
TRAIN_FRACTION = 0.7


class DatasetFormatError(ValueError):
    pass


@dataclass
class MeasurementDataset:
    n_qubits: int
    samples: list[str]
    family: str
    seed: int
    exact_dist: Distribution | None = None
    train_idx: list[int] = field(default_factory=list)
    val_idx: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        for s in self.samples:
            if len(s) != self.n_qubits or set(s) - {"0", "1"}:
                raise ValueError(f"sample {s!r} is not a {self.n_qubits}-bit string")

    def indices(self, which: str = "all") -> np.ndarray:
        """Outcome integer index of every sample in the chosen split."""
        idx = np.array([int(s, 2) for s in self.samples], dtype=int)
        if which == "train":
            return idx[self.train_idx]
        if which == "val":
            return idx[self.val_idx]
        return idx

    def empirical(self, which: str = "all") -> Distribution:
        counts = np.bincount(self.indices(which), minlength=2**self.n_qubits)
        return Distribution(self.n_qubits, counts / counts.sum())

    def __eq__(self, other):
        if not isinstance(other, MeasurementDataset):
            return NotImplemented
        same_dist = (self.exact_dist is None) == (other.exact_dist is None) and (
            self.exact_dist is None
            or np.array_equal(self.exact_dist.probs, other.exact_dist.probs))
        return (self.n_qubits == other.n_qubits and self.samples == other.samples
                and self.family == other.family and self.seed == other.seed
                and list(self.train_idx) == list(other.train_idx)
                and list(self.val_idx) == list(other.val_idx) and same_dist)


@dataclass
class QkrConfig:
    kappa: float
    hbar_s: float = 1.0
    kicks: int = 1000
    grid: int = 16

    def __post_init__(self):
        if self.grid < 2 or self.grid & (self.grid - 1):
            raise ValueError(f"grid size must be a power of two, got {self.grid}")
        if self.kicks < 0:
            raise ValueError("kicks must be >= 0")

    @property
    def n_qubits(self) -> int:
        return self.grid.bit_length() - 1


def gen_product(n: int, seed: int) -> tuple[StateVector, Distribution]:
    state = run(pqc.build_random_product_circuit(n, seed))
    return state, probabilities(state)


def gen_haar(n: int, seed: int) -> tuple[StateVector, Distribution]:
    """Normalized vector of iid complex Gaussian amplitudes."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    state = StateVector(n, c / np.linalg.norm(c))
    return state, probabilities(state)


def gen_circuit_state(n: int, layers: int = 2, seed: int = 0) -> tuple[StateVector, Distribution]:
    state = run(pqc.build_random_layered_circuit(n, layers, seed))
    return state, probabilities(state)


def momentum_grid(N: int) -> np.ndarray:
    """Momentum quantum number of each FFT-ordered bin."""
    return np.fft.fftfreq(N, d=1.0 / N)


def qkr_evolve(config: QkrConfig, kicks: int | None = None,
               psi: np.ndarray | None = None) -> np.ndarray:
    """Split-operator kicked-rotor evolution; momentum amplitudes in FFT order."""
    N = config.grid
    m = momentum_grid(N)
    x = 2 * pi * np.arange(N) / N
    free = np.exp(-0.5j * config.hbar_s * m**2)
    kick = np.exp(-1j * config.kappa * np.cos(x))
    if psi is None:
        psi = np.zeros(N, dtype=complex)
        psi[0] = 1.0
    for _ in range(config.kicks if kicks is None else kicks):
        psi = np.fft.fft(kick * np.fft.ifft(free * psi, norm="ortho"), norm="ortho")
    return psi


def qkr_momentum_probs(psi: np.ndarray) -> np.ndarray:
    """|psi_p|^2 re-indexed so that bin u holds momentum m = u - N/2."""
    return np.fft.fftshift(np.abs(psi) ** 2)


def gen_qkr(config: QkrConfig) -> Distribution:
    p = qkr_momentum_probs(qkr_evolve(config))
    return Distribution(config.n_qubits, p / p.sum())


def split_counts(total: int, fraction: float = TRAIN_FRACTION) -> tuple[int, int]:
    """Train/val sizes; the train count rounds half up (1024 -> 717/307)."""
    n_train = int(np.floor(total * fraction + 0.5))
    return n_train, total - n_train


def make_dataset(dist: Distribution, shots: int = DEFAULT_SHOTS, seed: int = 0,
                 family: str = "haar", keep_exact: bool = True) -> MeasurementDataset:
    samples = sample(dist, shots, seed)
    perm = np.random.default_rng([seed, 1]).permutation(shots)
    n_train, _ = split_counts(shots)
    return MeasurementDataset(
        n_qubits=dist.n_qubits, samples=samples, family=family, seed=seed,
        exact_dist=dist if keep_exact else None,
        train_idx=sorted(int(i) for i in perm[:n_train]),
        val_idx=sorted(int(i) for i in perm[n_train:]),
    )


def generate(family: str, n_qubits: int, seed: int, shots: int = DEFAULT_SHOTS,
             layers: int = 2, kappa: float = 6.0, hbar_s: float = 1.0,
             kicks: int = 1000) -> MeasurementDataset:
    """Build the exact distribution of one family member and sample it."""
    if family == "product":
        _, dist = gen_product(n_qubits, seed)
    elif family == "haar":
        _, dist = gen_haar(n_qubits, seed)
    elif family == "circuit":
        _, dist = gen_circuit_state(n_qubits, layers, seed)
    elif family == "qkr":
        dist = gen_qkr(QkrConfig(kappa=kappa, hbar_s=hbar_s, kicks=kicks, grid=2**n_qubits))
    else:
        raise ValueError(f"unknown family {family!r}")
    return make_dataset(dist, shots=shots, seed=seed, family=family)


def to_json_dict(d: MeasurementDataset) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "n_qubits": d.n_qubits,
        "family": d.family,
        "seed": d.seed,
        "samples": list(d.samples),
        "exact_dist": None if d.exact_dist is None else [float(p) for p in d.exact_dist.probs],
        "train_idx": [int(i) for i in d.train_idx],
        "val_idx": [int(i) for i in d.val_idx],
    }


_FIELDS = ("schema_version", "n_qubits", "family", "seed", "samples",
           "exact_dist", "train_idx", "val_idx")


def from_json_dict(obj: dict) -> MeasurementDataset:
    if not isinstance(obj, dict):
        raise DatasetFormatError("dataset file must hold a JSON object")
    missing = [k for k in _FIELDS if k not in obj]
    if missing:
        raise DatasetFormatError(f"dataset file missing field(s): {', '.join(missing)}")
    extra = sorted(set(obj) - set(_FIELDS))
    if extra:
        raise DatasetFormatError(f"unknown dataset field(s): {', '.join(extra)}")
    if obj["schema_version"] != SCHEMA_VERSION:
        raise DatasetFormatError(
            f"dataset schema version {obj['schema_version']!r}, expected {SCHEMA_VERSION}")
    n = obj["n_qubits"]
    exact = obj["exact_dist"]
    try:
        ds = MeasurementDataset(
            n_qubits=int(n), samples=list(obj["samples"]), family=obj["family"],
            seed=int(obj["seed"]),
            exact_dist=None if exact is None else Distribution(int(n), np.array(exact, float)),
            train_idx=[int(i) for i in obj["train_idx"]],
            val_idx=[int(i) for i in obj["val_idx"]],
        )
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(str(exc)) from exc
    total = len(ds.samples)
    if any(not 0 <= i < total for i in ds.train_idx + ds.val_idx):
        raise DatasetFormatError("split index out of range")
    return ds


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(d: MeasurementDataset, path) -> None:
    atomic_write_text(path, json.dumps(to_json_dict(d)))


def load(path) -> MeasurementDataset:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"malformed dataset file: {exc}") from exc
    return from_json_dict(obj)
