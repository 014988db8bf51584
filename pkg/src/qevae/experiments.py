"""Train-and-evaluate cells and hyperparameter sweeps."""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .datasets import MeasurementDataset
from .evaluation import fidelity, model_distribution, uniform_baseline
from .models import CvaeModel, QevaeModel, TrainConfig, train

MODEL_KINDS = ("qevae", "qcbm", "cvae")


@dataclass(frozen=True)
class Cell:
    model: str = "qevae"
    latent: int = 2
    feature_map: str = "ZZ"
    ansatz_reps: int = 2
    beta: float = 0.5
    schedule: str = "fixed"
    lr_encoder: float = 0.01
    lr_decoder: float = 0.009
    batch: int = 16
    patience: int = 7
    max_epochs: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}")
        if self.model == "qcbm" and self.latent != 0:
            raise ValueError("a QCBM has latent size 0")

    def config(self) -> TrainConfig:
        return TrainConfig(lr_encoder=self.lr_encoder, lr_decoder=self.lr_decoder,
                           batch=self.batch, beta=self.beta, beta_schedule=self.schedule,
                           patience=self.patience, max_epochs=self.max_epochs, seed=self.seed)

    def build(self, n_qubits: int):
        if self.model == "cvae":
            return CvaeModel.create(n_qubits, self.latent or n_qubits, seed=self.seed)
        return QevaeModel.create(n_qubits, self.latent, seed=self.seed,
                                 feature_map=self.feature_map, ansatz_reps=self.ansatz_reps)


# latent 0 is the QCBM limit; latent 2 keeps a classical posterior in play
QEVAE_GRID = {"latent": (0, 2), "feature_map": ("Z", "ZZ")}


def cvae_cell(n_qubits: int, seed: int) -> Cell:
    """Fixed classical baseline: latent = n, beta = 1."""
    return Cell(model="cvae", latent=n_qubits, beta=1.0, seed=seed)


def grid_cells(base: Cell, **axes) -> list[Cell]:
    """Cartesian product over the given field values, in a fixed order."""
    names = list(axes)
    cells = []
    for values in itertools.product(*(axes[k] for k in names)):
        cells.append(replace(base, **dict(zip(names, values))))
    return cells


def run_cell(dataset: MeasurementDataset, cell: Cell, n_z_samples: int = 5000,
             eval_seed: int = 0) -> dict:
    config = cell.config()
    model, history = train(cell.build(dataset.n_qubits), dataset, config)
    row = {"cell": asdict(cell), "stop_epoch": history.stop_epoch,
           "best_epoch": history.best_epoch, "best_val_loss": min(history.val_loss)}
    if dataset.exact_dist is not None:
        dist = model_distribution(model, n_z_samples, eval_seed)
        row["fidelity"] = fidelity(dist, dataset.exact_dist)
        row["uniform"] = uniform_baseline(dataset.exact_dist)
    return {"row": row, "model": model, "history": history, "config": config}


def _run_cell_rows(args):
    dataset, cell, n_z, eval_seed = args
    return run_cell(dataset, cell, n_z, eval_seed)


def sweep(dataset: MeasurementDataset, cells: list[Cell], jobs: int = 1,
          n_z_samples: int = 5000, eval_seed: int = 0) -> tuple[list[dict], dict]:
    """Run every cell; return all results (in grid order) and the best by fidelity.

    Without an exact target distribution the lowest validation loss wins.
    """
    if not cells:
        raise ValueError("empty grid")
    work = [(dataset, c, n_z_samples, eval_seed) for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_rows, work))
    else:
        results = [_run_cell_rows(w) for w in work]
    if dataset.exact_dist is not None:
        best = max(results, key=lambda r: r["row"]["fidelity"])
    else:
        best = min(results, key=lambda r: r["row"]["best_val_loss"])
    return results, best


def best_qevae(dataset: MeasurementDataset, seed: int, grid=None, **base) -> dict:
    grid = QEVAE_GRID if grid is None else grid
    cells = grid_cells(Cell(seed=seed, **base), **grid)
    _, best = sweep(dataset, cells)
    return best


def train_cvae_baseline(dataset: MeasurementDataset, seed: int) -> dict:
    return run_cell(dataset, cvae_cell(dataset.n_qubits, seed))


def summarize(values) -> dict:
    arr = np.asarray(values, dtype=float)
    return {"mean": float(arr.mean()), "min": float(arr.min()), "max": float(arr.max())}
