"""Quantum-enhanced variational autoencoder toolkit.

A classical encoder feeds a latent sample through a linear preprocessor into a
Pauli feature map followed by a trainable two-local circuit; the decoder
likelihood is the Z-basis measurement distribution of that circuit.
"""
from .evaluation import fidelity, model_distribution, uniform_baseline
from .models import CvaeModel, QevaeModel, TrainConfig, train, train_cvae, train_qcbm
from .statesim import Circuit, Distribution, GateOp, StateVector

__all__ = [
    "Circuit", "CvaeModel", "Distribution", "GateOp", "QevaeModel", "StateVector",
    "TrainConfig", "fidelity", "model_distribution", "train", "train_cvae", "train_qcbm",
    "uniform_baseline",
]
__version__ = "0.1.0"
