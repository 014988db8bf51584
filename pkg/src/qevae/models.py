"""QeVAE, classical VAE baseline and the QCBM (latent size 0) limit, with a
shared ELBO training loop."""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .datasets import MeasurementDataset, atomic_write_text
from .gradients import LOG_CLAMP, DecoderSpec, batch_outcome_grads
from .neural import (MLP, AdamState, DenseLayer, EncoderNet, adam_step, kl_gaussian,
                     kl_gaussian_grad)
from .pqc import AnsatzSpec, FeatureMapSpec
from .statesim import Distribution

CHECKPOINT_VERSION = 1
SCHEDULES = ("fixed", "anneal", "step")
PREPROC_STD = 0.5


def bits_matrix(indices: np.ndarray, n_qubits: int) -> np.ndarray:
    """0/1 array, column ``i`` holding qubit ``i`` of each outcome index."""
    indices = np.asarray(indices, dtype=int)
    return ((indices[:, None] >> np.arange(n_qubits)) & 1).astype(float)


# 8-qubit CVAE decoder hidden layouts, one to five hidden layers
CVAE_LAYOUTS_8 = [(15,), (10, 9), (6, 7, 9), (7, 6, 6, 7), (7, 5, 4, 5, 7)]


def cvae_hidden_width(n_qubits: int, latent_dim: int) -> int:
    """Single hidden width whose decoder parameter count is closest to 2^n.

    Gives 15 at n = 8 (latent 8) and 1 at n = 4 (latent 4).
    """
    def count(h):
        return (latent_dim + 1) * h + (h + 1) * n_qubits
    return min(range(1, 2**n_qubits + 1), key=lambda h: (abs(count(h) - 2**n_qubits), h))


class QevaeModel:
    """Classical encoder -> latent z -> linear preprocessor -> feature map -> ansatz."""

    kind = "qevae"

    def __init__(self, decoder: DecoderSpec, theta: np.ndarray, encoder: EncoderNet | None,
                 preproc: DenseLayer | None):
        self.decoder = decoder
        self.theta = np.asarray(theta, dtype=float)
        self.encoder = encoder
        self.preproc = preproc
        if (encoder is None) != (preproc is None):
            raise ValueError("encoder and preprocessor must both be present or both absent")
        if preproc is not None and (preproc.n_out != decoder.n_qubits
                                    or preproc.n_in != encoder.latent_dim):
            raise ValueError("preprocessor must map latent_dim -> n_qubits")
        if self.theta.shape != (decoder.n_params,):
            raise ValueError(f"expected {decoder.n_params} ansatz parameters")

    @classmethod
    def create(cls, n_qubits: int, latent_dim: int, seed: int = 0, feature_map: str = "ZZ",
               fm_reps: int = 1, ansatz_reps: int = 2, rotations=("RX", "RY"),
               preproc_std: float = PREPROC_STD) -> "QevaeModel":
        if not 0 <= latent_dim <= n_qubits:
            raise ValueError(f"latent_dim must lie in [0, {n_qubits}]")
        rng = np.random.default_rng(seed)
        decoder = DecoderSpec(FeatureMapSpec(feature_map, n_qubits, fm_reps),
                              AnsatzSpec(n_qubits, ansatz_reps, list(rotations)))
        theta = rng.uniform(-np.pi, np.pi, decoder.n_params)
        if latent_dim == 0:
            return cls(decoder, theta, None, None)
        encoder = EncoderNet.init(n_qubits, latent_dim, rng)
        preproc = DenseLayer(rng.normal(0.0, preproc_std, (n_qubits, latent_dim)),
                             np.zeros(n_qubits))
        return cls(decoder, theta, encoder, preproc)

    @property
    def n_qubits(self) -> int:
        return self.decoder.n_qubits

    @property
    def latent_dim(self) -> int:
        return 0 if self.encoder is None else self.encoder.latent_dim

    def params(self) -> dict[str, np.ndarray]:
        out = {"theta": self.theta}
        if self.encoder is not None:
            out.update(self.encoder.params())
            out["pre.W"] = self.preproc.W
            out["pre.b"] = self.preproc.b
        return out

    def param_groups(self) -> tuple[list[str], list[str]]:
        """(encoder keys, decoder keys); the preprocessor trains with the decoder."""
        keys = sorted(self.params())
        enc = [k for k in keys if k.startswith("enc.")]
        return enc, [k for k in keys if not k.startswith("enc.")]

    def param_counts(self) -> dict[str, int]:
        return {
            "encoder": 0 if self.encoder is None else self.encoder.n_params,
            "preprocessor": 0 if self.preproc is None else self.preproc.n_params,
            "ansatz": self.decoder.n_params,
        }

    def angles_input(self, z: np.ndarray) -> np.ndarray:
        """Feature-map input for latent samples ``z`` (zeros when latent_dim = 0)."""
        z = np.atleast_2d(z)
        if self.preproc is None:
            return np.zeros((z.shape[0], self.n_qubits))
        return self.preproc(z)

    def conditional_probs(self, z: np.ndarray) -> np.ndarray:
        return self.decoder.probs(self.angles_input(z), self.theta)

    def loss_and_grads(self, outcomes, beta: float, eps: np.ndarray | None,
                       method: str = "adjoint"):
        """Negative ELBO averaged over the batch and its gradient dict.

        One latent sample per datum: ``z = mu + exp(logvar/2) * eps``.
        """
        outcomes = np.asarray(outcomes, dtype=int)
        B = outcomes.size
        if B == 0:
            raise ValueError("empty batch")
        grads = {}
        if self.encoder is None:
            a = np.zeros((B, self.n_qubits))
        else:
            x = bits_matrix(outcomes, self.n_qubits)
            mu, logvar, cache = self.encoder.forward(x)
            std = np.exp(0.5 * logvar)
            z = mu + std * eps
            a = self.preproc(z)
        p, d_theta, d_a = batch_outcome_grads(self.decoder, a, self.theta, outcomes, method)
        pc = np.maximum(p, LOG_CLAMP)
        nll = -np.log(pc)
        scale = -1.0 / (pc * B)
        grads["theta"] = (d_theta * scale[:, None]).sum(axis=0)
        loss = float(nll.mean())
        if self.encoder is not None:
            kl = kl_gaussian(mu, logvar)
            loss += beta * float(np.mean(kl))
            g_a = d_a * scale[:, None]
            _, grads["pre.W"], grads["pre.b"] = self.preproc.backward(z, g_a)
            g_z = g_a @ self.preproc.W
            kmu, klv = kl_gaussian_grad(mu, logvar)
            g_mu = g_z + beta * kmu / B
            g_lv = g_z * 0.5 * std * eps + beta * klv / B
            grads.update(self.encoder.backward(cache, g_mu, g_lv))
        return loss, grads

    def output_distribution(self, n_z_samples: int = 5000,
                            rng: np.random.Generator | None = None, chunk: int = 2048) -> Distribution:
        """Average of exact decoder distributions over z ~ N(0, I)."""
        if self.latent_dim == 0:
            p = self.conditional_probs(np.zeros((1, 0)))[0]
            return Distribution(self.n_qubits, p / p.sum())
        if n_z_samples < 1:
            raise ValueError("need at least one latent sample")
        rng = np.random.default_rng(0) if rng is None else rng
        z = rng.standard_normal((n_z_samples, self.latent_dim))
        total = np.zeros(2**self.n_qubits)
        for start in range(0, n_z_samples, chunk):
            total += self.conditional_probs(z[start:start + chunk]).sum(axis=0)
        p = total / n_z_samples
        return Distribution(self.n_qubits, p / p.sum())

    def to_dict(self) -> dict:
        fm, an = self.decoder.feature_map, self.decoder.ansatz
        out = {
            "model_kind": self.kind,
            "n_qubits": self.n_qubits,
            "latent_dim": self.latent_dim,
            "feature_map": {"kind": fm.kind, "reps": fm.reps,
                            "entanglement_pairs": [list(p) for p in fm.entanglement_pairs]},
            "ansatz": {"reps": an.reps, "rotation_kinds": list(an.rotation_kinds),
                       "entanglement": an.entanglement},
            "theta": self.theta.tolist(),
            "encoder": None,
            "preproc": None,
        }
        if self.encoder is not None:
            out["encoder"] = _encoder_to_dict(self.encoder)
            out["preproc"] = _layer_to_dict(self.preproc)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "QevaeModel":
        n = d["n_qubits"]
        fm = d["feature_map"]
        an = d["ansatz"]
        pairs = [tuple(p) for p in fm["entanglement_pairs"]] if fm["kind"] == "ZZ" else None
        decoder = DecoderSpec(FeatureMapSpec(fm["kind"], n, fm["reps"], pairs),
                              AnsatzSpec(n, an["reps"], an["rotation_kinds"], an["entanglement"]))
        if d["encoder"] is None:
            return cls(decoder, np.array(d["theta"]), None, None)
        return cls(decoder, np.array(d["theta"]), _encoder_from_dict(d["encoder"]),
                   _layer_from_dict(d["preproc"]))


class CvaeModel:
    """Classical VAE baseline with a factorized-Bernoulli decoder."""

    kind = "cvae"

    def __init__(self, encoder: EncoderNet, decoder: MLP):
        self.encoder = encoder
        self.decoder = decoder
        if decoder.layers[0].n_in != encoder.latent_dim:
            raise ValueError("decoder input width must equal latent_dim")

    @classmethod
    def create(cls, n_qubits: int, latent_dim: int | None = None, seed: int = 0,
               hidden=None) -> "CvaeModel":
        latent_dim = n_qubits if latent_dim is None else latent_dim
        if latent_dim < 1:
            raise ValueError("a classical VAE needs latent_dim >= 1")
        if hidden is None:
            hidden = (cvae_hidden_width(n_qubits, latent_dim),)
        hidden = tuple(hidden)
        rng = np.random.default_rng(seed)
        encoder = EncoderNet.init(n_qubits, latent_dim, rng)
        decoder = MLP.init((latent_dim,) + hidden + (n_qubits,), rng)
        return cls(encoder, decoder)

    @property
    def n_qubits(self) -> int:
        return self.encoder.n_inputs

    @property
    def latent_dim(self) -> int:
        return self.encoder.latent_dim

    def params(self) -> dict[str, np.ndarray]:
        out = self.encoder.params()
        out.update(self.decoder.params("dec"))
        return out

    def param_groups(self):
        keys = sorted(self.params())
        return ([k for k in keys if k.startswith("enc.")],
                [k for k in keys if k.startswith("dec.")])

    def param_counts(self) -> dict[str, int]:
        return {"encoder": self.encoder.n_params, "decoder": self.decoder.n_params}

    def bit_probs(self, z: np.ndarray) -> np.ndarray:
        logits, _ = self.decoder.forward(np.atleast_2d(z))
        return _sigmoid(logits)

    def conditional_probs(self, z: np.ndarray) -> np.ndarray:
        logits, _ = self.decoder.forward(np.atleast_2d(z))
        bits = bits_matrix(np.arange(2**self.n_qubits), self.n_qubits)
        # log sigma(l) = -softplus(-l), log(1 - sigma(l)) = -softplus(l)
        log_on = -np.logaddexp(0.0, -logits)
        log_off = -np.logaddexp(0.0, logits)
        return np.exp(log_on @ bits.T + log_off @ (1.0 - bits).T)

    def loss_and_grads(self, outcomes, beta: float, eps: np.ndarray | None,
                       method: str = "adjoint"):
        outcomes = np.asarray(outcomes, dtype=int)
        B = outcomes.size
        if B == 0:
            raise ValueError("empty batch")
        x = bits_matrix(outcomes, self.n_qubits)
        mu, logvar, enc_cache = self.encoder.forward(x)
        std = np.exp(0.5 * logvar)
        z = mu + std * eps
        logits, dec_cache = self.decoder.forward(z)
        # Bernoulli NLL with logits: softplus(l) - x l
        nll = np.sum(np.logaddexp(0.0, logits) - x * logits, axis=1)
        kl = kl_gaussian(mu, logvar)
        loss = float(np.mean(nll) + beta * np.mean(kl))
        d_logits = (_sigmoid(logits) - x) / B
        g_z, dec_grads = self.decoder.backward(dec_cache, d_logits)
        grads = self.decoder.grad_dict(dec_grads, "dec")
        kmu, klv = kl_gaussian_grad(mu, logvar)
        grads.update(self.encoder.backward(enc_cache, g_z + beta * kmu / B,
                                           g_z * 0.5 * std * eps + beta * klv / B))
        return loss, grads

    def output_distribution(self, n_z_samples: int = 5000,
                            rng: np.random.Generator | None = None, chunk: int = 2048) -> Distribution:
        if n_z_samples < 1:
            raise ValueError("need at least one latent sample")
        rng = np.random.default_rng(0) if rng is None else rng
        z = rng.standard_normal((n_z_samples, self.latent_dim))
        total = np.zeros(2**self.n_qubits)
        for start in range(0, n_z_samples, chunk):
            total += self.conditional_probs(z[start:start + chunk]).sum(axis=0)
        p = total / n_z_samples
        return Distribution(self.n_qubits, p / p.sum())

    def to_dict(self) -> dict:
        return {
            "model_kind": self.kind,
            "n_qubits": self.n_qubits,
            "latent_dim": self.latent_dim,
            "encoder": _encoder_to_dict(self.encoder),
            "decoder": [_layer_to_dict(l) for l in self.decoder.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CvaeModel":
        return cls(_encoder_from_dict(d["encoder"]),
                   MLP([_layer_from_dict(l) for l in d["decoder"]]))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _layer_to_dict(layer: DenseLayer) -> dict:
    return {"W": layer.W.tolist(), "b": layer.b.tolist()}


def _layer_from_dict(d: dict) -> DenseLayer:
    return DenseLayer(np.array(d["W"], dtype=float).reshape(len(d["b"]), -1), np.array(d["b"]))


def _encoder_to_dict(enc: EncoderNet) -> dict:
    return {"body": [_layer_to_dict(l) for l in enc.body.layers],
            "mu": _layer_to_dict(enc.head_mu), "logvar": _layer_to_dict(enc.head_logvar)}


def _encoder_from_dict(d: dict) -> EncoderNet:
    return EncoderNet(MLP([_layer_from_dict(l) for l in d["body"]]),
                      _layer_from_dict(d["mu"]), _layer_from_dict(d["logvar"]))


def model_from_dict(d: dict):
    kinds = {"qevae": QevaeModel, "qcbm": QevaeModel, "cvae": CvaeModel}
    if d.get("model_kind") not in kinds:
        raise ValueError(f"unknown model kind {d.get('model_kind')!r}")
    return kinds[d["model_kind"]].from_dict(d)


@dataclass
class TrainConfig:
    """Optimizer and schedule settings; each field is range-checked."""

    lr_encoder: float = 0.005
    lr_decoder: float = 0.005
    batch: int = 32
    beta: float = 1.0
    beta_schedule: str = "fixed"
    patience: int = 6
    max_epochs: int | None = None
    seed: int = 0
    grad_method: str = "adjoint"
    eval_z_samples: int = 1000

    def __post_init__(self):
        _in_range("lr_encoder", self.lr_encoder, 0.001, 0.01)
        _in_range("lr_decoder", self.lr_decoder, 0.001, 0.009)
        _in_range("batch", self.batch, 16, 64)
        _in_range("beta", self.beta, 0.5, 2.0)
        _in_range("patience", self.patience, 5, 7)
        if self.beta_schedule not in SCHEDULES:
            raise ValueError(f"beta_schedule must be one of {SCHEDULES}")
        if self.max_epochs is not None and self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.grad_method not in ("shift", "adjoint"):
            raise ValueError("grad_method must be 'shift' or 'adjoint'")
        if self.eval_z_samples < 1:
            raise ValueError("eval_z_samples must be >= 1")

    def epochs_for(self, n_qubits: int) -> int:
        if self.max_epochs is not None:
            return self.max_epochs
        return 500 if n_qubits <= 4 else 300


def _in_range(name, value, lo, hi):
    if not lo <= value <= hi:
        raise ValueError(f"{name}={value!r} outside the allowed range [{lo}, {hi}]")


@dataclass
class TrainHistory:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    beta: list[float] = field(default_factory=list)
    fidelity: list[float | None] = field(default_factory=list)
    stop_epoch: int | None = None
    best_epoch: int | None = None

    def to_csv(self) -> str:
        rows = ["epoch,train_loss,val_loss,beta,fidelity"]
        for e, tl, vl, b, f in zip(self.epoch, self.train_loss, self.val_loss,
                                   self.beta, self.fidelity):
            rows.append(f"{e},{tl!r},{vl!r},{b!r},{'' if f is None else repr(f)}")
        return "\n".join(rows) + "\n"


def beta_at(schedule: str, beta_target: float, epoch: int, max_epochs: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if schedule == "fixed":
        return beta_target
    if schedule == "anneal":
        return beta_target * min(1.0, epoch / (max_epochs / 2))
    if schedule == "step":
        return 0.0 if epoch < max_epochs / 4 else beta_target
    raise ValueError(f"unknown schedule {schedule!r}")


class EarlyStopping:
    """Stop once the monitored loss has not improved for ``patience`` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1

    def update(self, epoch: int, value: float) -> bool:
        if value < self.best:
            self.best, self.best_epoch = value, epoch
        return epoch - self.best_epoch >= self.patience


def elbo_loss(model, outcomes, beta_now: float, rng: np.random.Generator | None = None,
              eps: np.ndarray | None = None, method: str = "adjoint"):
    """Negative ELBO and gradients for a batch of outcome indices or bitstrings."""
    outcomes = np.asarray([int(o, 2) if isinstance(o, str) else int(o) for o in outcomes])
    if eps is None and model.latent_dim > 0:
        rng = np.random.default_rng() if rng is None else rng
        eps = rng.standard_normal((outcomes.size, model.latent_dim))
    return model.loss_and_grads(outcomes, beta_now, eps, method)


def dataset_loss(model, outcomes: np.ndarray, beta: float, eps: np.ndarray | None,
                 method: str = "adjoint", chunk: int = 512) -> float:
    """Mean negative ELBO over a whole split with fixed noise."""
    total = 0.0
    for s in range(0, outcomes.size, chunk):
        e = None if eps is None else eps[s:s + chunk]
        loss, _ = model.loss_and_grads(outcomes[s:s + chunk], beta, e, method)
        total += loss * outcomes[s:s + chunk].size
    return total / outcomes.size


def _fidelity(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(np.sqrt(p * q)) ** 2)


def train(model, dataset: MeasurementDataset, config: TrainConfig):
    """Minibatch ADAM on the negative ELBO with early stopping on the validation loss.

    Returns ``(model, history)``; the model is restored to its best
    validation epoch. The validation loss always uses the target beta and a
    fixed noise draw so epochs are comparable.
    """
    if not dataset.train_idx or not dataset.val_idx:
        raise ValueError("dataset needs a train/val split")
    if model.n_qubits != dataset.n_qubits:
        raise ValueError("model and dataset disagree on qubit count")
    rng = np.random.default_rng(config.seed)
    train_out = dataset.indices("train")
    val_out = dataset.indices("val")
    L = model.latent_dim
    val_eps = np.random.default_rng([config.seed, 2]).standard_normal((val_out.size, L)) if L else None
    eval_seed = [config.seed, 3]
    max_epochs = config.epochs_for(model.n_qubits)
    enc_keys, dec_keys = model.param_groups()
    opt_enc = AdamState(lr=config.lr_encoder)
    opt_dec = AdamState(lr=config.lr_decoder)
    stopper = EarlyStopping(config.patience)
    history = TrainHistory()
    best_params = copy.deepcopy(model.params())
    target = dataset.exact_dist

    for epoch in range(max_epochs):
        beta_now = beta_at(config.beta_schedule, config.beta, epoch, max_epochs)
        order = train_out[rng.permutation(train_out.size)]
        running = 0.0
        for s in range(0, order.size, config.batch):
            batch = order[s:s + config.batch]
            eps = rng.standard_normal((batch.size, L)) if L else None
            loss, grads = model.loss_and_grads(batch, beta_now, eps, config.grad_method)
            running += loss * batch.size
            params = model.params()
            if enc_keys:
                adam_step(opt_enc, {k: params[k] for k in enc_keys}, grads)
            adam_step(opt_dec, {k: params[k] for k in dec_keys}, grads)
        val_loss = dataset_loss(model, val_out, config.beta, val_eps, config.grad_method)
        fid = None
        if target is not None:
            dist = model.output_distribution(config.eval_z_samples, np.random.default_rng(eval_seed))
            fid = _fidelity(dist.probs, target.probs)
        history.epoch.append(epoch)
        history.train_loss.append(running / order.size)
        history.val_loss.append(val_loss)
        history.beta.append(beta_now)
        history.fidelity.append(fid)
        stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best_params = copy.deepcopy(model.params())
        if stop:
            break

    params = model.params()
    for k, v in best_params.items():
        params[k][...] = v
    history.stop_epoch = history.epoch[-1]
    history.best_epoch = stopper.best_epoch
    return model, history


def train_qcbm(model: QevaeModel, dataset: MeasurementDataset, config: TrainConfig):
    """Decoder-only training: the latent_dim = 0 case of :func:`train`."""
    if model.latent_dim != 0:
        raise ValueError("a QCBM has latent_dim = 0")
    return train(model, dataset, config)


def train_cvae(model: CvaeModel, dataset: MeasurementDataset, config: TrainConfig):
    if not isinstance(model, CvaeModel):
        raise TypeError("train_cvae expects a CvaeModel")
    return train(model, dataset, config)


def history_from_dict(d: dict) -> TrainHistory:
    return TrainHistory(**d)


def save_checkpoint(path, model, config: TrainConfig | None = None,
                    history: TrainHistory | None = None) -> None:
    obj = {"schema_version": CHECKPOINT_VERSION}
    obj.update(model.to_dict())
    if isinstance(model, QevaeModel) and model.latent_dim == 0:
        obj["model_kind"] = "qcbm"
    obj["train_config"] = None if config is None else asdict(config)
    obj["history"] = None if history is None else asdict(history)
    atomic_write_text(path, json.dumps(obj))


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("schema_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint schema {obj.get('schema_version')!r}")
    model = model_from_dict(obj)
    config = None if obj.get("train_config") is None else TrainConfig(**obj["train_config"])
    history = None if obj.get("history") is None else history_from_dict(obj["history"])
    return model, config, history
