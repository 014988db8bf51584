"""Small numpy network stack: dense layers with LeakyReLU, the Gaussian
encoder, reparametrization, Gaussian KL and ADAM."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAK = 0.01
HIDDEN = (8, 7)


def leaky_relu(x: np.ndarray, leak: float = LEAK) -> np.ndarray:
    return np.where(x > 0, x, leak * x)


def leaky_relu_grad(x: np.ndarray, leak: float = LEAK) -> np.ndarray:
    return np.where(x > 0, 1.0, leak)


@dataclass
class DenseLayer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"inconsistent shapes W{self.W.shape} b{self.b.shape}")

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "DenseLayer":
        bound = 1.0 / np.sqrt(n_in) if n_in else 0.0
        return cls(rng.uniform(-bound, bound, (n_out, n_in)),
                   rng.uniform(-bound, bound, n_out))

    @classmethod
    def zeros(cls, n_in: int, n_out: int) -> "DenseLayer":
        return cls(np.zeros((n_out, n_in)), np.zeros(n_out))

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    @property
    def n_params(self) -> int:
        return self.W.size + self.b.size

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.W.T + self.b

    def backward(self, x: np.ndarray, d_out: np.ndarray):
        """Given the input batch and dL/d(output), return (dL/dx, dW, db)."""
        return d_out @ self.W, d_out.T @ x, d_out.sum(axis=0)


class MLP:
    """Dense layers with LeakyReLU between them; the last layer is linear."""

    def __init__(self, layers: list[DenseLayer]):
        self.layers = layers

    @classmethod
    def init(cls, sizes, rng) -> "MLP":
        return cls([DenseLayer.init(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])])

    @property
    def n_params(self) -> int:
        return sum(l.n_params for l in self.layers)

    def forward(self, x: np.ndarray):
        """Output and a cache of pre-activations for :meth:`backward`."""
        cache = []
        h = x
        for i, layer in enumerate(self.layers):
            pre = layer(h)
            cache.append((h, pre))
            h = pre if i == len(self.layers) - 1 else leaky_relu(pre)
        return h, cache

    def backward(self, cache, d_out: np.ndarray):
        grads = [None] * len(self.layers)
        d = d_out
        for i in reversed(range(len(self.layers))):
            h_in, pre = cache[i]
            if i != len(self.layers) - 1:
                d = d * leaky_relu_grad(pre)
            d, dW, db = self.layers[i].backward(h_in, d)
            grads[i] = (dW, db)
        return d, grads

    def params(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, l in enumerate(self.layers):
            out[f"{prefix}.{i}.W"] = l.W
            out[f"{prefix}.{i}.b"] = l.b
        return out

    def grad_dict(self, grads, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, (dW, db) in enumerate(grads):
            out[f"{prefix}.{i}.W"] = dW
            out[f"{prefix}.{i}.b"] = db
        return out


class EncoderNet:
    """Bitstring -> (mu, logvar) of a diagonal Gaussian posterior."""

    def __init__(self, body: MLP, head_mu: DenseLayer, head_logvar: DenseLayer):
        self.body = body
        self.head_mu = head_mu
        self.head_logvar = head_logvar

    @classmethod
    def init(cls, n_inputs: int, latent_dim: int, rng, hidden=HIDDEN) -> "EncoderNet":
        sizes = (n_inputs,) + tuple(hidden)
        # body layers are all activated here, unlike MLP.forward
        body = MLP([DenseLayer.init(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])])
        return cls(body, DenseLayer.init(sizes[-1], latent_dim, rng),
                   DenseLayer.init(sizes[-1], latent_dim, rng))

    @property
    def latent_dim(self) -> int:
        return self.head_mu.n_out

    @property
    def n_inputs(self) -> int:
        return self.body.layers[0].n_in

    @property
    def n_params(self) -> int:
        return self.body.n_params + self.head_mu.n_params + self.head_logvar.n_params

    def forward(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_inputs:
            raise ValueError(f"encoder expects {self.n_inputs} inputs, got {x.shape[1]}")
        cache = []
        h = x
        for layer in self.body.layers:
            pre = layer(h)
            cache.append((h, pre))
            h = leaky_relu(pre)
        return self.head_mu(h), self.head_logvar(h), (cache, h)

    def backward(self, cache, d_mu: np.ndarray, d_logvar: np.ndarray) -> dict[str, np.ndarray]:
        layers_cache, h = cache
        d_h_mu, dWm, dbm = self.head_mu.backward(h, d_mu)
        d_h_lv, dWv, dbv = self.head_logvar.backward(h, d_logvar)
        d = d_h_mu + d_h_lv
        grads = {"enc.mu.W": dWm, "enc.mu.b": dbm, "enc.logvar.W": dWv, "enc.logvar.b": dbv}
        for i in reversed(range(len(self.body.layers))):
            h_in, pre = layers_cache[i]
            d = d * leaky_relu_grad(pre)
            d, dW, db = self.body.layers[i].backward(h_in, d)
            grads[f"enc.{i}.W"] = dW
            grads[f"enc.{i}.b"] = db
        return grads

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, l in enumerate(self.body.layers):
            out[f"enc.{i}.W"] = l.W
            out[f"enc.{i}.b"] = l.b
        out.update({"enc.mu.W": self.head_mu.W, "enc.mu.b": self.head_mu.b,
                    "enc.logvar.W": self.head_logvar.W, "enc.logvar.b": self.head_logvar.b})
        return out


def encode(net: EncoderNet, x) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic forward pass for one bit vector: returns (mu, logvar)."""
    x = np.asarray(x, dtype=float)
    mu, logvar, _ = net.forward(x[None, :] if x.ndim == 1 else x)
    if x.ndim == 1:
        return mu[0], logvar[0]
    return mu, logvar


def reparameterize(mu, logvar, eps):
    mu, logvar, eps = (np.asarray(a, dtype=float) for a in (mu, logvar, eps))
    if not (mu.shape == logvar.shape == eps.shape):
        raise ValueError("mu, logvar and eps must share a shape")
    return mu + np.exp(0.5 * logvar) * eps


def kl_gaussian(mu, logvar) -> float | np.ndarray:
    """KL(N(mu, e^logvar) || N(0, I)); sums the last axis."""
    mu, logvar = np.asarray(mu, dtype=float), np.asarray(logvar, dtype=float)
    if mu.shape != logvar.shape:
        raise ValueError("mu and logvar must share a shape")
    kl = 0.5 * np.sum(mu**2 + np.exp(logvar) - logvar - 1.0, axis=-1)
    return float(kl) if np.ndim(kl) == 0 else kl


def kl_gaussian_grad(mu, logvar):
    return np.asarray(mu, dtype=float), 0.5 * (np.exp(logvar) - 1.0)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]) -> None:
    """One bias-corrected ADAM update, in place on ``params`` and ``state``."""
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for key in sorted(params):
        g = grads[key]
        if key not in state.m:
            state.m[key] = np.zeros_like(params[key])
            state.v[key] = np.zeros_like(params[key])
        state.m[key] = state.beta1 * state.m[key] + (1 - state.beta1) * g
        state.v[key] = state.beta2 * state.v[key] + (1 - state.beta2) * g * g
        m_hat = state.m[key] / bc1
        v_hat = state.v[key] / bc2
        params[key] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
