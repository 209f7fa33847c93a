"""Small noise-prediction MLP with hand-written reverse-mode gradients.

The network sees ``(z / sqrt(1 + gamma), embed(log gamma))`` and predicts the
channel noise; :func:`as_denoiser` turns it into ``x_hat = (z - eps_hat) / sqrt(gamma)``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .channel import scaled_input
from .core_math import LogisticSampler, estimate_moments, f_sigma, make_rng

CHECKPOINT_FORMAT = "immse-mlp"
CHECKPOINT_VERSION = 1


def _silu(x):
    return x * expit(x)


def _silu_grad(x):
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


class MlpDenoiser:
    """Fully-connected noise predictor.

    Parameters
    ----------
    d : int
        Data dimension.
    hidden : int
        Width of each hidden layer.
    n_layers : int
        Number of hidden layers.
    n_features : int
        Size of the log-SNR embedding (sin/cos pairs, so it must be even).
    freq_range : tuple of float
        Smallest and largest angular frequency, geometrically spaced.
    seed : int
        Seed for the weight initialisation.
    """

    def __init__(
        self,
        d: int,
        hidden: int = 128,
        n_layers: int = 3,
        n_features: int = 16,
        freq_range: tuple[float, float] = (2 * np.pi / 100, 2 * np.pi * 100),
        seed: int = 0,
    ):
        if n_features % 2:
            raise ValueError("n_features must be even")
        self.d = int(d)
        self.freqs = np.geomspace(freq_range[0], freq_range[1], n_features // 2)
        self.dims = [self.d + n_features] + [int(hidden)] * int(n_layers) + [self.d]
        rng = make_rng(seed, 0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            last = i == len(self.dims) - 2
            scale = 0.0 if last else np.sqrt(2.0 / fan_in)
            self.weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
            self.biases.append(np.zeros(fan_out))

    @property
    def n_features(self) -> int:
        return 2 * len(self.freqs)

    def embed(self, alpha) -> np.ndarray:
        a = np.asarray(alpha, dtype=float).reshape(-1, 1) * self.freqs[None, :]
        return np.concatenate([np.sin(a), np.cos(a)], axis=1)

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        i = 0
        for p in self.params():
            p[...] = theta[i : i + p.size].reshape(p.shape)
            i += p.size
        if i != theta.size:
            raise ValueError("parameter vector has the wrong length")

    def copy(self) -> "MlpDenoiser":
        return copy.deepcopy(self)

    def _inputs(self, z, gamma):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.d:
            raise ValueError(f"expected inputs of dimension {self.d}, got {z.shape[1]}")
        g = np.broadcast_to(np.asarray(gamma, dtype=float), (z.shape[0],))
        with np.errstate(divide="ignore"):
            alpha = np.log(g)
        return np.concatenate([scaled_input(z, g), self.embed(alpha)], axis=1)

    def _forward(self, h):
        pre = []
        acts = [h]
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = h @ W + b
            pre.append(a)
            h = _silu(a)
            acts.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return out, pre, acts

    def __call__(self, z, gamma) -> np.ndarray:
        """Predicted noise for a batch ``z`` at SNR ``gamma``."""
        return self._forward(self._inputs(z, gamma))[0]


def eps_forward(net: MlpDenoiser, z, gamma) -> np.ndarray:
    return net(z, gamma)


class NetDenoiser:
    """Denoiser view of a noise predictor; optional clipping of x_hat."""

    def __init__(self, net: MlpDenoiser, clip: tuple[float, float] | None = None):
        self.net = net
        self.clip = clip

    def __call__(self, z, gamma):
        g = np.asarray(gamma, dtype=float)
        if np.any(g <= 0):
            raise ValueError("noise-prediction denoiser needs gamma > 0")
        z = np.atleast_2d(np.asarray(z, dtype=float))
        sg = np.sqrt(g)[:, None] if g.ndim == 1 else np.sqrt(g)
        xhat = (z - self.net(z, g)) / sg
        if self.clip is not None:
            xhat = np.clip(xhat, *self.clip)
        return xhat


def as_denoiser(net: MlpDenoiser, clip: tuple[float, float] | None = None) -> NetDenoiser:
    return NetDenoiser(net, clip)


class TrainingError(RuntimeError):
    def __init__(self, message: str, history: dict | None = None):
        super().__init__(message)
        self.history = history


def loss_and_grad(net: MlpDenoiser, x, eps, alpha, weight):
    """Weighted noise-prediction loss mean_b[w_b ||eps_b - eps_hat_b||^2] and its gradient.

    Returns ``(loss, grads, sq_err)`` where ``grads`` follows ``net.params()``
    ordering and ``sq_err`` holds the per-row squared errors.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    weight = np.asarray(weight, dtype=float).reshape(-1)
    gamma = np.exp(alpha)
    z = np.sqrt(gamma)[:, None] * x + eps
    out, pre, acts = net._forward(net._inputs(z, gamma))
    r = out - eps
    sq = np.sum(r**2, axis=1)
    B = x.shape[0]
    loss = float(np.mean(weight * sq))
    if not np.isfinite(loss):
        bad = alpha[~np.isfinite(weight * sq)]
        raise TrainingError(f"non-finite loss; offending log-SNR values {bad[:5]}")
    delta = (2.0 / B) * weight[:, None] * r
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.weights)
    for layer in range(len(net.weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer:
            delta = (delta @ net.weights[layer].T) * _silu_grad(pre[layer - 1])
    grads = []
    for gw, gb in zip(grads_w, grads_b):
        grads += [gw, gb]
    return loss, grads, sq


def grad(net: MlpDenoiser, x, eps, alpha, weight) -> list[np.ndarray]:
    return loss_and_grad(net, x, eps, alpha, weight)[1]


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 128
    steps: int = 20000
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_drop_step: int | None = None  # defaults to steps // 2
    divergence_threshold: float = 1e6

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.steps < 0:
            raise ValueError("invalid training configuration")


@dataclass
class TrainResult:
    net: MlpDenoiser
    loss: np.ndarray
    nll: np.ndarray
    config: TrainConfig = field(default_factory=TrainConfig)

    @property
    def history(self) -> dict:
        return {"loss": self.loss, "nll": self.nll}


def train(net: MlpDenoiser, dataset, sampler: LogisticSampler, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Fit the noise predictor with Adam on importance-weighted denoising loss.

    Each step draws a minibatch of data, standard normal noise and log-SNR
    values from ``sampler``; the loss is weighted by 1/q(alpha). The
    per-step NLL-bound estimate is recorded alongside the loss.
    """
    X = np.asarray(dataset, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    net = net.copy()
    spec = estimate_moments(X)
    h_gauss = spec.entropy()
    rng = make_rng(config.seed, 1)
    params = net.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    drop = config.steps // 2 if config.lr_drop_step is None else config.lr_drop_step
    losses = np.empty(config.steps)
    nlls = np.empty(config.steps)
    for step in range(config.steps):
        idx = rng.integers(0, X.shape[0], size=config.batch_size)
        x = X[idx]
        eps = rng.standard_normal(x.shape)
        alpha, q = sampler.draw(config.batch_size, rng)
        w = 1.0 / q
        loss, grads, sq = loss_and_grad(net, x, eps, alpha, w)
        losses[step] = loss
        nlls[step] = h_gauss - 0.5 * np.mean(w * (f_sigma(alpha, spec.eigvals) - sq))
        if loss > config.divergence_threshold:
            hist = {"loss": losses[: step + 1], "nll": nlls[: step + 1]}
            raise TrainingError(f"training diverged at step {step} (loss {loss:.3g})", hist)
        lr = config.lr * (0.1 if step >= drop else 1.0)
        t = step + 1
        for p, g, mi, vi in zip(params, grads, m, v):
            mi *= config.beta1
            mi += (1 - config.beta1) * g
            vi *= config.beta2
            vi += (1 - config.beta2) * g * g
            mhat = mi / (1 - config.beta1**t)
            vhat = vi / (1 - config.beta2**t)
            p -= lr * mhat / (np.sqrt(vhat) + config.adam_eps)
    return TrainResult(net, losses, nlls, config)


def save_checkpoint(net: MlpDenoiser, path, config: TrainConfig | None = None, extra: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "d": net.d,
        "dims": net.dims,
        "freqs": net.freqs.tolist(),
        "weights": [W.tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "config": asdict(config) if config is not None else None,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> MlpDenoiser:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an MLP checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    dims = doc["dims"]
    net = MlpDenoiser.__new__(MlpDenoiser)
    net.d = int(doc["d"])
    net.freqs = np.asarray(doc["freqs"], dtype=float)
    net.dims = [int(k) for k in dims]
    net.weights = [np.asarray(W, dtype=float).reshape(a, b) for W, a, b in zip(doc["weights"], dims[:-1], dims[1:])]
    net.biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
    return net
