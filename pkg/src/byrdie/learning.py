"""Regularized empirical risk for linear models and a small ReLU network.

Every array routine accepts leading batch axes so that all honest nodes can
be evaluated in one call: ``w`` is ``(..., P)``, ``X`` is ``(..., N, D)`` and
``y`` is ``(..., N)``. Coordinates are 0-based here.

MLP parameters are flattened layer by layer; within a layer the weight matrix
(shape ``(out, in)``, row-major) comes first, followed by its bias vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

CONVEX_KINDS = ("square", "square_hinge", "logistic")
KINDS = CONVEX_KINDS + ("mlp",)


def _unwrap(data):
    if isinstance(data, tuple):
        return data
    return data.X, data.y


@dataclass(frozen=True)
class LossModel:
    """Loss kind plus ridge weight; ``f(w) = mean loss + lam/2 * ||w||^2``.

    Linear kinds score ``z = w^T x`` (with a trailing bias weight when ``bias``
    is set). ``layers`` is only used by ``mlp`` and lists layer widths from
    input to output; hidden layers use ReLU and the output uses softmax with
    cross-entropy.
    """

    kind: str = "logistic"
    lam: float = 0.01
    bias: bool = True
    layers: tuple = (4, 3, 3)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.lam < 0:
            raise ConfigError("regularization weight must be >= 0")
        if self.kind == "mlp" and len(self.layers) < 2:
            raise ConfigError("mlp needs at least input and output widths")

    @property
    def convex(self) -> bool:
        return self.kind in CONVEX_KINDS

    def n_params(self, input_dim: int) -> int:
        if self.kind == "mlp":
            if input_dim != self.layers[0]:
                raise DimensionError(f"mlp expects {self.layers[0]} inputs, data has {input_dim}")
            return sum(o * i + o for i, o in zip(self.layers[:-1], self.layers[1:]))
        return input_dim + (1 if self.bias else 0)

    def _check(self, w, X, y):
        w = np.asarray(w, dtype=float)
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if w.shape[-1] != self.n_params(X.shape[-1]):
            raise DimensionError(f"parameter length {w.shape[-1]} does not match data dimension {X.shape[-1]}")
        if y.shape != X.shape[:-1]:
            raise DimensionError(f"labels {y.shape} do not match features {X.shape}")
        return w, X, y

    # ----------------------------------------------------------- linear kinds

    def scores(self, w, X):
        D = X.shape[-1]
        z = np.matmul(X, w[..., :D, None])[..., 0]
        if self.bias:
            z = z + w[..., D, None]
        return z

    def loss_of_scores(self, z, y):
        """Per-sample loss for linear kinds."""
        if self.kind == "square":
            return (y - z) ** 2
        if self.kind == "square_hinge":
            return np.maximum(0.0, 1.0 - y * z) ** 2
        return np.logaddexp(0.0, -y * z)

    def dloss_of_scores(self, z, y):
        if self.kind == "square":
            return 2.0 * (z - y)
        if self.kind == "square_hinge":
            # zero at the kink 1 - yz = 0, matching the inactive side
            return -2.0 * y * np.maximum(0.0, 1.0 - y * z)
        return -y * np.exp(-np.logaddexp(0.0, y * z))

    # ----------------------------------------------------------- mlp

    def _unpack(self, w):
        mats = []
        pos = 0
        lead = w.shape[:-1]
        for i, o in zip(self.layers[:-1], self.layers[1:]):
            W = w[..., pos:pos + o * i].reshape(lead + (o, i))
            pos += o * i
            c = w[..., pos:pos + o]
            pos += o
            mats.append((W, c))
        return mats

    def _forward(self, w, X):
        acts = [X]
        pres = []
        layers = self._unpack(w)
        h = X
        for n, (W, c) in enumerate(layers):
            pre = np.matmul(h, np.swapaxes(W, -1, -2)) + c[..., None, :]
            pres.append(pre)
            h = pre if n == len(layers) - 1 else np.maximum(pre, 0.0)
            acts.append(h)
        return layers, pres, acts

    @staticmethod
    def _log_softmax(logits):
        shift = logits - logits.max(axis=-1, keepdims=True)
        return shift - np.log(np.exp(shift).sum(axis=-1, keepdims=True))

    def _mlp_loss_grad(self, w, X, y, want_grad):
        layers, pres, acts = self._forward(w, X)
        logp = self._log_softmax(pres[-1])
        labels = y.astype(int)
        picked = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
        loss = -picked.mean(axis=-1)
        if not want_grad:
            return loss, None
        N = X.shape[-2]
        delta = np.exp(logp)
        np.put_along_axis(delta, labels[..., None], np.take_along_axis(delta, labels[..., None], axis=-1) - 1.0, axis=-1)
        delta /= N
        parts = []
        for n in range(len(layers) - 1, -1, -1):
            W, _ = layers[n]
            gW = np.matmul(np.swapaxes(delta, -1, -2), acts[n])
            gc = delta.sum(axis=-2)
            parts.append((gW, gc))
            if n > 0:
                delta = np.matmul(delta, W) * (pres[n - 1] > 0)
        lead = w.shape[:-1]
        flat = []
        for gW, gc in reversed(parts):
            flat.append(gW.reshape(lead + (-1,)))
            flat.append(gc)
        return loss, np.concatenate(flat, axis=-1)

    def predict_proba(self, w, X):
        if self.kind != "mlp":
            raise ConfigError("predict_proba is only defined for the mlp kind")
        _, pres, _ = self._forward(np.asarray(w, float), np.asarray(X, float))
        return np.exp(self._log_softmax(pres[-1]))

    # ----------------------------------------------------------- public surface

    def risk(self, w, X, y):
        w, X, y = self._check(w, X, y)
        reg = 0.5 * self.lam * np.sum(w * w, axis=-1)
        if self.kind == "mlp":
            loss, _ = self._mlp_loss_grad(w, X, y, want_grad=False)
            return loss + reg
        return self.loss_of_scores(self.scores(w, X), y).mean(axis=-1) + reg

    def grad(self, w, X, y):
        w, X, y = self._check(w, X, y)
        if self.kind == "mlp":
            _, g = self._mlp_loss_grad(w, X, y, want_grad=True)
            return g + self.lam * w
        d = self.dloss_of_scores(self.scores(w, X), y)
        N = X.shape[-2]
        gx = np.matmul(d[..., None, :], X)[..., 0, :] / N
        parts = [gx]
        if self.bias:
            parts.append(d.mean(axis=-1, keepdims=True))
        return np.concatenate(parts, axis=-1) + self.lam * w

    def coord_grad(self, w, X, y, k: int):
        """Partial derivative of the risk along coordinate ``k`` (0-based)."""
        w, X, y = self._check(w, X, y)
        P = w.shape[-1]
        if not 0 <= k < P:
            raise DimensionError(f"coordinate {k} out of range for P={P}")
        if self.kind == "mlp":
            _, g = self._mlp_loss_grad(w, X, y, want_grad=True)
            return g[..., k] + self.lam * w[..., k]
        d = self.dloss_of_scores(self.scores(w, X), y)
        D = X.shape[-1]
        if k < D:
            g = (d * X[..., k]).mean(axis=-1)
        else:
            g = d.mean(axis=-1)
        return g + self.lam * w[..., k]

    def predict(self, w, X):
        """Binary kinds give -1/+1 with a zero score counted as +1; mlp gives class indices."""
        w = np.asarray(w, float)
        X = np.asarray(X, float)
        if self.kind == "mlp":
            _, pres, _ = self._forward(w, X)
            return pres[-1].argmax(axis=-1).astype(float)
        return np.where(self.scores(w, X) >= 0, 1.0, -1.0)

    def accuracy(self, w, X, y):
        y = np.asarray(y, float)
        if self.kind == "square" and not np.all(np.isin(y, (-1.0, 1.0))):
            raise ConfigError("accuracy is undefined for regression targets")
        return (self.predict(w, X) == y).mean(axis=-1)


def risk(model: LossModel, w, data):
    X, y = _unwrap(data)
    return model.risk(w, X, y)


def grad(model: LossModel, w, data):
    X, y = _unwrap(data)
    return model.grad(w, X, y)


def coord_grad(model: LossModel, w, data, k: int):
    X, y = _unwrap(data)
    return model.coord_grad(w, X, y, k)


def accuracy(model: LossModel, w, data):
    X, y = _unwrap(data)
    return model.accuracy(w, X, y)


def estimate_lipschitz(model: LossModel, dataset) -> float:
    """Upper bound on the gradient Lipschitz constant from the data norm bound B.

    A bias weight acts as an extra feature fixed at 1, so it adds 1 to B^2.
    """
    if not model.convex:
        raise ConfigError(f"no Lipschitz bound for the {model.kind!r} kind")
    B2 = float(dataset.B) ** 2 + (1.0 if model.bias else 0.0)
    curvature = 0.25 if model.kind == "logistic" else 2.0
    return curvature * B2 + model.lam


def init_params(model: LossModel, input_dim: int, rng: np.random.Generator | None = None, scale: float = 0.0):
    """Zero vector, or ``N(0, scale^2)`` entries when ``scale > 0``."""
    P = model.n_params(input_dim)
    if scale == 0.0 or rng is None:
        return np.zeros(P)
    return scale * rng.standard_normal(P)


def format_params(w) -> str:
    """One CSV row with shortest round-trip decimals."""
    return ",".join(repr(float(v)) for v in np.ravel(w))


def parse_params(row: str) -> np.ndarray:
    return np.asarray([float(v) for v in row.strip().split(",")])
