"""Single-hidden-layer sigmoid network: weight layout, particle codec, forward pass, gradients.

Flat parameter layout (shared by gradient descent and the swarm): for each hidden
neuron ``i`` the row ``w_i1 .. w_in, b_i``, followed by ``w_y1 .. w_ym, b_y``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

LAYOUT_VERSION = 1


class DimensionMismatchError(ValueError):
    pass


def sigmoid(z):
    """Logistic function, overflow-free for any finite input (scalar or array)."""
    return expit(z)


def dimension_count(n: int, m: int) -> int:
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    return m * (n + 2) + 1


@dataclass(frozen=True, eq=False)
class SnnModel:
    """Weights of a network with ``n`` inputs, ``m`` hidden neurons and one output."""

    n: int
    m: int
    hidden_weights: np.ndarray  # (m, n)
    hidden_biases: np.ndarray  # (m,)
    output_weights: np.ndarray  # (m,)
    output_bias: float

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError(f"need n >= 1 and m >= 1, got n={self.n}, m={self.m}")
        hw = np.array(self.hidden_weights, dtype=float).reshape(self.m, self.n)
        hb = np.array(self.hidden_biases, dtype=float).reshape(self.m)
        ow = np.array(self.output_weights, dtype=float).reshape(self.m)
        for a in (hw, hb, ow):
            a.setflags(write=False)
        object.__setattr__(self, "hidden_weights", hw)
        object.__setattr__(self, "hidden_biases", hb)
        object.__setattr__(self, "output_weights", ow)
        object.__setattr__(self, "output_bias", float(self.output_bias))
        if not (np.all(np.isfinite(hw)) and np.all(np.isfinite(hb))
                and np.all(np.isfinite(ow)) and np.isfinite(self.output_bias)):
            raise ValueError("model weights must be finite")

    @property
    def d(self) -> int:
        return dimension_count(self.n, self.m)

    @classmethod
    def zeros(cls, n: int, m: int) -> "SnnModel":
        return decode_particle(np.zeros(dimension_count(n, m)), n, m)

    def __eq__(self, other):
        if not isinstance(other, SnnModel):
            return NotImplemented
        return (self.n, self.m) == (other.n, other.m) and np.array_equal(
            encode_particle(self), encode_particle(other))

    def predict(self, X) -> np.ndarray:
        return forward_flat(encode_particle(self), np.atleast_2d(X), self.n, self.m)


def encode_particle(model: SnnModel) -> np.ndarray:
    rows = np.column_stack([model.hidden_weights, model.hidden_biases])
    return np.concatenate([rows.ravel(), model.output_weights, [model.output_bias]])


def decode_particle(values, n: int, m: int) -> SnnModel:
    v = np.asarray(values, dtype=float)
    d = dimension_count(n, m)
    if v.ndim != 1 or v.size != d:
        raise DimensionMismatchError(f"expected {d} values for n={n}, m={m}, got shape {v.shape}")
    hw, hb, ow, ob = split_params(v, n, m)
    return SnnModel(n, m, hw.copy(), hb.copy(), ow.copy(), float(ob))


def split_params(params: np.ndarray, n: int, m: int):
    """Views ``(W, b, w_y, b_y)`` into a flat parameter vector (no copies)."""
    rows = params[: m * (n + 1)].reshape(m, n + 1)
    return rows[:, :n], rows[:, n], params[m * (n + 1): m * (n + 1) + m], params[-1]


def forward_flat(params: np.ndarray, X: np.ndarray, n: int, m: int) -> np.ndarray:
    W, b, wy, by = split_params(params, n, m)
    if X.shape[1] != n:
        raise DimensionMismatchError(f"model expects {n} features, got {X.shape[1]}")
    hidden = expit(X @ W.T + b)
    return expit(hidden @ wy + by)


def forward_swarm(positions: np.ndarray, X: np.ndarray, n: int, m: int) -> np.ndarray:
    """Outputs of every particle on every row: ``(n_particles, N)``."""
    P = positions.shape[0]
    rows = positions[:, : m * (n + 1)].reshape(P, m, n + 1)
    W = rows[:, :, :n].reshape(P * m, n)
    b = rows[:, :, n].reshape(P * m)
    hidden = expit(X @ W.T + b).reshape(X.shape[0], P, m)
    wy = positions[:, m * (n + 1): m * (n + 1) + m]
    z = np.einsum("kpi,pi->pk", hidden, wy) + positions[:, -1:]
    return expit(z)


def feedforward(model: SnnModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise DimensionMismatchError(f"model expects {model.n} features, got shape {x.shape}")
    hidden = sigmoid(model.hidden_weights @ x + model.hidden_biases)
    return float(sigmoid(model.output_weights @ hidden + model.output_bias))


def gradient_flat(params: np.ndarray, X: np.ndarray, y: np.ndarray, n: int, m: int):
    """Gradient of E = 1/2 * sum (o - y)^2 in flat layout, plus the outputs ``o``."""
    W, b, wy, by = split_params(params, n, m)
    h = expit(X @ W.T + b)
    o = expit(h @ wy + by)
    delta_o = (o - y) * o * (1.0 - o)  # (N,)
    delta_h = np.outer(delta_o, wy) * h * (1.0 - h)  # (N, m)
    grad = np.empty_like(params)
    rows = grad[: m * (n + 1)].reshape(m, n + 1)
    rows[:, :n] = delta_h.T @ X
    rows[:, n] = delta_h.sum(axis=0)
    grad[m * (n + 1): m * (n + 1) + m] = h.T @ delta_o
    grad[-1] = delta_o.sum()
    return grad, o


def gradients(model: SnnModel, data) -> SnnModel:
    """Partial derivatives of the summed squared error, laid out like ``model``.

    ``data`` is anything with ``features`` (N x n) and ``labels`` (N,).
    """
    X = np.asarray(data.features, dtype=float)
    y = np.asarray(data.labels, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("gradient of an empty batch")
    grad, _ = gradient_flat(encode_particle(model), X, y, model.n, model.m)
    W, b, wy, by = split_params(grad, model.n, model.m)
    return SnnModel(model.n, model.m, W, b, wy, by)


def model_to_dict(model: SnnModel) -> dict:
    return {"n": model.n, "m": model.m,
            "params": encode_particle(model).tolist(),
            "layout_version": LAYOUT_VERSION}


def model_from_dict(doc: dict) -> SnnModel:
    if doc.get("layout_version", LAYOUT_VERSION) != LAYOUT_VERSION:
        raise ValueError(f"unsupported layout_version {doc['layout_version']}")
    return decode_particle(doc["params"], int(doc["n"]), int(doc["m"]))


def save_model(model: SnnModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2))


def load_model(path) -> SnnModel:
    return model_from_dict(json.loads(Path(path).read_text()))
