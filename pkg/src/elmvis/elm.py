"""Extreme Learning Machine used as the cost model.

The hidden layer is random and frozen; only the linear output layer is
solved, by least squares through an SVD-based pseudoinverse.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

Activation = Literal["sigmoid", "tanh", "linear"]
ACTIVATIONS: tuple[str, ...] = ("sigmoid", "tanh", "linear")

DEFAULT_RCOND = 1e-9


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_ACTIVATION_FUNCS = {
    "sigmoid": _sigmoid,
    "tanh": np.tanh,
    "linear": lambda z: z,
}


@dataclass(frozen=True)
class ElmModel:
    """Random hidden layer: ``W`` is (d_in, L), ``bias`` is (L,)."""

    W: np.ndarray
    bias: np.ndarray
    activation: Activation = "tanh"

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if W.ndim != 2 or W.shape[0] < 1 or W.shape[1] < 1:
            raise ValueError(f"W must be a non-empty 2-D matrix, got shape {W.shape}")
        if bias.shape[0] != W.shape[1]:
            raise ValueError(f"bias length {bias.shape[0]} does not match L={W.shape[1]}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(bias))):
            raise ValueError("W and bias must be finite")
        if self.activation not in _ACTIVATION_FUNCS:
            raise ValueError(f"unknown activation {self.activation!r}; choose from {ACTIVATIONS}")
        W.flags.writeable = False
        bias.flags.writeable = False
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "bias", bias)

    @property
    def d_in(self) -> int:
        return self.W.shape[0]

    @property
    def n_neurons(self) -> int:
        return self.W.shape[1]


def init_model(d_in: int, n_neurons: int, activation: Activation = "tanh",
               seed: int | np.random.SeedSequence = 0) -> ElmModel:
    """Draw a random hidden layer.

    Weights are standard normal scaled by ``1/sqrt(d_in)`` so pre-activations
    stay O(1) for unit-scale inputs; biases are standard normal.
    """
    if d_in < 1 or n_neurons < 1:
        raise ValueError(f"d_in and n_neurons must be >= 1, got {d_in}, {n_neurons}")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((d_in, n_neurons)) / np.sqrt(d_in)
    bias = rng.standard_normal(n_neurons)
    return ElmModel(W, bias, activation)


def hidden_layer(model: ElmModel, V) -> np.ndarray:
    """Hidden-layer outputs ``phi(V @ W + bias)`` for every row of V."""
    V = np.asarray(V, dtype=np.float64)
    if V.ndim == 1:
        V = V.reshape(1, -1)
    if V.ndim != 2 or V.shape[1] != model.d_in:
        raise ValueError(f"V must have {model.d_in} columns, got shape {V.shape}")
    return _ACTIVATION_FUNCS[model.activation](V @ model.W + model.bias)


def _check_finite(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise FloatingPointError("matrix contains NaN or Inf")
    return H


def _truncated_svd(H: np.ndarray, rcond: float):
    if rcond <= 0:
        raise ValueError("rcond must be positive")
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return U[:, :0], s[:0], Vt[:0]
    r = int(np.count_nonzero(s > rcond * s[0]))
    return U[:, :r], s[:r], Vt[:r]


def pseudoinverse(H, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Moore-Penrose pseudoinverse; singular values <= rcond*sigma_max are dropped."""
    H = _check_finite(H)
    U, s, Vt = _truncated_svd(H, rcond)
    return (Vt.T / s) @ U.T


def projection_matrix(H, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Hat matrix ``H @ pinv(H)``, mapping targets X to their least-squares fit.

    Built as ``U_r @ U_r.T`` from the truncated SVD, which is the same
    operator but symmetric by construction.
    """
    H = _check_finite(H)
    U, _, _ = _truncated_svd(H, rcond)
    return U @ U.T


def numerical_rank(H, rcond: float = DEFAULT_RCOND) -> int:
    return _truncated_svd(_check_finite(H), rcond)[1].size


def solve_output_weights(H, X, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Minimum-norm least-squares output weights ``pinv(H) @ X``."""
    H = _check_finite(H)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != H.shape[0]:
        raise ValueError(f"row mismatch: H has {H.shape[0]} rows, X has {X.shape[0]}")
    return pseudoinverse(H, rcond) @ X
