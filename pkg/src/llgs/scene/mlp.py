"""One-hidden-layer perceptrons with hand-written backward passes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..branches import BranchCache, decide
from ..optim.params import ParamStore

_SUFFIXES = ("W1", "b1", "W2", "b2")


@dataclass(frozen=True, slots=True)
class MlpParams:
    """Views on the four arrays of a decoder: W1 (hidden, in), b1, W2 (out, hidden), b2."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[0]


@dataclass(slots=True)
class MlpCache:
    inputs: np.ndarray
    hidden: np.ndarray
    active: np.ndarray


def mlp_params(store: ParamStore, name: str) -> MlpParams:
    return MlpParams(*(store[f"{name}.{suffix}"] for suffix in _SUFFIXES))


def register_mlp(
    store: ParamStore,
    name: str,
    in_dim: int,
    hidden: int,
    out_dim: int,
    group: str,
    rng: np.random.Generator,
    *,
    out_scale: float = 1.0,
    out_bias: np.ndarray | float = 0.0,
) -> MlpParams:
    """Glorot-uniform hidden layer; the head is scaled down by ``out_scale``."""
    limit1 = np.sqrt(6.0 / (in_dim + hidden))
    limit2 = np.sqrt(6.0 / (hidden + out_dim)) * out_scale
    store.register(f"{name}.W1", rng.uniform(-limit1, limit1, (hidden, in_dim)), group)
    store.register(f"{name}.b1", np.zeros(hidden), group)
    store.register(f"{name}.W2", rng.uniform(-limit2, limit2, (out_dim, hidden)), group)
    store.register(f"{name}.b2", np.broadcast_to(np.asarray(out_bias, dtype=np.float64), (out_dim,)), group)
    return mlp_params(store, name)


def mlp_forward(
    params: MlpParams,
    inputs: np.ndarray,
    *,
    branches: BranchCache | None = None,
    key: str = "mlp",
) -> Tuple[np.ndarray, MlpCache]:
    """Linear -> ReLU -> Linear on (B, in) rows; the head activation is applied by the caller."""
    pre = inputs @ params.W1.T + params.b1
    active = decide(branches, f"{key}.relu", lambda: pre > 0.0)
    hidden = np.where(active, pre, 0.0)
    out = hidden @ params.W2.T + params.b2
    return out, MlpCache(inputs=inputs, hidden=hidden, active=active)


def mlp_backward(
    store: ParamStore, name: str, params: MlpParams, cache: MlpCache, grad_out: np.ndarray
) -> np.ndarray:
    """Accumulate weight gradients into ``store`` and return the gradient w.r.t. the inputs."""
    store.accumulate(f"{name}.W2", grad_out.T @ cache.hidden)
    store.accumulate(f"{name}.b2", grad_out.sum(axis=0))
    grad_hidden = (grad_out @ params.W2) * cache.active
    store.accumulate(f"{name}.W1", grad_hidden.T @ cache.inputs)
    store.accumulate(f"{name}.b1", grad_hidden.sum(axis=0))
    return grad_hidden @ params.W1


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)
