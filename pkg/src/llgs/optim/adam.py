"""Bias-corrected Adam with per-group learning rates."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping

import numpy as np

from .params import ParamStore

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: Dict[str, np.ndarray] = field(default_factory=dict)
    second: Dict[str, np.ndarray] = field(default_factory=dict)
    steps: Dict[str, int] = field(default_factory=dict)
    skipped: Dict[str, int] = field(default_factory=dict)

    def moments_for(self, name: str, like: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.first or self.first[name].shape != like.shape:
            self.first[name] = np.zeros_like(like)
            self.second[name] = np.zeros_like(like)
            self.steps[name] = 0
        return self.first[name], self.second[name]

    def take_rows(self, names: Iterable[str], keep: np.ndarray) -> None:
        for name in names:
            if name in self.first:
                self.first[name] = self.first[name][keep].copy()
                self.second[name] = self.second[name][keep].copy()

    def copy(self) -> "AdamState":
        return AdamState(
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            step=self.step,
            first={k: v.copy() for k, v in self.first.items()},
            second={k: v.copy() for k, v in self.second.items()},
            steps=dict(self.steps),
            skipped=dict(self.skipped),
        )


def adam_step(store: ParamStore, state: AdamState, lrs: Mapping[str, float]) -> AdamState:
    """
    One Adam update for every group named in ``lrs``; other groups stay frozen.

    Bias correction counts the updates each parameter has received, so a group
    that joins late starts with steps of about ``lr`` like every other group.

    A group with any non-finite gradient is skipped for this step and counted in
    ``state.skipped``. Gradients of all parameters are zeroed afterwards.
    """
    state.step += 1
    for group, lr in lrs.items():
        params = store.in_group(group)
        if not params:
            continue
        if not all(np.all(np.isfinite(p.grad)) for p in params):
            state.skipped[group] = state.skipped.get(group, 0) + 1
            logger.warning(
                "Non-finite gradient in group '%s'; skipped (%d so far)", group, state.skipped[group]
            )
            continue
        for param in params:
            m, v = state.moments_for(param.name, param.value)
            t = state.steps[param.name] = state.steps[param.name] + 1
            m *= state.beta1
            m += (1.0 - state.beta1) * param.grad
            v *= state.beta2
            v += (1.0 - state.beta2) * param.grad ** 2
            m_hat = m / (1.0 - state.beta1 ** t)
            v_hat = v / (1.0 - state.beta2 ** t)
            param.value -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    store.zero_grad()
    return state


def exponential_lr(lr_init: float, lr_final: float, step: int, max_steps: int) -> float:
    """Log-linear interpolation from ``lr_init`` to ``lr_final`` over ``max_steps``."""
    if lr_init <= 0.0 or lr_final <= 0.0:
        return 0.0
    t = min(max(step / max(max_steps, 1), 0.0), 1.0)
    return math.exp((1.0 - t) * math.log(lr_init) + t * math.log(lr_final))
