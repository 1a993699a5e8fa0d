"""Central finite differences as the oracle for every hand-written gradient."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .params import ParamStore

logger = logging.getLogger(__name__)

LossFn = Callable[[ParamStore], float]


@dataclass(frozen=True, slots=True)
class CoordinateCheck:
    name: str
    index: int
    analytic: float
    numeric: float
    relative_error: float
    flag: str | None = None


@dataclass(frozen=True, slots=True)
class GradCheckReport:
    checks: Tuple[CoordinateCheck, ...]

    @property
    def accepted(self) -> List[CoordinateCheck]:
        return [c for c in self.checks if c.flag is None]

    @property
    def flagged(self) -> List[CoordinateCheck]:
        return [c for c in self.checks if c.flag is not None]

    @property
    def max_relative_error(self) -> float:
        errors = [c.relative_error for c in self.accepted]
        return max(errors) if errors else 0.0

    @property
    def names(self) -> List[str]:
        return sorted({c.name for c in self.checks})

    def worst(self, count: int = 5) -> List[CoordinateCheck]:
        return sorted(self.accepted, key=lambda c: c.relative_error, reverse=True)[:count]


def _sample_coordinates(
    store: ParamStore, names: Sequence[str], samples: int, rng: np.random.Generator
) -> List[Tuple[str, int]]:
    """Spread samples round-robin over ``names`` so every array is visited."""
    pools = {name: rng.permutation(store[name].size) for name in names if store[name].size}
    picked: List[Tuple[str, int]] = []
    cursor = 0
    while len(picked) < samples and pools:
        exhausted = []
        for name, pool in pools.items():
            if cursor < len(pool):
                picked.append((name, int(pool[cursor])))
                if len(picked) == samples:
                    break
            else:
                exhausted.append(name)
        for name in exhausted:
            pools.pop(name)
        cursor += 1
    return picked


def _evaluate_at(loss_fn: LossFn, store: ParamStore, name: str, index: int, delta: float, base: float) -> float:
    flat = store[name].reshape(-1)
    flat[index] = base + delta
    try:
        value = float(loss_fn(store))
    finally:
        flat[index] = base
    return value


def finite_difference_check(
    loss_fn: LossFn,
    store: ParamStore,
    step: float = 1e-4,
    samples: int = 200,
    seed: int = 0,
    *,
    names: Sequence[str] | None = None,
    floor: float = 1e-8,
) -> GradCheckReport:
    """
    Compare analytic gradients with central differences on sampled coordinates.

    ``loss_fn`` returns the loss and accumulates its gradient into ``store``. The first
    call provides the analytic gradient; later calls only contribute values. Coordinates
    where the loss is non-finite or where the one-sided slopes disagree like a kink
    (the disagreement does not shrink with the step) are flagged and left out of the
    aggregate.
    """
    store.zero_grad()
    f0 = float(loss_fn(store))
    analytic = store.grad_dict()
    store.zero_grad()

    rng = np.random.default_rng(seed)
    chosen = _sample_coordinates(store, list(names or store.names()), samples, rng)
    checks: List[CoordinateCheck] = []
    for name, index in chosen:
        base = float(store[name].reshape(-1)[index])
        plus = _evaluate_at(loss_fn, store, name, index, step, base)
        minus = _evaluate_at(loss_fn, store, name, index, -step, base)
        a = float(analytic[name].reshape(-1)[index])
        if not (math.isfinite(plus) and math.isfinite(minus)):
            checks.append(CoordinateCheck(name, index, a, math.nan, math.inf, "non-finite"))
            continue
        numeric = (plus - minus) / (2.0 * step)
        gap = abs((plus - f0) - (f0 - minus)) / step
        flag = None
        if gap > 1e-6 * max(1.0, abs(numeric)):
            half_plus = _evaluate_at(loss_fn, store, name, index, step / 2, base)
            half_minus = _evaluate_at(loss_fn, store, name, index, -step / 2, base)
            half_gap = abs((half_plus - f0) - (f0 - half_minus)) / (step / 2)
            if half_gap > 0.75 * gap:
                flag = "non-differentiable"
        relative = abs(a - numeric) / max(floor, abs(numeric))
        checks.append(CoordinateCheck(name, index, a, numeric, relative, flag))
    store.zero_grad()

    report = GradCheckReport(tuple(checks))
    if report.flagged:
        logger.info("%d coordinate(s) flagged during gradient check", len(report.flagged))
    return report
