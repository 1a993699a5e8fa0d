"""Named parameter arrays with mirrored gradient buffers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Tuple

import numpy as np


@dataclass(slots=True)
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray
    group: str

    @property
    def size(self) -> int:
        return self.value.size


class ParamStore:
    """
    Registry of float64 parameter arrays, each tagged with a learning-rate group.

    Gradients are accumulated additively; callers always add in a fixed order so the
    result is bit-stable run to run.
    """

    def __init__(self) -> None:
        self._params: Dict[str, Parameter] = {}

    def register(self, name: str, value: np.ndarray, group: str) -> Parameter:
        if name in self._params:
            raise ValueError(f"Parameter '{name}' is already registered.")
        array = np.array(value, dtype=np.float64, copy=True)
        param = Parameter(name=name, value=array, grad=np.zeros_like(array), group=group)
        self._params[name] = param
        return param

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name].value

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def param(self, name: str) -> Parameter:
        return self._params[name]

    def grad(self, name: str) -> np.ndarray:
        return self._params[name].grad

    def names(self) -> List[str]:
        return list(self._params)

    def groups(self) -> List[str]:
        seen: Dict[str, None] = {}
        for param in self._params.values():
            seen.setdefault(param.group, None)
        return list(seen)

    def in_group(self, group: str) -> List[Parameter]:
        return [p for p in self._params.values() if p.group == group]

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        param = self._params[name]
        param.grad += np.asarray(grad, dtype=np.float64).reshape(param.value.shape)

    def zero_grad(self, names: Iterable[str] | None = None) -> None:
        for name in names if names is not None else self._params:
            self._params[name].grad.fill(0.0)

    def set_value(self, name: str, value: np.ndarray) -> None:
        param = self._params[name]
        param.value = np.array(value, dtype=np.float64, copy=True)
        param.grad = np.zeros_like(param.value)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}

    def grad_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.grad.copy() for name, p in self._params.items()}

    def load_state_dict(self, values: Dict[str, np.ndarray]) -> None:
        for name, value in values.items():
            self._params[name].value[...] = value

    def take_rows(self, names: Iterable[str], keep: np.ndarray) -> None:
        """Keep only the leading-axis rows selected by ``keep`` (used when anchors are removed)."""
        for name in names:
            param = self._params[name]
            param.value = param.value[keep].copy()
            param.grad = param.grad[keep].copy()

    def copy(self) -> "ParamStore":
        clone = ParamStore()
        for param in self._params.values():
            clone.register(param.name, param.value, param.group)
        return clone

    def coordinates(self) -> List[Tuple[str, int]]:
        """Every scalar coordinate as (name, flat index), in registration order."""
        return [(name, i) for name, p in self._params.items() for i in range(p.size)]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p.value)) for p in self._params.values())
