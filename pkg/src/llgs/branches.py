"""Record and replay of the discrete decisions taken during a forward pass."""

from __future__ import annotations

from typing import Callable, Dict, TypeVar

T = TypeVar("T")


class BranchCache:
    """
    Piecewise-smooth functions (ReLU, L1, clamps, culling, depth sorting) pick a branch at
    every evaluation. A cache in ``record`` mode stores each decision under a key; switched
    to ``replay`` it hands the stored decisions back, so a perturbed evaluation stays on the
    same smooth piece as the unperturbed one. Keys must be unique within one forward pass.
    """

    def __init__(self) -> None:
        self._decisions: Dict[str, object] = {}
        self.replaying = False

    def decide(self, key: str, compute: Callable[[], T]) -> T:
        if self.replaying:
            if key not in self._decisions:
                raise KeyError(f"No recorded decision for '{key}'")
            return self._decisions[key]  # type: ignore[return-value]
        value = compute()
        self._decisions[key] = value
        return value

    def replay(self) -> "BranchCache":
        self.replaying = True
        return self

    def clear(self) -> None:
        self._decisions.clear()
        self.replaying = False

    def __len__(self) -> int:
        return len(self._decisions)


def decide(branches: BranchCache | None, key: str, compute: Callable[[], T]) -> T:
    """Evaluate ``compute`` directly when no cache is attached."""
    if branches is None:
        return compute()
    return branches.decide(key, compute)
