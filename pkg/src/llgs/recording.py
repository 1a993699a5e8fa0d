"""Run history: an in-memory event list, optionally streamed to a JSONL file."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal

import numpy as np

Phase = Literal["run", "init", "warmup", "train", "render", "eval"]


def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass(slots=True)
class TrainingEvent:
    phase: Phase
    event: str
    payload: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return {"phase": self.phase, "event": self.event, **_plain(self.payload)}


class TrainingRecorder:
    """Collects pipeline events; with ``path`` set every event is also appended as one JSON line."""

    def __init__(self, path: str | Path | None = None) -> None:
        self._events: List[TrainingEvent] = []
        self.path = None if path is None else Path(path).expanduser().resolve()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def record(self, phase: Phase, event: str, **payload: Any) -> None:
        item = TrainingEvent(phase=phase, event=event, payload=payload)
        self._events.append(item)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(item.to_dict(), sort_keys=True) + "\n")

    @property
    def events(self) -> List[TrainingEvent]:
        return list(self._events)

    def select(self, phase: Phase, event: str | None = None) -> List[TrainingEvent]:
        return [e for e in self._events if e.phase == phase and (event is None or e.event == event)]


def read_log(path: str | Path) -> List[Dict[str, Any]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]
