"""Helpers for writing pipeline artifacts to disk as JSON."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Sequence

from .errors import DataError
from .geometry import Camera
from .llgim import AnchorSet


def _write_json(destination: str | Path, payload: Any) -> Path:
    destination_path = Path(destination).expanduser().resolve()
    destination_path.parent.mkdir(parents=True, exist_ok=True)
    destination_path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    return destination_path


def write_anchor_set(destination: str | Path, anchors: AnchorSet, *, thresholds: Sequence[float] = ()) -> Path:
    """Serialize anchor positions, scales and pruning provenance."""
    payload = anchors.to_dict()
    if thresholds:
        payload["thresholds"] = [float(t) for t in thresholds]
    return _write_json(destination, payload)


def read_anchor_set(source: str | Path) -> AnchorSet:
    try:
        payload = json.loads(Path(source).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"Cannot read anchors from {source}: {exc}") from exc
    return AnchorSet.from_dict(payload)


def write_eval_report(destination: str | Path, report: Dict[str, Any], *, align: bool) -> Path:
    return _write_json(destination, {"aligned": align, **report})


def write_render_sidecar(
    destination: str | Path,
    cam: Camera,
    *,
    mode: str,
    view_index: int | None,
    checkpoint: str | Path,
    outputs: Dict[str, str],
    scales: Dict[str, Dict[str, float]] | None = None,
) -> Path:
    """Record how a render was produced so it can be reproduced from the checkpoint."""
    payload = {
        "camera": cam.to_dict(),
        "mode": mode,
        "view_index": view_index,
        "checkpoint": str(checkpoint),
        "outputs": outputs,
        "scales": scales or {},
    }
    return _write_json(destination, payload)
