"""Single-file scene checkpoints: JSON header followed by little-endian float32 arrays."""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict

import numpy as np

from ..errors import DataError
from ..optim.params import ParamStore
from .model import ModelConfig, SceneModel

logger = logging.getLogger(__name__)

MAGIC = b"LLGS"
VERSION = 1
_SCALES = "anchor.scale"


def _header(model: SceneModel, extra: Dict[str, Any] | None) -> Dict[str, Any]:
    arrays = [{"name": _SCALES, "group": None, "shape": list(model.scales.shape)}]
    arrays += [{"name": p.name, "group": p.group, "shape": list(p.value.shape)} for p in model.store]
    return {
        "version": VERSION,
        "model": model.config.to_dict(),
        "anchors": model.num_anchors,
        "views": model.num_views,
        "anchor_ids": [int(i) for i in model.anchor_ids],
        "arrays": arrays,
        "meta": extra or {},
    }


def save_checkpoint(path: str | Path, model: SceneModel, *, meta: Dict[str, Any] | None = None) -> Path:
    """Write parameters in registration order; anchor scales come first."""
    header = json.dumps(_header(model, meta), sort_keys=True).encode("utf-8")
    destination = Path(path).expanduser().resolve()
    destination.parent.mkdir(parents=True, exist_ok=True)
    with destination.open("wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", len(header)))
        handle.write(header)
        handle.write(model.scales.astype("<f4").tobytes())
        for param in model.store:
            handle.write(param.value.astype("<f4").tobytes())
    logger.debug("Checkpoint written to %s", destination)
    return destination


def read_checkpoint_header(path: str | Path) -> Dict[str, Any]:
    raw = Path(path).read_bytes()
    return _parse_header(raw)[0]


def _parse_header(raw: bytes) -> tuple[Dict[str, Any], int]:
    if raw[:4] != MAGIC:
        raise DataError("Not an llgs checkpoint (bad magic).")
    if len(raw) < 8:
        raise DataError("Checkpoint truncated inside the header length.")
    (length,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8:8 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"Checkpoint header is not valid JSON: {exc}") from exc
    if header.get("version") != VERSION:
        raise DataError(f"Unsupported checkpoint version {header.get('version')!r}.")
    return header, 8 + length


def load_checkpoint(path: str | Path) -> SceneModel:
    raw = Path(path).read_bytes()
    header, cursor = _parse_header(raw)
    store = ParamStore()
    scales = None
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = cursor + 4 * count
        if end > len(raw):
            raise DataError(f"Checkpoint truncated while reading '{entry['name']}'.")
        values = np.frombuffer(raw, dtype="<f4", count=count, offset=cursor).astype(np.float64).reshape(shape)
        cursor = end
        if entry["name"] == _SCALES:
            scales = values
        else:
            store.register(entry["name"], values, entry["group"])
    if scales is None:
        raise DataError("Checkpoint has no anchor scales.")
    config = ModelConfig(**header["model"])
    return SceneModel(store, scales, config, anchor_ids=np.asarray(header["anchor_ids"], dtype=np.int64))
