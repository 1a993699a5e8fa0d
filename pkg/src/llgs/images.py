"""PNG input/output for colour images and scalar maps."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
from PIL import Image as PILImage

from .errors import ImageFormatError
from .geometry import Image


def read_png(path: str | Path) -> Image:
    """Read an 8-bit (or 16-bit grey) PNG; values are linearised by value / max only."""
    with PILImage.open(path) as handle:
        mode = handle.mode
        if mode in ("I;16", "I;16B", "I"):
            data = np.asarray(handle, dtype=np.float64) / 65535.0
        elif mode == "L":
            data = np.asarray(handle, dtype=np.float64) / 255.0
        elif mode in ("RGB", "RGBA", "P"):
            data = np.asarray(handle.convert("RGB"), dtype=np.float64) / 255.0
        else:
            raise ImageFormatError(f"Unsupported PNG mode '{mode}' in {path}")
    return Image(data)


def _destination(path: str | Path) -> Path:
    destination = Path(path).expanduser().resolve()
    destination.parent.mkdir(parents=True, exist_ok=True)
    return destination


def to_uint8(image: Image) -> np.ndarray:
    return np.clip(np.round(image.data * 255.0), 0, 255).astype(np.uint8)


def write_png(path: str | Path, image: Image) -> Path:
    """Write an image as 8-bit PNG, clamping to [0, 1]."""
    pixels = to_uint8(image)
    if image.channels == 1:
        pil = PILImage.fromarray(np.ascontiguousarray(pixels[:, :, 0]))
    else:
        pil = PILImage.fromarray(pixels)
    destination = _destination(path)
    pil.save(destination, format="PNG")
    return destination


def normalize_map(image: Image) -> Tuple[Image, Dict[str, float]]:
    """Min-max normalise a map to [0, 1]; the returned scale dict undoes it."""
    low = float(image.data.min())
    high = float(image.data.max())
    span = high - low
    if span <= 0.0:
        return Image(np.zeros_like(image.data)), {"min": low, "max": high}
    return Image((image.data - low) / span), {"min": low, "max": high}


def write_scalar_map(path: str | Path, image: Image) -> Path:
    """
    Write a map (depth, illumination, ...) as 16-bit grey PNG plus a ``.json`` sidecar.

    Multi-channel maps are written as 8-bit RGB after the same min-max normalisation.
    """
    normalized, scale = normalize_map(image)
    destination = _destination(path)
    if image.channels == 1:
        levels = np.clip(np.round(normalized.data[:, :, 0] * 65535.0), 0, 65535).astype(np.uint16)
        PILImage.fromarray(np.ascontiguousarray(levels)).save(destination, format="PNG")
    else:
        write_png(destination, normalized)
    sidecar = destination.with_suffix(".json")
    sidecar.write_text(
        json.dumps({"normalization": "min-max", **scale}, indent=2), encoding="utf-8"
    )
    return destination


def read_scalar_map(path: str | Path) -> Image:
    """Inverse of :func:`write_scalar_map` (the sidecar is optional)."""
    image = read_png(path)
    sidecar = Path(path).with_suffix(".json")
    if not sidecar.exists():
        return image
    scale = json.loads(sidecar.read_text(encoding="utf-8"))
    return Image(image.data * (scale["max"] - scale["min"]) + scale["min"])
