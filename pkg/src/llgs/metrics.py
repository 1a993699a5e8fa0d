"""Image quality scores and the luminance alignment applied before scoring."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict

import numpy as np
from skimage.color import lab2rgb, rgb2lab

from .errors import DataError
from .filters import ssim_with_grad
from .geometry import Image
from .images import read_png

logger = logging.getLogger(__name__)

PSNR_CAP = 99.0
MIN_SLOPE = 1e-6


@dataclass(slots=True)
class AlignmentResult:
    image: Image
    a: float
    b: float
    aligned: bool

    def to_dict(self) -> Dict[str, Any]:
        return {"a": self.a, "b": self.b, "aligned": self.aligned}


def fit_affine(x: np.ndarray, y: np.ndarray) -> tuple[float, float] | None:
    """Least-squares ``y ~ a * x + b``; ``None`` when ``x`` is constant or the slope vanishes."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if np.ptp(x) == 0.0:
        return None
    var = float(np.mean((x - x.mean()) ** 2))
    a = float(np.mean((x - x.mean()) * (y - y.mean()))) / var
    if abs(a) < MIN_SLOPE:
        return None
    return a, float(y.mean() - a * x.mean())


def align_lab(pred_lab: np.ndarray, ref_lab: np.ndarray) -> tuple[np.ndarray, float, float, bool]:
    """Map the L channel of ``pred_lab`` onto the reference; chroma channels are kept."""
    fit = fit_affine(ref_lab[..., 0], pred_lab[..., 0])
    if fit is None:
        return pred_lab.copy(), 1.0, 0.0, False
    a, b = fit
    out = pred_lab.copy()
    out[..., 0] = (pred_lab[..., 0] - b) / a
    return out, a, b, True


def affine_align_luminance(pred: Image, ref: Image) -> AlignmentResult:
    """Align ``pred`` to ``ref`` in CIELAB (D65) luminance; skipped alignments return ``pred`` unchanged."""
    if pred.shape != ref.shape:
        raise DataError(f"Cannot align images of shapes {pred.shape} and {ref.shape}.")
    if pred.channels != 3:
        raise DataError("Luminance alignment needs 3-channel images.")
    pred_lab = rgb2lab(pred.data, illuminant="D65")
    ref_lab = rgb2lab(ref.data, illuminant="D65")
    out_lab, a, b, aligned = align_lab(pred_lab, ref_lab)
    if not aligned:
        logger.warning("Luminance alignment skipped: degenerate reference or slope")
        return AlignmentResult(pred, 1.0, 0.0, False)
    rgb = np.clip(lab2rgb(out_lab, illuminant="D65"), 0.0, 1.0)
    return AlignmentResult(Image(rgb), a, b, True)


def psnr(a: Image | np.ndarray, b: Image | np.ndarray, peak: float = 1.0) -> float:
    x = a.data if isinstance(a, Image) else np.asarray(a, dtype=np.float64)
    y = b.data if isinstance(b, Image) else np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise DataError(f"PSNR inputs differ in shape: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * float(np.log10(peak * peak / mse)))


def ssim(a: Image | np.ndarray, b: Image | np.ndarray) -> float:
    """Mean SSIM with the same window and constants the training loss uses."""
    x = a.data if isinstance(a, Image) else np.asarray(a, dtype=np.float64)
    y = b.data if isinstance(b, Image) else np.asarray(b, dtype=np.float64)
    if x.ndim == 2:
        x, y = x[:, :, None], y[:, :, None]
    return ssim_with_grad(x, y, need_grad=False).value


@dataclass(slots=True)
class ViewScore:
    psnr: float
    ssim: float
    a: float = 1.0
    b: float = 0.0
    aligned: bool = False


def score(pred: Image, ref: Image, *, align: bool = True) -> ViewScore:
    if align:
        result = affine_align_luminance(pred, ref)
        return ViewScore(psnr(result.image, ref), ssim(result.image, ref), result.a, result.b, result.aligned)
    return ViewScore(psnr(pred, ref), ssim(pred, ref))


def evaluate_directories(pred_dir: str | Path, ref_dir: str | Path, *, align: bool = True) -> Dict[str, Any]:
    """
    Score every PNG in ``pred_dir`` against the file of the same name in ``ref_dir``.

    Returns ``{"views": {name: {psnr, ssim, a, b, aligned}}, "mean": {psnr, ssim}}``.
    """
    pred_root, ref_root = Path(pred_dir), Path(ref_dir)
    names = sorted(p.name for p in pred_root.glob("*.png"))
    matched = [n for n in names if (ref_root / n).exists()]
    if not matched:
        raise DataError(f"No matching PNG files between {pred_root} and {ref_root}.")
    missing = sorted(set(names) - set(matched))
    if missing:
        logger.warning("No reference for %d prediction(s): %s", len(missing), ", ".join(missing))
    views = {}
    for name in matched:
        views[Path(name).stem] = asdict(score(read_png(pred_root / name), read_png(ref_root / name), align=align))
    mean = {
        "psnr": float(np.mean([v["psnr"] for v in views.values()])),
        "ssim": float(np.mean([v["ssim"] for v in views.values()])),
    }
    logger.info("Evaluated %d views: PSNR %.3f dB, SSIM %.4f", len(views), mean["psnr"], mean["ssim"])
    return {"views": views, "mean": mean}
