"""
Training objectives, each returning its value together with the gradient w.r.t. its
differentiable inputs.

Means are taken per element. L1 kinks use subgradient 0. Stop-gradient denominators, L1
signs and the depth coverage mask go through the optional :class:`BranchCache`, so a
replayed evaluation differentiates the same piece as the recorded one.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Dict, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .branches import BranchCache, decide
from .errors import DataError
from .filters import forward_diff, forward_diff_adjoint, ssim_with_grad
from .renderers.components import (
    ComponentMaps,
    add_grads,
    compose_enhanced,
    compose_enhanced_backward,
    compose_low,
    compose_low_backward,
)

if TYPE_CHECKING:
    from .training.config import TrainConfig

logger = logging.getLogger(__name__)

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(slots=True)
class LossTerm:
    value: float
    grad: np.ndarray | None = None
    skipped: bool = False


@dataclass(frozen=True, slots=True)
class LossWeights:
    ill: float
    re: float
    enh: float
    dssim: float

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return self.ill, self.re, self.enh, self.dssim


@dataclass(slots=True)
class LossBundle:
    """Loss values of one step; ``grads`` holds adjoints for the component maps."""

    recon: float
    ill: float
    re: float
    enh: float
    depth: float
    total: float
    weights: LossWeights
    grads: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_dict(self) -> Dict[str, float]:
        return {
            "recon": self.recon,
            "ill": self.ill,
            "re": self.re,
            "enh": self.enh,
            "depth": self.depth,
            "total": self.total,
            "weights": asdict(self.weights),
        }


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DataError(f"Shape mismatch: {a.shape} vs {b.shape}")


def _abs_mean(residual: np.ndarray, branches: BranchCache | None, key: str) -> LossTerm:
    sign = decide(branches, f"{key}.sign", lambda: np.sign(residual))
    return LossTerm(float(np.mean(sign * residual)), sign / residual.size)


def l1_weighted(
    pred: np.ndarray,
    target: np.ndarray,
    eps: float = 1e-3,
    *,
    weighted: bool = True,
    branches: BranchCache | None = None,
    key: str = "l1w",
) -> LossTerm:
    """
    mean(|pred - target| / (sg(max(pred, 0)) + eps)); the weight carries no gradient.

    ``weighted=False`` gives the plain mean absolute error.
    """
    _check_shapes(pred, target)
    if not weighted:
        return _abs_mean(pred - target, branches, key)
    denom = decide(branches, f"{key}.denom", lambda: np.maximum(pred, 0.0) + eps)
    residual = pred - target
    sign = decide(branches, f"{key}.sign", lambda: np.sign(residual))
    value = float(np.mean(sign * residual / denom))
    return LossTerm(value, sign / denom / residual.size)


def dssim(a: np.ndarray, b: np.ndarray, *, need_grad: bool = True) -> LossTerm:
    """(1 - SSIM(a, b)) / 2 with the gradient w.r.t. ``a``."""
    _check_shapes(a, b)
    result = ssim_with_grad(a, b, need_grad=need_grad)
    grad = None if result.grad_a is None else -0.5 * result.grad_a
    return LossTerm((1.0 - result.value) / 2.0, grad)


@dataclass(slots=True)
class ReconTerm:
    value: float
    grad_low: np.ndarray
    grad_intrinsic: np.ndarray


def recon_loss(
    low: np.ndarray,
    residual: np.ndarray,
    target: np.ndarray,
    lam: float = 0.2,
    eps: float = 1e-3,
    *,
    weighted: bool = True,
    branches: BranchCache | None = None,
) -> ReconTerm:
    """
    (1 - lam) * l1_weighted(low, target) + lam * dssim(low - residual, target).

    ``grad_low`` flows into every component of ``low``; ``grad_intrinsic`` only into
    reflectance and illumination.
    """
    l1 = l1_weighted(low, target, eps, weighted=weighted, branches=branches, key="recon.l1")
    value = (1.0 - lam) * l1.value
    grad_intrinsic = np.zeros_like(low)
    if lam > 0.0:
        structural = dssim(low - residual, target)
        value += lam * structural.value
        grad_intrinsic = lam * structural.grad
    return ReconTerm(value, (1.0 - lam) * l1.grad, grad_intrinsic)


def to_gray(image: np.ndarray) -> np.ndarray:
    if image.shape[2] == 1:
        return image.copy()
    return (image @ LUMA)[..., None]


def smoothness_weights(gray_low: np.ndarray, eps: float = 1e-2) -> Tuple[np.ndarray, np.ndarray]:
    """
    Edge-aware weights from the low-passed grey image (5x5 Gaussian, sigma 1).

    The last column of ``w_x`` and the last row of ``w_y`` are zero.
    """
    if gray_low.ndim == 3 and gray_low.shape[2] != 1:
        raise DataError("Smoothness weights need a single-channel image.")
    gray = gray_low.reshape(gray_low.shape[0], gray_low.shape[1])
    blurred = gaussian_filter(gray, sigma=1.0, truncate=2.0, mode="nearest")[..., None]
    w_x = 1.0 / (np.abs(forward_diff(blurred, axis=1)) + eps)
    w_y = 1.0 / (np.abs(forward_diff(blurred, axis=0)) + eps)
    w_x[:, -1] = 0.0
    w_y[-1] = 0.0
    return w_x, w_y


def smoothness_loss(
    illumination: np.ndarray,
    weights: Tuple[np.ndarray, np.ndarray],
    *,
    branches: BranchCache | None = None,
    key: str = "smooth",
) -> LossTerm:
    w_x, w_y = weights
    grad_x = forward_diff(illumination, axis=1)
    grad_y = forward_diff(illumination, axis=0)
    sign_x = decide(branches, f"{key}.sign_x", lambda: np.sign(grad_x))
    sign_y = decide(branches, f"{key}.sign_y", lambda: np.sign(grad_y))
    size = illumination.size
    value = float(np.mean(w_x * sign_x * grad_x) + np.mean(w_y * sign_y * grad_y))
    grad = forward_diff_adjoint(w_x * sign_x / size, axis=1) + forward_diff_adjoint(w_y * sign_y / size, axis=0)
    return LossTerm(value, grad)


def init_illum_loss(
    illumination: np.ndarray, low: np.ndarray, *, branches: BranchCache | None = None, key: str = "init"
) -> LossTerm:
    """mean |S - max_c C_low|."""
    return _abs_mean(illumination - low.max(axis=2, keepdims=True), branches, key)


def illum_prior_loss(
    illumination: np.ndarray,
    low: np.ndarray,
    lambda_smo: float = 0.001,
    eps: float = 1e-2,
    *,
    branches: BranchCache | None = None,
) -> LossTerm:
    init = init_illum_loss(illumination, low, branches=branches, key="ill.init")
    smooth = smoothness_loss(
        illumination, smoothness_weights(to_gray(low), eps), branches=branches, key="ill.smooth"
    )
    return LossTerm(init.value + lambda_smo * smooth.value, init.grad + lambda_smo * smooth.grad)


def residual_loss(residual: np.ndarray, *, branches: BranchCache | None = None) -> LossTerm:
    """mean |Rs|."""
    return _abs_mean(residual, branches, "re")


@dataclass(slots=True)
class EnhancementTerm:
    value: float
    grad_enhanced_illumination: np.ndarray
    grad_enhanced: np.ndarray


def enhancement_loss(
    illumination: np.ndarray,
    enhanced_illumination: np.ndarray,
    enhanced: np.ndarray,
    prior: np.ndarray,
    gamma: float,
    eps: float = 1e-3,
    *,
    branches: BranchCache | None = None,
) -> EnhancementTerm:
    """
    mean |S_enh / (sg(S) + eps) - gamma| + mean |C_enh - C_pri|.

    Gradients are returned w.r.t. S_enh and the enhanced colour; S receives none.
    """
    _check_shapes(enhanced, prior)
    denom = decide(branches, "enh.denom", lambda: np.maximum(illumination, 0.0) + eps)
    ratio = _abs_mean(enhanced_illumination / denom - gamma, branches, "enh.ratio")
    fidelity = _abs_mean(enhanced - prior, branches, "enh.prior")
    return EnhancementTerm(ratio.value + fidelity.value, ratio.grad / denom, fidelity.grad)


def depth_pcc_loss(
    rendered: np.ndarray,
    prior: np.ndarray,
    alpha: np.ndarray | None = None,
    *,
    branches: BranchCache | None = None,
    key: str = "pcc",
) -> LossTerm:
    """
    1 - Pearson correlation between rendered and prior depth over covered pixels
    (alpha > 0.5). A constant input is reported as skipped with zero loss.
    """
    _check_shapes(rendered, prior)
    if alpha is None:
        mask = np.ones(rendered.shape, dtype=bool)
    else:
        mask = decide(branches, f"{key}.mask", lambda: np.broadcast_to(alpha > 0.5, rendered.shape).copy())
    x = rendered[mask]
    y = prior[mask]
    grad = np.zeros_like(rendered)
    if x.size < 2:
        logger.warning("Depth correlation skipped: fewer than two covered pixels")
        return LossTerm(0.0, grad, skipped=True)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.mean(xc ** 2))
    sy = np.sqrt(np.mean(yc ** 2))
    if sx <= 1e-12 * max(1.0, abs(x.mean())) or sy <= 1e-12 * max(1.0, abs(y.mean())):
        logger.warning("Depth correlation skipped: constant %s depth", "rendered" if sx <= sy else "prior")
        return LossTerm(0.0, grad, skipped=True)
    rho = float(np.mean(xc * yc) / (sx * sy))
    rho = min(1.0, max(-1.0, rho))
    grad[mask] = -(yc / (sx * sy) - rho * xc / sx ** 2) / x.size
    return LossTerm(1.0 - rho, grad)


def total_loss(
    maps: ComponentMaps,
    target: np.ndarray,
    prior: np.ndarray | None,
    iteration: int,
    config: "TrainConfig",
    *,
    branches: BranchCache | None = None,
) -> LossBundle:
    """recon + l_ill * ill + l_re(iter) * re + l_enh(iter) * enh, with adjoints for every map."""
    weights = config.weights_at(iteration)
    low = compose_low(maps)
    grads: Dict[str, np.ndarray] = {}

    recon = recon_loss(
        low, maps.residual, target, weights.dssim, config.eps_l1, weighted=config.weighted_l1, branches=branches
    )
    add_grads(grads, compose_low_backward(maps, recon.grad_low))
    structural = compose_low_backward(maps, recon.grad_intrinsic)
    structural.pop("residual")
    add_grads(grads, structural)

    ill = illum_prior_loss(maps.illumination, target, config.lambda_smo, config.eps_smooth, branches=branches)
    add_grads(grads, {"illumination": weights.ill * ill.grad})

    re = residual_loss(maps.residual, branches=branches)
    add_grads(grads, {"residual": weights.re * re.grad})

    enh_value = 0.0
    if prior is not None:
        enh = enhancement_loss(
            maps.illumination,
            maps.enhanced_illumination,
            compose_enhanced(maps),
            prior,
            config.gamma,
            config.eps_enh,
            branches=branches,
        )
        enh_value = enh.value
        if weights.enh > 0.0:
            add_grads(grads, {"enhanced_illumination": weights.enh * enh.grad_enhanced_illumination})
            add_grads(grads, compose_enhanced_backward(maps, weights.enh * enh.grad_enhanced))

    total = recon.value + weights.ill * ill.value + weights.re * re.value + weights.enh * enh_value
    return LossBundle(
        recon=recon.value,
        ill=ill.value,
        re=re.value,
        enh=enh_value,
        depth=0.0,
        total=total,
        weights=weights,
        grads=grads,
    )
