"""Linear image filters with explicit adjoints, and SSIM built on top of them."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

from .errors import DataError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    radius = (size - 1) / 2.0
    taps = np.exp(-0.5 * ((np.arange(size) - radius) / sigma) ** 2)
    return taps / taps.sum()


@lru_cache(maxsize=32)
def _valid_matrix(length: int, size: int, sigma: float) -> np.ndarray:
    """Banded (length - size + 1, length) matrix applying a 1D window in 'valid' mode."""
    kernel = gaussian_kernel1d(size, sigma)
    rows = length - size + 1
    matrix = np.zeros((rows, length))
    for row in range(rows):
        matrix[row, row:row + size] = kernel
    matrix.setflags(write=False)
    return matrix


def gaussian_filter_valid(
    image: np.ndarray, size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA
) -> np.ndarray:
    """Separable Gaussian window over (H, W, C), no padding."""
    kh = _valid_matrix(image.shape[0], size, sigma)
    kw = _valid_matrix(image.shape[1], size, sigma)
    return np.einsum("ih,hwc,jw->ijc", kh, image, kw)


def gaussian_filter_valid_adjoint(
    filtered: np.ndarray, shape: Tuple[int, int], size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA
) -> np.ndarray:
    kh = _valid_matrix(shape[0], size, sigma)
    kw = _valid_matrix(shape[1], size, sigma)
    return np.einsum("ih,ijc,jw->hwc", kh, filtered, kw)


def forward_diff(image: np.ndarray, axis: int) -> np.ndarray:
    """Forward difference along ``axis`` (1 = x, 0 = y); the last row/column is zero."""
    out = np.zeros_like(image)
    if axis == 1:
        out[:, :-1] = image[:, 1:] - image[:, :-1]
    else:
        out[:-1] = image[1:] - image[:-1]
    return out


def forward_diff_adjoint(grad: np.ndarray, axis: int) -> np.ndarray:
    out = np.zeros_like(grad)
    if axis == 1:
        out[:, 1:] += grad[:, :-1]
        out[:, :-1] -= grad[:, :-1]
    else:
        out[1:] += grad[:-1]
        out[:-1] -= grad[:-1]
    return out


@dataclass(frozen=True, slots=True)
class SsimResult:
    value: float
    grad_a: np.ndarray | None


def ssim_with_grad(a: np.ndarray, b: np.ndarray, *, need_grad: bool = True) -> SsimResult:
    """
    Mean SSIM over channels and valid 11x11 windows (sigma 1.5, C1 = 0.01^2, C2 = 0.03^2).

    The gradient is taken with respect to ``a`` only.
    """
    if a.shape != b.shape:
        raise DataError(f"SSIM inputs differ in shape: {a.shape} vs {b.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise DataError(
            f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape[1]}x{a.shape[0]}"
        )
    mu_a = gaussian_filter_valid(a)
    mu_b = gaussian_filter_valid(b)
    f_aa = gaussian_filter_valid(a * a)
    f_bb = gaussian_filter_valid(b * b)
    f_ab = gaussian_filter_valid(a * b)
    var_a = f_aa - mu_a ** 2
    var_b = f_bb - mu_b ** 2
    cov = f_ab - mu_a * mu_b

    num_l = 2.0 * mu_a * mu_b + SSIM_C1
    num_c = 2.0 * cov + SSIM_C2
    den_l = mu_a ** 2 + mu_b ** 2 + SSIM_C1
    den_c = var_a + var_b + SSIM_C2
    ssim_map = (num_l * num_c) / (den_l * den_c)
    value = float(ssim_map.mean())
    if not need_grad:
        return SsimResult(value, None)

    scale = 1.0 / ssim_map.size
    den = den_l * den_c
    # partials of the map w.r.t. the filtered statistics of ``a``
    d_mu_a = (
        2.0 * mu_b * num_c / den
        + num_l * (-2.0 * mu_b) / den
        - ssim_map * 2.0 * mu_a / den_l
        - ssim_map * (-2.0 * mu_a) / den_c
    )
    d_f_aa = -ssim_map / den_c
    d_f_ab = 2.0 * num_l / den
    shape = a.shape[:2]
    grad = (
        gaussian_filter_valid_adjoint(scale * d_mu_a, shape)
        + 2.0 * a * gaussian_filter_valid_adjoint(scale * d_f_aa, shape)
        + b * gaussian_filter_valid_adjoint(scale * d_f_ab, shape)
    )
    return SsimResult(value, grad)
