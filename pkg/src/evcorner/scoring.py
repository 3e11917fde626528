"""Corner scores on 9x9 binary patches.

Two scores share the same 3x3 Sobel gradients over the interior 7x7:

* harris_score: full structure-tensor response with Gaussian weighting,
  R = (a*c - b^2) - k*(a + c)^2 where a, b, c are the weighted sums of
  Ix^2, Ix*Iy, Iy^2.
* lc_harris_score: low-complexity response R = sum(|Ix|) * sum(|Iy|),
  integer arithmetic, no Gaussian weighting, and no multiplications
  beyond the one final product. R is never negative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .events import PATCH_SIDE, BinaryPatch

GRAD_SIDE = PATCH_SIDE - 2  # valid 3x3 convolution of a 9x9 patch

# Frozen default thresholds. Calibrated on the synthetic presets with the
# shipped `evcorner calibrate` procedure; see that command to re-derive.
DEFAULT_HARRIS_K = 0.04
DEFAULT_GAUSSIAN_SIGMA = 1.0
DEFAULT_HARRIS_THRESHOLD = 0.12
DEFAULT_LC_THRESHOLD = 290.0


@dataclass(frozen=True)
class HarrisParams:
    """Parameters of the full Harris score. k is the usual 0.04..0.06 constant."""

    k: float = DEFAULT_HARRIS_K
    gaussian_sigma: float = DEFAULT_GAUSSIAN_SIGMA
    score_threshold: float = DEFAULT_HARRIS_THRESHOLD

    def __post_init__(self) -> None:
        if not (0.0 < self.k < 0.25):
            raise ValueError(f"k out of range: {self.k}")
        if self.gaussian_sigma <= 0.0:
            raise ValueError("gaussian_sigma must be positive")


@dataclass(frozen=True)
class ScoreResult:
    score: float
    is_corner: bool


def gaussian_weights(sigma: float = DEFAULT_GAUSSIAN_SIGMA, side: int = GRAD_SIDE) -> np.ndarray:
    """Normalized 2D Gaussian window (sums to 1) centered on a side x side grid."""
    half = (side - 1) / 2.0
    ax = np.arange(side, dtype=np.float64) - half
    g1 = np.exp(-(ax**2) / (2.0 * sigma * sigma))
    g = np.outer(g1, g1)
    return g / g.sum()


@njit(cache=True)
def _sobel_pair(bits):
    # Valid 3x3 Sobel correlation on the 9x9 patch: 7x7 Ix (along u) and Iy (along v).
    ix = np.empty((GRAD_SIDE, GRAD_SIDE), np.float64)
    iy = np.empty((GRAD_SIDE, GRAD_SIDE), np.float64)
    for y in range(GRAD_SIDE):
        for x in range(GRAD_SIDE):
            b00 = bits[y, x]
            b01 = bits[y, x + 1]
            b02 = bits[y, x + 2]
            b10 = bits[y + 1, x]
            b12 = bits[y + 1, x + 2]
            b20 = bits[y + 2, x]
            b21 = bits[y + 2, x + 1]
            b22 = bits[y + 2, x + 2]
            ix[y, x] = (b02 + 2.0 * b12 + b22) - (b00 + 2.0 * b10 + b20)
            iy[y, x] = (b20 + 2.0 * b21 + b22) - (b00 + 2.0 * b01 + b02)
    return ix, iy


@njit(cache=True)
def _harris_response(bits, weights, k):
    # Fused float path: Sobel, per-pixel products, Gaussian-weighted sums, response.
    a = 0.0
    b = 0.0
    c = 0.0
    for y in range(GRAD_SIDE):
        for x in range(GRAD_SIDE):
            b00 = bits[y, x]
            b01 = bits[y, x + 1]
            b02 = bits[y, x + 2]
            b10 = bits[y + 1, x]
            b12 = bits[y + 1, x + 2]
            b20 = bits[y + 2, x]
            b21 = bits[y + 2, x + 1]
            b22 = bits[y + 2, x + 2]
            gx = (b02 + 2.0 * b12 + b22) - (b00 + 2.0 * b10 + b20)
            gy = (b20 + 2.0 * b21 + b22) - (b00 + 2.0 * b01 + b02)
            w = weights[y, x]
            a += w * gx * gx
            b += w * gx * gy
            c += w * gy * gy
    trace = a + c
    return (a * c - b * b) - k * trace * trace


@njit(cache=True)
def _lc_response(bits):
    # Integer path: absolute gradient sums, one final product.
    sx = 0
    sy = 0
    for y in range(GRAD_SIDE):
        for x in range(GRAD_SIDE):
            b00 = np.int32(bits[y, x])
            b01 = np.int32(bits[y, x + 1])
            b02 = np.int32(bits[y, x + 2])
            b10 = np.int32(bits[y + 1, x])
            b12 = np.int32(bits[y + 1, x + 2])
            b20 = np.int32(bits[y + 2, x])
            b21 = np.int32(bits[y + 2, x + 1])
            b22 = np.int32(bits[y + 2, x + 2])
            gx = (b02 + 2 * b12 + b22) - (b00 + 2 * b10 + b20)
            gy = (b20 + 2 * b21 + b22) - (b00 + 2 * b01 + b02)
            sx += gx if gx >= 0 else -gx
            sy += gy if gy >= 0 else -gy
    return float(sx) * float(sy)


@njit(cache=True)
def _harris_batch(patches, weights, k):
    acc = 0.0
    for i in range(patches.shape[0]):
        acc += _harris_response(patches[i], weights, k)
    return acc


@njit(cache=True)
def _lc_batch(patches):
    acc = 0.0
    for i in range(patches.shape[0]):
        acc += _lc_response(patches[i])
    return acc


def _as_bits(patch: BinaryPatch | np.ndarray) -> np.ndarray:
    bits = patch.bits if isinstance(patch, BinaryPatch) else np.asarray(patch)
    if bits.shape != (PATCH_SIDE, PATCH_SIDE):
        raise ValueError(f"patch must be {PATCH_SIDE}x{PATCH_SIDE}, got {bits.shape}")
    if bits.dtype != np.uint8:
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("patch must be binary")
        bits = bits.astype(np.uint8)
    return np.ascontiguousarray(bits)


def gradients(patch: BinaryPatch | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sobel gradients (Ix, Iy) of the patch interior, each 7x7."""
    return _sobel_pair(_as_bits(patch))


def harris_score(patch: BinaryPatch | np.ndarray, params: HarrisParams = HarrisParams()) -> ScoreResult:
    """Full Harris response of a binary patch; corner iff score > threshold."""
    bits = _as_bits(patch)
    w = gaussian_weights(params.gaussian_sigma)
    score = float(_harris_response(bits, w, params.k))
    return ScoreResult(score=score, is_corner=score > params.score_threshold)


def lc_harris_score(patch: BinaryPatch | np.ndarray, threshold: float = DEFAULT_LC_THRESHOLD) -> ScoreResult:
    """Low-complexity response of a binary patch; corner iff score > threshold.

    The response equals sum(|Ix|) * sum(|Iy|) and is always >= 0.
    """
    bits = _as_bits(patch)
    score = float(_lc_response(bits))
    return ScoreResult(score=score, is_corner=score > threshold)


def benchmark_scores(
    patches: np.ndarray,
    params: HarrisParams = HarrisParams(),
    repeats: int = 7,
) -> dict:
    """Time both scores over a patch stream; returns best per-call times and savings.

    The same patches feed both kernels; the loops run inside compiled code so the
    comparison measures score assembly, not Python dispatch. Each repeat times the
    two kernels in alternating order and the minimum over repeats is kept, so a
    burst of outside load must cover every window of a kernel to skew its number.
    """
    import time

    if patches.ndim != 3 or patches.shape[1:] != (PATCH_SIDE, PATCH_SIDE):
        raise ValueError("patches must have shape (n, 9, 9)")
    patches = np.ascontiguousarray(patches, dtype=np.uint8)
    w = gaussian_weights(params.gaussian_sigma)
    n = patches.shape[0]
    # Warm both kernels (JIT compile) before timing.
    _harris_batch(patches[:64], w, params.k)
    _lc_batch(patches[:64])
    t_h = []
    t_l = []
    sink = 0.0
    for r in range(repeats):
        for which in (0, 1) if r % 2 == 0 else (1, 0):
            t0 = time.perf_counter()
            if which == 0:
                sink += _harris_batch(patches, w, params.k)
                t_h.append(time.perf_counter() - t0)
            else:
                sink += _lc_batch(patches)
                t_l.append(time.perf_counter() - t0)
    harris_mean = min(t_h) / n
    lc_mean = min(t_l) / n
    return {
        "n_patches": n,
        "repeats": repeats,
        "harris_mean_s": harris_mean,
        "lc_mean_s": lc_mean,
        "savings": 1.0 - lc_mean / harris_mean if harris_mean > 0 else 0.0,
        "_sink": sink,
    }
