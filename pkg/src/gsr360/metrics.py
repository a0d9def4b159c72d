"""Full-reference quality metrics with temporal pooling.

PSNR and SSIM operate on BT.601 luminance of 8-bit RGB inputs. PSNR is
capped at 100 dB (zero or vanishing error) so pooled scores and rank
correlations stay finite. SSIM uses the classic 11x11 Gaussian window
(sigma 1.5, K1=0.01, K2=0.03, L=255) averaged over fully-valid window
positions only.

Temporal pooling follows q = (1/N) sum_n [ sum_t w_t s(n,t) / sum_t w_t ]
with w_t = 1 (arithmetic mean) or the ascending half of a Gaussian peaking
at the final instant: w_t = exp(-(t-T)^2 / (2 sigma^2)), t = 1..T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from ._json import canonical_json_bytes
from .geometry import EquirectImage, bilinear_sample_arrays, luminance, sph_to_norm_arrays, wrap_lon
from .gsr import GsrSequence

PSNR_CAP_DB = 100.0
_PEAK_SQ = 255.0**2

POOL_AM = "am"
POOL_GW = "gw"

MODE_PER_PATCH = "per_patch"
MODE_PER_FRAME = "per_frame"

_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2

S_PSNR_DEFAULT_POINTS = 655362
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class PairingError(ValueError):
    """Raised when two sequences cannot be scored against each other."""


def _as_pixels(img) -> np.ndarray:
    if isinstance(img, EquirectImage):
        return img.pixels
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError("expected an (H, W, 3) uint8 image")
    return arr


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")


def _psnr_from_mse(mse: float) -> float:
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(_PEAK_SQ / mse), PSNR_CAP_DB)


# ---------------------------------------------------------------------------
# PSNR
# ---------------------------------------------------------------------------

def _mse_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Mean squared luminance error per item of a (K, H, W) batch."""
    d = a - b
    return np.mean(d * d, axis=(-2, -1))


def psnr(a, b) -> float:
    """Luminance PSNR in dB, capped at 100."""
    pa, pb = _as_pixels(a), _as_pixels(b)
    _check_same_shape(pa, pb)
    mse = float(_mse_batch(luminance(pa), luminance(pb)))
    return _psnr_from_mse(mse)


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

def _gaussian_window() -> np.ndarray:
    half = (_SSIM_WIN - 1) / 2.0
    w = np.exp(-((np.arange(_SSIM_WIN) - half) ** 2) / (2.0 * _SSIM_SIGMA**2))
    return w / w.sum()


_WIN_1D = _gaussian_window()


def _filt(x: np.ndarray) -> np.ndarray:
    # separable Gaussian; boundary mode is irrelevant because callers crop
    # to fully-valid window positions afterwards
    return correlate1d(correlate1d(x, _WIN_1D, axis=-1, mode="nearest"), _WIN_1D, axis=-2, mode="nearest")


def _crop_valid(x: np.ndarray) -> np.ndarray:
    half = _SSIM_WIN // 2
    return x[..., half:-half, half:-half]


def _ssim_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Mean SSIM per item of a (K, H, W) float64 luminance batch."""
    mu1 = _crop_valid(_filt(a))
    mu2 = _crop_valid(_filt(b))
    s11 = _crop_valid(_filt(a * a)) - mu1 * mu1
    s22 = _crop_valid(_filt(b * b)) - mu2 * mu2
    s12 = _crop_valid(_filt(a * b)) - mu1 * mu2
    num = (2.0 * mu1 * mu2 + _C1) * (2.0 * s12 + _C2)
    den = (mu1 * mu1 + mu2 * mu2 + _C1) * (s11 + s22 + _C2)
    return np.mean(num / den, axis=(-2, -1))


def ssim(a, b) -> float:
    """Mean luminance SSIM over valid 11x11 Gaussian window positions."""
    pa, pb = _as_pixels(a), _as_pixels(b)
    _check_same_shape(pa, pb)
    if min(pa.shape[0], pa.shape[1]) < _SSIM_WIN:
        raise ValueError(f"image smaller than the {_SSIM_WIN}x{_SSIM_WIN} SSIM window")
    return float(_ssim_batch(luminance(pa), luminance(pb)))


# ---------------------------------------------------------------------------
# temporal pooling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoolingMethod:
    kind: str = POOL_AM
    sigma: float | None = None  # GW only; defaults to T/2 at pooling time

    def __post_init__(self):
        if self.kind not in (POOL_AM, POOL_GW):
            raise ValueError(f"unknown pooling kind: {self.kind!r}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class ScoreMatrix:
    """(N, T) per-cell-per-frame scores; N = 1 in per-frame mode."""

    values: np.ndarray
    metric: str
    mode: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError("score matrix must be a non-empty 2-D array")
        if not np.all(np.isfinite(v)):
            raise ValueError("score matrix entries must be finite")
        object.__setattr__(self, "values", v)


def gw_weights(t_len: int, sigma: float | None = None) -> np.ndarray:
    """Ascending half-Gaussian weights for t = 1..T; w_T = 1 exactly."""
    if sigma is None:
        sigma = t_len / 2.0
    t = np.arange(1, t_len + 1, dtype=np.float64)
    return np.exp(-((t - t_len) ** 2) / (2.0 * sigma**2))


def pool(matrix, method: PoolingMethod = PoolingMethod()) -> float:
    """Collapse an (N, T) score matrix to a scalar."""
    values = matrix.values if isinstance(matrix, ScoreMatrix) else np.asarray(matrix, dtype=np.float64)
    if values.ndim == 1:
        values = values[None, :]
    if values.size == 0:
        raise ValueError("cannot pool an empty score matrix")
    t_len = values.shape[1]
    if method.kind == POOL_AM:
        w = np.ones(t_len)
    else:
        w = gw_weights(t_len, method.sigma)
    per_path = values @ w / w.sum()
    return float(np.mean(per_path))


# ---------------------------------------------------------------------------
# sequence scoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QualityReport:
    pooled: float
    scores: ScoreMatrix
    pooling: PoolingMethod
    mse: np.ndarray | None = None  # raw per-cell MSE, PSNR only

    def to_json_obj(self) -> dict:
        obj = {
            "metric": self.scores.metric,
            "mode": self.scores.mode,
            "pooling": {"kind": self.pooling.kind, "sigma": self.pooling.sigma},
            "pooled": self.pooled,
            "matrix": [[float(v) for v in row] for row in self.scores.values],
        }
        if self.mse is not None:
            obj["mse_matrix"] = [[float(v) for v in row] for row in self.mse]
        return obj

    def to_json_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_json_obj())


def _patch_batches(seq: GsrSequence) -> np.ndarray:
    """Luminance patches ordered (N, T, ph, pw) following the cell map."""
    grid = seq.meta.grid
    patch = seq.meta.patch
    g = grid[0]
    ph, pw = patch
    lum = luminance(seq.frames)  # (T, H, W)
    t_len = lum.shape[0]
    return (
        lum.reshape(t_len, g, ph, g, pw)
        .transpose(1, 3, 0, 2, 4)
        .reshape(g * g, t_len, ph, pw)
    )


def _validate_pairing(ref: GsrSequence, dist: GsrSequence, mode: str) -> None:
    if ref.frames.shape != dist.frames.shape:
        raise PairingError(
            f"sequence shapes differ: {ref.frames.shape} vs {dist.frames.shape}"
        )
    rm, dm = ref.meta, dist.meta
    if (
        rm.scanpath_sha256 is not None
        and dm.scanpath_sha256 is not None
        and rm.scanpath_sha256 != dm.scanpath_sha256
    ):
        raise PairingError("sequences were built from different scanpaths")
    if mode == MODE_PER_PATCH:
        if rm.grid is None or dm.grid is None or rm.patch is None or dm.patch is None:
            raise PairingError("per-patch scoring requires grid metadata on both sequences")
        if rm.grid != dm.grid or rm.patch != dm.patch:
            raise PairingError(
                f"grid configuration differs: {rm.grid}/{rm.patch} vs {dm.grid}/{dm.patch}"
            )


def score_sequences(
    ref: GsrSequence,
    dist: GsrSequence,
    metric: str = "psnr",
    mode: str = MODE_PER_PATCH,
    pooling: PoolingMethod = PoolingMethod(),
) -> QualityReport:
    """Score an aligned reference/distorted pair of frame sequences."""
    if metric not in ("psnr", "ssim"):
        raise ValueError(f"unknown metric: {metric!r}")
    if mode not in (MODE_PER_PATCH, MODE_PER_FRAME):
        raise ValueError(f"unknown mode: {mode!r}")
    _validate_pairing(ref, dist, mode)

    if mode == MODE_PER_PATCH:
        a = _patch_batches(ref)
        b = _patch_batches(dist)
        n, t_len = a.shape[:2]
        a = a.reshape(n * t_len, *a.shape[2:])
        b = b.reshape(n * t_len, *b.shape[2:])
    else:
        a = luminance(ref.frames)
        b = luminance(dist.frames)
        n, t_len = 1, a.shape[0]

    mse_matrix = None
    if metric == "psnr":
        mse = _mse_batch(a, b)
        values = np.array([_psnr_from_mse(float(m)) for m in mse]).reshape(n, t_len)
        mse_matrix = mse.reshape(n, t_len)
    else:
        if min(a.shape[-2], a.shape[-1]) < _SSIM_WIN:
            raise ValueError(f"patches smaller than the {_SSIM_WIN}x{_SSIM_WIN} SSIM window")
        values = _ssim_batch(a, b).reshape(n, t_len)

    matrix = ScoreMatrix(values, metric, mode)
    return QualityReport(pool(matrix, pooling), matrix, pooling, mse_matrix)


# ---------------------------------------------------------------------------
# whole-image baselines on the equirectangular plane
# ---------------------------------------------------------------------------

def ws_psnr(ref, dist) -> float:
    """PSNR with rows weighted by cos((j + 0.5 - H/2) pi / H)."""
    pa, pb = _as_pixels(ref), _as_pixels(dist)
    _check_same_shape(pa, pb)
    a, b = luminance(pa), luminance(pb)
    h, w = a.shape
    weights = np.cos((np.arange(h) + 0.5 - h / 2.0) * math.pi / h)
    err = (a - b) ** 2
    wmse = float((err * weights[:, None]).sum() / (weights.sum() * w))
    return _psnr_from_mse(wmse)


def fibonacci_sphere(k: int) -> tuple[np.ndarray, np.ndarray]:
    """(lat, lon) arrays of k near-uniform points on the sphere."""
    i = np.arange(k, dtype=np.float64)
    lat = np.arcsin(1.0 - (2.0 * i + 1.0) / k)
    lon = wrap_lon(i * _GOLDEN_ANGLE)
    return lat, lon


def s_psnr(ref, dist, k_points: int = S_PSNR_DEFAULT_POINTS) -> float:
    """PSNR over luminance sampled at a Fibonacci lattice on the sphere."""
    if k_points < 100:
        raise ValueError("k_points must be at least 100")
    pa, pb = _as_pixels(ref), _as_pixels(dist)
    _check_same_shape(pa, pb)
    lat, lon = fibonacci_sphere(k_points)
    ys, xs = sph_to_norm_arrays(lat, lon)
    sa = bilinear_sample_arrays(luminance(pa), ys, xs)
    sb = bilinear_sample_arrays(luminance(pb), ys, xs)
    mse = float(np.mean((sa - sb) ** 2))
    return _psnr_from_mse(mse)
