"""Conversion of 360-degree images into tiled gaze-patch sequences.

One frame per time instant: the t-th gaze point of every path yields a small
patch sampled around that point, and the patches tile a square grid (path i
occupies cell (i // g, i % g) with g = sqrt(N), fixed for all frames so each
cell is a coherent mini-video).

Patches are sampled either on the sphere's tangent plane at the gaze point
(gnomonic kernel, seam-free and pole-safe) or as a raw crop of the
equirectangular plane. Interpolation is real-valued throughout; pixels are
quantized to 8 bits only when the frame is materialized.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._version import __version__
from .geometry import (
    TWO_PI,
    EquirectImage,
    NormPoint,
    bilinear_sample_arrays,
    gnomonic_inverse_arrays,
    norm_to_sph_arrays,
    quantize_u8,
    sph_to_norm_arrays,
)
from .scanpaths import ScanpathSet, scanpath_sha256

SAMPLING_TANGENT = "tangent"
SAMPLING_ERP = "erp_crop"
PITCH_SOURCE_MATCHED = "source_matched"


@dataclass(frozen=True)
class GsrConfig:
    """Patch geometry: grid size n must be a perfect square.

    `pitch_deg` is the angular width of a patch in degrees; None matches the
    source image's equatorial pixel pitch (2 pi / width per pixel).
    """

    patch_h: int = 32
    patch_w: int = 32
    n: int = 49
    pitch_deg: float | None = None
    sampling: str = SAMPLING_TANGENT

    def __post_init__(self):
        if self.patch_h < 2 or self.patch_w < 2:
            raise ValueError("patch dimensions must be at least 2 pixels")
        g = math.isqrt(self.n)
        if self.n < 1 or g * g != self.n:
            raise ValueError(f"n must be a perfect square to tile a grid, got {self.n}")
        if self.pitch_deg is not None and not (0 < self.pitch_deg < 180):
            raise ValueError(f"pitch_deg must be in (0, 180), got {self.pitch_deg}")
        if self.sampling not in (SAMPLING_TANGENT, SAMPLING_ERP):
            raise ValueError(f"unknown sampling mode: {self.sampling!r}")

    @property
    def grid(self) -> int:
        return math.isqrt(self.n)

    @property
    def pitch_label(self) -> str | float:
        return PITCH_SOURCE_MATCHED if self.pitch_deg is None else float(self.pitch_deg)


@dataclass(frozen=True)
class GsrMeta:
    """Provenance carried with a frame sequence; None marks unknown fields
    on sequences read from bare raw files."""

    t: int
    frame_h: int
    frame_w: int
    grid: tuple[int, int] | None = None
    patch: tuple[int, int] | None = None
    pitch: str | float | None = None
    sampling: str | None = None
    image_sha256: str | None = None
    scanpath_sha256: str | None = None
    version: int = 1
    software: str | None = __version__


@dataclass(frozen=True, eq=False)
class GsrSequence:
    """T frames of tiled gaze patches as a (T, H, W, 3) uint8 array."""

    frames: np.ndarray
    meta: GsrMeta

    def __post_init__(self):
        f = self.frames
        if f.ndim != 4 or f.shape[3] != 3 or f.dtype != np.uint8:
            raise ValueError("frames must be a (T, H, W, 3) uint8 array")
        if f.shape[0] != self.meta.t or f.shape[1] != self.meta.frame_h or f.shape[2] != self.meta.frame_w:
            raise ValueError("frame array shape disagrees with metadata")

    @property
    def t(self) -> int:
        return self.frames.shape[0]

    def frame(self, t: int) -> np.ndarray:
        return self.frames[t]

    def cell(self, t: int, path_index: int) -> np.ndarray:
        """View of one patch inside frame t (requires grid/patch metadata)."""
        if self.meta.grid is None or self.meta.patch is None:
            raise ValueError("sequence has no grid metadata; cannot address cells")
        row, col = cell_of(path_index, self.meta.grid[0] * self.meta.grid[1])
        ph, pw = self.meta.patch
        return self.frames[t, row * ph : (row + 1) * ph, col * pw : (col + 1) * pw]


def cell_of(path_index: int, n: int) -> tuple[int, int]:
    """Grid cell (row, col) for a path index under row-major tiling."""
    g = math.isqrt(n)
    if g * g != n:
        raise ValueError(f"n must be a perfect square, got {n}")
    if not 0 <= path_index < n:
        raise IndexError(f"path index {path_index} out of range for n={n}")
    return path_index // g, path_index % g


def _pitch_rad_per_px(cfg: GsrConfig, img_width: int) -> float:
    if cfg.pitch_deg is None:
        return TWO_PI / img_width
    return math.radians(cfg.pitch_deg) / cfg.patch_w


def _sample_patches(img: EquirectImage, centers: np.ndarray, cfg: GsrConfig) -> np.ndarray:
    """Real-valued patches for K gaze centers: (K, patch_h, patch_w, 3) float64."""
    ph, pw = cfg.patch_h, cfg.patch_w
    cy = centers[:, 0][:, None, None]
    cx = centers[:, 1][:, None, None]
    rows = np.arange(ph, dtype=np.float64)[:, None]
    cols = np.arange(pw, dtype=np.float64)[None, :]

    if cfg.sampling == SAMPLING_TANGENT:
        delta = _pitch_rad_per_px(cfg, img.width)
        u = (cols - (pw - 1) / 2.0) * delta   # rightward
        v = ((ph - 1) / 2.0 - rows) * delta   # upward
        lat0, lon0 = norm_to_sph_arrays(cy, cx)
        lat, lon = gnomonic_inverse_arrays(lat0, lon0, u[None, :, :], v[None, :, :])
        ys, xs = sph_to_norm_arrays(lat, lon)
    else:
        ys = cy + (rows - (ph - 1) / 2.0)[None, :, :] / img.height
        xs = cx + (cols - (pw - 1) / 2.0)[None, :, :] / img.width
    return bilinear_sample_arrays(img.pixels, ys, xs)


def extract_patch(img: EquirectImage, center: NormPoint, cfg: GsrConfig = GsrConfig()) -> np.ndarray:
    """One quantized gaze patch, (patch_h, patch_w, 3) uint8."""
    centers = np.array([[center.y, center.x]], dtype=np.float64)
    return quantize_u8(_sample_patches(img, centers, cfg))[0]


def convert(
    img: EquirectImage,
    paths: ScanpathSet,
    cfg: GsrConfig = GsrConfig(),
    workers: int = 1,
) -> GsrSequence:
    """Build the full frame sequence for an image and a scanpath set.

    Frames are rendered independently per time instant (parallelizable);
    output bytes do not depend on `workers`.
    """
    if paths.count != cfg.n:
        raise ValueError(
            f"scanpath count {paths.count} does not match configured patch count "
            f"{cfg.n} ({cfg.grid}x{cfg.grid} grid)"
        )
    coords = paths.as_array()  # (N, T, 2)
    t_len = coords.shape[1]
    g, ph, pw = cfg.grid, cfg.patch_h, cfg.patch_w
    frame_h, frame_w = g * ph, g * pw
    frames = np.empty((t_len, frame_h, frame_w, 3), dtype=np.uint8)

    def render(t: int) -> None:
        patches = quantize_u8(_sample_patches(img, coords[:, t, :], cfg))
        frames[t] = (
            patches.reshape(g, g, ph, pw, 3).transpose(0, 2, 1, 3, 4).reshape(frame_h, frame_w, 3)
        )

    if workers <= 1:
        for t in range(t_len):
            render(t)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(render, range(t_len)))

    meta = GsrMeta(
        t=t_len,
        frame_h=frame_h,
        frame_w=frame_w,
        grid=(g, g),
        patch=(ph, pw),
        pitch=cfg.pitch_label,
        sampling=cfg.sampling,
        image_sha256=img.sha256(),
        scanpath_sha256=scanpath_sha256(paths),
    )
    return GsrSequence(frames, meta)
