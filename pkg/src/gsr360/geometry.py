"""Spherical geometry for equirectangular 360-degree images.

Coordinate conventions used throughout the package:

* normalized (y, x): both in [0, 1]; y = 0 is the top image row
  (north pole), x = 0 is the left column (longitude -pi).
* spherical (lat, lon): latitude in [-pi/2, pi/2] increasing upward,
  longitude in [-pi, pi), wrapped on construction.
* unit vector (x, y, z): x toward (lat=0, lon=0), z toward the north pole.

Sampling treats pixel (j, i) as covering the point ((j+0.5)/H, (i+0.5)/W);
columns wrap around the horizontal seam, rows clamp at the poles.
"""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi
HALF_PI = 0.5 * np.pi


def wrap_lon(lon):
    """Wrap longitude(s) into [-pi, pi). Values already in range pass through unchanged."""
    lon = np.asarray(lon, dtype=np.float64)
    wrapped = np.mod(lon + np.pi, TWO_PI) - np.pi
    # float rounding near the seam can land exactly on +pi
    wrapped = np.where(wrapped >= np.pi, -np.pi, wrapped)
    return np.where((lon >= -np.pi) & (lon < np.pi), lon, wrapped)


@dataclass(frozen=True)
class NormPoint:
    """Normalized image coordinate: y in [0, 1] top-down, x in [0, 1] left-right."""

    y: float
    x: float

    def __post_init__(self):
        if not (0.0 <= self.y <= 1.0 and 0.0 <= self.x <= 1.0):
            raise ValueError(f"normalized point out of range: (y={self.y}, x={self.x})")


@dataclass(frozen=True)
class SphericalPoint:
    """Latitude/longitude pair in radians; longitude is wrapped into [-pi, pi)."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (-HALF_PI <= self.lat <= HALF_PI):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not np.isfinite(self.lon):
            raise ValueError(f"longitude not finite: {self.lon}")
        object.__setattr__(self, "lon", float(wrap_lon(self.lon)))


@dataclass(frozen=True)
class TangentOffset:
    """Offset on the tangent plane: u rightward, v upward, both in radians."""

    u: float
    v: float

    def __post_init__(self):
        if not (np.isfinite(self.u) and np.isfinite(self.v)):
            raise ValueError("tangent offset must be finite")
        if abs(self.u) >= HALF_PI or abs(self.v) >= HALF_PI:
            raise ValueError(f"tangent offset outside validity: (u={self.u}, v={self.v})")


class EquirectImage:
    """Decoded 360-degree image in equirectangular projection (8-bit RGB).

    Pixel data is held read-only so instances can be shared across threads.
    """

    def __init__(self, pixels: np.ndarray):
        pixels = np.ascontiguousarray(pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
            raise ValueError("expected an (H, W, 3) uint8 pixel array")
        h, w = pixels.shape[:2]
        if w != 2 * h:
            warnings.warn(
                f"equirectangular image is {w}x{h}; expected a 2:1 aspect ratio",
                stacklevel=2,
            )
        pixels.setflags(write=False)
        self.pixels = pixels
        self._lum: np.ndarray | None = None
        self._sha: str | None = None

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return 3

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "EquirectImage":
        return cls(np.asarray(arr, dtype=np.uint8))

    @classmethod
    def from_file(cls, path) -> "EquirectImage":
        from PIL import Image

        with Image.open(path) as im:
            rgb = im.convert("RGB")
            return cls(np.asarray(rgb, dtype=np.uint8))

    def sha256(self) -> str:
        """Content hash over dimensions and raw pixel bytes."""
        if self._sha is None:
            digest = hashlib.sha256(struct.pack("<II", self.width, self.height))
            digest.update(self.pixels.tobytes())
            self._sha = digest.hexdigest()
        return self._sha

    def luminance(self) -> np.ndarray:
        """BT.601 luma plane as float64 on the 0..255 scale."""
        if self._lum is None:
            self._lum = luminance(self.pixels)
        return self._lum


def luminance(pixels: np.ndarray) -> np.ndarray:
    """BT.601 luma: Y = 0.299 R + 0.587 G + 0.114 B (float64)."""
    p = pixels.astype(np.float64)
    return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]


# ---------------------------------------------------------------------------
# coordinate conversions
# ---------------------------------------------------------------------------

def norm_to_sph_arrays(y, x):
    """Vectorized normalized -> spherical: lat = (0.5 - y) pi, lon = (x - 0.5) 2 pi."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return (0.5 - y) * np.pi, wrap_lon((x - 0.5) * TWO_PI)


def sph_to_norm_arrays(lat, lon):
    """Vectorized spherical -> normalized (exact inverse of norm_to_sph_arrays)."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    return 0.5 - lat / np.pi, lon / TWO_PI + 0.5


def norm_to_sph(p: NormPoint) -> SphericalPoint:
    lat, lon = norm_to_sph_arrays(p.y, p.x)
    return SphericalPoint(float(lat), float(lon))


def sph_to_norm(s: SphericalPoint) -> NormPoint:
    y, x = sph_to_norm_arrays(s.lat, s.lon)
    return NormPoint(float(y), float(x))


def sph_to_vec(s: SphericalPoint) -> np.ndarray:
    """Unit vector (cos lat cos lon, cos lat sin lon, sin lat)."""
    cl = np.cos(s.lat)
    return np.array([cl * np.cos(s.lon), cl * np.sin(s.lon), np.sin(s.lat)])


def vec_to_sph(v) -> SphericalPoint:
    """Unit vector back to spherical coordinates.

    Latitude comes from atan2(z, hypot(x, y)), which stays well-conditioned
    arbitrarily close to the poles (asin(z) does not).
    """
    v = np.asarray(v, dtype=np.float64)
    return SphericalPoint(
        float(np.arctan2(v[2], np.hypot(v[0], v[1]))), float(np.arctan2(v[1], v[0]))
    )


def great_circle_arrays(lat1, lon1, lat2, lon2):
    """Great-circle distance in radians (Vincenty form, stable at all separations)."""
    lat1 = np.asarray(lat1, dtype=np.float64)
    lat2 = np.asarray(lat2, dtype=np.float64)
    dlon = np.asarray(lon2, dtype=np.float64) - np.asarray(lon1, dtype=np.float64)
    cos_l1, sin_l1 = np.cos(lat1), np.sin(lat1)
    cos_l2, sin_l2 = np.cos(lat2), np.sin(lat2)
    cos_d, sin_d = np.cos(dlon), np.sin(dlon)
    num = np.hypot(cos_l2 * sin_d, cos_l1 * sin_l2 - sin_l1 * cos_l2 * cos_d)
    den = sin_l1 * sin_l2 + cos_l1 * cos_l2 * cos_d
    return np.arctan2(num, den)


def great_circle(a: SphericalPoint, b: SphericalPoint) -> float:
    return float(great_circle_arrays(a.lat, a.lon, b.lat, b.lon))


# ---------------------------------------------------------------------------
# gnomonic (tangent-plane) inverse projection
# ---------------------------------------------------------------------------

def gnomonic_inverse_arrays(lat0, lon0, u, v):
    """Vectorized inverse gnomonic projection.

    With rho = hypot(u, v) and c = atan(rho):
      lat = asin(cos c sin lat0 + v sin c cos lat0 / rho)
      lon = lon0 + atan2(u sin c, rho cos lat0 cos c - v sin lat0 sin c)
    At rho = 0 the center is returned bit-for-bit.
    """
    lat0 = np.asarray(lat0, dtype=np.float64)
    lon0 = np.asarray(lon0, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)

    rho = np.hypot(u, v)
    inv_hyp = 1.0 / np.sqrt(1.0 + rho * rho)
    sin_c = rho * inv_hyp  # sin(atan(rho))
    cos_c = inv_hyp        # cos(atan(rho))
    rho_safe = np.where(rho == 0.0, 1.0, rho)

    sin_lat0 = np.sin(lat0)
    cos_lat0 = np.cos(lat0)
    lat = np.arcsin(np.clip(cos_c * sin_lat0 + v * sin_c * cos_lat0 / rho_safe, -1.0, 1.0))
    lon = wrap_lon(lon0 + np.arctan2(u * sin_c, rho_safe * cos_lat0 * cos_c - v * sin_lat0 * sin_c))

    at_center = rho == 0.0
    return np.where(at_center, lat0, lat), np.where(at_center, lon0, lon)


def gnomonic_inverse(center: SphericalPoint, off: TangentOffset) -> SphericalPoint:
    lat, lon = gnomonic_inverse_arrays(center.lat, center.lon, off.u, off.v)
    return SphericalPoint(float(lat), float(lon))


# ---------------------------------------------------------------------------
# equirectangular sampling
# ---------------------------------------------------------------------------

def bilinear_sample_arrays(pixels: np.ndarray, ys, xs) -> np.ndarray:
    """Bilinear sampling of an equirectangular plane or RGB image.

    `pixels` is (H, W) or (H, W, C); ys/xs are broadcast-compatible arrays of
    normalized coordinates. Columns wrap modulo W, rows clamp at the poles.
    Returns float64 samples shaped like ys (+ trailing channel axis).
    """
    h, w = pixels.shape[:2]
    gy = np.asarray(ys, dtype=np.float64) * h - 0.5
    gx = np.asarray(xs, dtype=np.float64) * w - 0.5

    y0f = np.floor(gy)
    x0f = np.floor(gx)
    fy = gy - y0f
    fx = gx - x0f

    y0i = y0f.astype(np.int64)
    y0 = np.clip(y0i, 0, h - 1)
    y1 = np.clip(y0i + 1, 0, h - 1)
    x0 = x0f.astype(np.int64) % w
    x1 = (x0 + 1) % w

    p00 = pixels[y0, x0].astype(np.float64)
    p01 = pixels[y0, x1].astype(np.float64)
    p10 = pixels[y1, x0].astype(np.float64)
    p11 = pixels[y1, x1].astype(np.float64)

    if pixels.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = p00 + (p01 - p00) * fx
    bot = p10 + (p11 - p10) * fx
    return top + (bot - top) * fy


def bilinear_sample(img: EquirectImage, p: NormPoint) -> tuple[float, float, float]:
    """Real-valued RGB at a normalized point (no quantization)."""
    rgb = bilinear_sample_arrays(img.pixels, np.float64(p.y), np.float64(p.x))
    return (float(rgb[0]), float(rgb[1]), float(rgb[2]))


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Round half away from zero and clip to the 8-bit range."""
    return np.clip(np.floor(values + 0.5), 0.0, 255.0).astype(np.uint8)
