"""Gaze scanpath generation, loading, and canonical serialization.

A scanpath is one gaze point per second for `duration_s` seconds, starting
exactly at the requested start point. Built-in generators:

* ``markov_walk`` - momentum-smoothed random walk on the sphere with an
  equator-restoring pull; the stand-in for a learned gaze model.
* ``uniform_random`` - area-uniform points on the sphere after the start.
* ``fixed_center`` - the start point repeated (static gaze).

Each path draws from its own random stream keyed by (seed, path index), so
results never depend on generation order or worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._json import canonical_json_bytes, round_sig
from .geometry import HALF_PI, TWO_PI, NormPoint, norm_to_sph

MODEL_MARKOV = "markov_walk"
MODEL_UNIFORM = "uniform_random"
MODEL_FIXED = "fixed_center"
_BUILTIN_MODELS = (MODEL_MARKOV, MODEL_UNIFORM, MODEL_FIXED)

_DEG = math.pi / 180.0
_SEED_MAX = 2**64


class ScanpathFormatError(ValueError):
    """Raised when a scanpath file does not match the expected format."""


@dataclass(frozen=True)
class ViewingCondition:
    """Start point and exploration time (seconds) conditioning the gaze walk."""

    start: NormPoint = NormPoint(0.5, 0.5)
    duration_s: int = 20

    def __post_init__(self):
        if int(self.duration_s) != self.duration_s or self.duration_s < 1:
            raise ValueError(f"duration_s must be a positive integer, got {self.duration_s}")
        object.__setattr__(self, "duration_s", int(self.duration_s))


@dataclass(frozen=True)
class Scanpath:
    points: tuple[NormPoint, ...]

    def __post_init__(self):
        if not self.points:
            raise ValueError("scanpath must contain at least one point")


@dataclass(frozen=True)
class ScanpathSet:
    """N same-length scanpaths plus the provenance needed to reproduce them."""

    paths: tuple[Scanpath, ...]
    start: NormPoint
    master_seed: int
    model_id: str

    def __post_init__(self):
        if not self.paths:
            raise ValueError("scanpath set must contain at least one path")
        t = len(self.paths[0].points)
        for i, p in enumerate(self.paths):
            if len(p.points) != t:
                raise ValueError(f"path {i} has {len(p.points)} points, expected {t}")

    @property
    def count(self) -> int:
        return len(self.paths)

    @property
    def duration_s(self) -> int:
        return len(self.paths[0].points)

    def as_array(self) -> np.ndarray:
        """(N, T, 2) float64 array of (y, x) coordinates."""
        return np.array(
            [[(pt.y, pt.x) for pt in path.points] for path in self.paths],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class GeneratorConfig:
    model: str = MODEL_MARKOV
    seed: int = 0
    step_mean_deg_per_s: float = 20.0
    step_std_deg: float = 10.0
    momentum: float = 0.6
    equator_pull: float = 0.15

    def __post_init__(self):
        if self.model not in _BUILTIN_MODELS:
            raise ValueError(f"unknown scanpath model: {self.model!r}")
        if not 0 <= self.seed < _SEED_MAX:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        for name in ("step_mean_deg_per_s", "step_std_deg", "momentum", "equator_pull"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.step_mean_deg_per_s < 0 or self.step_std_deg < 0:
            raise ValueError("step parameters must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.equator_pull < 0:
            raise ValueError("equator_pull must be non-negative")


def _wrap_pi(a: float) -> float:
    a = (a + math.pi) % TWO_PI - math.pi
    return -math.pi if a >= math.pi else a


def _quantized_point(y: float, x: float) -> NormPoint:
    # stored precision is 9 significant digits; quantize now so a file
    # round-trip reproduces the in-memory set exactly
    return NormPoint(min(max(round_sig(y), 0.0), 1.0), min(max(round_sig(x), 0.0), 1.0))


def _markov_path(rng, start: NormPoint, t: int, cfg: GeneratorConfig) -> list[NormPoint]:
    s0 = norm_to_sph(start)
    lat, lon = s0.lat, s0.lon
    heading = rng.uniform(-math.pi, math.pi)
    turns = rng.uniform(-math.pi, math.pi, t - 1)
    steps = np.abs(rng.normal(cfg.step_mean_deg_per_s, cfg.step_std_deg, t - 1)) * _DEG
    blend = 1.0 - cfg.momentum
    shrink = 1.0 - cfg.equator_pull

    pts = [start]
    for k in range(t - 1):
        heading = _wrap_pi(heading + blend * turns[k])
        d = steps[k]
        sin_d, cos_d = math.sin(d), math.cos(d)
        sin_lat, cos_lat = math.sin(lat), math.cos(lat)
        sin_lat2 = sin_lat * cos_d + cos_lat * sin_d * math.cos(heading)
        sin_lat2 = min(max(sin_lat2, -1.0), 1.0)
        lat2 = math.asin(sin_lat2)
        lon = _wrap_pi(lon + math.atan2(math.sin(heading) * sin_d * cos_lat, cos_d - sin_lat * sin_lat2))
        lat = min(max(lat2 * shrink, -HALF_PI), HALF_PI)
        pts.append(_quantized_point(0.5 - lat / math.pi, lon / TWO_PI + 0.5))
    return pts


def _uniform_path(rng, start: NormPoint, t: int) -> list[NormPoint]:
    lats = np.arcsin(rng.uniform(-1.0, 1.0, t - 1))  # area-uniform latitude
    lons = rng.uniform(-math.pi, math.pi, t - 1)
    pts = [start]
    for lat, lon in zip(lats, lons):
        pts.append(_quantized_point(0.5 - lat / math.pi, lon / TWO_PI + 0.5))
    return pts


def generate(
    cond: ViewingCondition,
    n: int,
    cfg: GeneratorConfig = GeneratorConfig(),
    workers: int = 1,
) -> ScanpathSet:
    """Generate `n` scanpaths under a viewing condition.

    Path `i` draws exclusively from a stream keyed by (cfg.seed, i), so the
    output is bit-identical for any `workers` value.
    """
    if n < 1:
        raise ValueError("n must be ≥ 1")
    t = cond.duration_s
    start = _quantized_point(cond.start.y, cond.start.x)

    def one(i: int) -> Scanpath:
        if cfg.model == MODEL_FIXED:
            return Scanpath((start,) * t)
        rng = np.random.default_rng([cfg.seed, i])
        if cfg.model == MODEL_UNIFORM:
            return Scanpath(tuple(_uniform_path(rng, start, t)))
        return Scanpath(tuple(_markov_path(rng, start, t, cfg)))

    if workers <= 1:
        paths = [one(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(one, range(n)))
    return ScanpathSet(tuple(paths), start, cfg.seed, cfg.model)


# ---------------------------------------------------------------------------
# on-disk format
# ---------------------------------------------------------------------------

def scanpath_json_bytes(sset: ScanpathSet) -> bytes:
    obj = {
        "version": 1,
        "duration_s": sset.duration_s,
        "start": [sset.start.y, sset.start.x],
        "model": sset.model_id,
        "seed": str(sset.master_seed),
        "paths": [{"points": [[pt.y, pt.x] for pt in path.points]} for path in sset.paths],
    }
    return canonical_json_bytes(obj)


def scanpath_sha256(sset: ScanpathSet) -> str:
    return hashlib.sha256(scanpath_json_bytes(sset)).hexdigest()


def save_scanpaths(sset: ScanpathSet, file) -> None:
    Path(file).write_bytes(scanpath_json_bytes(sset))


def _require(obj: dict, key: str):
    if key not in obj:
        raise ScanpathFormatError(f"missing required key {key!r}")
    return obj[key]


def _coerce_point(pair, where: str, flip_y: bool, flip_x: bool, lonlat: bool) -> NormPoint:
    if (
        not isinstance(pair, (list, tuple))
        or len(pair) != 2
        or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in pair)
    ):
        raise ScanpathFormatError(f"{where}: expected a [a, b] number pair, got {pair!r}")
    a, b = float(pair[0]), float(pair[1])
    if lonlat:
        # (latitude deg, longitude deg) -> normalized
        if not -90.0 <= a <= 90.0:
            raise ScanpathFormatError(f"{where}: latitude {a} out of range")
        y = 0.5 - math.radians(a) / math.pi
        x = _wrap_pi(math.radians(b)) / TWO_PI + 0.5
    else:
        y, x = a, b
    if flip_y:
        y = 1.0 - y
    if flip_x:
        x = 1.0 - x
    if not (0.0 <= y <= 1.0 and 0.0 <= x <= 1.0):
        raise ScanpathFormatError(f"{where}: point out of range (y={y}, x={x})")
    return NormPoint(y, x)


def load_scanpaths(
    file,
    flip_y: bool = False,
    flip_x: bool = False,
    lonlat: bool = False,
) -> ScanpathSet:
    """Load a scanpath JSON file, validating shape and coordinate ranges.

    `lonlat` reinterprets coordinate pairs as (latitude deg, longitude deg);
    `flip_y`/`flip_x` mirror the normalized axes after conversion.
    """
    text = Path(file).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScanpathFormatError(f"malformed JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ScanpathFormatError("top-level value must be an object")

    duration = _require(raw, "duration_s")
    if not isinstance(duration, int) or isinstance(duration, bool) or duration < 1:
        raise ScanpathFormatError(f"duration_s must be a positive integer, got {duration!r}")
    start = _coerce_point(_require(raw, "start"), "start", flip_y, flip_x, lonlat)
    model = _require(raw, "model")
    if not isinstance(model, str) or not model:
        raise ScanpathFormatError("model must be a non-empty string")
    seed_raw = _require(raw, "seed")
    try:
        seed = int(seed_raw)
    except (TypeError, ValueError):
        raise ScanpathFormatError(f"seed must be an integer string, got {seed_raw!r}") from None

    paths_raw = _require(raw, "paths")
    if not isinstance(paths_raw, list) or not paths_raw:
        raise ScanpathFormatError("paths must be a non-empty list")
    paths = []
    for i, entry in enumerate(paths_raw):
        if not isinstance(entry, dict) or "points" not in entry:
            raise ScanpathFormatError(f"path {i}: expected an object with a 'points' list")
        points_raw = entry["points"]
        if not isinstance(points_raw, list):
            raise ScanpathFormatError(f"path {i}: points must be a list")
        if len(points_raw) != duration:
            raise ScanpathFormatError(
                f"path {i}: expected {duration} points, got {len(points_raw)}"
            )
        points = tuple(
            _coerce_point(pt, f"path {i} point {j}", flip_y, flip_x, lonlat)
            for j, pt in enumerate(points_raw)
        )
        paths.append(Scanpath(points))
    return ScanpathSet(tuple(paths), start, seed, model)
