"""Dataset-level benchmarking: correlation statistics, reference-grouped
splits, and the end-to-end scoring pipeline.

The protocol splits references 70/10/20 into train/val/test (grouped so no
reference straddles partitions), repeats with fresh shuffles, scores the
test rows, and reports mean and standard deviation of SRCC/PLCC across
repeats. There is no learned model here; the train/val partitions exist for
protocol compatibility and only the test partition is scored.
"""

from __future__ import annotations

import hashlib
import math
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._json import canonical_json_bytes
from .containers import meta_sidecar_path, read_raw, write_raw
from .geometry import EquirectImage, NormPoint
from .gsr import GsrConfig, GsrSequence, convert
from .metrics import PoolingMethod, s_psnr, score_sequences, ws_psnr
from .scanpaths import (
    GeneratorConfig,
    ScanpathSet,
    ViewingCondition,
    generate,
    load_scanpaths,
    scanpath_sha256,
)

METRIC_G_PSNR = "g-psnr"
METRIC_G_SSIM = "g-ssim"
METRIC_WS_PSNR = "ws-psnr"
METRIC_S_PSNR = "s-psnr"
_METRICS = (METRIC_G_PSNR, METRIC_G_SSIM, METRIC_WS_PSNR, METRIC_S_PSNR)

MANIFEST_COLUMNS = (
    "dist_path",
    "ref_path",
    "reference_id",
    "mos",
    "start_y",
    "start_x",
    "duration_s",
    "scanpath_file",
)


class CorrelationError(ValueError):
    """Raised when a correlation is undefined (constant input)."""


class ManifestError(ValueError):
    """Raised for malformed dataset manifests."""


# ---------------------------------------------------------------------------
# rank / linear correlation
# ---------------------------------------------------------------------------

def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank span."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    n = len(x)
    sx = float(np.sum(x))
    sy = float(np.sum(y))
    sxx = float(np.sum(x * x))
    syy = float(np.sum(y * y))
    sxy = float(np.sum(x * y))
    num = n * sxy - sx * sy
    d1 = n * sxx - sx * sx
    d2 = n * syy - sy * sy
    if d1 <= 0.0 or d2 <= 0.0:
        raise CorrelationError("correlation undefined for constant input")
    return min(max(num / math.sqrt(d1 * d2), -1.0), 1.0)


def _check_xy(x, y, minimum: int):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-D arrays of equal length")
    if len(x) < minimum:
        raise ValueError(f"need at least {minimum} samples, got {len(x)}")
    return x, y


def srcc(x, y) -> float:
    """Spearman rank-order correlation with average ranks for ties."""
    x, y = _check_xy(x, y, 2)
    return _pearson(average_ranks(x), average_ranks(y))


@dataclass(frozen=True)
class LogisticFit:
    beta: np.ndarray
    converged: bool

    def __call__(self, s) -> np.ndarray:
        return _logistic4(np.asarray(s, dtype=np.float64), self.beta)


def _logistic4(s: np.ndarray, beta: np.ndarray) -> np.ndarray:
    b1, b2, b3, b4 = beta
    z = (s - b3) / abs(b4)
    sig = 1.0 / (1.0 + np.exp(-z))
    return (b1 - b2) * sig + b2


def fit_logistic4(x, y, max_iter: int = 200, tol: float = 1e-10) -> LogisticFit:
    """Damped Gauss-Newton fit of the 4-parameter logistic y ~ f(x).

    Initialization: b1 = max(y), b2 = min(y), b3 = median(x), b4 = std(x)/4.
    The damping factor halves after an accepted step and doubles after a
    rejected one; iteration stops after `max_iter` rounds or when the
    relative residual change drops below `tol`.
    """
    x, y = _check_xy(x, y, 3)
    b4 = float(np.std(x)) / 4.0
    if b4 == 0.0:
        return LogisticFit(np.array([np.max(y), np.min(y), np.median(x), 1.0]), False)
    beta = np.array([float(np.max(y)), float(np.min(y)), float(np.median(x)), b4])
    lam = 1e-3
    resid = _logistic4(x, beta) - y
    cost = float(resid @ resid)

    for _ in range(max_iter):
        b1, b2, b3, b4 = beta
        w = abs(b4)
        z = (x - b3) / w
        sig = 1.0 / (1.0 + np.exp(-z))
        dsig = sig * (1.0 - sig)
        jac = np.column_stack(
            [
                sig,
                1.0 - sig,
                (b1 - b2) * dsig * (-1.0 / w),
                (b1 - b2) * dsig * (-z / w) * math.copysign(1.0, b4),
            ]
        )
        grad = jac.T @ resid
        hess = jac.T @ jac
        try:
            step = np.linalg.solve(hess + lam * np.eye(4), -grad)
        except np.linalg.LinAlgError:
            lam *= 2.0
            continue
        trial = beta + step
        trial_resid = _logistic4(x, trial) - y
        trial_cost = float(trial_resid @ trial_resid)
        if not math.isfinite(trial_cost):
            lam *= 2.0
            continue
        if trial_cost < cost:
            rel_change = (cost - trial_cost) / max(cost, 1e-300)
            beta, resid, cost = trial, trial_resid, trial_cost
            lam = max(lam * 0.5, 1e-12)
            if rel_change < tol:
                break
        else:
            lam *= 2.0
    converged = bool(np.all(np.isfinite(beta)) and math.isfinite(cost))
    return LogisticFit(beta, converged)


def plcc(x, y, mapping: str = "none") -> float:
    """Pearson correlation, optionally after a 4-parameter logistic mapping."""
    if mapping not in ("none", "logistic4"):
        raise ValueError(f"unknown mapping: {mapping!r}")
    if mapping == "none":
        x, y = _check_xy(x, y, 2)
        return _pearson(x, y)
    x, y = _check_xy(x, y, 3)
    fit = fit_logistic4(x, y)
    if fit.converged:
        try:
            return _pearson(fit(x), y)
        except CorrelationError:
            pass
    warnings.warn("logistic4 fit degenerate; falling back to linear PLCC", stacklevel=2)
    return _pearson(x, y)


# ---------------------------------------------------------------------------
# split protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPartition:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    repeats: int
    partitions: tuple[SplitPartition, ...]
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_splits(reference_ids, plan_seed: int, repeats: int = 5) -> SplitPlan:
    """Reference-grouped 70/10/20 partitions, one shuffle per repeat.

    Repeat r shuffles with the stream (plan_seed, r); partition sizes are
    round(0.7 R), round(0.1 R), remainder (test gets at least one reference,
    borrowed from train if rounding left none).
    """
    ids = sorted(set(reference_ids))
    r_total = len(ids)
    if r_total < 3:
        raise ValueError(f"need at least 3 distinct reference ids, got {r_total}")
    n_train = _round_half_up(0.7 * r_total)
    n_val = _round_half_up(0.1 * r_total)
    n_test = r_total - n_train - n_val
    if n_test < 1:
        n_train -= 1 - n_test
        n_test = 1
    partitions = []
    for r in range(repeats):
        rng = np.random.default_rng([plan_seed, r])
        perm = rng.permutation(r_total)
        shuffled = [ids[i] for i in perm]
        partitions.append(
            SplitPartition(
                tuple(shuffled[:n_train]),
                tuple(shuffled[n_train : n_train + n_val]),
                tuple(shuffled[n_train + n_val :]),
            )
        )
    return SplitPlan(plan_seed, repeats, tuple(partitions))


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestRow:
    dist_path: str
    ref_path: str
    reference_id: str
    mos: float
    start_y: float | None = None
    start_x: float | None = None
    duration_s: int | None = None
    scanpath_file: str | None = None

    def condition(self) -> ViewingCondition:
        """Row's viewing condition; center start and T = 20 when absent."""
        if self.start_y is None or self.start_x is None:
            start = NormPoint(0.5, 0.5)
        else:
            start = NormPoint(self.start_y, self.start_x)
        return ViewingCondition(start, self.duration_s if self.duration_s is not None else 20)


@dataclass(frozen=True)
class DatasetManifest:
    rows: tuple[ManifestRow, ...]
    base_dir: Path

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p


def load_manifest(path) -> DatasetManifest:
    """Parse a manifest CSV; relative paths resolve against its directory."""
    import csv

    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        header = tuple(reader.fieldnames or ())
        if header[:4] != MANIFEST_COLUMNS[:4]:
            raise ManifestError(
                f"manifest header must start with {','.join(MANIFEST_COLUMNS[:4])}; got {','.join(header)}"
            )
        unknown = set(header) - set(MANIFEST_COLUMNS)
        if unknown:
            raise ManifestError(f"unknown manifest columns: {sorted(unknown)}")
        for i, rec in enumerate(reader, start=2):
            def opt(key):
                val = (rec.get(key) or "").strip()
                return val or None

            ref_id = (rec.get("reference_id") or "").strip()
            if not ref_id:
                raise ManifestError(f"line {i}: empty reference_id")
            try:
                mos = float(rec["mos"])
            except (KeyError, TypeError, ValueError):
                raise ManifestError(f"line {i}: invalid mos value {rec.get('mos')!r}") from None
            if not math.isfinite(mos):
                raise ManifestError(f"line {i}: mos must be finite")
            try:
                rows.append(
                    ManifestRow(
                        dist_path=rec["dist_path"].strip(),
                        ref_path=rec["ref_path"].strip(),
                        reference_id=ref_id,
                        mos=mos,
                        start_y=float(opt("start_y")) if opt("start_y") else None,
                        start_x=float(opt("start_x")) if opt("start_x") else None,
                        duration_s=int(opt("duration_s")) if opt("duration_s") else None,
                        scanpath_file=opt("scanpath_file"),
                    )
                )
            except ValueError as e:
                raise ManifestError(f"line {i}: {e}") from None
    if not rows:
        raise ManifestError(f"{path}: manifest has no rows")
    return DatasetManifest(tuple(rows), path.parent.resolve())


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    metric: str = METRIC_G_PSNR
    mode: str = "per_patch"
    pooling: PoolingMethod = PoolingMethod()
    gsr: GsrConfig = field(default_factory=GsrConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    repeats: int = 5
    seed: int = 0
    logistic: bool = False
    s_psnr_points: int = 655362
    workers: int = 1
    cache_dir: Path | None = None
    flip_y: bool = False
    flip_x: bool = False
    lonlat: bool = False

    def __post_init__(self):
        if self.metric not in _METRICS:
            raise ValueError(f"unknown metric: {self.metric!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")


@dataclass(frozen=True)
class RepeatResult:
    srcc: float
    plcc: float
    test_references: tuple[str, ...]


@dataclass(frozen=True)
class EvalResult:
    repeats: tuple[RepeatResult, ...]
    srcc_mean: float
    srcc_std: float
    plcc_mean: float
    plcc_std: float

    def to_json_obj(self) -> dict:
        return {
            "repeats": [
                {"srcc": r.srcc, "plcc": r.plcc, "test_references": list(r.test_references)}
                for r in self.repeats
            ],
            "srcc_mean": self.srcc_mean,
            "srcc_std": self.srcc_std,
            "plcc_mean": self.plcc_mean,
            "plcc_std": self.plcc_std,
        }

    def to_json_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_json_obj())


def _row_seed(base_seed: int, row: ManifestRow) -> int:
    cond = row.condition()
    key = f"{base_seed}|{row.reference_id}|{cond.start.y:.9g}|{cond.start.x:.9g}|{cond.duration_s}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


def _gsr_cache_key(image_sha: str, scanpath_sha: str, cfg: GsrConfig) -> str:
    cfg_bytes = canonical_json_bytes(
        {
            "patch": [cfg.patch_h, cfg.patch_w],
            "n": cfg.n,
            "pitch": cfg.pitch_label,
            "sampling": cfg.sampling,
        }
    )
    return hashlib.sha256(image_sha.encode() + scanpath_sha.encode() + cfg_bytes).hexdigest()


class _ConversionCache:
    """Content-addressed GSR cache: optional on-disk store plus an in-memory
    map for reference sequences reused across rows."""

    def __init__(self, cache_dir: Path | None):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._mem: dict[str, GsrSequence] = {}
        self._lock = threading.Lock()

    def get(
        self,
        img: EquirectImage,
        sset: ScanpathSet,
        sset_sha: str,
        cfg: GsrConfig,
        keep_in_memory: bool,
    ) -> GsrSequence:
        key = _gsr_cache_key(img.sha256(), sset_sha, cfg)
        with self._lock:
            if key in self._mem:
                return self._mem[key]
        seq = None
        disk = self.cache_dir / f"{key}.gsr" if self.cache_dir is not None else None
        if disk is not None and disk.exists():
            seq = read_raw(disk)
        if seq is None:
            seq = convert(img, sset, cfg)
            if disk is not None:
                # unique temp name per thread, then atomic rename
                tmp = disk.with_name(f".{key}.{threading.get_ident()}.tmp.gsr")
                write_raw(seq, tmp)
                meta_sidecar_path(tmp).replace(meta_sidecar_path(disk))
                tmp.replace(disk)
        if keep_in_memory:
            with self._lock:
                self._mem.setdefault(key, seq)
        return seq


def evaluate(manifest: DatasetManifest, config: PipelineConfig) -> EvalResult:
    """Run the repeated-split protocol for one metric configuration.

    Every reference/distorted pair is converted with the same scanpaths
    (generated from a seed derived from the row's reference and condition,
    or loaded from the row's scanpath file). Scores are row-level facts
    independent of the split, so each needed row is scored exactly once.
    """
    rows = manifest.rows

    needs_paths = config.metric in (METRIC_G_PSNR, METRIC_G_SSIM)
    missing = []
    for row in rows:
        inputs = [row.dist_path, row.ref_path]
        if needs_paths:
            inputs.append(row.scanpath_file)
        for rel in inputs:
            if rel and not manifest.resolve(rel).exists():
                missing.append(rel)
    if missing:
        raise FileNotFoundError(
            "missing input files: " + ", ".join(sorted(set(missing)))
        )

    plan = make_splits([r.reference_id for r in rows], config.seed, config.repeats)
    needed: set[int] = set()
    for part in plan.partitions:
        test_ids = set(part.test)
        needed.update(i for i, row in enumerate(rows) if row.reference_id in test_ids)

    cache = _ConversionCache(config.cache_dir)
    image_cache: dict[str, EquirectImage] = {}
    image_lock = threading.Lock()

    def load_image(rel: str) -> EquirectImage:
        path = str(manifest.resolve(rel))
        with image_lock:
            if path in image_cache:
                return image_cache[path]
        img = EquirectImage.from_file(path)
        with image_lock:
            return image_cache.setdefault(path, img)

    def score_row(i: int) -> float:
        row = rows[i]
        if config.metric in (METRIC_WS_PSNR, METRIC_S_PSNR):
            ref_img = load_image(row.ref_path)
            dist_img = load_image(row.dist_path)
            if config.metric == METRIC_WS_PSNR:
                return ws_psnr(ref_img, dist_img)
            return s_psnr(ref_img, dist_img, config.s_psnr_points)

        if row.scanpath_file:
            sset = load_scanpaths(
                manifest.resolve(row.scanpath_file),
                flip_y=config.flip_y,
                flip_x=config.flip_x,
                lonlat=config.lonlat,
            )
        else:
            gen_cfg = replace(config.generator, seed=_row_seed(config.generator.seed, row))
            sset = generate(row.condition(), config.gsr.n, gen_cfg)
        sset_sha = scanpath_sha256(sset)
        ref_gsr = cache.get(load_image(row.ref_path), sset, sset_sha, config.gsr, True)
        dist_gsr = cache.get(load_image(row.dist_path), sset, sset_sha, config.gsr, False)
        metric = "psnr" if config.metric == METRIC_G_PSNR else "ssim"
        report = score_sequences(ref_gsr, dist_gsr, metric, config.mode, config.pooling)
        return report.pooled

    ordered = sorted(needed)
    if config.workers <= 1:
        scores = {i: score_row(i) for i in ordered}
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(score_row, ordered))
        scores = dict(zip(ordered, results))

    mapping = "logistic4" if config.logistic else "none"
    repeat_results = []
    for part in plan.partitions:
        test_ids = set(part.test)
        idx = [i for i, row in enumerate(rows) if row.reference_id in test_ids]
        xs = np.array([scores[i] for i in idx])
        ys = np.array([rows[i].mos for i in idx])
        repeat_results.append(RepeatResult(srcc(xs, ys), plcc(xs, ys, mapping), part.test))

    s_vals = np.array([r.srcc for r in repeat_results])
    p_vals = np.array([r.plcc for r in repeat_results])
    ddof = 1 if len(repeat_results) > 1 else 0
    return EvalResult(
        tuple(repeat_results),
        float(np.mean(s_vals)),
        float(np.std(s_vals, ddof=ddof)),
        float(np.mean(p_vals)),
        float(np.std(p_vals, ddof=ddof)),
    )
