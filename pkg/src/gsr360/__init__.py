"""Scanpath-driven quality assessment for equirectangular 360-degree images.

Pipeline: generate (or load) gaze scanpaths under a viewing condition,
convert the image into a sequence of tiled gaze-patch frames, score
reference/distorted sequence pairs with temporally pooled full-reference
metrics, and benchmark metric output against subjective datasets.
"""

from ._version import __version__
from .containers import read_gsr, write_gsr
from .evaluation import (
    DatasetManifest,
    EvalResult,
    ManifestRow,
    PipelineConfig,
    SplitPlan,
    evaluate,
    fit_logistic4,
    load_manifest,
    make_splits,
    plcc,
    srcc,
)
from .geometry import (
    EquirectImage,
    NormPoint,
    SphericalPoint,
    TangentOffset,
    bilinear_sample,
    gnomonic_inverse,
    great_circle,
    norm_to_sph,
    sph_to_norm,
    sph_to_vec,
    vec_to_sph,
)
from .gsr import GsrConfig, GsrMeta, GsrSequence, cell_of, convert, extract_patch
from .metrics import (
    PoolingMethod,
    QualityReport,
    ScoreMatrix,
    pool,
    psnr,
    s_psnr,
    score_sequences,
    ssim,
    ws_psnr,
)
from .scanpaths import (
    GeneratorConfig,
    Scanpath,
    ScanpathSet,
    ViewingCondition,
    generate,
    load_scanpaths,
    save_scanpaths,
)

__all__ = [
    "__version__",
    "DatasetManifest",
    "EquirectImage",
    "EvalResult",
    "GeneratorConfig",
    "GsrConfig",
    "GsrMeta",
    "GsrSequence",
    "ManifestRow",
    "NormPoint",
    "PipelineConfig",
    "PoolingMethod",
    "QualityReport",
    "Scanpath",
    "ScanpathSet",
    "ScoreMatrix",
    "SphericalPoint",
    "SplitPlan",
    "TangentOffset",
    "ViewingCondition",
    "bilinear_sample",
    "cell_of",
    "convert",
    "evaluate",
    "extract_patch",
    "fit_logistic4",
    "generate",
    "gnomonic_inverse",
    "great_circle",
    "load_manifest",
    "load_scanpaths",
    "make_splits",
    "norm_to_sph",
    "plcc",
    "pool",
    "psnr",
    "read_gsr",
    "s_psnr",
    "save_scanpaths",
    "score_sequences",
    "sph_to_norm",
    "sph_to_vec",
    "srcc",
    "ssim",
    "vec_to_sph",
    "write_gsr",
    "ws_psnr",
]
