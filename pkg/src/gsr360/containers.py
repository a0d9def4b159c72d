"""On-disk containers for frame sequences.

Two interchangeable forms:

* directory: ``frame_0001.png`` ... ``frame_TTTT.png`` plus ``meta.json``;
* raw file (``.gsr``): magic ``GSR1``, little-endian u32 T, u32 height,
  u32 width, u8 channels (=3), 3 pad bytes, then T*H*W*3 bytes of RGB8
  frames in time order. A ``<name>.gsr.meta.json`` sidecar carries the same
  metadata as the directory form; a bare raw file still loads, with unknown
  provenance fields.

meta.json keys: version, t, grid, patch, pitch, sampling, image_sha256,
scanpath_sha256 (canonical JSON, sorted keys).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from ._json import canonical_json_bytes
from .gsr import GsrMeta, GsrSequence

MAGIC = b"GSR1"
_HEADER = struct.Struct("<4sIIIB3x")


def is_raw_path(path) -> bool:
    return Path(path).suffix == ".gsr"


def meta_sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def _meta_to_obj(meta: GsrMeta) -> dict:
    return {
        "version": meta.version,
        "t": meta.t,
        "grid": list(meta.grid) if meta.grid is not None else None,
        "patch": list(meta.patch) if meta.patch is not None else None,
        "pitch": meta.pitch,
        "sampling": meta.sampling,
        "image_sha256": meta.image_sha256,
        "scanpath_sha256": meta.scanpath_sha256,
    }


def _meta_from_obj(obj: dict, t: int, frame_h: int, frame_w: int) -> GsrMeta:
    def pair(key):
        val = obj.get(key)
        if val is None:
            return None
        if not (isinstance(val, list) and len(val) == 2):
            raise ValueError(f"meta.json {key} must be a two-element list")
        return (int(val[0]), int(val[1]))

    if "t" in obj and int(obj["t"]) != t:
        raise ValueError(f"meta.json declares t={obj['t']} but container holds {t} frames")
    grid = pair("grid")
    patch = pair("patch")
    if grid is not None and patch is not None:
        if (grid[0] * patch[0], grid[1] * patch[1]) != (frame_h, frame_w):
            raise ValueError(
                f"meta.json grid {grid} x patch {patch} disagrees with "
                f"frame size {frame_h}x{frame_w}"
            )
    pitch = obj.get("pitch")
    if isinstance(pitch, (int, float)) and not isinstance(pitch, bool):
        pitch = float(pitch)
    return GsrMeta(
        t=t,
        frame_h=frame_h,
        frame_w=frame_w,
        grid=grid,
        patch=patch,
        pitch=pitch,
        sampling=obj.get("sampling"),
        image_sha256=obj.get("image_sha256"),
        scanpath_sha256=obj.get("scanpath_sha256"),
        version=int(obj.get("version", 1)),
        software=None,
    )


# ---------------------------------------------------------------------------
# raw form
# ---------------------------------------------------------------------------

def write_raw(seq: GsrSequence, path) -> Path:
    path = Path(path)
    t, h, w = seq.frames.shape[:3]
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, t, h, w, 3))
        f.write(seq.frames.tobytes())
    meta_sidecar_path(path).write_bytes(canonical_json_bytes(_meta_to_obj(seq.meta)))
    return path


def read_raw(path) -> GsrSequence:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated raw container")
    magic, t, h, w, channels = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if channels != 3:
        raise ValueError(f"{path}: unsupported channel count {channels}")
    expected = _HEADER.size + t * h * w * 3
    if len(blob) != expected:
        raise ValueError(f"{path}: payload is {len(blob)} bytes, expected {expected}")
    frames = np.frombuffer(blob, dtype=np.uint8, offset=_HEADER.size).reshape(t, h, w, 3).copy()

    sidecar = meta_sidecar_path(path)
    if sidecar.exists():
        meta = _meta_from_obj(json.loads(sidecar.read_text(encoding="utf-8")), t, h, w)
    else:
        meta = GsrMeta(t=t, frame_h=h, frame_w=w, software=None)
    return GsrSequence(frames, meta)


# ---------------------------------------------------------------------------
# directory form
# ---------------------------------------------------------------------------

def write_frames_dir(seq: GsrSequence, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for t in range(seq.t):
        Image.fromarray(seq.frames[t]).save(path / f"frame_{t + 1:04d}.png", format="PNG")
    (path / "meta.json").write_bytes(canonical_json_bytes(_meta_to_obj(seq.meta)))
    return path


def read_frames_dir(path) -> GsrSequence:
    path = Path(path)
    meta_file = path / "meta.json"
    if not meta_file.exists():
        raise ValueError(f"{path}: missing meta.json")
    obj = json.loads(meta_file.read_text(encoding="utf-8"))
    t = int(obj["t"])
    frames = []
    for i in range(1, t + 1):
        frame_file = path / f"frame_{i:04d}.png"
        if not frame_file.exists():
            raise ValueError(f"{path}: missing {frame_file.name} (meta declares t={t})")
        with Image.open(frame_file) as im:
            frames.append(np.asarray(im.convert("RGB"), dtype=np.uint8))
    if len({f.shape for f in frames}) != 1:
        raise ValueError(f"{path}: frames have inconsistent dimensions")
    stack = np.stack(frames)
    return GsrSequence(stack, _meta_from_obj(obj, t, stack.shape[1], stack.shape[2]))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def write_gsr(seq: GsrSequence, path) -> Path:
    """Write a container: raw form when the path ends in .gsr, else a directory."""
    if is_raw_path(path):
        return write_raw(seq, path)
    return write_frames_dir(seq, path)


def read_gsr(path) -> GsrSequence:
    path = Path(path)
    if path.is_dir():
        return read_frames_dir(path)
    if not path.exists():
        raise FileNotFoundError(f"no such container: {path}")
    return read_raw(path)
