import json

import numpy as np
import pytest

from gsr360 import (
    EquirectImage,
    GeneratorConfig,
    GsrConfig,
    NormPoint,
    ViewingCondition,
    convert,
    generate,
    read_gsr,
    score_sequences,
    write_gsr,
)
from gsr360.containers import meta_sidecar_path, read_raw, write_raw
from gsr360.metrics import PairingError


@pytest.fixture
def sequence(noise_image):
    sset = generate(ViewingCondition(NormPoint(0.5, 0.5), 4), 9, GeneratorConfig(seed=2))
    return convert(noise_image, sset, GsrConfig(patch_h=12, patch_w=12, n=9))


class TestRawForm:
    def test_round_trip(self, sequence, tmp_path):
        f = tmp_path / "seq.gsr"
        write_raw(sequence, f)
        loaded = read_raw(f)
        assert np.array_equal(loaded.frames, sequence.frames)
        assert loaded.meta.grid == sequence.meta.grid
        assert loaded.meta.scanpath_sha256 == sequence.meta.scanpath_sha256

    def test_write_read_write_is_byte_identical(self, sequence, tmp_path):
        f1 = tmp_path / "a.gsr"
        f2 = tmp_path / "b.gsr"
        write_raw(sequence, f1)
        write_raw(read_raw(f1), f2)
        assert f1.read_bytes() == f2.read_bytes()
        assert meta_sidecar_path(f1).read_bytes() == meta_sidecar_path(f2).read_bytes()

    def test_bad_magic(self, tmp_path):
        f = tmp_path / "x.gsr"
        f.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            read_raw(f)

    def test_truncated_payload(self, sequence, tmp_path):
        f = tmp_path / "x.gsr"
        write_raw(sequence, f)
        blob = f.read_bytes()
        f.write_bytes(blob[:-7])
        with pytest.raises(ValueError, match="bytes"):
            read_raw(f)

    def test_bare_raw_loads_with_unknown_meta(self, sequence, tmp_path):
        f = tmp_path / "bare.gsr"
        write_raw(sequence, f)
        meta_sidecar_path(f).unlink()
        loaded = read_raw(f)
        assert np.array_equal(loaded.frames, sequence.frames)
        assert loaded.meta.grid is None and loaded.meta.scanpath_sha256 is None
        # per-frame scoring still works; per-patch needs the grid
        score_sequences(loaded, loaded, "psnr", "per_frame")
        with pytest.raises(PairingError, match="grid"):
            score_sequences(loaded, loaded, "psnr", "per_patch")


class TestDirectoryForm:
    def test_round_trip(self, sequence, tmp_path):
        d = tmp_path / "seq"
        write_gsr(sequence, d)
        names = sorted(p.name for p in d.iterdir())
        assert names == ["frame_0001.png", "frame_0002.png", "frame_0003.png", "frame_0004.png", "meta.json"]
        loaded = read_gsr(d)
        assert np.array_equal(loaded.frames, sequence.frames)
        assert loaded.meta == read_gsr(d).meta

    def test_meta_schema(self, sequence, tmp_path):
        d = tmp_path / "seq"
        write_gsr(sequence, d)
        obj = json.loads((d / "meta.json").read_text())
        assert set(obj) == {
            "version",
            "t",
            "grid",
            "patch",
            "pitch",
            "sampling",
            "image_sha256",
            "scanpath_sha256",
        }
        assert obj["version"] == 1 and obj["t"] == 4
        assert obj["grid"] == [3, 3] and obj["patch"] == [12, 12]

    def test_missing_frame_detected(self, sequence, tmp_path):
        d = tmp_path / "seq"
        write_gsr(sequence, d)
        (d / "frame_0003.png").unlink()
        with pytest.raises(ValueError, match="frame_0003"):
            read_gsr(d)

    def test_meta_frame_count_mismatch(self, sequence, tmp_path):
        d = tmp_path / "seq"
        write_gsr(sequence, d)
        obj = json.loads((d / "meta.json").read_text())
        obj["grid"] = [2, 2]
        (d / "meta.json").write_text(json.dumps(obj))
        with pytest.raises(ValueError, match="disagrees"):
            read_gsr(d)


class TestEquivalence:
    def test_dir_and_raw_decode_identically(self, sequence, tmp_path):
        d = tmp_path / "seq"
        f = tmp_path / "seq.gsr"
        write_gsr(sequence, d)
        write_gsr(sequence, f)
        a = read_gsr(d)
        b = read_gsr(f)
        assert np.array_equal(a.frames, b.frames)
        assert a.meta == b.meta

    def test_tampered_hash_refused_at_scoring(self, sequence, tmp_path, noise_image):
        d = tmp_path / "seq"
        write_gsr(sequence, d)
        obj = json.loads((d / "meta.json").read_text())
        obj["scanpath_sha256"] = "0" * 64
        (d / "meta.json").write_text(json.dumps(obj))
        tampered = read_gsr(d)
        with pytest.raises(PairingError, match="scanpaths"):
            score_sequences(sequence, tampered, "psnr", "per_frame")
