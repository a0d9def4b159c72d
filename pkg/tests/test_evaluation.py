import math

import numpy as np
import pytest
from PIL import Image

from gsr360 import (
    EquirectImage,
    GeneratorConfig,
    GsrConfig,
    NormPoint,
    PipelineConfig,
    PoolingMethod,
    ViewingCondition,
    convert,
    evaluate,
    fit_logistic4,
    generate,
    load_manifest,
    make_splits,
    plcc,
    score_sequences,
    srcc,
)
from gsr360.evaluation import CorrelationError, ManifestError, average_ranks
from gsr360.scanpaths import scanpath_sha256

from conftest import smooth_field
from oracles import exhaustive_ranks, logistic4_curve, pearson_exact, spearman_exact


class TestRanks:
    def test_ties_get_average_ranks(self):
        got = average_ranks([10, 20, 20, 30])
        assert got.tolist() == [1.0, 2.5, 2.5, 4.0]

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            vals = rng.integers(0, 5, size=int(rng.integers(2, 9))).tolist()
            assert average_ranks(vals).tolist() == exhaustive_ranks(vals)


class TestSrcc:
    def test_identity(self):
        assert srcc([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0]) == 1.0

    def test_reversal(self):
        assert srcc([1.0, 2.0, 3.0, 4.0], [4.0, 3.0, 2.0, 1.0]) == -1.0

    def test_tied_example_matches_oracle(self):
        x = [1.0, 2.0, 2.0, 3.0]
        y = [1.0, 3.0, 2.0, 4.0]
        want = spearman_exact(x, y)  # 3/sqrt(10)
        assert srcc(x, y) == want
        assert want == pytest.approx(3.0 / math.sqrt(10.0), abs=1e-12)

    def test_exhaustive_small_vectors_with_ties(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            n = int(rng.integers(2, 9))
            x = rng.integers(0, 4, n).astype(float)
            y = rng.integers(0, 4, n).astype(float)
            try:
                want = spearman_exact(x.tolist(), y.tolist())
            except ZeroDivisionError:
                with pytest.raises(CorrelationError):
                    srcc(x, y)
                continue
            assert srcc(x, y) == want

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-2, 2, 40)
        y = rng.uniform(-2, 2, 40)
        base = srcc(x, y)
        assert srcc(np.exp(x), y) == pytest.approx(base, abs=1e-12)
        assert srcc(x, y**3) == pytest.approx(base, abs=1e-12)

    def test_constant_input_rejected(self):
        with pytest.raises(CorrelationError):
            srcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


class TestPlcc:
    def test_affine_invariance(self):
        x = np.array([0.0, 1.0, 2.0, 5.0])
        assert plcc(x, 2 * x + 3) == 1.0
        assert plcc(x, -x) == -1.0

    def test_matches_exact_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(2, 9))
            x = rng.integers(-3, 4, n).astype(float)
            y = rng.integers(-3, 4, n).astype(float)
            try:
                want = pearson_exact(x.tolist(), y.tolist())
            except ZeroDivisionError:
                with pytest.raises(CorrelationError):
                    plcc(x, y)
                continue
            assert plcc(x, y) == want

    def test_logistic_recovery(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(0, 10, 60)
        beta = (4.7, 1.2, 5.0, 1.3)
        y = logistic4_curve(x, beta)
        assert plcc(x, y, mapping="logistic4") >= 0.999999

    def test_logistic_fit_parameters(self):
        rng = np.random.default_rng(5)
        x = np.sort(rng.uniform(-4, 4, 80))
        beta = (9.0, 2.0, 0.5, 0.8)
        y = logistic4_curve(x, beta)
        fit = fit_logistic4(x, y)
        assert fit.converged
        assert np.max(np.abs(fit(x) - y)) < 1e-4

    def test_degenerate_fit_falls_back(self):
        # constant x makes the logistic underdetermined; fallback warns, then
        # the linear path rejects the constant vector
        x = np.array([1.0, 1.0, 1.0, 1.0])
        y = np.array([1.0, 2.0, 3.0, 4.0])
        with pytest.warns(UserWarning, match="falling back"):
            with pytest.raises(CorrelationError):
                plcc(x, y, mapping="logistic4")


class TestSplits:
    def test_sizes_r10(self):
        plan = make_splits([f"r{i}" for i in range(10)], 0, 3)
        for part in plan.partitions:
            assert (len(part.train), len(part.val), len(part.test)) == (7, 1, 2)

    def test_sizes_r16(self):
        plan = make_splits([f"r{i}" for i in range(16)], 0, 3)
        for part in plan.partitions:
            assert (len(part.train), len(part.val), len(part.test)) == (11, 2, 3)

    def test_test_partition_never_empty(self):
        plan = make_splits(["a", "b", "c"], 1, 2)
        for part in plan.partitions:
            assert len(part.test) >= 1

    def test_deterministic(self):
        ids = [f"img{i}" for i in range(12)]
        assert make_splits(ids, 9, 5) == make_splits(ids, 9, 5)
        assert make_splits(ids, 9, 5) != make_splits(ids, 10, 5)

    def test_disjoint_and_exhaustive(self):
        ids = [f"img{i}" for i in range(23)]
        plan = make_splits(ids, 3, 5)
        for part in plan.partitions:
            combined = sorted(part.train + part.val + part.test)
            assert combined == sorted(ids)
            assert len(set(part.train) & set(part.test)) == 0
            assert len(set(part.train) & set(part.val)) == 0
            assert len(set(part.val) & set(part.test)) == 0

    def test_too_few_references(self):
        with pytest.raises(ValueError):
            make_splits(["a", "b"], 0, 1)


def _write_manifest(tmp_path, rows, header=None):
    header = header or "dist_path,ref_path,reference_id,mos,start_y,start_x,duration_s,scanpath_file"
    f = tmp_path / "manifest.csv"
    f.write_text("\n".join([header] + rows) + "\n")
    return f


class TestManifest:
    def test_round_trip(self, tmp_path):
        f = _write_manifest(
            tmp_path,
            [
                "d1.png,r1.png,r1,3.25,0.5,0.25,15,sp.json",
                "d2.png,r1.png,r1,2.0,,,,",
            ],
        )
        m = load_manifest(f)
        assert len(m.rows) == 2
        row = m.rows[0]
        assert row.mos == 3.25 and row.duration_s == 15 and row.scanpath_file == "sp.json"
        cond = row.condition()
        assert cond.start == NormPoint(0.5, 0.25) and cond.duration_s == 15
        # defaults when the condition is absent
        cond2 = m.rows[1].condition()
        assert cond2.start == NormPoint(0.5, 0.5) and cond2.duration_s == 20

    def test_header_validation(self, tmp_path):
        f = _write_manifest(tmp_path, ["a,b,c,1"], header="x,y,z,w")
        with pytest.raises(ManifestError, match="header"):
            load_manifest(f)

    def test_bad_mos(self, tmp_path):
        f = _write_manifest(tmp_path, ["d.png,r.png,r,abc,,,,"])
        with pytest.raises(ManifestError, match="mos"):
            load_manifest(f)

    def test_empty_reference_id(self, tmp_path):
        f = _write_manifest(tmp_path, ["d.png,r.png,,1.0,,,,"])
        with pytest.raises(ManifestError, match="reference_id"):
            load_manifest(f)


def _build_corpus(tmp_path, n_refs=6, n_levels=2, size=(32, 64)):
    """Tiny image corpus with additive-noise distortion levels."""
    rng = np.random.default_rng(100)
    rows = []
    for r in range(n_refs):
        ref = smooth_field(size[0], size[1], seed=200 + r, sigma=2.0)
        Image.fromarray(ref).save(tmp_path / f"ref{r}.png")
        for lvl in range(n_levels):
            amp = 8 * (lvl + 1)
            dist = np.clip(
                ref.astype(np.int16) + rng.integers(-amp, amp + 1, ref.shape), 0, 255
            ).astype(np.uint8)
            Image.fromarray(dist).save(tmp_path / f"d{r}_{lvl}.png")
            rows.append((f"d{r}_{lvl}.png", f"ref{r}.png", f"ref{r}"))
    return rows


def _tiny_config(**kw):
    base = dict(
        metric="g-psnr",
        gsr=GsrConfig(patch_h=8, patch_w=8, n=4),
        generator=GeneratorConfig(seed=0),
        repeats=3,
        seed=0,
    )
    base.update(kw)
    return PipelineConfig(**base)


def _pipeline_score(tmp_path, row, config):
    ref = EquirectImage.from_file(tmp_path / row[1])
    dist = EquirectImage.from_file(tmp_path / row[0])
    cond = ViewingCondition(NormPoint(0.5, 0.5), 20)
    from gsr360.evaluation import _row_seed, ManifestRow

    mrow = ManifestRow(dist_path=row[0], ref_path=row[1], reference_id=row[2], mos=0.0)
    import dataclasses

    gen = dataclasses.replace(config.generator, seed=_row_seed(config.generator.seed, mrow))
    sset = generate(cond, config.gsr.n, gen)
    rep = score_sequences(
        convert(ref, sset, config.gsr), convert(dist, sset, config.gsr), "psnr", config.mode, config.pooling
    )
    return rep.pooled


class TestEvaluate:
    def test_planted_mos_gives_perfect_srcc(self, tmp_path):
        rows = _build_corpus(tmp_path)
        config = _tiny_config()
        manifest_rows = []
        for row in rows:
            score = _pipeline_score(tmp_path, row, config)
            manifest_rows.append(f"{row[0]},{row[1]},{row[2]},{score:.9g},,,,")
        f = _write_manifest(tmp_path, manifest_rows)
        result = evaluate(load_manifest(f), config)
        for rep in result.repeats:
            assert rep.srcc == 1.0
        assert result.srcc_mean == 1.0

    def test_negated_mos_gives_perfect_anticorrelation(self, tmp_path):
        rows = _build_corpus(tmp_path)
        config = _tiny_config()
        manifest_rows = []
        for row in rows:
            score = _pipeline_score(tmp_path, row, config)
            manifest_rows.append(f"{row[0]},{row[1]},{row[2]},{-score:.9g},,,,")
        f = _write_manifest(tmp_path, manifest_rows)
        result = evaluate(load_manifest(f), config)
        assert result.srcc_mean == -1.0

    def test_missing_files_enumerated_before_work(self, tmp_path):
        rows = _build_corpus(tmp_path, n_refs=3, n_levels=1)
        manifest_rows = [f"{r[0]},{r[1]},{r[2]},1.0,,,," for r in rows]
        manifest_rows.append("absent1.png,ref0.png,ref0,1.0,,,,")
        manifest_rows.append("d0_0.png,absent2.png,refX,1.0,,,,")
        f = _write_manifest(tmp_path, manifest_rows)
        with pytest.raises(FileNotFoundError) as exc:
            evaluate(load_manifest(f), _tiny_config())
        assert "absent1.png" in str(exc.value) and "absent2.png" in str(exc.value)

    def test_workers_do_not_change_result(self, tmp_path):
        rows = _build_corpus(tmp_path)
        manifest_rows = [f"{r[0]},{r[1]},{r[2]},{i}.5,,,," for i, r in enumerate(rows)]
        f = _write_manifest(tmp_path, manifest_rows)
        manifest = load_manifest(f)
        ref_bytes = evaluate(manifest, _tiny_config(workers=1)).to_json_bytes()
        for workers in (4, 16):
            assert evaluate(manifest, _tiny_config(workers=workers)).to_json_bytes() == ref_bytes

    def test_ws_psnr_ignores_scanpath_columns(self, tmp_path):
        # condition columns and even a nonexistent scanpath file are irrelevant
        # to the whole-image baseline
        rows = _build_corpus(tmp_path, n_refs=4, n_levels=2)
        with_cond = [f"{r[0]},{r[1]},{r[2]},{i}.5,0.1,0.9,7,not_there.json" for i, r in enumerate(rows)]
        without = [f"{r[0]},{r[1]},{r[2]},{i}.5,,,," for i, r in enumerate(rows)]
        f1 = _write_manifest(tmp_path, with_cond)
        r1 = evaluate(load_manifest(f1), _tiny_config(metric="ws-psnr"))
        f2 = _write_manifest(tmp_path, without)
        r2 = evaluate(load_manifest(f2), _tiny_config(metric="ws-psnr"))
        assert r1.to_json_bytes() == r2.to_json_bytes()

    def test_scanpath_hashes_match_for_ref_and_dist(self, tmp_path):
        # the structural full-reference pairing requirement
        rng = np.random.default_rng(11)
        ref = EquirectImage(rng.integers(0, 256, (32, 64, 3), dtype=np.uint8))
        dist = EquirectImage(rng.integers(0, 256, (32, 64, 3), dtype=np.uint8))
        sset = generate(ViewingCondition(NormPoint(0.5, 0.5), 4), 4, GeneratorConfig(seed=1))
        cfg = GsrConfig(patch_h=8, patch_w=8, n=4)
        a = convert(ref, sset, cfg)
        b = convert(dist, sset, cfg)
        assert a.meta.scanpath_sha256 == b.meta.scanpath_sha256 == scanpath_sha256(sset)

    def test_row_scanpath_file_used(self, tmp_path):
        from gsr360 import save_scanpaths

        rows = _build_corpus(tmp_path, n_refs=4, n_levels=2)
        sset = generate(ViewingCondition(NormPoint(0.5, 0.5), 20), 4, GeneratorConfig(seed=5))
        save_scanpaths(sset, tmp_path / "fixed.json")
        manifest_rows = [f"{r[0]},{r[1]},{r[2]},{i}.0,,,,fixed.json" for i, r in enumerate(rows)]
        f = _write_manifest(tmp_path, manifest_rows)
        result = evaluate(load_manifest(f), _tiny_config(repeats=2))
        assert len(result.repeats) == 2

    def test_aggregation_uses_sample_std(self, tmp_path):
        rows = _build_corpus(tmp_path)
        manifest_rows = [f"{r[0]},{r[1]},{r[2]},{i}.5,,,," for i, r in enumerate(rows)]
        f = _write_manifest(tmp_path, manifest_rows)
        result = evaluate(load_manifest(f), _tiny_config(repeats=4))
        vals = np.array([r.srcc for r in result.repeats])
        assert len(vals) == 4
        assert result.srcc_std == pytest.approx(float(np.std(vals, ddof=1)), abs=1e-15)
        assert result.srcc_mean == pytest.approx(float(np.mean(vals)), abs=1e-15)

    def test_cache_reuse_is_transparent(self, tmp_path):
        rows = _build_corpus(tmp_path, n_refs=4, n_levels=2)
        manifest_rows = [f"{r[0]},{r[1]},{r[2]},{i}.5,,,," for i, r in enumerate(rows)]
        f = _write_manifest(tmp_path, manifest_rows)
        manifest = load_manifest(f)
        cache = tmp_path / "cache"
        r1 = evaluate(manifest, _tiny_config(cache_dir=cache))
        assert any(cache.glob("*.gsr"))
        r2 = evaluate(manifest, _tiny_config(cache_dir=cache))
        assert r1.to_json_bytes() == r2.to_json_bytes()
