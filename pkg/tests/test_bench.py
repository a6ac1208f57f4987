import numpy as np
import pytest

from clickcut import imagecore
from clickcut.bench import (
    DatasetManifest,
    ManifestEntry,
    RunConfig,
    RunReport,
    clicks_to_target,
    load_manifest,
    refine_from_mask,
    run_ablation,
    run_benchmark,
    run_refinement,
    synth_corpus,
)


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    return synth_corpus(out, 3, seed=11, size=80)


@pytest.fixture(scope="module")
def refine_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("refine")
    return synth_corpus(out, 2, seed=21, size=80, with_initial_masks=True)


def oracle_config(k, threshold=0.9, **kw):
    return RunConfig(backend=f"oracle:{k}", superpixels=120,
                     iou_threshold=threshold, **kw)


class TestClicksToTarget:
    def test_oracle_k_reports_k(self, small_corpus):
        entry = small_corpus.entries[0]
        for k in (2, 3, 7):
            rec = clicks_to_target(entry, oracle_config(k))
            assert rec.clicks_used == k
            assert rec.final_iou == 1.0
            assert len(rec.trace) == rec.clicks_used

    def test_unreachable_threshold_caps_at_max(self, small_corpus):
        entry = small_corpus.entries[0]
        rec = clicks_to_target(entry, oracle_config(99))
        assert rec.clicks_used == 20
        assert rec.final_iou < 0.9

    def test_trace_indexing(self, small_corpus):
        entry = small_corpus.entries[0]
        rec = clicks_to_target(entry, oracle_config(4))
        assert rec.trace[0] == 0.0  # single click, no mask yet
        assert rec.trace[1] == 0.0  # oracle below k: empty mask
        assert rec.trace[3] == 1.0

    def test_skips_degenerate_instances(self, tmp_path):
        img = imagecore.Image(np.zeros((16, 16, 3), np.uint8))
        imagecore.save_image(img, tmp_path / "i.png")
        imagecore.save_mask(imagecore.BinaryMask.full(16, 16), tmp_path / "full.png")
        imagecore.save_mask(imagecore.BinaryMask.empty(16, 16), tmp_path / "empty.png")
        full = ManifestEntry(str(tmp_path / "i.png"), str(tmp_path / "full.png"), "full")
        empty = ManifestEntry(str(tmp_path / "i.png"), str(tmp_path / "empty.png"), "empty")
        for entry in (full, empty):
            rec = clicks_to_target(entry, oracle_config(2))
            assert rec.skipped
            assert rec.skip_reason

    def test_graphcut_improves_with_clicks(self, small_corpus):
        entry = small_corpus.entries[0]
        cfg = RunConfig(encoder="sp+spbox", superpixels=200, iou_threshold=0.99,
                        max_clicks=6)
        rec = clicks_to_target(entry, cfg)
        assert rec.trace[-1] >= rec.trace[1] - 0.05  # no catastrophic regressions


class TestReports:
    def test_mean_clicks_single_instance(self, small_corpus):
        manifest = DatasetManifest(name="one", entries=small_corpus.entries[:1])
        report = run_benchmark(manifest, oracle_config(4))
        assert report.mean_clicks == 4.0

    def test_report_round_trip(self, small_corpus):
        report = run_benchmark(small_corpus, oracle_config(3))
        again = RunReport.from_json(report.to_json())
        assert again.records == report.records
        assert again.config == report.config
        assert again.mean_clicks == report.mean_clicks

    def test_csv_emission(self, small_corpus):
        report = run_benchmark(small_corpus, oracle_config(3))
        csv_text = report.to_csv()
        lines = csv_text.strip().splitlines()
        assert len(lines) == 1 + len(small_corpus.entries)
        assert lines[0].startswith("instance_id,clicks_used")

    def test_miou_curve_monotone_for_oracle(self, small_corpus):
        report = run_benchmark(small_corpus, oracle_config(5))
        curve = report.miou_curve()
        values = [curve[k] for k in sorted(curve)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_benchmark_deterministic(self, small_corpus):
        cfg = RunConfig(encoder="sp+spbox", superpixels=150, iou_threshold=0.9,
                        max_clicks=8, seed=3)
        a = run_benchmark(small_corpus, cfg)
        b = run_benchmark(small_corpus, cfg)
        assert a.to_json() == b.to_json()


class TestAblation:
    def test_identical_configs_identical_means(self, small_corpus):
        cfg = oracle_config(3)
        rows = run_ablation(small_corpus, [cfg, cfg])
        assert rows[0].mean_clicks == rows[1].mean_clicks

    def test_one_row_per_encoder(self, small_corpus):
        configs = [oracle_config(3), oracle_config(3, encoder="sp")]
        rows = run_ablation(small_corpus, configs)
        assert [r.encoder for r in rows] == ["sp+spbox", "sp"]


class TestRefinement:
    def test_oracle_nondecreasing_over_budgets(self, refine_corpus):
        entry = refine_corpus.entries[0]
        cfg = oracle_config(4)
        rec = refine_from_mask(entry, cfg, budgets=(1, 4, 10))
        vals = [rec.miou_at_budget[b] for b in (1, 4, 10)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_initial_equals_gt_short_circuits(self, refine_corpus, tmp_path):
        entry = refine_corpus.entries[0]
        perfect = ManifestEntry(entry.image_path, entry.mask_path, "perfect",
                                initial_mask_path=entry.mask_path)
        rec = refine_from_mask(perfect, oracle_config(4))
        assert rec.initial_iou == 1.0
        assert all(v == 1.0 for v in rec.miou_at_budget.values())

    def test_missing_initial_mask_raises(self, small_corpus):
        with pytest.raises(ValueError):
            refine_from_mask(small_corpus.entries[0], oracle_config(2))

    def test_table_shape(self, refine_corpus):
        table = run_refinement(refine_corpus, oracle_config(3), budgets=(1, 4, 10))
        assert set(table["miou_at_budget"]) == {"1", "4", "10"}
        assert table["backend"] == "oracle:3"

    def test_graphcut_refinement_runs(self, refine_corpus):
        entry = refine_corpus.entries[0]
        cfg = RunConfig(encoder="sp+spbox", superpixels=150, iou_threshold=0.9)
        rec = refine_from_mask(entry, cfg, budgets=(1, 3))
        assert 0.0 <= rec.miou_at_budget[3] <= 1.0


class TestSynthCorpus:
    def test_deterministic_bytes(self, tmp_path):
        a = synth_corpus(tmp_path / "a", 2, seed=5, size=64)
        b = synth_corpus(tmp_path / "b", 2, seed=5, size=64)
        for ea, eb in zip(a.entries, b.entries):
            assert open(ea.image_path, "rb").read() == open(eb.image_path, "rb").read()
            assert open(ea.mask_path, "rb").read() == open(eb.mask_path, "rb").read()

    def test_masks_nonempty_and_in_bounds(self, small_corpus):
        for e in small_corpus.entries:
            m = imagecore.load_mask(e.mask_path)
            assert m.bits.any()
            assert not m.bits.all()

    def test_blob_background_color_margin(self, small_corpus):
        for e in small_corpus.entries:
            img = imagecore.load_image(e.image_path)
            m = imagecore.load_mask(e.mask_path)
            fg = img.pixels[m.bits].mean(axis=0)
            bg_region = np.logical_not(m.bits)
            bg = img.pixels[bg_region].mean(axis=0)
            assert np.linalg.norm(fg - bg) >= 30.0

    def test_manifest_round_trip(self, tmp_path):
        manifest = synth_corpus(tmp_path, 2, seed=6, size=64)
        loaded = load_manifest(tmp_path / "manifest.tsv")
        assert len(loaded.entries) == 2
        assert [e.instance_id for e in loaded.entries] == \
               [e.instance_id for e in manifest.entries]

    def test_missing_file_rejected(self, tmp_path):
        (tmp_path / "manifest.tsv").write_text("a.png\tb.png\tx\n")
        with pytest.raises(FileNotFoundError):
            load_manifest(tmp_path / "manifest.tsv")
