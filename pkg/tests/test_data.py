import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_dataset
from emireg.constants import FEATURE_DIM
from emireg.data import (
    GLOBAL_SIGNAL_DIMS,
    TEMPORAL_SIGNAL_DIMS,
    Manifest,
    ManifestRecord,
    SynthConfig,
    batches,
    draw_targets,
    load_manifest,
    load_split,
    read_features,
    synth_generate,
    write_features,
    write_manifest,
)
from emireg.errors import ConfigError, DataError
from emireg.rng import Rng


class TestFeatureFiles:
    def test_roundtrip_exact_at_storage_precision(self, tmp_path):
        rng = Rng(80)
        frames = rng.normals(7 * 11).reshape(7, 11)
        path = tmp_path / "x.emif"
        write_features(path, frames)
        back = read_features(path)
        np.testing.assert_array_equal(back, frames.astype("<f4").astype(np.float64))

    @given(
        arrays(
            np.float32,
            st.tuples(st.integers(1, 6), st.integers(1, 5)),
            elements=st.floats(-1e6, 1e6, width=32),
        )
    )
    @settings(max_examples=30, deadline=None, derandomize=True)
    def test_roundtrip_property(self, frames):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "x.emif"
            write_features(path, frames.astype(np.float64))
            np.testing.assert_array_equal(read_features(path), frames.astype(np.float64))

    def test_zero_frames_rejected_at_write(self, tmp_path):
        with pytest.raises(DataError):
            write_features(tmp_path / "x.emif", np.zeros((0, 4)))

    def test_zero_frames_rejected_at_read(self, tmp_path):
        path = tmp_path / "x.emif"
        write_features(path, np.ones((2, 3)))
        blob = bytearray(path.read_bytes())
        blob[8:12] = (0).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(DataError, match="zero frames"):
            read_features(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.emif"
        write_features(path, np.ones((2, 3)))
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(DataError, match="magic"):
            read_features(path)

    def test_truncation_reports_offsets(self, tmp_path):
        path = tmp_path / "x.emif"
        write_features(path, np.ones((2, 3)))
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(DataError, match="byte"):
            read_features(path)

    def test_unexpected_width(self, tmp_path):
        path = tmp_path / "x.emif"
        write_features(path, np.ones((2, 3)))
        with pytest.raises(DataError, match="width"):
            read_features(path, expect_width=4)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "x.emif"
        write_features(path, np.ones((2, 3)))
        blob = bytearray(path.read_bytes())
        blob[4:8] = (9).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(DataError, match="version"):
            read_features(path)


def _write_sample(tmp_path, name, frames):
    rel = f"features/{name}.emif"
    (tmp_path / "features").mkdir(exist_ok=True)
    write_features(tmp_path / rel, frames)
    return rel


def _manifest_with(tmp_path, rows):
    lines = ["sample_id,feature_path,admiration,amusement,determination,"
             "empathic_pain,excitement,joy,split"]
    lines += rows
    path = tmp_path / "manifest.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestManifest:
    def test_well_formed_roundtrip(self, tmp_path):
        rng = Rng(81)
        records = []
        for i in range(3):
            rel = _write_sample(tmp_path, f"s{i}", rng.normals(8).reshape(2, 4))
            records.append(
                ManifestRecord(f"s{i}", rel, rng.uniforms(6), "train" if i else "val")
            )
        write_manifest(Manifest(records, tmp_path), tmp_path / "manifest.csv")
        loaded = load_manifest(tmp_path / "manifest.csv")
        assert len(loaded.records) == 3
        for orig, back in zip(records, loaded.records):
            assert back.sample_id == orig.sample_id
            assert back.split == orig.split
            np.testing.assert_array_equal(back.targets, orig.targets)

    def test_target_out_of_range_names_row_and_column(self, tmp_path):
        rel = _write_sample(tmp_path, "a", np.ones((2, 3)))
        path = _manifest_with(tmp_path, [f"a,{rel},0.1,1.5,0.1,0.1,0.1,0.1,train"])
        with pytest.raises(DataError, match="amusement.*1.5"):
            load_manifest(path)

    def test_duplicate_sample_id(self, tmp_path):
        rel = _write_sample(tmp_path, "a", np.ones((2, 3)))
        path = _manifest_with(
            tmp_path,
            [f"a,{rel},0,0,0,0,0,0,train", f"a,{rel},0,0,0,0,0,0,val"],
        )
        with pytest.raises(DataError, match="duplicate"):
            load_manifest(path)

    def test_missing_feature_file(self, tmp_path):
        path = _manifest_with(tmp_path, ["a,features/none.emif,0,0,0,0,0,0,train"])
        with pytest.raises(DataError, match="missing feature file"):
            load_manifest(path)

    def test_wrong_column_count(self, tmp_path):
        rel = _write_sample(tmp_path, "a", np.ones((2, 3)))
        path = _manifest_with(tmp_path, [f"a,{rel},0,0,0,0,0,train"])
        with pytest.raises(DataError, match="columns"):
            load_manifest(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "manifest.csv"
        path.write_text("id,path\n", encoding="utf-8")
        with pytest.raises(DataError, match="header"):
            load_manifest(path)

    def test_bad_split_value(self, tmp_path):
        rel = _write_sample(tmp_path, "a", np.ones((2, 3)))
        path = _manifest_with(tmp_path, [f"a,{rel},0,0,0,0,0,0,dev"])
        with pytest.raises(DataError, match="split"):
            load_manifest(path)

    def test_load_split_requires_records(self, tmp_path):
        rel = _write_sample(tmp_path, "a", np.ones((2, 3)))
        path = _manifest_with(tmp_path, [f"a,{rel},0,0,0,0,0,0,train"])
        manifest = load_manifest(path)
        with pytest.raises(DataError, match="no records"):
            load_split(manifest, "test")


class TestBatches:
    def test_batch_sizes_keep_last_short(self):
        dataset = random_dataset(Rng(82), 10, 5)
        sizes = [len(b.sample_ids) for b in batches(dataset, 4)]
        assert sizes == [4, 4, 2]

    def test_no_shuffle_preserves_order(self):
        dataset = random_dataset(Rng(83), 7, 5)
        ids = [sid for b in batches(dataset, 3) for sid in b.sample_ids]
        assert ids == dataset.sample_ids

    def test_shuffle_deterministic_per_seed(self):
        dataset = random_dataset(Rng(84), 12, 5)
        a = [sid for b in batches(dataset, 5, Rng(3), shuffle=True) for sid in b.sample_ids]
        b = [sid for b in batches(dataset, 5, Rng(3), shuffle=True) for sid in b.sample_ids]
        assert a == b
        assert a != dataset.sample_ids  # permuted for this seed

    def test_epoch_covers_split_exactly(self):
        dataset = random_dataset(Rng(85), 13, 5)
        ids = [sid for b in batches(dataset, 4, Rng(1), shuffle=True) for sid in b.sample_ids]
        assert sorted(ids) == sorted(dataset.sample_ids)

    def test_padding_is_exactly_zero(self):
        dataset = random_dataset(Rng(86), 6, 5, len_range=(2, 9))
        for batch in batches(dataset, 3):
            for row, n in enumerate(batch.valid_lens):
                assert not batch.frames[row, n:].any()

    def test_shuffle_needs_rng(self):
        dataset = random_dataset(Rng(87), 4, 5)
        with pytest.raises(ConfigError):
            list(batches(dataset, 2, shuffle=True))


class TestSynth:
    def test_deterministic_directory_bytes(self, tmp_path):
        cfg = SynthConfig(n_samples=6, seq_len_range=(2, 5), feature_dim=80, seed=7)
        dirs = []
        for name in ("a", "b"):
            out = tmp_path / name
            synth_generate(cfg, out)
            dirs.append(out)
        files_a = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(dirs[1]) for p in dirs[1].rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (dirs[0] / rel).read_bytes() == (dirs[1] / rel).read_bytes(), rel

    def test_split_sizes(self, tmp_path):
        cfg = SynthConfig(n_samples=10, seq_len_range=(2, 3), feature_dim=80, seed=1)
        manifest = synth_generate(cfg, tmp_path / "d")
        assert len(manifest.split("train")) == 8
        assert len(manifest.split("val")) == 2

    def test_manifest_loads_back(self, tmp_path):
        cfg = SynthConfig(n_samples=5, seq_len_range=(2, 4), feature_dim=80, seed=2)
        synth_generate(cfg, tmp_path / "d")
        manifest = load_manifest(tmp_path / "d" / "manifest.csv")
        dataset = load_split(manifest, "train")
        assert dataset.width == 80

    def test_noiseless_global_mean_recovery(self, tmp_path):
        cfg = SynthConfig(
            n_samples=4, seq_len_range=(3, 6), feature_dim=80,
            noise_std=0.0, signal_mode="global-mean", seed=3,
        )
        manifest = synth_generate(cfg, tmp_path / "d")
        for record in manifest.records:
            frames = read_features(manifest.resolve(record))
            pooled = frames.mean(axis=0)
            for k in range(6):
                for d in GLOBAL_SIGNAL_DIMS[k]:
                    assert abs(pooled[d] - record.targets[k]) < 1e-7  # f32 storage
            assert not pooled[72:].any()

    def test_noiseless_temporal_ramp(self, tmp_path):
        cfg = SynthConfig(
            n_samples=3, seq_len_range=(4, 6), feature_dim=80,
            noise_std=0.0, signal_mode="temporal", seed=4,
        )
        manifest = synth_generate(cfg, tmp_path / "d")
        for record in manifest.records:
            frames = read_features(manifest.resolve(record))
            assert not frames[0].any()  # ramp starts at zero
            for k in range(6):
                for d in TEMPORAL_SIGNAL_DIMS[k]:
                    assert abs(frames[-1, d] - record.targets[k]) < 1e-7
            assert not frames[:, :36].any()  # global blocks untouched

    def test_skew_statistics(self):
        targets = draw_targets(SynthConfig(feature_dim=80), Rng(12345), 10_000)
        flat = targets.reshape(-1)
        assert float(np.median(flat)) < 0.25
        frac_high = float((flat > 0.8).mean())
        assert 0.02 <= frac_high <= 0.15
        assert flat.min() >= 0.0 and flat.max() <= 1.0

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SynthConfig(feature_dim=60)
        with pytest.raises(ConfigError):
            SynthConfig(signal_mode="ramp")
        with pytest.raises(ConfigError):
            SynthConfig(seq_len_range=(4, 2))
        with pytest.raises(ConfigError):
            SynthConfig(noise_std=-0.1)

    def test_default_feature_dim_matches_model(self):
        assert SynthConfig().feature_dim == FEATURE_DIM
