import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffdkit import embedstore
from ffdkit.embedstore import EmbeddingRecord, corpus_paths, read_corpus, synth_corpus, write_corpus
from ffdkit.errors import (
    CorruptCorpusError,
    DimensionMismatchError,
    DuplicateRecordError,
    EmptyInputError,
    InvalidParameterError,
    SchemaError,
)


def record(i, dim=4, condition="control", split="train", subject=None, seed=0):
    vec = np.random.default_rng(seed + i).normal(size=dim).astype("<f4")
    return EmbeddingRecord(
        record_id=f"rec-{i:04d}",
        subject_id=subject or f"subj-{i:04d}",
        eye=("left", "right")[i % 2],
        condition=condition,
        split=split,
        vector=vec,
    )


class TestWriteRead:
    def test_small_corpus_roundtrip(self, tmp_path):
        records = [record(i) for i in range(3)]
        manifest = write_corpus(records, tmp_path / "tiny", backbone_tag="test")
        assert manifest.dim == 4
        assert manifest.total() == 3
        back_manifest, back = read_corpus(tmp_path / "tiny")
        assert back_manifest.counts == manifest.counts
        for orig, loaded in zip(records, back):
            assert np.array_equal(orig.vector, loaded.vector)  # bitwise
            assert orig.metadata() == loaded.metadata()

    def test_blob_size_is_exactly_n_by_d_by_4(self, tmp_path):
        records = [record(i, dim=768) for i in range(10)]
        write_corpus(records, tmp_path / "blob", backbone_tag="test")
        _, blob_path = corpus_paths(tmp_path / "blob")
        assert blob_path.stat().st_size == 10 * 768 * 4

    def test_mixed_dimensions_rejected(self, tmp_path):
        records = [record(0, dim=768), record(1, dim=512)]
        with pytest.raises(DimensionMismatchError):
            write_corpus(records, tmp_path / "bad")

    def test_duplicate_record_id_rejected(self, tmp_path):
        a = record(0)
        b = record(1)
        b.record_id = a.record_id
        with pytest.raises(DuplicateRecordError):
            write_corpus([a, b], tmp_path / "dup")

    def test_empty_corpus_rejected(self, tmp_path):
        with pytest.raises(EmptyInputError):
            write_corpus([], tmp_path / "empty")

    def test_truncated_blob_detected(self, tmp_path):
        write_corpus([record(i) for i in range(5)], tmp_path / "trunc")
        _, blob_path = corpus_paths(tmp_path / "trunc")
        blob_path.write_bytes(blob_path.read_bytes()[:-4])
        with pytest.raises(CorruptCorpusError):
            read_corpus(tmp_path / "trunc")

    def test_count_mismatch_detected(self, tmp_path):
        write_corpus([record(i) for i in range(5)], tmp_path / "counts")
        manifest_path, _ = corpus_paths(tmp_path / "counts")
        raw = json.loads(manifest_path.read_text())
        raw["counts"]["train"]["control"] += 1
        manifest_path.write_text(json.dumps(raw))
        with pytest.raises(SchemaError):
            read_corpus(tmp_path / "counts")

    def test_unknown_condition_detected(self, tmp_path):
        write_corpus([record(i) for i in range(2)], tmp_path / "cond")
        manifest_path, _ = corpus_paths(tmp_path / "cond")
        raw = json.loads(manifest_path.read_text())
        raw["records"][0]["condition"] = "caffeine"
        manifest_path.write_text(json.dumps(raw))
        with pytest.raises(SchemaError):
            read_corpus(tmp_path / "cond")

    def test_missing_manifest_is_corpus_error(self, tmp_path):
        with pytest.raises(CorruptCorpusError):
            read_corpus(tmp_path / "nowhere")

    def test_corpus_paths_accept_any_of_the_pair(self, tmp_path):
        base = tmp_path / "c"
        assert corpus_paths(base) == corpus_paths(tmp_path / "c.manifest.json")
        assert corpus_paths(base) == corpus_paths(tmp_path / "c.embeddings.bin")

    @given(st.integers(min_value=1, max_value=12), st.integers(min_value=2, max_value=9))
    @settings(max_examples=20, deadline=None)
    def test_roundtrip_property(self, n, dim):
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as td:
            records = [record(i, dim=dim) for i in range(n)]
            write_corpus(records, Path(td) / "c")
            _, back = read_corpus(Path(td) / "c")
            assert all(np.array_equal(a.vector, b.vector) for a, b in zip(records, back))


class TestBinaryView:
    def test_condition_mapping(self):
        records = [
            record(0, condition="control"),
            record(1, condition="alcohol"),
            record(2, condition="drug"),
            record(3, condition="sleep"),
        ]
        _, y = embedstore.binary_view(records)
        assert y.tolist() == [1, 0, 0, 0]

    def test_all_control(self):
        _, y = embedstore.binary_view([record(i, condition="control") for i in range(4)])
        assert y.tolist() == [1, 1, 1, 1]

    def test_empty_selection(self):
        X, y = embedstore.binary_view([])
        assert len(X) == 0 and len(y) == 0

    def test_unknown_mode(self):
        with pytest.raises(InvalidParameterError):
            embedstore.binary_view([record(0)], mode="fit-vs-alcohol")


class TestSynthCorpus:
    def test_deterministic_for_fixed_seed(self):
        a = synth_corpus(10, 8, 2.0, seed=3)
        b = synth_corpus(10, 8, 2.0, seed=3)
        assert all(
            np.array_equal(x.vector, y.vector) and x.metadata() == y.metadata()
            for x, y in zip(a, b)
        )

    def test_different_seed_differs(self):
        a = synth_corpus(10, 8, 2.0, seed=3)
        b = synth_corpus(10, 8, 2.0, seed=4)
        assert not np.array_equal(a[0].vector, b[0].vector)

    def test_splits_partition_and_are_subject_disjoint(self, tmp_path):
        records = synth_corpus(50, 8, 1.0, seed=0)
        assert all(r.split in embedstore.SPLITS for r in records)
        write_corpus(records, tmp_path / "synth")
        assert embedstore.validate_corpus(tmp_path / "synth") == []

    def test_separation_controls_class_mean_distance(self):
        records = synth_corpus(400, 16, 6.0, seed=1)
        X, y = embedstore.binary_view(records)
        gap = np.linalg.norm(X[y == 1].mean(axis=0) - X[y == 0].mean(axis=0))
        assert gap == pytest.approx(6.0, abs=0.5)

    def test_condition_mean_override(self):
        means = {"sleep": np.full(8, 3.0)}
        records = synth_corpus(200, 8, 0.0, seed=2, condition_means=means)
        sleep = np.stack([r.vector for r in records if r.condition == "sleep"])
        control = np.stack([r.vector for r in records if r.condition == "control"])
        assert np.allclose(sleep.mean(axis=0), 3.0, atol=0.4)
        assert np.allclose(control.mean(axis=0), 0.0, atol=0.4)

    def test_bad_parameters(self):
        with pytest.raises(InvalidParameterError):
            synth_corpus(0, 8, 1.0, seed=0)
        with pytest.raises(InvalidParameterError):
            synth_corpus(5, 1, 1.0, seed=0)
        with pytest.raises(InvalidParameterError):
            synth_corpus(5, 8, -1.0, seed=0)


class TestValidator:
    def test_warns_when_subject_spans_splits(self, tmp_path):
        records = [
            record(0, split="train", subject="shared"),
            record(1, split="test", subject="shared"),
        ]
        write_corpus(records, tmp_path / "span")
        warnings = embedstore.validate_corpus(tmp_path / "span")
        assert len(warnings) == 1
        assert "shared" in warnings[0]
