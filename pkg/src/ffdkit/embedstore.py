"""Embedding corpus storage: binary feature vectors plus a JSON manifest.

A corpus is the file pair ``<base>.manifest.json`` + ``<base>.embeddings.bin``.
The blob is float32 little-endian, row-major, records in manifest order; the
manifest carries dimensionality, labels, split assignment and provenance.
This file pair is the complete contract with any upstream feature extractor.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CorruptCorpusError,
    DimensionMismatchError,
    DuplicateRecordError,
    EmptyInputError,
    InvalidParameterError,
    SchemaError,
)

FORMAT_TAG = "ffdkit-corpus-v1"
CONDITIONS = ("control", "alcohol", "drug", "sleep")
UNFIT_CONDITIONS = ("alcohol", "drug", "sleep")
SPLITS = ("train", "val", "test")
EYES = ("left", "right")
BYTES_PER_COMPONENT = 4  # float32-le


@dataclass
class EmbeddingRecord:
    """One eye image's frozen feature vector plus identity/condition/split metadata."""

    record_id: str
    subject_id: str
    eye: str
    condition: str
    split: str
    vector: np.ndarray = field(repr=False)

    def metadata(self) -> dict:
        return {
            "record_id": self.record_id,
            "subject_id": self.subject_id,
            "eye": self.eye,
            "condition": self.condition,
            "split": self.split,
        }


@dataclass
class DatasetManifest:
    name: str
    dim: int
    dtype: str
    backbone_tag: str
    counts: dict  # split -> condition -> record count
    records: list  # per-record metadata dicts, blob order

    def total(self) -> int:
        return len(self.records)


def corpus_paths(path: str | Path) -> tuple[Path, Path]:
    """Manifest and blob paths for a corpus base path."""
    base = Path(path)
    name = base.name
    for suffix in (".manifest.json", ".embeddings.bin"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    base = base.with_name(name)
    return (
        base.with_name(base.name + ".manifest.json"),
        base.with_name(base.name + ".embeddings.bin"),
    )


def _check_metadata(meta: dict, where: str) -> None:
    if meta["condition"] not in CONDITIONS:
        raise SchemaError(f"{where}: unknown condition {meta['condition']!r}")
    if meta["split"] not in SPLITS:
        raise SchemaError(f"{where}: unknown split {meta['split']!r}")
    if meta["eye"] not in EYES:
        raise SchemaError(f"{where}: unknown eye {meta['eye']!r}")


def _tally(records_meta: list[dict]) -> dict:
    counts = {split: {cond: 0 for cond in CONDITIONS} for split in SPLITS}
    for meta in records_meta:
        counts[meta["split"]][meta["condition"]] += 1
    return counts


def write_corpus(
    records: list[EmbeddingRecord],
    path: str | Path,
    name: str | None = None,
    backbone_tag: str = "unspecified",
) -> DatasetManifest:
    """Write the manifest + blob pair atomically (temp file, then rename).

    Vectors are stored as float32-le; pass float32 vectors for a bitwise
    round-trip through :func:`read_corpus`.
    """
    if not records:
        raise EmptyInputError("refusing to write an empty corpus")
    dim = int(np.asarray(records[0].vector).size)
    seen_ids: set[str] = set()
    rows = np.empty((len(records), dim), dtype="<f4")
    for i, rec in enumerate(records):
        vec = np.asarray(rec.vector)
        if vec.size != dim:
            raise DimensionMismatchError(
                f"record {rec.record_id!r} has dim {vec.size}, expected {dim}"
            )
        if not np.all(np.isfinite(vec)):
            raise SchemaError(f"record {rec.record_id!r} has non-finite components")
        if rec.record_id in seen_ids:
            raise DuplicateRecordError(f"duplicate record_id {rec.record_id!r}")
        seen_ids.add(rec.record_id)
        _check_metadata(rec.metadata(), f"record {rec.record_id!r}")
        rows[i] = vec.astype("<f4")

    manifest_path, blob_path = corpus_paths(path)
    records_meta = [rec.metadata() for rec in records]
    manifest = DatasetManifest(
        name=name or manifest_path.name.replace(".manifest.json", ""),
        dim=dim,
        dtype="float32-le",
        backbone_tag=backbone_tag,
        counts=_tally(records_meta),
        records=records_meta,
    )
    manifest_dict = {
        "format": FORMAT_TAG,
        "name": manifest.name,
        "dim": manifest.dim,
        "dtype": manifest.dtype,
        "backbone_tag": manifest.backbone_tag,
        "counts": manifest.counts,
        "records": manifest.records,
    }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_bytes(blob_path, rows.tobytes())
    _atomic_write_bytes(
        manifest_path, (json.dumps(manifest_dict, indent=2) + "\n").encode()
    )
    return manifest


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_manifest(path: str | Path) -> DatasetManifest:
    manifest_path, _ = corpus_paths(path)
    try:
        raw = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise CorruptCorpusError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest is not valid JSON: {exc}") from None
    for key in ("name", "dim", "dtype", "backbone_tag", "counts", "records"):
        if key not in raw:
            raise SchemaError(f"manifest missing key {key!r}")
    if raw["dtype"] != "float32-le":
        raise SchemaError(f"unsupported dtype {raw['dtype']!r}")
    if not isinstance(raw["dim"], int) or raw["dim"] < 1:
        raise SchemaError(f"bad dim {raw['dim']!r}")
    seen: set[str] = set()
    for i, meta in enumerate(raw["records"]):
        for key in ("record_id", "subject_id", "eye", "condition", "split"):
            if key not in meta:
                raise SchemaError(f"record #{i} missing key {key!r}")
        _check_metadata(meta, f"record {meta['record_id']!r}")
        if meta["record_id"] in seen:
            raise SchemaError(f"duplicate record_id {meta['record_id']!r}")
        seen.add(meta["record_id"])
    declared = raw["counts"]
    actual = _tally(raw["records"])
    for split in SPLITS:
        for cond in CONDITIONS:
            if declared.get(split, {}).get(cond, 0) != actual[split][cond]:
                raise SchemaError(
                    f"counts[{split}][{cond}] = {declared.get(split, {}).get(cond, 0)} "
                    f"but {actual[split][cond]} records carry that split/condition"
                )
    return DatasetManifest(
        name=raw["name"],
        dim=raw["dim"],
        dtype=raw["dtype"],
        backbone_tag=raw["backbone_tag"],
        counts=raw["counts"],
        records=raw["records"],
    )


def read_corpus(path: str | Path) -> tuple[DatasetManifest, list[EmbeddingRecord]]:
    """Load a corpus; returns records in manifest order."""
    manifest = read_manifest(path)
    _, blob_path = corpus_paths(path)
    try:
        blob = blob_path.read_bytes()
    except FileNotFoundError:
        raise CorruptCorpusError(f"embedding blob not found: {blob_path}") from None
    expected = manifest.total() * manifest.dim * BYTES_PER_COMPONENT
    if len(blob) != expected:
        raise CorruptCorpusError(
            f"blob is {len(blob)} bytes, expected {expected} "
            f"({manifest.total()} records x {manifest.dim} x {BYTES_PER_COMPONENT})"
        )
    matrix = np.frombuffer(blob, dtype="<f4").reshape(manifest.total(), manifest.dim)
    records = [
        EmbeddingRecord(vector=matrix[i].copy(), **meta)
        for i, meta in enumerate(manifest.records)
    ]
    return manifest, records


def validate_corpus(path: str | Path) -> list[str]:
    """Full read-side validation; returns advisory warnings, raises on errors."""
    manifest, records = read_corpus(path)
    warnings = []
    subject_splits: dict[str, set[str]] = {}
    for rec in records:
        subject_splits.setdefault(rec.subject_id, set()).add(rec.split)
    for subject, splits in sorted(subject_splits.items()):
        if len(splits) > 1:
            warnings.append(
                f"subject {subject!r} spans splits {sorted(splits)}; "
                "splits may not be subject-disjoint"
            )
    del manifest
    return warnings


def select(
    records: list[EmbeddingRecord],
    split: str | None = None,
    conditions: tuple[str, ...] | None = None,
) -> list[EmbeddingRecord]:
    out = records
    if split is not None:
        out = [r for r in out if r.split == split]
    if conditions is not None:
        out = [r for r in out if r.condition in conditions]
    return out


def binary_view(
    records: list[EmbeddingRecord], mode: str = "fit-vs-unfit"
) -> tuple[np.ndarray, np.ndarray]:
    """Stack vectors and map conditions to binary labels (fit=1, unfit=0)."""
    if mode != "fit-vs-unfit":
        raise InvalidParameterError(f"unknown binary mode {mode!r}")
    if not records:
        return np.empty((0, 0), dtype=np.float64), np.empty(0, dtype=np.int64)
    X = np.stack([np.asarray(r.vector, dtype=np.float64) for r in records])
    y = np.array([1 if r.condition == "control" else 0 for r in records], dtype=np.int64)
    return X, y


def synth_corpus(
    n_per_condition: int,
    dim: int,
    separation: float,
    seed: int,
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    condition_means: dict | None = None,
) -> list[EmbeddingRecord]:
    """Gaussian-cluster surrogate corpus, deterministic for a fixed seed.

    Each condition is an isotropic unit-variance Gaussian. By default the
    control cluster sits at the origin and the three unfit conditions share a
    mean at distance ``separation`` along the first axis, so ``separation``
    directly controls fit/unfit class overlap. ``condition_means`` overrides
    individual cluster centers (vectors of length ``dim``).

    Synthetic subjects contribute two records each (left + right eye) and are
    assigned whole to one split, keeping splits subject-disjoint.
    """
    if n_per_condition < 1:
        raise InvalidParameterError("n_per_condition must be >= 1")
    if dim < 2:
        raise InvalidParameterError("dim must be >= 2")
    if separation < 0:
        raise InvalidParameterError("separation must be >= 0")
    if len(split_fractions) != 3 or abs(sum(split_fractions) - 1.0) > 1e-9:
        raise InvalidParameterError("split_fractions must be three values summing to 1")

    means = {cond: np.zeros(dim) for cond in CONDITIONS}
    for cond in UNFIT_CONDITIONS:
        means[cond] = np.zeros(dim)
        means[cond][0] = separation
    if condition_means:
        for cond, mean in condition_means.items():
            if cond not in CONDITIONS:
                raise InvalidParameterError(f"unknown condition {cond!r}")
            mean = np.asarray(mean, dtype=np.float64)
            if mean.shape != (dim,):
                raise InvalidParameterError(
                    f"mean for {cond!r} has shape {mean.shape}, expected ({dim},)"
                )
            means[cond] = mean

    rng = np.random.default_rng(seed)
    records = []
    for cond in CONDITIONS:
        vectors = rng.normal(0.0, 1.0, size=(n_per_condition, dim)) + means[cond]
        n_subjects = (n_per_condition + 1) // 2
        n_train_subj = int(round(n_subjects * split_fractions[0]))
        n_val_subj = int(round(n_subjects * split_fractions[1]))
        for i in range(n_per_condition):
            subject_index = i // 2
            if subject_index < n_train_subj:
                split = "train"
            elif subject_index < n_train_subj + n_val_subj:
                split = "val"
            else:
                split = "test"
            records.append(
                EmbeddingRecord(
                    record_id=f"{cond}-{i:05d}",
                    subject_id=f"{cond}-subj-{subject_index:04d}",
                    eye=EYES[i % 2],
                    condition=cond,
                    split=split,
                    vector=vectors[i].astype("<f4"),
                )
            )
    return records
