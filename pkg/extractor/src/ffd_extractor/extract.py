"""Image -> embedding-corpus extraction pipeline.

Consumes a metadata CSV (``path,subject_id,eye,condition,split``) plus the
image files it names, runs them through a frozen backbone, and writes the
corpus file pair consumed by the evaluation toolkit:

  <base>.manifest.json   dimensionality, labels, split assignment, provenance
  <base>.embeddings.bin  float32 little-endian, row-major, manifest order

The file pair is the entire interface contract; nothing from the evaluation
package is imported here.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .backbones import BackboneSpec, embed_batch, load_backbone

log = logging.getLogger("ffd_extractor")

CORPUS_FORMAT_TAG = "ffdkit-corpus-v1"
CONDITIONS = ("control", "alcohol", "drug", "sleep")
SPLITS = ("train", "val", "test")
EYES = ("left", "right")
TARGET_SIZE = 224
METADATA_COLUMNS = ("path", "subject_id", "eye", "condition", "split")


class MetadataError(ValueError):
    pass


@dataclass
class ImageRow:
    path: Path
    subject_id: str
    eye: str
    condition: str
    split: str


@dataclass
class ExtractionResult:
    out_base: Path
    n_embedded: int
    dim: int
    skipped: list = field(default_factory=list)  # (path, reason)


def read_metadata(csv_path: str | Path, images_root: str | Path | None = None) -> list[ImageRow]:
    csv_path = Path(csv_path)
    root = Path(images_root) if images_root else csv_path.parent
    rows = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != METADATA_COLUMNS:
            raise MetadataError(
                f"metadata header must be {','.join(METADATA_COLUMNS)}, "
                f"got {reader.fieldnames}"
            )
        for i, row in enumerate(reader):
            if row["condition"] not in CONDITIONS:
                raise MetadataError(f"row {i}: unknown condition {row['condition']!r}")
            if row["split"] not in SPLITS:
                raise MetadataError(f"row {i}: unknown split {row['split']!r}")
            if row["eye"] not in EYES:
                raise MetadataError(f"row {i}: unknown eye {row['eye']!r}")
            path = Path(row["path"])
            if not path.is_absolute():
                path = root / path
            rows.append(
                ImageRow(
                    path=path,
                    subject_id=row["subject_id"],
                    eye=row["eye"],
                    condition=row["condition"],
                    split=row["split"],
                )
            )
    if not rows:
        raise MetadataError(f"no rows in {csv_path}")
    return rows


def preprocess_for_backbone(path: str | Path, spec: BackboneSpec) -> torch.Tensor:
    """Decode, resize to 224x224 bilinear, replicate gray to 3 channels, normalize.

    Returns a (3, 224, 224) float32 tensor ready for the backbone.
    """
    with Image.open(path) as img:
        gray = img.convert("L").resize((TARGET_SIZE, TARGET_SIZE), Image.BILINEAR)
    plane = np.asarray(gray, dtype=np.float32) / 255.0
    stacked = np.repeat(plane[None, :, :], 3, axis=0)
    mean, std = spec.normalization
    mean = np.asarray(mean, dtype=np.float32)[:, None, None]
    std = np.asarray(std, dtype=np.float32)[:, None, None]
    return torch.from_numpy((stacked - mean) / std)


def extract(
    metadata_csv: str | Path,
    spec: BackboneSpec,
    out_base: str | Path,
    batch_size: int = 8,
    device: str = "cpu",
    images_root: str | Path | None = None,
    corpus_name: str | None = None,
) -> ExtractionResult:
    """Embed every readable image and write the corpus file pair.

    Undecodable images are skipped with a log line and reported in the result;
    the CLI turns a nonempty skip list into a nonzero exit.
    """
    rows = read_metadata(metadata_csv, images_root)
    model = load_backbone(spec, device=device)

    kept_rows: list[ImageRow] = []
    tensors: list[torch.Tensor] = []
    skipped: list[tuple[str, str]] = []
    for row in rows:
        try:
            tensors.append(preprocess_for_backbone(row.path, spec))
            kept_rows.append(row)
        except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
            log.warning("skipping %s: %s", row.path, exc)
            skipped.append((str(row.path), str(exc)))
    if not kept_rows:
        raise MetadataError("no decodable images; nothing to extract")

    chunks = []
    for start in range(0, len(tensors), batch_size):
        batch = torch.stack(tensors[start : start + batch_size]).to(device)
        chunks.append(embed_batch(model, batch).cpu().numpy())
    matrix = np.concatenate(chunks).astype("<f4")
    assert matrix.shape == (len(kept_rows), spec.output_dim)

    out_base = Path(out_base)
    _write_corpus(kept_rows, matrix, out_base, spec, corpus_name)
    return ExtractionResult(
        out_base=out_base, n_embedded=len(kept_rows), dim=spec.output_dim, skipped=skipped
    )


def _write_corpus(
    rows: list[ImageRow],
    matrix: np.ndarray,
    out_base: Path,
    spec: BackboneSpec,
    corpus_name: str | None,
) -> None:
    records = []
    counts = {split: {cond: 0 for cond in CONDITIONS} for split in SPLITS}
    for i, row in enumerate(rows):
        records.append(
            {
                "record_id": f"{i:05d}-{row.path.stem}",
                "subject_id": row.subject_id,
                "eye": row.eye,
                "condition": row.condition,
                "split": row.split,
            }
        )
        counts[row.split][row.condition] += 1
    manifest = {
        "format": CORPUS_FORMAT_TAG,
        "name": corpus_name or out_base.name,
        "dim": int(matrix.shape[1]),
        "dtype": "float32-le",
        "backbone_tag": spec.corpus_tag(),
        "counts": counts,
        "records": records,
    }
    out_base.parent.mkdir(parents=True, exist_ok=True)
    blob_path = out_base.with_name(out_base.name + ".embeddings.bin")
    manifest_path = out_base.with_name(out_base.name + ".manifest.json")
    blob_path.write_bytes(matrix.tobytes())
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
