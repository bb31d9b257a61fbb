"""Experiment protocols over an embedding corpus.

Three designs are supported: zero-shot evaluation of frozen embeddings
(parameter-free centroid scoring and a minimal affine probe, reported
separately), fine-tuning of the classification head, and the leave-one-out
rotation that holds each unfit condition out of training in turn.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import embedstore, head as head_mod, metrics
from .embedstore import EmbeddingRecord, UNFIT_CONDITIONS, binary_view, select
from .errors import (
    DegenerateLabelsError,
    InvalidParameterError,
    LeakageError,
    MissingConditionError,
)
from .head import TrainConfig

MODES = ("zero-shot-centroid", "zero-shot-probe", "zero-shot", "fine-tune", "loo")

SUMMARY_COLUMNS = ("experiment", "eer", "fnr10", "fnr20", "fnr100", "acc")
SUMMARY_CSV_HEADER = ",".join(SUMMARY_COLUMNS)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    corpus: str
    out_dir: str
    seed: int = 7
    depth: int = 3  # hidden layers in the fine-tune head
    threshold: float = 0.5  # fixed decision threshold for confusion metrics
    grid_search: bool = False
    svg: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidParameterError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        # all protocol randomness flows from the experiment seed
        object.__setattr__(self, "train", replace(self.train, seed=self.seed))

    def provenance(self) -> dict:
        resolved = asdict(self)
        return {"tool": "ffdkit-0.1.0", "seed": self.seed, "config": resolved}


def load_experiment_config(
    path: str | Path, train_overrides: dict | None = None, **overrides
) -> ExperimentConfig:
    """Experiment config from a JSON file, with CLI overrides applied on top."""
    raw = json.loads(Path(path).read_text())
    train_raw = raw.pop("train", {})
    train_raw.update({k: v for k, v in (train_overrides or {}).items() if v is not None})
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(train=TrainConfig(**train_raw), **raw)


@dataclass
class CentroidScorer:
    """Parameter-free fit/unfit scorer: difference of distances to class means."""

    mu_fit: np.ndarray = field(repr=False)
    mu_unfit: np.ndarray = field(repr=False)

    trainable_parameter_count = 0

    def score(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        d_fit = np.linalg.norm(X - self.mu_fit, axis=1)
        d_unfit = np.linalg.norm(X - self.mu_unfit, axis=1)
        return d_unfit - d_fit  # larger = farther from unfit = more fit


def fit_centroids(records: list[EmbeddingRecord]) -> CentroidScorer:
    X, y = binary_view(records)
    if not ((y == 1).any() and (y == 0).any()):
        raise DegenerateLabelsError("centroid scorer needs both classes in the train split")
    return CentroidScorer(mu_fit=X[y == 1].mean(axis=0), mu_unfit=X[y == 0].mean(axis=0))


def _score_set(scores: np.ndarray, labels: np.ndarray) -> metrics.ScoreSet:
    return metrics.ScoreSet(scores=scores, labels=labels)


def _split_arrays(records, split, conditions=None):
    subset = select(records, split=split, conditions=conditions)
    return binary_view(subset)


def run_zero_shot(
    records: list[EmbeddingRecord], cfg: ExperimentConfig, submode: str
) -> metrics.EvalReport:
    """Evaluate frozen embeddings on the test split without touching the backbone.

    ``centroid`` scores by distance to train-split class means and has zero
    trainable parameters; ``probe`` trains a single affine layer + sigmoid.
    """
    X_train, y_train = _split_arrays(records, "train")
    X_test, y_test = _split_arrays(records, "test")
    if submode == "centroid":
        scorer = fit_centroids(select(records, split="train"))
        assert scorer.trainable_parameter_count == 0
        scores = scorer.score(X_test)
    elif submode == "probe":
        X_val, y_val = _split_arrays(records, "val")
        probe = head_mod.init_head(X_train.shape[1], hidden_dims=(), seed=cfg.seed)
        result = head_mod.train(probe, X_train, y_train, X_val, y_val, cfg.train)
        scores = head_mod.predict(result.head, X_test)
    else:
        raise InvalidParameterError(f"unknown zero-shot submode {submode!r}")
    name = f"zero-shot-{submode}"
    provenance = cfg.provenance() | {"experiment": name}
    return metrics.emit_report(
        _score_set(scores, y_test),
        cfg.out_dir,
        name=name,
        threshold=cfg.threshold,
        provenance=provenance,
        svg=cfg.svg,
    )


def run_fine_tune(
    records: list[EmbeddingRecord], cfg: ExperimentConfig
) -> tuple[metrics.EvalReport, Path]:
    """Train the head on frozen embeddings, evaluate on test, save the model."""
    X_train, y_train = _split_arrays(records, "train")
    X_val, y_val = _split_arrays(records, "val")
    X_test, y_test = _split_arrays(records, "test")
    if cfg.grid_search:
        grid = head_mod.grid_search(X_train, y_train, X_val, y_val, cfg.train)
        result = grid.best.result
        selection = {
            "grid": [
                {"depth": c.depth, "lr": c.lr, "val_eer": c.val_eer} for c in grid.cells
            ],
            "selected": {"depth": grid.best.depth, "lr": grid.best.lr},
        }
    else:
        hidden = head_mod.hidden_dims_for_depth(cfg.depth)
        h0 = head_mod.init_head(X_train.shape[1], hidden_dims=hidden, seed=cfg.seed)
        result = head_mod.train(h0, X_train, y_train, X_val, y_val, cfg.train)
        selection = {"selected": {"depth": cfg.depth, "lr": cfg.train.lr}}
    scores = head_mod.predict(result.head, X_test)
    provenance = cfg.provenance() | {
        "experiment": "fine-tune",
        "selection": selection,
        "best_epoch": result.best_epoch,
        "best_val_eer": result.best_val_eer,
        "final_val_eer": result.final_val_eer,
    }
    report = metrics.emit_report(
        _score_set(scores, y_test),
        cfg.out_dir,
        name="fine-tune",
        threshold=cfg.threshold,
        provenance=provenance,
        svg=cfg.svg,
    )
    model_path = Path(cfg.out_dir) / "fine-tune.model.ffd"
    head_mod.save_head(result.head, model_path, meta=provenance)
    return report, model_path


@dataclass(frozen=True)
class LooRotation:
    held_out: str
    train_conditions: tuple
    test_conditions: tuple


def loo_rotations() -> list[LooRotation]:
    """The three rotations; each unfit condition is held out exactly once."""
    rotations = []
    for held_out in UNFIT_CONDITIONS:
        kept = tuple(c for c in UNFIT_CONDITIONS if c != held_out)
        rotations.append(
            LooRotation(
                held_out=held_out,
                train_conditions=("control",) + kept,
                test_conditions=("control", held_out),
            )
        )
    return rotations


@dataclass
class LooRotationOutcome:
    rotation: LooRotation
    report: metrics.EvalReport
    leakage_checks: int  # records inspected by the guard; any hit raises


@dataclass
class LooOutcome:
    rotations: list
    summary_rows: list


def _guard_no_leakage(
    train_records: list[EmbeddingRecord], held_out: str, held_out_ids: set
) -> int:
    """Hard assertion that the held-out condition never reaches training."""
    checked = 0
    for rec in train_records:
        checked += 1
        if rec.condition == held_out or rec.record_id in held_out_ids:
            raise LeakageError(
                f"record {rec.record_id!r} ({rec.condition}) leaked into training "
                f"with held_out={held_out}"
            )
    return checked


def run_loo(records: list[EmbeddingRecord], cfg: ExperimentConfig) -> LooOutcome:
    """Run all three leave-one-out rotations and summarize them.

    Each rotation trains a fresh head on control plus the two retained unfit
    conditions and is tested on control (test split) against every record of
    the held-out condition, which is wholly unseen during training.
    """
    present = {rec.condition for rec in records}
    for cond in embedstore.CONDITIONS:
        if cond not in present:
            raise MissingConditionError(f"corpus lacks condition {cond!r}")
    outcomes = []
    for idx, rotation in enumerate(loo_rotations()):
        rot_seed = cfg.seed + 499 * idx
        train_records = select(records, split="train", conditions=rotation.train_conditions)
        val_records = select(records, split="val", conditions=rotation.train_conditions)
        held_out_records = select(records, conditions=(rotation.held_out,))
        held_out_ids = {rec.record_id for rec in held_out_records}
        checks = _guard_no_leakage(train_records, rotation.held_out, held_out_ids)
        checks += _guard_no_leakage(val_records, rotation.held_out, held_out_ids)

        X_train, y_train = binary_view(train_records)
        X_val, y_val = binary_view(val_records)
        test_records = select(records, split="test", conditions=("control",)) + held_out_records
        X_test, y_test = binary_view(test_records)

        hidden = head_mod.hidden_dims_for_depth(cfg.depth)
        h0 = head_mod.init_head(X_train.shape[1], hidden_dims=hidden, seed=rot_seed)
        rot_cfg = replace(cfg.train, seed=rot_seed)
        result = head_mod.train(h0, X_train, y_train, X_val, y_val, rot_cfg)
        scores = head_mod.predict(result.head, X_test)
        name = f"loo-{rotation.held_out}"
        provenance = cfg.provenance() | {
            "experiment": name,
            "held_out": rotation.held_out,
            "train_conditions": list(rotation.train_conditions),
            "test_composition": "control test split + all held-out-condition records",
            "leakage_checks": checks,
            "rotation_seed": rot_seed,
        }
        report = metrics.emit_report(
            _score_set(scores, y_test),
            cfg.out_dir,
            name=name,
            threshold=cfg.threshold,
            provenance=provenance,
            svg=cfg.svg,
        )
        outcomes.append(LooRotationOutcome(rotation=rotation, report=report, leakage_checks=checks))
    rows = summarize([(f"loo-{o.rotation.held_out}", o.report) for o in outcomes])
    return LooOutcome(rotations=outcomes, summary_rows=rows)


def summarize(named_reports: list) -> list:
    """One row per report with the benchmark-table columns: EER, FNR at the
    10%/5%/1% FPR operating points, and accuracy.

    The ACC column is taken at the EER threshold, which is meaningful for any
    score scale (centroid scores are not probabilities); the per-report JSON
    additionally carries the fixed-threshold confusion metrics.
    """
    if not named_reports:
        raise InvalidParameterError("nothing to summarize")
    rows = []
    for name, report in named_reports:
        rows.append(
            {
                "experiment": name,
                "eer": report.eer,
                "fnr10": report.fnr_at[0.10],
                "fnr20": report.fnr_at[0.05],
                "fnr100": report.fnr_at[0.01],
                "acc": report.confusion_at_eer.accuracy,
            }
        )
    return rows


def summary_csv_lines(rows: list, provenance: dict | None = None) -> list:
    lines = []
    if provenance:
        lines.append("# " + json.dumps(provenance, sort_keys=True))
    lines.append(SUMMARY_CSV_HEADER)
    for row in rows:
        cells = [row["experiment"]]
        for col in SUMMARY_COLUMNS[1:]:
            cells.append(f"{row[col]:.12g}")
        lines.append(",".join(cells))
    return lines


def summary_text(rows: list) -> str:
    widths = {col: max(len(col), *(len(f"{row[col]:.4f}" if col != "experiment" else row[col]) for row in rows)) for col in SUMMARY_COLUMNS}
    header = "  ".join(col.upper().ljust(widths[col]) for col in SUMMARY_COLUMNS)
    lines = [header]
    for row in rows:
        cells = [row["experiment"].ljust(widths["experiment"])]
        for col in SUMMARY_COLUMNS[1:]:
            cells.append(f"{row[col]:.4f}".ljust(widths[col]))
        lines.append("  ".join(cells))
    return "\n".join(lines)


@dataclass
class ProtocolOutcome:
    mode: str
    reports: list  # (name, EvalReport)
    summary_rows: list
    loo: LooOutcome | None = None
    model_path: Path | None = None


def execute(cfg: ExperimentConfig) -> ProtocolOutcome:
    """Load the corpus, run the configured protocol, write reports + summary."""
    _, records = embedstore.read_corpus(cfg.corpus)
    named = []
    loo_outcome = None
    model_path = None
    if cfg.mode in ("zero-shot", "zero-shot-centroid", "zero-shot-probe"):
        submodes = ("centroid", "probe") if cfg.mode == "zero-shot" else (cfg.mode.split("-")[-1],)
        for submode in submodes:
            named.append((f"zero-shot-{submode}", run_zero_shot(records, cfg, submode)))
    elif cfg.mode == "fine-tune":
        report, model_path = run_fine_tune(records, cfg)
        named.append(("fine-tune", report))
    elif cfg.mode == "loo":
        loo_outcome = run_loo(records, cfg)
        named = [(f"loo-{o.rotation.held_out}", o.report) for o in loo_outcome.rotations]
    rows = summarize(named)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = summary_csv_lines(rows, provenance=cfg.provenance())
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    (out / "summary.txt").write_text(summary_text(rows) + "\n")
    return ProtocolOutcome(
        mode=cfg.mode, reports=named, summary_rows=rows, loo=loo_outcome, model_path=model_path
    )
