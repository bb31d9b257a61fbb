"""Score-based evaluation: DET curves, EER, fixed-FPR operating points, confusion metrics.

Orientation: fit is the positive class (label 1) and a sample is accepted as
fit when its score clears the threshold. FPR is therefore the rate of unfit
samples accepted as fit, the safety-critical error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DegenerateLabelsError, InvalidInputError

# Operating points: FNR@10 / FNR@20 / FNR@100 correspond to FPR fixed at
# 1/10, 1/20 and 1/100.
OPERATING_POINTS = (0.10, 0.05, 0.01)

DET_CSV_HEADER = "threshold,fpr,fnr"


@dataclass(frozen=True)
class ScoreSet:
    """Paired (score, binary label) collection; labels are 1=fit, 0=unfit."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels)
        if scores.ndim != 1 or labels.shape != scores.shape:
            raise InvalidInputError(
                f"scores/labels must be equal-length 1-D arrays, got {scores.shape} vs {labels.shape}"
            )
        if scores.size == 0:
            raise InvalidInputError("empty score set")
        if not np.all(np.isfinite(scores)):
            raise InvalidInputError("scores must be finite")
        if not np.all(np.isin(labels, (0, 1))):
            raise InvalidInputError("labels must be 0 or 1")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def n_pos(self) -> int:
        return int(np.sum(self.labels == 1))

    @property
    def n_neg(self) -> int:
        return int(np.sum(self.labels == 0))


@dataclass(frozen=True)
class DetCurve:
    """Empirical (FPR, FNR) at every distinct threshold, plus a reject-all sentinel.

    Thresholds ascend; the decision rule is "accept as fit iff score >= t",
    so FPR is nonincreasing and FNR nondecreasing along the sweep. The final
    point has threshold +inf and rates (0, 1).
    """

    thresholds: np.ndarray = field(repr=False)
    fpr: np.ndarray = field(repr=False)
    fnr: np.ndarray = field(repr=False)
    n_pos: int = 0
    n_neg: int = 0

    def points(self) -> list[tuple[float, float, float]]:
        return [
            (float(t), float(p), float(n))
            for t, p, n in zip(self.thresholds, self.fpr, self.fnr)
        ]


def det_curve(s: ScoreSet) -> DetCurve:
    """Exhaustive threshold sweep over all distinct score values."""
    if s.n_pos == 0 or s.n_neg == 0:
        raise DegenerateLabelsError(
            f"need both classes for threshold metrics (pos={s.n_pos}, neg={s.n_neg})"
        )
    pos = np.sort(s.scores[s.labels == 1])
    neg = np.sort(s.scores[s.labels == 0])
    thresholds = np.unique(s.scores)
    # accepted iff score >= t: misses are pos < t, false accepts are neg >= t
    fnr = np.searchsorted(pos, thresholds, side="left") / pos.size
    fpr = (neg.size - np.searchsorted(neg, thresholds, side="left")) / neg.size
    thresholds = np.append(thresholds, np.inf)
    fnr = np.append(fnr, 1.0)
    fpr = np.append(fpr, 0.0)
    return DetCurve(
        thresholds=thresholds, fpr=fpr, fnr=fnr, n_pos=pos.size, n_neg=neg.size
    )


def eer(curve: DetCurve) -> tuple[float, float]:
    """Equal error rate and its threshold.

    (FNR - FPR) is nondecreasing along the sweep; the EER is taken at the
    first exact zero, or linearly interpolated across the sign change.
    """
    diff = curve.fnr - curve.fpr
    exact = np.flatnonzero(diff == 0.0)
    if exact.size:
        i = int(exact[0])
        return float(curve.fpr[i]), float(curve.thresholds[i])
    i = int(np.flatnonzero(diff > 0.0)[0])  # sentinel guarantees a positive tail
    a, b = i - 1, i
    alpha = -diff[a] / (diff[b] - diff[a])
    rate = curve.fpr[a] + alpha * (curve.fpr[b] - curve.fpr[a])
    if math.isinf(curve.thresholds[b]):
        threshold = math.inf  # crossing lies beyond the largest score
    else:
        threshold = curve.thresholds[a] + alpha * (curve.thresholds[b] - curve.thresholds[a])
    return float(rate), float(threshold)


class FnrAtFpr(NamedTuple):
    value: float
    attainable: bool


def fnr_at_fpr(curve: DetCurve, fpr_target: float) -> FnrAtFpr:
    """Smallest FNR among sweep points with FPR <= target (staircase convention).

    Returns value 1.0 and attainable=False if no sweep point satisfies the
    constraint (cannot happen on curves carrying the reject-all sentinel).
    """
    if not (0.0 < fpr_target < 1.0):
        raise InvalidInputError(f"fpr target must lie in (0,1), got {fpr_target}")
    ok = curve.fpr <= fpr_target
    if not ok.any():
        return FnrAtFpr(1.0, False)
    return FnrAtFpr(float(curve.fnr[ok].min()), True)


@dataclass(frozen=True)
class ConfusionMetrics:
    """Counts and derived rates at one threshold; undefined rates are NaN."""

    threshold: float
    tp: int
    fn: int
    tn: int
    fp: int
    sensitivity: float
    specificity: float
    precision: float
    f1: float
    accuracy: float


def _ratio(num: int, den: int) -> float:
    return num / den if den > 0 else math.nan


def confusion_metrics(s: ScoreSet, threshold: float) -> ConfusionMetrics:
    """Standard confusion-matrix metrics with fit as the positive class."""
    predicted_fit = s.scores >= threshold
    actual_fit = s.labels == 1
    tp = int(np.sum(predicted_fit & actual_fit))
    fn = int(np.sum(~predicted_fit & actual_fit))
    tn = int(np.sum(~predicted_fit & ~actual_fit))
    fp = int(np.sum(predicted_fit & ~actual_fit))
    sensitivity = _ratio(tp, tp + fn)
    specificity = _ratio(tn, tn + fp)
    precision = _ratio(tp, tp + fp)
    if math.isnan(precision) or math.isnan(sensitivity) or precision + sensitivity == 0:
        f1 = math.nan
    else:
        f1 = 2 * precision * sensitivity / (precision + sensitivity)
    accuracy = _ratio(tp + tn, tp + fn + tn + fp)
    return ConfusionMetrics(
        threshold=float(threshold),
        tp=tp,
        fn=fn,
        tn=tn,
        fp=fp,
        sensitivity=sensitivity,
        specificity=specificity,
        precision=precision,
        f1=f1,
        accuracy=accuracy,
    )


@dataclass(frozen=True)
class EvalReport:
    """Everything the reporter serializes for one evaluated score set."""

    eer: float
    eer_threshold: float
    fnr_at: dict  # fpr target -> fnr
    fnr_at_attainable: dict
    det: DetCurve
    confusion: ConfusionMetrics  # at the configured fixed threshold
    confusion_at_eer: ConfusionMetrics
    threshold: float
    n_pos: int
    n_neg: int
    provenance: dict


def build_report(
    s: ScoreSet, threshold: float = 0.5, provenance: dict | None = None
) -> EvalReport:
    """Pure computation of the full report; no files touched."""
    curve = det_curve(s)
    eer_value, eer_thr = eer(curve)
    fnr_at = {}
    attainable = {}
    for target in OPERATING_POINTS:
        point = fnr_at_fpr(curve, target)
        fnr_at[target] = point.value
        attainable[target] = point.attainable
    conf_fixed = confusion_metrics(s, threshold)
    # An infinite EER threshold means reject-all; evaluate just above the top score.
    conf_eer_thr = eer_thr if math.isfinite(eer_thr) else float(s.scores.max()) + 1.0
    conf_eer = confusion_metrics(s, conf_eer_thr)
    return EvalReport(
        eer=eer_value,
        eer_threshold=eer_thr,
        fnr_at=fnr_at,
        fnr_at_attainable=attainable,
        det=curve,
        confusion=conf_fixed,
        confusion_at_eer=conf_eer,
        threshold=float(threshold),
        n_pos=curve.n_pos,
        n_neg=curve.n_neg,
        provenance=dict(provenance or {}),
    )


def _confusion_dict(c: ConfusionMetrics) -> dict:
    return {
        "threshold": c.threshold,
        "tp": c.tp,
        "fn": c.fn,
        "tn": c.tn,
        "fp": c.fp,
        "sensitivity": _json_float(c.sensitivity),
        "specificity": _json_float(c.specificity),
        "precision": _json_float(c.precision),
        "f1": _json_float(c.f1),
        "accuracy": _json_float(c.accuracy),
    }


def _json_float(x: float):
    # NaN marks an undefined metric; JSON has no NaN literal.
    return None if isinstance(x, float) and math.isnan(x) else x


def report_to_dict(report: EvalReport) -> dict:
    return {
        "eer": report.eer,
        "eer_threshold": _fmt_threshold(report.eer_threshold),
        "fnr_at": {f"fpr_{int(round(t * 100))}pct": v for t, v in report.fnr_at.items()},
        "fnr_at_attainable": {
            f"fpr_{int(round(t * 100))}pct": v for t, v in report.fnr_at_attainable.items()
        },
        "confusion_fixed_threshold": _confusion_dict(report.confusion),
        "confusion_eer_threshold": _confusion_dict(report.confusion_at_eer),
        "n_pos": report.n_pos,
        "n_neg": report.n_neg,
        "provenance": report.provenance,
    }


def _fmt_threshold(t: float):
    return "inf" if math.isinf(t) else t


def det_to_csv_lines(curve: DetCurve, provenance: dict | None = None) -> list[str]:
    lines = []
    if provenance:
        lines.append("# " + json.dumps(provenance, sort_keys=True))
    lines.append(DET_CSV_HEADER)
    for t, p, n in curve.points():
        lines.append(f"{t:.12g},{p:.12g},{n:.12g}")
    return lines


def read_det_csv(path: str | Path) -> DetCurve:
    """Parse a DET CSV back into a curve (provenance comment lines ignored)."""
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#") or line == DET_CSV_HEADER:
            continue
        t, p, n = line.split(",")
        rows.append((float(t), float(p), float(n)))
    if not rows:
        raise InvalidInputError(f"no DET points in {path}")
    arr = np.array(rows, dtype=np.float64)
    return DetCurve(thresholds=arr[:, 0], fpr=arr[:, 1], fnr=arr[:, 2])


def write_det_svg(curve: DetCurve, path: str | Path, title: str = "DET curve",
                  provenance: dict | None = None) -> None:
    """Render the DET curve on probit-warped axes. Cosmetic; the CSV is canonical."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from scipy.stats import norm

    eps = 1e-6
    fpr = np.clip(curve.fpr, eps, 1 - eps)
    fnr = np.clip(curve.fnr, eps, 1 - eps)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(norm.ppf(fpr), norm.ppf(fnr), lw=1.5)
    ticks = np.array([0.001, 0.01, 0.05, 0.1, 0.2, 0.4])
    tick_pos = norm.ppf(ticks)
    tick_labels = [f"{100 * t:g}" for t in ticks]
    for axis_set, axis_label in ((ax.set_xticks, ax.set_xticklabels), (ax.set_yticks, ax.set_yticklabels)):
        axis_set(tick_pos)
        axis_label(tick_labels)
    ax.set_xlim(norm.ppf(0.001), norm.ppf(0.6))
    ax.set_ylim(norm.ppf(0.001), norm.ppf(0.6))
    ax.set_xlabel("FPR (%)")
    ax.set_ylabel("FNR (%)")
    ax.set_title(title)
    ax.grid(True, alpha=0.4)
    metadata = {"Description": json.dumps(provenance or {}, sort_keys=True)}
    fig.savefig(str(path), format="svg", metadata=metadata)
    plt.close(fig)


def emit_report(
    s: ScoreSet,
    out_dir: str | Path,
    name: str = "eval",
    threshold: float = 0.5,
    provenance: dict | None = None,
    svg: bool = True,
) -> EvalReport:
    """Build the report and write <name>.report.json / <name>.det.csv (+ .det.svg).

    Deterministic and idempotent: re-emitting from the same inputs rewrites
    byte-identical JSON and CSV.
    """
    report = build_report(s, threshold=threshold, provenance=provenance)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.report.json").write_text(
            json.dumps(report_to_dict(report), indent=2) + "\n"
        )
        csv_lines = det_to_csv_lines(report.det, provenance=report.provenance)
        (out / f"{name}.det.csv").write_text("\n".join(csv_lines) + "\n")
        if svg:
            write_det_svg(
                report.det, out / f"{name}.det.svg", title=name, provenance=report.provenance
            )
    except OSError as exc:
        raise OSError(f"cannot write report under {out}: {exc}") from exc
    return report
