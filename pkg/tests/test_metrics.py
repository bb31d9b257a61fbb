import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffdkit import metrics
from ffdkit.errors import DegenerateLabelsError, InvalidInputError
from ffdkit.metrics import ScoreSet, confusion_metrics, det_curve, eer, fnr_at_fpr


def make_set(pos, neg):
    scores = np.array(list(pos) + list(neg), dtype=float)
    labels = np.array([1] * len(pos) + [0] * len(neg))
    return ScoreSet(scores=scores, labels=labels)


# ---------------------------------------------------------------- oracles


def brute_rates(s: ScoreSet, t: float):
    pos = s.scores[s.labels == 1]
    neg = s.scores[s.labels == 0]
    return float(np.mean(neg >= t)), float(np.mean(pos < t))


def brute_fnr_at(s: ScoreSet, target: float) -> float:
    """Exhaustive enumeration over every sample value plus a reject-all threshold."""
    candidates = list(np.unique(s.scores)) + [float(np.max(s.scores)) + 1.0]
    feasible = [brute_rates(s, t)[1] for t in candidates if brute_rates(s, t)[0] <= target]
    return min(feasible) if feasible else 1.0


def dense_sweep_eer(s: ScoreSet, steps: int = 10_000) -> float:
    lo = s.scores.min() - 1e-9
    hi = s.scores.max() + 1e-9
    ts = np.linspace(lo, hi, steps)
    pos = np.sort(s.scores[s.labels == 1])
    neg = np.sort(s.scores[s.labels == 0])
    fnr = np.searchsorted(pos, ts, side="left") / pos.size
    fpr = (neg.size - np.searchsorted(neg, ts, side="left")) / neg.size
    i = int(np.argmin(np.abs(fnr - fpr)))
    return float((fnr[i] + fpr[i]) / 2.0)


def point_set(curve):
    return sorted((round(p, 12), round(n, 12)) for _, p, n in curve.points())


# --------------------------------------------------------------- strategies

score_grid = st.sampled_from([round(0.1 * k, 1) for k in range(-10, 11)])


@st.composite
def score_sets(draw, max_n: int = 12):
    n = draw(st.integers(min_value=2, max_value=max_n))
    labels = draw(
        st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(
            lambda ls: 0 in ls and 1 in ls
        )
    )
    scores = draw(st.lists(score_grid, min_size=n, max_size=n))
    return make_set(
        [x for x, l in zip(scores, labels) if l == 1],
        [x for x, l in zip(scores, labels) if l == 0],
    )


# ------------------------------------------------------------------- tests


class TestDetCurve:
    def test_perfect_separation_contains_origin(self):
        curve = det_curve(make_set([0.9, 0.8], [0.1, 0.2]))
        assert (0.0, 0.0) in {(p, n) for _, p, n in curve.points()}

    def test_identical_multisets_give_chance_eer(self):
        s = make_set([0.1, 0.5, 0.9], [0.1, 0.5, 0.9])
        assert eer(det_curve(s))[0] == pytest.approx(0.5)

    def test_three_vs_three_matches_hand_enumeration(self):
        curve = det_curve(make_set([0.8, 0.6, 0.4], [0.7, 0.5, 0.3]))
        expected = [
            (0.3, 1.0, 0.0),
            (0.4, 2 / 3, 0.0),
            (0.5, 2 / 3, 1 / 3),
            (0.6, 1 / 3, 1 / 3),
            (0.7, 1 / 3, 2 / 3),
            (0.8, 0.0, 2 / 3),
            (math.inf, 0.0, 1.0),
        ]
        assert curve.points() == pytest.approx(expected)

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateLabelsError):
            det_curve(ScoreSet(scores=np.array([0.1, 0.2]), labels=np.array([1, 1])))

    def test_endpoints_present(self):
        curve = det_curve(make_set([0.6, 0.2], [0.5, 0.1]))
        pts = {(p, n) for _, p, n in curve.points()}
        assert (1.0, 0.0) in pts  # accept-everything end
        assert (0.0, 1.0) in pts  # reject-everything sentinel

    @given(score_sets())
    @settings(max_examples=200)
    def test_staircase_monotonicity(self, s):
        curve = det_curve(s)
        assert np.all(np.diff(curve.fpr) <= 0)
        assert np.all(np.diff(curve.fnr) >= 0)
        assert np.all((curve.fpr >= 0) & (curve.fpr <= 1))
        assert np.all((curve.fnr >= 0) & (curve.fnr <= 1))


class TestEer:
    def test_perfect_separation(self):
        assert eer(det_curve(make_set([0.9, 0.8], [0.1, 0.2])))[0] == 0.0

    def test_three_vs_three_exact_crossing(self):
        value, threshold = eer(det_curve(make_set([0.8, 0.6, 0.4], [0.7, 0.5, 0.3])))
        assert value == pytest.approx(1 / 3)
        assert threshold == pytest.approx(0.6)

    @given(score_sets())
    @settings(max_examples=200)
    def test_matches_dense_sweep_within_one_step(self, s):
        value, _ = eer(det_curve(s))
        step = max(1.0 / s.n_pos, 1.0 / s.n_neg)
        assert abs(value - dense_sweep_eer(s)) <= step + 1e-12
        assert 0.0 <= value <= 1.0


class TestFnrAtFpr:
    def test_perfect_separation_all_zero(self):
        curve = det_curve(make_set([0.9, 0.8], [0.1, 0.2]))
        for target in metrics.OPERATING_POINTS:
            assert fnr_at_fpr(curve, target) == (0.0, True)

    def test_three_vs_three_at_ten_percent(self):
        curve = det_curve(make_set([0.8, 0.6, 0.4], [0.7, 0.5, 0.3]))
        assert fnr_at_fpr(curve, 0.10).value == pytest.approx(2 / 3)

    def test_operating_point_naming_convention(self):
        # FNR@10 / FNR@20 / FNR@100 <-> FPR 10% / 5% / 1%
        assert metrics.OPERATING_POINTS == (0.10, 0.05, 0.01)

    def test_bad_target_rejected(self):
        curve = det_curve(make_set([0.9], [0.1]))
        with pytest.raises(InvalidInputError):
            fnr_at_fpr(curve, 0.0)

    def test_unattainable_flag_without_sentinel(self):
        curve = metrics.DetCurve(
            thresholds=np.array([0.5]), fpr=np.array([0.8]), fnr=np.array([0.1])
        )
        assert fnr_at_fpr(curve, 0.05) == (1.0, False)

    @given(score_sets())
    @settings(max_examples=200)
    def test_matches_exhaustive_enumeration(self, s):
        curve = det_curve(s)
        for target in metrics.OPERATING_POINTS:
            assert fnr_at_fpr(curve, target).value == pytest.approx(
                brute_fnr_at(s, target), abs=1e-12
            )


class TestMonotoneAndComplementInvariance:
    transforms = [lambda x: 2.0 * x + 1.0, np.exp, lambda x: x**3, np.arctan]

    @given(score_sets())
    @settings(max_examples=150)
    def test_monotone_transform_leaves_metrics_unchanged(self, s):
        base_curve = det_curve(s)
        base_eer = eer(base_curve)[0]
        for f in self.transforms:
            t = ScoreSet(scores=f(s.scores), labels=s.labels)
            t_curve = det_curve(t)
            assert point_set(t_curve) == point_set(base_curve)
            assert eer(t_curve)[0] == pytest.approx(base_eer, abs=1e-12)
            for target in metrics.OPERATING_POINTS:
                assert fnr_at_fpr(t_curve, target).value == fnr_at_fpr(base_curve, target).value

    @given(score_sets())
    @settings(max_examples=150)
    def test_label_swap_and_negation_swaps_rates(self, s):
        flipped = ScoreSet(scores=-s.scores, labels=1 - s.labels)
        swapped = sorted((n, p) for p, n in point_set(det_curve(s)))
        assert point_set(det_curve(flipped)) == swapped


class TestConfusionMetrics:
    def test_all_correct(self):
        c = confusion_metrics(make_set([0.9, 0.8], [0.1, 0.2]), threshold=0.5)
        assert (c.sensitivity, c.specificity, c.f1, c.accuracy) == (1.0, 1.0, 1.0, 1.0)

    def test_hand_computed_confusion(self):
        # TP=2 FN=2 TN=3 FP=1 at threshold 0.5
        s = make_set([0.7, 0.55, 0.3, 0.2], [0.6, 0.4, 0.3, 0.2])
        c = confusion_metrics(s, threshold=0.5)
        assert (c.tp, c.fn, c.tn, c.fp) == (2, 2, 3, 1)
        assert c.sensitivity == pytest.approx(0.5)
        assert c.specificity == pytest.approx(0.75)
        assert c.accuracy == pytest.approx(0.625)
        assert c.f1 == pytest.approx(4 / 7)

    def test_predict_everything_positive(self):
        s = make_set([0.9, 0.8], [0.7, 0.6])
        c = confusion_metrics(s, threshold=0.0)
        assert c.sensitivity == 1.0
        assert c.specificity == 0.0

    def test_undefined_metrics_are_nan_not_zero(self):
        only_pos = ScoreSet(scores=np.array([0.9, 0.1]), labels=np.array([1, 1]))
        c = confusion_metrics(only_pos, threshold=0.5)
        assert math.isnan(c.specificity)
        nothing_predicted = make_set([0.1, 0.2], [0.3, 0.4])
        c2 = confusion_metrics(nothing_predicted, threshold=0.9)
        assert math.isnan(c2.precision)
        assert math.isnan(c2.f1)


class TestEmitReport:
    def test_perfect_set_report(self, tmp_path):
        s = make_set([0.9, 0.8], [0.1, 0.2])
        report = metrics.emit_report(s, tmp_path, name="perfect", svg=False)
        assert report.eer == 0.0
        assert all(v == 0.0 for v in report.fnr_at.values())
        assert (tmp_path / "perfect.report.json").exists()
        assert (tmp_path / "perfect.det.csv").exists()

    def test_reemission_is_byte_identical(self, tmp_path):
        s = make_set([0.9, 0.5, 0.3], [0.6, 0.2])
        metrics.emit_report(s, tmp_path, name="again", provenance={"seed": 1}, svg=False)
        first = (tmp_path / "again.det.csv").read_bytes()
        first_json = (tmp_path / "again.report.json").read_bytes()
        metrics.emit_report(s, tmp_path, name="again", provenance={"seed": 1}, svg=False)
        assert (tmp_path / "again.det.csv").read_bytes() == first
        assert (tmp_path / "again.report.json").read_bytes() == first_json

    def test_report_internally_consistent(self, tmp_path):
        rng = np.random.default_rng(0)
        s = ScoreSet(scores=rng.normal(size=40), labels=rng.integers(0, 2, 40))
        report = metrics.emit_report(s, tmp_path, name="cons", svg=False)
        assert report.eer == eer(det_curve(s))[0]

    def test_csv_schema_and_provenance_header(self, tmp_path):
        s = make_set([0.9, 0.8], [0.1, 0.2])
        metrics.emit_report(s, tmp_path, name="schema", provenance={"seed": 3}, svg=False)
        lines = (tmp_path / "schema.det.csv").read_text().splitlines()
        assert lines[0].startswith("# ")
        assert json.loads(lines[0][2:])["seed"] == 3
        assert lines[1] == metrics.DET_CSV_HEADER
        assert len(lines) == 2 + len(det_curve(s).points())

    def test_csv_roundtrip(self, tmp_path):
        s = make_set([0.9, 0.5, 0.3], [0.6, 0.2])
        metrics.emit_report(s, tmp_path, name="rt", svg=False)
        curve = metrics.read_det_csv(tmp_path / "rt.det.csv")
        assert point_set(curve) == point_set(det_curve(s))

    def test_svg_written_when_requested(self, tmp_path):
        s = make_set([0.9, 0.8, 0.7], [0.3, 0.2, 0.6])
        metrics.emit_report(s, tmp_path, name="plot", provenance={"seed": 9}, svg=True)
        svg = (tmp_path / "plot.det.svg").read_text()
        assert svg.lstrip().startswith("<?xml")
        assert '"seed": 9' in svg  # reproducibility header embedded in metadata
