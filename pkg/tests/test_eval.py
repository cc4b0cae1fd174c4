"""Peak matching, PR sweeps and LOSO plumbing."""

import numpy as np
import pytest

from deepmf.dsp import PeakSet, SignalTrace
from deepmf.evaluation import (
    DEFAULT_THRESHOLDS,
    MatchResult,
    match_peaks,
    match_tolerance_samples,
    pooled_curve,
    pr_sweep,
    recall_precision,
    run_loso,
    summarize,
    SubjectMetrics,
)

FS = 250.0


def peaks(idx):
    idx = np.asarray(idx, dtype=np.int64)
    return PeakSet(idx, np.ones(idx.size))


# ------------------------------------------------------------- matching


def test_tolerance_is_ten_samples_at_250hz():
    assert match_tolerance_samples(250.0) == 10
    assert match_tolerance_samples(250.0, 40.0) == 10
    assert match_tolerance_samples(500.0, 40.0) == 20


def test_match_boundary_inclusive():
    truth = peaks([100])
    assert match_peaks(peaks([110]), truth, FS).tp == 1  # exactly 10 away
    assert match_peaks(peaks([111]), truth, FS).tp == 0
    assert match_peaks(peaks([90]), truth, FS).tp == 1


def test_match_is_one_to_one_and_prefers_nearest():
    truth = peaks([100, 120])
    m = match_peaks(peaks([102, 118]), truth, FS)
    assert m.tp == 2 and m.pairs == [(102, 100), (118, 120)]
    # one prediction cannot serve two truths
    m2 = match_peaks(peaks([110]), truth, FS)
    assert m2.tp == 1 and m2.fn == 1 and m2.fp == 0
    # ties go to the earlier predicted index
    m3 = match_peaks(peaks([95, 105]), peaks([100]), FS)
    assert m3.pairs == [(95, 100)] and m3.fp == 1


def oracle_max_matching(pred, truth, tol):
    """Maximum bipartite matching size by brute-force augmenting paths."""
    adj = [[p for p in range(len(pred)) if abs(pred[p] - tv) <= tol]
           for tv in truth]
    match_of_pred = {}

    def try_assign(t, seen):
        for p in adj[t]:
            if p in seen:
                continue
            seen.add(p)
            if p not in match_of_pred or try_assign(match_of_pred[p], seen):
                match_of_pred[p] = t
                return True
        return False

    return sum(1 for t in range(len(truth)) if try_assign(t, set()))


def test_greedy_matching_near_optimal_on_random_instances():
    """The greedy truth-order matcher attains the maximum matching size on
    at least 99 of 100 random instances (it is not guaranteed optimal)."""
    rng = np.random.default_rng(0)
    optimal = 0
    for _ in range(100):
        n_t = int(rng.integers(1, 30))
        n_p = int(rng.integers(0, 30))
        truth = np.unique(rng.integers(0, 2000, size=n_t))
        pred = np.unique(rng.integers(0, 2000, size=n_p))
        m = match_peaks(peaks(pred), peaks(truth), FS)
        best = oracle_max_matching(list(pred), list(truth), 10)
        assert m.tp <= best
        if m.tp == best:
            optimal += 1
    assert optimal >= 99


def test_degenerate_conventions():
    # no predictions, no truth: vacuous success
    assert recall_precision(match_peaks(peaks([]), peaks([]), FS)) == (1.0, 1.0)
    # no predictions, some truth: recall 0, precision 0
    assert recall_precision(match_peaks(peaks([]), peaks([100]), FS)) == (0.0, 0.0)
    # some predictions, no truth: recall 1 (vacuous), precision 0
    assert recall_precision(match_peaks(peaks([100]), peaks([]), FS)) == (1.0, 0.0)


def test_recall_precision_counts():
    m = MatchResult(tp=8, fp=2, fn=2)
    rec, prec = recall_precision(m)
    assert rec == pytest.approx(0.8) and prec == pytest.approx(0.8)


# ------------------------------------------------------------- sweeps


def score_trace_with_peaks(positions, heights, n=3000):
    x = np.zeros(n)
    t = np.arange(n)
    for p, h in zip(positions, heights):
        x += h * np.exp(-0.5 * ((t - p) / 3.0) ** 2)
    return SignalTrace(x, FS)


def test_default_threshold_grid():
    grid = np.asarray(DEFAULT_THRESHOLDS)
    assert grid[0] == pytest.approx(0.01) and grid[-1] == pytest.approx(0.99)
    assert grid.size == 99
    assert 0.11 in grid and 0.90 in grid  # both operating points on the grid
    np.testing.assert_allclose(np.diff(grid), 0.01, atol=1e-12)


def test_pr_sweep_recall_monotone_nonincreasing():
    rng = np.random.default_rng(1)
    positions = np.sort(rng.choice(np.arange(100, 2900, 30), 40, replace=False))
    heights = rng.uniform(0.05, 1.0, size=positions.size)
    trace = score_trace_with_peaks(positions, heights)
    truth = peaks(positions[::2])
    curve = pr_sweep(trace, truth)
    recalls = [p[1] for p in curve.points]
    assert all(a >= b - 1e-12 for a, b in zip(recalls, recalls[1:]))
    assert 0.0 <= curve.auc <= 1.0


def test_pr_sweep_perfect_detector_auc_one():
    positions = np.arange(200, 2800, 200)
    trace = score_trace_with_peaks(positions, np.full(positions.size, 0.995))
    curve = pr_sweep(trace, peaks(positions))
    assert curve.auc == pytest.approx(1.0, abs=1e-9)
    for _, rec, prec in curve.points:
        assert rec == 1.0 and prec == 1.0


def test_pr_sweep_rejects_bad_grids():
    trace = score_trace_with_peaks([500], [0.5])
    with pytest.raises(ValueError):
        pr_sweep(trace, peaks([500]), thresholds=[])
    with pytest.raises(ValueError):
        pr_sweep(trace, peaks([500]), thresholds=[0.5, 0.3])


def test_pooled_curve_is_per_threshold_median():
    t1 = score_trace_with_peaks([500, 1000, 1500], [0.9, 0.9, 0.9])
    t2 = score_trace_with_peaks([500, 1000, 1500], [0.3, 0.9, 0.9])
    t3 = score_trace_with_peaks([500], [0.9])
    truth = peaks([500, 1000, 1500])
    grid = [0.5]
    curves = [pr_sweep(t, truth, thresholds=grid) for t in (t1, t2, t3)]
    pooled = pooled_curve(curves)
    recalls = sorted(c.points[0][1] for c in curves)
    assert pooled.points[0][1] == pytest.approx(recalls[1])  # the median
    with pytest.raises(ValueError):
        pooled_curve([curves[0], pr_sweep(t1, truth, thresholds=[0.4])])


def test_auc_extends_to_zero_recall_only():
    # single point at (recall 0.5, precision 0.5): the curve is extended to
    # recall 0 at that precision, giving area 0.5 * 0.5, with no extension
    # beyond recall 0.5
    trace = score_trace_with_peaks([500, 1000], [0.9, 0.9])
    truth = peaks([500, 1500])
    curve = pr_sweep(trace, truth, thresholds=[0.5])
    assert curve.points[0][1] == pytest.approx(0.5)
    assert curve.points[0][2] == pytest.approx(0.5)
    assert curve.auc == pytest.approx(0.5 * 0.5)


# ------------------------------------------------------------ summaries


def test_summarize_median_and_quartiles():
    metrics = [SubjectMetrics(f"s{i}", r, p, 0, 0, 0)
               for i, (r, p) in enumerate([(0.2, 0.9), (0.4, 0.8),
                                           (0.6, 0.7), (0.8, 0.6)])]
    out = summarize(metrics)
    assert out["n_subjects"] == 4
    assert out["recall"]["median"] == pytest.approx(0.5)
    # linear interpolation quartiles of [0.2, 0.4, 0.6, 0.8]
    assert out["recall"]["q1"] == pytest.approx(0.35)
    assert out["recall"]["q3"] == pytest.approx(0.65)
    assert out["precision"]["median"] == pytest.approx(0.75)
    with pytest.raises(ValueError):
        summarize([])


# ---------------------------------------------------------------- LOSO


def make_corpus():
    from deepmf.data import Recording, SynthConfig, synthesize
    from deepmf.dsp import decimate

    recs = synthesize(SynthConfig(n_subjects=3, duration_s=20.0, seed=30))
    return [Recording(r.subject_id, decimate(r.ear, 2), decimate(r.reference, 2))
            for r in recs]


def test_run_loso_mf_covers_all_subjects():
    recs = make_corpus()
    result = run_loso(recs, "mf", thresholds=[0.3, 0.6, 0.9])
    assert [m.subject_id for m in result.metrics] == ["s00", "s01", "s02"]
    assert set(result.subject_curves) == {"s00", "s01", "s02"}
    assert result.pooled is not None
    assert result.errors == {}


def test_run_loso_mfht_metrics_only():
    recs = make_corpus()
    result = run_loso(recs, "mf-ht")
    assert len(result.metrics) == 3
    assert result.pooled is None


def test_run_loso_validation():
    recs = make_corpus()
    with pytest.raises(ValueError):
        run_loso(recs, "unknown-detector")
    with pytest.raises(ValueError):
        run_loso(recs[:1], "mf")


def test_run_loso_collect_errors():
    recs = make_corpus()
    # corrupt one subject so its evaluation fails (too short for the MF template)
    from deepmf.data import Recording

    bad = Recording("s01",
                    SignalTrace(recs[1].ear.samples[:150], 250.0),
                    SignalTrace(recs[1].reference.samples[:150], 250.0))
    mixed = [recs[0], bad, recs[2]]
    with pytest.raises(Exception):
        run_loso(mixed, "mf", thresholds=[0.5])
    result = run_loso(mixed, "mf", thresholds=[0.5], collect_errors=True)
    assert set(result.errors) == {"s01"}
    assert [m.subject_id for m in result.metrics] == ["s00", "s02"]
