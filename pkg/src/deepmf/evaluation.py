"""Peak matching, precision-recall sweeps and LOSO orchestration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Recording, loso_split, reference_peaks
from .dsp import (
    PeakConstraints,
    PeakSet,
    SignalTrace,
    peak_candidates,
    select_peaks,
)
from .estimators import (
    DEEPMF_DEFAULT_THRESHOLD,
    DeepMFDetector,
    MatchedFilterDetector,
    MfHtDetector,
)
from .baselines import MF_DEFAULT_THRESHOLD, PEAK_MAX_WIDTH, PEAK_MIN_DISTANCE

MATCH_TOLERANCE_MS = 40.0
DETECTORS = ("deep-mf", "mf", "mf-ht")

# default PR sweep grid; includes both shipped operating points (0.11, 0.90)
DEFAULT_THRESHOLDS = tuple(np.round(np.arange(0.01, 1.0, 0.01), 2))


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class PrCurve:
    points: list[tuple[float, float, float]]  # (threshold, recall, precision)
    auc: float


@dataclass
class SubjectMetrics:
    subject_id: str
    recall: float
    precision: float
    tp: int
    fp: int
    fn: int


def match_tolerance_samples(fs: float, tol_ms: float = MATCH_TOLERANCE_MS) -> int:
    return int(round(tol_ms * fs / 1000.0))


def match_peaks(
    predicted: PeakSet, truth: PeakSet, fs: float, tol_ms: float = MATCH_TOLERANCE_MS
) -> MatchResult:
    """Greedy one-to-one matching of predicted to true peaks.

    True peaks are processed in order; each takes the nearest unmatched
    predicted peak within the (inclusive) tolerance, ties going to the
    earlier predicted index.
    """
    tol = match_tolerance_samples(fs, tol_ms)
    pred = predicted.indices
    used = np.zeros(pred.size, dtype=bool)
    pairs = []
    for t in truth.indices:
        best = -1
        best_dist = tol + 1
        lo = np.searchsorted(pred, t - tol, side="left")
        hi = np.searchsorted(pred, t + tol, side="right")
        for j in range(lo, hi):
            if used[j]:
                continue
            d = abs(int(pred[j]) - int(t))
            if d < best_dist:
                best = j
                best_dist = d
        if best >= 0:
            used[best] = True
            pairs.append((int(pred[best]), int(t)))
    tp = len(pairs)
    return MatchResult(tp=tp, fp=pred.size - tp, fn=len(truth) - tp, pairs=pairs)


def recall_precision(m: MatchResult) -> tuple[float, float]:
    """(recall, precision); empty/empty counts as vacuous success (1, 1)."""
    if m.tp + m.fn + m.fp == 0:
        return 1.0, 1.0
    recall = m.tp / (m.tp + m.fn) if m.tp + m.fn else 1.0
    precision = m.tp / (m.tp + m.fp) if m.tp + m.fp else 0.0
    if m.tp == 0 and m.fp == 0 and m.fn > 0:
        precision = 0.0
    return recall, precision


def _auc_from_points(recalls: np.ndarray, precisions: np.ndarray) -> float:
    """Trapezoidal area over recall, extended to recall 0 at the precision
    of the lowest-recall point; no extension past the highest recall."""
    order = np.argsort(recalls, kind="stable")
    r = recalls[order]
    p = precisions[order]
    r = np.concatenate(([0.0], r))
    p = np.concatenate(([p[0]], p))
    return float(np.trapezoid(p, r))


def pr_sweep(
    score_trace: SignalTrace,
    truth: PeakSet,
    thresholds=DEFAULT_THRESHOLDS,
    min_distance: int = PEAK_MIN_DISTANCE,
    max_width: float = PEAK_MAX_WIDTH,
    tol_ms: float = MATCH_TOLERANCE_MS,
) -> PrCurve:
    """PR curve from sweeping the findpeaks min-height threshold."""
    thresholds = np.asarray(list(thresholds), dtype=np.float64)
    if thresholds.size == 0:
        raise ValueError("thresholds must be non-empty")
    if thresholds.size > 1 and not np.all(np.diff(thresholds) > 0):
        raise ValueError("thresholds must be strictly increasing")
    idx, heights, widths = peak_candidates(score_trace.samples)
    points = []
    for th in thresholds:
        peaks = select_peaks(
            idx, heights, widths,
            PeakConstraints(min_height=float(th), min_distance=min_distance,
                            max_width=max_width),
        )
        m = match_peaks(peaks, truth, score_trace.fs, tol_ms)
        rec, prec = recall_precision(m)
        points.append((float(th), rec, prec))
    arr = np.asarray(points)
    auc = _auc_from_points(arr[:, 1], arr[:, 2])
    return PrCurve(points=points, auc=auc)


def pooled_curve(curves: list[PrCurve]) -> PrCurve:
    """Per-threshold median recall and precision across subjects."""
    if not curves:
        raise ValueError("no curves to pool")
    thresholds = [p[0] for p in curves[0].points]
    for c in curves:
        if [p[0] for p in c.points] != thresholds:
            raise ValueError("curves must share the threshold grid")
    recalls = np.array([[p[1] for p in c.points] for c in curves])
    precisions = np.array([[p[2] for p in c.points] for c in curves])
    med_r = np.median(recalls, axis=0)
    med_p = np.median(precisions, axis=0)
    points = [(t, float(r), float(p)) for t, r, p in zip(thresholds, med_r, med_p)]
    return PrCurve(points=points, auc=_auc_from_points(med_r, med_p))


@dataclass
class LosoResult:
    detector: str
    metrics: list[SubjectMetrics]
    pooled: PrCurve | None
    subject_curves: dict[str, PrCurve]
    train_logs: dict[str, list] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)


def _metrics_at(peaks: PeakSet, truth: PeakSet, fs: float, subject_id: str,
                tol_ms: float) -> SubjectMetrics:
    m = match_peaks(peaks, truth, fs, tol_ms)
    rec, prec = recall_precision(m)
    return SubjectMetrics(subject_id, rec, prec, m.tp, m.fp, m.fn)


def run_loso(
    recordings: list[Recording],
    detector: str,
    train_config: dict | None = None,
    thresholds=DEFAULT_THRESHOLDS,
    deepmf_threshold: float = DEEPMF_DEFAULT_THRESHOLD,
    mf_threshold: float = MF_DEFAULT_THRESHOLD,
    mfht_params: dict | None = None,
    tol_ms: float = MATCH_TOLERANCE_MS,
    log=None,
    collect_errors: bool = False,
) -> LosoResult:
    """Leave-one-subject-out evaluation of one detector.

    deep-mf retrains per fold on the remaining subjects; the baselines
    evaluate each subject directly. Results are ordered by subject_id.
    With collect_errors, per-subject failures are recorded instead of
    raised.
    """
    if detector not in DETECTORS:
        raise ValueError(f"unknown detector {detector!r}; expected one of {DETECTORS}")
    if len({r.subject_id for r in recordings}) < 2:
        raise ValueError("LOSO needs at least 2 subjects")
    subjects = sorted({r.subject_id for r in recordings})
    metrics = []
    subject_curves: dict[str, PrCurve] = {}
    train_logs: dict[str, list] = {}
    errors: dict[str, str] = {}

    def one_subject(sid: str) -> None:
        train, test = loso_split(recordings, sid)
        rec = test[0]
        truth = reference_peaks(rec.reference)
        if log:
            log(f"subject {sid}: evaluating {detector}")
        if detector == "deep-mf":
            est = DeepMFDetector(**(train_config or {}))
            est.fit(train, test_recordings=test)
            train_logs[sid] = est.train_log_
            scores = est.decision_function(rec.ear)
            curve = pr_sweep(scores, truth, thresholds, tol_ms=tol_ms)
            subject_curves[sid] = curve
            op_peaks = select_peaks(
                *peak_candidates(scores.samples),
                PeakConstraints(min_height=deepmf_threshold,
                                min_distance=PEAK_MIN_DISTANCE,
                                max_width=PEAK_MAX_WIDTH),
            )
            metrics.append(_metrics_at(op_peaks, truth, rec.fs, sid, tol_ms))
        elif detector == "mf":
            est = MatchedFilterDetector(threshold=mf_threshold).fit()
            scores = est.decision_function(rec.ear)
            curve = pr_sweep(scores, truth, thresholds, tol_ms=tol_ms)
            subject_curves[sid] = curve
            metrics.append(_metrics_at(est.predict(rec.ear), truth, rec.fs, sid, tol_ms))
        else:
            est = MfHtDetector(**(mfht_params or {})).fit()
            peaks = est.predict_recording(rec)
            metrics.append(_metrics_at(peaks, truth, rec.fs, sid, tol_ms))

    for sid in subjects:
        if collect_errors:
            try:
                one_subject(sid)
            except Exception as exc:  # noqa: BLE001 - reported per subject
                errors[sid] = f"{type(exc).__name__}: {exc}"
        else:
            one_subject(sid)
    pooled = pooled_curve(list(subject_curves.values())) if subject_curves else None
    return LosoResult(detector, metrics, pooled, subject_curves, train_logs, errors)


def summarize(metrics: list[SubjectMetrics]) -> dict:
    """Median and quartiles (linear interpolation) of recall and precision."""
    if not metrics:
        raise ValueError("no metrics to summarize")
    out = {"n_subjects": len(metrics)}
    for name in ("recall", "precision"):
        vals = np.array([getattr(m, name) for m in metrics])
        q1, med, q3 = np.percentile(vals, [25, 50, 75], method="linear")
        out[name] = {"median": float(med), "q1": float(q1), "q3": float(q3)}
    return out
