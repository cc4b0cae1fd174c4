"""Matched-filter comparison detectors.

Two baselines: the plain normalized matched filter (MF) thresholded with
findpeaks, and the matched filter + Hilbert envelope with RR-interval
plausibility rules (MF-HT).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import (
    PeakConstraints,
    PeakSet,
    SignalTrace,
    find_peaks,
    hilbert_envelope,
)
from .model import EcgTemplate

MF_DEFAULT_THRESHOLD = 0.90
PEAK_MIN_DISTANCE = 12
PEAK_MAX_WIDTH = 25


@dataclass
class MfhtConfig:
    corr_weight: float = 1.0
    rr_weight: float = 0.5
    accept_threshold: float = 0.25
    smoothing_width: int = 5
    rr_window: int = 8

    def __post_init__(self):
        if self.corr_weight < 0 or self.rr_weight < 0:
            raise ValueError("weights must be >= 0")
        if self.smoothing_width < 1:
            raise ValueError("smoothing_width must be >= 1")
        if self.rr_window < 1:
            raise ValueError("rr_window must be >= 1")


def matched_filter(signal: SignalTrace, template: EcgTemplate) -> SignalTrace:
    """Sliding normalized (Pearson) cross-correlation with the template.

    Output index t scores the window whose template R-peak position lands
    at t; incomplete edge windows score 0. Values are in [-1, 1] and
    invariant to positive affine rescaling of the signal.
    """
    x = signal.samples
    tpl = template.samples
    k = tpl.size
    n = x.size
    if n < k:
        raise ValueError(f"signal length {n} shorter than template length {k}")
    tz = tpl - tpl.mean()
    tnorm = np.sqrt(np.sum(tz * tz))
    # sliding dot products and window statistics over all n-k+1 lags
    dots = np.correlate(x, tpl, mode="valid")
    csum = np.concatenate(([0.0], np.cumsum(x)))
    csum2 = np.concatenate(([0.0], np.cumsum(x * x)))
    wsum = csum[k:] - csum[:-k]
    wsum2 = csum2[k:] - csum2[:-k]
    # zero-mean both sides: cov = <x, t> - k * mean(x) * mean(t)
    cov = dots - wsum * tpl.mean()
    wvar = np.maximum(wsum2 - wsum * wsum / k, 0.0)
    denom = tnorm * np.sqrt(wvar)
    corr = np.zeros(n - k + 1)
    ok = denom > 1e-12
    corr[ok] = cov[ok] / denom[ok]
    np.clip(corr, -1.0, 1.0, out=corr)
    out = np.zeros(n)
    out[template.r_peak_index : template.r_peak_index + corr.size] = corr
    return SignalTrace(out, signal.fs)


def mf_detect(
    signal: SignalTrace,
    template: EcgTemplate,
    min_height: float = MF_DEFAULT_THRESHOLD,
) -> PeakSet:
    """Standard matched filter: findpeaks on the correlation trace."""
    corr = matched_filter(signal, template)
    constraints = PeakConstraints(
        min_height=min_height,
        min_distance=PEAK_MIN_DISTANCE,
        max_width=PEAK_MAX_WIDTH,
    )
    return find_peaks(corr, constraints)


def _moving_average(x: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return x.copy()
    kernel = np.ones(width) / width
    return np.convolve(x, kernel, mode="same")


def mfht_detect(
    signal: SignalTrace,
    template: EcgTemplate,
    cfg: MfhtConfig | None = None,
) -> PeakSet:
    """Matched filter + Hilbert envelope + RR-plausibility acceptance.

    Candidates come from the smoothed envelope of the correlation trace.
    A first correlation-only pass (score = corr_weight * corr >= threshold)
    seeds the RR-interval statistics; the main pass then accepts candidate
    i iff

        corr_weight * corr(i) - rr_weight * dev(i) >= accept_threshold

    where dev(i) = |RR(i) - m * meanRR| / meanRR with m the nearest
    positive integer multiple (so beats following missed beats are not
    themselves penalised), RR(i) is the gap to the last accepted peak, and
    meanRR is the running mean of the last `rr_window` accepted intervals,
    each normalised by its matched multiple m. The statistics are seeded
    from a correlation-only pass, keeping only physiologically plausible
    gaps (0.3-2.0 s); if fewer than two such gaps exist the RR term is
    dropped and the rule is correlation-only.
    """
    if cfg is None:
        cfg = MfhtConfig()
    corr_trace = matched_filter(signal, template)
    env = hilbert_envelope(corr_trace)
    smooth = _moving_average(env.samples, cfg.smoothing_width)
    candidates = find_peaks(
        SignalTrace(smooth, signal.fs),
        PeakConstraints(min_height=-np.inf, min_distance=PEAK_MIN_DISTANCE,
                        max_width=np.inf),
    )
    corr = corr_trace.samples
    cand = candidates.indices
    cvals = corr[cand]
    strong = cand[cfg.corr_weight * cvals >= cfg.accept_threshold]
    gaps = np.diff(strong).astype(float)
    lo, hi = 0.3 * signal.fs, 2.0 * signal.fs
    gaps = gaps[(gaps >= lo) & (gaps <= hi)]
    intervals: list[float] = list(gaps) if gaps.size >= 2 else []
    use_rr = bool(intervals) and cfg.rr_weight > 0
    accepted_idx: list[int] = []
    accepted_heights: list[float] = []
    for p, c in zip(cand, cvals):
        score = cfg.corr_weight * float(c)
        multiple = 1.0
        if use_rr and accepted_idx:
            mean_rr = float(np.mean(intervals[-cfg.rr_window:]))
            rr = float(p - accepted_idx[-1])
            multiple = max(1.0, round(rr / mean_rr))
            score -= cfg.rr_weight * abs(rr - multiple * mean_rr) / mean_rr
        if score >= cfg.accept_threshold:
            if use_rr and accepted_idx:
                intervals.append(float(p - accepted_idx[-1]) / multiple)
            accepted_idx.append(int(p))
            accepted_heights.append(float(smooth[p]))
    return PeakSet(np.asarray(accepted_idx, dtype=np.int64),
                   np.asarray(accepted_heights))
