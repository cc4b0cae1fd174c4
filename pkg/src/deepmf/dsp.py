"""Deterministic signal-processing primitives.

Everything in this module is a pure function of its inputs: IIR filter
design, zero-phase filtering, decimation, Hilbert envelope and constrained
peak finding. These are the building blocks for both the preprocessing
filter bank and the matched-filter baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

MAX_FILTER_ORDER = 12


class InvalidSpecError(ValueError):
    """Filter specification violates its invariants for the given rate."""


@dataclass
class SignalTrace:
    """Uniformly sampled real-valued waveform."""

    samples: np.ndarray
    fs: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.fs > 0:
            raise ValueError(f"fs must be positive, got {self.fs}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain NaN or Inf")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs


@dataclass
class FilterSpec:
    """Butterworth response specification (order is per single pass)."""

    kind: str  # "band-pass" | "high-pass" | "low-pass"
    low_hz: float
    high_hz: float | None = None
    order: int = 4

    def validate(self, fs: float) -> None:
        if self.kind not in ("band-pass", "high-pass", "low-pass"):
            raise InvalidSpecError(f"unknown filter kind {self.kind!r}")
        if self.order < 1:
            raise InvalidSpecError("order must be >= 1")
        if self.order > MAX_FILTER_ORDER:
            raise InvalidSpecError(
                f"order {self.order} > {MAX_FILTER_ORDER} rejected (numerical-stability guard)"
            )
        nyq = fs / 2.0
        if self.kind == "band-pass":
            if self.high_hz is None:
                raise InvalidSpecError("band-pass needs high_hz")
            if not (0 < self.low_hz < self.high_hz < nyq):
                raise InvalidSpecError(
                    f"band-pass cutoffs must satisfy 0 < {self.low_hz} < {self.high_hz} < fs/2 = {nyq}"
                )
        else:
            if not (0 < self.low_hz < nyq):
                raise InvalidSpecError(
                    f"cutoff must satisfy 0 < {self.low_hz} < fs/2 = {nyq}"
                )


@dataclass
class FilterCoefficients:
    """Cascade of second-order sections, shape (n_sections, 6)."""

    sos: np.ndarray

    def __post_init__(self):
        self.sos = np.atleast_2d(np.asarray(self.sos, dtype=np.float64))
        if self.sos.shape[1] != 6:
            raise ValueError("sos must have 6 columns")

    @property
    def order(self) -> int:
        # realized order of the cascade (two poles per section)
        return 2 * self.sos.shape[0]

    def is_stable(self) -> bool:
        for sec in self.sos:
            poles = np.roots(sec[3:])
            if np.any(np.abs(poles) >= 1.0):
                return False
        return True


IDENTITY_COEFFICIENTS = FilterCoefficients(
    np.array([[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]])
)


@dataclass
class PeakConstraints:
    """Constraints applied by :func:`find_peaks`.

    Width is measured at half-prominence, matching findpeaks semantics.
    """

    min_height: float = -np.inf
    min_distance: int = 12
    max_width: float = 25.0

    def __post_init__(self):
        if self.min_distance < 1:
            raise ValueError("min_distance must be >= 1")
        if self.max_width < 1:
            raise ValueError("max_width must be >= 1")


@dataclass
class PeakSet:
    """Ordered peak sample indices with the peak values."""

    indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    heights: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.float64))

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.heights = np.asarray(self.heights, dtype=np.float64)
        if self.indices.shape != self.heights.shape:
            raise ValueError("indices and heights must have the same length")
        if self.indices.size > 1 and not np.all(np.diff(self.indices) > 0):
            raise ValueError("indices must be strictly increasing")

    def __len__(self):
        return self.indices.size


def design_butterworth(spec: FilterSpec, fs: float) -> FilterCoefficients:
    """Design a Butterworth filter as second-order sections.

    Magnitude at each cutoff is 1/sqrt(2) per single pass (bilinear design
    with pre-warped cutoffs); all poles are inside the unit circle.
    """
    spec.validate(fs)
    if spec.kind == "band-pass":
        wn = [spec.low_hz, spec.high_hz]
        btype = "bandpass"
    elif spec.kind == "high-pass":
        wn = spec.low_hz
        btype = "highpass"
    else:
        wn = spec.low_hz
        btype = "lowpass"
    sos = sps.butter(spec.order, wn, btype=btype, fs=fs, output="sos")
    coeffs = FilterCoefficients(sos)
    if not coeffs.is_stable():
        raise InvalidSpecError("designed filter is unstable")
    return coeffs


def filtfilt(trace: SignalTrace, coeffs: FilterCoefficients) -> SignalTrace:
    """Zero-phase (forward-backward) filtering.

    Uses reflective edge padding of 3x the realized filter order; output
    has the same length and rate as the input, and the effective magnitude
    response is the single-pass response squared.
    """
    padlen = 3 * coeffs.order
    if len(trace) <= padlen:
        raise ValueError(
            f"trace length {len(trace)} too short for padding {padlen} (need > 3 x order)"
        )
    if coeffs.order == 0 or (coeffs.sos.shape[0] == 1
                             and np.allclose(coeffs.sos[0], [1, 0, 0, 1, 0, 0])):
        return SignalTrace(trace.samples.copy(), trace.fs)
    y = sps.sosfiltfilt(coeffs.sos, trace.samples, padtype="even", padlen=padlen)
    return SignalTrace(np.ascontiguousarray(y), trace.fs)


def decimate(trace: SignalTrace, factor: int) -> SignalTrace:
    """Anti-aliased downsampling by an integer factor.

    A zero-phase Butterworth low-pass at 0.8x the new Nyquist is applied
    before taking every factor-th sample.
    """
    if factor < 1:
        raise ValueError(f"decimation factor must be >= 1, got {factor}")
    if factor == 1:
        return SignalTrace(trace.samples.copy(), trace.fs)
    new_fs = trace.fs / factor
    cutoff = 0.8 * new_fs / 2.0
    coeffs = design_butterworth(FilterSpec("low-pass", cutoff, order=8), trace.fs)
    filtered = filtfilt(trace, coeffs)
    return SignalTrace(filtered.samples[::factor].copy(), new_fs)


def standardize(x: np.ndarray, var_floor: float = 1e-12) -> np.ndarray:
    """Zero-mean unit-variance scaling; all-zeros when variance < floor."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean()
    var = x.var()
    if var < var_floor:
        return np.zeros_like(x)
    return (x - mu) / np.sqrt(var)


def preprocess_channels(trace: SignalTrace) -> list[SignalTrace]:
    """The three-channel filter bank at 250 Hz.

    Channel 0: band-pass 1-45 Hz; channel 1: band-pass 1-5 Hz; channel 2:
    high-pass 1 Hz. All 4th order, zero phase, then standardized over the
    whole recording.
    """
    if trace.fs != 250:
        raise ValueError(f"preprocess_channels expects fs = 250 Hz, got {trace.fs}")
    specs = [
        FilterSpec("band-pass", 1.0, 45.0, order=4),
        FilterSpec("band-pass", 1.0, 5.0, order=4),
        FilterSpec("high-pass", 1.0, order=4),
    ]
    out = []
    for spec in specs:
        coeffs = design_butterworth(spec, trace.fs)
        filtered = filtfilt(trace, coeffs)
        out.append(SignalTrace(standardize(filtered.samples), trace.fs))
    return out


def hilbert_envelope(trace: SignalTrace) -> SignalTrace:
    """Magnitude of the FFT-based analytic signal."""
    env = np.abs(sps.hilbert(trace.samples))
    return SignalTrace(env, trace.fs)


def _local_maxima(x: np.ndarray) -> np.ndarray:
    """Strict local maxima; a plateau reports its left-most sample."""
    n = x.size
    idx = []
    i = 1
    while i < n - 1:
        if x[i] > x[i - 1]:
            j = i
            while j < n - 1 and x[j + 1] == x[j]:
                j += 1
            if j < n - 1 and x[j + 1] < x[j]:
                idx.append(i)
            i = j + 1
        else:
            i += 1
    return np.asarray(idx, dtype=np.int64)


def _prominence_and_width(x: np.ndarray, peak: int) -> tuple[float, float]:
    """Peak prominence and its width at half-prominence.

    The prominence base on each side is the minimum between the peak and
    the nearest strictly-higher sample (or the signal end). Width edges
    are linearly interpolated crossings of height - prominence/2, clipped
    to the base positions.
    """
    h = x[peak]
    # left base
    i = peak
    left_min = h
    left_min_pos = peak
    while i > 0:
        i -= 1
        if x[i] > h:
            break
        if x[i] < left_min:
            left_min = x[i]
            left_min_pos = i
    # right base
    j = peak
    right_min = h
    right_min_pos = peak
    n = x.size
    while j < n - 1:
        j += 1
        if x[j] > h:
            break
        if x[j] < right_min:
            right_min = x[j]
            right_min_pos = j
    prominence = h - max(left_min, right_min)
    ref = h - 0.5 * prominence
    # walk left for the crossing of ref
    li = peak
    while li > left_min_pos and x[li - 1] >= ref:
        li -= 1
    if li > left_min_pos and x[li - 1] < ref:
        left_ip = li - 1 + (ref - x[li - 1]) / (x[li] - x[li - 1])
    else:
        left_ip = float(left_min_pos)
    ri = peak
    while ri < right_min_pos and x[ri + 1] >= ref:
        ri += 1
    if ri < right_min_pos and x[ri + 1] < ref:
        right_ip = ri + (x[ri] - ref) / (x[ri] - x[ri + 1])
    else:
        right_ip = float(right_min_pos)
    return prominence, right_ip - left_ip


def peak_candidates(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All strict local maxima with their heights and half-prominence widths.

    Threshold-independent; reused by PR sweeps so that candidate detection
    runs once per score trace.
    """
    idx = _local_maxima(x)
    heights = x[idx]
    widths = np.array([_prominence_and_width(x, p)[1] for p in idx])
    return idx, heights, widths


def select_peaks(
    idx: np.ndarray,
    heights: np.ndarray,
    widths: np.ndarray,
    constraints: PeakConstraints,
) -> PeakSet:
    """Apply height, width and min-distance constraints to candidates."""
    keep = (heights >= constraints.min_height) & (widths <= constraints.max_width)
    idx = idx[keep]
    heights = heights[keep]
    if idx.size == 0:
        return PeakSet()
    # greedy by descending height, ties by lower index
    order = np.lexsort((idx, -heights))
    accepted: list[int] = []
    for pos in order:
        p = idx[pos]
        if all(abs(p - q) >= constraints.min_distance for q in accepted):
            accepted.append(int(p))
    accepted.sort()
    acc = np.asarray(accepted, dtype=np.int64)
    pos_of = {int(p): h for p, h in zip(idx, heights)}
    return PeakSet(acc, np.array([pos_of[int(p)] for p in acc]))


def find_peaks(trace: SignalTrace, constraints: PeakConstraints) -> PeakSet:
    """Constrained peak finding on a trace.

    Strict local maxima with height >= min_height and half-prominence
    width <= max_width; of two qualifying peaks closer than min_distance,
    the taller survives (ties broken by lower index).
    """
    if len(trace) < 3:
        raise ValueError("trace must have at least 3 samples")
    idx, heights, widths = peak_candidates(trace.samples)
    return select_peaks(idx, heights, widths, constraints)
