"""Physics and oracle tests for the signal-processing primitives."""

import numpy as np
import pytest
from scipy import signal as sps

from deepmf.dsp import (
    IDENTITY_COEFFICIENTS,
    FilterSpec,
    InvalidSpecError,
    PeakConstraints,
    PeakSet,
    SignalTrace,
    decimate,
    design_butterworth,
    filtfilt,
    find_peaks,
    hilbert_envelope,
    preprocess_channels,
    standardize,
)

FS = 250.0


def magnitude(coeffs, f_hz, fs):
    w, h = sps.sosfreqz(coeffs.sos, worN=[2 * np.pi * f_hz / fs])
    return float(np.abs(h[0]))


def analytic_butter_lowpass(f_hz, cutoff_hz, order, fs):
    """Single-pass magnitude of a bilinear-transform Butterworth low-pass.

    With pre-warped cutoff, |H|^2 = 1 / (1 + (W/Wc)^(2n)) where
    W = tan(pi f / fs) is the warped frequency.
    """
    W = np.tan(np.pi * f_hz / fs)
    Wc = np.tan(np.pi * cutoff_hz / fs)
    return 1.0 / np.sqrt(1.0 + (W / Wc) ** (2 * order))


def analytic_butter_bandpass(f_hz, low_hz, high_hz, order, fs):
    W = np.tan(np.pi * f_hz / fs)
    W1 = np.tan(np.pi * low_hz / fs)
    W2 = np.tan(np.pi * high_hz / fs)
    x = (W * W - W1 * W2) / (W * (W2 - W1))
    return 1.0 / np.sqrt(1.0 + x ** (2 * order))


# ----------------------------------------------------------- design


@pytest.mark.parametrize("cutoff,order", [(1.0, 4), (5.0, 2), (45.0, 4), (100.0, 8)])
def test_lowpass_magnitude_matches_analytic_oracle(cutoff, order):
    coeffs = design_butterworth(FilterSpec("low-pass", cutoff, order=order), FS)
    for f in np.linspace(0.2, 120.0, 40):
        want = analytic_butter_lowpass(f, cutoff, order, FS)
        assert magnitude(coeffs, f, FS) == pytest.approx(want, abs=1e-8)


def test_bandpass_magnitude_matches_analytic_oracle():
    coeffs = design_butterworth(FilterSpec("band-pass", 1.0, 45.0, order=4), FS)
    for f in np.linspace(0.2, 120.0, 40):
        want = analytic_butter_bandpass(f, 1.0, 45.0, 4, FS)
        assert magnitude(coeffs, f, FS) == pytest.approx(want, abs=1e-8)


@pytest.mark.parametrize(
    "spec,cutoffs",
    [
        (FilterSpec("band-pass", 1.0, 45.0, order=4), (1.0, 45.0)),
        (FilterSpec("band-pass", 1.0, 5.0, order=4), (1.0, 5.0)),
        (FilterSpec("high-pass", 1.0, order=4), (1.0,)),
        (FilterSpec("low-pass", 45.0, order=4), (45.0,)),
    ],
)
def test_cutoff_magnitude_is_half_power(spec, cutoffs):
    coeffs = design_butterworth(spec, FS)
    for fc in cutoffs:
        assert magnitude(coeffs, fc, FS) == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-6)


def test_designed_filters_are_stable():
    for spec in [
        FilterSpec("band-pass", 1.0, 45.0, order=4),
        FilterSpec("high-pass", 0.5, order=8),
        FilterSpec("low-pass", 100.0, order=12),
    ]:
        assert design_butterworth(spec, FS).is_stable()


def test_spec_validation_rejects_bad_inputs():
    with pytest.raises(InvalidSpecError):
        design_butterworth(FilterSpec("band-pass", 45.0, 1.0), FS)  # reversed
    with pytest.raises(InvalidSpecError):
        design_butterworth(FilterSpec("low-pass", 130.0), FS)  # above Nyquist
    with pytest.raises(InvalidSpecError):
        design_butterworth(FilterSpec("low-pass", 10.0, order=0), FS)
    with pytest.raises(InvalidSpecError):
        design_butterworth(FilterSpec("low-pass", 10.0, order=13), FS)  # guard
    with pytest.raises(InvalidSpecError):
        design_butterworth(FilterSpec("notch", 10.0), FS)
    with pytest.raises(InvalidSpecError):
        design_butterworth(FilterSpec("band-pass", 1.0, None), FS)


# ---------------------------------------------------------- filtfilt


def test_filtfilt_zero_lag():
    """A passband sinusoid comes back with no phase shift."""
    coeffs = design_butterworth(FilterSpec("band-pass", 1.0, 45.0, order=4), FS)
    t = np.arange(5000) / FS
    x = np.sin(2 * np.pi * 10.0 * t)
    y = filtfilt(SignalTrace(x, FS), coeffs).samples
    # cross-correlation peak at zero lag
    lags = np.arange(-20, 21)
    xc = [np.dot(y[200:-200], np.roll(x, l)[200:-200]) for l in lags]
    assert lags[int(np.argmax(xc))] == 0
    # and the effective gain is the squared single-pass magnitude
    gain = np.max(np.abs(y[500:-500]))
    assert gain == pytest.approx(magnitude(coeffs, 10.0, FS) ** 2, rel=1e-3)


def test_filtfilt_symmetric_pulse_stays_centred():
    coeffs = design_butterworth(FilterSpec("low-pass", 20.0, order=4), FS)
    x = np.zeros(1001)
    x[500] = 1.0
    y = filtfilt(SignalTrace(x, FS), coeffs).samples
    assert int(np.argmax(y)) == 500
    np.testing.assert_allclose(y[500 - 100 : 500], y[501 : 501 + 100][::-1], atol=1e-12)


def test_filtfilt_linearity():
    rng = np.random.default_rng(0)
    coeffs = design_butterworth(FilterSpec("high-pass", 1.0, order=4), FS)
    x1, x2 = rng.normal(size=600), rng.normal(size=600)
    lhs = filtfilt(SignalTrace(3.0 * x1 - 2.0 * x2, FS), coeffs).samples
    rhs = (3.0 * filtfilt(SignalTrace(x1, FS), coeffs).samples
           - 2.0 * filtfilt(SignalTrace(x2, FS), coeffs).samples)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_filtfilt_identity_coefficients():
    x = np.random.default_rng(1).normal(size=100)
    y = filtfilt(SignalTrace(x, FS), IDENTITY_COEFFICIENTS)
    assert np.array_equal(y.samples, x)


def test_filtfilt_rejects_short_traces():
    coeffs = design_butterworth(FilterSpec("low-pass", 10.0, order=4), FS)
    with pytest.raises(ValueError):
        filtfilt(SignalTrace(np.zeros(3 * coeffs.order), FS), coeffs)
    # one longer than the pad is fine
    filtfilt(SignalTrace(np.zeros(3 * coeffs.order + 1), FS), coeffs)


# ---------------------------------------------------------- decimate


def test_decimate_length_rate_and_identity():
    x = np.random.default_rng(2).normal(size=1001)
    out = decimate(SignalTrace(x, 500.0), 2)
    assert out.fs == 250.0
    assert len(out) == 501  # ceil(1001 / 2)
    same = decimate(SignalTrace(x, 500.0), 1)
    assert same.fs == 500.0 and np.array_equal(same.samples, x)
    with pytest.raises(ValueError):
        decimate(SignalTrace(x, 500.0), 0)


def test_decimate_preserves_passband_and_kills_aliases():
    t = np.arange(10000) / 500.0
    lo = np.sin(2 * np.pi * 5.0 * t)
    hi = np.sin(2 * np.pi * 200.0 * t)  # above the new 125 Hz Nyquist
    out_lo = decimate(SignalTrace(lo, 500.0), 2).samples
    out_hi = decimate(SignalTrace(hi, 500.0), 2).samples
    assert np.max(np.abs(out_lo[100:-100])) == pytest.approx(1.0, abs=0.01)
    assert np.max(np.abs(out_hi[100:-100])) < 0.01


# ------------------------------------------------------- preprocessing


def test_preprocess_channel_responses():
    rng = np.random.default_rng(3)
    t = np.arange(30000) / FS
    # drift (0.3 Hz), in-band QRS-ish (10 Hz), narrowband low (3 Hz), mains (50 Hz)
    sig = (2.0 * np.sin(2 * np.pi * 0.3 * t) + np.sin(2 * np.pi * 10.0 * t)
           + np.sin(2 * np.pi * 3.0 * t) + 0.5 * np.sin(2 * np.pi * 50.0 * t))
    chans = preprocess_channels(SignalTrace(sig, FS))
    assert len(chans) == 3
    for c in chans:
        assert len(c) == len(sig) and c.fs == FS
        assert c.samples.mean() == pytest.approx(0.0, abs=1e-9)
        assert c.samples.var() == pytest.approx(1.0, abs=1e-9)

    def band_power(x, f):
        spec = np.abs(np.fft.rfft(x)) ** 2
        freqs = np.fft.rfftfreq(x.size, 1 / FS)
        sel = np.abs(freqs - f) < 0.2
        return spec[sel].sum() / spec.sum()

    ch0, ch1, ch2 = (c.samples for c in chans)
    # band-pass 1-45: keeps 10 Hz, rejects drift and mains
    assert band_power(ch0, 10.0) > 0.3
    assert band_power(ch0, 0.3) < 0.01
    assert band_power(ch0, 50.0) < 0.05
    # band-pass 1-5: keeps 3 Hz, rejects 10 Hz
    assert band_power(ch1, 3.0) > 0.5
    assert band_power(ch1, 10.0) < 0.05
    # high-pass 1: rejects drift, keeps 10 Hz and mains
    assert band_power(ch2, 0.3) < 0.01
    assert band_power(ch2, 10.0) > 0.2


def test_preprocess_requires_250hz():
    with pytest.raises(ValueError):
        preprocess_channels(SignalTrace(np.zeros(1000), 500.0))


def test_standardize_constant_is_zeros():
    assert np.array_equal(standardize(np.full(50, 3.7)), np.zeros(50))


# --------------------------------------------------------- Hilbert


def test_hilbert_envelope_unit_sinusoid():
    # integer number of periods so FFT leakage does not pollute the check
    t = np.arange(4000) / FS
    x = np.sin(2 * np.pi * 17.5 * t)
    env = hilbert_envelope(SignalTrace(x, FS)).samples
    interior = env[200:-200]
    np.testing.assert_allclose(interior, 1.0, atol=1e-3)


def test_hilbert_envelope_am_oracle():
    # envelope of (1 + 0.5 cos(2 pi fm t)) cos(2 pi fc t) is the modulator
    t = np.arange(8000) / FS
    modulator = 1.0 + 0.5 * np.cos(2 * np.pi * 2.0 * t)
    x = modulator * np.cos(2 * np.pi * 40.0 * t)
    env = hilbert_envelope(SignalTrace(x, FS)).samples
    np.testing.assert_allclose(env[300:-300], modulator[300:-300], atol=5e-3)


# -------------------------------------------------------- find_peaks


def oracle_local_maxima(x):
    """Independent plateau-aware strict-maximum enumeration."""
    peaks = []
    n = len(x)
    for i in range(1, n - 1):
        if not x[i] > x[i - 1]:
            continue
        j = i
        while j + 1 < n and x[j + 1] == x[j]:
            j += 1
        if j + 1 < n and x[j + 1] < x[j]:
            peaks.append(i)
    return peaks


def oracle_prominence_width(x, p):
    n = len(x)
    h = x[p]
    window = []
    i = p - 1
    while i >= 0 and x[i] <= h:
        window.append(x[i])
        i -= 1
    left_base_pos = i + 1 + int(np.argmin(window[::-1])) if window else p
    left_base = min(window) if window else h
    window_r = []
    j = p + 1
    while j < n and x[j] <= h:
        window_r.append(x[j])
        j += 1
    right_base_pos = p + 1 + int(np.argmin(window_r)) if window_r else p
    right_base = min(window_r) if window_r else h
    prom = h - max(left_base, right_base)
    ref = h - prom / 2.0
    # left crossing
    li = p
    while li > left_base_pos and x[li - 1] >= ref:
        li -= 1
    if li > left_base_pos:
        left_ip = li - 1 + (ref - x[li - 1]) / (x[li] - x[li - 1])
    else:
        left_ip = float(left_base_pos)
    ri = p
    while ri < right_base_pos and x[ri + 1] >= ref:
        ri += 1
    if ri < right_base_pos:
        right_ip = ri + (x[ri] - ref) / (x[ri] - x[ri + 1])
    else:
        right_ip = float(right_base_pos)
    return prom, right_ip - left_ip


def oracle_find_peaks(x, constraints):
    cands = []
    for p in oracle_local_maxima(x):
        _, width = oracle_prominence_width(x, p)
        if x[p] >= constraints.min_height and width <= constraints.max_width:
            cands.append((x[p], p))
    cands.sort(key=lambda hp: (-hp[0], hp[1]))
    chosen = []
    for h, p in cands:
        if all(abs(p - q) >= constraints.min_distance for q in chosen):
            chosen.append(p)
    chosen.sort()
    return chosen


def test_find_peaks_matches_brute_force_on_random_signals():
    rng = np.random.default_rng(4)
    for trial in range(200):
        n = int(rng.integers(10, 200))
        x = rng.normal(size=n)
        if trial % 3 == 0:
            x = np.round(x, 1)  # force plateaus and ties
        constraints = PeakConstraints(
            min_height=float(rng.uniform(-1.0, 1.0)),
            min_distance=int(rng.integers(1, 15)),
            max_width=float(rng.uniform(1.0, 30.0)),
        )
        got = find_peaks(SignalTrace(x, FS), constraints)
        want = oracle_find_peaks(x, constraints)
        assert list(got.indices) == want, f"trial {trial}"
        assert np.array_equal(got.heights, x[got.indices])


def test_find_peaks_min_distance_keeps_taller():
    x = np.zeros(200)
    x[100] = 1.0
    x[108] = 0.8
    got = find_peaks(SignalTrace(x, FS), PeakConstraints(min_height=0.5,
                                                         min_distance=12,
                                                         max_width=50.0))
    assert list(got.indices) == [100]


def test_find_peaks_plateau_reports_leftmost():
    x = np.zeros(20)
    x[8:11] = 1.0
    got = find_peaks(SignalTrace(x, FS), PeakConstraints(min_height=0.5,
                                                         min_distance=1,
                                                         max_width=50.0))
    assert list(got.indices) == [8]


def test_find_peaks_width_constraint_rejects_broad_bumps():
    t = np.arange(500) / FS
    narrow = np.exp(-0.5 * ((t - 0.4) / 0.010) ** 2)
    broad = np.exp(-0.5 * ((t - 1.4) / 0.100) ** 2)
    x = narrow + broad
    got = find_peaks(SignalTrace(x, FS), PeakConstraints(min_height=0.5,
                                                         min_distance=12,
                                                         max_width=25.0))
    assert list(got.indices) == [100]  # only the narrow one survives


def test_find_peaks_respects_output_invariants():
    rng = np.random.default_rng(5)
    x = rng.normal(size=500)
    got = find_peaks(SignalTrace(x, FS), PeakConstraints(min_height=-10.0,
                                                         min_distance=7,
                                                         max_width=100.0))
    assert np.all(np.diff(got.indices) >= 7)
    with pytest.raises(ValueError):
        find_peaks(SignalTrace(np.zeros(2), FS), PeakConstraints())
    with pytest.raises(ValueError):
        PeakConstraints(min_distance=0)
    with pytest.raises(ValueError):
        PeakSet(np.array([5, 3]), np.array([1.0, 1.0]))  # not increasing
