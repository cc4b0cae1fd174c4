"""Matched-filter baselines against a per-lag Pearson oracle."""

import numpy as np
import pytest

from deepmf import model as mdl
from deepmf.baselines import (
    MfhtConfig,
    matched_filter,
    mf_detect,
    mfht_detect,
)
from deepmf.data import canonical_beat
from deepmf.dsp import SignalTrace

FS = 250.0


def oracle_matched_filter(x, tpl, r_idx):
    """Pearson correlation computed independently at every lag."""
    k = tpl.size
    out = np.zeros(x.size)
    for lag in range(x.size - k + 1):
        win = x[lag : lag + k]
        wc = win - win.mean()
        tc = tpl - tpl.mean()
        denom = np.sqrt((wc @ wc) * (tc @ tc))
        out[lag + r_idx] = (wc @ tc) / denom if denom > 1e-12 else 0.0
    return np.clip(out, -1.0, 1.0)


@pytest.fixture(scope="module")
def template():
    return mdl.canonical_template()


def test_matched_filter_matches_pearson_oracle(template):
    rng = np.random.default_rng(0)
    x = rng.normal(size=1500)
    got = matched_filter(SignalTrace(x, FS), template).samples
    want = oracle_matched_filter(x, template.samples, template.r_peak_index)
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_matched_filter_embedded_template_scores_one(template):
    rng = np.random.default_rng(1)
    x = 0.05 * rng.normal(size=2000)
    x[900:1100] = template.samples  # clean embedded copy
    corr = matched_filter(SignalTrace(x, FS), template).samples
    peak_pos = 900 + template.r_peak_index
    assert corr[peak_pos] == pytest.approx(1.0, abs=1e-6)
    assert int(np.argmax(corr)) == peak_pos


def test_matched_filter_affine_invariance(template):
    rng = np.random.default_rng(2)
    x = rng.normal(size=1000)
    a = matched_filter(SignalTrace(x, FS), template).samples
    b = matched_filter(SignalTrace(3.5 * x + 11.0, FS), template).samples
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_matched_filter_edges_and_bounds(template):
    rng = np.random.default_rng(3)
    x = rng.normal(size=600)
    corr = matched_filter(SignalTrace(x, FS), template).samples
    r = template.r_peak_index
    assert np.all(corr[:r] == 0.0)
    assert np.all(corr[r + (600 - 200 + 1):] == 0.0)
    assert np.all(np.abs(corr) <= 1.0)
    with pytest.raises(ValueError):
        matched_filter(SignalTrace(np.zeros(100), FS), template)  # shorter than k


def test_matched_filter_constant_window_scores_zero(template):
    x = np.zeros(800)
    x[300:500] = template.samples
    corr = matched_filter(SignalTrace(x, FS), template).samples
    # fully-flat windows have zero variance -> correlation defined as 0
    assert corr[150] == 0.0


def make_beat_train(n_beats=20, rr=200, noise=0.0, seed=4):
    """Clean 250 Hz trace with template beats every `rr` samples."""
    beat = canonical_beat()
    n = (n_beats + 1) * rr + 400
    x = np.zeros(n)
    positions = []
    for i in range(n_beats):
        start = 200 + i * rr
        x[start : start + 200] += beat
        positions.append(start + 100)
    rng = np.random.default_rng(seed)
    if noise:
        x = x + noise * rng.normal(size=n)
    return SignalTrace(x, FS), positions


def test_mf_detect_finds_clean_beats(template):
    trace, positions = make_beat_train()
    got = mf_detect(trace, template, min_height=0.9)
    assert list(got.indices) == positions


def test_mf_detect_threshold_above_one_finds_nothing(template):
    trace, _ = make_beat_train()
    got = mf_detect(trace, template, min_height=1.01)
    assert len(got) == 0


def test_mfht_equals_mf_on_clean_regular_rhythm(template):
    trace, positions = make_beat_train()
    mf = mf_detect(trace, template, min_height=0.9)
    # a high acceptance threshold on clean data reduces MF-HT to MF; the
    # shipped default (0.25) additionally admits edge side lobes by design
    ht = mfht_detect(trace, template, MfhtConfig(accept_threshold=0.55))
    # envelope peaks may sit within a sample of the correlation peaks
    assert len(ht) == len(mf)
    assert np.all(np.abs(ht.indices - mf.indices) <= 1)
    assert np.all(np.abs(ht.indices - np.asarray(positions)) <= 1)


def test_mfht_rejects_rr_implausible_candidate(template):
    """An extra beat-like artefact between two true beats violates the
    running RR statistics and must be rejected despite correlating well."""
    trace, positions = make_beat_train(n_beats=12)
    x = trace.samples.copy()
    bad = positions[8] + 60  # 0.24 s after a true beat; plausible RR is 0.8 s
    x[bad - 100 : bad + 100] += 0.9 * canonical_beat()
    got = mfht_detect(SignalTrace(x, FS), template,
                      MfhtConfig(rr_weight=1.5, accept_threshold=0.55))
    assert bad not in set(got.indices.tolist())
    hits = sum(1 for p in positions if np.min(np.abs(got.indices - p)) <= 1)
    assert hits >= 10  # true beats still detected


def test_mfht_zero_rr_weight_degenerates_to_correlation_rule(template):
    trace, positions = make_beat_train(n_beats=12)
    x = trace.samples.copy()
    bad = positions[8] + 60
    x[bad - 100 : bad + 100] += 0.9 * canonical_beat()
    noisy = SignalTrace(x, FS)
    no_rr = mfht_detect(noisy, template, MfhtConfig(rr_weight=0.0,
                                                    accept_threshold=0.55))
    # without the RR term the artefact is accepted (envelope smoothing can
    # move its peak by a couple of samples)
    assert np.min(np.abs(no_rr.indices - bad)) <= 3


def test_mfht_config_validation():
    with pytest.raises(ValueError):
        MfhtConfig(rr_weight=-1.0)
    with pytest.raises(ValueError):
        MfhtConfig(smoothing_width=0)
    with pytest.raises(ValueError):
        MfhtConfig(rr_window=0)
