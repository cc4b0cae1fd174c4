"""scikit-learn style detector estimators.

Each detector follows the fit/predict convention: `fit` takes a list of
250 Hz :class:`~deepmf.data.Recording` objects, `decision_function` maps a
raw ear trace to a per-sample score trace, and `predict` returns detected
R-peak sample indices. Hyperparameters are constructor arguments, so
`get_params`/`set_params` and `clone` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import model as mdl
from .baselines import (
    MF_DEFAULT_THRESHOLD,
    PEAK_MAX_WIDTH,
    PEAK_MIN_DISTANCE,
    MfhtConfig,
    matched_filter,
    mf_detect,
    mfht_detect,
)
from .data import Recording, SegmentBatch, reference_peaks, segment
from .dsp import PeakConstraints, PeakSet, SignalTrace, find_peaks, preprocess_channels

DEEPMF_DEFAULT_THRESHOLD = 0.11


def check_recordings(recordings: list[Recording], min_duration: float = 0.0) -> None:
    """Validate a training/evaluation cohort: 250 Hz, long enough."""
    if not recordings:
        raise ValueError("need at least one recording")
    for rec in recordings:
        if rec.fs != 250:
            raise ValueError(
                f"recording {rec.subject_id} is at {rec.fs} Hz; decimate to 250 Hz first"
            )
        if rec.duration < min_duration:
            raise ValueError(
                f"recording {rec.subject_id} is {rec.duration:.1f} s, "
                f"need >= {min_duration:.0f} s"
            )


def check_trace(trace: SignalTrace) -> None:
    if trace.fs != 250:
        raise ValueError(f"expected a 250 Hz trace, got {trace.fs} Hz")


def _fit_template(recordings: list[Recording]) -> mdl.EcgTemplate:
    """Beat template from the first training reference; synthetic fallback."""
    try:
        rec = recordings[0]
        return mdl.build_template(rec.reference, reference_peaks(rec.reference))
    except (mdl.InsufficientDataError, IndexError):
        return mdl.canonical_template()


class DeepMFDetector(BaseEstimator):
    """Trainable deep matched filter for R-peak detection."""

    def __init__(
        self,
        enc_dec_epochs: int = 10,
        classifier_epochs: int = 15,
        batch_size: int = 10,
        lr: float = 1e-3,
        seed: int = 0,
        template_init: bool = True,
        dropout_p: float = 0.5,
        threshold: float = DEEPMF_DEFAULT_THRESHOLD,
    ):
        self.enc_dec_epochs = enc_dec_epochs
        self.classifier_epochs = classifier_epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.template_init = template_init
        self.dropout_p = dropout_p
        self.threshold = threshold

    def _train_config(self) -> mdl.TrainConfig:
        return mdl.TrainConfig(
            enc_dec_epochs=self.enc_dec_epochs,
            classifier_epochs=self.classifier_epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            seed=self.seed,
            template_init=self.template_init,
            dropout_p=self.dropout_p,
        )

    def fit(self, recordings: list[Recording], y=None, test_recordings=None):
        """Two-phase training on 250 Hz recordings."""
        check_recordings(recordings)
        cfg = self._train_config()
        template = _fit_template(recordings)
        params = mdl.init_params(template, cfg)
        data = SegmentBatch.concatenate([segment(r) for r in recordings])
        test_data = None
        if test_recordings:
            test_data = SegmentBatch.concatenate([segment(r) for r in test_recordings])
        params, enc_logs = mdl.train_encoder_decoder(params, data, cfg, test_data)
        params, cls_logs = mdl.train_classifier(params, data, cfg, test_data)
        self.params_ = params
        self.template_ = template
        self.train_log_ = enc_logs + cls_logs
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("DeepMFDetector is not fitted")

    def decision_function(self, trace: SignalTrace) -> SignalTrace:
        """Rolling-window score trace aligned to the input."""
        self._check_fitted()
        check_trace(trace)
        return mdl.infer_stream(trace, self.params_)

    def predict(self, trace: SignalTrace) -> PeakSet:
        scores = self.decision_function(trace)
        return find_peaks(
            scores,
            PeakConstraints(min_height=self.threshold,
                            min_distance=PEAK_MIN_DISTANCE,
                            max_width=PEAK_MAX_WIDTH),
        )


class MatchedFilterDetector(BaseEstimator):
    """Plain normalized matched filter on the 1-45 Hz channel."""

    def __init__(self, threshold: float = MF_DEFAULT_THRESHOLD):
        self.threshold = threshold

    def fit(self, recordings: list[Recording] | None = None, y=None):
        """Fixed template across all subjects (synthetic PQRST)."""
        self.template_ = mdl.canonical_template()
        return self

    def _channel0(self, trace: SignalTrace) -> SignalTrace:
        check_trace(trace)
        return preprocess_channels(trace)[0]

    def decision_function(self, trace: SignalTrace) -> SignalTrace:
        if not hasattr(self, "template_"):
            raise NotFittedError("MatchedFilterDetector is not fitted")
        return matched_filter(self._channel0(trace), self.template_)

    def predict(self, trace: SignalTrace) -> PeakSet:
        if not hasattr(self, "template_"):
            raise NotFittedError("MatchedFilterDetector is not fitted")
        return mf_detect(self._channel0(trace), self.template_, self.threshold)


class MfHtDetector(BaseEstimator):
    """Matched filter + Hilbert envelope + RR plausibility rules.

    The template comes from each evaluated recording's own reference (the
    stand-in for the original algorithm's manually selected template), so
    `predict_recording` takes the full recording rather than a bare trace.
    """

    def __init__(
        self,
        corr_weight: float = 1.0,
        rr_weight: float = 0.5,
        accept_threshold: float = 0.25,
        smoothing_width: int = 5,
        rr_window: int = 8,
    ):
        self.corr_weight = corr_weight
        self.rr_weight = rr_weight
        self.accept_threshold = accept_threshold
        self.smoothing_width = smoothing_width
        self.rr_window = rr_window

    def _config(self) -> MfhtConfig:
        return MfhtConfig(
            corr_weight=self.corr_weight,
            rr_weight=self.rr_weight,
            accept_threshold=self.accept_threshold,
            smoothing_width=self.smoothing_width,
            rr_window=self.rr_window,
        )

    def fit(self, recordings: list[Recording] | None = None, y=None):
        self.fitted_ = True
        return self

    def predict_recording(self, rec: Recording) -> PeakSet:
        if not hasattr(self, "fitted_"):
            raise NotFittedError("MfHtDetector is not fitted")
        check_trace(rec.ear)
        try:
            template = mdl.build_template(rec.reference, reference_peaks(rec.reference))
        except mdl.InsufficientDataError:
            template = mdl.canonical_template()
        channel0 = preprocess_channels(rec.ear)[0]
        return mfht_detect(channel0, template, self._config())
