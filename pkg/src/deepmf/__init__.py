"""Deep matched filter for R-peak detection in low-SNR single-ear ECG."""

from .data import Recording, SynthConfig, load_recording, save_recording, synthesize
from .dsp import (
    FilterSpec,
    PeakConstraints,
    PeakSet,
    SignalTrace,
    decimate,
    design_butterworth,
    filtfilt,
    find_peaks,
    hilbert_envelope,
    preprocess_channels,
)
from .estimators import (
    DEEPMF_DEFAULT_THRESHOLD,
    DeepMFDetector,
    MatchedFilterDetector,
    MfHtDetector,
)
from .evaluation import match_peaks, pooled_curve, pr_sweep, run_loso, summarize
from .model import (
    DeepMfParams,
    EcgTemplate,
    TrainConfig,
    export_kernels,
    infer_stream,
    init_params,
    load_model,
    save_model,
)

__version__ = "0.1.0"

__all__ = [
    "DEEPMF_DEFAULT_THRESHOLD",
    "DeepMFDetector",
    "DeepMfParams",
    "EcgTemplate",
    "FilterSpec",
    "MatchedFilterDetector",
    "MfHtDetector",
    "PeakConstraints",
    "PeakSet",
    "Recording",
    "SignalTrace",
    "SynthConfig",
    "TrainConfig",
    "decimate",
    "design_butterworth",
    "export_kernels",
    "filtfilt",
    "find_peaks",
    "hilbert_envelope",
    "infer_stream",
    "init_params",
    "load_model",
    "load_recording",
    "match_peaks",
    "pooled_curve",
    "pr_sweep",
    "preprocess_channels",
    "run_loso",
    "save_model",
    "save_recording",
    "summarize",
    "synthesize",
]
