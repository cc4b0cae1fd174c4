"""Recording I/O, synthetic ear-ECG generation, windowing and splits.

The synthetic generator stands in for real paired ear/reference
recordings: the reference channel is a clean PQRST beat train built from
Gaussian bumps, and the ear channel is a strongly attenuated copy buried
under pink noise, low-frequency drift, mains interference and sparse
impulse artefacts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import PeakConstraints, PeakSet, SignalTrace, find_peaks, preprocess_channels

WINDOW_LEN = 500  # 2 s at 250 Hz
WINDOW_HOP = 100  # 0.4 s at 250 Hz

# Gaussian bump model of one beat: (amplitude, offset from R in s, sigma in s)
PQRST_BUMPS = {
    "P": (0.15, -0.20, 0.035),
    "Q": (-0.12, -0.025, 0.010),
    "R": (1.00, 0.0, 0.012),
    "S": (-0.25, 0.025, 0.012),
    "T": (0.35, 0.22, 0.060),
}

MORPHOLOGY_JITTER = 0.10  # +-10% per-subject spread on bump amplitudes/widths
IMPULSE_SIGMA_S = 0.008
IMPULSE_REL_AMPLITUDE = 3.0  # impulse height relative to the ear-channel R peak


class LoadError(ValueError):
    """A recording file failed validation."""


@dataclass
class Recording:
    subject_id: str
    ear: SignalTrace
    reference: SignalTrace

    def __post_init__(self):
        if self.ear.fs != self.reference.fs:
            raise ValueError("ear and reference must share the sampling rate")
        if len(self.ear) != len(self.reference):
            raise ValueError("ear and reference must share the length")

    @property
    def fs(self) -> float:
        return self.ear.fs

    @property
    def duration(self) -> float:
        return self.ear.duration


@dataclass
class SegmentBatch:
    """Aligned training windows: 3x500 inputs, scaled references, binary targets."""

    inputs: np.ndarray  # (N, 3, 500)
    references: np.ndarray  # (N, 500) min-max scaled to [0, 1] per segment
    targets: np.ndarray  # (N, 500) binary
    origins: list[tuple[str, int]]

    def __post_init__(self):
        n = self.inputs.shape[0]
        if not (self.references.shape[0] == n == self.targets.shape[0] == len(self.origins)):
            raise ValueError("inputs, references, targets and origins must agree in N")

    def __len__(self):
        return self.inputs.shape[0]

    @staticmethod
    def concatenate(batches: list["SegmentBatch"]) -> "SegmentBatch":
        return SegmentBatch(
            np.concatenate([b.inputs for b in batches]),
            np.concatenate([b.references for b in batches]),
            np.concatenate([b.targets for b in batches]),
            [o for b in batches for o in b.origins],
        )


@dataclass
class SynthConfig:
    n_subjects: int = 36
    duration_s: float = 300.0
    fs: float = 500.0
    mean_hr_bpm: float = 60.0
    hr_variability: float = 8.0  # bpm; also sets the per-beat RR jitter
    ear_attenuation: float = 0.1
    pink_sigma: float = 0.05
    drift_amp: float = 0.15
    mains_amp: float = 0.03
    impulse_rate: float = 0.25  # events per second
    seed: int = 0

    def validate(self) -> None:
        for name in ("ear_attenuation", "pink_sigma", "drift_amp", "mains_amp",
                     "impulse_rate", "hr_variability"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 40 <= self.mean_hr_bpm <= 180:
            raise ValueError("mean_hr_bpm must be in [40, 180]")
        if self.n_subjects < 0:
            raise ValueError("n_subjects must be >= 0")
        if self.duration_s <= 0 or self.fs <= 0:
            raise ValueError("duration_s and fs must be positive")


def pqrst_beat_times(
    duration_s: float, hr_bpm: float, rr_jitter: float, rng: np.random.Generator
) -> np.ndarray:
    """R-peak instants for one subject."""
    base_rr = 60.0 / hr_bpm
    times = []
    t = rng.uniform(0.3, 0.3 + base_rr)
    while t < duration_s - 0.3:
        times.append(t)
        rr = base_rr * (1.0 + rr_jitter * rng.standard_normal())
        t += min(max(rr, 0.3), 2.0)
    return np.asarray(times)


def render_beats(
    duration_s: float,
    fs: float,
    beat_times: np.ndarray,
    amp_scale: dict[str, float] | None = None,
    width_scale: dict[str, float] | None = None,
) -> np.ndarray:
    """Sum of Gaussian PQRST bumps at the given R-peak instants."""
    n = int(round(duration_s * fs))
    out = np.zeros(n)
    t = np.arange(n) / fs
    half = int(round(0.45 * fs))
    for bt in beat_times:
        c = int(round(bt * fs))
        lo, hi = max(c - half, 0), min(c + half, n)
        tt = t[lo:hi]
        for name, (amp, off, sig) in PQRST_BUMPS.items():
            a = amp * (amp_scale[name] if amp_scale else 1.0)
            s = sig * (width_scale[name] if width_scale else 1.0)
            out[lo:hi] += a * np.exp(-0.5 * ((tt - bt - off) / s) ** 2)
    return out


def canonical_beat(fs: float = 250.0, length: int = 200) -> np.ndarray:
    """One clean beat sampled around its R-peak, peak magnitude 1.

    The R-peak sits at index length // 2.
    """
    t = (np.arange(length) - length // 2) / fs
    out = np.zeros(length)
    for amp, off, sig in PQRST_BUMPS.values():
        out += amp * np.exp(-0.5 * ((t - off) / sig) ** 2)
    return out / np.max(np.abs(out))


def _pink_noise(n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance 1/f noise via spectral shaping."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    pink = np.fft.irfft(spec * scale, n=n)
    sd = pink.std()
    return pink / sd if sd > 0 else pink


def synthesize(cfg: SynthConfig) -> list[Recording]:
    """Deterministic synthetic cohort; one seed stream per subject."""
    cfg.validate()
    recordings = []
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_subjects)
    for si, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        hr = cfg.mean_hr_bpm + cfg.hr_variability * rng.uniform(-1, 1)
        hr = float(np.clip(hr, 40.0, 180.0))
        rr_jitter = cfg.hr_variability / cfg.mean_hr_bpm
        beats = pqrst_beat_times(cfg.duration_s, hr, rr_jitter, rng)
        amp_scale = {k: 1.0 + MORPHOLOGY_JITTER * rng.uniform(-1, 1) for k in PQRST_BUMPS}
        width_scale = {k: 1.0 + MORPHOLOGY_JITTER * rng.uniform(-1, 1) for k in PQRST_BUMPS}
        reference = render_beats(cfg.duration_s, cfg.fs, beats, amp_scale, width_scale)

        n = reference.size
        t = np.arange(n) / cfg.fs
        ear = cfg.ear_attenuation * reference
        if cfg.pink_sigma > 0:
            ear = ear + cfg.pink_sigma * _pink_noise(n, cfg.fs, rng)
        if cfg.drift_amp > 0:
            drift = np.zeros(n)
            for _ in range(3):
                f = rng.uniform(0.1, 0.5)
                phase = rng.uniform(0, 2 * np.pi)
                drift += (cfg.drift_amp / 3.0) * np.sin(2 * np.pi * f * t + phase)
            ear = ear + drift
        if cfg.mains_amp > 0:
            ear = ear + cfg.mains_amp * np.sin(2 * np.pi * 50.0 * t + rng.uniform(0, 2 * np.pi))
        if cfg.impulse_rate > 0:
            n_events = rng.poisson(cfg.impulse_rate * cfg.duration_s)
            for _ in range(n_events):
                t0 = rng.uniform(0, cfg.duration_s)
                amp = (IMPULSE_REL_AMPLITUDE * cfg.ear_attenuation
                       * (0.5 + rng.random()) * rng.choice(np.array([-1.0, 1.0])))
                lo = max(int((t0 - 0.05) * cfg.fs), 0)
                hi = min(int((t0 + 0.05) * cfg.fs), n)
                ear[lo:hi] += amp * np.exp(
                    -0.5 * ((t[lo:hi] - t0) / IMPULSE_SIGMA_S) ** 2
                )
        recordings.append(
            Recording(
                subject_id=f"s{si:02d}",
                ear=SignalTrace(ear, cfg.fs),
                reference=SignalTrace(reference, cfg.fs),
            )
        )
    return recordings


def save_recording(rec: Recording, out_dir) -> Path:
    """Write <subject>.csv (t,ear,ref) plus a <subject>.json sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{rec.subject_id}.csv"
    t = np.arange(len(rec.ear)) / rec.fs
    with open(csv_path, "w") as f:
        f.write("t,ear,ref\n")
        for ti, e, r in zip(t, rec.ear.samples, rec.reference.samples):
            f.write(f"{ti:.17g},{e:.17g},{r:.17g}\n")
    sidecar = {"subject_id": rec.subject_id, "fs": rec.fs}
    with open(csv_path.with_suffix(".json"), "w") as f:
        json.dump(sidecar, f, sort_keys=True)
        f.write("\n")
    return csv_path


def load_recording(csv_path) -> Recording:
    """Read and validate a recording written by :func:`save_recording`."""
    csv_path = Path(csv_path)
    sidecar_path = csv_path.with_suffix(".json")
    if not sidecar_path.exists():
        raise LoadError(f"{csv_path}: missing metadata sidecar {sidecar_path.name}")
    with open(sidecar_path) as f:
        meta = json.load(f)
    for key in ("subject_id", "fs"):
        if key not in meta:
            raise LoadError(f"{sidecar_path}: missing key {key!r}")
    fs = float(meta["fs"])
    with open(csv_path) as f:
        header = f.readline().strip()
        if header != "t,ear,ref":
            raise LoadError(f"{csv_path}: expected header 't,ear,ref', got {header!r}")
        try:
            data = np.loadtxt(f, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise LoadError(f"{csv_path}: unparseable data ({exc})") from exc
    if data.shape[1] != 3:
        raise LoadError(f"{csv_path}: expected 3 columns, got {data.shape[1]}")
    bad = np.nonzero(~np.isfinite(data).all(axis=1))[0]
    if bad.size:
        raise LoadError(f"{csv_path}: non-finite value at row {bad[0]}")
    t = data[:, 0]
    if t.size > 1:
        dt = np.diff(t)
        if np.any(np.abs(dt * fs - 1.0) > 1e-3):
            row = int(np.argmax(np.abs(dt * fs - 1.0) > 1e-3))
            raise LoadError(
                f"{csv_path}: non-uniform timestamps near row {row} "
                f"(fs sidecar says {fs} Hz)"
            )
    return Recording(
        subject_id=str(meta["subject_id"]),
        ear=SignalTrace(data[:, 1], fs),
        reference=SignalTrace(data[:, 2], fs),
    )


def reference_peaks(reference: SignalTrace) -> PeakSet:
    """Ground-truth R-peaks from the clean reference trace.

    findpeaks with min_distance 12, a height floor of 0.4x the trace
    maximum, and the 25-sample width cap. T-waves fail both guards: they
    sit near 0.4x the R amplitude but are ~35 samples wide at
    half-prominence, while R-peaks are ~7.
    """
    floor = 0.4 * float(np.max(reference.samples))
    constraints = PeakConstraints(min_height=floor, min_distance=12, max_width=25.0)
    return find_peaks(reference, constraints)


def make_targets(reference: SignalTrace, peaks: PeakSet) -> np.ndarray:
    """Binary array: 1 at each peak and its two neighbours, clamped at edges."""
    n = len(reference)
    out = np.zeros(n)
    for p in peaks.indices:
        if not 0 <= p < n:
            raise ValueError(f"peak index {p} outside [0, {n})")
        out[max(p - 1, 0) : min(p + 2, n)] = 1.0
    return out


def minmax_scale(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi - lo < 1e-12:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def segment(rec: Recording) -> SegmentBatch:
    """Sliding 500-sample windows with a 100-sample hop at 250 Hz."""
    if rec.fs != 250:
        raise ValueError(f"segment expects 250 Hz recordings, got {rec.fs}")
    n = len(rec.ear)
    if n < WINDOW_LEN:
        raise ValueError(f"recording too short to window: {n} < {WINDOW_LEN}")
    channels = np.stack([c.samples for c in preprocess_channels(rec.ear)])
    truth = reference_peaks(rec.reference)
    target_full = make_targets(rec.reference, truth)
    starts = range(0, n - WINDOW_LEN + 1, WINDOW_HOP)
    inputs = np.stack([channels[:, s : s + WINDOW_LEN] for s in starts])
    references = np.stack(
        [minmax_scale(rec.reference.samples[s : s + WINDOW_LEN]) for s in starts]
    )
    targets = np.stack([target_full[s : s + WINDOW_LEN] for s in starts])
    origins = [(rec.subject_id, s) for s in starts]
    return SegmentBatch(inputs, references, targets, origins)


def loso_split(
    recordings: list[Recording], held_out: str
) -> tuple[list[Recording], list[Recording]]:
    """Leave-one-subject-out partition."""
    subjects = {r.subject_id for r in recordings}
    if held_out not in subjects:
        raise ValueError(f"unknown subject {held_out!r}; have {sorted(subjects)}")
    train = [r for r in recordings if r.subject_id != held_out]
    test = [r for r in recordings if r.subject_id == held_out]
    return train, test
