"""The deep matched filter: architecture, training and inference.

Three sub-networks operating on 2 s windows (500 samples at 250 Hz):

* encoder - a 200-tap "matched filter" convolution (kernels optionally
  initialised with a shifted ECG template) followed by three stride-2
  refinement convolutions, producing a 6x63 latent;
* decoder - four transposed convolutions mirroring the encoder, trained
  jointly with it to reproduce the clean reference beat train;
* classifier - one convolution plus a dense layer mapping the latent to
  per-sample R-peak scores.

Training is two-phase: encoder-decoder on MSE against the scaled
reference, then the classifier on MSE against the binary peak targets
with the encoder frozen.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .data import SegmentBatch, canonical_beat
from .dsp import PeakSet, SignalTrace, preprocess_channels
from .nn import ConvLayer, LinearLayer, TransposeConvLayer

INPUT_CHANNELS = 3
WINDOW_LEN = 500
TEMPLATE_LEN = 200
LATENT_CHANNELS = 6
LATENT_LEN = 63
CLASSIFIER_IN = LATENT_CHANNELS * LATENT_LEN  # 378
INFERENCE_KERNELS = 162  # encoder 18+36+36+36 plus classifier conv 36

# (in_channels, out_channels, kernel_len, stride) per encoder layer
ENCODER_SHAPE = [(3, 6, 200, 1), (6, 6, 50, 2), (6, 6, 50, 2), (6, 6, 50, 2)]
# decoder mirrors the encoder in reverse; final layer emits one channel
DECODER_SHAPE = [(6, 6, 50, 2), (6, 6, 50, 2), (6, 6, 50, 2), (6, 1, 200, 1)]
DECODER_TARGET_LENS = (125, 250, 500, 500)
CLASSIFIER_CONV_SHAPE = (6, 6, 50, 1)

DEFAULT_TEMPLATE_SHIFTS = (-50, -30, -10, 10, 30, 50)

MODEL_FORMAT_VERSION = 1


class InsufficientDataError(ValueError):
    pass


@dataclass
class EcgTemplate:
    """A 200-sample beat template, peak magnitude 1, for 250 Hz signals."""

    samples: np.ndarray
    r_peak_index: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.size != TEMPLATE_LEN:
            raise ValueError(f"template must have {TEMPLATE_LEN} samples")
        peak = float(np.max(np.abs(self.samples)))
        if not np.isclose(peak, 1.0):
            raise ValueError("template must be normalized to unit peak magnitude")
        if int(np.argmax(np.abs(self.samples))) != self.r_peak_index:
            raise ValueError("r_peak_index must be the argmax of |samples|")


def canonical_template() -> EcgTemplate:
    """The built-in synthetic PQRST template (fallback for build_template)."""
    samples = canonical_beat(fs=250.0, length=TEMPLATE_LEN)
    return EcgTemplate(samples, int(np.argmax(np.abs(samples))))


@dataclass
class TrainConfig:
    enc_dec_epochs: int = 10
    classifier_epochs: int = 15
    batch_size: int = 10
    lr: float = 1e-3
    seed: int = 0
    template_init: bool = True
    dropout_p: float = 0.5
    template_shifts: tuple[int, ...] = DEFAULT_TEMPLATE_SHIFTS

    def __post_init__(self):
        if self.enc_dec_epochs < 0 or self.classifier_epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if len(self.template_shifts) != LATENT_CHANNELS:
            raise ValueError(f"need {LATENT_CHANNELS} template shifts")


@dataclass
class DeepMfParams:
    encoder: list[ConvLayer]
    decoder: list[TransposeConvLayer]
    classifier_conv: ConvLayer
    classifier_linear: LinearLayer
    template: np.ndarray | None = None
    template_shifts: tuple[int, ...] = DEFAULT_TEMPLATE_SHIFTS
    template_init: bool = True
    seed: int = 0

    def __post_init__(self):
        count = self.inference_kernel_count()
        if count != INFERENCE_KERNELS:
            raise ValueError(
                f"inference kernel count {count} != {INFERENCE_KERNELS}"
            )
        if self.classifier_linear.weights.shape != (WINDOW_LEN, CLASSIFIER_IN):
            raise ValueError("classifier linear must map 378 -> 500")

    def inference_kernel_count(self) -> int:
        n = sum(l.out_channels * l.in_channels for l in self.encoder)
        n += self.classifier_conv.out_channels * self.classifier_conv.in_channels
        return n

    def encoder_decoder_arrays(self) -> list[np.ndarray]:
        out = []
        for l in self.encoder:
            out += [l.weights, l.bias]
        for l in self.decoder:
            out += [l.weights, l.bias]
        return out

    def classifier_arrays(self) -> list[np.ndarray]:
        return [
            self.classifier_conv.weights,
            self.classifier_conv.bias,
            self.classifier_linear.weights,
            self.classifier_linear.bias,
        ]


def _rng_for(seed: int, stage: int) -> np.random.Generator:
    # one root seed, split deterministically per stage
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stage,)))


_STAGE_INIT, _STAGE_ENCDEC, _STAGE_CLASSIFIER = 0, 1, 2


def build_template(reference: SignalTrace, peaks: PeakSet) -> EcgTemplate:
    """Average of 200-sample beat windows, R-peak centred at index 100."""
    half = TEMPLATE_LEN // 2
    n = len(reference)
    usable = [p for p in peaks.indices if p - half >= 0 and p + half <= n]
    if len(usable) < 5:
        raise InsufficientDataError(
            f"need >= 5 beats with {half}-sample margins, got {len(usable)}"
        )
    windows = np.stack([reference.samples[p - half : p + half] for p in usable])
    mean = windows.mean(axis=0)
    mean = mean / np.max(np.abs(mean))
    return EcgTemplate(mean, int(np.argmax(np.abs(mean))))


def _uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(template: EcgTemplate, cfg: TrainConfig) -> DeepMfParams:
    """Random initialisation, optionally seeding the first-layer kernels of
    input channel 0 with circularly shifted copies of the ECG template."""
    rng = _rng_for(cfg.seed, _STAGE_INIT)
    encoder = []
    for ci, co, k, s in ENCODER_SHAPE:
        fan_in = ci * k
        encoder.append(
            ConvLayer(_uniform_init(rng, (co, ci, k), fan_in),
                      _uniform_init(rng, (co,), fan_in), s)
        )
    decoder = []
    for ci, co, k, s in DECODER_SHAPE:
        fan_in = ci * k
        decoder.append(
            TransposeConvLayer(_uniform_init(rng, (ci, co, k), fan_in),
                               _uniform_init(rng, (co,), fan_in), s)
        )
    ci, co, k, s = CLASSIFIER_CONV_SHAPE
    classifier_conv = ConvLayer(
        _uniform_init(rng, (co, ci, k), ci * k), _uniform_init(rng, (co,), ci * k), s
    )
    classifier_linear = LinearLayer(
        _uniform_init(rng, (WINDOW_LEN, CLASSIFIER_IN), CLASSIFIER_IN),
        _uniform_init(rng, (WINDOW_LEN,), CLASSIFIER_IN),
    )
    if cfg.template_init:
        # match the RMS of the uniform(+-1/sqrt(fan_in)) draw
        fan_in = INPUT_CHANNELS * TEMPLATE_LEN
        target_rms = (1.0 / np.sqrt(fan_in)) / np.sqrt(3.0)
        scale = target_rms / np.sqrt(np.mean(template.samples**2))
        for o, shift in enumerate(cfg.template_shifts):
            encoder[0].weights[o, 0, :] = scale * np.roll(template.samples, shift)
    return DeepMfParams(
        encoder=encoder,
        decoder=decoder,
        classifier_conv=classifier_conv,
        classifier_linear=classifier_linear,
        template=template.samples.copy(),
        template_shifts=tuple(cfg.template_shifts),
        template_init=cfg.template_init,
        seed=cfg.seed,
    )


_ENCODER_ACTIVATIONS = ("relu", "relu", "relu", "sigmoid")


def _encode_forward(params, x, mode, dropout_p, rng=None, masks=None):
    cache = []
    a = x
    for li, layer in enumerate(params.encoder):
        z = nn.conv1d_forward(a, layer)
        act = nn.relu(z) if _ENCODER_ACTIVATIONS[li] == "relu" else nn.sigmoid(z)
        if masks is not None:
            mask = masks[li]
            d = act * mask if mask is not None else act
        else:
            d, mask = nn.dropout(act, dropout_p, mode, rng)
        cache.append((a, z, mask))
        a = d
    return a, cache


def _encode_backward(params, cache, upstream):
    grads = []
    up = upstream
    for li in reversed(range(len(params.encoder))):
        a_in, z, mask = cache[li]
        if mask is not None:
            up = up * mask
        if _ENCODER_ACTIVATIONS[li] == "relu":
            up = nn.relu_backward(z, up)
        else:
            up = nn.sigmoid_backward(z, up)
        gx, gw, gb = nn.conv1d_backward(a_in, params.encoder[li], up)
        grads = [gw, gb] + grads
        up = gx
    return grads, up


def _decode_forward(params, z):
    h1 = nn.tconv1d_forward(z, params.decoder[0], DECODER_TARGET_LENS[0])
    s1 = nn.sigmoid(h1)
    h2 = nn.tconv1d_forward(s1, params.decoder[1], DECODER_TARGET_LENS[1])
    h3 = nn.tconv1d_forward(h2, params.decoder[2], DECODER_TARGET_LENS[2])
    h4 = nn.tconv1d_forward(h3, params.decoder[3], DECODER_TARGET_LENS[3])
    cache = (z, h1, s1, h2, h3)
    return h4, cache


def _decode_backward(params, cache, upstream):
    z, h1, s1, h2, h3 = cache
    g3, gw4, gb4 = nn.tconv1d_backward(h3, params.decoder[3], DECODER_TARGET_LENS[3], upstream)
    g2, gw3, gb3 = nn.tconv1d_backward(h2, params.decoder[2], DECODER_TARGET_LENS[2], g3)
    gs1, gw2, gb2 = nn.tconv1d_backward(s1, params.decoder[1], DECODER_TARGET_LENS[1], g2)
    gh1 = nn.sigmoid_backward(h1, gs1)
    gz, gw1, gb1 = nn.tconv1d_backward(z, params.decoder[0], DECODER_TARGET_LENS[0], gh1)
    return [gw1, gb1, gw2, gb2, gw3, gb3, gw4, gb4], gz


def _classify_forward(params, z):
    h = nn.conv1d_forward(z, params.classifier_conv)
    s = nn.sigmoid(h)
    flat = s.reshape(*s.shape[:-2], CLASSIFIER_IN)
    scores = nn.linear_forward(flat, params.classifier_linear)
    return scores, (z, h, s, flat)


def _classify_backward(params, cache, upstream):
    z, h, s, flat = cache
    gflat, gwl, gbl = nn.linear_backward(flat, params.classifier_linear, upstream)
    gs = gflat.reshape(s.shape)
    gh = nn.sigmoid_backward(h, gs)
    gz, gwc, gbc = nn.conv1d_backward(z, params.classifier_conv, gh)
    return [gwc, gbc, gwl, gbl], gz


def encode(
    x: np.ndarray,
    params: DeepMfParams,
    mode: str = "eval",
    dropout_p: float = 0.5,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Latent representation (6 x 63, sigmoid-bounded in eval mode)."""
    _check_input_shape(x)
    latent, _ = _encode_forward(params, x, mode, dropout_p, rng)
    return latent


def decode(z: np.ndarray, params: DeepMfParams) -> np.ndarray:
    """500-sample reconstruction from a latent."""
    _check_latent_shape(z)
    out, _ = _decode_forward(params, z)
    return out[..., 0, :]


def classify(z: np.ndarray, params: DeepMfParams, mode: str = "eval") -> np.ndarray:
    """Raw per-sample R-peak scores (500) from a latent."""
    _check_latent_shape(z)
    scores, _ = _classify_forward(params, z)
    return scores


def _check_input_shape(x):
    x = np.asarray(x)
    if x.shape[-2:] != (INPUT_CHANNELS, WINDOW_LEN):
        raise nn.ShapeError(
            f"expected (..., {INPUT_CHANNELS}, {WINDOW_LEN}) input, got {x.shape}"
        )


def _check_latent_shape(z):
    z = np.asarray(z)
    if z.shape[-2:] != (LATENT_CHANNELS, LATENT_LEN):
        raise nn.ShapeError(
            f"expected (..., {LATENT_CHANNELS}, {LATENT_LEN}) latent, got {z.shape}"
        )


def encdec_loss_and_grads(params, x, ref, dropout_p=0.0, rng=None, masks=None):
    """Joint encoder-decoder MSE loss and gradients (encoder then decoder
    arrays, declaration order). Used by training and the gradient checker."""
    latent, enc_cache = _encode_forward(params, x, "train" if rng or masks else "eval",
                                        dropout_p, rng, masks)
    out, dec_cache = _decode_forward(params, latent)
    pred = out[..., 0, :]
    loss, gpred = nn.mse_loss(pred, ref)
    up = gpred[..., None, :]
    dec_grads, gz = _decode_backward(params, dec_cache, up)
    enc_grads, _ = _encode_backward(params, enc_cache, gz)
    return loss, enc_grads + dec_grads


def classifier_loss_and_grads(params, latents, targets):
    scores, cache = _classify_forward(params, latents)
    loss, gpred = nn.mse_loss(scores, targets)
    grads, _ = _classify_backward(params, cache, gpred)
    return loss, grads


@dataclass
class EpochLog:
    phase: str
    epoch: int
    mean_loss: float
    test_loss: float | None = None


def _batch_starts(n: int, batch_size: int):
    return range(0, n, batch_size)


def _eval_encdec_loss(params, data: SegmentBatch, chunk: int = 50) -> float:
    total, count = 0.0, 0
    for s in _batch_starts(len(data), chunk):
        x = data.inputs[s : s + chunk]
        ref = data.references[s : s + chunk]
        latent, _ = _encode_forward(params, x, "eval", 0.0)
        out, _ = _decode_forward(params, latent)
        diff = out[:, 0, :] - ref
        total += float(np.sum(diff * diff))
        count += diff.size
    return total / count


def train_encoder_decoder(
    params: DeepMfParams,
    data: SegmentBatch,
    cfg: TrainConfig,
    test_data: SegmentBatch | None = None,
) -> tuple[DeepMfParams, list[EpochLog]]:
    """Phase 1: train encoder+decoder to reproduce the scaled reference."""
    if len(data) == 0:
        raise ValueError("empty training dataset")
    rng = _rng_for(cfg.seed, _STAGE_ENCDEC)
    arrays = params.encoder_decoder_arrays()
    state = nn.adam_init(arrays, lr=cfg.lr)
    logs = []
    for epoch in range(cfg.enc_dec_epochs):
        order = rng.permutation(len(data))
        losses = []
        for s in _batch_starts(len(data), cfg.batch_size):
            sel = order[s : s + cfg.batch_size]
            loss, grads = encdec_loss_and_grads(
                params, data.inputs[sel], data.references[sel],
                dropout_p=cfg.dropout_p, rng=rng,
            )
            nn.adam_step(arrays, grads, state)
            losses.append(loss)
        test_loss = _eval_encdec_loss(params, test_data) if test_data is not None else None
        logs.append(EpochLog("encoder-decoder", epoch, float(np.mean(losses)), test_loss))
    return params, logs


def extract_latents(params: DeepMfParams, inputs: np.ndarray, chunk: int = 50) -> np.ndarray:
    """Eval-mode latents for a stack of input windows."""
    outs = []
    for s in _batch_starts(inputs.shape[0], chunk):
        latent, _ = _encode_forward(params, inputs[s : s + chunk], "eval", 0.0)
        outs.append(latent)
    return np.concatenate(outs)


def train_classifier(
    params: DeepMfParams,
    data: SegmentBatch,
    cfg: TrainConfig,
    test_data: SegmentBatch | None = None,
) -> tuple[DeepMfParams, list[EpochLog]]:
    """Phase 2: train the classifier on frozen-encoder latents."""
    if len(data) == 0:
        raise ValueError("empty training dataset")
    rng = _rng_for(cfg.seed, _STAGE_CLASSIFIER)
    latents = extract_latents(params, data.inputs)
    test_latents = extract_latents(params, test_data.inputs) if test_data is not None else None
    arrays = params.classifier_arrays()
    state = nn.adam_init(arrays, lr=cfg.lr)
    logs = []
    for epoch in range(cfg.classifier_epochs):
        order = rng.permutation(len(data))
        losses = []
        for s in _batch_starts(len(data), cfg.batch_size):
            sel = order[s : s + cfg.batch_size]
            loss, grads = classifier_loss_and_grads(params, latents[sel], data.targets[sel])
            nn.adam_step(arrays, grads, state)
            losses.append(loss)
        test_loss = None
        if test_latents is not None:
            scores, _ = _classify_forward(params, test_latents)
            test_loss, _ = nn.mse_loss(scores, test_data.targets)
        logs.append(EpochLog("classifier", epoch, float(np.mean(losses)), test_loss))
    return params, logs


def infer_stream(trace: SignalTrace, params: DeepMfParams, chunk: int = 64) -> SignalTrace:
    """Rolling-window R-peak scores over a full 250 Hz recording.

    2 s windows with a 0.4 s hop; every output sample is the mean of all
    window scores covering it. Samples past the last window's reach are 0.
    """
    if trace.fs != 250:
        raise ValueError(f"infer_stream expects 250 Hz input, got {trace.fs}")
    n = len(trace)
    if n < WINDOW_LEN:
        raise ValueError(f"trace shorter than one window ({n} < {WINDOW_LEN})")
    channels = np.stack([c.samples for c in preprocess_channels(trace)])
    starts = list(range(0, n - WINDOW_LEN + 1, 100))
    sums = np.zeros(n)
    counts = np.zeros(n)
    for cs in _batch_starts(len(starts), chunk):
        batch_starts = starts[cs : cs + chunk]
        x = np.stack([channels[:, s : s + WINDOW_LEN] for s in batch_starts])
        latent, _ = _encode_forward(params, x, "eval", 0.0)
        scores, _ = _classify_forward(params, latent)
        for s, row in zip(batch_starts, scores):
            sums[s : s + WINDOW_LEN] += row
            counts[s : s + WINDOW_LEN] += 1.0
    covered = counts > 0
    out = np.zeros(n)
    out[covered] = sums[covered] / counts[covered]
    return SignalTrace(out, trace.fs)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(np.sum(a * a) * np.sum(b * b))
    if denom == 0:
        return 0.0
    return float(np.sum(a * b) / denom)


def kernel_template_correlations(params: DeepMfParams) -> dict:
    """Pearson correlation of every first-layer kernel with the template.

    Every kernel is compared against the initial template aligned for its
    output channel (the shift that channel's template-initialised kernel
    started from); channel-0 kernels therefore score 1.0 right after
    template initialisation.
    """
    if params.template is None:
        raise ValueError("params carry no template")
    shifted = [np.roll(params.template, s) for s in params.template_shifts]
    w = params.encoder[0].weights
    own = np.array([pearson(w[o, 0], shifted[o]) for o in range(w.shape[0])])
    others = {}
    for i in range(1, w.shape[1]):
        for o in range(w.shape[0]):
            others[(o, i)] = pearson(w[o, i], shifted[o])
    return {"initialized": own, "others": others}


def export_kernels(params: DeepMfParams, stage: str, out_csv) -> None:
    """CSV dump of all first-layer kernels plus the template.

    One row per (out_channel, in_channel) kernel with its 200 taps and its
    Pearson correlation against the aligned initial template; final row is
    the template itself.
    """
    corr = kernel_template_correlations(params)
    w = params.encoder[0].weights
    with open(out_csv, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["stage", "out_ch", "in_ch", "corr"]
                        + [f"tap_{i}" for i in range(TEMPLATE_LEN)])
        for o in range(w.shape[0]):
            for i in range(w.shape[1]):
                if i == 0:
                    c = corr["initialized"][o]
                else:
                    c = corr["others"][(o, i)]
                writer.writerow([stage, o, i, f"{c:.17g}"]
                                + [f"{v:.17g}" for v in w[o, i]])
        writer.writerow(["template", -1, -1, ""]
                        + [f"{v:.17g}" for v in params.template])


def save_model(path, params: DeepMfParams) -> None:
    arrays = {}
    for i, l in enumerate(params.encoder):
        arrays[f"encoder{i}_weights"] = l.weights
        arrays[f"encoder{i}_bias"] = l.bias
    for i, l in enumerate(params.decoder):
        arrays[f"decoder{i}_weights"] = l.weights
        arrays[f"decoder{i}_bias"] = l.bias
    arrays["classifier_conv_weights"] = params.classifier_conv.weights
    arrays["classifier_conv_bias"] = params.classifier_conv.bias
    arrays["classifier_linear_weights"] = params.classifier_linear.weights
    arrays["classifier_linear_bias"] = params.classifier_linear.bias
    if params.template is not None:
        arrays["template"] = params.template
    meta = {
        "model_format_version": MODEL_FORMAT_VERSION,
        "encoder_strides": [l.stride for l in params.encoder],
        "decoder_strides": [l.stride for l in params.decoder],
        "classifier_conv_stride": params.classifier_conv.stride,
        "template_shifts": list(params.template_shifts),
        "template_init": params.template_init,
        "seed": params.seed,
    }
    nn.save_arrays(path, arrays, meta)


def load_model(path) -> DeepMfParams:
    arrays, meta = nn.load_arrays(path)
    if meta.get("model_format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format in {path}")
    encoder = [
        ConvLayer(arrays[f"encoder{i}_weights"], arrays[f"encoder{i}_bias"],
                  meta["encoder_strides"][i])
        for i in range(4)
    ]
    decoder = [
        TransposeConvLayer(arrays[f"decoder{i}_weights"], arrays[f"decoder{i}_bias"],
                           meta["decoder_strides"][i])
        for i in range(4)
    ]
    return DeepMfParams(
        encoder=encoder,
        decoder=decoder,
        classifier_conv=ConvLayer(
            arrays["classifier_conv_weights"], arrays["classifier_conv_bias"],
            meta["classifier_conv_stride"],
        ),
        classifier_linear=LinearLayer(
            arrays["classifier_linear_weights"], arrays["classifier_linear_bias"]
        ),
        template=arrays.get("template"),
        template_shifts=tuple(meta["template_shifts"]),
        template_init=meta["template_init"],
        seed=meta["seed"],
    )
