"""Layer definitions with explicit forward/backward passes.

Only the layer types the architecture needs: 1D convolution with
same-zero padding, its transposed counterpart, ReLU, Sigmoid, inverted
dropout, a dense layer and MSE loss. All arithmetic is 64-bit.

Array convention: a single sample is (channels, length); a batch is
(batch, channels, length). Every function accepts both and returns the
matching rank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


class ShapeError(ValueError):
    pass


@dataclass
class ConvLayer:
    """1D convolution, cross-correlation orientation (no kernel flip)."""

    weights: np.ndarray  # (out_channels, in_channels, kernel_len)
    bias: np.ndarray  # (out_channels,)
    stride: int = 1

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 3 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError("conv weights must be (out, in, k) with matching bias")
        if self.stride < 1:
            raise ShapeError("stride must be >= 1")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_len(self) -> int:
        return self.weights.shape[2]


@dataclass
class TransposeConvLayer:
    """Adjoint of :class:`ConvLayer` with the mirrored configuration.

    Weights are stored (in_channels, out_channels, kernel_len), i.e. the
    in/out roles are swapped relative to the convolution it mirrors.
    """

    weights: np.ndarray  # (in_channels, out_channels, kernel_len)
    bias: np.ndarray  # (out_channels,)
    stride: int = 1

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 3 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeError("tconv weights must be (in, out, k) with matching bias")
        if self.stride < 1:
            raise ShapeError("stride must be >= 1")

    @property
    def in_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_len(self) -> int:
        return self.weights.shape[2]


@dataclass
class LinearLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError("linear weights must be (out, in) with matching bias")


def same_padding(length: int, kernel_len: int, stride: int) -> tuple[int, int, int]:
    """(out_len, pad_left, pad_right) for same-zero padding.

    out_len = ceil(length / stride); total padding split left/right with
    the extra sample on the right when odd.
    """
    out_len = -(-length // stride)
    total = max((out_len - 1) * stride + kernel_len - length, 0)
    pad_left = total // 2
    return out_len, pad_left, total - pad_left


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    if x.ndim == 3:
        return x, False
    raise ShapeError(f"expected (channels, length) or (batch, channels, length), got {x.shape}")


def _pad_batch(x: np.ndarray, pad_left: int, pad_right: int) -> np.ndarray:
    B, C, L = x.shape
    xp = np.zeros((B, C, L + pad_left + pad_right))
    xp[:, :, pad_left : pad_left + L] = x
    return xp


def conv1d_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    xb, single = _as_batch(x)
    if xb.shape[1] != layer.in_channels:
        raise ShapeError(
            f"input has {xb.shape[1]} channels, layer expects {layer.in_channels}"
        )
    L = xb.shape[2]
    out_len, pad_left, pad_right = same_padding(L, layer.kernel_len, layer.stride)
    xp = _pad_batch(xb, pad_left, pad_right)
    out = np.empty((xb.shape[0], layer.out_channels, out_len))
    kernels.conv_fwd(xp, layer.weights, layer.bias, layer.stride, out)
    return out[0] if single else out


def conv1d_backward(
    x: np.ndarray, layer: ConvLayer, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (grad_x, grad_weights, grad_bias) of the forward pass."""
    xb, single = _as_batch(x)
    ub, usingle = _as_batch(upstream)
    if xb.shape[1] != layer.in_channels:
        raise ShapeError("channel mismatch between input and layer")
    L = xb.shape[2]
    out_len, pad_left, pad_right = same_padding(L, layer.kernel_len, layer.stride)
    if ub.shape != (xb.shape[0], layer.out_channels, out_len):
        raise ShapeError(
            f"upstream shape {ub.shape} does not match forward output "
            f"{(xb.shape[0], layer.out_channels, out_len)}"
        )
    xp = _pad_batch(xb, pad_left, pad_right)
    ub = np.ascontiguousarray(ub)
    gxp = np.zeros_like(xp)
    kernels.conv_grad_x(ub, layer.weights, layer.stride, gxp)
    gx = np.ascontiguousarray(gxp[:, :, pad_left : pad_left + L])
    gw = np.zeros_like(layer.weights)
    kernels.conv_grad_w(xp, ub, layer.stride, gw)
    gb = ub.sum(axis=(0, 2))
    return (gx[0] if single else gx), gw, gb


def _tconv_geometry(layer: TransposeConvLayer, in_len: int, target_len: int):
    out_len, pad_left, pad_right = same_padding(
        target_len, layer.kernel_len, layer.stride
    )
    if out_len != in_len:
        raise ShapeError(
            f"target_len {target_len} needs input length {out_len} at stride "
            f"{layer.stride}, got {in_len}"
        )
    padded_len = (in_len - 1) * layer.stride + layer.kernel_len
    return pad_left, padded_len


def tconv1d_forward(
    x: np.ndarray, layer: TransposeConvLayer, target_len: int
) -> np.ndarray:
    xb, single = _as_batch(x)
    if xb.shape[1] != layer.in_channels:
        raise ShapeError(
            f"input has {xb.shape[1]} channels, layer expects {layer.in_channels}"
        )
    pad_left, padded_len = _tconv_geometry(layer, xb.shape[2], target_len)
    opad = np.empty((xb.shape[0], layer.out_channels, padded_len))
    opad[:] = layer.bias[None, :, None]
    xb = np.ascontiguousarray(xb)
    kernels.tconv_fwd(xb, layer.weights, layer.stride, opad)
    out = np.ascontiguousarray(opad[:, :, pad_left : pad_left + target_len])
    return out[0] if single else out


def tconv1d_backward(
    x: np.ndarray, layer: TransposeConvLayer, target_len: int, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xb, single = _as_batch(x)
    ub, _ = _as_batch(upstream)
    pad_left, padded_len = _tconv_geometry(layer, xb.shape[2], target_len)
    if ub.shape != (xb.shape[0], layer.out_channels, target_len):
        raise ShapeError(
            f"upstream shape {ub.shape} does not match forward output "
            f"{(xb.shape[0], layer.out_channels, target_len)}"
        )
    uppad = np.zeros((xb.shape[0], layer.out_channels, padded_len))
    uppad[:, :, pad_left : pad_left + target_len] = ub
    gx = np.empty_like(xb)
    xb = np.ascontiguousarray(xb)
    kernels.tconv_grad_y(uppad, layer.weights, layer.stride, gx)
    gw = np.zeros_like(layer.weights)
    kernels.tconv_grad_w(xb, uppad, layer.stride, gw)
    gb = ub.sum(axis=(0, 2))
    return (gx[0] if single else gx), gw, gb


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return upstream * (x > 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return upstream * s * (1.0 - s)


def dropout(
    x: np.ndarray, p: float, mode: str, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout: train-mode survivors are scaled by 1/(1-p).

    Returns (output, mask); mask is None in eval mode. The mask already
    carries the 1/(1-p) scaling, so backward is upstream * mask.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        return np.asarray(x, dtype=np.float64).copy(), None
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = rng.random(np.shape(x)) >= p
    mask = keep / (1.0 - p)
    return x * mask, mask


def linear_forward(x: np.ndarray, layer: LinearLayer) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    in_dim = layer.weights.shape[1]
    if x.shape[-1] != in_dim:
        raise ShapeError(f"input dim {x.shape[-1]} != layer in_dim {in_dim}")
    return x @ layer.weights.T + layer.bias


def linear_backward(
    x: np.ndarray, layer: LinearLayer, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape[:-1] != x.shape[:-1] or upstream.shape[-1] != layer.weights.shape[0]:
        raise ShapeError("upstream shape does not match forward output")
    gx = upstream @ layer.weights
    if x.ndim == 1:
        gw = np.outer(upstream, x)
        gb = upstream.copy()
    else:
        gw = upstream.reshape(-1, upstream.shape[-1]).T @ x.reshape(-1, x.shape[-1])
        gb = upstream.reshape(-1, upstream.shape[-1]).sum(axis=0)
    return gx, gw, gb


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    if pred.size < 1:
        raise ShapeError("mse_loss needs at least one element")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = (2.0 / pred.size) * diff
    return loss, grad
