"""Compiled inner loops for 1D convolution layers.

The loop nests are written so that every output element accumulates its
terms in exactly the order of the layer definitions (bias first, then
input channels outer, kernel taps inner for convolution; input channels
outer, time outer, taps inner for transposed convolution). numba compiles
these with strict IEEE semantics (no fastmath), so results are bitwise
identical to a naive nested-loop evaluation while the independent inner
loops still vectorize.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv_fwd(xp, w, bias, stride, out):
    # xp: (B, Ci, Lp) padded input; w: (Co, Ci, K); out: (B, Co, T)
    B, Ci, _ = xp.shape
    Co, _, K = w.shape
    T = out.shape[2]
    for b in range(B):
        for o in range(Co):
            acc = out[b, o]
            for t in range(T):
                acc[t] = bias[o]
            for i in range(Ci):
                xrow = xp[b, i]
                for k in range(K):
                    wv = w[o, i, k]
                    if stride == 1:
                        for t in range(T):
                            acc[t] += wv * xrow[t + k]
                    else:
                        for t in range(T):
                            acc[t] += wv * xrow[t * stride + k]
    return out


@njit(cache=True)
def conv_grad_x(up, w, stride, gxp):
    # up: (B, Co, T); gxp: (B, Ci, Lp) preset to zero
    B, Co, T = up.shape
    _, Ci, K = w.shape
    for b in range(B):
        for i in range(Ci):
            row = gxp[b, i]
            for o in range(Co):
                urow = up[b, o]
                wrow = w[o, i]
                for t in range(T):
                    uv = urow[t]
                    base = t * stride
                    for k in range(K):
                        row[base + k] += uv * wrow[k]
    return gxp


@njit(cache=True)
def conv_grad_w(xp, up, stride, gw):
    # gw: (Co, Ci, K) preset to zero; summation order: batch outer, time inner
    B, Co, T = up.shape
    _, Ci, K = gw.shape
    for o in range(Co):
        for i in range(Ci):
            grow = gw[o, i]
            for b in range(B):
                urow = up[b, o]
                xrow = xp[b, i]
                for t in range(T):
                    uv = urow[t]
                    base = t * stride
                    for k in range(K):
                        grow[k] += uv * xrow[base + k]
    return gw


@njit(cache=True)
def tconv_fwd(y, w, stride, opad):
    # y: (B, Ci, T); w: (Ci, Co, K); opad: (B, Co, Lp) preset to the bias
    B, Ci, T = y.shape
    _, Co, K = w.shape
    for b in range(B):
        for o in range(Co):
            orow = opad[b, o]
            for i in range(Ci):
                yrow = y[b, i]
                wrow = w[i, o]
                for t in range(T):
                    yv = yrow[t]
                    base = t * stride
                    for k in range(K):
                        orow[base + k] += yv * wrow[k]
    return opad


@njit(cache=True)
def tconv_grad_y(uppad, w, stride, gy):
    # uppad: (B, Co, Lp) upstream zero-extended to padded coordinates
    B, Ci, T = gy.shape
    _, Co, K = w.shape
    for b in range(B):
        for i in range(Ci):
            row = gy[b, i]
            for t in range(T):
                row[t] = 0.0
            for o in range(Co):
                urow = uppad[b, o]
                wrow = w[i, o]
                for k in range(K):
                    wv = wrow[k]
                    if stride == 1:
                        for t in range(T):
                            row[t] += wv * urow[t + k]
                    else:
                        for t in range(T):
                            row[t] += wv * urow[t * stride + k]
    return gy


@njit(cache=True)
def tconv_grad_w(y, uppad, stride, gw):
    # gw: (Ci, Co, K) preset to zero
    B, Ci, T = y.shape
    _, Co, K = gw.shape
    for i in range(Ci):
        for o in range(Co):
            grow = gw[i, o]
            for b in range(B):
                yrow = y[b, i]
                urow = uppad[b, o]
                for t in range(T):
                    yv = yrow[t]
                    base = t * stride
                    for k in range(K):
                        grow[k] += yv * urow[base + k]
    return gw
