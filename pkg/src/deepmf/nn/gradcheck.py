"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np


def grad_check(
    loss_and_grads: Callable[[list[np.ndarray]], tuple[float, list[np.ndarray]]],
    params: list[np.ndarray],
    h: float = 1e-5,
    sample_fraction: float = 0.01,
    min_samples: int = 50,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_and_grads(params)` must be deterministic (fix any dropout masks
    before calling). A random sample of `sample_fraction` of all parameter
    entries (at least `min_samples`) is probed; the relative-error
    denominator is max(|analytic|, |numeric|, 1e-8).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    _, grads = loss_and_grads(params)
    total = sum(p.size for p in params)
    n_probe = min(total, max(min_samples, int(round(sample_fraction * total))))
    flat_choice = rng.choice(total, size=n_probe, replace=False)

    sizes = np.array([p.size for p in params])
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    worst = 0.0
    for flat in flat_choice:
        ai = int(np.searchsorted(offsets, flat, side="right") - 1)
        local = int(flat - offsets[ai])
        p = params[ai]
        idx = np.unravel_index(local, p.shape)
        orig = p[idx]
        p[idx] = orig + h
        lp, _ = loss_and_grads(params)
        p[idx] = orig - h
        lm, _ = loss_and_grads(params)
        p[idx] = orig
        numeric = (lp - lm) / (2.0 * h)
        analytic = grads[ai][idx]
        denom = max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst
