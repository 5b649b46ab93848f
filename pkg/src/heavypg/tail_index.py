"""Block-sum tail-index estimation for stable-like samples.

For K = K1 * K2 samples X_i, form K2 block sums Y_j of K1 consecutive
samples each; then

    1/alpha_hat = (mean(log |Y_j|) - mean(log |X_i|)) / log(K1)

converges to 1/alpha as K2 grows.  The estimator rides on the stability
property (a block sum of stable draws is a rescaled single draw), is exactly
scale invariant (a common factor c shifts both log-means equally), and needs
no tuning beyond the block layout; the default splits the sample into
balanced blocks K1 = K2 = floor(sqrt(n)) so both the block length and the
block count grow with n.

Exact zeros are dropped before blocking (log|0| is undefined); gradient
coordinates are often exactly zero early in training, so the dropped count is
reported and the estimate flagged unreliable when more than 1% of samples
were zeros.  Finite-sample estimates can overshoot the stable range, so
alpha_hat is clamped to (0, 2] with a flag rather than raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["TailIndexEstimate", "estimate_alpha", "gradient_tail_trace"]

ZERO_FRACTION_RELIABLE = 0.01


@dataclass
class TailIndexEstimate:
    alpha_hat: float
    k1: int
    k2: int
    n_samples: int
    n_zeros_dropped: int = 0
    clamped: bool = False
    unreliable: bool = False


def estimate_alpha(samples, k1: int | None = None, k2: int | None = None) -> TailIndexEstimate:
    """Block-sum tail-index estimate of ``samples``; balanced blocks by default."""
    x = np.asarray(samples, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    n_raw = x.size
    x = x[x != 0.0]
    n_zeros = n_raw - x.size

    if k1 is None and k2 is None:
        k1 = k2 = int(math.isqrt(x.size))
    elif k1 is None or k2 is None:
        raise ValueError("give both k1 and k2 or neither")
    if k1 < 2:
        raise ValueError("k1 must be >= 2 (block sums need length)")
    if k2 < 1:
        raise ValueError("k2 must be >= 1")
    if k1 * k2 > x.size:
        raise ValueError(
            f"insufficient samples: k1*k2 = {k1 * k2} > {x.size} non-zero samples"
        )

    used = x[: k1 * k2]
    blocks = used.reshape(k2, k1).sum(axis=1)
    # a block summing to exactly zero is a measure-zero event; guard the log
    blocks = blocks[blocks != 0.0]
    if blocks.size == 0:
        raise ValueError("all block sums are zero; cannot estimate")
    one_over_alpha = (
        np.log(np.abs(blocks)).mean() - np.log(np.abs(used)).mean()
    ) / math.log(k1)

    clamped = False
    if one_over_alpha <= 0.5:
        alpha_hat, clamped = 2.0, one_over_alpha < 0.5
    else:
        alpha_hat = 1.0 / one_over_alpha
    return TailIndexEstimate(
        alpha_hat=float(alpha_hat),
        k1=k1,
        k2=k2,
        n_samples=n_raw,
        n_zeros_dropped=n_zeros,
        clamped=clamped,
        unreliable=n_raw > 0 and n_zeros / n_raw > ZERO_FRACTION_RELIABLE,
    )


def gradient_tail_trace(
    coords_per_episode: list[np.ndarray],
    window: int = 50,
    min_samples: int = 25,
) -> list[tuple[int, float | None]]:
    """Per-episode tail-index trace over a trailing window of gradient coordinates.

    ``coords_per_episode[k]`` holds the gradient coordinates recorded at
    episode k (any shape; flattened).  Each trace entry pools the last
    ``window`` episodes.  Windows with fewer than ``min_samples`` usable
    coordinates (or all zeros) yield a gap marker ``None``.
    """
    trace: list[tuple[int, float | None]] = []
    for k in range(len(coords_per_episode)):
        lo = max(0, k - window + 1)
        pooled = np.concatenate(
            [np.asarray(c, dtype=float).ravel() for c in coords_per_episode[lo : k + 1]]
        )
        usable = pooled[pooled != 0.0]
        if usable.size < max(min_samples, 4):
            trace.append((k, None))
            continue
        est = estimate_alpha(pooled)
        trace.append((k, est.alpha_hat))
    return trace
