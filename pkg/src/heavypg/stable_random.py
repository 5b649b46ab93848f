"""Seeded random sources: symmetric alpha-stable draws and geometric rollout horizons.

Scale convention
----------------
A draw ``X ~ SaS(alpha, sigma)`` here has characteristic function

    E[exp(i * w * X)] = exp(-sigma * |w|**alpha)

The Chambers-Mallows-Stuck transform natively produces the convention
``exp(-(c*|w|)**alpha)`` with scale ``c``; the two agree under
``c = sigma**(1/alpha)``, so every CMS draw is multiplied by
``sigma**(1/alpha)``.  Consequences worth remembering:

* ``alpha=2`` is a zero-mean Gaussian with variance ``2*sigma`` (not ``sigma``).
* ``alpha=1`` is a Cauchy with quartiles at ``+-sigma``.
* Summing ``n`` iid draws yields ``SaS(alpha, n*sigma)``, i.e. the sum rescaled
  by ``n**(-1/alpha)`` is again ``SaS(alpha, sigma)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "StableSpec",
    "SeededStream",
    "sample_stable",
    "sample_stable_vector",
    "sample_horizon",
    "expected_horizon",
]

_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class StableSpec:
    """Symmetric alpha-stable law with tail index ``alpha`` and scale ``sigma``."""

    alpha: float
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass
class SeededStream:
    """One independently seeded draw sequence, owned by a single worker.

    Streams are backed by the counter-based Philox generator keyed on
    ``(seed, stream_id)``, so any two streams with distinct ids are
    statistically independent and a given ``(seed, stream_id)`` pair always
    reproduces the same sequence, regardless of what other streams exist.
    """

    seed: int
    stream_id: int = 0

    @cached_property
    def gen(self) -> np.random.Generator:
        key = (int(self.seed) & 0xFFFFFFFFFFFFFFFF) << 64 | (
            int(self.stream_id) & 0xFFFFFFFFFFFFFFFF
        )
        return np.random.Generator(np.random.Philox(key=key))

    def spawn(self, count: int, base: int = 1) -> list["SeededStream"]:
        """Derive ``count`` child streams with ids offset from this stream's id.

        The caller is responsible for keeping id ranges of different parents
        disjoint (ids are plain integers, combined arithmetically).
        """
        return [
            SeededStream(self.seed, self.stream_id + base + i) for i in range(count)
        ]


def _standard_sas(alpha: float, gen: np.random.Generator, size: int) -> np.ndarray:
    """CMS draws with characteristic function exp(-|w|**alpha)."""
    u = gen.uniform(-math.pi / 2.0, math.pi / 2.0, size=size)
    w = np.maximum(gen.standard_exponential(size=size), _TINY)
    if alpha == 1.0:
        return np.tan(u)
    s = np.sin(alpha * u) / np.cos(u) ** (1.0 / alpha)
    t = (np.cos((1.0 - alpha) * u) / w) ** ((1.0 - alpha) / alpha)
    return s * t


def sample_stable(spec: StableSpec, stream: SeededStream) -> float:
    """Draw one SaS(alpha, sigma) variate under the exp(-sigma|w|^alpha) convention."""
    return float(sample_stable_vector(spec, 1, stream)[0])


def sample_stable_vector(
    spec: StableSpec, dim: int, stream: SeededStream
) -> np.ndarray:
    """Draw ``dim`` independent SaS(alpha, sigma) coordinates (one tail index for all)."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    z = _standard_sas(spec.alpha, stream.gen, dim)
    return spec.sigma ** (1.0 / spec.alpha) * z


def sample_horizon(gamma: float, stream: SeededStream) -> int:
    """Sample a rollout horizon T with survival law P[T >= t] = gamma**(t/2).

    Equivalently T ~ Geom(1 - sqrt(gamma)) counting failures before the first
    success.  Drawn by inverse CDF (numpy's geometric), O(1) even for gamma
    close to 1.  The expected horizon is sqrt(gamma) / (1 - sqrt(gamma)).
    """
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if gamma == 0.0:
        return 0
    p = 1.0 - math.sqrt(gamma)
    return int(stream.gen.geometric(p)) - 1


def expected_horizon(gamma: float) -> float:
    """Closed-form mean of the horizon law, sqrt(gamma) / (1 - sqrt(gamma))."""
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    root = math.sqrt(gamma)
    return root / (1.0 - root)
