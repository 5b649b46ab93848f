"""Scalar-action policy families with trainable mode and log-scale.

All three families share the parameterization ``theta = [x, y]``: the mode
(mean) of the action distribution is ``phi(s) @ x`` for a bounded feature map
``phi``, and the scale is ``exp(y)``.  The families differ in tail weight:

* ``gaussian``   -- normal with mean ``mu`` and *variance* ``exp(y)``.
* ``exp_power``  -- density ``exp(-|a-mu|^alpha / s^alpha) / (s * A_alpha)``
  with ``s = exp(y)`` and tail index ``alpha`` in [1, 2]; ``A_alpha`` is the
  normalizer ``integral exp(-|x|^alpha) dx``, computed once by quadrature.
* ``cauchy``     -- mode ``mu``, scale ``exp(y)``; the heavy-tailed end of the
  stable family, with a score function bounded over the whole action space.

The scale is floored at ``delta0`` (default 1e-3) by clamping ``y``; the floor
keeps every density non-degenerate during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from heavypg.stable_random import SeededStream

__all__ = [
    "FAMILIES",
    "DEFAULT_SCALE_FLOOR",
    "FeatureMap",
    "PolicyParams",
    "PolicyKind",
    "PolicyConfig",
    "log_density",
    "score",
    "sample_action",
    "exp_power_norm",
    "score_envelope_constant",
    "exploration_tolerance_bound",
]

FAMILIES = ("gaussian", "exp_power", "cauchy")
DEFAULT_SCALE_FLOOR = 1e-3

_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class FeatureMap:
    """Bounded state-feature map phi: R -> R^k.

    kinds:
      identity      -- phi(s) = [s / scale]
      polynomial    -- phi(s) = [1, z, ..., z**degree] with z = s / scale
      radial_basis  -- phi_i(s) = exp(-(s - c_i)^2 / (2 width^2))

    ``scale`` normalizes the state so feature magnitudes (and with them the
    per-feature gradient sensitivity) stay comparable across state boxes.
    """

    kind: str = "identity"
    degree: int = 1
    centers: tuple[float, ...] = ()
    width: float = 1.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "polynomial", "radial_basis"):
            raise ValueError(f"unknown feature map kind {self.kind!r}")
        if self.kind == "polynomial" and self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.kind == "radial_basis":
            if not self.centers:
                raise ValueError("radial_basis needs at least one center")
            if self.width <= 0:
                raise ValueError("radial_basis width must be positive")

    @property
    def output_dim(self) -> int:
        if self.kind == "identity":
            return 1
        if self.kind == "polynomial":
            return self.degree + 1
        return len(self.centers)

    def __call__(self, s: float) -> np.ndarray:
        z = s / self.scale
        if self.kind == "identity":
            return np.array([z], dtype=float)
        if self.kind == "polynomial":
            return np.array([z**k for k in range(self.degree + 1)], dtype=float)
        c = np.asarray(self.centers, dtype=float)
        return np.exp(-((s - c) ** 2) / (2.0 * self.width**2))

    def norm_bound(self, lo: float, hi: float, grid: int = 4097) -> float:
        """sup_s ||phi(s)|| over [lo, hi], evaluated on a dense grid."""
        ss = np.linspace(lo, hi, grid)
        return float(max(np.linalg.norm(self(s)) for s in ss))


@dataclass
class PolicyParams:
    """theta = [x, y]: feature weights for the mode plus a scalar log-scale."""

    x: np.ndarray
    y: float

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 1:
            raise ValueError("x must be a 1-d weight vector")
        self.y = float(self.y)

    @property
    def dim(self) -> int:
        return self.x.size + 1

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, [self.y]])

    @staticmethod
    def from_vector(v: np.ndarray) -> "PolicyParams":
        v = np.asarray(v, dtype=float)
        return PolicyParams(x=v[:-1].copy(), y=float(v[-1]))

    def clamped(self, delta0: float = DEFAULT_SCALE_FLOOR) -> "PolicyParams":
        """Enforce exp(y) >= delta0 by flooring y at log(delta0)."""
        return PolicyParams(x=self.x.copy(), y=max(self.y, math.log(delta0)))


@dataclass(frozen=True)
class PolicyKind:
    """Family selector; alpha only matters for exp_power."""

    family: str
    alpha: float = 2.0
    variable_scale: bool = True

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown policy family {self.family!r}")
        if self.family == "exp_power" and not (1.0 <= self.alpha <= 2.0):
            raise ValueError(f"exp_power tail index must be in [1, 2], got {self.alpha}")


@dataclass
class PolicyConfig:
    """Policy block of an experiment config file."""

    family: str = "cauchy"
    alpha: float = 2.0
    feature_map: str = "polynomial"
    degree: int = 1
    centers: tuple[float, ...] = ()
    width: float = 1.0
    feature_scale: float = 1.0
    x0: tuple[float, ...] = (0.0, 0.0)
    y0: float = 0.0
    variable_scale: bool = False
    delta0: float = DEFAULT_SCALE_FLOOR

    def kind(self) -> PolicyKind:
        return PolicyKind(self.family, self.alpha, self.variable_scale)

    def features(self) -> FeatureMap:
        return FeatureMap(
            self.feature_map, self.degree, tuple(self.centers), self.width,
            self.feature_scale,
        )

    def params(self) -> PolicyParams:
        p = PolicyParams(np.array(self.x0, dtype=float), self.y0)
        if p.x.size != self.features().output_dim:
            raise ValueError(
                f"x0 has {p.x.size} weights but feature map emits "
                f"{self.features().output_dim}"
            )
        return p.clamped(self.delta0)


@lru_cache(maxsize=None)
def exp_power_norm(alpha: float) -> float:
    """A_alpha = integral exp(-|x|^alpha) dx, adaptive quadrature, abs tol 1e-10."""
    val, _ = integrate.quad(lambda t: math.exp(-(t**alpha)), 0.0, np.inf, epsabs=1e-10)
    return 2.0 * val


@lru_cache(maxsize=None)
def score_envelope_constant(alpha: float) -> float:
    """B_alpha = integral |a|^(alpha-1) exp(-|a|^alpha / 2) da, quadrature, cached."""
    val, _ = integrate.quad(
        lambda t: t ** (alpha - 1.0) * math.exp(-(t**alpha) / 2.0),
        0.0,
        np.inf,
        epsabs=1e-10,
    )
    return 2.0 * val


@lru_cache(maxsize=None)
def _rejection_bound(alpha: float) -> float:
    """M = sup_z exp(-|z|^alpha) * (1 + z^2): envelope of target over Cauchy proposal."""
    res = optimize.minimize_scalar(
        lambda z: -math.exp(-abs(z) ** alpha) * (1.0 + z * z),
        bounds=(0.0, 5.0),
        method="bounded",
    )
    return max(1.0, -res.fun)


def _check_inputs(features: np.ndarray, action: float) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(features)) or not math.isfinite(action):
        raise ValueError("features and action must be finite")
    return features


def log_density(
    kind: PolicyKind, params: PolicyParams, features: np.ndarray, action: float
) -> float:
    """log pi_theta(action | state) for the configured family."""
    features = _check_inputs(features, action)
    mu = float(features @ params.x)
    if kind.family == "gaussian":
        v = math.exp(params.y)
        return -0.5 * math.log(2.0 * math.pi * v) - (action - mu) ** 2 / (2.0 * v)
    if kind.family == "cauchy":
        u = (action - mu) * math.exp(-params.y)
        return -params.y - math.log(math.pi) - math.log1p(u * u)
    s = math.exp(params.y)
    z = abs(action - mu) / s
    return -(z**kind.alpha) - params.y - math.log(exp_power_norm(kind.alpha))


def score(
    kind: PolicyKind, params: PolicyParams, features: np.ndarray, action: float
) -> np.ndarray:
    """Analytic gradient of log_density in theta = [x, y].

    The y component is always returned; a trainer running with frozen scale
    masks it rather than this function omitting it.
    """
    features = _check_inputs(features, action)
    mu = float(features @ params.x)
    if kind.family == "gaussian":
        v = math.exp(params.y)
        gx = (action - mu) / v
        gy = ((action - mu) ** 2 / v - 1.0) / 2.0
    elif kind.family == "cauchy":
        s = math.exp(params.y)
        u = (action - mu) / s
        gx = 2.0 * u / ((1.0 + u * u) * s)
        gy = (u * u - 1.0) / (1.0 + u * u)
    else:
        s = math.exp(params.y)
        z = (action - mu) / s
        az = abs(z)
        gx = kind.alpha * az ** (kind.alpha - 1.0) * math.copysign(1.0, z) / s if az > 0 else 0.0
        gy = kind.alpha * az**kind.alpha - 1.0
    return np.concatenate([gx * features, [gy]])


def sample_action(
    kind: PolicyKind, params: PolicyParams, features: np.ndarray, stream: SeededStream
) -> float:
    """One action draw from the policy.

    gaussian uses the Box-Muller transform, cauchy the tangent transform, and
    exp_power rejection sampling from a Cauchy proposal (the envelope constant
    sup exp(-|z|^alpha)(1+z^2) is computed numerically and cached per alpha;
    it equals 1 on alpha in [1, 2], giving acceptance rate A_alpha / pi).
    """
    features = _check_inputs(features, 0.0)
    mu = float(features @ params.x)
    gen = stream.gen
    if kind.family == "gaussian":
        u1 = max(gen.random(), _TINY)
        u2 = gen.random()
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        return mu + math.exp(params.y / 2.0) * z
    if kind.family == "cauchy":
        u = gen.random()
        return mu + math.exp(params.y) * math.tan(math.pi * (u - 0.5))
    m = _rejection_bound(kind.alpha)
    while True:
        z = math.tan(math.pi * (gen.random() - 0.5))
        if gen.random() * m <= math.exp(-abs(z) ** kind.alpha) * (1.0 + z * z):
            return mu + math.exp(params.y) * z


def exploration_tolerance_bound(
    alpha: float,
    sigma: float,
    lam: float,
    d_phi: float,
    d_theta: float,
    family: str = "exp_power",
) -> float:
    """Closed-form score bound B(lambda) outside a tolerated action-tail mass.

    For the exp_power family (alpha in (1, 2]; the gaussian is alpha = 2):

        B(lam) = (D_phi / sigma) *
                 (D_theta * D_phi / sigma
                  + 2 * log(D_phi * B_alpha / (sigma * A_alpha * lam))) ** ((alpha-1)/alpha)

    with A_alpha and B_alpha from quadrature.  The bound grows only like
    log(1/lam)^((alpha-1)/alpha), so it stays modest even for tiny lam.

    For the cauchy family the score is bounded over the whole action space, so
    lam = 0 is admitted and the returned value is the numerically evaluated
    supremum of the score norm, which is finite.
    """
    if sigma <= 0 or d_phi <= 0 or d_theta < 0:
        raise ValueError("scale constants must be positive")
    if family == "cauchy":
        if lam < 0:
            raise ValueError("lambda must be >= 0")
        u = np.linspace(-50.0, 50.0, 200_001)
        gx = 2.0 * u / ((1.0 + u * u) * sigma) * d_phi
        gy = (u * u - 1.0) / (1.0 + u * u)
        return float(np.sqrt(gx * gx + gy * gy).max())
    if family == "gaussian":
        alpha = 2.0
    if not (1.0 < alpha <= 2.0):
        raise ValueError(f"alpha must lie in (1, 2] for the closed-form bound, got {alpha}")
    if not (0.0 < lam < 1.0):
        raise ValueError(f"lambda must lie in (0, 1), got {lam} (bound diverges at 0)")
    a_const = exp_power_norm(alpha)
    b_const = score_envelope_constant(alpha)
    inner = d_theta * d_phi / sigma + 2.0 * math.log(
        d_phi * b_const / (sigma * a_const * lam)
    )
    return (d_phi / sigma) * inner ** ((alpha - 1.0) / alpha)
