"""Outer policy-search loop: ascent steps, schedules, logging, trend diagnostics.

Each iteration collects a mini-batch gradient estimate, takes the ascent step
``theta <- theta + eta_k * g_k``, floors the log-scale at ``log(delta0)``, and
logs an evaluation return plus the estimate norm.  Evaluation returns are
undiscounted sums over a test episode run to environment termination (the
training estimate itself is discounted); the rolling mean of that series over
``eval_window`` episodes is the curve reported by experiments.

The trend diagnostic fits the decay exponent of the running average of
``||g_k||^2`` against iteration count on a log-log scale.  Under the
smoothness-matched constant step size ``eta = K**(-beta/(beta+1))`` the
running average is predicted to fall like ``K**(-beta/(1+beta))`` plus a
floor set by the policy's exploration tolerance; the estimator norm is a
noisy stand-in for the true gradient norm, so the fit is a diagnostic, not a
proof.  The constants multiplying the rate combine the reward bound, the
horizon law, the integrated score moment, and the score bound outside the
tolerated action tail; none of them is identifiable from rollouts, so they
are not estimated here.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from heavypg.estimator import collect_batch
from heavypg.policies import PolicyConfig, PolicyParams, sample_action
from heavypg.stable_random import SeededStream

__all__ = [
    "StepSchedule",
    "TrainConfig",
    "TrainLog",
    "TrendFit",
    "train",
    "gradient_norm_trend",
    "smoothness_rate_exponent",
]

logger = logging.getLogger(__name__)

# stream-id layout per iteration: batch members at k*BLOCK + i, eval at k*BLOCK + EVAL
_ID_BLOCK = 1 << 20
_EVAL_OFFSET = 1 << 19


@dataclass
class StepSchedule:
    """Step-size schedule: constant, smoothness-matched constant, or geometric decay.

    * ``constant``: eta_k = eta.
    * ``holder_matched``: eta_k = episodes ** (-beta / (beta + 1)), constant
      over the run but matched to its length and the policy's smoothness.
    * ``geometric_decay``: eta_k = eta0 * r**k with r solved so the final
      step equals eta_min; non-increasing and bounded in [eta_min, eta0].
    """

    kind: str = "geometric_decay"
    eta: float = 0.01
    beta: float = 1.0
    eta0: float = 0.005
    eta_min: float = 5e-9

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "holder_matched", "geometric_decay"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "constant" and self.eta <= 0:
            raise ValueError("constant schedule needs eta > 0")
        if self.kind == "holder_matched" and not (0 < self.beta <= 1):
            raise ValueError("beta must lie in (0, 1]")
        if self.kind == "geometric_decay" and not (0 < self.eta_min <= self.eta0):
            raise ValueError("need 0 < eta_min <= eta0")

    def rate(self, k: int, episodes: int) -> float:
        if self.kind == "constant":
            return self.eta
        if self.kind == "holder_matched":
            return float(episodes) ** (-self.beta / (self.beta + 1.0))
        if episodes <= 1:
            return self.eta0
        r = (self.eta_min / self.eta0) ** (1.0 / (episodes - 1))
        return self.eta0 * r**k


@dataclass
class TrainConfig:
    """Training block of an experiment config file."""

    gamma: float = 0.97
    episodes: int = 1000
    batch_size: int = 5
    schedule: StepSchedule = field(default_factory=StepSchedule)
    seed: int = 0
    eval_window: int = 100
    eval_mode: str = "sample"  # "sample" draws eval actions; "mode" acts at the mode
    grad_clip: float | None = None  # optional guard, off by default
    record_coords: bool = True

    def __post_init__(self) -> None:
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.eval_mode not in ("sample", "mode"):
            raise ValueError(f"unknown eval_mode {self.eval_mode!r}")


@dataclass
class TrainLog:
    """Per-iteration training history (arrays indexed by iteration)."""

    iterations: np.ndarray
    mean_return: np.ndarray
    grad_norm: np.ndarray
    eta: np.ndarray
    wallclock_ms: np.ndarray
    truncated_fraction: np.ndarray
    eval_window: int
    gradient_coords: list[np.ndarray] = field(default_factory=list)

    def rolling_mean_return(self, window: int | None = None) -> np.ndarray:
        """Trailing-window mean of the evaluation returns (shorter head windows)."""
        w = window or self.eval_window
        out = np.empty_like(self.mean_return)
        for i in range(self.mean_return.size):
            out[i] = self.mean_return[max(0, i - w + 1) : i + 1].mean()
        return out

    def to_rows(self) -> list[tuple]:
        return list(
            zip(
                self.iterations.tolist(),
                self.mean_return.tolist(),
                self.grad_norm.tolist(),
                self.eta.tolist(),
                self.wallclock_ms.tolist(),
            )
        )

    CSV_HEADER = ("iteration", "mean_return", "grad_norm", "eta", "wallclock_ms")


@dataclass
class TrendFit:
    slope: float
    stderr: float
    theory_exponent: float


def smoothness_rate_exponent(beta: float) -> float:
    """Predicted decay exponent beta/(1+beta) of the running mean-square gradient norm."""
    if not (0 < beta <= 1):
        raise ValueError("beta must lie in (0, 1]")
    return beta / (1.0 + beta)


def _eval_return(env, kind, params, features, stream, mode: str) -> float:
    """Undiscounted return of one test episode run to environment termination."""
    state = env.reset(stream=stream)
    total = 0.0
    while not state.done:
        phi = features(state.s)
        if mode == "mode":
            a = float(phi @ params.x)
        else:
            a = sample_action(kind, params, phi, stream)
        result = env.step(state, a, stream=stream)
        total += result.reward
        state = result.next_state
    return total


def train(env, policy: PolicyConfig, config: TrainConfig) -> tuple[PolicyParams, TrainLog]:
    """Run the heavy-tailed policy gradient loop for ``config.episodes`` iterations."""
    kind = policy.kind()
    features = policy.features()
    params = policy.params()
    log_floor = math.log(policy.delta0)

    n = config.episodes
    iterations = np.arange(n)
    mean_return = np.zeros(n)
    grad_norm = np.zeros(n)
    etas = np.zeros(n)
    wall = np.zeros(n)
    trunc = np.zeros(n)
    coords: list[np.ndarray] = []

    for k in range(n):
        t0 = time.perf_counter()
        eta = config.schedule.rate(k, n)
        streams = [
            SeededStream(config.seed, k * _ID_BLOCK + i) for i in range(config.batch_size)
        ]
        try:
            batch = collect_batch(
                env, kind, params, features, config.gamma, config.batch_size, streams
            )
        except FloatingPointError as err:
            raise RuntimeError(
                f"non-finite gradient at iteration {k} (eta={eta:.3g}, "
                f"theta={params.as_vector()})"
            ) from err
        g = batch.estimate.g.copy()
        if not kind.variable_scale:
            g[-1] = 0.0
        if config.grad_clip is not None:
            norm = float(np.linalg.norm(g))
            if norm > config.grad_clip:
                logger.warning(
                    "gradient clipped at iteration %d: |g|=%.3g > %.3g",
                    k, norm, config.grad_clip,
                )
                g *= config.grad_clip / norm
        params = PolicyParams(params.x + eta * g[:-1], params.y + eta * g[-1])
        if params.y < log_floor:
            params = PolicyParams(params.x, log_floor)

        eval_stream = SeededStream(config.seed, k * _ID_BLOCK + _EVAL_OFFSET)
        mean_return[k] = _eval_return(env, kind, params, features, eval_stream, config.eval_mode)
        grad_norm[k] = batch.estimate.norm
        etas[k] = eta
        trunc[k] = batch.truncated_fraction
        wall[k] = (time.perf_counter() - t0) * 1e3
        if config.record_coords:
            coords.append(np.array([m.g for m in batch.member_estimates]))

    log = TrainLog(
        iterations=iterations,
        mean_return=mean_return,
        grad_norm=grad_norm,
        eta=etas,
        wallclock_ms=wall,
        truncated_fraction=trunc,
        eval_window=config.eval_window,
        gradient_coords=coords,
    )
    return params, log


def gradient_norm_trend(
    log: TrainLog | np.ndarray, beta: float = 1.0, burn_in: int | None = None
) -> TrendFit:
    """Fit the log-log decay rate of the running average of ||g_k||^2.

    Accepts a TrainLog or a raw array of per-iteration norms.  Fits from
    ``burn_in`` (default: a tenth of the series, at least 10) to the end.
    A series that is zero everywhere in the fit window cannot be logged and
    is rejected; a constant positive series fits slope 0.
    """
    norms = log.grad_norm if isinstance(log, TrainLog) else np.asarray(log, dtype=float)
    if norms.size < 100:
        raise ValueError("need at least 100 iterations to fit a trend")
    running = np.cumsum(norms**2) / np.arange(1, norms.size + 1)
    start = burn_in if burn_in is not None else max(10, norms.size // 10)
    ks = np.arange(start, norms.size) + 1.0
    avg = running[start:]
    if np.any(avg <= 0):
        raise ValueError("running average hits zero; no power law to fit")
    x, y = np.log(ks), np.log(avg)
    xc = x - x.mean()
    denom = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / denom
    resid = y - (y.mean() + slope * xc)
    dof = max(1, x.size - 2)
    stderr = math.sqrt(float(resid @ resid) / dof / denom)
    return TrendFit(slope=slope, stderr=stderr, theory_exponent=-smoothness_rate_exponent(beta))
