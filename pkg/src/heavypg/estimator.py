"""Trajectory collection and the random-horizon policy gradient estimate.

The rollout horizon T is drawn from the law P[T >= t] = gamma**(t/2)
independently of the environment, and the estimate for one trajectory is

    g = sum_{t=0..T} gamma**(t/2) * r_t * (sum_{tau<=t} score(a_tau | s_tau))

which is unbiased for the gradient of the discounted value: the survival
weight gamma**(t/2) times the explicit gamma**(t/2) recovers gamma**t in
expectation.  Mini-batches average exactly ``batch_size`` such trajectories
(the batch loop runs one trajectory per stream, in stream order, so the
result does not depend on scheduling).

Early environment termination is equivalent to entering an absorbing state
with zero reward; all post-termination terms of the sum vanish, so rollouts
simply stop at termination and the recorded trajectory is shorter than T + 1.
No baseline or variance reduction is applied anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from heavypg.policies import FeatureMap, PolicyKind, PolicyParams, sample_action, score
from heavypg.stable_random import SeededStream, sample_horizon

__all__ = [
    "Trajectory",
    "GradientEstimate",
    "BatchResult",
    "rollout",
    "gpomdp_estimate",
    "batch_estimate",
    "collect_batch",
]


@dataclass
class Trajectory:
    """One rollout: arrays over steps t = 0..n_steps-1 plus the sampled horizon.

    ``n_steps == horizon + 1`` unless the environment terminated first.
    ``truncated`` marks geometric draws cut down to the environment's horizon
    cap; callers count these because heavy truncation would bias estimates.
    """

    horizon: int
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    features: np.ndarray
    scores: np.ndarray
    truncated: bool
    terminated_early: bool
    stream_id: int

    @property
    def n_steps(self) -> int:
        return self.rewards.size

    @property
    def undiscounted_return(self) -> float:
        return float(self.rewards.sum())


@dataclass
class GradientEstimate:
    g: np.ndarray
    horizon_used: int
    batch_size: int = 1

    def __post_init__(self) -> None:
        self.g = np.asarray(self.g, dtype=float)
        if not np.all(np.isfinite(self.g)):
            raise FloatingPointError(
                f"non-finite gradient estimate (horizon {self.horizon_used}, "
                f"batch {self.batch_size}): {self.g}"
            )

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.g))


@dataclass
class BatchResult:
    estimate: GradientEstimate
    member_estimates: list[GradientEstimate]
    trajectories: list[Trajectory]
    truncated_fraction: float


def rollout(
    env,
    kind: PolicyKind,
    params: PolicyParams,
    features: FeatureMap,
    gamma: float,
    stream: SeededStream,
) -> Trajectory:
    """Sample T, then interact for up to T + 1 steps under the policy."""
    t_geom = sample_horizon(gamma, stream)
    cap = getattr(getattr(env, "config", None), "horizon_cap", None)
    truncated = cap is not None and t_geom > cap - 1
    horizon = min(t_geom, cap - 1) if cap is not None else t_geom

    state = env.reset(stream=stream)
    states, actions, rewards, feats, scores = [], [], [], [], []
    terminated_early = False
    for t in range(horizon + 1):
        phi = features(state.s)
        a = sample_action(kind, params, phi, stream)
        result = env.step(state, a, stream=stream)
        states.append(state.s)
        actions.append(a)
        rewards.append(result.reward)
        feats.append(phi)
        scores.append(score(kind, params, phi, a))
        state = result.next_state
        if state.done:
            terminated_early = t < horizon
            break
    return Trajectory(
        horizon=horizon,
        states=np.array(states),
        actions=np.array(actions),
        rewards=np.array(rewards),
        features=np.array(feats),
        scores=np.array(scores),
        truncated=truncated,
        terminated_early=terminated_early,
        stream_id=stream.stream_id,
    )


def gpomdp_estimate(
    trajectory: Trajectory,
    kind: PolicyKind,
    params: PolicyParams,
    gamma: float,
) -> GradientEstimate:
    """Reward-weighted running score sums over one trajectory, O(T * d).

    Uses the per-step scores cached at rollout time when their dimension
    matches ``params``; recomputes them otherwise (same policy assumed --
    feeding a trajectory collected under different parameters is a caller
    error that cannot be detected here).
    """
    scores = trajectory.scores
    if scores.ndim != 2 or scores.shape[1] != params.dim:
        if trajectory.features.ndim != 2 or trajectory.features.shape[1] != params.x.size:
            raise ValueError(
                f"trajectory features have width "
                f"{trajectory.features.shape[1] if trajectory.features.ndim == 2 else '?'}"
                f" but params expect {params.x.size}"
            )
        scores = np.array(
            [
                score(kind, params, trajectory.features[t], trajectory.actions[t])
                for t in range(trajectory.n_steps)
            ]
        )
    t = np.arange(trajectory.n_steps)
    weights = gamma ** (t / 2.0) * trajectory.rewards
    running = np.cumsum(scores, axis=0)
    g = weights @ running
    return GradientEstimate(g=g, horizon_used=trajectory.horizon, batch_size=1)


def collect_batch(
    env,
    kind: PolicyKind,
    params: PolicyParams,
    features: FeatureMap,
    gamma: float,
    batch_size: int,
    streams: list[SeededStream],
) -> BatchResult:
    """Roll ``batch_size`` trajectories (one per stream, in order) and average."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if len(streams) < batch_size:
        raise ValueError(f"need {batch_size} streams, got {len(streams)}")
    trajectories = [
        rollout(env, kind, params, features, gamma, streams[i])
        for i in range(batch_size)
    ]
    members = [gpomdp_estimate(tr, kind, params, gamma) for tr in trajectories]
    mean_g = sum(m.g for m in members) / batch_size
    estimate = GradientEstimate(
        g=mean_g,
        horizon_used=max(m.horizon_used for m in members),
        batch_size=batch_size,
    )
    truncated = sum(tr.truncated for tr in trajectories) / batch_size
    return BatchResult(estimate, members, trajectories, truncated)


def batch_estimate(
    env,
    kind: PolicyKind,
    params: PolicyParams,
    features: FeatureMap,
    gamma: float,
    batch_size: int,
    streams: list[SeededStream],
) -> GradientEstimate:
    """Arithmetic mean of ``batch_size`` independent single-trajectory estimates."""
    return collect_batch(env, kind, params, features, gamma, batch_size, streams).estimate
