"""Desk-scale episodic environments with scalar state and action.

Two benchmark tasks behind one interface, plus a quadratic bandit used as an
analytic oracle by the estimator and trainer tests:

* Pathological mountain car: state in [-4.0, 3.709], a small-reward goal near
  s = 2.667 worth 10 and a bonanza at the s = -4.0 edge worth 500, with a
  quadratic energy penalty -a^2 on every step.  The action is the car's speed;
  the position integrates s' = clamp(s + dt * a).  Goal membership is tested
  with a tolerance band because continuous dynamics never hit an exact point.
* 1-d Mario: state in [0, 1], reward 1 exactly when the pre-clamp sum s + a
  is negative, transition s' = min(1, max(0, s + a)).

Both environments are deterministic given the clipped action; the ``stream``
argument on reset/step exists for future stochastic variants and is unused.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from heavypg.stable_random import SeededStream

__all__ = [
    "EnvState",
    "StepResult",
    "PMCConfig",
    "PathologicalMountainCar",
    "MarioConfig",
    "MarioOneD",
    "QuadraticBandit",
    "EnvConfig",
    "make_env",
    "occupancy_histogram",
]


@dataclass
class EnvState:
    s: float
    step_count: int = 0
    done: bool = False


@dataclass
class StepResult:
    next_state: EnvState
    reward: float
    action_clipped: bool


@dataclass
class PMCConfig:
    """Pathological mountain car knobs; reward landmarks are part of the task."""

    dt: float = 0.05
    goal_tolerance: float = 0.05
    horizon_cap: int = 500
    init: float = 2.26

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.goal_tolerance <= 0:
            raise ValueError("goal_tolerance must be positive")
        if self.horizon_cap < 1:
            raise ValueError("horizon_cap must be >= 1")


class PathologicalMountainCar:
    """Energy-penalized driving task with a misleading nearby goal.

    Reward: -a^2 in the interior, 500 - a^2 on reaching the s = -4.0 edge, and
    10 - a^2 on reaching the band around s = 2.667, with goal membership
    evaluated at the post-step position.  Episodes end on entering either goal
    band or at the horizon cap.
    """

    LOW, HIGH = -4.0, 3.709
    ACTION_LOW, ACTION_HIGH = -20.0, 20.0
    RICH_GOAL, RICH_REWARD = -4.0, 500.0
    POOR_GOAL, POOR_REWARD = 2.667, 10.0
    REWARD_BOUND = 500.0

    def __init__(self, config: PMCConfig | None = None):
        self.config = config or PMCConfig()

    def reset(self, init: float | None = None, stream: SeededStream | None = None) -> EnvState:
        s0 = self.config.init if init is None else float(init)
        if not (self.LOW <= s0 <= self.HIGH):
            raise ValueError(f"initial state {s0} outside [{self.LOW}, {self.HIGH}]")
        return EnvState(s=s0, step_count=0, done=False)

    def step(self, state: EnvState, action: float, stream: SeededStream | None = None) -> StepResult:
        if state.done:
            raise RuntimeError("cannot step a finished episode; reset first")
        a = min(max(float(action), self.ACTION_LOW), self.ACTION_HIGH)
        clipped = a != float(action)
        s_next = min(max(state.s + self.config.dt * a, self.LOW), self.HIGH)
        tol = self.config.goal_tolerance
        at_rich = abs(s_next - self.RICH_GOAL) <= tol
        at_poor = abs(s_next - self.POOR_GOAL) <= tol
        reward = -a * a
        if at_rich:
            reward += self.RICH_REWARD
        elif at_poor:
            reward += self.POOR_REWARD
        steps = state.step_count + 1
        done = at_rich or at_poor or steps >= self.config.horizon_cap
        return StepResult(EnvState(s_next, steps, done), reward, clipped)


@dataclass
class MarioConfig:
    horizon_cap: int = 500

    def __post_init__(self) -> None:
        if self.horizon_cap < 1:
            raise ValueError("horizon_cap must be >= 1")


class MarioOneD:
    """Unit-interval task rewarding attempts to push below the left wall."""

    LOW, HIGH = 0.0, 1.0
    ACTION_LOW, ACTION_HIGH = -0.1, 0.1
    REWARD_BOUND = 1.0

    def __init__(self, config: MarioConfig | None = None):
        self.config = config or MarioConfig()

    def reset(self, init: float | None = None, stream: SeededStream | None = None) -> EnvState:
        if init is not None and init != 0.0:
            raise ValueError("episodes start at s = 0")
        return EnvState(s=0.0, step_count=0, done=False)

    def step(self, state: EnvState, action: float, stream: SeededStream | None = None) -> StepResult:
        if state.done:
            raise RuntimeError("cannot step a finished episode; reset first")
        a = min(max(float(action), self.ACTION_LOW), self.ACTION_HIGH)
        clipped = a != float(action)
        raw = state.s + a
        reward = 1.0 if raw < 0.0 else 0.0
        s_next = min(self.HIGH, max(self.LOW, raw))
        steps = state.step_count + 1
        done = steps >= self.config.horizon_cap
        return StepResult(EnvState(s_next, steps, done), reward, clipped)


class QuadraticBandit:
    """Single-step bandit with reward -(a - target)^2; analytic gradient oracle.

    With a Gaussian policy N(mu, e^y) the value is -(mu - target)^2 - e^y, so
    grad_x J = -2 (mu - target) phi and grad_y J = -e^y.  The episode ends
    after one step, which makes the random-horizon estimator's zero-reward
    continuation drop out exactly.
    """

    LOW, HIGH = 0.0, 0.0
    ACTION_LOW, ACTION_HIGH = -np.inf, np.inf
    REWARD_BOUND = np.inf

    def __init__(self, target: float = 0.0):
        self.target = float(target)
        self.config = None

    def reset(self, init: float | None = None, stream: SeededStream | None = None) -> EnvState:
        return EnvState(s=0.0, step_count=0, done=False)

    def step(self, state: EnvState, action: float, stream: SeededStream | None = None) -> StepResult:
        if state.done:
            raise RuntimeError("cannot step a finished episode; reset first")
        reward = -((float(action) - self.target) ** 2)
        return StepResult(EnvState(0.0, state.step_count + 1, True), reward, False)


@dataclass
class EnvConfig:
    """Environment block of an experiment config file."""

    name: str = "pmc"
    dt: float = 0.05
    goal_tolerance: float = 0.05
    horizon_cap: int = 500
    init: float | None = None
    bandit_target: float = 0.0

    def build(self):
        if self.name == "pmc":
            init = 2.26 if self.init is None else self.init
            return PathologicalMountainCar(
                PMCConfig(self.dt, self.goal_tolerance, self.horizon_cap, init)
            )
        if self.name == "mario":
            return MarioOneD(MarioConfig(self.horizon_cap))
        if self.name == "bandit":
            return QuadraticBandit(self.bandit_target)
        raise ValueError(f"unknown environment {self.name!r}")

    def state_box(self) -> tuple[float, float]:
        env = self.build()
        return env.LOW, env.HIGH


def make_env(name: str, **kwargs):
    return EnvConfig(name=name, **kwargs).build()


def occupancy_histogram(state_sequences, bins: int, lo: float, hi: float) -> np.ndarray:
    """Normalized state-visitation histogram over [lo, hi].

    ``state_sequences`` is an iterable of per-episode state arrays; all visits
    are pooled.  Entries sum to one.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    pooled = np.concatenate([np.asarray(seq, dtype=float).ravel() for seq in state_sequences]) \
        if state_sequences else np.array([])
    if pooled.size == 0:
        raise ValueError("no states to histogram")
    counts, _ = np.histogram(np.clip(pooled, lo, hi), bins=bins, range=(lo, hi))
    return counts / counts.sum()
