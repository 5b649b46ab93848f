import math

import numpy as np
import pytest
from scipy.stats import norm

from heavypg.environments import EnvState, MarioConfig, MarioOneD, QuadraticBandit, StepResult
from heavypg.estimator import (
    GradientEstimate,
    batch_estimate,
    collect_batch,
    gpomdp_estimate,
    rollout,
)
from heavypg.policies import FeatureMap, PolicyKind, PolicyParams
from heavypg.stable_random import SeededStream, expected_horizon

GAUSS = PolicyKind("gaussian")
POLY1 = FeatureMap("polynomial", degree=1)


def bandit_setup(mu=0.3, y=math.log(0.5)):
    # bandit state is 0, so poly-1 features are [1, 0] and the mode is x[0]
    env = QuadraticBandit(target=0.0)
    params = PolicyParams(np.array([mu, 0.0]), y)
    return env, params


class TwoStateMDP:
    """Two states, continuous action; moves to state 1 iff a >= 0.

    Reward s + 0.5 * [a < 0] is bounded, the transition is deterministic in
    the action's sign, and the discounted value under a Gaussian policy has a
    closed form through p(s) = Phi(mu_s / std), which makes an independent
    gradient oracle possible via finite differences.
    """

    LOW, HIGH = 0.0, 1.0
    REWARD_BOUND = 1.5

    def __init__(self):
        self.config = None

    def reset(self, init=None, stream=None):
        return EnvState(s=0.0, step_count=0, done=False)

    def step(self, state, action, stream=None):
        reward = state.s + (0.5 if action < 0 else 0.0)
        s_next = 1.0 if action >= 0 else 0.0
        return StepResult(EnvState(s_next, state.step_count + 1, False), reward, False)


def two_state_value(params: PolicyParams, gamma: float) -> float:
    std = math.exp(params.y / 2.0)
    p = [norm.cdf((params.x[0] + params.x[1] * s) / std) for s in (0.0, 1.0)]
    r = [s + 0.5 * (1.0 - p[s_i]) for s_i, s in enumerate((0.0, 1.0))]
    # V = r + gamma * P V  with P rows [(1-p, p)]
    mat = np.eye(2) - gamma * np.array([[1 - p[0], p[0]], [1 - p[1], p[1]]])
    v = np.linalg.solve(mat, np.array(r))
    return float(v[0])


class TestRollout:
    def test_gamma_zero_single_step(self):
        env, params = bandit_setup()
        tr = rollout(env, GAUSS, params, POLY1, 0.0, SeededStream(0, 0))
        assert tr.n_steps == 1
        assert tr.horizon == 0

    def test_fixed_seed_reproducible(self):
        env = MarioOneD(MarioConfig(horizon_cap=1000))
        params = PolicyParams(np.array([0.0, 0.1]), math.log(0.05))
        a = rollout(env, GAUSS, params, POLY1, 0.9, SeededStream(5, 7))
        b = rollout(env, GAUSS, params, POLY1, 0.9, SeededStream(5, 7))
        assert np.array_equal(a.actions, b.actions)
        assert np.array_equal(a.rewards, b.rewards)
        assert a.horizon == b.horizon

    def test_mean_horizon_matches_geometric(self):
        env = MarioOneD(MarioConfig(horizon_cap=10**6))
        params = PolicyParams(np.array([0.0, 0.0]), math.log(1e-4))
        horizons = [
            rollout(env, GAUSS, params, POLY1, 0.97, SeededStream(1, i)).horizon
            for i in range(10**4)
        ]
        assert abs(np.mean(horizons) - expected_horizon(0.97)) / expected_horizon(0.97) < 0.02

    def test_early_termination_shortens_trajectory(self):
        env, params = bandit_setup()
        tr = rollout(env, GAUSS, params, POLY1, 0.9, SeededStream(2, 3))
        assert tr.n_steps == 1  # bandit always terminates after one step
        if tr.horizon > 0:
            assert tr.terminated_early

    def test_truncation_flag_at_cap(self):
        env = MarioOneD(MarioConfig(horizon_cap=2))
        params = PolicyParams(np.array([0.0, 0.0]), math.log(0.05))
        seen_truncated = False
        for i in range(200):
            tr = rollout(env, GAUSS, params, POLY1, 0.9, SeededStream(3, i))
            assert tr.n_steps <= 2
            seen_truncated |= tr.truncated
        assert seen_truncated


class TestGpomdpEstimate:
    def test_zero_rewards_zero_vector(self):
        env = MarioOneD(MarioConfig(horizon_cap=100))
        params = PolicyParams(np.array([0.5, 0.0]), math.log(0.01))  # never pushes left
        tr = rollout(env, GAUSS, params, POLY1, 0.9, SeededStream(4, 0))
        assert tr.rewards.sum() == 0.0
        est = gpomdp_estimate(tr, GAUSS, params, 0.9)
        assert np.allclose(est.g, 0.0)

    def test_single_step_form(self):
        env, params = bandit_setup()
        tr = rollout(env, GAUSS, params, POLY1, 0.0, SeededStream(5, 0))
        est = gpomdp_estimate(tr, GAUSS, params, 0.0)
        assert np.allclose(est.g, tr.rewards[0] * tr.scores[0])

    def test_linearity_in_rewards(self):
        env = MarioOneD(MarioConfig(horizon_cap=100))
        params = PolicyParams(np.array([0.0, 0.0]), math.log(0.05))
        tr = rollout(env, GAUSS, params, POLY1, 0.9, SeededStream(6, 0))
        base = gpomdp_estimate(tr, GAUSS, params, 0.9)
        tr.rewards = tr.rewards * 3.0
        scaled = gpomdp_estimate(tr, GAUSS, params, 0.9)
        assert np.allclose(scaled.g, 3.0 * base.g)

    def test_dimension_mismatch_rejected(self):
        env, params = bandit_setup()
        tr = rollout(env, GAUSS, params, POLY1, 0.0, SeededStream(7, 0))
        bad = PolicyParams(np.array([0.0, 0.0, 0.0]), 0.0)
        with pytest.raises(ValueError):
            gpomdp_estimate(tr, GAUSS, bad, 0.0)

    def test_non_finite_estimate_aborts(self):
        with pytest.raises(FloatingPointError):
            GradientEstimate(g=np.array([1.0, np.inf]), horizon_used=0)

    def test_bandit_unbiasedness(self):
        # E[g] must match the analytic gradient (-2 mu, 0, -e^y) within 3 SE
        mu, y = 0.4, math.log(0.6)
        env, params = bandit_setup(mu, y)
        n = 30_000
        samples = np.empty((n, 3))
        for i in range(n):
            tr = rollout(env, GAUSS, params, POLY1, 0.5, SeededStream(8, i))
            samples[i] = gpomdp_estimate(tr, GAUSS, params, 0.5).g
        target = np.array([-2 * mu, 0.0, -math.exp(y)])
        se = samples.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(samples.mean(axis=0) - target) <= 3 * se)

    def test_two_state_mdp_unbiasedness(self):
        # oracle: finite differences of the closed-form discounted value
        gamma = 0.5
        params = PolicyParams(np.array([0.2, -0.4]), math.log(0.8))
        h = 1e-5
        vec = params.as_vector()
        oracle = np.empty(3)
        for i in range(3):
            up, dn = vec.copy(), vec.copy()
            up[i] += h
            dn[i] -= h
            oracle[i] = (
                two_state_value(PolicyParams.from_vector(up), gamma)
                - two_state_value(PolicyParams.from_vector(dn), gamma)
            ) / (2 * h)
        env = TwoStateMDP()
        n = 40_000
        samples = np.empty((n, 3))
        for i in range(n):
            tr = rollout(env, GAUSS, params, POLY1, gamma, SeededStream(9, i))
            samples[i] = gpomdp_estimate(tr, GAUSS, params, gamma).g
        se = samples.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(samples.mean(axis=0) - oracle) <= 3 * se)


class TestBatchEstimate:
    def test_batch_one_equals_single(self):
        env, params = bandit_setup()
        single = gpomdp_estimate(
            rollout(env, GAUSS, params, POLY1, 0.5, SeededStream(10, 0)), GAUSS, params, 0.5
        )
        batched = batch_estimate(env, GAUSS, params, POLY1, 0.5, 1, [SeededStream(10, 0)])
        assert np.array_equal(single.g, batched.g)

    def test_batch_mean_bit_identical_to_sequential(self):
        env, params = bandit_setup()
        streams = [SeededStream(11, i) for i in range(4)]
        batched = batch_estimate(env, GAUSS, params, POLY1, 0.5, 4, streams)
        members = [
            gpomdp_estimate(
                rollout(env, GAUSS, params, POLY1, 0.5, SeededStream(11, i)), GAUSS, params, 0.5
            ).g
            for i in range(4)
        ]
        assert np.array_equal(batched.g, sum(members) / 4)

    def test_variance_scales_inversely_with_batch(self):
        env, params = bandit_setup()
        n_groups = 3000
        singles = np.array(
            [
                batch_estimate(env, GAUSS, params, POLY1, 0.5, 1, [SeededStream(12, i)]).g[0]
                for i in range(n_groups)
            ]
        )
        batches = np.array(
            [
                batch_estimate(
                    env, GAUSS, params, POLY1, 0.5, 4,
                    [SeededStream(13, 4 * i + j) for j in range(4)],
                ).g[0]
                for i in range(n_groups)
            ]
        )
        ratio = batches.var() / singles.var()
        assert abs(ratio - 0.25) < 0.05

    def test_truncation_fraction_reported(self):
        env = MarioOneD(MarioConfig(horizon_cap=2))
        params = PolicyParams(np.array([0.0, 0.0]), math.log(0.05))
        res = collect_batch(
            env, GAUSS, params, POLY1, 0.9, 50, [SeededStream(14, i) for i in range(50)]
        )
        expected = sum(tr.truncated for tr in res.trajectories) / 50
        assert res.truncated_fraction == expected
        assert 0.0 < res.truncated_fraction < 1.0
