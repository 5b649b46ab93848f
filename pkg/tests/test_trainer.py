import math

import numpy as np
import pytest

from heavypg.environments import MarioConfig, MarioOneD, QuadraticBandit
from heavypg.policies import PolicyConfig
from heavypg.trainer import (
    StepSchedule,
    TrainConfig,
    gradient_norm_trend,
    smoothness_rate_exponent,
    train,
)

GAUSS_BANDIT_POLICY = dict(
    family="gaussian",
    feature_map="polynomial",
    degree=1,
    x0=(0.0, 0.0),
    variable_scale=False,
)


class TestStepSchedule:
    def test_constant(self):
        sched = StepSchedule(kind="constant", eta=0.1)
        assert sched.rate(0, 100) == sched.rate(99, 100) == 0.1

    def test_holder_matched_value(self):
        sched = StepSchedule(kind="holder_matched", beta=1.0)
        assert sched.rate(0, 400) == pytest.approx(400.0**-0.5)

    def test_geometric_decay_monotone_and_bounded(self):
        sched = StepSchedule(kind="geometric_decay", eta0=0.005, eta_min=5e-9)
        rates = [sched.rate(k, 1000) for k in range(1000)]
        assert rates[0] == pytest.approx(0.005)
        assert rates[-1] == pytest.approx(5e-9)
        assert all(a >= b for a, b in zip(rates, rates[1:]))
        assert all(5e-9 * (1 - 1e-12) <= r <= 0.005 * (1 + 1e-12) for r in rates)

    def test_invalid_schedules_rejected(self):
        with pytest.raises(ValueError):
            StepSchedule(kind="linear")
        with pytest.raises(ValueError):
            StepSchedule(kind="constant", eta=0.0)
        with pytest.raises(ValueError):
            StepSchedule(kind="geometric_decay", eta0=1e-9, eta_min=1e-3)


class TestTrain:
    def test_zero_episodes_returns_initial_params(self):
        pol = PolicyConfig(**GAUSS_BANDIT_POLICY, y0=math.log(0.04))
        params, log = train(
            QuadraticBandit(), pol, TrainConfig(gamma=0.0, episodes=0, batch_size=1)
        )
        assert np.array_equal(params.x, np.array([0.0, 0.0]))
        assert log.iterations.size == 0

    def test_zero_reward_env_leaves_params_unchanged(self):
        # a Mario policy that never pushes left earns exactly zero reward
        pol = PolicyConfig(
            family="gaussian",
            feature_map="polynomial",
            degree=1,
            x0=(0.5, 0.0),
            y0=math.log(1e-4),
            variable_scale=True,
        )
        env = MarioOneD(MarioConfig(horizon_cap=50))
        cfg = TrainConfig(
            gamma=0.9, episodes=20, batch_size=2,
            schedule=StepSchedule(kind="constant", eta=0.1), seed=1,
        )
        params, log = train(env, pol, cfg)
        assert np.array_equal(params.x, np.array([0.5, 0.0]))
        assert params.y == pol.params().y
        assert np.all(log.grad_norm == 0.0)

    def test_bandit_converges_to_target(self):
        pol = PolicyConfig(**GAUSS_BANDIT_POLICY, y0=math.log(0.04))
        cfg = TrainConfig(
            gamma=0.0, episodes=1500, batch_size=10,
            schedule=StepSchedule(kind="constant", eta=0.01), seed=3,
            record_coords=False,
        )
        params, _ = train(QuadraticBandit(target=1.5), pol, cfg)
        assert abs(params.x[0] - 1.5) < 0.05

    def test_reproducible_given_seed(self):
        pol = PolicyConfig(**GAUSS_BANDIT_POLICY, y0=math.log(0.04))
        cfg = TrainConfig(
            gamma=0.5, episodes=50, batch_size=3,
            schedule=StepSchedule(kind="constant", eta=0.01), seed=11,
        )
        p1, l1 = train(QuadraticBandit(), pol, cfg)
        p2, l2 = train(QuadraticBandit(), pol, cfg)
        assert np.array_equal(p1.as_vector(), p2.as_vector())
        assert np.array_equal(l1.mean_return, l2.mean_return)
        assert np.array_equal(l1.grad_norm, l2.grad_norm)

    def test_frozen_scale_never_moves_y(self):
        pol = PolicyConfig(**GAUSS_BANDIT_POLICY, y0=math.log(0.04))
        cfg = TrainConfig(
            gamma=0.0, episodes=100, batch_size=2,
            schedule=StepSchedule(kind="constant", eta=0.05), seed=2,
        )
        params, _ = train(QuadraticBandit(), pol, cfg)
        assert params.y == math.log(0.04)

    def test_scale_clamp_engages(self):
        # with r = -a^2 the y-gradient is always negative, driving y to the floor
        pol = PolicyConfig(
            family="gaussian", feature_map="polynomial", degree=1,
            x0=(0.0, 0.0), y0=math.log(0.5), variable_scale=True, delta0=0.3,
        )
        cfg = TrainConfig(
            gamma=0.0, episodes=400, batch_size=5,
            schedule=StepSchedule(kind="constant", eta=0.05), seed=4,
        )
        params, _ = train(QuadraticBandit(), pol, cfg)
        assert params.y >= math.log(0.3) - 1e-12
        assert params.y == pytest.approx(math.log(0.3), abs=0.05)  # hugs the floor

    def test_rolling_mean_matches_bruteforce(self):
        pol = PolicyConfig(**GAUSS_BANDIT_POLICY, y0=math.log(0.04))
        cfg = TrainConfig(gamma=0.0, episodes=30, batch_size=1, seed=5, eval_window=7)
        _, log = train(QuadraticBandit(), pol, cfg)
        rolled = log.rolling_mean_return()
        for i in range(30):
            assert rolled[i] == pytest.approx(
                log.mean_return[max(0, i - 6) : i + 1].mean()
            )

    def test_gradient_coords_recorded(self):
        pol = PolicyConfig(**GAUSS_BANDIT_POLICY, y0=math.log(0.04))
        cfg = TrainConfig(gamma=0.0, episodes=5, batch_size=3, seed=6, record_coords=True)
        _, log = train(QuadraticBandit(), pol, cfg)
        assert len(log.gradient_coords) == 5
        assert log.gradient_coords[0].shape == (3, 3)

    def test_grad_clip_guard(self, caplog):
        pol = PolicyConfig(**GAUSS_BANDIT_POLICY, y0=math.log(0.04))
        cfg = TrainConfig(
            gamma=0.0, episodes=10, batch_size=1, seed=7, grad_clip=1e-6,
            schedule=StepSchedule(kind="constant", eta=0.01),
        )
        with caplog.at_level("WARNING"):
            params, _ = train(QuadraticBandit(target=2.0), pol, cfg)
        assert any("clipped" in rec.message for rec in caplog.records)
        # updates were bounded by eta * clip, so params barely moved
        assert abs(params.x[0]) < 1e-5


class TestGradientNormTrend:
    def test_exact_power_law(self):
        k = np.arange(1, 20_001)
        norms = np.sqrt(k**-0.5)  # ||g||^2 = k^(-1/2)
        fit = gradient_norm_trend(norms, beta=1.0)
        assert fit.slope == pytest.approx(-0.5, abs=0.02)

    def test_constant_series_slope_zero(self):
        fit = gradient_norm_trend(np.full(500, 2.0))
        assert fit.slope == pytest.approx(0.0, abs=1e-12)

    def test_all_zero_series_rejected(self):
        with pytest.raises(ValueError):
            gradient_norm_trend(np.zeros(500))

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            gradient_norm_trend(np.ones(50))

    def test_theory_exponent(self):
        assert smoothness_rate_exponent(1.0) == 0.5
        fit = gradient_norm_trend(np.full(500, 1.0), beta=1.0)
        assert fit.theory_exponent == -0.5

    def test_bandit_run_with_matched_schedule_decays(self):
        pol = PolicyConfig(
            family="gaussian", feature_map="polynomial", degree=1,
            x0=(3.0, 0.0), y0=math.log(0.04), variable_scale=False,
        )
        cfg = TrainConfig(
            gamma=0.0, episodes=2000, batch_size=5,
            schedule=StepSchedule(kind="holder_matched", beta=1.0), seed=5,
            record_coords=False,
        )
        _, log = train(QuadraticBandit(target=0.0), pol, cfg)
        fit = gradient_norm_trend(log, beta=1.0)
        assert fit.slope <= -0.3
