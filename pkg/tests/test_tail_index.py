import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heavypg.stable_random import SeededStream, StableSpec, sample_stable_vector
from heavypg.tail_index import estimate_alpha, gradient_tail_trace


def stable_samples(alpha, n, seed, stream_id=0, sigma=1.0):
    return sample_stable_vector(StableSpec(alpha, sigma), n, SeededStream(seed, stream_id))


class TestEstimateAlpha:
    def test_cauchy_recovered(self):
        x = stable_samples(1.0, 10**6, seed=0)
        est = estimate_alpha(x, 1000, 1000)
        assert 0.95 <= est.alpha_hat <= 1.05

    def test_gaussian_recovered(self):
        x = stable_samples(2.0, 10**6, seed=1)
        est = estimate_alpha(x, 1000, 1000)
        assert 1.9 <= est.alpha_hat <= 2.0

    @pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
    def test_fractional_alpha_recovered(self, alpha):
        x = stable_samples(alpha, 10**6, seed=2)
        est = estimate_alpha(x)
        assert abs(est.alpha_hat - alpha) < 0.05

    def test_exact_scale_invariance(self):
        x = stable_samples(1.5, 10**4, seed=3)
        base = estimate_alpha(x, 100, 100)
        for c in (1e-6, 0.5, 3.0, 1e8):
            scaled = estimate_alpha(c * x, 100, 100)
            assert scaled.alpha_hat == pytest.approx(base.alpha_hat, rel=1e-12)

    @given(c=st.floats(1e-8, 1e8))
    @settings(max_examples=30, deadline=None)
    def test_scale_invariance_property(self, c):
        x = stable_samples(1.3, 2500, seed=4)
        assert estimate_alpha(c * x).alpha_hat == pytest.approx(
            estimate_alpha(x).alpha_hat, rel=1e-9
        )

    def test_balanced_default_blocks(self):
        est = estimate_alpha(stable_samples(1.5, 10**4, seed=5))
        assert est.k1 == est.k2 == 100

    def test_insufficient_samples_rejected(self):
        with pytest.raises(ValueError):
            estimate_alpha(np.ones(10), 10, 10)

    def test_zeros_dropped_and_flagged(self):
        x = stable_samples(1.0, 10**4, seed=6)
        x[: 500] = 0.0
        est = estimate_alpha(x, 90, 90)
        assert est.n_zeros_dropped == 500
        assert est.unreliable

    def test_few_zeros_not_flagged(self):
        x = stable_samples(1.0, 10**4, seed=7)
        x[:5] = 0.0
        est = estimate_alpha(x, 90, 90)
        assert est.n_zeros_dropped == 5
        assert not est.unreliable

    def test_clamped_at_two_flagged(self):
        # anti-correlated alternating data makes block sums tiny: 1/alpha < 0
        x = np.tile([1.0, -1.0], 5000) + 1e-9
        est = estimate_alpha(x, 100, 100)
        assert est.alpha_hat == 2.0
        assert est.clamped

    def test_bias_shrinks_with_block_count(self):
        # consistency in K2: mean |bias| at K2=2000 not worse than at K2=20
        alpha, k1 = 1.5, 50
        reps = 100
        bias = {}
        for k2 in (20, 200, 2000):
            vals = []
            for rep in range(reps):
                x = stable_samples(alpha, k1 * k2, seed=100 + rep, stream_id=k2)
                vals.append(estimate_alpha(x, k1, k2).alpha_hat)
            bias[k2] = abs(np.mean(vals) - alpha)
        assert bias[2000] <= bias[20] + 0.02

    def test_block_sums_obey_stability(self):
        # Y rescaled by K1^(-1/alpha) matches the single-sample law
        alpha, k1 = 1.5, 64
        n = 64 * 4000
        x = stable_samples(alpha, n, seed=8)
        blocks = x.reshape(-1, k1).sum(axis=1) * k1 ** (-1.0 / alpha)
        singles = stable_samples(alpha, blocks.size, seed=9)
        qs = np.arange(1, 10) / 10.0
        gap = np.abs(np.quantile(blocks, qs) - np.quantile(singles, qs))
        assert gap.max() < 0.1

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            estimate_alpha(np.array([1.0, np.nan] * 100))


class TestGradientTailTrace:
    def test_cauchy_injection_hovers_near_one(self):
        coords = [stable_samples(1.0, 60, seed=10, stream_id=k) for k in range(120)]
        trace = gradient_tail_trace(coords, window=50)
        tail = [a for k, a in trace if k >= 60 and a is not None]
        assert tail
        assert 0.8 < np.mean(tail) < 1.2

    def test_gaussian_injection_hovers_near_two(self):
        coords = [stable_samples(2.0, 60, seed=11, stream_id=k) for k in range(120)]
        trace = gradient_tail_trace(coords, window=50)
        tail = [a for k, a in trace if k >= 60 and a is not None]
        assert tail
        assert np.mean(tail) > 1.75

    def test_all_zero_windows_gap_marked(self):
        coords = [np.zeros(8) for _ in range(10)]
        trace = gradient_tail_trace(coords, window=5)
        assert all(a is None for _, a in trace)

    def test_trace_indexed_by_episode(self):
        coords = [stable_samples(1.5, 40, seed=12, stream_id=k) for k in range(7)]
        trace = gradient_tail_trace(coords, window=3)
        assert [k for k, _ in trace] == list(range(7))
