"""前向加噪、预测初值、通用去噪步与一致性采样测试。"""
import math

import numpy as np
import pytest

from app.core.errors import NonFiniteLatentError, ShapeMismatchError, SigmaError, TimestepError
from app.diffusion.inversion import epsilon_cons
from app.diffusion.kernels import (
    SigmaChoice,
    consistency_sample,
    ddcm_step,
    forward_noise,
    generalized_step,
    predict_x0,
)
from app.diffusion.rng import RENOISE, TERMINAL, NoiseStreams
from app.diffusion.schedules import VarianceSchedule, make_timesteps

# ᾱ = [1, 0.5, 0.25]
QUARTER = VarianceSchedule(np.array([1.0, 0.5, 0.25]))
# ᾱ_1 = 0.64
POINT_SIX_FOUR = VarianceSchedule(np.array([1.0, 0.64]))


class TestForwardNoise:
    def test_zero_signal(self):
        z = forward_noise(np.zeros((2, 3)), 2, np.ones((2, 3)), QUARTER)
        np.testing.assert_allclose(z, math.sqrt(0.75), rtol=0, atol=1e-15)

    def test_t_zero_is_identity(self, rng):
        z0 = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(forward_noise(z0, 0, rng.standard_normal((3, 4)), QUARTER), z0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            forward_noise(np.zeros((2, 2)), 1, np.zeros((2, 3)), QUARTER)

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteLatentError):
            forward_noise(np.array([np.nan, 0.0]), 1, np.zeros(2), QUARTER)

    def test_timestep_out_of_range(self):
        with pytest.raises(TimestepError):
            forward_noise(np.zeros(2), 3, np.zeros(2), QUARTER)


class TestPredictX0:
    def test_known_value(self):
        result = predict_x0(np.ones(4), 2, np.full(4, 0.5), QUARTER)
        np.testing.assert_allclose(result, (1 - math.sqrt(0.75) * 0.5) / 0.5, rtol=0, atol=1e-12)
        assert abs(result[0] - 1.1339746) < 1e-7

    def test_t_zero_rejected(self):
        with pytest.raises(TimestepError):
            predict_x0(np.ones(2), 0, np.ones(2), QUARTER)

    def test_round_trip_any_noise(self, short_schedule, rng):
        z0 = rng.uniform(-10, 10, size=(4, 8, 8))
        for t in (1, 17, 50, 100):
            eps = rng.standard_normal(z0.shape)
            z_t = forward_noise(z0, t, eps, short_schedule)
            assert np.max(np.abs(predict_x0(z_t, t, eps, short_schedule) - z0)) <= 1e-12


class TestDdcmStep:
    def test_known_value(self):
        result = ddcm_step(np.ones((2, 2)), 1, np.ones((2, 2)), POINT_SIX_FOUR)
        np.testing.assert_allclose(result, 1.4, rtol=0, atol=1e-15)

    def test_matches_forward_noise(self, short_schedule, rng):
        z0 = rng.standard_normal((2, 3))
        noise = rng.standard_normal((2, 3))
        np.testing.assert_array_equal(
            ddcm_step(z0, 40, noise, short_schedule),
            forward_noise(z0, 40, noise, short_schedule),
        )


class TestGeneralizedStep:
    def test_explicit_sigma_matches_scalar_formula(self, rng):
        z_t = rng.standard_normal((2, 2))
        eps = rng.standard_normal((2, 2))
        noise = rng.standard_normal((2, 2))
        result = generalized_step(z_t, 2, 1, eps, SigmaChoice.explicit(0.3), noise, QUARTER)

        for index in np.ndindex(2, 2):
            x0 = (z_t[index] - math.sqrt(0.75) * eps[index]) / math.sqrt(0.25)
            expected = math.sqrt(0.5) * x0 + math.sqrt(0.5 - 0.09) * eps[index] + 0.3 * noise[index]
            assert abs(result[index] - expected) <= 1e-12

    def test_consistent_sigma_matches_ddcm(self, short_schedule, rng):
        for _ in range(1000):
            t = int(rng.integers(2, 101))
            t_prev = int(rng.integers(1, t))
            shape = tuple(int(d) for d in rng.integers(1, 5, size=int(rng.integers(1, 4))))
            z_t = rng.standard_normal(shape)
            eps = rng.standard_normal(shape)
            noise = rng.standard_normal(shape)
            result = generalized_step(z_t, t, t_prev, eps, SigmaChoice.consistent(), noise, short_schedule)
            expected = ddcm_step(predict_x0(z_t, t, eps, short_schedule), t_prev, noise, short_schedule)
            assert np.max(np.abs(result - expected)) <= 1e-14

    def test_deterministic_ignores_noise(self, short_schedule, rng):
        z_t = rng.standard_normal(4)
        eps = rng.standard_normal(4)
        a = generalized_step(z_t, 50, 25, eps, SigmaChoice.deterministic(), np.zeros(4), short_schedule)
        b = generalized_step(z_t, 50, 25, eps, SigmaChoice.deterministic(), rng.standard_normal(4), short_schedule)
        np.testing.assert_array_equal(a, b)

    def test_ancestral_sigma_within_bounds(self, short_schedule):
        sigma, direction = SigmaChoice.ancestral().resolve(50, 25, short_schedule)
        assert 0.0 < sigma
        assert abs(sigma ** 2 + direction ** 2 - (1.0 - short_schedule.alpha(25))) < 1e-12

    def test_ancestral_moments(self, short_schedule):
        n = 200_000
        t, t_prev = 50, 25
        z_t = np.full(n, 0.7)
        eps = np.full(n, -0.4)
        noise = np.random.default_rng(11).standard_normal(n)
        samples = generalized_step(z_t, t, t_prev, eps, SigmaChoice.ancestral(), noise, short_schedule)

        alpha_t, alpha_prev = short_schedule.alpha(t), short_schedule.alpha(t_prev)
        variance = (1 - alpha_prev) / (1 - alpha_t) * (1 - alpha_t / alpha_prev)
        x0 = (0.7 - math.sqrt(1 - alpha_t) * -0.4) / math.sqrt(alpha_t)
        mean = math.sqrt(alpha_prev) * x0 + math.sqrt(1 - alpha_prev - variance) * -0.4

        mean_se = math.sqrt(variance / n)
        var_se = variance * math.sqrt(2.0 / (n - 1))
        assert abs(samples.mean() - mean) <= 4 * mean_se
        assert abs(samples.var(ddof=1) - variance) <= 4 * var_se

    def test_sigma_too_large(self, rng):
        with pytest.raises(SigmaError):
            generalized_step(
                np.ones(2), 2, 1, np.ones(2), SigmaChoice.explicit(0.8), np.ones(2), QUARTER
            )

    def test_negative_sigma_rejected(self):
        with pytest.raises(SigmaError):
            SigmaChoice.explicit(-0.1)

    def test_requires_descending_timesteps(self):
        with pytest.raises(TimestepError):
            generalized_step(np.ones(2), 1, 2, np.ones(2), SigmaChoice.consistent(), np.ones(2), QUARTER)


class TestConsistencySample:
    def test_consistent_noise_recovers_reference(self, schedule, rng):
        z0 = rng.standard_normal((4, 8, 8))

        def f(z, t):
            return predict_x0(z, t, epsilon_cons(z, t, z0, schedule), schedule)

        taus = make_timesteps(1000, 11)
        result = consistency_sample(f, taus, z0.shape, schedule, NoiseStreams(5))
        assert np.max(np.abs(result - z0)) <= 1e-12

    def test_point_mass_oracle_converges(self, schedule):
        mu = 1.5

        def f(z, t):
            eps = (z - schedule.sqrt_alpha(t) * mu) / schedule.sqrt_one_minus_alpha(t)
            return predict_x0(z, t, eps, schedule)

        taus = make_timesteps(1000, 5)
        errors = [
            np.max(np.abs(consistency_sample(f, taus, (3,), schedule, NoiseStreams(seed)) - mu))
            for seed in range(1000)
        ]
        assert max(errors) <= 1e-9

    def test_noise_keys(self, schedule):
        streams = NoiseStreams(11)
        taus = make_timesteps(1000, 4)
        consistency_sample(lambda z, t: np.zeros_like(z), taus, (2,), schedule, streams)
        keys = [(purpose, step) for purpose, step, _ in streams.ledger]
        assert keys == [(TERMINAL, 1), (RENOISE, 2), (RENOISE, 3)]
