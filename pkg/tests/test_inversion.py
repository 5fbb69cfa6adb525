"""DDCM 虚拟反演测试。"""
import numpy as np
import pytest

from app.core.errors import TimestepError
from app.diffusion.inversion import VirtualInverter, epsilon_cons, virtual_invert
from app.diffusion.kernels import forward_noise
from app.diffusion.rng import RENOISE, TERMINAL, NoiseStreams
from app.diffusion.schedules import TimestepSequence, VarianceSchedule, make_timesteps


class TestEpsilonCons:
    def test_known_value(self):
        schedule = VarianceSchedule(np.array([1.0, 0.36]))
        result = epsilon_cons(np.ones(3), 1, np.full(3, 0.5), schedule)
        np.testing.assert_allclose(result, 0.875, rtol=0, atol=1e-15)

    def test_recovers_forward_noise(self, schedule, rng):
        z0 = rng.standard_normal((2, 4))
        eps = rng.standard_normal((2, 4))
        z_t = forward_noise(z0, 500, eps, schedule)
        np.testing.assert_allclose(epsilon_cons(z_t, 500, z0, schedule), eps, rtol=0, atol=1e-12)

    def test_t_zero_rejected(self, schedule):
        with pytest.raises(TimestepError):
            epsilon_cons(np.ones(2), 0, np.ones(2), schedule)

    def test_guard_near_unit_alpha(self):
        schedule = VarianceSchedule(np.array([1.0, 1.0 - 1e-13, 0.5]))
        with pytest.raises(TimestepError):
            epsilon_cons(np.ones(2), 1, np.ones(2), schedule)


class TestVirtualInvert:
    @pytest.mark.parametrize("num_points", [2, 8, 50])
    @pytest.mark.parametrize("shape", [(4, 8, 8), (4, 16, 16), (3,)])
    def test_exact_reconstruction(self, schedule, num_points, shape):
        taus = make_timesteps(1000, num_points)
        for seed in range(100):
            z0 = np.random.default_rng(seed + 1000).standard_normal(shape)
            z, _ = virtual_invert(z0, taus, schedule, NoiseStreams(seed))
            assert np.max(np.abs(z - z0)) <= 1e-12

    def test_trace_records_every_step(self, schedule, rng):
        z0 = rng.standard_normal((4, 8, 8))
        taus = make_timesteps(1000, 50)
        _, trace = virtual_invert(z0, taus, schedule, NoiseStreams(3))
        assert [step.tau for step in trace.steps] == list(taus)
        assert max(trace.max_errors()) <= 1e-12

    def test_trace_stride(self, schedule, rng):
        z0 = rng.standard_normal(5)
        taus = make_timesteps(1000, 11)
        _, trace = VirtualInverter(trace_stride=3).invert(z0, taus, schedule, NoiseStreams(0))
        assert [step.index for step in trace.steps] == [1, 4, 7, 10]

    def test_noise_independent(self, schedule, rng):
        z0 = rng.standard_normal((2, 3))
        taus = make_timesteps(1000, 8)
        outputs = [virtual_invert(z0, taus, schedule, NoiseStreams(seed))[0] for seed in range(5)]
        for output in outputs[1:]:
            assert np.max(np.abs(output - outputs[0])) <= 1e-12

    def test_noise_keys(self, schedule):
        streams = NoiseStreams(9)
        virtual_invert(np.zeros(2), make_timesteps(1000, 4), schedule, streams)
        keys = [(purpose, step) for purpose, step, _ in streams.ledger]
        assert keys == [(TERMINAL, 1), (RENOISE, 2), (RENOISE, 3)]

    def test_intermediate_marginal(self, schedule):
        """中间 z_τ 服从 N(√ᾱ·z0, (1−ᾱ)I)。"""
        z0 = np.array([0.7, -1.2])
        taus = TimestepSequence((1000, 400))
        samples = []
        for seed in range(4000):
            _, trace = virtual_invert(z0, taus, schedule, NoiseStreams(seed))
            samples.append(trace.steps[1].z_tau)
        samples = np.asarray(samples)

        alpha = schedule.alpha(400)
        count = samples.shape[0]
        mean_se = np.sqrt((1.0 - alpha) / count)
        var_se = (1.0 - alpha) * np.sqrt(2.0 / count)
        assert np.all(np.abs(samples.mean(axis=0) - np.sqrt(alpha) * z0) <= 4 * mean_se)
        assert np.all(np.abs(samples.var(axis=0) - (1.0 - alpha)) <= 4 * var_se)

    def test_rejects_timesteps_beyond_schedule(self, short_schedule):
        with pytest.raises(TimestepError):
            virtual_invert(np.zeros(2), TimestepSequence((200, 100)), short_schedule, NoiseStreams(0))

    def test_invalid_stride(self):
        with pytest.raises(ValueError):
            VirtualInverter(trace_stride=0)
