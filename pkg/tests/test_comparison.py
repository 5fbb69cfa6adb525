"""显式 DDIM 反演与 DDCM 虚拟反演的重建误差对比测试。"""
import numpy as np

from app.denoisers.base import Condition
from app.denoisers.oracles import GaussianComponent, GaussianOracle
from app.diffusion.rng import SYNTHETIC, NoiseStreams
from app.diffusion.schedules import make_timesteps
from app.harness.comparison import DDCM_VIRTUAL, DDIM_INVERSION, SamplerComparator, ddim_invert


def final_errors(rows):
    return {row.strategy: row.max_abs_error for row in rows if row.timestep == 0}


class TestSamplerComparator:
    def test_ddcm_exact_ddim_drifts(self, schedule):
        component = GaussianComponent(np.array(0.0), 0.5)
        oracle = GaussianOracle(component, schedule)
        streams = NoiseStreams(0)
        z0 = component.sample(streams.generator(SYNTHETIC, 0), (4, 8, 8))
        taus = make_timesteps(1000, 11)

        rows = SamplerComparator().compare(z0, Condition((0,)), oracle, taus, schedule, streams)
        final = final_errors(rows)
        assert final[DDCM_VIRTUAL] <= 1e-12
        assert final[DDIM_INVERSION] > final[DDCM_VIRTUAL]
        assert all(row.max_abs_error <= 1e-12 for row in rows if row.strategy == DDCM_VIRTUAL)

    def test_row_layout(self, schedule):
        oracle = GaussianOracle(GaussianComponent(np.array(0.0), 1.0), schedule)
        taus = make_timesteps(1000, 4)
        rows = SamplerComparator().compare(np.ones(3), Condition((0,)), oracle, taus, schedule, NoiseStreams(1))
        for strategy in (DDIM_INVERSION, DDCM_VIRTUAL):
            steps = [(row.step, row.timestep) for row in rows if row.strategy == strategy]
            assert steps == [(1, 1000), (2, 750), (3, 500), (4, 0)]

    def test_point_mass_ddim_is_exact(self, schedule):
        oracle = GaussianOracle(GaussianComponent(np.array(0.8), 0.0), schedule)
        z0 = np.full((2, 2), 0.8)
        taus = make_timesteps(1000, 11)
        rows = SamplerComparator().compare(z0, Condition((0,)), oracle, taus, schedule, NoiseStreams(2))
        final = final_errors(rows)
        assert final[DDIM_INVERSION] <= 1e-10
        assert final[DDCM_VIRTUAL] <= 1e-12

    def test_ddim_invert_reaches_first_timestep_shape(self, schedule, rng):
        oracle = GaussianOracle(GaussianComponent(np.array(0.0), 1.0), schedule)
        z0 = rng.standard_normal((2, 3))
        z = ddim_invert(z0, Condition((0,)), oracle, make_timesteps(1000, 5), schedule)
        assert z.shape == z0.shape
        assert np.all(np.isfinite(z))
