"""重建误差对比：显式 DDIM 反演 + DDIM 重采样 vs. DDCM 虚拟反演。"""
import logging
from dataclasses import dataclass

import numpy as np

from app.denoisers.base import Condition, ConditionalDenoiser
from app.diffusion.inversion import VirtualInverter
from app.diffusion.kernels import SigmaChoice, as_latent, generalized_step, predict_x0
from app.diffusion.rng import NoiseStreams
from app.diffusion.schedules import TimestepSequence, VarianceSchedule
from app.metrics.consistency import mse

logger = logging.getLogger(__name__)

DDIM_INVERSION = "ddim_inversion"
DDCM_VIRTUAL = "ddcm_virtual"
STRATEGIES = (DDIM_INVERSION, DDCM_VIRTUAL)


@dataclass(frozen=True)
class ComparisonRow:
    strategy: str
    step: int
    timestep: int
    max_abs_error: float
    mse: float


def _row(strategy: str, step: int, timestep: int, estimate: np.ndarray, z0: np.ndarray) -> ComparisonRow:
    return ComparisonRow(
        strategy=strategy,
        step=step,
        timestep=timestep,
        max_abs_error=float(np.max(np.abs(estimate - z0))),
        mse=mse(estimate, z0),
    )


def ddim_invert(
    z0: np.ndarray,
    cond: Condition,
    denoiser: ConditionalDenoiser,
    taus: TimestepSequence,
    schedule: VarianceSchedule,
) -> np.ndarray:
    """沿 0 → τ_{N−1} → … → τ₁ 做确定性反演，每步在当前潜变量上按下一时间步预测噪声。"""
    z = as_latent(z0, "z0")
    ascending = [0] + list(reversed(taus.taus))
    for t_cur, t_next in zip(ascending, ascending[1:]):
        eps = denoiser.predict(z, t_next, cond)
        alpha_cur = schedule.alpha(t_cur)
        z0_pred = (z - np.sqrt(1.0 - alpha_cur) * eps) / np.sqrt(alpha_cur)
        z = schedule.sqrt_alpha(t_next) * z0_pred + schedule.sqrt_one_minus_alpha(t_next) * eps
    return z


class SamplerComparator:
    """逐步记录两种策略的预测初值相对 z0 的误差。"""

    def __init__(self, inverter: VirtualInverter | None = None):
        self.inverter = inverter or VirtualInverter()

    def ddim_curve(
        self,
        z0: np.ndarray,
        cond: Condition,
        denoiser: ConditionalDenoiser,
        taus: TimestepSequence,
        schedule: VarianceSchedule,
    ) -> list[ComparisonRow]:
        z0 = as_latent(z0, "z0")
        z = ddim_invert(z0, cond, denoiser, taus, schedule)
        zeros = np.zeros_like(z0)
        sigma = SigmaChoice.deterministic()

        rows = []
        for n, (t, t_prev) in enumerate(taus.transitions(), start=1):
            eps = denoiser.predict(z, t, cond)
            rows.append(_row(DDIM_INVERSION, n, t, predict_x0(z, t, eps, schedule), z0))
            z = generalized_step(z, t, t_prev, eps, sigma, zeros, schedule)
        # t=0 上的最终重建
        rows.append(_row(DDIM_INVERSION, len(taus) + 1, 0, z, z0))
        return rows

    def ddcm_curve(
        self,
        z0: np.ndarray,
        taus: TimestepSequence,
        schedule: VarianceSchedule,
        streams: NoiseStreams,
    ) -> list[ComparisonRow]:
        z0 = as_latent(z0, "z0")
        z, trace = self.inverter.invert(z0, taus, schedule, streams, trace_stride=1)
        rows = [_row(DDCM_VIRTUAL, step.index, step.tau, step.z, z0) for step in trace.steps]
        rows.append(_row(DDCM_VIRTUAL, len(taus) + 1, 0, z, z0))
        return rows

    def compare(
        self,
        z0: np.ndarray,
        cond: Condition,
        denoiser: ConditionalDenoiser,
        taus: TimestepSequence,
        schedule: VarianceSchedule,
        streams: NoiseStreams,
    ) -> list[ComparisonRow]:
        taus.validate_for(schedule)
        rows = self.ddim_curve(z0, cond, denoiser, taus, schedule)
        rows += self.ddcm_curve(z0, taus, schedule, streams)
        final = {row.strategy: row.max_abs_error for row in rows if row.timestep == 0}
        logger.info(
            "采样器对比完成: steps=%d, ddim_final=%.3e, ddcm_final=%.3e",
            len(taus), final[DDIM_INVERSION], final[DDCM_VIRTUAL],
        )
        return rows


# 全局实例
sampler_comparator = SamplerComparator()
