import logging
from dataclasses import dataclass, field

import numpy as np

from app.core.errors import TimestepError
from app.diffusion.kernels import as_latent, check_same_shape, forward_noise, predict_x0
from app.diffusion.rng import RENOISE, TERMINAL, NoiseStreams
from app.diffusion.schedules import TimestepSequence, VarianceSchedule

logger = logging.getLogger(__name__)

# ᾱ_τ 过于接近 1 时一致噪声的分母抵消严重
ALPHA_GUARD = 1.0 - 1e-12


def epsilon_cons(
    z_t: np.ndarray, t: int, z0: np.ndarray, schedule: VarianceSchedule
) -> np.ndarray:
    """一致噪声：ε_cons = (z_t − √α_t·z0) / √(1−α_t)"""
    z_t = as_latent(z_t, "z_t")
    z0 = as_latent(z0, "z0")
    check_same_shape(z_t=z_t, z0=z0)
    t = schedule.check_timestep(t)
    if t == 0:
        raise TimestepError("t=0 时 √(1−α_0)=0，一致噪声无定义")
    if schedule.alpha(t) >= ALPHA_GUARD:
        raise TimestepError(f"α_{t} 过于接近 1，拒绝计算一致噪声")
    return (z_t - schedule.sqrt_alpha(t) * z0) / schedule.sqrt_one_minus_alpha(t)


@dataclass(frozen=True)
class InversionStep:
    """单步记录 (τ_n, z_{τ_n}, ε_cons, z)。"""

    index: int
    tau: int
    z_tau: np.ndarray
    eps_cons: np.ndarray
    z: np.ndarray


@dataclass
class InversionTrace:
    reference: np.ndarray
    stride: int = 1
    steps: list[InversionStep] = field(default_factory=list)

    def record(self, step: InversionStep) -> None:
        if (step.index - 1) % self.stride == 0:
            self.steps.append(step)

    def max_errors(self) -> list[float]:
        return [float(np.max(np.abs(step.z - self.reference))) for step in self.steps]


class VirtualInverter:
    """DDCM 虚拟反演：不做显式反演，每一步的 z 都只依赖参考初值。"""

    def __init__(self, trace_stride: int = 1):
        if trace_stride < 1:
            raise ValueError(f"trace_stride 必须 >= 1: {trace_stride}")
        self.trace_stride = trace_stride

    def invert(
        self,
        z0: np.ndarray,
        taus: TimestepSequence,
        schedule: VarianceSchedule,
        streams: NoiseStreams,
        trace_stride: int | None = None,
    ) -> tuple[np.ndarray, InversionTrace]:
        z0 = as_latent(z0, "z0")
        taus.validate_for(schedule)
        for tau in taus:
            if schedule.alpha(tau) >= ALPHA_GUARD:
                raise TimestepError(f"τ={tau} 的 α 过于接近 1")

        trace = InversionTrace(reference=z0, stride=trace_stride or self.trace_stride)

        tau = taus[0]
        z_tau = streams.normal(TERMINAL, 1, z0.shape)
        eps = epsilon_cons(z_tau, tau, z0, schedule)
        z = predict_x0(z_tau, tau, eps, schedule)
        trace.record(InversionStep(1, tau, z_tau, eps, z))

        for n, tau in enumerate(taus.taus[1:], start=2):
            noise = streams.normal(RENOISE, n, z0.shape)
            z_tau = forward_noise(z, tau, noise, schedule)
            eps = epsilon_cons(z_tau, tau, z0, schedule)
            z = predict_x0(z_tau, tau, eps, schedule)
            trace.record(InversionStep(n, tau, z_tau, eps, z))

        logger.debug(
            "虚拟反演完成: steps=%d, max_err=%.3e",
            len(taus),
            float(np.max(np.abs(z - z0))),
        )
        return z, trace


def virtual_invert(
    z0: np.ndarray,
    taus: TimestepSequence,
    schedule: VarianceSchedule,
    streams: NoiseStreams,
    trace_stride: int = 1,
) -> tuple[np.ndarray, InversionTrace]:
    return VirtualInverter(trace_stride).invert(z0, taus, schedule, streams)


# 全局实例
virtual_inverter = VirtualInverter()
