"""前向加噪、预测初值、通用去噪步与一致性采样的无状态算子。

所有算子都是纯函数：噪声作为参数传入，只有 consistency_sample 接收显式随机流。
全部使用 float64。
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from app.core.errors import (
    NonFiniteLatentError,
    ShapeMismatchError,
    SigmaError,
    TimestepError,
)
from app.diffusion.rng import RENOISE, TERMINAL, NoiseStreams
from app.diffusion.schedules import TimestepSequence, VarianceSchedule

logger = logging.getLogger(__name__)

ConsistencyFunction = Callable[[np.ndarray, int], np.ndarray]


def as_latent(value, name: str = "latent") -> np.ndarray:
    """转成 float64 数组并检查有限性。"""
    array = np.asarray(value, dtype=np.float64)
    if array.ndim == 0 or any(dim < 1 for dim in array.shape):
        raise ShapeMismatchError(f"{name} 的形状非法: {array.shape}")
    if not np.all(np.isfinite(array)):
        raise NonFiniteLatentError(f"{name} 含有 NaN/Inf")
    return array


def check_same_shape(**latents: np.ndarray) -> None:
    shapes = {name: np.shape(value) for name, value in latents.items()}
    if len(set(shapes.values())) > 1:
        detail = ", ".join(f"{name}={shape}" for name, shape in shapes.items())
        raise ShapeMismatchError(f"形状不一致: {detail}")


def _finite(result: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(result)):
        raise NonFiniteLatentError(f"{op} 输出含有 NaN/Inf")
    return result


class SigmaKind(str, Enum):
    DETERMINISTIC = "deterministic"
    ANCESTRAL = "ancestral"
    CONSISTENT = "consistent"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class SigmaChoice:
    """σ_t 的选择：DDIM / DDPM / DDCM / 显式值。"""

    kind: SigmaKind
    value: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SigmaKind(self.kind))
        if self.kind is SigmaKind.EXPLICIT:
            if self.value is None or not np.isfinite(self.value) or self.value < 0:
                raise SigmaError(f"显式 σ 必须是非负有限值: {self.value}")

    @classmethod
    def deterministic(cls) -> "SigmaChoice":
        return cls(SigmaKind.DETERMINISTIC)

    @classmethod
    def ancestral(cls) -> "SigmaChoice":
        return cls(SigmaKind.ANCESTRAL)

    @classmethod
    def consistent(cls) -> "SigmaChoice":
        return cls(SigmaKind.CONSISTENT)

    @classmethod
    def explicit(cls, value: float) -> "SigmaChoice":
        return cls(SigmaKind.EXPLICIT, float(value))

    def resolve(self, t: int, t_prev: int, schedule: VarianceSchedule) -> tuple[float, float]:
        """返回 (σ_t, √(1−α_{t_prev}−σ_t²))。"""
        alpha_t = schedule.alpha(t)
        alpha_prev = schedule.alpha(t_prev)
        residual = 1.0 - alpha_prev

        if self.kind is SigmaKind.DETERMINISTIC:
            return 0.0, float(np.sqrt(residual))
        if self.kind is SigmaKind.CONSISTENT:
            # 方向项系数严格为 0
            return float(np.sqrt(residual)), 0.0
        if self.kind is SigmaKind.ANCESTRAL:
            variance = (1.0 - alpha_prev) / (1.0 - alpha_t) * (1.0 - alpha_t / alpha_prev)
            variance = max(variance, 0.0)
            return float(np.sqrt(variance)), float(np.sqrt(max(residual - variance, 0.0)))

        sigma = float(self.value)
        if sigma * sigma > residual:
            raise SigmaError(
                f"σ_t²={sigma * sigma:.6g} 超过 1−α_(t_prev)={residual:.6g}，方向项系数为虚数"
            )
        return sigma, float(np.sqrt(residual - sigma * sigma))


def forward_noise(
    z0: np.ndarray, t: int, eps: np.ndarray, schedule: VarianceSchedule
) -> np.ndarray:
    """z_t = √α_t·z0 + √(1−α_t)·ε"""
    z0 = as_latent(z0, "z0")
    eps = as_latent(eps, "eps")
    check_same_shape(z0=z0, eps=eps)
    t = schedule.check_timestep(t)
    result = schedule.sqrt_alpha(t) * z0 + schedule.sqrt_one_minus_alpha(t) * eps
    return _finite(result, "forward_noise")


def predict_x0(
    z_t: np.ndarray, t: int, eps_pred: np.ndarray, schedule: VarianceSchedule
) -> np.ndarray:
    """z̄0 = (z_t − √(1−α_t)·ε) / √α_t"""
    z_t = as_latent(z_t, "z_t")
    eps_pred = as_latent(eps_pred, "eps_pred")
    check_same_shape(z_t=z_t, eps_pred=eps_pred)
    t = schedule.check_timestep(t)
    if t == 0:
        raise TimestepError("t=0 时没有加噪，预测初值无定义")
    alpha = schedule.alpha(t)
    if alpha <= 0.0:
        raise TimestepError(f"α_{t}=0，无法除以 √α_t")
    result = (z_t - schedule.sqrt_one_minus_alpha(t) * eps_pred) / np.sqrt(alpha)
    return _finite(result, "predict_x0")


def ddcm_step(
    z0_pred: np.ndarray, t_prev: int, noise: np.ndarray, schedule: VarianceSchedule
) -> np.ndarray:
    """√α_{t_prev}·z̄0 + √(1−α_{t_prev})·ε，与多步一致性采样同形。"""
    z0_pred = as_latent(z0_pred, "z0_pred")
    noise = as_latent(noise, "noise")
    check_same_shape(z0_pred=z0_pred, noise=noise)
    t_prev = schedule.check_timestep(t_prev)
    result = schedule.sqrt_alpha(t_prev) * z0_pred + schedule.sqrt_one_minus_alpha(t_prev) * noise
    return _finite(result, "ddcm_step")


def generalized_step(
    z_t: np.ndarray,
    t: int,
    t_prev: int,
    eps_pred: np.ndarray,
    sigma: SigmaChoice,
    noise: np.ndarray,
    schedule: VarianceSchedule,
) -> np.ndarray:
    """通用去噪步：预测初值 + 指向 z_t 的方向 + 随机噪声。"""
    z_t = as_latent(z_t, "z_t")
    eps_pred = as_latent(eps_pred, "eps_pred")
    noise = as_latent(noise, "noise")
    check_same_shape(z_t=z_t, eps_pred=eps_pred, noise=noise)
    t = schedule.check_timestep(t)
    t_prev = schedule.check_timestep(t_prev)
    if not t > t_prev:
        raise TimestepError(f"要求 t > t_prev: t={t}, t_prev={t_prev}")

    sigma_t, direction = sigma.resolve(t, t_prev, schedule)
    z0_pred = predict_x0(z_t, t, eps_pred, schedule)
    if direction == 0.0 and sigma_t > 0.0:
        # σ_t = √(1−α_{t_prev}) 时方向项消失，走 ddcm_step 的运算顺序保证逐位一致
        return ddcm_step(z0_pred, t_prev, noise, schedule)
    result = schedule.sqrt_alpha(t_prev) * z0_pred + direction * eps_pred + sigma_t * noise
    return _finite(result, "generalized_step")


def consistency_sample(
    f: ConsistencyFunction,
    taus: TimestepSequence,
    shape: tuple[int, ...],
    schedule: VarianceSchedule,
    streams: NoiseStreams,
) -> np.ndarray:
    """多步一致性采样：终端噪声 → f → 重新加噪 → f …，返回最后一次 f 的输出。"""
    taus.validate_for(schedule)
    z = streams.normal(TERMINAL, 1, shape)
    z0 = as_latent(f(z, taus[0]), "f(z, τ₁)")

    for n, tau in enumerate(taus.taus[1:], start=2):
        noise = streams.normal(RENOISE, n, shape)
        z = ddcm_step(z0, tau, noise, schedule)
        z0 = as_latent(f(z, tau), f"f(z, τ_{n})")

    logger.debug("一致性采样完成: steps=%d", len(taus))
    return z0
