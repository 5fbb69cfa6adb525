"""解析最优噪声预测器：数据服从高斯（或按条件选分量的高斯混合）时 ε* 有闭式解。"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from app.core.errors import ConditionError, ShapeMismatchError, TimestepError
from app.denoisers.base import AttentionInjection, Condition, ConditionalDenoiser, DenoiserOutput
from app.diffusion.schedules import VarianceSchedule

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """N(mu, s²I)，s = 0 为点质量。mu 可以是标量，按潜变量形状广播。"""

    mu: np.ndarray
    s: float

    def __post_init__(self):
        if not np.isfinite(self.s) or self.s < 0.0:
            raise ValueError(f"标准差必须非负: {self.s}")
        mu = np.asarray(self.mu, dtype=np.float64)
        if not np.all(np.isfinite(mu)):
            raise ValueError("均值含有 NaN/Inf")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "s", float(self.s))

    def mean_like(self, z: np.ndarray) -> np.ndarray:
        try:
            return np.broadcast_to(self.mu, z.shape)
        except ValueError as e:
            raise ShapeMismatchError(f"均值形状 {self.mu.shape} 无法广播到 {z.shape}") from e

    def posterior_mean(self, z: np.ndarray, alpha: float) -> np.ndarray:
        """E[z0 | z_t] = mu + √ᾱ·s²/(ᾱ·s² + 1 − ᾱ)·(z_t − √ᾱ·mu)"""
        mu = self.mean_like(z)
        sqrt_alpha = np.sqrt(alpha)
        variance = self.s * self.s
        gain = sqrt_alpha * variance / (alpha * variance + 1.0 - alpha)
        return mu + gain * (z - sqrt_alpha * mu)

    def optimal_eps(self, z: np.ndarray, alpha: float) -> np.ndarray:
        """ε* = (z_t − √ᾱ·E[z0|z_t]) / √(1−ᾱ)"""
        return (z - np.sqrt(alpha) * self.posterior_mean(z, alpha)) / np.sqrt(1.0 - alpha)

    def sample(self, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
        mu = np.broadcast_to(self.mu, shape)
        return mu + self.s * rng.standard_normal(shape)


class GaussianOracle(ConditionalDenoiser):
    """单高斯解析去噪器，忽略条件，不支持捕获/注入。"""

    name = "gaussian_oracle"

    def __init__(self, component: GaussianComponent, schedule: VarianceSchedule):
        super().__init__(schedule)
        self.component = component

    def _forward(self, z, t, cond, injection: AttentionInjection | None) -> DenoiserOutput:
        if t == 0:
            raise TimestepError("解析去噪器不接受 t=0")
        return DenoiserOutput(eps=self.component.optimal_eps(z, self.schedule.alpha(t)))

    def describe(self) -> dict:
        return {**super().describe(), "s": self.component.s}


class ConditionalMixtureOracle(ConditionalDenoiser):
    """条件的首个 token 作为分量下标，不同条件模拟不同 prompt。"""

    name = "conditional_mixture_oracle"

    def __init__(self, components: Sequence[GaussianComponent], schedule: VarianceSchedule):
        super().__init__(schedule)
        if not components:
            raise ValueError("至少需要一个高斯分量")
        self.components = tuple(components)

    def component_for(self, cond: Condition) -> GaussianComponent:
        head = cond.tokens[0]
        try:
            index = int(head)
        except (TypeError, ValueError) as e:
            raise ConditionError(f"条件首 token 不是分量下标: {head!r}") from e
        if not 0 <= index < len(self.components):
            raise ConditionError(
                f"分量下标 {index} 超出范围 [0, {len(self.components)})"
            )
        return self.components[index]

    def _forward(self, z, t, cond, injection: AttentionInjection | None) -> DenoiserOutput:
        if t == 0:
            raise TimestepError("解析去噪器不接受 t=0")
        component = self.component_for(cond)
        return DenoiserOutput(eps=component.optimal_eps(z, self.schedule.alpha(t)))

    def describe(self) -> dict:
        return {**super().describe(), "num_components": len(self.components)}


def gaussian_oracle(mu, s: float, schedule: VarianceSchedule) -> GaussianOracle:
    return GaussianOracle(GaussianComponent(mu=np.asarray(mu), s=s), schedule)


def conditional_mixture_oracle(
    components: Sequence[GaussianComponent], schedule: VarianceSchedule
) -> ConditionalMixtureOracle:
    return ConditionalMixtureOracle(components, schedule)
