import hashlib
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum

import numpy as np

from app.core.errors import CapabilityError, ShapeMismatchError
from app.diffusion.kernels import as_latent
from app.diffusion.schedules import VarianceSchedule
from app.editing.attention import CrossAttentionMap, SelfAttentionPack

logger = logging.getLogger(__name__)

TokenId = int | str


@dataclass(frozen=True)
class Condition:
    """条件 token 序列，对本模块不透明，由去噪器解释。"""

    tokens: tuple[TokenId, ...]

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if not tokens:
            raise ValueError("条件 token 列表不能为空")
        object.__setattr__(self, "tokens", tokens)

    @property
    def id(self) -> str:
        payload = "\x1f".join(f"{type(t).__name__}:{t}" for t in self.tokens)
        return hashlib.sha1(payload.encode("utf-8")).hexdigest()[:16]

    def __len__(self) -> int:
        return len(self.tokens)


class Capability(str, Enum):
    CAPTURE = "capture"
    INJECT = "inject"


@dataclass(frozen=True)
class AttentionInjection:
    """单次调用的注入内容，不跨调用保存。"""

    self_pack: SelfAttentionPack | None = None
    cross_map: CrossAttentionMap | None = None

    @property
    def empty(self) -> bool:
        return self.self_pack is None and self.cross_map is None


@dataclass(frozen=True, eq=False)
class DenoiserOutput:
    eps: np.ndarray
    cross_map: CrossAttentionMap | None = None
    self_pack: SelfAttentionPack | None = None


class ConditionalDenoiser(ABC):
    """ε(z, t, c) 的能力接口；捕获/注入按 capabilities 声明开放。"""

    name: str = "denoiser"
    capabilities: frozenset[Capability] = frozenset()

    def __init__(self, schedule: VarianceSchedule):
        self.schedule = schedule

    def supports(self, capability: Capability) -> bool:
        return capability in self.capabilities

    def require(self, *capabilities: Capability) -> None:
        for capability in capabilities:
            if not self.supports(capability):
                raise CapabilityError(self.name, capability.value)

    def predict(self, z: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        return self.predict_with_control(z, t, cond).eps

    def predict_with_control(
        self,
        z: np.ndarray,
        t: int,
        cond: Condition,
        capture: bool = False,
        injection: AttentionInjection | None = None,
    ) -> DenoiserOutput:
        """带捕获/注入的预测；不支持的能力直接报错，绝不静默忽略。"""
        if capture:
            self.require(Capability.CAPTURE)
        if injection is not None and not injection.empty:
            self.require(Capability.INJECT)

        z = as_latent(z, "z")
        t = self.schedule.check_timestep(t)
        output = self._forward(z, t, cond, injection)
        if output.eps.shape != z.shape:
            raise ShapeMismatchError(
                f"{self.name} 输出形状 {output.eps.shape} 与输入 {z.shape} 不一致"
            )
        if not capture:
            return DenoiserOutput(eps=output.eps)
        return output

    @abstractmethod
    def _forward(
        self,
        z: np.ndarray,
        t: int,
        cond: Condition,
        injection: AttentionInjection | None,
    ) -> DenoiserOutput:
        ...

    def describe(self) -> dict:
        return {
            "name": self.name,
            "capabilities": sorted(c.value for c in self.capabilities),
        }
