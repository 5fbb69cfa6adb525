import logging
from dataclasses import dataclass, field

import numpy as np

from app.core.errors import ScheduleError, TimestepError

logger = logging.getLogger(__name__)

SCHEDULE_NAMES = {"linear"}


@dataclass(frozen=True, eq=False)
class VarianceSchedule:
    """累计信号系数 ᾱ_t，下标 0 固定为 1（无噪声）。"""

    alpha_bar: np.ndarray
    total_steps: int = field(init=False)

    def __post_init__(self):
        alpha_bar = np.asarray(self.alpha_bar, dtype=np.float64)
        if alpha_bar.ndim != 1 or alpha_bar.size < 2:
            raise ScheduleError("alpha_bar 必须是长度至少为 2 的一维数组")
        if alpha_bar[0] != 1.0:
            raise ScheduleError("alpha_bar[0] 必须严格等于 1")
        tail = alpha_bar[1:]
        if not np.all(np.isfinite(tail)) or np.any(tail <= 0.0) or np.any(tail >= 1.0):
            raise ScheduleError("t >= 1 时 alpha_bar 必须落在 (0, 1) 内")
        if np.any(np.diff(alpha_bar) >= 0.0):
            raise ScheduleError("alpha_bar 必须严格递减")

        alpha_bar = alpha_bar.copy()
        alpha_bar.setflags(write=False)
        object.__setattr__(self, "alpha_bar", alpha_bar)
        object.__setattr__(self, "total_steps", int(alpha_bar.size - 1))

    def check_timestep(self, t: int) -> int:
        """校验 0 <= t <= T，返回 int。"""
        if isinstance(t, (bool, np.bool_)) or int(t) != t:
            raise TimestepError(f"时间步必须是整数: {t!r}")
        t = int(t)
        if not 0 <= t <= self.total_steps:
            raise TimestepError(f"时间步 {t} 超出范围 [0, {self.total_steps}]")
        return t

    def alpha(self, t: int) -> float:
        return float(self.alpha_bar[self.check_timestep(t)])

    def sqrt_alpha(self, t: int) -> float:
        return float(np.sqrt(self.alpha(t)))

    def sqrt_one_minus_alpha(self, t: int) -> float:
        return float(np.sqrt(1.0 - self.alpha(t)))


@dataclass(frozen=True)
class TimestepSequence:
    """降序采样时间步 τ₁ > τ₂ > … > τ_{N−1} >= 1。"""

    taus: tuple[int, ...]

    def __post_init__(self):
        taus = tuple(int(t) for t in self.taus)
        if not taus:
            raise ScheduleError("时间步序列不能为空")
        if taus[-1] < 1:
            raise ScheduleError(f"时间步必须 >= 1: {taus}")
        if any(a <= b for a, b in zip(taus, taus[1:])):
            raise ScheduleError(f"时间步序列必须严格递减: {taus}")
        object.__setattr__(self, "taus", taus)

    def __len__(self) -> int:
        return len(self.taus)

    def __iter__(self):
        return iter(self.taus)

    def __getitem__(self, index: int) -> int:
        return self.taus[index]

    @property
    def num_points(self) -> int:
        """算法记号里的 N（序列长度为 N−1）。"""
        return len(self.taus) + 1

    def validate_for(self, schedule: VarianceSchedule) -> "TimestepSequence":
        if self.taus[0] > schedule.total_steps:
            raise TimestepError(
                f"τ₁={self.taus[0]} 超过调度总步数 T={schedule.total_steps}"
            )
        return self

    def transitions(self) -> list[tuple[int, int]]:
        """相邻时间步对 (τ_n, τ_{n+1})，最后一对落到 t=0。"""
        nexts = list(self.taus[1:]) + [0]
        return list(zip(self.taus, nexts))


def make_linear_schedule(
    total_steps: int = 1000,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
) -> VarianceSchedule:
    """线性 β 调度：ᾱ_t = ∏_{s<=t} (1 − β_s)。"""
    if int(total_steps) != total_steps or total_steps < 1:
        raise ScheduleError(f"总步数必须是正整数: {total_steps}")
    if not (0.0 < beta_start < 1.0 and 0.0 < beta_end < 1.0):
        raise ScheduleError(f"β 必须落在 (0, 1) 内: start={beta_start}, end={beta_end}")
    if beta_start > beta_end:
        raise ScheduleError(f"要求 beta_start <= beta_end: {beta_start} > {beta_end}")

    betas = np.linspace(beta_start, beta_end, int(total_steps), dtype=np.float64)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    logger.debug("构造线性调度: T=%d, ᾱ_T=%.6e", total_steps, alpha_bar[-1])
    return VarianceSchedule(alpha_bar=alpha_bar)


def make_schedule(
    name: str,
    total_steps: int,
    beta_start: float,
    beta_end: float,
) -> VarianceSchedule:
    """按名字构造调度，目前只有 linear。"""
    if name not in SCHEDULE_NAMES:
        raise ScheduleError(f"未知调度: {name}，可选: {sorted(SCHEDULE_NAMES)}")
    return make_linear_schedule(total_steps, beta_start, beta_end)


def make_timesteps(total_steps: int, num_points: int) -> TimestepSequence:
    """τ_n = round(T·(N−n+1)/N)，n = 1..N−1，锚定 τ₁ = T。"""
    if num_points < 2:
        raise ScheduleError(f"N 必须 >= 2: {num_points}")
    if total_steps < 1:
        raise ScheduleError(f"T 必须 >= 1: {total_steps}")
    if num_points - 1 > total_steps:
        raise ScheduleError(f"N−1={num_points - 1} 超过 T={total_steps}")

    taus: list[int] = []
    for n in range(1, num_points):
        # 四舍五入取半向上，避免银行家舍入
        value = int(np.floor(total_steps * (num_points - n + 1) / num_points + 0.5))
        value = min(max(value, 1), total_steps)
        if taus and value >= taus[-1]:
            value = taus[-1] - 1
        if value < 1:
            continue
        taus.append(value)

    if not taus:
        raise ScheduleError(f"去重后时间步序列为空: T={total_steps}, N={num_points}")
    return TimestepSequence(taus=tuple(taus))
