"""免反演编辑主循环：源分支走虚拟反演，目标分支用校准后的噪声更新预测初值。"""
import hashlib
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace

import numpy as np

from app.core.errors import (
    CapabilityError,
    DenoiserError,
    ShapeMismatchError,
    TimestepError,
)
from app.denoisers.base import (
    AttentionInjection,
    Condition,
    ConditionalDenoiser,
    DenoiserOutput,
)
from app.diffusion.inversion import epsilon_cons
from app.diffusion.kernels import as_latent, check_same_shape, forward_noise, predict_x0
from app.diffusion.rng import RENOISE, TERMINAL, NoiseStreams
from app.diffusion.schedules import TimestepSequence, VarianceSchedule
from app.editing.attention import CrossAttentionMap, local_blend

logger = logging.getLogger(__name__)

SOURCE = "source"
TARGET = "target"
LAYOUT = "layout"


def calibrated_initial(
    z_tgt_t: np.ndarray,
    t: int,
    eps_tgt: np.ndarray,
    eps_src: np.ndarray,
    eps_cons: np.ndarray,
    schedule: VarianceSchedule,
) -> np.ndarray:
    """z0_tgt = predict_x0(z_tgt, t, ε_tgt − ε_src + ε_cons)"""
    z_tgt_t = as_latent(z_tgt_t, "z_tgt_t")
    eps_tgt = as_latent(eps_tgt, "eps_tgt")
    eps_src = as_latent(eps_src, "eps_src")
    eps_cons = as_latent(eps_cons, "eps_cons")
    check_same_shape(z_tgt_t=z_tgt_t, eps_tgt=eps_tgt, eps_src=eps_src, eps_cons=eps_cons)
    return predict_x0(z_tgt_t, t, eps_tgt - eps_src + eps_cons, schedule)


@dataclass(frozen=True, eq=False)
class BranchState:
    """某一时间步上各分支的潜变量与当前预测初值。

    z_lay / z0_lay 只在带布局分支的控制（UAC）下存在。
    """

    z_src: np.ndarray
    z_tgt: np.ndarray
    z0_src: np.ndarray
    z0_tgt: np.ndarray
    step_index: int
    timestep: int
    z_lay: np.ndarray | None = None
    z0_lay: np.ndarray | None = None

    def __post_init__(self):
        latents = {
            name: getattr(self, name)
            for name in ("z_src", "z_tgt", "z0_src", "z0_tgt", "z_lay", "z0_lay")
            if getattr(self, name) is not None
        }
        if len({np.shape(v) for v in latents.values()}) > 1:
            detail = ", ".join(f"{k}={np.shape(v)}" for k, v in latents.items())
            raise ShapeMismatchError(f"分支潜变量形状不一致: {detail}")
        if (self.z_lay is None) != (self.z0_lay is None):
            raise ValueError("z_lay 与 z0_lay 必须同时存在")
        z0_src = np.array(self.z0_src, dtype=np.float64)
        z0_src.setflags(write=False)
        object.__setattr__(self, "z0_src", z0_src)

    @property
    def has_layout(self) -> bool:
        return self.z_lay is not None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.z_src.shape


@dataclass(frozen=True, eq=False)
class RefinedNoise:
    """细化后的目标噪声，附带可选的布局分支噪声、融合掩码 (m_tgt, m_src) 和注入的注意力图。"""

    eps_tgt: np.ndarray
    eps_lay: np.ndarray | None = None
    masks: tuple[np.ndarray, np.ndarray] | None = None
    cross_map: CrossAttentionMap | None = None
    layout_map: CrossAttentionMap | None = None


@dataclass
class RefinerContext:
    """单步内细化器可见的全部信息，注入状态不跨步保存。"""

    state: BranchState
    t: int
    c_src: Condition
    c_tgt: Condition
    denoiser: ConditionalDenoiser
    schedule: VarianceSchedule
    source_output: DenoiserOutput
    eps_cons: np.ndarray

    @property
    def step_index(self) -> int:
        return self.state.step_index

    def predict(
        self,
        branch: str,
        z: np.ndarray,
        cond: Condition,
        capture: bool = False,
        injection: AttentionInjection | None = None,
    ) -> DenoiserOutput:
        return call_denoiser(
            self.denoiser, branch, self.step_index, z, self.t, cond, capture, injection
        )


def call_denoiser(
    denoiser: ConditionalDenoiser,
    branch: str,
    step: int,
    z: np.ndarray,
    t: int,
    cond: Condition,
    capture: bool = False,
    injection: AttentionInjection | None = None,
) -> DenoiserOutput:
    """调用去噪器，失败时补上分支与步数。"""
    try:
        return denoiser.predict_with_control(z, t, cond, capture=capture, injection=injection)
    except CapabilityError:
        raise
    except ShapeMismatchError as e:
        raise ShapeMismatchError(f"{e} (branch={branch}, step={step})") from e
    except Exception as e:
        raise DenoiserError(f"{denoiser.name} 预测失败: {e}", branch=branch, step=step) from e


class NoiseRefiner(ABC):
    """目标噪声细化钩子。"""

    name: str = "refiner"
    requires_capture: bool = False
    uses_layout: bool = False

    def validate(
        self,
        denoiser: ConditionalDenoiser,
        c_src: Condition | None = None,
        c_tgt: Condition | None = None,
    ) -> None:
        """运行前检查去噪器能力（缺失时抛 CapabilityError），给出条件时同时检查 token 索引。"""

    @abstractmethod
    def refine(self, ctx: RefinerContext) -> RefinedNoise:
        ...


class TrivialRefiner(NoiseRefiner):
    """直接返回目标条件下的原始预测。"""

    name = "trivial"

    def refine(self, ctx: RefinerContext) -> RefinedNoise:
        output = ctx.predict(TARGET, ctx.state.z_tgt, ctx.c_tgt)
        return RefinedNoise(eps_tgt=output.eps)


@dataclass(frozen=True, eq=False)
class EditStepRecord:
    step_index: int
    tau: int
    tau_next: int
    eps_src: np.ndarray
    eps_tgt: np.ndarray
    eps_cons: np.ndarray
    noise_digest: str | None = None
    refined: bool = False
    source_error: float = 0.0


@dataclass
class EditRun:
    z0_tgt: np.ndarray
    states: list[BranchState] = field(default_factory=list)
    records: list[EditStepRecord] = field(default_factory=list)

    @property
    def z0_lay(self) -> np.ndarray | None:
        return self.states[-1].z0_lay if self.states else None


class InfEditEngine:
    """双分支（可选三分支）编辑循环。

    每一步：源分支预测 → 一致噪声 → 细化器给出目标噪声 → 校准目标初值 →
    用同一份噪声把所有分支推进到下一个时间步。
    """

    def __init__(self, refiner: NoiseRefiner | None = None):
        self.refiner = refiner or TrivialRefiner()

    def initial_state(
        self,
        z0_src: np.ndarray,
        taus: TimestepSequence,
        streams: NoiseStreams,
        with_layout: bool = False,
    ) -> BranchState:
        """终端噪声在所有分支间共享。"""
        z0_src = as_latent(z0_src, "z0_src")
        z_terminal = streams.normal(TERMINAL, 1, z0_src.shape)
        return BranchState(
            z_src=z_terminal,
            z_tgt=z_terminal.copy(),
            z0_src=z0_src,
            z0_tgt=z0_src.copy(),
            step_index=1,
            timestep=taus[0],
            z_lay=z_terminal.copy() if with_layout else None,
            z0_lay=z0_src.copy() if with_layout else None,
        )

    def step(
        self,
        state: BranchState,
        t_next: int,
        c_src: Condition,
        c_tgt: Condition,
        denoiser: ConditionalDenoiser,
        schedule: VarianceSchedule,
        streams: NoiseStreams,
        refiner: NoiseRefiner | None = None,
        apply_refiner: bool | None = None,
    ) -> tuple[BranchState, EditStepRecord]:
        """推进一步。apply_refiner 为 None 时第一步（τ₁）用原始预测，从第二步起交给细化器。"""
        refiner = refiner or self.refiner
        t = schedule.check_timestep(state.timestep)
        t_next = schedule.check_timestep(t_next)
        if not t > t_next:
            raise TimestepError(f"要求 t > t_next: t={t}, t_next={t_next}")
        if refiner.uses_layout and not state.has_layout:
            raise ValueError(f"细化器 {refiner.name} 需要布局分支，但状态中没有 z_lay")

        n = state.step_index
        if apply_refiner is None:
            apply_refiner = n > 1
        use_refiner = apply_refiner and not isinstance(refiner, TrivialRefiner)
        capture = use_refiner and refiner.requires_capture

        source_output = call_denoiser(denoiser, SOURCE, n, state.z_src, t, c_src, capture=capture)
        eps_src = source_output.eps
        eps_cons = epsilon_cons(state.z_src, t, state.z0_src, schedule)
        # 源分支是虚拟反演分支，用一致噪声预测的初值应当精确等于 z0_src
        source_error = float(np.max(np.abs(predict_x0(state.z_src, t, eps_cons, schedule) - state.z0_src)))

        ctx = RefinerContext(
            state=state,
            t=t,
            c_src=c_src,
            c_tgt=c_tgt,
            denoiser=denoiser,
            schedule=schedule,
            source_output=source_output,
            eps_cons=eps_cons,
        )
        refined = refiner.refine(ctx) if use_refiner else TrivialRefiner().refine(ctx)
        if refined.eps_tgt.shape != state.shape:
            raise ShapeMismatchError(
                f"细化后的目标噪声形状 {refined.eps_tgt.shape} 与潜变量 {state.shape} 不一致 (step={n})"
            )

        z0_tgt = calibrated_initial(state.z_tgt, t, refined.eps_tgt, eps_src, eps_cons, schedule)
        z0_lay = None
        if state.has_layout:
            eps_lay = refined.eps_lay if refined.eps_lay is not None else eps_src
            z0_lay = calibrated_initial(state.z_lay, t, eps_lay, eps_src, eps_cons, schedule)

        noise_digest = None
        if t_next == 0:
            z_src_next, z_tgt_next = state.z0_src.copy(), z0_tgt
            z_lay_next = z0_lay
        else:
            noise = streams.normal(RENOISE, n + 1, state.shape)
            noise_digest = hashlib.sha1(noise.tobytes()).hexdigest()
            z_src_next = forward_noise(state.z0_src, t_next, noise, schedule)
            z_tgt_next = forward_noise(z0_tgt, t_next, noise, schedule)
            z_lay_next = None if z0_lay is None else forward_noise(z0_lay, t_next, noise, schedule)

        if refined.masks is not None:
            m_tgt, m_src = refined.masks
            z_tgt_next = local_blend(z_tgt_next, z_src_next, m_tgt, m_src)
            if t_next == 0:
                z0_tgt = z_tgt_next

        next_state = replace(
            state,
            z_src=z_src_next,
            z_tgt=z_tgt_next,
            z0_tgt=z0_tgt,
            z_lay=z_lay_next,
            z0_lay=z0_lay,
            step_index=n + 1,
            timestep=t_next,
        )
        record = EditStepRecord(
            step_index=n,
            tau=t,
            tau_next=t_next,
            eps_src=eps_src,
            eps_tgt=refined.eps_tgt,
            eps_cons=eps_cons,
            noise_digest=noise_digest,
            source_error=source_error,
            refined=use_refiner,
        )
        mode = refiner.name if use_refiner else "vanilla"
        logger.debug(f"编辑步完成: step={n}, t={t} → {t_next}, refiner={mode}")
        return next_state, record

    def run(
        self,
        z0_src: np.ndarray,
        c_src: Condition,
        c_tgt: Condition,
        denoiser: ConditionalDenoiser,
        taus: TimestepSequence,
        schedule: VarianceSchedule,
        streams: NoiseStreams,
        refiner: NoiseRefiner | None = None,
    ) -> EditRun:
        refiner = refiner or self.refiner
        taus.validate_for(schedule)
        # 能力缺失要在任何计算之前暴露
        refiner.validate(denoiser, c_src, c_tgt)

        state = self.initial_state(z0_src, taus, streams, with_layout=refiner.uses_layout)
        run = EditRun(z0_tgt=state.z0_tgt)
        for _, t_next in taus.transitions():
            state, record = self.step(
                state, t_next, c_src, c_tgt, denoiser, schedule, streams, refiner=refiner
            )
            run.states.append(state)
            run.records.append(record)

        run.z0_tgt = state.z0_tgt
        logger.info(f"编辑完成: steps={len(taus)}, refiner={refiner.name}, denoiser={denoiser.name}")
        return run


def infedit_run(
    z0_src: np.ndarray,
    c_src: Condition,
    c_tgt: Condition,
    denoiser: ConditionalDenoiser,
    taus: TimestepSequence,
    schedule: VarianceSchedule,
    refiner: NoiseRefiner | None,
    streams: NoiseStreams,
) -> tuple[np.ndarray, list[BranchState]]:
    run = InfEditEngine(refiner).run(z0_src, c_src, c_tgt, denoiser, taus, schedule, streams)
    return run.z0_tgt, run.states


# 全局实例
infedit_engine = InfEditEngine()
