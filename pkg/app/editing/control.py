"""注意力控制细化器：两分支的交叉注意力控制（P2P）和三分支的统一注意力控制（UAC）。"""
import logging

import numpy as np

from app.core.errors import TimestepError
from app.denoisers.base import (
    AttentionInjection,
    Capability,
    Condition,
    ConditionalDenoiser,
    DenoiserOutput,
)
from app.diffusion.rng import NoiseStreams
from app.diffusion.schedules import VarianceSchedule
from app.editing.attention import (
    AlignmentMap,
    BlendSpec,
    ControlSchedule,
    CrossAttentionMap,
    SelfEditMode,
    aggregate_tokens,
    cross_edit,
    self_edit,
    spatial_mask,
    threshold_mask,
)
from app.editing.engine import (
    LAYOUT,
    TARGET,
    BranchState,
    InfEditEngine,
    NoiseRefiner,
    RefinedNoise,
    RefinerContext,
)

logger = logging.getLogger(__name__)


def blend_masks(
    blend: BlendSpec,
    m_tgt: CrossAttentionMap,
    m_src: CrossAttentionMap,
    latent_shape: tuple[int, ...],
) -> tuple[np.ndarray, np.ndarray] | None:
    """由当前时间步的注意力图得到 (m_tgt, m_src) 空间掩码；未指定目标词时不融合。"""
    if not blend.active:
        return None
    mask_tgt = threshold_mask(aggregate_tokens(m_tgt, blend.target_tokens), blend.a_tgt)
    mask_src = threshold_mask(aggregate_tokens(m_src, blend.source_tokens), blend.a_src)
    return spatial_mask(mask_tgt, latent_shape), spatial_mask(mask_src, latent_shape)


class _AttentionRefiner(NoiseRefiner):
    requires_capture = True

    def __init__(
        self,
        alignment: AlignmentMap,
        control_schedule: ControlSchedule,
        blend: BlendSpec | None = None,
    ):
        self.alignment = alignment
        self.control_schedule = control_schedule
        self.blend = blend or BlendSpec()

    def validate(
        self,
        denoiser: ConditionalDenoiser,
        c_src: Condition | None = None,
        c_tgt: Condition | None = None,
    ) -> None:
        denoiser.require(Capability.CAPTURE, Capability.INJECT)
        self.control_schedule.validate_for(denoiser.schedule.total_steps)
        if c_src is not None and c_tgt is not None:
            self.blend.validate_for(len(c_tgt), len(c_src))

    def _capture_target(self, ctx: RefinerContext) -> DenoiserOutput:
        return ctx.predict(TARGET, ctx.state.z_tgt, ctx.c_tgt, capture=True)

    def _injected_target(self, ctx: RefinerContext, cross_map: CrossAttentionMap) -> np.ndarray:
        # 第二次目标预测只注入交叉注意力图
        injection = AttentionInjection(cross_map=cross_map)
        return ctx.predict(TARGET, ctx.state.z_tgt, ctx.c_tgt, injection=injection).eps


class CrossAttentionControl(_AttentionRefiner):
    """两分支：早期用源图替换对齐的目标列，不带布局分支。"""

    name = "p2p"

    def refine(self, ctx: RefinerContext) -> RefinedNoise:
        source = ctx.source_output
        target = self._capture_target(ctx)
        refined_map = cross_edit(
            source.cross_map, target.cross_map, self.alignment, ctx.t, self.control_schedule.tau_c
        )
        eps_tgt = self._injected_target(ctx, refined_map)
        masks = blend_masks(self.blend, target.cross_map, source.cross_map, ctx.state.shape)
        return RefinedNoise(eps_tgt=eps_tgt, masks=masks, cross_map=refined_map)


class UnifiedAttentionControl(_AttentionRefiner):
    """三分支：布局分支在源条件下承载目标构图，再把它的交叉注意力图交给目标分支。"""

    name = "uac"
    uses_layout = True

    def __init__(
        self,
        alignment: AlignmentMap,
        control_schedule: ControlSchedule,
        blend: BlendSpec | None = None,
        self_edit_mode: SelfEditMode = SelfEditMode.SOURCE,
    ):
        super().__init__(alignment, control_schedule, blend)
        self.self_edit_mode = SelfEditMode(self_edit_mode)

    def refine(self, ctx: RefinerContext) -> RefinedNoise:
        source = ctx.source_output
        target = self._capture_target(ctx)

        layout_pack = self_edit(
            source.self_pack,
            target.self_pack,
            ctx.t,
            self.control_schedule.tau_s,
            self.self_edit_mode,
        )
        layout = ctx.predict(
            LAYOUT,
            ctx.state.z_lay,
            ctx.c_src,
            capture=True,
            injection=AttentionInjection(self_pack=layout_pack),
        )

        refined_map = cross_edit(
            layout.cross_map, target.cross_map, self.alignment, ctx.t, self.control_schedule.tau_c
        )
        eps_tgt = self._injected_target(ctx, refined_map)
        masks = blend_masks(self.blend, target.cross_map, source.cross_map, ctx.state.shape)
        return RefinedNoise(
            eps_tgt=eps_tgt,
            eps_lay=layout.eps,
            masks=masks,
            cross_map=refined_map,
            layout_map=layout.cross_map,
        )


def uac_step(
    state: BranchState,
    t: int,
    t_next: int,
    c_src: Condition,
    c_tgt: Condition,
    blend: BlendSpec,
    alignment: AlignmentMap,
    control_schedule: ControlSchedule,
    denoiser: ConditionalDenoiser,
    schedule: VarianceSchedule,
    noise: NoiseStreams,
    self_edit_mode: SelfEditMode = SelfEditMode.SOURCE,
) -> BranchState:
    """单步三分支统一注意力控制，不论步序都执行完整控制。"""
    if state.timestep != t:
        raise TimestepError(f"状态时间步 {state.timestep} 与 t={t} 不一致")
    refiner = UnifiedAttentionControl(alignment, control_schedule, blend, self_edit_mode)
    refiner.validate(denoiser, c_src, c_tgt)
    next_state, _ = InfEditEngine(refiner).step(
        state, t_next, c_src, c_tgt, denoiser, schedule, noise, apply_refiner=True
    )
    return next_state
