"""由实验配置构造调度、去噪器、条件、细化器和输入潜变量。"""
import logging
from pathlib import Path

import numpy as np

from app.core.container import AppContainer
from app.core.errors import ConfigError
from app.denoisers.base import Condition, ConditionalDenoiser
from app.denoisers.oracles import ConditionalMixtureOracle, GaussianComponent, GaussianOracle
from app.denoisers.toy_attention import toy_attention_denoiser
from app.diffusion.rng import SYNTHETIC, NoiseStreams
from app.diffusion.schedules import TimestepSequence, VarianceSchedule, make_schedule, make_timesteps
from app.editing.attention import AlignmentMap, BlendSpec, ControlSchedule, SelfEditMode
from app.editing.control import CrossAttentionControl, UnifiedAttentionControl
from app.editing.engine import NoiseRefiner, TrivialRefiner
from app.harness.latent_io import read_latent
from app.models.data_models import ExperimentConfig

logger = logging.getLogger(__name__)


def build_schedule(config: ExperimentConfig) -> VarianceSchedule:
    return make_schedule(config.schedule, config.total_steps, config.beta_start, config.beta_end)


def build_timesteps(config: ExperimentConfig) -> TimestepSequence:
    return make_timesteps(config.total_steps, config.steps)


def build_components(config: ExperimentConfig) -> list[GaussianComponent]:
    return [GaussianComponent(mu=np.asarray(mean, dtype=np.float64), s=config.oracle_std) for mean in config.oracle_means]


def build_denoiser(config: ExperimentConfig, schedule: VarianceSchedule) -> ConditionalDenoiser:
    if config.denoiser == "gaussian":
        return GaussianOracle(build_components(config)[0], schedule)
    if config.denoiser == "mixture":
        return ConditionalMixtureOracle(build_components(config), schedule)
    return toy_attention_denoiser(
        seed=config.toy_seed,
        grid_h=config.toy_grid_h,
        grid_w=config.toy_grid_w,
        token_dim=config.toy_token_dim,
        num_tokens_max=config.toy_num_tokens_max,
        schedule=schedule,
        channels=config.toy_channels,
    )


def build_conditions(config: ExperimentConfig) -> tuple[Condition, Condition]:
    return Condition(tuple(config.source_tokens)), Condition(tuple(config.target_tokens))


def build_alignment(config: ExperimentConfig) -> AlignmentMap:
    num_source, num_target = len(config.source_tokens), len(config.target_tokens)
    if config.alignment is None:
        if num_source != num_target:
            raise ConfigError(
                f"源/目标 token 数不同 ({num_source} vs {num_target})，必须显式给出 alignment"
            )
        return AlignmentMap.identity(num_target)
    try:
        return AlignmentMap.from_pairs(config.alignment, num_target, num_source)
    except ValueError as e:
        raise ConfigError(f"alignment 不合法: {e}") from e


def build_refiner(config: ExperimentConfig) -> NoiseRefiner:
    if config.control == "none":
        return TrivialRefiner()

    alignment = build_alignment(config)
    control_schedule = ControlSchedule(tau_c=config.resolved_tau_c, tau_s=config.resolved_tau_s)
    try:
        blend = BlendSpec(
            target_tokens=frozenset(config.blend_target_tokens),
            source_tokens=frozenset(config.blend_source_tokens),
            a_tgt=config.a_tgt,
            a_src=config.a_src,
        ).validate_for(len(config.target_tokens), len(config.source_tokens))
    except ValueError as e:
        raise ConfigError(f"局部融合配置不合法: {e}") from e
    if config.control == "p2p":
        return CrossAttentionControl(alignment, control_schedule, blend)
    return UnifiedAttentionControl(
        alignment, control_schedule, blend, SelfEditMode(config.self_edit_mode)
    )


def load_or_synthesize(
    config: ExperimentConfig,
    streams: NoiseStreams,
    component: GaussianComponent | None = None,
) -> np.ndarray:
    """有 input_path 就读文件，否则按种子合成；给定分量时从该分量采样。"""
    if config.input_path is not None:
        latent = read_latent(config.input_path)
        logger.info(f"读取输入潜变量: {config.input_path}, shape={latent.shape}")
        return latent

    shape = tuple(config.latent_shape)
    if component is None:
        return streams.normal(SYNTHETIC, 0, shape)
    return component.sample(streams.generator(SYNTHETIC, 0), shape)


def source_component(config: ExperimentConfig, denoiser: ConditionalDenoiser, c_src: Condition) -> GaussianComponent | None:
    if isinstance(denoiser, GaussianOracle):
        return denoiser.component
    if isinstance(denoiser, ConditionalMixtureOracle):
        return denoiser.component_for(c_src)
    return None


def resolve_output_dir(config: ExperimentConfig, container: AppContainer) -> Path:
    return Path(config.output_dir or container.settings.output_dir)
