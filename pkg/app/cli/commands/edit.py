import logging
from pathlib import Path

import numpy as np

from app.cli.commands.base import SeedResult, run_seeds, timestamp
from app.cli.dependencies import (
    build_conditions,
    build_denoiser,
    build_refiner,
    build_schedule,
    build_timesteps,
    load_or_synthesize,
    resolve_output_dir,
    source_component,
)
from app.cli.models.reports import EDIT_COLUMNS, EditReport
from app.core.container import AppContainer
from app.diffusion.rng import NoiseStreams
from app.harness.latent_io import write_latent
from app.models.data_models import ExperimentConfig

logger = logging.getLogger(__name__)

NAME = "edit"
HELP = "免反演编辑（可选 p2p / uac 注意力控制）"
OUTPUTS = {
    "target.dlt": "编辑结果 z0_tgt",
    "layout.dlt": "布局分支最终初值（仅 control=uac）",
    "steps.csv": EDIT_COLUMNS,
    "report.json": EditReport,
}


def run(config: ExperimentConfig, container: AppContainer) -> int:
    schedule = build_schedule(config)
    taus = build_timesteps(config)
    denoiser = build_denoiser(config, schedule)
    refiner = build_refiner(config)
    c_src, c_tgt = build_conditions(config)
    # 能力缺失在任何种子开始之前报错
    refiner.validate(denoiser, c_src, c_tgt)
    component = source_component(config, denoiser, c_src)
    out_dir = resolve_output_dir(config, container)

    def task(seed: int, seed_out: Path) -> SeedResult:
        streams = NoiseStreams(seed)
        z0_src = load_or_synthesize(config, streams, component)
        result = container.edit_engine.run(
            z0_src, c_src, c_tgt, denoiser, taus, schedule, streams, refiner=refiner
        )

        rows = [
            {
                "step": record.step_index,
                "timestep": record.tau,
                "z0_distance": float(np.linalg.norm(state.z0_tgt - state.z0_src)),
                "eps_distance": float(np.linalg.norm(record.eps_tgt - record.eps_src)),
            }
            for state, record in zip(result.states, result.records)
        ]
        steps_csv = container.report_writer.write_csv(seed_out / "steps.csv", rows, EDIT_COLUMNS)
        target_path = write_latent(seed_out / "target.dlt", result.z0_tgt)
        layout_path = None
        if result.z0_lay is not None:
            layout_path = write_latent(seed_out / "layout.dlt", result.z0_lay)

        distance = float(np.linalg.norm(result.z0_tgt - z0_src))
        report = EditReport(
            seed=seed,
            created_at=timestamp(),
            config=config.model_dump(mode="json"),
            control=config.control,
            denoiser=denoiser.name,
            num_steps=len(taus),
            final_z0_distance=distance,
            target_mean=float(np.mean(result.z0_tgt)),
            source_reconstruction_error=max(record.source_error for record in result.records),
            output_latent=str(target_path),
            layout_latent=None if layout_path is None else str(layout_path),
            steps_csv=str(steps_csv),
        )
        container.report_writer.write_json(seed_out / "report.json", report)
        logger.info(f"编辑完成: seed={seed}, ‖z0_tgt − z0_src‖={distance:.4e}")
        return SeedResult(metric=distance)

    return run_seeds(NAME, config, container, out_dir, "final_z0_distance", task)
