import logging
from dataclasses import asdict
from pathlib import Path

from app.cli.commands.base import SeedResult, run_seeds, timestamp
from app.cli.dependencies import (
    build_conditions,
    build_denoiser,
    build_schedule,
    build_timesteps,
    load_or_synthesize,
    resolve_output_dir,
    source_component,
)
from app.cli.models.reports import COMPARE_COLUMNS, CompareReport
from app.core.container import AppContainer
from app.core.errors import ConfigError
from app.diffusion.rng import NoiseStreams
from app.harness.comparison import DDCM_VIRTUAL, DDIM_INVERSION
from app.models.data_models import ExperimentConfig

logger = logging.getLogger(__name__)

NAME = "compare-samplers"
HELP = "对比显式 DDIM 反演与 DDCM 虚拟反演的逐步重建误差"
OUTPUTS = {
    "curves.csv": COMPARE_COLUMNS,
    "report.json": CompareReport,
}


def run(config: ExperimentConfig, container: AppContainer) -> int:
    if config.denoiser not in {"gaussian", "mixture"}:
        raise ConfigError(f"compare-samplers 需要解析去噪器 (gaussian | mixture)，当前为 {config.denoiser}")
    schedule = build_schedule(config)
    taus = build_timesteps(config)
    denoiser = build_denoiser(config, schedule)
    cond, _ = build_conditions(config)
    component = source_component(config, denoiser, cond)
    out_dir = resolve_output_dir(config, container)

    def task(seed: int, seed_out: Path) -> SeedResult:
        streams = NoiseStreams(seed)
        z0 = load_or_synthesize(config, streams, component)
        rows = container.sampler_comparator.compare(z0, cond, denoiser, taus, schedule, streams)
        curves_csv = container.report_writer.write_csv(
            seed_out / "curves.csv", [asdict(row) for row in rows], COMPARE_COLUMNS
        )

        final = {row.strategy: row.max_abs_error for row in rows if row.timestep == 0}
        report = CompareReport(
            seed=seed,
            created_at=timestamp(),
            config=config.model_dump(mode="json"),
            num_steps=len(taus),
            ddim_final_error=final[DDIM_INVERSION],
            ddcm_final_error=final[DDCM_VIRTUAL],
            curves_csv=str(curves_csv),
        )
        container.report_writer.write_json(seed_out / "report.json", report)
        return SeedResult(metric=final[DDCM_VIRTUAL])

    return run_seeds(NAME, config, container, out_dir, "ddcm_final_error", task)
