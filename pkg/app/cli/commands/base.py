import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Callable

import numpy as np

from app.cli.models.reports import SweepSummary
from app.core.container import AppContainer
from app.models.data_models import ExperimentConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ACCEPTANCE_FAILED = 1
EXIT_ERROR = 2


@dataclass(frozen=True)
class SeedResult:
    """单个种子的结果：汇总指标和是否通过。"""

    metric: float
    passed: bool = True


def timestamp() -> str:
    return datetime.now().isoformat(timespec="seconds")


def seed_dir(out_dir: Path, seed: int, sweep: bool) -> Path:
    return out_dir / f"seed_{seed}" if sweep else out_dir


def run_seeds(
    command: str,
    config: ExperimentConfig,
    container: AppContainer,
    out_dir: Path,
    metric: str,
    task: Callable[[int, Path], SeedResult],
) -> int:
    """单种子直接输出到 out_dir；多种子并行，各自写 seed_<k>/，再写扫描汇总。"""
    seeds = config.seeds()
    sweep = len(seeds) > 1
    outcomes = container.sweep_runner.run(
        seeds, lambda seed: task(seed, seed_dir(out_dir, seed, sweep)), desc=command
    )

    failed = [outcome for outcome in outcomes if not outcome.ok]
    results = [outcome.result for outcome in outcomes if outcome.ok]
    if sweep:
        values = [result.metric for result in results]
        summary = SweepSummary(
            command=command,
            created_at=timestamp(),
            seeds=seeds,
            failed_seeds=[outcome.seed for outcome in failed],
            metric=metric,
            max=float(np.max(values)) if values else None,
            mean=float(np.mean(values)) if values else None,
            passed=not failed and all(result.passed for result in results),
        )
        container.report_writer.write_json(out_dir / "sweep.json", summary)
        logger.info(f"扫描汇总: {metric} max={summary.max}, mean={summary.mean}, 失败种子={summary.failed_seeds}")

    if failed:
        raise failed[0].error
    return EXIT_OK if all(result.passed for result in results) else EXIT_ACCEPTANCE_FAILED
