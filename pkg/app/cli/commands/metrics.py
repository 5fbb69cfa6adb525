import json
import logging
import math

import numpy as np

from app.cli.commands.base import EXIT_OK, timestamp
from app.cli.dependencies import resolve_output_dir
from app.cli.models.reports import MetricsReport
from app.core.container import AppContainer
from app.core.errors import ConfigError, ShapeMismatchError
from app.harness.latent_io import read_latent
from app.metrics.consistency import mse, psnr, ssim_channels
from app.models.data_models import ExperimentConfig

logger = logging.getLogger(__name__)

NAME = "metrics"
HELP = "比较两个潜变量文件：MSE、PSNR、SSIM"
OUTPUTS = {
    "metrics.json": MetricsReport,
}


def run(config: ExperimentConfig, container: AppContainer) -> int:
    if config.reference_path is None or config.candidate_path is None:
        raise ConfigError("metrics 需要 reference_path 和 candidate_path")

    reference = read_latent(config.reference_path)
    candidate = read_latent(config.candidate_path)
    error = mse(reference, candidate)
    peak = psnr(reference, candidate, config.max_val)

    ssim_value, per_channel = None, None
    if reference.ndim in (2, 3):
        try:
            per_channel = ssim_channels(reference, candidate)
        except ShapeMismatchError as e:
            logger.warning(f"跳过 SSIM: {e}")
        else:
            ssim_value = float(np.mean(per_channel))
            if reference.ndim == 2:
                per_channel = None
    else:
        logger.warning(f"SSIM 只支持二维或三维输入，当前 ndim={reference.ndim}")

    report = MetricsReport(
        created_at=timestamp(),
        config=config.model_dump(mode="json"),
        reference_path=config.reference_path,
        candidate_path=config.candidate_path,
        max_val=config.max_val,
        mse=error,
        psnr="inf" if math.isinf(peak) else peak,
        ssim=ssim_value,
        ssim_per_channel=per_channel,
    )
    out_dir = resolve_output_dir(config, container)
    container.report_writer.write_json(out_dir / "metrics.json", report)
    print(json.dumps(container.report_writer.to_payload(report), ensure_ascii=False, indent=2))
    logger.info(f"指标计算完成: mse={error:.6e}, psnr={report.psnr}")
    return EXIT_OK
