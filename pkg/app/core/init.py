import logging
from pathlib import Path

from app.core.container import AppContainer

logger = logging.getLogger()


def initialize_runtime(container: AppContainer) -> bool:
    """初始化运行环境"""
    try:
        logger.debug(f"当前配置:\n{container.settings}")
        Path(container.settings.output_dir).mkdir(parents=True, exist_ok=True)
        logger.info(f"运行环境初始化完成，默认输出目录: {container.settings.output_dir}")
        return True

    except OSError as e:
        logger.error(f"运行环境初始化失败: {e}")
        return False
