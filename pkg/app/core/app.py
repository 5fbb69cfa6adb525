import logging
from dataclasses import dataclass
from typing import Sequence

from app.cli.commands.base import EXIT_ERROR
from app.cli.router import run_cli
from app.core.container import AppContainer, create_container
from config.log import setup_logger
from app.core.init import initialize_runtime


@dataclass
class CliRunner:
    container: AppContainer

    def run(self, argv: Sequence[str] | None = None) -> int:
        if not initialize_runtime(self.container):
            return EXIT_ERROR
        return run_cli(argv, self.container)


def create_runner(container: AppContainer | None = None) -> CliRunner:
    """创建命令行运行器"""
    container = container or create_container()
    settings = container.settings

    # 初始化日志
    log_file = settings.log_file if settings.log_file and not settings.is_production else None
    logger = setup_logger(
        name="infedit-lab",
        log_file=log_file,
        level=getattr(logging, settings.log_level),
    )
    logger.info("InfEdit Lab 启动中...")

    return CliRunner(container=container)
