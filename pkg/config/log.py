import os
import logging
from logging.handlers import RotatingFileHandler

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(module)s:%(funcName)s:%(lineno)d - %(message)s"


def _has_file_handler(logger: logging.Logger, log_file: str) -> bool:
    target = os.path.abspath(log_file)
    return any(
        isinstance(handler, RotatingFileHandler) and handler.baseFilename == target
        for handler in logger.handlers
    )


def setup_logger(
    name,
    log_file=None,
    level=logging.INFO,
    format_str=DEFAULT_FORMAT,
    max_bytes=10 * 1024 * 1024,
    backup_count=5,
    encoding="utf-8",
):
    """设置并返回一个logger实例，同时配置 root logger。

    level 可以是 logging 常量或 "DEBUG" 这样的名字；重复调用不会叠加处理器。
    """
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    formatter = logging.Formatter(format_str)

    # 配置 root logger，确保所有 getLogger(__name__) 调用者都有输出
    root = logging.getLogger()
    root.setLevel(level)
    if not root.handlers:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        root.addHandler(console_handler)

    # 命名 logger 只负责级别，输出交给 root
    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.handlers = []
    logger.propagate = True

    if log_file and not _has_file_handler(root, log_file):
        try:
            directory = os.path.dirname(log_file)
            if directory:
                os.makedirs(directory, exist_ok=True)
            file_handler = RotatingFileHandler(
                log_file,
                maxBytes=max_bytes,
                backupCount=backup_count,
                encoding=encoding,
            )
            file_handler.setFormatter(formatter)
            root.addHandler(file_handler)
        except (IOError, PermissionError) as e:
            logger.error(f"无法创建日志文件: {e}")

    return logger
