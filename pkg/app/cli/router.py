import argparse
import logging
from types import ModuleType
from typing import Sequence

from pydantic import BaseModel

from app.cli.commands import compare, edit, metrics, reconstruct
from app.cli.commands.base import EXIT_ERROR
from app.core.container import AppContainer
from app.models.data_models import ExperimentConfig, load_experiment_config

logger = logging.getLogger(__name__)

COMMANDS: dict[str, ModuleType] = {
    module.NAME: module for module in (reconstruct, edit, compare, metrics)
}


def _describe_fields(model_cls: type[BaseModel], indent: str = "      ") -> list[str]:
    lines = []
    for name, info in model_cls.model_fields.items():
        key = info.alias or name
        lines.append(f"{indent}{key}: {info.description or ''}".rstrip())
    return lines


def _describe_outputs(outputs: dict) -> str:
    lines = ["输出文件:"]
    for filename, layout in outputs.items():
        if isinstance(layout, dict):
            lines.append(f"  {filename}（CSV，首行 '# schema: 1'）")
            lines.extend(f"      {column}: {meaning}" for column, meaning in layout.items())
        elif isinstance(layout, type) and issubclass(layout, BaseModel):
            lines.append(f"  {filename}（JSON，含 \"schema\": 1）")
            lines.extend(_describe_fields(layout))
        else:
            lines.append(f"  {filename}: {layout}")
    lines.append("  sweep.json（num_seeds > 1 时写在输出根目录，各种子输出在 seed_<k>/ 下）")
    return "\n".join(lines)


def _describe_config() -> str:
    lines = ["配置键（扁平 YAML，未知键会被拒绝）:"]
    lines.extend(_describe_fields(ExperimentConfig, indent="  "))
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infedit-lab",
        description="免反演扩散编辑实验工具",
        epilog=_describe_config(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, module in COMMANDS.items():
        sub = subparsers.add_parser(
            name,
            help=module.HELP,
            description=module.HELP,
            epilog=_describe_outputs(module.OUTPUTS) + "\n\n" + _describe_config(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        sub.add_argument("--config", type=str, default=None, help="实验配置 YAML 路径")
        sub.add_argument("--seed", type=int, default=None, help="运行种子（覆盖配置文件）")
        sub.add_argument("--out", type=str, default=None, help="输出目录（覆盖配置文件）")

    return parser


def run_cli(argv: Sequence[str] | None, container: AppContainer) -> int:
    """解析参数并执行命令；库错误统一映射为退出码 2。"""
    args = build_parser().parse_args(argv)
    try:
        config = load_experiment_config(
            args.config, {"seed": args.seed, "output_dir": args.out}
        )
        return COMMANDS[args.command].run(config, container)
    except (ValueError, RuntimeError, OSError) as e:
        logger.error(f"{args.command} 执行失败: {type(e).__name__}: {e}")
        return EXIT_ERROR
