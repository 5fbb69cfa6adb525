from dataclasses import dataclass, field

from app.diffusion.inversion import VirtualInverter
from app.diffusion.inversion import virtual_inverter as default_virtual_inverter
from app.editing.engine import InfEditEngine
from app.editing.engine import infedit_engine as default_infedit_engine
from app.harness.comparison import SamplerComparator
from app.harness.comparison import sampler_comparator as default_sampler_comparator
from app.harness.reports import ReportWriter
from app.harness.reports import report_writer as default_report_writer
from app.harness.sweep import SweepRunner
from config.settings import AppSettings, app_config


@dataclass
class AppContainer:
    """集中管理运行时依赖，避免命令层到处 import 全局对象。"""

    settings: AppSettings = field(default_factory=lambda: app_config)
    virtual_inverter: VirtualInverter = field(default_factory=lambda: default_virtual_inverter)
    edit_engine: InfEditEngine = field(default_factory=lambda: default_infedit_engine)
    sampler_comparator: SamplerComparator = field(default_factory=lambda: default_sampler_comparator)
    report_writer: ReportWriter = field(default_factory=lambda: default_report_writer)
    sweep_runner: SweepRunner | None = None

    def __post_init__(self):
        if self.sweep_runner is None:
            self.sweep_runner = SweepRunner(max_workers=self.settings.sweep_workers)


def create_container(settings: AppSettings | None = None) -> AppContainer:
    """创建应用依赖容器。"""
    if settings is None:
        return AppContainer()
    return AppContainer(settings=settings)
