"""报告输出：JSON 摘要写入前按 pydantic 生成的 schema 校验，CSV 带版本注释头。"""
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Mapping

import jsonschema
import pandas as pd
from pydantic import BaseModel

from app.cli.models.reports import REPORT_SCHEMA_VERSION

logger = logging.getLogger(__name__)


class ReportWriter:
    def __init__(self, validate: bool = True):
        self.validate = validate
        self._schemas: dict[type, dict] = {}

    def _schema_for(self, model_cls: type[BaseModel]) -> dict:
        if model_cls not in self._schemas:
            self._schemas[model_cls] = model_cls.model_json_schema(by_alias=True)
        return self._schemas[model_cls]

    def to_payload(self, report: BaseModel) -> dict[str, Any]:
        payload = report.model_dump(mode="json", by_alias=True)
        if self.validate:
            try:
                jsonschema.validate(payload, self._schema_for(type(report)))
            except jsonschema.ValidationError as e:
                raise ValueError(f"报告不符合 schema: {e.message}") from e
        return payload

    def write_json(self, path: str | Path, report: BaseModel) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = self.to_payload(report)
        path.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        logger.info(f"报告已写入: {path}")
        return path

    def write_csv(
        self,
        path: str | Path,
        rows: Iterable[Mapping[str, Any]],
        columns: Iterable[str],
    ) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(list(rows), columns=list(columns))
        with path.open("w", encoding="utf-8", newline="") as file:
            file.write(f"# schema: {REPORT_SCHEMA_VERSION}\n")
            frame.to_csv(file, index=False)
        logger.info(f"CSV 已写入: {path}，行数: {len(frame)}")
        return path


def read_csv(path: str | Path) -> pd.DataFrame:
    """读回带注释头的报告 CSV。"""
    return pd.read_csv(path, comment="#")


# 全局实例
report_writer = ReportWriter()
