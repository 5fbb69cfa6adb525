from pathlib import Path
from typing import Any, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.core.errors import ConfigError

TokenValue = Union[int, str]


# 实验配置模型


class ExperimentConfig(BaseModel):
    """单次实验的全部参数，来自扁平 YAML，未知键直接拒绝。"""

    model_config = ConfigDict(extra="forbid")

    # 方差调度
    schedule: str = Field(default="linear", description="调度名称，目前只有 linear")
    total_steps: int = Field(default=1000, ge=1, description="调度总步数 T")
    beta_start: float = Field(default=1e-4, gt=0.0, lt=1.0, description="线性调度起始 β")
    beta_end: float = Field(default=0.02, gt=0.0, lt=1.0, description="线性调度终止 β")

    # 采样
    steps: int = Field(default=50, ge=2, description="时间点数 N，实际步数为 N−1")
    seed: int = Field(default=0, ge=0, description="运行种子")
    num_seeds: int = Field(default=1, ge=1, description="种子扫描数量，从 seed 起连续取")
    latent_shape: List[int] = Field(default_factory=lambda: [4, 8, 8], description="合成潜变量形状")
    input_path: Optional[str] = Field(default=None, description="输入潜变量文件，缺省时按种子合成")
    trace_stride: int = Field(default=1, ge=1, description="逐步轨迹的记录间隔")

    # 去噪器
    denoiser: Literal["gaussian", "mixture", "toy_attention"] = Field(default="gaussian")
    oracle_means: List[float] = Field(default_factory=lambda: [0.0], description="各分量均值（标量，按潜变量广播）")
    oracle_std: float = Field(default=1.0, ge=0.0, description="解析去噪器的标准差 s")
    toy_seed: int = Field(default=0, ge=0, description="玩具注意力去噪器的权重种子")
    toy_channels: int = Field(default=4, ge=1)
    toy_grid_h: int = Field(default=8, ge=1)
    toy_grid_w: int = Field(default=8, ge=1)
    toy_token_dim: int = Field(default=16, ge=1)
    toy_num_tokens_max: int = Field(default=16, ge=1)

    # 条件
    source_tokens: List[TokenValue] = Field(default_factory=lambda: [0], min_length=1)
    target_tokens: List[TokenValue] = Field(default_factory=lambda: [0], min_length=1)

    # 注意力控制
    control: Literal["none", "p2p", "uac"] = Field(default="none")
    tau_c: Optional[int] = Field(default=None, ge=0, description="交叉注意力控制阈值，缺省为 T+1（不触发）")
    tau_s: Optional[int] = Field(default=None, ge=0, description="互自注意力控制阈值，缺省为 T+1")
    a_src: float = Field(default=0.3, gt=0.0, le=1.0)
    a_tgt: float = Field(default=0.3, gt=0.0, le=1.0)
    alignment: Optional[List[Tuple[int, Optional[int]]]] = Field(
        default=None, description="[目标词位, 源词位|null] 对；缺省时要求两侧等长并按位对齐"
    )
    blend_source_tokens: List[int] = Field(default_factory=list)
    blend_target_tokens: List[int] = Field(default_factory=list)
    self_edit_mode: Literal["source", "masactrl"] = Field(default="source")

    # 指标
    reference_path: Optional[str] = Field(default=None)
    candidate_path: Optional[str] = Field(default=None)
    max_val: float = Field(default=1.0, gt=0.0)

    output_dir: Optional[str] = Field(default=None, description="输出目录，缺省用全局 output_dir")

    @field_validator("latent_shape")
    @classmethod
    def validate_latent_shape(cls, v: List[int]) -> List[int]:
        if not v or any(dim < 1 for dim in v):
            raise ValueError(f"latent_shape 必须是非空正整数列表: {v}")
        return v

    @field_validator("oracle_means")
    @classmethod
    def validate_oracle_means(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("oracle_means 至少需要一个分量")
        return v

    @field_validator("input_path", "reference_path", "candidate_path")
    @classmethod
    def validate_read_path(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and not Path(v).is_file():
            raise ValueError(f"文件不存在: {v}")
        return v

    @model_validator(mode="after")
    def validate_consistency(self) -> "ExperimentConfig":
        if self.beta_start > self.beta_end:
            raise ValueError("beta_start 不能大于 beta_end")
        if self.steps - 1 > self.total_steps:
            raise ValueError(f"steps−1={self.steps - 1} 超过 total_steps={self.total_steps}")
        for name in ("tau_c", "tau_s"):
            value = getattr(self, name)
            if value is not None and value > self.total_steps + 1:
                raise ValueError(f"{name}={value} 超出范围 [0, {self.total_steps + 1}]")
        if self.denoiser == "toy_attention":
            expected = [self.toy_channels, self.toy_grid_h, self.toy_grid_w]
            if "latent_shape" in self.model_fields_set and self.latent_shape != expected:
                raise ValueError(f"toy_attention 的 latent_shape 必须为 {expected}")
            self.latent_shape = expected
        return self

    @property
    def resolved_tau_c(self) -> int:
        return self.total_steps + 1 if self.tau_c is None else self.tau_c

    @property
    def resolved_tau_s(self) -> int:
        return self.total_steps + 1 if self.tau_s is None else self.tau_s

    def seeds(self) -> List[int]:
        return [self.seed + k for k in range(self.num_seeds)]


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item.get("loc", ())) or "<root>"
        parts.append(f"{location}: {item.get('msg')}")
    return "; ".join(parts)


def load_experiment_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[dict[str, Any]] = None
) -> ExperimentConfig:
    """读取扁平 YAML 配置并合并命令行覆盖项，任何问题都转成 ConfigError。"""
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"配置文件不存在: {path}")
        try:
            with path.open("r", encoding="utf-8") as file:
                data = yaml.safe_load(file) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"配置文件解析失败: {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"配置文件必须是YAML对象: {path}")

    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"配置校验失败: {_format_validation_error(e)}") from e
