from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

REPORT_SCHEMA_VERSION = 1

PsnrValue = Union[float, Literal["inf"]]


class ReportBase(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: Literal[1] = Field(
        default=REPORT_SCHEMA_VERSION, alias="schema", description="报告格式版本"
    )
    command: str = Field(description="生成报告的命令")
    seed: Optional[int] = Field(default=None, description="运行种子，metrics 命令为空")
    created_at: str = Field(description="生成时间（报告中唯一随运行变化的字段）")
    config: Dict[str, Any] = Field(description="生效的实验配置")


class TraceSummary(BaseModel):
    step: int = Field(description="步序 n（从 1 开始）")
    timestep: int = Field(description="时间步 τ_n")
    max_abs_error: float = Field(description="该步预测初值与 z0 的最大绝对误差")


class ReconstructReport(ReportBase):
    command: Literal["reconstruct"] = "reconstruct"
    max_abs_error: float = Field(description="最终重建的最大绝对误差")
    tolerance: float = Field(description="通过阈值")
    passed: bool = Field(description="误差是否不超过阈值")
    num_steps: int = Field(description="去噪步数 N−1")
    latent_shape: List[int] = Field(description="潜变量形状")
    output_latent: str = Field(description="重建潜变量文件")
    trace: List[TraceSummary] = Field(description="按 trace_stride 记录的逐步误差")


class EditReport(ReportBase):
    command: Literal["edit"] = "edit"
    control: str = Field(description="注意力控制方式 none | p2p | uac")
    denoiser: str = Field(description="去噪器名称")
    num_steps: int = Field(description="去噪步数 N−1")
    final_z0_distance: float = Field(description="‖z0_tgt − z0_src‖₂")
    target_mean: float = Field(description="z0_tgt 的均值")
    source_reconstruction_error: float = Field(description="源分支最终状态与 z0_src 的最大绝对误差")
    output_latent: str = Field(description="目标初值潜变量文件")
    layout_latent: Optional[str] = Field(default=None, description="布局分支潜变量文件（仅 uac）")
    steps_csv: str = Field(description="逐步 CSV 文件")


class CompareReport(ReportBase):
    command: Literal["compare-samplers"] = "compare-samplers"
    num_steps: int = Field(description="去噪步数 N−1")
    ddim_final_error: float = Field(description="DDIM 反演 + 重采样的最终最大绝对误差")
    ddcm_final_error: float = Field(description="DDCM 虚拟反演的最终最大绝对误差")
    curves_csv: str = Field(description="误差曲线 CSV 文件")


class MetricsReport(ReportBase):
    command: Literal["metrics"] = "metrics"
    reference_path: str = Field(description="参考潜变量文件")
    candidate_path: str = Field(description="待比较潜变量文件")
    max_val: float = Field(description="PSNR 峰值")
    mse: float = Field(description="均方误差")
    psnr: PsnrValue = Field(description="峰值信噪比 (dB)，完全相同为 \"inf\"")
    ssim: Optional[float] = Field(default=None, description="SSIM（二维输入，或三维输入逐通道平均）")
    ssim_per_channel: Optional[List[float]] = Field(default=None, description="三维输入的逐通道 SSIM")


class SweepSummary(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: Literal[1] = Field(default=REPORT_SCHEMA_VERSION, alias="schema")
    command: str = Field(description="扫描的命令")
    created_at: str = Field(description="生成时间")
    seeds: List[int] = Field(description="扫描的种子")
    failed_seeds: List[int] = Field(description="执行失败的种子")
    metric: str = Field(description="汇总的指标名")
    max: Optional[float] = Field(default=None, description="成功种子上的最大值")
    mean: Optional[float] = Field(default=None, description="成功种子上的平均值")
    passed: bool = Field(description="所有种子是否都通过")


# CSV 列说明，同时用于 --help
RECONSTRUCT_COLUMNS = {
    "step": "步序 n",
    "timestep": "时间步 τ_n",
    "max_abs_error": "该步预测初值与 z0 的最大绝对误差",
}
EDIT_COLUMNS = {
    "step": "步序 n",
    "timestep": "时间步 τ_n",
    "z0_distance": "该步结束时 ‖z0_tgt − z0_src‖₂",
    "eps_distance": "‖ε_tgt − ε_src‖₂（ε_tgt 为细化后的噪声）",
}
COMPARE_COLUMNS = {
    "strategy": "ddim_inversion | ddcm_virtual",
    "step": "步序 n，最后一行是 t=0 的最终重建",
    "timestep": "时间步",
    "max_abs_error": "预测初值与 z0 的最大绝对误差",
    "mse": "预测初值与 z0 的均方误差",
}
