"""项目内统一的异常类型，全部继承内置异常，调用方可以按内置类型兜底捕获。"""


class ScheduleError(ValueError):
    """方差调度或时间步序列构造失败。"""


class TimestepError(ValueError):
    """时间步越界或顺序错误。"""


class ShapeMismatchError(ValueError):
    """张量形状不一致。"""


class NonFiniteLatentError(ValueError):
    """潜变量中出现 NaN/Inf。"""


class SigmaError(ValueError):
    """σ_t 取值会让方向项系数变成虚数。"""


class ConfigError(ValueError):
    """实验配置不合法。"""


class ConditionError(ValueError):
    """条件 token 无法被去噪器解释。"""


class CapabilityError(RuntimeError):
    """去噪器不支持请求的捕获/注入能力。"""

    def __init__(self, denoiser_name: str, capability: str):
        self.denoiser_name = denoiser_name
        self.capability = capability
        super().__init__(f"去噪器 {denoiser_name} 不支持 {capability} 能力")


class DenoiserError(RuntimeError):
    """去噪器调用失败，附带分支与步数上下文。"""

    def __init__(self, message: str, branch: str | None = None, step: int | None = None):
        self.branch = branch
        self.step = step
        context = []
        if branch is not None:
            context.append(f"branch={branch}")
        if step is not None:
            context.append(f"step={step}")
        suffix = f" ({', '.join(context)})" if context else ""
        super().__init__(f"{message}{suffix}")


class LatentFileError(ValueError):
    """潜变量文件格式错误的基类。"""


class BadMagicError(LatentFileError):
    pass


class UnsupportedVersionError(LatentFileError):
    pass


class UnsupportedDtypeError(LatentFileError):
    pass


class TruncatedPayloadError(LatentFileError):
    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"数据区被截断: 期望 {expected} 字节, 实际 {actual} 字节")
