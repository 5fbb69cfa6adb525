"""注意力控制的纯张量算子：Refine、Threshold、Local Blend、CrossEdit、SelfEdit。"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from app.core.errors import ShapeMismatchError, TimestepError

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class CrossAttentionMap:
    """像素 × token 的注意力图 M。

    softmax 产生的图行和为 1（stochastic=True 时强制校验）；Refine 拼接的列
    来自两张图，不再重新归一化，构造时关闭校验。
    """

    weights: np.ndarray
    stochastic: bool = True

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 2 or weights.shape[0] < 1 or weights.shape[1] < 1:
            raise ShapeMismatchError(f"注意力图必须是非空二维矩阵: {weights.shape}")
        if np.any(weights < 0.0) or not np.all(np.isfinite(weights)):
            raise ValueError("注意力图必须是有限非负值")
        if self.stochastic:
            deviation = float(np.max(np.abs(weights.sum(axis=1) - 1.0)))
            if deviation > ROW_SUM_TOLERANCE:
                raise ValueError(f"注意力图行和偏离 1: max|Σ−1|={deviation:.3e}")
        object.__setattr__(self, "weights", weights)

    def row_deviation(self) -> float:
        return float(np.max(np.abs(self.weights.sum(axis=1) - 1.0)))

    @property
    def num_pixels(self) -> int:
        return self.weights.shape[0]

    @property
    def num_tokens(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def uniform(cls, num_pixels: int, num_tokens: int) -> "CrossAttentionMap":
        return cls(np.full((num_pixels, num_tokens), 1.0 / num_tokens))


@dataclass(frozen=True, eq=False)
class SelfAttentionPack:
    """自注意力的 Q、K、V（像素 × d）。"""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q, k, v = (np.asarray(x, dtype=np.float64) for x in (self.q, self.k, self.v))
        if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
            raise ShapeMismatchError("Q/K/V 必须是二维矩阵")
        if q.shape[1] != k.shape[1]:
            raise ShapeMismatchError(f"Q/K 内维不一致: {q.shape} vs {k.shape}")
        if v.shape[0] != k.shape[0]:
            raise ShapeMismatchError(f"V 行数必须等于 K 行数: {v.shape} vs {k.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "v", v)

    def compatible_with(self, other: "SelfAttentionPack") -> bool:
        return (
            self.q.shape == other.q.shape
            and self.k.shape == other.k.shape
            and self.v.shape == other.v.shape
        )


@dataclass(frozen=True)
class AlignmentMap:
    """target token j → source token A(j)，None 表示新词。"""

    mapping: tuple[int | None, ...]
    num_source_tokens: int

    def __post_init__(self):
        mapping = tuple(None if j is None else int(j) for j in self.mapping)
        for index in mapping:
            if index is not None and not 0 <= index < self.num_source_tokens:
                raise ValueError(
                    f"对齐索引 {index} 超出源 token 范围 [0, {self.num_source_tokens})"
                )
        object.__setattr__(self, "mapping", mapping)

    @property
    def num_target_tokens(self) -> int:
        return len(self.mapping)

    @classmethod
    def identity(cls, num_tokens: int) -> "AlignmentMap":
        return cls(tuple(range(num_tokens)), num_tokens)

    @classmethod
    def from_pairs(
        cls,
        pairs: Iterable[Sequence[int | None]],
        num_target_tokens: int,
        num_source_tokens: int,
    ) -> "AlignmentMap":
        """配置里的 [target, source] 词位对，没出现的 target 词视为 None。"""
        mapping: list[int | None] = [None] * num_target_tokens
        for target, source in pairs:
            if not 0 <= int(target) < num_target_tokens:
                raise ValueError(f"对齐目标索引 {target} 超出范围 [0, {num_target_tokens})")
            mapping[int(target)] = None if source is None else int(source)
        return cls(tuple(mapping), num_source_tokens)


@dataclass(frozen=True)
class BlendSpec:
    target_tokens: frozenset[int] = frozenset()
    source_tokens: frozenset[int] = frozenset()
    a_tgt: float = 0.3
    a_src: float = 0.3

    def __post_init__(self):
        if self.a_tgt <= 0.0 or self.a_src <= 0.0:
            raise ValueError(f"阈值必须为正: a_tgt={self.a_tgt}, a_src={self.a_src}")
        object.__setattr__(self, "target_tokens", frozenset(int(i) for i in self.target_tokens))
        object.__setattr__(self, "source_tokens", frozenset(int(i) for i in self.source_tokens))

    @property
    def active(self) -> bool:
        # 目标词为空时不做融合，否则全零 m_tgt 会把目标整体替换成源
        return bool(self.target_tokens)

    def validate_for(self, num_target_tokens: int, num_source_tokens: int) -> "BlendSpec":
        """融合词索引必须落在各自条件的 token 范围内。"""
        for name, tokens, count in (
            ("目标", self.target_tokens, num_target_tokens),
            ("源", self.source_tokens, num_source_tokens),
        ):
            out_of_range = sorted(i for i in tokens if not 0 <= i < count)
            if out_of_range:
                raise ValueError(f"{name}融合词索引越界: {out_of_range}, token 数 {count}")
        return self


@dataclass(frozen=True)
class ControlSchedule:
    """τ_c 控制交叉注意力强度，τ_s 控制互自注意力强度。"""

    tau_c: int
    tau_s: int

    def validate_for(self, total_steps: int) -> "ControlSchedule":
        # T+1 表示“从不触发”，同样允许
        for name, value in (("tau_c", self.tau_c), ("tau_s", self.tau_s)):
            if not 0 <= value <= total_steps + 1:
                raise TimestepError(f"{name}={value} 超出范围 [0, {total_steps + 1}]")
        return self


class SelfEditMode(str, Enum):
    SOURCE = "source"
    MASACTRL = "masactrl"


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=1, keepdims=True)


def attention(
    q: np.ndarray, k: np.ndarray, v: np.ndarray
) -> tuple[np.ndarray, CrossAttentionMap]:
    """M = softmax(QKᵀ/√d)，输出 M·V。"""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeMismatchError("Q/K/V 必须是二维矩阵")
    if q.shape[1] != k.shape[1]:
        raise ShapeMismatchError(f"Q/K 维度不一致: {q.shape} vs {k.shape}")
    if v.shape[0] != k.shape[0]:
        raise ShapeMismatchError(f"V 行数必须等于 K 行数: {v.shape} vs {k.shape}")

    weights = softmax_rows(q @ k.T / np.sqrt(q.shape[1]))
    return weights @ v, CrossAttentionMap(weights)


def average_maps(maps: Sequence[CrossAttentionMap]) -> CrossAttentionMap:
    """多层/多头取算术平均，要求同一分辨率。"""
    if not maps:
        raise ValueError("没有可聚合的注意力图")
    shapes = {m.weights.shape for m in maps}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"注意力图分辨率不一致: {sorted(shapes)}")
    return CrossAttentionMap(
        np.mean([m.weights for m in maps], axis=0),
        stochastic=all(m.stochastic for m in maps),
    )


def refine(
    m_src: CrossAttentionMap, m_tgt: CrossAttentionMap, alignment: AlignmentMap
) -> CrossAttentionMap:
    """对齐上的 token 列换成源图的列，其余保留目标图。"""
    if m_src.num_pixels != m_tgt.num_pixels:
        raise ShapeMismatchError(
            f"像素数不一致: src={m_src.num_pixels}, tgt={m_tgt.num_pixels}"
        )
    if alignment.num_target_tokens != m_tgt.num_tokens:
        raise ValueError(
            f"对齐长度 {alignment.num_target_tokens} 与目标 token 数 {m_tgt.num_tokens} 不一致"
        )
    if alignment.num_source_tokens > m_src.num_tokens:
        raise ValueError(
            f"对齐源 token 数 {alignment.num_source_tokens} 超过源图 token 数 {m_src.num_tokens}"
        )
    if m_src.row_deviation() > ROW_SUM_TOLERANCE:
        raise ValueError("注入来源的注意力图必须行随机")
    if m_tgt.stochastic and m_tgt.row_deviation() > ROW_SUM_TOLERANCE:
        raise ValueError("目标注意力图标记为行随机，但行和偏离 1")

    refined = m_tgt.weights.copy()
    for j, source_index in enumerate(alignment.mapping):
        if source_index is not None:
            refined[:, j] = m_src.weights[:, source_index]
    return CrossAttentionMap(refined, stochastic=False)


def aggregate_tokens(m: CrossAttentionMap, tokens: Iterable[int]) -> np.ndarray:
    """选中 token 列求和，得到每个像素的权重。"""
    indices = sorted(set(tokens))
    if any(not 0 <= i < m.num_tokens for i in indices):
        raise ValueError(f"融合词索引越界: {indices}, token 数 {m.num_tokens}")
    if not indices:
        return np.zeros(m.num_pixels)
    return m.weights[:, indices].sum(axis=1)


def threshold_mask(m_agg: np.ndarray, a: float) -> np.ndarray:
    """按最大值归一化后与阈值比较，>= a 记 1。"""
    if a <= 0.0:
        raise ValueError(f"阈值必须为正: {a}")
    m_agg = np.asarray(m_agg, dtype=np.float64)
    peak = float(np.max(m_agg)) if m_agg.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(m_agg)
    return (m_agg / peak >= a).astype(np.float64)


def local_blend(
    z_tgt: np.ndarray, z_src: np.ndarray, m_tgt: np.ndarray, m_src: np.ndarray
) -> np.ndarray:
    """w = clamp(m_tgt − m_src, 0, 1)，结果 (1−w)⊙z_src + w⊙z_tgt。"""
    z_tgt = np.asarray(z_tgt, dtype=np.float64)
    z_src = np.asarray(z_src, dtype=np.float64)
    if z_tgt.shape != z_src.shape:
        raise ShapeMismatchError(f"融合的两个潜变量形状不一致: {z_tgt.shape} vs {z_src.shape}")
    try:
        weight = np.clip(np.asarray(m_tgt, dtype=np.float64) - np.asarray(m_src, dtype=np.float64), 0.0, 1.0)
        weight = np.broadcast_to(weight, z_tgt.shape)
    except ValueError as e:
        raise ShapeMismatchError(f"掩码无法广播到潜变量形状 {z_tgt.shape}: {e}") from e
    return (1.0 - weight) * z_src + weight * z_tgt


def cross_edit(
    m_lay: CrossAttentionMap,
    m_tgt: CrossAttentionMap,
    alignment: AlignmentMap,
    t: int,
    tau_c: int,
) -> CrossAttentionMap:
    """t >= τ_c（前期、噪声大）时 Refine，否则原样返回目标图。"""
    if t >= tau_c:
        return refine(m_lay, m_tgt, alignment)
    return m_tgt


def self_edit(
    src_pack: SelfAttentionPack,
    tgt_pack: SelfAttentionPack,
    t: int,
    tau_s: int,
    mode: SelfEditMode = SelfEditMode.SOURCE,
) -> SelfAttentionPack:
    """t >= τ_s 用完整源布局（masactrl 模式用完整目标），之后 {Q^tgt, K^src, V^src}。"""
    if not src_pack.compatible_with(tgt_pack):
        raise ShapeMismatchError("源/目标自注意力包形状不一致")
    if t >= tau_s:
        return src_pack if SelfEditMode(mode) is SelfEditMode.SOURCE else tgt_pack
    return SelfAttentionPack(q=tgt_pack.q, k=src_pack.k, v=src_pack.v)


def spatial_mask(mask: np.ndarray, latent_shape: tuple[int, ...]) -> np.ndarray:
    """像素向量还原成潜变量最后两个空间维。"""
    if len(latent_shape) < 2 or int(np.prod(latent_shape[-2:])) != mask.size:
        raise ShapeMismatchError(
            f"掩码长度 {mask.size} 与潜变量空间维 {latent_shape} 不匹配"
        )
    return mask.reshape(latent_shape[-2:])
