import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from app.core.errors import ConditionError, ShapeMismatchError
from app.denoisers.base import (
    AttentionInjection,
    Capability,
    Condition,
    ConditionalDenoiser,
    DenoiserOutput,
    TokenId,
)
from app.diffusion.schedules import VarianceSchedule
from app.editing.attention import CrossAttentionMap, SelfAttentionPack, softmax_rows

logger = logging.getLogger(__name__)

_WEIGHT_TAG = 0x57454947
_TOKEN_TAG = 0x544F4B4E


@dataclass(frozen=True, eq=False)
class ToyWeights:
    w_in: np.ndarray
    b_in: np.ndarray
    w_time: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wq_cross: np.ndarray
    wk_cross: np.ndarray
    wv_cross: np.ndarray
    w_out: np.ndarray


def _token_key(token: TokenId) -> int:
    digest = hashlib.sha256(f"{type(token).__name__}:{token}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class ToyAttentionDenoiser(ConditionalDenoiser):
    """单块固定权重预测器：像素嵌入 → 自注意力 → 交叉注意力 → 线性头。

    潜变量形状为 (channels, grid_h, grid_w)，像素数 P = grid_h·grid_w。
    权重和 token 嵌入全部由种子派生，不依赖任何文本模型。
    """

    name = "toy_attention_denoiser"
    capabilities = frozenset({Capability.CAPTURE, Capability.INJECT})

    def __init__(
        self,
        seed: int,
        grid_h: int,
        grid_w: int,
        token_dim: int,
        num_tokens_max: int,
        schedule: VarianceSchedule,
        channels: int = 4,
    ):
        super().__init__(schedule)
        for field_name, value in (
            ("grid_h", grid_h),
            ("grid_w", grid_w),
            ("token_dim", token_dim),
            ("num_tokens_max", num_tokens_max),
            ("channels", channels),
        ):
            if int(value) < 1:
                raise ValueError(f"{field_name} 必须为正整数: {value}")

        self.seed = int(seed)
        self.grid_h = int(grid_h)
        self.grid_w = int(grid_w)
        self.token_dim = int(token_dim)
        self.num_tokens_max = int(num_tokens_max)
        self.channels = int(channels)
        self.weights = self._init_weights()
        logger.info(
            "玩具注意力去噪器初始化: seed=%d, grid=%dx%d, channels=%d, d=%d",
            self.seed, self.grid_h, self.grid_w, self.channels, self.token_dim,
        )

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        return (self.channels, self.grid_h, self.grid_w)

    @property
    def num_pixels(self) -> int:
        return self.grid_h * self.grid_w

    def _init_weights(self) -> ToyWeights:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, _WEIGHT_TAG]))
        c, d = self.channels, self.token_dim

        def dense(rows: int, cols: int) -> np.ndarray:
            return rng.standard_normal((rows, cols)) / np.sqrt(rows)

        return ToyWeights(
            w_in=dense(c, d),
            b_in=0.1 * rng.standard_normal(d),
            w_time=dense(2, d),
            wq=dense(d, d),
            wk=dense(d, d),
            wv=dense(d, d),
            wq_cross=dense(d, d),
            wk_cross=dense(d, d),
            wv_cross=dense(d, d),
            w_out=dense(d, c),
        )

    def token_embeddings(self, cond: Condition) -> np.ndarray:
        """token id 的种子哈希嵌入 (L × d)。"""
        if len(cond) > self.num_tokens_max:
            raise ConditionError(
                f"token 数 {len(cond)} 超过上限 {self.num_tokens_max}"
            )
        rows = []
        for token in cond.tokens:
            rng = np.random.default_rng(
                np.random.SeedSequence([self.seed, _TOKEN_TAG, _token_key(token)])
            )
            rows.append(rng.standard_normal(self.token_dim))
        return np.stack(rows)

    def pixel_features(self, z: np.ndarray) -> np.ndarray:
        if z.shape != self.latent_shape:
            raise ShapeMismatchError(f"潜变量形状 {z.shape} 与去噪器 {self.latent_shape} 不一致")
        return z.reshape(self.channels, self.num_pixels).T

    def embed(self, z: np.ndarray, t: int) -> np.ndarray:
        """像素嵌入 h (P × d)，叠加时间特征。"""
        phase = np.pi * t / self.schedule.total_steps
        time_features = np.array([np.sin(phase), np.cos(phase)]) @ self.weights.w_time
        return self.pixel_features(z) @ self.weights.w_in + self.weights.b_in + time_features

    def _forward(
        self,
        z: np.ndarray,
        t: int,
        cond: Condition,
        injection: AttentionInjection | None,
    ) -> DenoiserOutput:
        w = self.weights
        injection = injection or AttentionInjection()
        h = self.embed(z, t)

        # 自注意力
        own_pack = SelfAttentionPack(q=h @ w.wq, k=h @ w.wk, v=h @ w.wv)
        pack = injection.self_pack or own_pack
        if not pack.compatible_with(own_pack):
            raise ShapeMismatchError("注入的自注意力包形状与本层不一致")
        self_weights = softmax_rows(pack.q @ pack.k.T / np.sqrt(pack.q.shape[1]))
        h = h + self_weights @ pack.v

        # 交叉注意力
        tokens = self.token_embeddings(cond)
        values = tokens @ w.wv_cross
        if injection.cross_map is not None:
            cross_map = injection.cross_map
            if cross_map.weights.shape != (self.num_pixels, len(cond)):
                raise ShapeMismatchError(
                    f"注入的交叉注意力图形状 {cross_map.weights.shape} 应为 "
                    f"{(self.num_pixels, len(cond))}"
                )
        else:
            queries = h @ w.wq_cross
            keys = tokens @ w.wk_cross
            cross_map = CrossAttentionMap(
                softmax_rows(queries @ keys.T / np.sqrt(self.token_dim))
            )
        h = h + cross_map.weights @ values

        eps = (np.tanh(h) @ w.w_out).T.reshape(self.latent_shape)
        return DenoiserOutput(eps=eps, cross_map=cross_map, self_pack=own_pack)

    def describe(self) -> dict:
        return {
            **super().describe(),
            "seed": self.seed,
            "latent_shape": list(self.latent_shape),
            "token_dim": self.token_dim,
        }


def toy_attention_denoiser(
    seed: int,
    grid_h: int,
    grid_w: int,
    token_dim: int,
    num_tokens_max: int,
    schedule: VarianceSchedule,
    channels: int = 4,
) -> ToyAttentionDenoiser:
    return ToyAttentionDenoiser(
        seed, grid_h, grid_w, token_dim, num_tokens_max, schedule, channels=channels
    )
