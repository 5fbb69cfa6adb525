import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

# 用途标签
TERMINAL = "terminal"
RENOISE = "renoise"
SYNTHETIC = "synthetic"


def _tag_key(purpose: str) -> int:
    """标签转稳定整数，不能用内置 hash（进程间会随机化）。"""
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class NoiseStreams:
    """按 (运行种子, 用途, 步数) 派生独立随机流。

    同一个 key 无论何时、以何种顺序取，得到的都是同一份噪声，
    所以两个分支共享 ε 由构造保证，与求值顺序无关。
    """

    seed: int
    ledger: list[tuple[str, int, str]] = field(default_factory=list)

    def generator(self, purpose: str, step: int = 0) -> np.random.Generator:
        sequence = np.random.SeedSequence([int(self.seed), _tag_key(purpose), int(step)])
        return np.random.default_rng(sequence)

    def normal(self, purpose: str, step: int, shape: tuple[int, ...]) -> np.ndarray:
        """标准正态噪声，并在账本中记下摘要。"""
        noise = self.generator(purpose, step).standard_normal(tuple(shape))
        digest = hashlib.sha1(noise.tobytes()).hexdigest()
        self.ledger.append((purpose, int(step), digest))
        logger.debug("取噪声: purpose=%s, step=%d, digest=%s", purpose, step, digest[:10])
        return noise

    def digests(self, purpose: str, step: int) -> list[str]:
        """某个 key 的全部取数摘要，用于核对共享噪声。"""
        return [d for p, s, d in self.ledger if p == purpose and s == step]
