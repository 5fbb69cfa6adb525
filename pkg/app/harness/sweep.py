import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Callable, Generic, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass
class SeedOutcome(Generic[T]):
    seed: int
    result: T | None = None
    error: BaseException | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class SweepRunner:
    """多种子并行执行器 - 各种子互相独立，输出写到各自目录"""

    def __init__(self, max_workers: int = 4, show_progress: bool = True):
        if max_workers < 1:
            raise ValueError(f"max_workers 必须 >= 1: {max_workers}")
        self.max_workers = max_workers
        self.show_progress = show_progress

    def run(self, seeds: list[int], task: Callable[[int], T], desc: str = "sweep") -> list[SeedOutcome[T]]:
        """
        并行执行每个种子的任务

        Args:
            seeds: 种子列表
            task: 接收种子、返回结果的函数
            desc: 进度条标题

        Returns:
            按种子顺序排列的执行结果，失败的种子带上异常
        """
        if not seeds:
            return []

        start_time = time.time()
        logger.info(f"开始种子扫描，种子数量: {len(seeds)}，工作线程: {self.max_workers}")

        if len(seeds) == 1 or self.max_workers == 1:
            outcomes = {seed: self._run_one(task, seed) for seed in tqdm(seeds, desc=desc, disable=not self.show_progress)}
        else:
            outcomes = {}
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                future_to_seed = {executor.submit(self._run_one, task, seed): seed for seed in seeds}
                with tqdm(total=len(seeds), desc=desc, disable=not self.show_progress) as progress:
                    for future in as_completed(future_to_seed):
                        seed = future_to_seed[future]
                        outcomes[seed] = future.result()
                        progress.update(1)

        failed = [seed for seed, outcome in outcomes.items() if not outcome.ok]
        elapsed_time = time.time() - start_time
        logger.info(f"种子扫描完成，耗时: {elapsed_time:.2f}秒，失败: {len(failed)} 个")
        return [outcomes[seed] for seed in seeds]

    @staticmethod
    def _run_one(task: Callable[[int], Any], seed: int) -> SeedOutcome:
        try:
            return SeedOutcome(seed=seed, result=task(seed))
        except Exception as e:
            logger.error(f"种子 {seed} 执行失败: {e}")
            return SeedOutcome(seed=seed, error=e)
