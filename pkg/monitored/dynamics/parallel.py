from typing import Any, Callable, List, Sequence

from joblib import Parallel, delayed
from loguru import logger
from threadpoolctl import threadpool_limits
from tqdm import tqdm

# 固定的分块大小，使归约顺序与worker数无关
CHUNK_SIZE = 16


def _run_chunk(func: Callable, payload: Any, indices: Sequence[int]) -> List[Any]:
    # 每个分块内限制BLAS为单线程
    with threadpool_limits(limits=1):
        return [func(payload, index) for index in indices]


def run_indexed(func: Callable, payload: Any, n: int, workers: int = 1,
                desc: str = "trajectories", progress: bool = False) -> List[Any]:
    """并行计算 func(payload, i)，i = 0..n-1，按索引顺序返回"""
    chunks = [list(range(start, min(start + CHUNK_SIZE, n))) for start in range(0, n, CHUNK_SIZE)]
    n_jobs = max(1, min(int(workers), len(chunks)))
    logger.debug(f"Running {n} indexed tasks in {len(chunks)} chunks on {n_jobs} worker(s)")

    tasks = (delayed(_run_chunk)(func, payload, chunk) for chunk in chunks)
    parts = Parallel(n_jobs=n_jobs, return_as="generator")(tasks)
    results: List[Any] = []
    with tqdm(total=n, desc=desc, unit="traj", disable=not progress) as pbar:
        for part in parts:
            results.extend(part)
            pbar.update(len(part))
    return results
