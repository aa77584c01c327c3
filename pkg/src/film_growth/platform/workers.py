"""
Worker pool for ensemble parallelism.

Trajectories are independent and keyed by seed, so results are collected in
submission order and never depend on the number of workers.
"""

import logging
import os
import time
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TypeVar

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class WorkerPoolConfig:
    """Configuration for the ensemble worker pool."""

    max_workers: int = 1
    thread_name_prefix: str = "film-growth"

    def __post_init__(self) -> None:
        if self.max_workers < 1:
            self.max_workers = 1


class EnsembleExecutor:
    """Runs one task per ensemble member and returns results in input order."""

    def __init__(self, config: WorkerPoolConfig | None = None):
        self.config = config or WorkerPoolConfig()
        self.logger = logging.getLogger(__name__)

    def map_ordered(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        work = list(items)
        start = time.perf_counter()
        if self.config.max_workers == 1 or len(work) <= 1:
            results = [fn(item) for item in work]
        else:
            with ThreadPoolExecutor(
                max_workers=self.config.max_workers,
                thread_name_prefix=self.config.thread_name_prefix,
            ) as pool:
                # map() yields in submission order and re-raises the first failure
                results = list(pool.map(fn, work))
        elapsed = time.perf_counter() - start
        self.logger.debug(
            "Completed %d tasks on %d workers in %.2fs", len(work), self.config.max_workers, elapsed
        )
        return results


def create_executor(threads: int | None = None) -> EnsembleExecutor:
    """Executor sized from ``threads`` or FILM_GROWTH_THREADS (default 1)."""
    if threads is None:
        threads = int(os.getenv("FILM_GROWTH_THREADS", "1"))
    return EnsembleExecutor(WorkerPoolConfig(max_workers=threads))
