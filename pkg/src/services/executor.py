import asyncio
from typing import Callable, List, Sequence, TypeVar, Union

from src.core.config import settings
from src.core.logger import get_logger

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class GridExecutor:
    """Runs independent grid points on worker threads with bounded concurrency"""

    def __init__(self, max_workers: int = None):
        """
        Initialize the executor

        Args:
            max_workers: Maximum number of grid points in flight
        """
        self.max_workers = max_workers or settings.MAX_WORKERS

    async def map(
        self,
        func: Callable[[T], R],
        items: Sequence[T],
        max_workers: int = None,
    ) -> List[Union[R, BaseException]]:
        """
        Apply func to every item, at most max_workers at a time

        Args:
            func: Blocking callable, run in a worker thread
            items: Work units
            max_workers: Override of the instance bound

        Returns:
            Results in input order; a failed item yields its exception
        """
        semaphore = asyncio.Semaphore(max_workers or self.max_workers)

        async def run_item(index: int, item: T) -> R:
            async with semaphore:
                logger.info(f"Grid point {index + 1}/{len(items)} started")
                try:
                    return await asyncio.to_thread(func, item)
                except Exception as e:
                    logger.error(f"Grid point {index + 1}/{len(items)} failed: {e}")
                    raise
                finally:
                    logger.info(f"Grid point {index + 1}/{len(items)} finished")

        tasks = [run_item(index, item) for index, item in enumerate(items)]
        return await asyncio.gather(*tasks, return_exceptions=True)

    def run_sync(
        self,
        func: Callable[[T], R],
        items: Sequence[T],
        max_workers: int = None,
    ) -> List[Union[R, BaseException]]:
        """Blocking wrapper around map for synchronous callers"""
        return asyncio.run(self.map(func, items, max_workers))


# Singleton instance
grid_executor = GridExecutor()
