import asyncio
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import numpy as np

from config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def replication_rng(seed: int, *key: int) -> np.random.Generator:
	"""Independent stream for one unit of work, a pure function of (seed, key)"""
	sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
	return np.random.default_rng(sequence)


class ReplicationPool:
	"""
	Runs independent replications on a thread pool.

	Results always come back in submission order, so aggregates do not
	depend on the number of workers.
	"""
	def __init__(self, threads: Optional[int] = None, batch_size: Optional[int] = None):
		self.threads = max(1, threads or settings.THREADS)
		self.batch_size = max(1, batch_size or settings.REPLICATION_BATCH_SIZE)

	def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
		items = list(items)
		if self.threads == 1 or len(items) <= 1:
			return [fn(item) for item in items]
		return asyncio.run(self._gather(fn, items))

	async def _gather(self, fn: Callable[[T], R], items: List[T]) -> List[R]:
		loop = asyncio.get_running_loop()
		results: List[R] = []
		start_time = time.time()

		with ThreadPoolExecutor(max_workers=self.threads) as executor:
			# Process in batches
			for i in range(0, len(items), self.batch_size):
				batch = items[i:i + self.batch_size]
				tasks = [loop.run_in_executor(executor, fn, item) for item in batch]
				results.extend(await asyncio.gather(*tasks))

		processing_time = (time.time() - start_time) * 1000
		logger.debug(f"Ran {len(items)} replications on {self.threads} threads in {processing_time:.2f}ms")
		return results
