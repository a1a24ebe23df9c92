import logging
import math
from typing import List, Optional

import numpy as np

from models.errors import InvalidLevel, SubsampleTooSmall, TooFewExamples
from models.schemas import ConfidenceInterval, Dataset, PartitionSpec, ResampleConfig
from services.binning import bin_index
from services.estimator import grouped_statistic
from services.replication import ReplicationPool, replication_rng
from services.topk import topk_project

logger = logging.getLogger(__name__)


class _Prepared:
	"""Residuals and bin positions of a dataset, shared by every resample"""
	def __init__(self, d: Dataset, k: int, spec: PartitionSpec):
		view = topk_project(d, k)
		cells, inverse = bin_index(view.z_top, spec)
		self.n = d.n
		self.u = view.u
		self.inverse = inverse
		self.n_bins = len(cells)

	def statistic(self, index: Optional[np.ndarray] = None) -> float:
		if index is None:
			return grouped_statistic(self.inverse, self.u, self.n_bins)
		return grouped_statistic(self.inverse[index], self.u[index], self.n_bins)


def _replicates(prepared: _Prepared, draw, cfg: ResampleConfig, pool: Optional[ReplicationPool]) -> np.ndarray:
	def run(b: int) -> float:
		return prepared.statistic(draw(replication_rng(cfg.seed, b)))

	pool = pool or ReplicationPool(threads=1)
	return np.asarray(pool.map(run, range(cfg.replications)), dtype=np.float64)


def bootstrap_ci(
	d: Dataset,
	k: int,
	spec: PartitionSpec,
	cfg: ResampleConfig,
	pool: Optional[ReplicationPool] = None
) -> ConfidenceInterval:
	"""Percentile bootstrap interval for T_{m,n}"""
	prepared = _Prepared(d, k, spec)
	n = prepared.n

	values = _replicates(prepared, lambda rng: rng.integers(0, n, size=n), cfg, pool)
	lower, upper = np.quantile(values, [cfg.alpha / 2.0, 1.0 - cfg.alpha / 2.0])
	return ConfidenceInterval(lower=float(lower), upper=float(upper), method="bootstrap")


def default_subsample_size(n: int) -> int:
	return int(math.isqrt(n))


def _rate(size: int, rate: str) -> float:
	return math.sqrt(size) if rate == "sqrt_n" else float(size)


def subsampling_ci(
	d: Dataset,
	k: int,
	spec: PartitionSpec,
	cfg: ResampleConfig,
	pool: Optional[ReplicationPool] = None
) -> ConfidenceInterval:
	"""Subsampling interval from rate-scaled, centered subsample statistics"""
	prepared = _Prepared(d, k, spec)
	n = prepared.n
	b = cfg.subsample_size or default_subsample_size(n)
	if not 2 <= b <= n:
		raise SubsampleTooSmall(f"subsample size {b} outside [2, n={n}]")

	t = prepared.statistic()
	values = _replicates(prepared, lambda rng: rng.choice(n, size=b, replace=False), cfg, pool)
	q_low, q_high = np.quantile(values, [cfg.alpha / 2.0, 1.0 - cfg.alpha / 2.0])
	scale = _rate(b, cfg.rate) / _rate(n, cfg.rate)
	return ConfidenceInterval(
		lower=float(t - scale * (q_high - t)),
		upper=float(t - scale * (q_low - t)),
		method="subsampling"
	)


def hulc_splits(alpha: float, delta: float = 0.0) -> int:
	"""Smallest B with (1/2 + delta)^B + (1/2 - delta)^B <= alpha"""
	if not 0.0 < alpha < 1.0:
		raise InvalidLevel(f"alpha={alpha} outside (0, 1)")
	if delta == 0.0:
		return int(math.ceil(math.log2(2.0 / alpha)))
	B = 1
	while (0.5 + delta) ** B + (0.5 - delta) ** B > alpha:
		B += 1
	return B


def hulc_folds(n: int, splits: int, rng: np.random.Generator) -> List[np.ndarray]:
	"""Random partition into `splits` folds whose sizes differ by at most one"""
	return np.array_split(rng.permutation(n), splits)


def hulc_fold_estimates(
	d: Dataset,
	k: int,
	spec: PartitionSpec,
	alpha: float,
	seed: int = 0,
	delta: float = 0.0
) -> List[float]:
	"""T on each of the HulC folds"""
	splits = hulc_splits(alpha, delta)
	if d.n < splits:
		raise TooFewExamples(f"HulC with alpha={alpha} needs {splits} examples, got n={d.n}")

	prepared = _Prepared(d, k, spec)
	folds = hulc_folds(d.n, splits, replication_rng(seed, 0))
	return [prepared.statistic(np.sort(fold)) for fold in folds]


def hulc_ci(
	d: Dataset,
	k: int,
	spec: PartitionSpec,
	alpha: float,
	seed: int = 0,
	delta: float = 0.0
) -> ConfidenceInterval:
	"""Convex hull of T over disjoint folds"""
	estimates = hulc_fold_estimates(d, k, spec, alpha, seed, delta)
	return ConfidenceInterval(lower=min(estimates), upper=max(estimates), method="hulc")
