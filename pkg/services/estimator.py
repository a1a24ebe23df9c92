import logging
import math
from typing import Literal

import numpy as np

from models.errors import CountMismatch, DepthOutOfRange
from models.schemas import BinStats, EstimateValue, PartitionSpec, TopKView
from services.binning import bin_index

logger = logging.getLogger(__name__)

Weighting = Literal["debiased", "tcal"]


def compensated_bin_sums(values: np.ndarray, inverse: np.ndarray, n_bins: int) -> np.ndarray:
	"""
	Per-bin column sums with Neumaier compensation.

	Rows are visited in example order inside each bin; every step adds at most
	one row per bin, so the updates vectorize without index collisions.
	"""
	values = np.asarray(values, dtype=np.float64)
	if values.ndim == 1:
		values = values[:, None]
	n, d = values.shape
	total = np.zeros((n_bins, d))
	comp = np.zeros((n_bins, d))
	if n == 0:
		return total

	order = np.argsort(inverse, kind="stable")
	sorted_bins = inverse[order]
	counts = np.bincount(inverse, minlength=n_bins)
	starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
	rank = np.arange(n) - starts[sorted_bins]

	by_rank = np.argsort(rank, kind="stable")
	steps = np.split(by_rank, np.cumsum(np.bincount(rank))[:-1])
	for step in steps:
		bins = sorted_bins[step]
		x = values[order[step]]
		acc = total[bins]
		t = acc + x
		comp[bins] += np.where(np.abs(acc) >= np.abs(x), (acc - t) + x, (x - t) + acc)
		total[bins] = t
	return total + comp


def bin_stats(view: TopKView, spec: PartitionSpec) -> BinStats:
	"""Count, residual sums and second moments for every non-empty bin"""
	if spec.k != view.k:
		raise DepthOutOfRange(f"partition depth {spec.k} does not match view depth {view.k}")

	cells, inverse = bin_index(view.z_top, spec)
	n_bins = len(cells)
	k = view.k
	u = view.u

	outer = (u[:, :, None] * u[:, None, :]).reshape(view.n, k * k)
	columns = np.hstack([u, np.sum(u * u, axis=1, keepdims=True), outer])
	sums = compensated_bin_sums(columns, inverse, n_bins)

	counts = np.bincount(inverse, minlength=n_bins).astype(np.int64)
	sum_u = sums[:, :k]
	sum_usq = sums[:, k]
	sum_uut = sums[:, k + 1:].reshape(n_bins, k, k)
	# the outer product is symmetric up to rounding
	sum_uut = 0.5 * (sum_uut + np.transpose(sum_uut, (0, 2, 1)))

	return BinStats(
		spec=spec,
		cells=cells,
		counts=counts,
		sum_u=sum_u,
		sum_usq=sum_usq,
		sum_uut=sum_uut
	)


def _pair_sums(sum_u: np.ndarray, sum_usq: np.ndarray) -> np.ndarray:
	"""Sum over ordered pairs a != b of U_a.U_b, per bin: ||sum U||^2 - sum ||U||^2"""
	return np.sum(sum_u * sum_u, axis=1) - sum_usq


def _weighted_statistic(counts: np.ndarray, pairs: np.ndarray, n: int, weighting: Weighting) -> float:
	counts = counts.astype(np.float64)
	if weighting == "debiased":
		used = counts >= 2
		terms = pairs[used] / (counts[used] - 1.0)
	else:
		used = counts >= 1
		terms = pairs[used] / counts[used]
	return math.fsum(terms.tolist()) / n


def _check_total(stats: BinStats, n: int) -> None:
	if stats.n != n:
		raise CountMismatch(f"bin counts sum to {stats.n}, expected n={n}")


def debiased_ece(stats: BinStats, n: int) -> EstimateValue:
	"""Debiased estimator T_{m,n} of the squared top-1-to-k ECE"""
	_check_total(stats, n)
	pairs = _pair_sums(stats.sum_u, stats.sum_usq)
	t = _weighted_statistic(stats.counts, pairs, n, "debiased")
	return EstimateValue(t=t, n=n, spec=stats.spec)


def tcal_statistic(stats: BinStats, n: int) -> float:
	"""T-Cal statistic: per-bin weight 1/N_i instead of 1/(N_i - 1)"""
	_check_total(stats, n)
	pairs = _pair_sums(stats.sum_u, stats.sum_usq)
	return _weighted_statistic(stats.counts, pairs, n, "tcal")


def grouped_statistic(
	inverse: np.ndarray,
	u: np.ndarray,
	n_bins: int,
	weighting: Weighting = "debiased"
) -> float:
	"""
	Statistic on rows whose bins are already known, used inside resampling loops.

	`inverse` holds the bin position of each row; rows may repeat (bootstrap).
	"""
	n = inverse.shape[0]
	counts = np.bincount(inverse, minlength=n_bins)
	sum_u = np.column_stack([
		np.bincount(inverse, weights=u[:, j], minlength=n_bins) for j in range(u.shape[1])
	])
	sum_usq = np.bincount(inverse, weights=np.sum(u * u, axis=1), minlength=n_bins)
	return _weighted_statistic(counts, _pair_sums(sum_u, sum_usq), n, weighting)
