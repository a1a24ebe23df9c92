import logging
import math
import time
from functools import lru_cache
from typing import Literal, Optional

import numpy as np

from config import settings
from models.errors import CountMismatch, ResolutionTooCoarse, UnsupportedPartition
from models.schemas import BinStats, PartitionSpec, VarianceEstimates
from services.replication import replication_rng

logger = logging.getLogger(__name__)

Sigma0Method = Literal["auto", "closed_form_k1", "quadrature", "monte_carlo"]

# Rows of the midpoint grid processed per chunk
_CHUNK_POINTS = 2_000_000


def _integrand(z: np.ndarray) -> np.ndarray:
	"""||z||_2^2 - 2 ||z||_3^3 + ||z||_2^4, the Frobenius norm of diag(z) - z z^T squared"""
	sq = np.sum(z * z, axis=1)
	cube = np.sum(z * z * z, axis=1)
	return sq - 2.0 * cube + sq * sq


def _in_chamber(z: np.ndarray, K: int) -> np.ndarray:
	k = z.shape[1]
	sums = z.sum(axis=1)
	mask = (sums >= k / K) & (sums <= 1.0)
	if k > 1:
		mask &= np.all(np.diff(z, axis=1) <= 0.0, axis=1)
	return mask


def _check_depth(K: int, k: int) -> None:
	# validates K >= 2, 1 <= k <= K and rejects k = K > 2
	PartitionSpec(K=K, k=k, m=1)


def sigma0_sq_closed_form(K: int) -> float:
	"""Top-1 value: 2 [z^3/3 - z^4/2 + z^5/5] evaluated from 1/K to 1"""
	def antiderivative(z: float) -> float:
		return z ** 3 / 3.0 - z ** 4 / 2.0 + z ** 5 / 5.0
	return 2.0 * (antiderivative(1.0) - antiderivative(1.0 / K))


def sigma0_sq_quadrature(K: int, k: int, resolution: int) -> float:
	"""Midpoint rule on cells of side 1/(resolution K) whose centers lie in Delta(K, k)"""
	if resolution < 2:
		raise ResolutionTooCoarse(f"quadrature resolution {resolution} < 2")
	per_axis = resolution * K
	side = 1.0 / per_axis
	centers = (np.arange(per_axis) + 0.5) * side

	# enumerate the grid along the leading axis in chunks
	inner = per_axis ** (k - 1)
	rows_per_chunk = max(1, _CHUNK_POINTS // max(inner, 1))
	inner_grid = (
		np.stack(np.meshgrid(*([centers] * (k - 1)), indexing="ij"), axis=-1).reshape(-1, k - 1)
		if k > 1 else np.zeros((1, 0))
	)

	total = 0.0
	hits = 0
	for start in range(0, per_axis, rows_per_chunk):
		lead = centers[start:start + rows_per_chunk]
		z = np.hstack([
			np.repeat(lead, inner_grid.shape[0])[:, None],
			np.tile(inner_grid, (lead.shape[0], 1))
		])
		mask = _in_chamber(z, K)
		hits += int(mask.sum())
		total += float(np.sum(_integrand(z[mask])))

	if hits == 0:
		raise ResolutionTooCoarse(f"no cell center of the {per_axis}^{k} grid falls inside Delta({K}, {k})")
	return 2.0 * total * side ** k


def sigma0_sq_monte_carlo(K: int, k: int, samples: int, seed: int = 0) -> float:
	"""Rejection sampling from the unit cube; integral = mean of integrand * indicator"""
	block = 500_000
	total = 0.0
	for b, start in enumerate(range(0, samples, block)):
		size = min(block, samples - start)
		rng = replication_rng(seed, b)
		z = rng.random((size, k))
		mask = _in_chamber(z, K)
		total += float(np.sum(_integrand(z[mask])))
	return 2.0 * total / samples


@lru_cache(maxsize=64)
def sigma0_sq(
	K: int,
	k: int,
	method: Sigma0Method = "auto",
	resolution: Optional[int] = None,
	samples: Optional[int] = None,
	seed: int = 0
) -> float:
	"""Asymptotic variance of n sqrt(w) T_{m,n} for a calibrated model; depends only on (K, k)"""
	_check_depth(K, k)
	if k == K:
		# binary full calibration: U = (u, -u), so T and sigma0 are twice their
		# top-1 values and the null scaling uses the top coordinate's cell side
		return 4.0 * sigma0_sq_closed_form(K)
	if method == "auto":
		method = "closed_form_k1" if k == 1 else "quadrature"

	start_time = time.time()
	if method == "closed_form_k1":
		if k != 1:
			raise UnsupportedPartition(f"closed form only covers k=1, got k={k}")
		value = sigma0_sq_closed_form(K)
	elif method == "quadrature":
		value = sigma0_sq_quadrature(K, k, resolution or settings.SIGMA0_RESOLUTION)
	else:
		value = sigma0_sq_monte_carlo(K, k, samples or settings.SIGMA0_MC_SAMPLES, seed)

	processing_time = (time.time() - start_time) * 1000
	logger.info(f"sigma0^2(K={K}, k={k}) = {value:.8g} via {method} in {processing_time:.2f}ms")
	return value


def sigma1_hat_sq(stats: BinStats, n: int) -> float:
	"""Plug-in estimator of the mis-calibrated asymptotic variance from per-bin means and covariances"""
	if stats.n != n:
		raise CountMismatch(f"bin counts sum to {stats.n}, expected n={n}")

	weights = stats.counts / float(n)
	mean = stats.mean_u
	cov = stats.cov_u
	norm_sq = np.sum(mean * mean, axis=1)
	quad = np.einsum("bi,bij,bj->b", mean, cov, mean)

	fourth = math.fsum((weights * norm_sq ** 2).tolist())
	second = math.fsum((weights * norm_sq).tolist())
	cross = math.fsum((weights * quad).tolist())
	return fourth - second ** 2 + 4.0 * cross


def variance_estimates(stats: BinStats, n: int) -> VarianceEstimates:
	spec = stats.spec
	return VarianceEstimates(
		sigma0_sq=sigma0_sq(spec.K, spec.k),
		sigma1_hat_sq=sigma1_hat_sq(stats, n)
	)
