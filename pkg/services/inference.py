import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from config import settings
from models.errors import ConfigError, InvalidArgument, InvalidLevel, NonFiniteEntry
from models.reports import EstimateReport
from models.schemas import AdjustedInterval, EstimateValue, PartitionSpec, TopKView, VarianceEstimates
from services.binning import bin_index
from services.replication import ReplicationPool, replication_rng

logger = logging.getLogger(__name__)

# Null replications drawn per RNG stream in tcal_threshold
TCAL_BLOCK_SIZE = 100


def normal_cdf(x: float) -> float:
	return float(ndtr(x))


def normal_quantile(p: float) -> float:
	if not 0.0 < p < 1.0:
		raise InvalidLevel(f"probability {p} outside (0, 1)")
	return float(ndtri(p))


def _check_alpha(alpha: float) -> None:
	if not (math.isfinite(alpha) and 0.0 < alpha < 1.0):
		raise InvalidLevel(f"alpha={alpha} outside (0, 1)")


def detection_threshold(sigma0: float, n: int, w: float, alpha: float) -> float:
	"""Smallest T at which a calibrated model is rejected: z_alpha sigma0 / (n sqrt(w))"""
	return normal_quantile(1.0 - alpha) * sigma0 / (n * math.sqrt(w))


def standardized_statistic(t: float, sigma0: float, n: int, w: float) -> float:
	"""n sqrt(w) T / sigma0, standard normal in the limit for a calibrated model"""
	return n * math.sqrt(w) * t / sigma0


def rejects_calibration(t: float, sigma0: float, n: int, w: float, alpha: float) -> bool:
	"""Decision shared by the test and the zero-inclusion rule, on the signed statistic"""
	return standardized_statistic(t, sigma0, n, w) >= normal_quantile(1.0 - alpha)


def adjusted_ci(
	t_plus: float,
	sigma1_hat: float,
	sigma0: float,
	n: int,
	w: float,
	alpha: float,
	t: Optional[float] = None
) -> AdjustedInterval:
	"""
	Three-branch interval around T+, unioned with {0} when the calibration test does not reject.

	t is the signed estimate and defaults to t_plus; the zero rule is decided on it.
	"""
	_check_alpha(alpha)
	if t is None:
		t = t_plus
	for name, value in (("t", t), ("t_plus", t_plus), ("sigma1_hat", sigma1_hat), ("sigma0", sigma0), ("w", w)):
		if not math.isfinite(value):
			raise NonFiniteEntry(f"{name} is not finite: {value}")
	if t_plus < 0.0 or sigma1_hat < 0.0 or sigma0 <= 0.0 or w <= 0.0:
		raise InvalidArgument(
			f"need t_plus >= 0, sigma1_hat >= 0, sigma0 > 0, w > 0; "
			f"got {t_plus}, {sigma1_hat}, {sigma0}, {w}"
		)
	if n < 2:
		raise InvalidArgument(f"sample size n={n} must be at least 2")
	if max(t, 0.0) != t_plus:
		raise InvalidArgument(f"t_plus={t_plus} is not the positive part of t={t}")

	root_n = math.sqrt(n)
	h2 = normal_quantile(1.0 - alpha / 2.0) * sigma1_hat / root_n
	h1 = normal_quantile(1.0 - alpha) * sigma1_hat / root_n
	degenerate = sigma1_hat == 0.0
	if degenerate:
		logger.warning("Estimated variance sigma1_hat is zero; reporting a point interval")

	if t_plus / 2.0 <= t_plus - h2:
		case_tag = "wide"
		lower, upper = t_plus - h2, t_plus + h2
	elif t_plus - h1 < t_plus / 2.0:
		case_tag = "punctured"
		lower, upper = max(0.0, t_plus - h1), t_plus + h2
	else:
		case_tag = "half-width"
		lower, upper = t_plus / 2.0, t_plus + h2

	includes_zero = not rejects_calibration(t, sigma0, n, w, alpha)
	# a rejected calibration test always leaves 0 out of the set
	excludes_zero_point = not includes_zero and lower == 0.0

	return AdjustedInterval(
		lower=lower,
		upper=upper,
		excludes_zero_point=excludes_zero_point,
		includes_zero=includes_zero,
		case_tag=case_tag,
		alpha=alpha,
		degenerate_variance=degenerate
	)


def calibration_test(t: float, sigma0: float, n: int, w: float, alpha: float) -> Tuple[float, bool]:
	"""One-sided test of ECE^2 = 0 from the calibrated-model limit law"""
	_check_alpha(alpha)
	if sigma0 <= 0.0:
		raise InvalidArgument(f"sigma0 must be positive, got {sigma0}")
	p_value = normal_cdf(-standardized_statistic(t, sigma0, n, w))
	reject = rejects_calibration(t, sigma0, n, w, alpha)
	return p_value, reject


def build_report(
	estimate: EstimateValue,
	variances: VarianceEstimates,
	alpha: float
) -> EstimateReport:
	"""Adjusted interval, root interval and test decision for one estimate"""
	spec = estimate.spec
	w = spec.null_volume
	ci = adjusted_ci(
		t_plus=estimate.t_plus,
		sigma1_hat=variances.sigma1_hat,
		sigma0=variances.sigma0,
		n=estimate.n,
		w=w,
		alpha=alpha,
		t=estimate.t
	)
	p_value, reject = calibration_test(estimate.t, variances.sigma0, estimate.n, w, alpha)
	return EstimateReport(
		estimate=estimate,
		variances=variances,
		ci_squared=ci,
		ci_root=(math.sqrt(ci.lower), math.sqrt(ci.upper)),
		p_value_calibrated=p_value,
		reject_at_alpha=reject
	)


def _tcal_null_block(
	z_top: np.ndarray,
	inverse: np.ndarray,
	n_bins: int,
	count: int,
	rng: np.random.Generator
) -> np.ndarray:
	"""T-Cal statistics for `count` label sets drawn from the predicted distribution"""
	n, k = z_top.shape
	cum = np.cumsum(z_top, axis=1)
	draws = rng.random((count, n))
	# rank of the realized class among the top k; k means it fell outside
	rank = np.sum(draws[:, :, None] >= cum[None, :, :], axis=2)
	y = (rank[:, :, None] == np.arange(k)[None, None, :]).astype(np.float64)
	u = y - z_top[None, :, :]

	index = (np.arange(count)[:, None] * n_bins + inverse[None, :]).ravel()
	size = count * n_bins
	sum_u = np.column_stack([
		np.bincount(index, weights=u[:, :, j].ravel(), minlength=size) for j in range(k)
	])
	sum_usq = np.bincount(index, weights=np.sum(u * u, axis=2).ravel(), minlength=size)
	pairs = (np.sum(sum_u * sum_u, axis=1) - sum_usq).reshape(count, n_bins)
	counts = np.bincount(inverse, minlength=n_bins).astype(np.float64)
	return np.sum(pairs / counts[None, :], axis=1) / n


def tcal_threshold(
	view: TopKView,
	spec: PartitionSpec,
	alpha: float,
	R: Optional[int] = None,
	seed: int = 0,
	pool: Optional[ReplicationPool] = None
) -> float:
	"""
	Monte-Carlo (1 - alpha) quantile of the T-Cal statistic under consistency resampling.

	The observed top-k probabilities are kept and labels are redrawn from them,
	so only view.z_top is used.
	"""
	_check_alpha(alpha)
	R = R or settings.TCAL_REPS
	if R < 100:
		raise ConfigError(f"T-Cal threshold needs at least 100 replications, got {R}")

	_, inverse = bin_index(view.z_top, spec)
	n_bins = int(inverse.max()) + 1
	blocks = [
		(b, min(TCAL_BLOCK_SIZE, R - start))
		for b, start in enumerate(range(0, R, TCAL_BLOCK_SIZE))
	]

	def run_block(block: Tuple[int, int]) -> np.ndarray:
		index, count = block
		return _tcal_null_block(view.z_top, inverse, n_bins, count, replication_rng(seed, index))

	pool = pool or ReplicationPool(threads=1)
	null = np.concatenate(pool.map(run_block, blocks))
	return float(np.quantile(null, 1.0 - alpha))
