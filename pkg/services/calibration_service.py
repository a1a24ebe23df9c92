import logging
import math
import time
from typing import Dict, List, Optional, Sequence, Tuple

from config import settings
from models.errors import CalibCIError, DepthOutOfRange
from models.reports import (
	BaselineRecord, EstimateReport, IntervalRecord, Method, MethodOutcome, ReportDocument
)
from models.schemas import BinStats, Dataset, InferenceOptions, PartitionSpec, TopKView
from services.baselines import bootstrap_ci, hulc_ci, hulc_splits, subsampling_ci
from services.binning import choose_m
from services.estimator import bin_stats, debiased_ece, tcal_statistic
from services.inference import build_report, tcal_threshold
from services.replication import ReplicationPool
from services.topk import topk_project
from services.variance import variance_estimates

logger = logging.getLogger(__name__)


class CalibrationService:
	"""Debiased ECE estimate, adjusted interval and the comparison methods for one dataset"""

	def __init__(self, options: Optional[InferenceOptions] = None, pool: Optional[ReplicationPool] = None):
		self.options = options or InferenceOptions()
		self.pool = pool or ReplicationPool(threads=1)

	def partition(self, d: Dataset) -> PartitionSpec:
		"""Explicit mK when given, otherwise the bias/variance balancing rule for m"""
		opts = self.options
		if not 1 <= opts.k <= d.K:
			raise DepthOutOfRange(f"depth k={opts.k} outside [1, {d.K}]")
		if opts.mk is not None:
			return PartitionSpec.from_mk(opts.mk, d.K, opts.k)
		m = choose_m(d.n, opts.k, d.K, opts.smoothness, opts.m_constant)
		return PartitionSpec(K=d.K, k=opts.k, m=m)

	def fit(self, d: Dataset, spec: Optional[PartitionSpec] = None) -> Tuple[TopKView, BinStats]:
		spec = spec or self.partition(d)
		view = topk_project(d, spec.k)
		return view, bin_stats(view, spec)

	def estimate(self, d: Dataset, spec: Optional[PartitionSpec] = None) -> EstimateReport:
		"""topk_project -> bin_stats -> debiased_ece -> variances -> adjusted interval"""
		_, stats = self.fit(d, spec)
		return self._report(stats, d.n)

	def _report(self, stats: BinStats, n: int) -> EstimateReport:
		estimate = debiased_ece(stats, n)
		variances = variance_estimates(stats, n)
		return build_report(estimate, variances, self.options.alpha)

	def evaluate(
		self,
		d: Dataset,
		methods: Sequence[Method],
		spec: Optional[PartitionSpec] = None,
		seed: Optional[int] = None
	) -> Dict[str, MethodOutcome]:
		"""Run every requested method on the same dataset"""
		spec = spec or self.partition(d)
		view, stats = self.fit(d, spec)
		report = self._report(stats, d.n)
		return self._outcomes(d, spec, view, stats, report, methods, seed)

	def _outcomes(
		self,
		d: Dataset,
		spec: PartitionSpec,
		view: TopKView,
		stats: BinStats,
		report: EstimateReport,
		methods: Sequence[Method],
		seed: Optional[int]
	) -> Dict[str, MethodOutcome]:
		opts = self.options
		seed = opts.seed if seed is None else seed
		outcomes: Dict[str, MethodOutcome] = {}
		for method in methods:
			if method == "adjusted":
				outcomes[method] = MethodOutcome(
					method=method,
					interval=report.ci_squared,
					statistic=report.estimate.t,
					reject=report.reject_at_alpha
				)
			elif method == "tcal":
				statistic = tcal_statistic(stats, d.n)
				threshold = tcal_threshold(view, spec, opts.alpha, opts.tcal_reps, seed, self.pool)
				outcomes[method] = MethodOutcome(
					method=method,
					statistic=statistic,
					threshold=threshold,
					reject=statistic > threshold
				)
			else:
				interval = self.baseline_interval(d, spec, method, seed)
				outcomes[method] = MethodOutcome(
					method=method,
					interval=interval,
					statistic=report.estimate.t,
					reject=not interval.contains(0.0)
				)
		return outcomes

	def baseline_interval(self, d: Dataset, spec: PartitionSpec, method: str, seed: int):
		opts = self.options
		if method == "bootstrap":
			return bootstrap_ci(d, spec.k, spec, opts.resample_config(method, seed), self.pool)
		if method == "subsampling":
			return subsampling_ci(d, spec.k, spec, opts.resample_config(method, seed), self.pool)
		if method == "hulc":
			return hulc_ci(d, spec.k, spec, opts.alpha, seed, opts.hulc_delta)
		raise CalibCIError(f"unknown interval method {method}")

	# ====================
	# compute command report
	# ====================

	def compute(self, d: Dataset, input_digest: str, method: Method = "adjusted") -> ReportDocument:
		"""Estimate, adjusted interval and test for one prediction file, plus the requested comparison method"""
		start_time = time.time()
		spec = self.partition(d)
		logger.info(f"Estimating ECE^2 on n={d.n}, K={d.K}, k={spec.k}, mK={spec.mk}")

		view, stats = self.fit(d, spec)
		report = self._report(stats, d.n)
		warnings = self._warnings(report, method)
		baseline = None
		if method != "adjusted":
			outcome = self._outcomes(d, spec, view, stats, report, [method], None)[method]
			baseline = self._baseline_record(d, outcome)

		ci = report.ci_squared
		variances = report.variances
		document = ReportDocument(
			schema_version=settings.SCHEMA_VERSION,
			tool_version=settings.TOOL_VERSION,
			input_digest=input_digest,
			config=self._config_echo(spec, method),
			n=d.n,
			K=d.K,
			k=spec.k,
			m=spec.m,
			mk=spec.mk,
			w=spec.null_volume,
			t=report.estimate.t,
			t_plus=report.estimate.t_plus,
			sqrt_t_plus=math.sqrt(report.estimate.t_plus),
			sigma0_sq=variances.sigma0_sq,
			sigma0=variances.sigma0,
			sigma1_hat_sq=variances.sigma1_hat_sq,
			sigma1_hat=variances.sigma1_hat,
			ci_squared=IntervalRecord(
				lower=ci.lower,
				upper=ci.upper,
				includes_zero=ci.includes_zero,
				excludes_zero_point=ci.excludes_zero_point,
				case_tag=ci.case_tag,
				degenerate_variance=ci.degenerate_variance
			),
			ci_root=list(report.ci_root),
			p_value_calibrated=report.p_value_calibrated,
			reject_at_alpha=report.reject_at_alpha,
			baseline=baseline,
			warnings=warnings
		)

		processing_time = (time.time() - start_time) * 1000
		logger.info(f"Computed report (T={report.estimate.t:.6g}) in {processing_time:.2f}ms")
		return document

	def _config_echo(self, spec: PartitionSpec, method: str) -> Dict:
		opts = self.options
		echo = {
			"k": spec.k,
			"m": spec.m,
			"mk": spec.mk,
			"m_rule": "explicit" if opts.mk is not None else "choose_m",
			"alpha": opts.alpha,
			"seed": opts.seed,
			"method": method
		}
		if opts.mk is None:
			echo.update(smoothness=opts.smoothness, m_constant=opts.m_constant)
		if method == "bootstrap":
			echo.update(boot_reps=opts.boot_reps, bootstrap_variant="percentile")
		elif method == "subsampling":
			echo.update(
				subsample_reps=opts.subsample_reps,
				subsample_size=opts.subsample_size,
				subsample_rate=opts.subsample_rate
			)
		elif method == "hulc":
			echo.update(hulc_delta=opts.hulc_delta)
		elif method == "tcal":
			echo.update(tcal_reps=opts.tcal_reps)
		return echo

	def _baseline_record(self, d: Dataset, outcome: MethodOutcome) -> BaselineRecord:
		details = {}
		if outcome.method == "subsampling":
			details["subsample_size"] = self.options.subsample_size or math.isqrt(d.n)
		elif outcome.method == "hulc":
			details["splits"] = hulc_splits(self.options.alpha, self.options.hulc_delta)
		interval = outcome.interval
		return BaselineRecord(
			method=outcome.method,
			lower=interval.lower if interval is not None else None,
			upper=interval.upper if interval is not None else None,
			statistic=outcome.statistic,
			threshold=outcome.threshold,
			reject=outcome.reject,
			details=details
		)

	def _warnings(self, report: EstimateReport, method: str) -> List[str]:
		warnings = []
		if report.ci_squared.degenerate_variance:
			warnings.append("degenerate variance: sigma1_hat is zero, the interval collapses to a point")
		if report.estimate.t < 0.0:
			warnings.append(f"T={report.estimate.t:.6g} is negative; the interval is built around T+ = 0")
		if method == "hulc" and self.options.hulc_delta == 0.0:
			warnings.append("HulC uses median bias delta=0, which the estimator only satisfies asymptotically")
		for warning in warnings:
			logger.warning(warning)
		return warnings
