import csv
import json
import logging
import math
import time
try:
	import tomllib
except ModuleNotFoundError:  # Python < 3.11
	import tomli as tomllib
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError
from scipy import stats

from models.errors import ConfigError, InvalidCounts
from models.reports import ExperimentConfig, ExperimentResult, ExperimentRow, GridSpec, Method, MethodOutcome
from models.schemas import InferenceOptions, SettingConfig
from services.calibration_service import CalibrationService
from services.generators import generate, sigma1_sq_oracle, true_ece_sq
from services.replication import ReplicationPool, replication_rng

logger = logging.getLogger(__name__)

# Method name -> outcome on one simulated dataset
Outcomes = Dict[str, MethodOutcome]

# Confidence of the error bars on coverage and power fractions
ERROR_BAR_CONF = 0.95
# Below this many datasets, coverage and power are too coarse to compare against a target
MIN_REPLICATIONS = 100

COVERAGE_METHODS: Tuple[Method, ...] = ("adjusted", "bootstrap", "subsampling", "hulc")
POWER_METHODS: Tuple[Method, ...] = ("adjusted", "bootstrap", "subsampling", "hulc", "tcal")

CSV_COLUMNS = [
	"setting", "beta", "method", "n", "K", "k", "mk", "replications",
	"true_ece_sq", "sigma1_sq", "mean_statistic",
	"coverage", "coverage_lower", "coverage_upper",
	"mean_width", "width_p5", "width_p95",
	"power", "power_lower", "power_upper",
	"agreement_with_adjusted",
]


def clopper_pearson(successes: int, trials: int, conf: float = ERROR_BAR_CONF) -> Tuple[float, float]:
	"""Exact binomial confidence bounds from Beta quantiles"""
	if trials < 1 or not 0 <= successes <= trials:
		raise InvalidCounts(f"need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}")
	if not 0.0 < conf < 1.0:
		raise InvalidCounts(f"confidence level {conf} outside (0, 1)")

	tail = (1.0 - conf) / 2.0
	lower = 0.0 if successes == 0 else float(stats.beta.ppf(tail, successes, trials - successes + 1))
	upper = 1.0 if successes == trials else float(stats.beta.ppf(1.0 - tail, successes + 1, trials - successes))
	return lower, upper


def load_experiment_config(path: str) -> ExperimentConfig:
	"""Read an experiment grid from a TOML file"""
	try:
		with open(path, "rb") as f:
			raw = tomllib.load(f)
	except FileNotFoundError:
		raise ConfigError(f"config file not found: {path}")
	except tomllib.TOMLDecodeError as e:
		raise ConfigError(f"config file {path} is not valid TOML: {e}")

	try:
		return ExperimentConfig(**raw)
	except ValidationError as e:
		raise ConfigError(f"invalid experiment config {path}: {e}")


class ExperimentRunner:
	"""
	Monte-Carlo coverage, width and power study over simulation grids.

	Every replication draws its dataset from replication_rng(seed, setting,
	beta index, replication), and all methods are run on that same dataset.
	Replications are aggregated in submission order, so results do not
	depend on the thread count.
	"""

	def __init__(self, config: ExperimentConfig, pool: Optional[ReplicationPool] = None):
		self.config = config
		self.pool = pool or ReplicationPool(threads=1)
		if config.reps < MIN_REPLICATIONS:
			logger.warning(f"Running only {config.reps} replications per grid point; error bars will be wide")

	def _options(self, cfg: SettingConfig) -> InferenceOptions:
		c = self.config
		return InferenceOptions(
			k=cfg.k,
			mk=cfg.mk,
			alpha=c.alpha,
			seed=c.seed,
			boot_reps=c.boot_reps,
			subsample_reps=c.subsample_reps,
			subsample_size=c.subsample_size,
			subsample_rate=c.subsample_rate,
			hulc_delta=c.hulc_delta,
			tcal_reps=c.tcal_reps
		)

	def run(self) -> ExperimentResult:
		rows: List[ExperimentRow] = []
		for grid in self.config.grids:
			for beta_index, cfg in enumerate(grid.configs()):
				rows.extend(self.run_point(cfg, beta_index))
		return ExperimentResult(config=self.config, rows=rows)

	def run_point(self, cfg: SettingConfig, beta_index: int) -> List[ExperimentRow]:
		"""All methods at one (setting, beta) grid point"""
		start_time = time.time()
		c = self.config
		methods = list(c.methods)
		spec = cfg.spec
		# resampling inside a replication stays sequential; replications are what run in parallel
		service = CalibrationService(self._options(cfg), ReplicationPool(threads=1))

		def replicate(rep: int) -> Outcomes:
			rng = replication_rng(c.seed, cfg.setting, beta_index, rep)
			d = generate(cfg.setting, cfg.n, cfg.beta, rng)
			method_seed = int(rng.integers(0, 2 ** 32))
			return service.evaluate(d, methods, spec, seed=method_seed)

		replicates = self.pool.map(replicate, range(c.reps))
		truth = true_ece_sq(cfg.setting, cfg.beta)
		sigma1_sq = sigma1_sq_oracle(cfg.setting, cfg.beta)
		seconds = time.time() - start_time

		rows = [
			self._aggregate(cfg, method, replicates, truth, sigma1_sq, seconds)
			for method in methods
		]
		logger.info(
			f"Setting {cfg.setting}, beta={cfg.beta:g}: {c.reps} replications of "
			f"{', '.join(methods)} in {seconds * 1000:.2f}ms"
		)
		return rows

	def _aggregate(
		self,
		cfg: SettingConfig,
		method: str,
		replicates: Sequence[Outcomes],
		truth: float,
		sigma1_sq: float,
		seconds: float
	) -> ExperimentRow:
		outcomes = [r[method] for r in replicates]
		R = len(outcomes)
		spec = cfg.spec

		rejections = sum(1 for o in outcomes if o.reject)
		power_lower, power_upper = clopper_pearson(rejections, R)
		fields = dict(
			setting=cfg.setting,
			beta=cfg.beta,
			method=method,
			n=cfg.n,
			K=spec.K,
			k=spec.k,
			mk=spec.mk,
			replications=R,
			true_ece_sq=truth,
			sigma1_sq=sigma1_sq,
			mean_statistic=math.fsum(o.statistic for o in outcomes) / R,
			power=rejections / R,
			power_lower=power_lower,
			power_upper=power_upper,
			seconds=seconds
		)

		if outcomes[0].interval is not None:
			covered = sum(1 for o in outcomes if o.covers(truth))
			coverage_lower, coverage_upper = clopper_pearson(covered, R)
			widths = np.array([o.interval.width for o in outcomes])
			width_p5, width_p95 = np.percentile(widths, [5.0, 95.0])
			fields.update(
				coverage=covered / R,
				coverage_lower=coverage_lower,
				coverage_upper=coverage_upper,
				mean_width=math.fsum(widths.tolist()) / R,
				width_p5=float(width_p5),
				width_p95=float(width_p95)
			)

		if method != "adjusted" and "adjusted" in replicates[0]:
			agree = sum(1 for r in replicates if r[method].reject == r["adjusted"].reject)
			fields["agreement_with_adjusted"] = agree / R

		return ExperimentRow(**fields)


def _with_methods(config: ExperimentConfig, allowed: Sequence[Method]) -> ExperimentConfig:
	methods = [m for m in config.methods if m in allowed] or ["adjusted"]
	return config.model_copy(update={"methods": methods})


def run_coverage(
	grids: Sequence[GridSpec],
	methods: Sequence[Method] = COVERAGE_METHODS,
	R: int = 1000,
	alpha: float = 0.1,
	seed: int = 0,
	pool: Optional[ReplicationPool] = None,
	**kwargs
) -> ExperimentResult:
	"""Coverage of the true ECE^2 and interval widths for the interval methods"""
	config = ExperimentConfig(grids=list(grids), methods=list(methods), reps=R, alpha=alpha, seed=seed, **kwargs)
	return ExperimentRunner(_with_methods(config, COVERAGE_METHODS), pool).run()


def run_power(
	grids: Sequence[GridSpec],
	methods: Sequence[Method] = POWER_METHODS,
	R: int = 1000,
	alpha: float = 0.1,
	seed: int = 0,
	pool: Optional[ReplicationPool] = None,
	**kwargs
) -> ExperimentResult:
	"""Rejection rates of the calibration tests; interval methods reject when 0 is outside the interval"""
	config = ExperimentConfig(grids=list(grids), methods=list(methods), reps=R, alpha=alpha, seed=seed, **kwargs)
	return ExperimentRunner(config, pool).run()


# ====================
# Result files
# ====================

def _csv_value(value) -> str:
	if value is None:
		return ""
	if isinstance(value, float):
		return repr(value)
	return str(value)


def write_results_csv(result: ExperimentResult, path: str, timings: bool = False) -> None:
	"""One row per (setting, beta, method); wall-clock seconds only when timings is set"""
	columns = CSV_COLUMNS + (["seconds"] if timings else [])
	Path(path).parent.mkdir(parents=True, exist_ok=True)
	with open(path, "w", newline="", encoding="utf-8") as f:
		writer = csv.writer(f, lineterminator="\n")
		writer.writerow(columns)
		for row in result.rows:
			data = row.model_dump()
			writer.writerow([_csv_value(data[column]) for column in columns])
	logger.info(f"Wrote {len(result.rows)} result rows to {path}")


def write_results_json(result: ExperimentResult, path: str, timings: bool = False) -> None:
	exclude = None if timings else {"rows": {"__all__": {"seconds"}}}
	document = result.model_dump(mode="json", exclude=exclude)
	Path(path).parent.mkdir(parents=True, exist_ok=True)
	with open(path, "w", encoding="utf-8") as f:
		json.dump(document, f, indent=2, sort_keys=True)
		f.write("\n")
	logger.info(f"Wrote experiment result to {path}")
