import math
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from models.errors import ConfigError
from models.schemas import (
	AdjustedInterval, BETA_RANGES, ConfidenceInterval, EstimateValue, SettingConfig, VarianceEstimates
)

Method = Literal["adjusted", "bootstrap", "subsampling", "hulc", "tcal"]


def finite_or_none(value: Any) -> Any:
	"""Map NaN and infinities to None, recursively through lists and dicts"""
	if isinstance(value, float) and not math.isfinite(value):
		return None
	if isinstance(value, dict):
		return {key: finite_or_none(item) for key, item in value.items()}
	if isinstance(value, (list, tuple)):
		return [finite_or_none(item) for item in value]
	return value


class EstimateReport(BaseModel):
	model_config = ConfigDict(frozen=True)

	estimate: EstimateValue
	variances: VarianceEstimates
	ci_squared: AdjustedInterval
	ci_root: Tuple[float, float]
	p_value_calibrated: float
	reject_at_alpha: bool

	@model_validator(mode="after")
	def check_coherence(self) -> "EstimateReport":
		if self.reject_at_alpha == self.ci_squared.contains(0.0):
			raise ValueError("test decision disagrees with zero membership of the interval")
		lower, upper = self.ci_root
		if not (math.isclose(lower ** 2, self.ci_squared.lower, abs_tol=1e-15)
				and math.isclose(upper ** 2, self.ci_squared.upper, abs_tol=1e-15)):
			raise ValueError("root interval is not the square root of the squared interval")
		return self


class MethodOutcome(BaseModel):
	"""What one inference method concluded on one dataset"""
	model_config = ConfigDict(frozen=True)

	method: Method
	interval: Optional[Union[AdjustedInterval, ConfidenceInterval]] = None
	statistic: float
	threshold: Optional[float] = None
	reject: bool

	def covers(self, value: float) -> Optional[bool]:
		if self.interval is None:
			return None
		return self.interval.contains(value)


# ====================
# Machine-readable report of the compute command
# ====================

class IntervalRecord(BaseModel):
	lower: Optional[float]
	upper: Optional[float]
	includes_zero: bool = False
	excludes_zero_point: bool = False
	case_tag: Optional[str] = None
	degenerate_variance: bool = False


class BaselineRecord(BaseModel):
	method: str
	lower: Optional[float] = None
	upper: Optional[float] = None
	statistic: Optional[float] = None
	threshold: Optional[float] = None
	reject: Optional[bool] = None
	details: Dict[str, Any] = {}


class ReportDocument(BaseModel):
	schema_version: int
	tool_version: str
	input_digest: str
	config: Dict[str, Any]

	n: int
	K: int
	k: int
	m: int
	mk: int
	w: Optional[float]

	t: Optional[float]
	t_plus: Optional[float]
	sqrt_t_plus: Optional[float]
	sigma0_sq: Optional[float]
	sigma0: Optional[float]
	sigma1_hat_sq: Optional[float]
	sigma1_hat: Optional[float]

	ci_squared: IntervalRecord
	ci_root: List[Optional[float]]
	p_value_calibrated: Optional[float]
	reject_at_alpha: bool

	baseline: Optional[BaselineRecord] = None
	warnings: List[str] = []

	@model_validator(mode="before")
	@classmethod
	def null_non_finite(cls, data: Any) -> Any:
		return finite_or_none(data) if isinstance(data, dict) else data


# ====================
# Simulation experiments
# ====================

def default_betas(setting: int) -> List[float]:
	low, high = BETA_RANGES[setting]
	return [float(b) for b in np.round(np.linspace(low, high, 21), 10)]


class GridSpec(BaseModel):
	setting: Literal[1, 2, 3]
	betas: Optional[List[float]] = None
	n: int = 1000
	mk: Optional[int] = None
	k: Optional[int] = None

	def configs(self) -> List[SettingConfig]:
		betas = self.betas if self.betas is not None else default_betas(self.setting)
		return [
			SettingConfig(setting=self.setting, beta=beta, n=self.n, mk=self.mk, k=self.k)
			for beta in betas
		]


class ExperimentConfig(BaseModel):
	grids: List[GridSpec]
	methods: List[Method] = ["adjusted"]
	reps: int = 1000
	alpha: float = 0.1
	seed: int = 0
	boot_reps: int = 1000
	subsample_reps: int = 1000
	subsample_size: Optional[int] = None
	subsample_rate: Literal["sqrt_n", "n"] = "sqrt_n"
	hulc_delta: float = 0.0
	tcal_reps: int = 1000

	@model_validator(mode="after")
	def check_values(self) -> "ExperimentConfig":
		if not self.grids:
			raise ConfigError("experiment config needs at least one grid")
		if self.reps < 1:
			raise ConfigError(f"reps must be >= 1, got {self.reps}")
		if not 0.0 < self.alpha < 1.0:
			raise ConfigError(f"alpha={self.alpha} outside (0, 1)")
		if "tcal" in self.methods and self.tcal_reps < 100:
			raise ConfigError(f"tcal_reps must be >= 100, got {self.tcal_reps}")
		return self


class ExperimentRow(BaseModel):
	setting: int
	beta: float
	method: str
	n: int
	K: int
	k: int
	mk: int
	replications: int
	true_ece_sq: float
	sigma1_sq: Optional[float] = None
	mean_statistic: Optional[float] = None
	coverage: Optional[float] = None
	coverage_lower: Optional[float] = None
	coverage_upper: Optional[float] = None
	mean_width: Optional[float] = None
	width_p5: Optional[float] = None
	width_p95: Optional[float] = None
	power: float
	power_lower: float
	power_upper: float
	agreement_with_adjusted: Optional[float] = None
	seconds: Optional[float] = None

	@model_validator(mode="after")
	def check_bounds(self) -> "ExperimentRow":
		if self.coverage is not None:
			if not (0.0 <= self.coverage_lower <= self.coverage <= self.coverage_upper <= 1.0):
				raise ValueError("coverage outside its Clopper-Pearson bounds")
		if not (0.0 <= self.power_lower <= self.power <= self.power_upper <= 1.0):
			raise ValueError("power outside its Clopper-Pearson bounds")
		return self


class ExperimentResult(BaseModel):
	config: ExperimentConfig
	rows: List[ExperimentRow]

	def row(self, setting: int, beta: float, method: str) -> ExperimentRow:
		for row in self.rows:
			if row.setting == setting and row.method == method and math.isclose(row.beta, beta):
				return row
		raise KeyError(f"no row for setting={setting}, beta={beta}, method={method}")
