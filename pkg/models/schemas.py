import math
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

from config import settings
from models.errors import (
	ConfigError, DepthOutOfRange, DimensionMismatch, InvalidLevel, SubsampleTooSmall,
	UnsupportedPartition
)

# Hypercube index (i_1, ..., i_k) of a cell in the cubic partition
BinKey = Tuple[int, ...]


class ArrayModel(BaseModel):
	"""Immutable value type that carries numpy arrays"""
	model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class Dataset(ArrayModel):
	probs: np.ndarray
	labels: np.ndarray

	@property
	def n(self) -> int:
		return int(self.probs.shape[0])

	@property
	def K(self) -> int:
		return int(self.probs.shape[1])

	def subset(self, index: np.ndarray) -> "Dataset":
		return Dataset(probs=self.probs[index], labels=self.labels[index])


class TopKView(ArrayModel):
	k: int
	z_top: np.ndarray
	y_top: np.ndarray
	u: np.ndarray

	@property
	def n(self) -> int:
		return int(self.z_top.shape[0])


class PartitionSpec(BaseModel):
	"""Cubic partition of the truncated Weyl chamber with cell side 1/(mK)"""
	model_config = ConfigDict(frozen=True)

	K: int
	k: int
	m: int

	@model_validator(mode="after")
	def check_geometry(self) -> "PartitionSpec":
		if self.K < 2:
			raise DimensionMismatch(f"need at least 2 classes, got K={self.K}")
		if not 1 <= self.k <= self.K:
			raise DepthOutOfRange(f"depth k={self.k} outside [1, {self.K}]")
		if self.k == self.K and self.K > 2:
			raise UnsupportedPartition(
				f"k = K = {self.K} needs the equal-volume simplex partition, which is not provided"
			)
		if self.m < 1:
			raise ConfigError(f"resolution m must be a positive integer, got {self.m}")
		return self

	@classmethod
	def from_mk(cls, mk: int, K: int, k: int) -> "PartitionSpec":
		if mk < K or mk % K != 0:
			raise ConfigError(f"mK={mk} must be a positive multiple of K={K}")
		return cls(K=K, k=k, m=mk // K)

	@property
	def mk(self) -> int:
		return self.m * self.K

	@property
	def side(self) -> float:
		return 1.0 / self.mk

	@property
	def w(self) -> float:
		return self.side ** self.k

	@property
	def null_volume(self) -> float:
		"""Cell volume entering the calibrated-model scaling n sqrt(w) T / sigma0"""
		if self.k == self.K:
			# Delta(2, 2) is a segment parametrized by its top coordinate
			return self.side
		return self.w


class BinStats(ArrayModel):
	"""Sufficient statistics of U for every non-empty bin, rows ordered by BinKey"""
	spec: PartitionSpec
	cells: np.ndarray
	counts: np.ndarray
	sum_u: np.ndarray
	sum_usq: np.ndarray
	sum_uut: np.ndarray

	@property
	def n_bins(self) -> int:
		return int(self.counts.shape[0])

	@property
	def n(self) -> int:
		return int(self.counts.sum())

	@property
	def mean_u(self) -> np.ndarray:
		return self.sum_u / self.counts[:, None]

	@property
	def cov_u(self) -> np.ndarray:
		mean = self.mean_u
		second = self.sum_uut / self.counts[:, None, None]
		return second - mean[:, :, None] * mean[:, None, :]


class EstimateValue(BaseModel):
	model_config = ConfigDict(frozen=True)

	t: float
	n: int
	spec: PartitionSpec

	@computed_field
	@property
	def t_plus(self) -> float:
		return max(self.t, 0.0)


class VarianceEstimates(BaseModel):
	model_config = ConfigDict(frozen=True)

	sigma0_sq: float
	sigma1_hat_sq: float

	@computed_field
	@property
	def sigma0(self) -> float:
		return math.sqrt(self.sigma0_sq)

	@computed_field
	@property
	def sigma1_hat(self) -> float:
		return math.sqrt(max(self.sigma1_hat_sq, 0.0))


class ConfidenceInterval(BaseModel):
	"""Closed interval [lower, upper] produced by a resampling baseline"""
	model_config = ConfigDict(frozen=True)

	lower: float
	upper: float
	method: str

	def contains(self, x: float) -> bool:
		return self.lower <= x <= self.upper

	@property
	def width(self) -> float:
		return self.upper - self.lower


class AdjustedInterval(ConfidenceInterval):
	"""
	Non-negativity aware interval around T+.

	The set is [lower, upper], minus the point 0 when excludes_zero_point,
	plus the point 0 when includes_zero (the zero-inclusion rule fired).
	"""
	method: str = "adjusted"
	excludes_zero_point: bool = False
	includes_zero: bool = False
	case_tag: Literal["wide", "punctured", "half-width"]
	alpha: float
	degenerate_variance: bool = False

	@model_validator(mode="after")
	def check_flags(self) -> "AdjustedInterval":
		if self.excludes_zero_point and self.includes_zero:
			raise ValueError("an interval cannot both exclude and include zero")
		return self

	def contains(self, x: float) -> bool:
		if x == 0.0:
			if self.includes_zero:
				return True
			if self.excludes_zero_point:
				return False
		return self.lower <= x <= self.upper


class ResampleConfig(BaseModel):
	model_config = ConfigDict(frozen=True)

	method: Literal["bootstrap", "subsampling", "hulc"]
	replications: int = 1000
	subsample_size: Optional[int] = None
	rate: Literal["sqrt_n", "n"] = "sqrt_n"
	alpha: float = 0.1
	seed: int = 0
	delta: float = 0.0

	@model_validator(mode="after")
	def check_ranges(self) -> "ResampleConfig":
		if self.replications < 1:
			raise ConfigError(f"replications must be >= 1, got {self.replications}")
		if not 0.0 < self.alpha < 1.0:
			raise InvalidLevel(f"alpha={self.alpha} outside (0, 1)")
		if self.subsample_size is not None and self.subsample_size < 2:
			raise SubsampleTooSmall(f"subsample size {self.subsample_size} < 2")
		if not 0.0 <= self.delta < 0.5:
			raise ConfigError(f"median bias delta={self.delta} outside [0, 1/2)")
		return self


# Defaults per simulation setting: (K, k, mK)
SETTING_DEFAULTS = {
	1: (2, 1, 50),
	2: (2, 1, 50),
	3: (10, 2, 20),
}

BETA_RANGES = {
	1: (0.0, 1.0),
	2: (0.0, 1.0),
	3: (0.0, 0.1),
}


class SettingConfig(BaseModel):
	model_config = ConfigDict(frozen=True)

	setting: Literal[1, 2, 3]
	beta: float
	n: int = 1000
	mk: Optional[int] = None
	k: Optional[int] = None
	K: Optional[int] = None

	@model_validator(mode="after")
	def fill_defaults(self) -> "SettingConfig":
		K, k, mk = SETTING_DEFAULTS[self.setting]
		# frozen model: defaults are filled through object.__setattr__
		if self.K is None:
			object.__setattr__(self, "K", K)
		if self.k is None:
			object.__setattr__(self, "k", k)
		if self.mk is None:
			object.__setattr__(self, "mk", mk)
		if self.K != K:
			raise ConfigError(f"setting {self.setting} is defined for K={K}, got K={self.K}")
		low, high = BETA_RANGES[self.setting]
		if not low <= self.beta <= high:
			raise ConfigError(f"beta={self.beta} outside [{low}, {high}] for setting {self.setting}")
		if self.n < 2:
			raise ConfigError(f"sample size n={self.n} must be at least 2")
		return self

	@property
	def spec(self) -> PartitionSpec:
		return PartitionSpec.from_mk(self.mk, self.K, self.k)


class InferenceOptions(BaseModel):
	"""Knobs shared by the compute command and the experiment runners"""
	model_config = ConfigDict(frozen=True)

	k: int = 1
	mk: Optional[int] = None
	alpha: float = Field(default_factory=lambda: settings.ALPHA)
	seed: int = Field(default_factory=lambda: settings.SEED)
	smoothness: float = Field(default_factory=lambda: settings.M_SMOOTHNESS)
	m_constant: float = Field(default_factory=lambda: settings.M_CONSTANT)
	boot_reps: int = Field(default_factory=lambda: settings.BOOT_REPS)
	subsample_reps: int = Field(default_factory=lambda: settings.SUBSAMPLE_REPS)
	subsample_size: Optional[int] = None
	subsample_rate: Literal["sqrt_n", "n"] = Field(default_factory=lambda: settings.SUBSAMPLE_RATE)
	hulc_delta: float = Field(default_factory=lambda: settings.HULC_DELTA)
	tcal_reps: int = Field(default_factory=lambda: settings.TCAL_REPS)

	@model_validator(mode="after")
	def check_values(self) -> "InferenceOptions":
		if self.k < 1:
			raise DepthOutOfRange(f"depth k={self.k} must be positive")
		if not 0.0 < self.alpha < 1.0:
			raise InvalidLevel(f"alpha={self.alpha} outside (0, 1)")
		if self.smoothness <= 0.0 or self.m_constant <= 0.0:
			raise ConfigError("smoothness and m-constant must be positive")
		if self.mk is not None and self.mk < 1:
			raise ConfigError(f"mK={self.mk} must be positive")
		return self

	def resample_config(self, method: str, seed: Optional[int] = None) -> ResampleConfig:
		replications = self.boot_reps if method == "bootstrap" else self.subsample_reps
		return ResampleConfig(
			method=method,
			replications=replications,
			subsample_size=self.subsample_size,
			rate=self.subsample_rate,
			alpha=self.alpha,
			seed=self.seed if seed is None else seed,
			delta=self.hulc_delta
		)
