import logging
import math
import warnings
from typing import Callable

import numpy as np
from scipy import integrate, special

from models.errors import ConfigError, QuadratureNotConverged
from models.schemas import BETA_RANGES, Dataset
from services.topk import rank_order, validate_dataset

logger = logging.getLogger(__name__)

# Setting 2 draws the first coordinate from Beta(5, 0.5)
BETA_A = 5.0
BETA_B = 0.5
SETTING3_CLASSES = 10

QUAD_TOLERANCE = 1e-10


def _check_beta(setting: int, beta: float) -> None:
	low, high = BETA_RANGES[setting]
	if not low <= beta <= high:
		raise ConfigError(f"beta={beta} outside [{low}, {high}] for setting {setting}")


def link(z: np.ndarray, beta: float) -> np.ndarray:
	"""h_beta(z) = z^beta / (z^beta + (1 - z)^beta), the label probability of Settings 1-2"""
	z = np.asarray(z, dtype=np.float64)
	if beta == 0.0:
		return np.full_like(z, 0.5)
	with np.errstate(divide="ignore"):
		return special.expit(beta * special.logit(z))


def _binary_dataset(z1: np.ndarray, beta: float, rng: np.random.Generator) -> Dataset:
	# class 0 is the coordinate Z_1
	hits = rng.random(z1.shape[0]) < link(z1, beta)
	probs = np.column_stack([z1, 1.0 - z1])
	labels = np.where(hits, 0, 1)
	return validate_dataset(probs, labels)


def gen_setting1(n: int, beta: float, rng: np.random.Generator) -> Dataset:
	"""K=2, Z_1 ~ Unif(0, 1), P(Y_1 = 1 | Z) = h_beta(Z_1)"""
	_check_beta(1, beta)
	return _binary_dataset(rng.random(n), beta, rng)


def gen_setting2(n: int, beta: float, rng: np.random.Generator) -> Dataset:
	"""As Setting 1 with Z_1 ~ Beta(5, 0.5)"""
	_check_beta(2, beta)
	return _binary_dataset(rng.beta(BETA_A, BETA_B, size=n), beta, rng)


def uniform_simplex(n: int, K: int, rng: np.random.Generator) -> np.ndarray:
	"""Symmetric Dirichlet(1, ..., 1) draws as normalized unit-rate exponentials"""
	draws = rng.exponential(1.0, size=(n, K))
	return draws / draws.sum(axis=1, keepdims=True)


def setting3_rank_probabilities(z_sorted: np.ndarray, beta: float) -> np.ndarray:
	"""Label distribution over ranks: top class loses beta, second gains it"""
	p = np.array(z_sorted, dtype=np.float64, copy=True)
	p[:, 0] -= beta
	p[:, 1] += beta
	return p


def gen_setting3(n: int, beta: float, rng: np.random.Generator) -> Dataset:
	"""K=10, Z ~ Unif(simplex), top-1-to-2 miscalibration of size beta"""
	_check_beta(3, beta)
	K = SETTING3_CLASSES
	z = uniform_simplex(n, K, rng)
	order = rank_order(z)
	p = setting3_rank_probabilities(np.take_along_axis(z, order, axis=1), beta)

	draws = rng.random(n)
	rank = np.minimum(np.sum(draws[:, None] >= np.cumsum(p, axis=1), axis=1), K - 1)
	labels = order[np.arange(n), rank]
	return validate_dataset(z, labels)


GENERATORS = {
	1: gen_setting1,
	2: gen_setting2,
	3: gen_setting3,
}


def generate(setting: int, n: int, beta: float, rng: np.random.Generator) -> Dataset:
	return GENERATORS[setting](n, beta, rng)


# ====================
# Ground-truth oracles
# ====================

def _quad(func: Callable[[float], float], a: float, b: float, **kwargs) -> float:
	with warnings.catch_warnings():
		warnings.simplefilter("error", integrate.IntegrationWarning)
		try:
			value, error = integrate.quad(func, a, b, epsabs=QUAD_TOLERANCE, limit=200, **kwargs)
		except integrate.IntegrationWarning as e:
			raise QuadratureNotConverged(f"adaptive quadrature did not converge: {e}")
	if not math.isfinite(value):
		raise QuadratureNotConverged("adaptive quadrature returned a non-finite value")
	return value


def _beta_weighted(g: Callable[[float], float]) -> float:
	"""E[g(Z_1)] for Z_1 ~ Beta(5, 0.5); the (1 - z)^(-1/2) singularity goes into the weight"""
	norm = special.beta(BETA_A, BETA_B)
	return _quad(g, 0.0, 1.0, weight="alg", wvar=(BETA_A - 1.0, BETA_B - 1.0)) / norm


def _gap(z: float, beta: float) -> float:
	return float(link(np.array(z), beta)) - z


def true_ece_sq(setting: int, beta: float) -> float:
	"""Squared top-1 (Settings 1-2) or top-1-to-2 (Setting 3) ECE of the generator"""
	_check_beta(setting, beta)
	if setting == 3:
		return 2.0 * beta ** 2
	if beta == 1.0:
		return 0.0

	# (h(1 - t) - (1 - t))^2 = (h(t) - t)^2, so integrating over Z_1 equals integrating over Z_(1)
	def integrand(z: float) -> float:
		return _gap(z, beta) ** 2

	if setting == 1:
		return _quad(integrand, 0.0, 1.0)
	return _beta_weighted(integrand)


def sigma1_sq_oracle(setting: int, beta: float) -> float:
	"""
	Var(||E[U|Z]||^2) + 4 E[E[U|Z]^T Cov(U|Z) E[U|Z]] for the generator.

	Settings 1-2 integrate over the law of Z_1 (the summand is symmetric in
	z -> 1 - z); Setting 3 uses the exponential-spacings representation of the
	sorted simplex coordinates.
	"""
	_check_beta(setting, beta)
	if setting == 3:
		K = SETTING3_CLASSES
		harmonic = sum(1.0 / i for i in range(1, K + 1))
		mean_top_two = (2.0 * harmonic - 1.0) / K
		gap_moment = 2.0 / (K * (K + 1)) - 4.0 * beta / K + 4.0 * beta ** 2
		return 4.0 * beta ** 2 * (mean_top_two - gap_moment)

	def second(z: float) -> float:
		return _gap(z, beta) ** 2

	def fourth(z: float) -> float:
		return _gap(z, beta) ** 4

	def cross(z: float) -> float:
		h = float(link(np.array(z), beta))
		return (h - z) ** 2 * h * (1.0 - h)

	expect = (lambda g: _quad(g, 0.0, 1.0)) if setting == 1 else _beta_weighted
	m2 = expect(second)
	return expect(fourth) - m2 ** 2 + 4.0 * expect(cross)
