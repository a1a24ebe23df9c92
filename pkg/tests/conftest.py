import numpy as np
import pytest

from models.schemas import Dataset, PartitionSpec
from services.binning import assign_bin
from services.topk import topk_project, validate_dataset


def random_dataset(rng: np.random.Generator, n: int, K: int) -> Dataset:
	"""Dirichlet predictions with labels drawn from a perturbed version of them"""
	probs = rng.dirichlet(np.ones(K), size=n)
	noisy = rng.dirichlet(np.ones(K), size=n)
	mix = 0.7 * probs + 0.3 * noisy
	labels = np.array([rng.choice(K, p=row / row.sum()) for row in mix])
	return validate_dataset(probs, labels)


def random_fixture(seed: int):
	"""Small dataset and a compatible partition, as used by the brute-force comparisons"""
	rng = np.random.default_rng(seed)
	K = int(rng.integers(2, 6))
	k = int(rng.integers(1, min(2, K) + 1))
	if k == K and K > 2:
		k = 1
	n = int(rng.integers(2, 51))
	m = int(rng.integers(1, 5))
	return random_dataset(rng, n, K), PartitionSpec(K=K, k=k, m=m)


def _bins(d: Dataset, spec: PartitionSpec):
	view = topk_project(d, spec.k)
	groups = {}
	for i in range(view.n):
		groups.setdefault(assign_bin(view.z_top[i], spec), []).append(i)
	return view, groups


def brute_force_statistic(d: Dataset, spec: PartitionSpec, weighting: str = "debiased") -> float:
	"""Double loop over ordered pairs a != b inside each bin"""
	view, groups = _bins(d, spec)
	total = 0.0
	for members in groups.values():
		N = len(members)
		pair_sum = 0.0
		for a in members:
			for b in members:
				if a != b:
					pair_sum += float(np.dot(view.u[a], view.u[b]))
		if weighting == "debiased":
			if N >= 2:
				total += pair_sum / (N - 1)
		else:
			total += pair_sum / N
	return total / d.n


def direct_sigma1_hat_sq(d: Dataset, spec: PartitionSpec) -> float:
	"""Plug-in variance evaluated bin by bin from explicit means and covariances"""
	view, groups = _bins(d, spec)
	n = d.n
	fourth = second = cross = 0.0
	for members in groups.values():
		u = view.u[members]
		mean = u.mean(axis=0)
		cov = (u.T @ u) / len(members) - np.outer(mean, mean)
		weight = len(members) / n
		norm_sq = float(mean @ mean)
		fourth += weight * norm_sq ** 2
		second += weight * norm_sq
		cross += weight * float(mean @ cov @ mean)
	return fourth - second ** 2 + 4.0 * cross


@pytest.fixture
def rng():
	return np.random.default_rng(12345)


@pytest.fixture
def pair_dataset():
	"""Two identical examples with U = 0.5 in one bin"""
	return validate_dataset([[0.5, 0.5], [0.5, 0.5]], [0, 0])


@pytest.fixture
def three_class_dataset():
	probs = [
		[0.6, 0.3, 0.1],
		[0.2, 0.5, 0.3],
		[0.4, 0.4, 0.2],
		[0.1, 0.1, 0.8],
	]
	return validate_dataset(probs, [0, 2, 1, 2])


@pytest.fixture
def write_csv(tmp_path):
	def write(text: str, name: str = "preds.csv"):
		path = tmp_path / name
		path.write_text(text, encoding="utf-8")
		return str(path)
	return write
