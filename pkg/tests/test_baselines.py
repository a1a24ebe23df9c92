import numpy as np
import pytest

from models.errors import SubsampleTooSmall, TooFewExamples
from models.schemas import InferenceOptions, PartitionSpec, ResampleConfig
from services.baselines import (
	bootstrap_ci, default_subsample_size, hulc_ci, hulc_fold_estimates, hulc_folds, hulc_splits,
	subsampling_ci
)
from services.calibration_service import CalibrationService
from services.generators import gen_setting1
from services.replication import ReplicationPool

PARTITION = PartitionSpec.from_mk(50, K=2, k=1)


@pytest.fixture
def dataset():
	return gen_setting1(400, 0.5, np.random.default_rng(11))


class TestHulcSplits:
	@pytest.mark.parametrize("alpha, splits", [(0.1, 5), (0.05, 6), (0.5, 2)])
	def test_median_unbiased(self, alpha, splits):
		assert hulc_splits(alpha) == splits

	@pytest.mark.parametrize("delta, splits", [(0.1, 5), (0.2, 7)])
	def test_median_bias_needs_more_splits(self, delta, splits):
		assert hulc_splits(0.1, delta) == splits


class TestHulc:
	def test_interval_is_hull_of_fold_estimates(self, dataset):
		estimates = hulc_fold_estimates(dataset, 1, PARTITION, 0.1, seed=3)
		interval = hulc_ci(dataset, 1, PARTITION, 0.1, seed=3)
		assert len(estimates) == 5
		assert interval.lower == min(estimates)
		assert interval.upper == max(estimates)
		assert interval.method == "hulc"

	def test_too_few_examples(self, dataset):
		with pytest.raises(TooFewExamples):
			hulc_ci(dataset.subset(np.arange(3)), 1, PARTITION, 0.1)

	@pytest.mark.parametrize("n, splits", [(400, 5), (403, 5), (13, 6), (7, 7)])
	def test_folds_partition_the_rows(self, n, splits):
		folds = hulc_folds(n, splits, np.random.default_rng(n))
		sizes = [len(fold) for fold in folds]
		assert len(folds) == splits
		assert max(sizes) - min(sizes) <= 1
		assert sorted(np.concatenate(folds).tolist()) == list(range(n))


class TestBootstrap:
	def test_deterministic_across_threads(self, dataset):
		cfg = ResampleConfig(method="bootstrap", replications=200, seed=5)
		sequential = bootstrap_ci(dataset, 1, PARTITION, cfg)
		threaded = bootstrap_ci(dataset, 1, PARTITION, cfg, ReplicationPool(threads=4, batch_size=7))
		assert sequential == threaded
		assert sequential.lower <= sequential.upper


class TestSubsampling:
	def test_default_size(self):
		assert default_subsample_size(1000) == 31

	def test_interval_ordered(self, dataset):
		cfg = ResampleConfig(method="subsampling", replications=200, seed=2)
		interval = subsampling_ci(dataset, 1, PARTITION, cfg)
		assert interval.lower <= interval.upper

	def test_linear_rate_is_narrower_than_root_rate(self, dataset):
		root = subsampling_ci(dataset, 1, PARTITION, ResampleConfig(method="subsampling", replications=200, seed=2))
		linear = subsampling_ci(
			dataset, 1, PARTITION, ResampleConfig(method="subsampling", replications=200, seed=2, rate="n")
		)
		assert linear.width < root.width

	def test_subsample_larger_than_n(self, dataset):
		cfg = ResampleConfig(method="subsampling", subsample_size=401)
		with pytest.raises(SubsampleTooSmall):
			subsampling_ci(dataset, 1, PARTITION, cfg)

	def test_config_rejects_tiny_subsample(self):
		with pytest.raises(SubsampleTooSmall):
			ResampleConfig(method="subsampling", subsample_size=1)


def _calibrated_study(method, reps, **option_overrides):
	"""Coverage of ECE^2 = 0 and mean width under Setting 1 with beta = 1"""
	service = CalibrationService(InferenceOptions(k=1, mk=50, **option_overrides))
	covered, widths = 0, []
	for rep in range(reps):
		d = gen_setting1(1000, 1.0, np.random.default_rng(1000 + rep))
		outcome = service.evaluate(d, [method], PARTITION, seed=rep)[method]
		covered += int(outcome.covers(0.0))
		widths.append(outcome.interval.width)
	return covered / reps, float(np.mean(widths))


@pytest.mark.slow
def test_percentile_bootstrap_undercovers_a_calibrated_model():
	coverage, _ = _calibrated_study("bootstrap", 100, boot_reps=200)
	assert coverage < 0.88


@pytest.mark.slow
def test_adjusted_interval_is_narrower_at_the_calibrated_point():
	_, adjusted = _calibrated_study("adjusted", 50)
	_, subsampling = _calibrated_study("subsampling", 50, subsample_reps=200)
	_, hulc = _calibrated_study("hulc", 50)
	assert subsampling > 1.5 * adjusted
	assert hulc > 1.5 * adjusted
