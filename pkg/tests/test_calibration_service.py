import numpy as np
import pytest

from models.errors import DepthOutOfRange
from models.reports import ReportDocument
from models.schemas import InferenceOptions, PartitionSpec
from services.calibration_service import CalibrationService
from services.generators import gen_setting1


@pytest.fixture
def dataset():
	return gen_setting1(300, 0.5, np.random.default_rng(21))


class TestPartition:
	def test_explicit_mk(self, dataset):
		spec = CalibrationService(InferenceOptions(mk=20)).partition(dataset)
		assert spec == PartitionSpec(K=2, k=1, m=10)

	def test_depth_beyond_classes(self, dataset):
		with pytest.raises(DepthOutOfRange):
			CalibrationService(InferenceOptions(k=3, mk=20)).partition(dataset)


class TestCompute:
	def test_reports_the_volume_used_by_the_zero_rule(self, dataset):
		document = CalibrationService(InferenceOptions(k=2, mk=20)).compute(dataset, "sha256:0")
		# full calibration of a binary model lives on a segment
		assert document.w == pytest.approx(1 / 20)
		assert document.sigma0_sq == pytest.approx(4 / 30)

	def test_top1_volume(self, dataset):
		document = CalibrationService(InferenceOptions(k=1, mk=20)).compute(dataset, "sha256:0")
		assert document.w == pytest.approx(1 / 20)

	@pytest.mark.parametrize("method", ["adjusted", "bootstrap", "hulc", "tcal"])
	def test_json_round_trip(self, dataset, method):
		options = InferenceOptions(mk=20, boot_reps=100, tcal_reps=100)
		document = CalibrationService(options).compute(dataset, "sha256:0", method=method)
		restored = ReportDocument.model_validate_json(document.model_dump_json())
		assert restored == document

	def test_decision_matches_interval(self, dataset):
		document = CalibrationService(InferenceOptions(mk=20)).compute(dataset, "sha256:0")
		assert document.reject_at_alpha == (not document.ci_squared.includes_zero)


def test_evaluate_runs_every_method_on_one_fit(dataset):
	service = CalibrationService(InferenceOptions(mk=20, boot_reps=100, subsample_reps=100, tcal_reps=100))
	outcomes = service.evaluate(dataset, ["adjusted", "bootstrap", "subsampling", "hulc", "tcal"], seed=4)
	assert set(outcomes) == {"adjusted", "bootstrap", "subsampling", "hulc", "tcal"}
	assert outcomes["tcal"].interval is None
	assert outcomes["tcal"].threshold > 0.0
	for name in ("adjusted", "bootstrap", "subsampling", "hulc"):
		assert outcomes[name].statistic == outcomes["adjusted"].statistic
