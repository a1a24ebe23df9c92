import math

import numpy as np
import pytest

from models.errors import ConfigError
from models.schemas import PartitionSpec
from services.estimator import bin_stats
from services.generators import (
	gen_setting1, gen_setting2, gen_setting3, generate, link, setting3_rank_probabilities,
	sigma1_sq_oracle, true_ece_sq, uniform_simplex
)
from services.topk import rank_order, topk_project
from services.variance import sigma1_hat_sq


class TestLink:
	def test_identity_at_one(self):
		z = np.linspace(0.01, 0.99, 7)
		np.testing.assert_allclose(link(z, 1.0), z, atol=1e-12)

	def test_constant_at_zero(self):
		np.testing.assert_array_equal(link(np.array([0.0, 0.3, 1.0]), 0.0), [0.5, 0.5, 0.5])

	def test_symmetry(self):
		z = np.linspace(0.05, 0.95, 10)
		np.testing.assert_allclose(link(1 - z, 0.4), 1 - link(z, 0.4), atol=1e-12)


class TestGenerators:
	def test_shapes_and_determinism(self):
		a = gen_setting1(50, 0.5, np.random.default_rng(0))
		b = gen_setting1(50, 0.5, np.random.default_rng(0))
		assert a.probs.shape == (50, 2)
		np.testing.assert_array_equal(a.probs, b.probs)
		np.testing.assert_array_equal(a.labels, b.labels)

	def test_setting3_shape(self):
		d = gen_setting3(100, 0.05, np.random.default_rng(0))
		assert d.probs.shape == (100, 10)
		np.testing.assert_allclose(d.probs.sum(axis=1), 1.0, atol=1e-12)

	def test_dispatch(self):
		d = generate(2, 30, 0.3, np.random.default_rng(1))
		assert d.K == 2

	@pytest.mark.parametrize("setting, beta", [(1, 1.5), (2, -0.1), (3, 0.2)])
	def test_beta_out_of_range(self, setting, beta):
		with pytest.raises(ConfigError):
			generate(setting, 10, beta, np.random.default_rng(0))

	def test_setting1_link_frequency(self):
		d = gen_setting1(1_000_000, 0.5, np.random.default_rng(42))
		z1 = d.probs[:, 0]
		window = (z1 >= 0.79) & (z1 <= 0.81)
		hits = (d.labels[window] == 0).astype(float)
		se = hits.std(ddof=1) / math.sqrt(hits.size)
		assert abs(hits.mean() - float(link(np.array(0.8), 0.5))) < 4 * se + 0.002

	def test_setting2_mean(self):
		d = gen_setting2(200_000, 1.0, np.random.default_rng(5))
		z1 = d.probs[:, 0]
		se = z1.std(ddof=1) / math.sqrt(z1.size)
		assert abs(z1.mean() - 5 / 5.5) < 4 * se
		assert np.all((z1 >= 0.0) & (z1 <= 1.0))

	def test_uniform_simplex_marginals(self):
		z = uniform_simplex(200_000, 10, np.random.default_rng(9))
		se = z.std(axis=0, ddof=1) / math.sqrt(z.shape[0])
		assert np.all(np.abs(z.mean(axis=0) - 0.1) < 4 * se)

	def test_rank_probabilities_sum_to_one(self):
		z = uniform_simplex(1000, 10, np.random.default_rng(2))
		z_sorted = np.take_along_axis(z, rank_order(z), axis=1)
		p = setting3_rank_probabilities(z_sorted, 0.1)
		np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
		assert np.all(p >= 0.0)

	def test_setting3_top_class_frequency(self):
		beta = 0.1
		d = gen_setting3(200_000, beta, np.random.default_rng(8))
		view = topk_project(d, 2)
		mean_u = view.u.mean(axis=0)
		se = view.u.std(axis=0, ddof=1) / math.sqrt(d.n)
		np.testing.assert_array_less(np.abs(mean_u - np.array([-beta, beta])), 4 * se)


class TestTrueEce:
	def test_calibrated_points(self):
		assert true_ece_sq(1, 1.0) == 0.0
		assert true_ece_sq(2, 1.0) == 0.0
		assert true_ece_sq(3, 0.0) == 0.0

	def test_constant_link(self):
		assert true_ece_sq(1, 0.0) == pytest.approx(1 / 12, rel=1e-9)

	def test_constant_link_under_beta_law(self):
		# E[(1/2 - Z)^2] with E Z = 10/11 and E Z^2 = 30 / (5.5 * 6.5)
		expected = 0.25 - 10 / 11 + 30 / (5.5 * 6.5)
		assert true_ece_sq(2, 0.0) == pytest.approx(expected, rel=1e-8)

	def test_setting3_closed_form(self):
		assert true_ece_sq(3, 0.1) == pytest.approx(0.02)
		assert true_ece_sq(3, 0.05) == pytest.approx(0.005)

	def test_matches_monte_carlo(self):
		z = np.random.default_rng(0).random(2_000_000)
		gap_sq = (link(z, 0.5) - z) ** 2
		se = gap_sq.std(ddof=1) / math.sqrt(z.size)
		assert abs(gap_sq.mean() - true_ece_sq(1, 0.5)) < 4 * se


class TestSigma1Oracle:
	def test_setting3_value(self):
		assert sigma1_sq_oracle(3, 0.05) == pytest.approx(0.0047761, abs=1e-7)

	def test_calibrated_is_zero(self):
		assert sigma1_sq_oracle(1, 1.0) == pytest.approx(0.0, abs=1e-12)
		assert sigma1_sq_oracle(3, 0.0) == 0.0

	def test_settings_1_and_2_positive(self):
		assert sigma1_sq_oracle(1, 0.5) > 0.0
		assert sigma1_sq_oracle(2, 0.5) > 0.0

	@pytest.mark.slow
	def test_plug_in_estimate_converges(self):
		spec = PartitionSpec.from_mk(20, K=10, k=2)
		oracle = sigma1_sq_oracle(3, 0.05)

		def median_error(n, reps):
			errors = []
			for rep in range(reps):
				d = gen_setting3(n, 0.05, np.random.default_rng(rep))
				stats = bin_stats(topk_project(d, 2), spec)
				errors.append(abs(sigma1_hat_sq(stats, n) - oracle) / oracle)
			return float(np.median(errors))

		small, large = median_error(1_000, 5), median_error(100_000, 5)
		assert large < small
		assert large < 0.10
