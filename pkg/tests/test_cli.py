import csv
import json

import numpy as np
import pytest

import main
from services.generators import gen_setting1

SMALL_GRID = """
methods = ["adjusted", "tcal"]
reps = 4
tcal_reps = 100
seed = 1

[[grids]]
setting = 1
betas = [0.5, 1.0]
n = 200
mk = 20
"""


def write_predictions(path, n=300, beta=0.5, seed=0):
	d = gen_setting1(n, beta, np.random.default_rng(seed))
	with open(path, "w", newline="") as f:
		writer = csv.writer(f)
		writer.writerow(["z_1", "z_2", "label"])
		for z, y in zip(d.probs, d.labels):
			writer.writerow([repr(float(z[0])), repr(float(z[1])), int(y)])
	return str(path)


@pytest.fixture
def predictions(tmp_path):
	return write_predictions(tmp_path / "preds.csv")


class TestCompute:
	def test_report_on_stdout(self, predictions, capsys):
		assert main.main(["compute", "--input", predictions, "--mk", "20"]) == 0
		report = json.loads(capsys.readouterr().out)
		assert report["n"] == 300 and report["K"] == 2
		assert report["mk"] == 20 and report["w"] == pytest.approx(1 / 20)
		assert report["config"]["m_rule"] == "explicit"
		assert report["input_digest"].startswith("sha256:")
		assert report["ci_squared"]["case_tag"] in ("wide", "punctured", "half-width")
		assert report["baseline"] is None

	def test_bin_count_rule_when_mk_is_omitted(self, predictions, capsys):
		assert main.main(["compute", "--input", predictions]) == 0
		report = json.loads(capsys.readouterr().out)
		assert report["config"]["m_rule"] == "choose_m"
		assert report["m"] >= 1

	def test_same_seed_same_bytes(self, predictions, tmp_path):
		first, second = tmp_path / "a" / "report.json", tmp_path / "b" / "report.json"
		args = ["compute", "--input", predictions, "--mk", "20", "--method", "bootstrap", "--boot-reps", "200"]
		assert main.main(args + ["--out", str(first)]) == 0
		assert main.main(args + ["--out", str(second), "--threads", "3"]) == 0
		assert first.read_bytes() == second.read_bytes()

	def test_hulc_baseline_warns(self, predictions, tmp_path):
		out = tmp_path / "report.json"
		assert main.main(["compute", "--input", predictions, "--mk", "20", "--method", "hulc", "--out", str(out)]) == 0
		report = json.loads(out.read_text())
		assert report["baseline"]["method"] == "hulc"
		assert report["baseline"]["details"]["splits"] == 5
		assert any("HulC" in warning for warning in report["warnings"])

	def test_depth_larger_than_classes(self, predictions, capsys):
		assert main.main(["compute", "--input", predictions, "--k", "5"]) == 2
		assert "depth" in capsys.readouterr().err

	def test_invalid_level(self, predictions):
		assert main.main(["compute", "--input", predictions, "--alpha", "1.5"]) == 2

	def test_malformed_input(self, tmp_path, capsys):
		path = tmp_path / "bad.csv"
		path.write_text("z_1,z_2,label\n0.5,0.5,0\n0.5,oops,1\n")
		assert main.main(["compute", "--input", str(path)]) == 2
		assert "line 3" in capsys.readouterr().err

	def test_unknown_method_is_a_usage_error(self, predictions):
		with pytest.raises(SystemExit) as excinfo:
			main.main(["compute", "--input", predictions, "--method", "jackknife"])
		assert excinfo.value.code == 2


class TestSimulate:
	def test_writes_result_files(self, tmp_path):
		config = tmp_path / "grid.toml"
		config.write_text(SMALL_GRID)
		out = tmp_path / "results"
		assert main.main(["simulate", "--config", str(config), "--out", str(out)]) == 0
		rows = list(csv.DictReader((out / "results.csv").open()))
		assert len(rows) == 4
		assert "seconds" not in rows[0]
		document = json.loads((out / "results.json").read_text())
		assert len(document["rows"]) == 4

	def test_reps_override(self, tmp_path):
		config = tmp_path / "grid.toml"
		config.write_text(SMALL_GRID)
		out = tmp_path / "results"
		assert main.main(["simulate", "--config", str(config), "--out", str(out), "--reps", "2"]) == 0
		rows = list(csv.DictReader((out / "results.csv").open()))
		assert {row["replications"] for row in rows} == {"2"}

	def test_missing_config(self, tmp_path):
		assert main.main(["simulate", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 2


@pytest.mark.slow
def test_calibrated_files_mostly_include_zero(tmp_path):
	included = 0
	for seed in range(100):
		predictions = write_predictions(tmp_path / f"preds_{seed}.csv", n=1000, beta=1.0, seed=seed)
		out = tmp_path / f"report_{seed}.json"
		assert main.main(["compute", "--input", predictions, "--mk", "50", "--out", str(out)]) == 0
		included += json.loads(out.read_text())["ci_squared"]["includes_zero"]
	assert included >= 80
