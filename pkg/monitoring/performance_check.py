#!/usr/bin/env python3

import json
import logging
import sys
import tempfile
import time
from datetime import datetime
from pathlib import Path
from typing import Dict

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from models.schemas import InferenceOptions
from services.calibration_service import CalibrationService
from services.generators import uniform_simplex
from services.predictions_io import file_digest, parse_predictions_csv
from services.replication import replication_rng

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


class PerformanceMonitor:
	def __init__(self, n: int = 10_000, K: int = 10, seed: int = 0):
		self.n = n
		self.K = K
		self.seed = seed

	def write_export(self, path: Path) -> None:
		'''
			Write a synthetic CIFAR-style export with labels drawn from the predictions
		'''

		rng = replication_rng(self.seed, 0)
		probs = uniform_simplex(self.n, self.K, rng)
		cum = np.cumsum(probs, axis=1)
		labels = np.minimum(np.sum(rng.random(self.n)[:, None] >= cum, axis=1), self.K - 1)

		header = ",".join([f"z_{j + 1}" for j in range(self.K)] + ["label"])
		rows = [",".join(repr(float(p)) for p in z) + f",{int(y)}" for z, y in zip(probs, labels)]
		path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")

	def check_parsing(self, path: Path) -> Dict:
		'''
			Time CSV ingestion and validation
		'''

		try:
			start_time = time.time()
			dataset = parse_predictions_csv(str(path))
			total_time = time.time() - start_time
			return {
				"status": "ok",
				"rows": dataset.n,
				"parse_time_ms": total_time * 1000,
				"error": None
			}
		except Exception as e:
			return {"status": "error", "error": str(e)}

	def check_compute(self, path: Path, k: int) -> Dict:
		'''
			Time the full compute path at depth k
		'''

		try:
			dataset = parse_predictions_csv(str(path))
			service = CalibrationService(InferenceOptions(k=k, seed=self.seed))
			start_time = time.time()
			document = service.compute(dataset, file_digest(str(path)))
			total_time = time.time() - start_time
			return {
				"status": "ok",
				"k": k,
				"mk": document.mk,
				"t": document.t,
				"compute_time_ms": total_time * 1000,
				"error": None
			}
		except Exception as e:
			return {"status": "error", "error": str(e)}

	def run_full_check(self) -> Dict:
		'''
			Run every timing probe on one synthetic export
		'''

		logger.info(f"Running performance check on n={self.n}, K={self.K}...")

		results = {
			"timestamp": datetime.now().isoformat(),
			"n": self.n,
			"K": self.K,
			"checks": {}
		}

		with tempfile.TemporaryDirectory() as tmp:
			path = Path(tmp) / "predictions.csv"
			self.write_export(path)
			results["checks"]["parsing"] = self.check_parsing(path)
			if results["checks"]["parsing"]["status"] == "ok":
				results["checks"]["compute_top1"] = self.check_compute(path, k=1)
				results["checks"]["compute_top2"] = self.check_compute(path, k=2)

		all_ok = all(check["status"] == "ok" for check in results["checks"].values())
		results["overall_status"] = "ok" if all_ok else "failed"
		return results


def main():
	monitor = PerformanceMonitor()
	results = monitor.run_full_check()
	print(json.dumps(results, indent=2))


if __name__ == "__main__":
	main()
