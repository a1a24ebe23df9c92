import argparse
import json
import logging
from pathlib import Path

from config import settings
from models.schemas import InferenceOptions
from services.calibration_service import CalibrationService
from services.predictions_io import file_digest, parse_predictions_csv
from services.replication import ReplicationPool

logger = logging.getLogger(__name__)

METHODS = ["adjusted", "bootstrap", "subsampling", "hulc", "tcal"]


def add_parser(subparsers) -> argparse.ArgumentParser:
	parser = subparsers.add_parser(
		"compute",
		help="Estimate ECE^2 and its confidence interval for a predictions file"
	)
	parser.add_argument("--input", required=True, help="CSV with z_1..z_K and label or y_1..y_K columns")
	parser.add_argument("--out", help="Write the JSON report here instead of stdout")
	parser.add_argument("--k", type=int, default=1, help="Calibration depth (top-1-to-k)")
	parser.add_argument("--mk", type=int, help="Inverse cell side mK; chosen from n when omitted")
	parser.add_argument("--alpha", type=float, default=settings.ALPHA)
	parser.add_argument("--seed", type=int, default=settings.SEED)
	parser.add_argument("--threads", type=int, help=f"Worker threads (env CALIB_CI_THREADS, default {settings.THREADS})")
	parser.add_argument("--method", choices=METHODS, default="adjusted",
						help="Comparison method reported next to the adjusted interval")
	parser.add_argument("--boot-reps", type=int, default=settings.BOOT_REPS)
	parser.add_argument("--subsample-reps", type=int, default=settings.SUBSAMPLE_REPS)
	parser.add_argument("--subsample-size", type=int)
	parser.add_argument("--subsample-rate", choices=["sqrt_n", "n"], default=settings.SUBSAMPLE_RATE)
	parser.add_argument("--hulc-delta", type=float, default=settings.HULC_DELTA)
	parser.add_argument("--tcal-reps", type=int, default=settings.TCAL_REPS)
	parser.add_argument("--smoothness", type=float, default=settings.M_SMOOTHNESS,
						help="Smoothness s in m = c n^(2/(4s + min(k, K-1)))")
	parser.add_argument("--m-constant", type=float, default=settings.M_CONSTANT,
						help="Constant c in the bin-count rule")
	parser.set_defaults(handler=cmd_compute)
	return parser


def cmd_compute(args: argparse.Namespace) -> int:
	"""Read predictions, run the estimator and write the JSON report"""
	options = InferenceOptions(
		k=args.k,
		mk=args.mk,
		alpha=args.alpha,
		seed=args.seed,
		smoothness=args.smoothness,
		m_constant=args.m_constant,
		boot_reps=args.boot_reps,
		subsample_reps=args.subsample_reps,
		subsample_size=args.subsample_size,
		subsample_rate=args.subsample_rate,
		hulc_delta=args.hulc_delta,
		tcal_reps=args.tcal_reps
	)
	dataset = parse_predictions_csv(args.input)
	service = CalibrationService(options, ReplicationPool(threads=args.threads))
	document = service.compute(dataset, file_digest(args.input), method=args.method)

	payload = json.dumps(document.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
	if args.out:
		Path(args.out).parent.mkdir(parents=True, exist_ok=True)
		Path(args.out).write_text(payload, encoding="utf-8")
		logger.info(f"Report written to {args.out}")
	else:
		print(payload, end="")
	return 0
