import argparse
import logging
from pathlib import Path

from services.experiments import ExperimentRunner, load_experiment_config, write_results_csv, write_results_json
from services.replication import ReplicationPool

logger = logging.getLogger(__name__)


def add_parser(subparsers) -> argparse.ArgumentParser:
	parser = subparsers.add_parser(
		"simulate",
		help="Run coverage, width and power experiments from a TOML grid"
	)
	parser.add_argument("--config", required=True, help="Experiment grid (TOML)")
	parser.add_argument("--out", default="results", help="Directory for results.csv and results.json")
	parser.add_argument("--reps", type=int, help="Override the number of datasets per grid point")
	parser.add_argument("--seed", type=int, help="Override the master seed")
	parser.add_argument("--threads", type=int, help="Worker threads (env CALIB_CI_THREADS)")
	parser.add_argument("--timings", action="store_true",
						help="Include wall-clock seconds per grid point in the result files")
	parser.set_defaults(handler=cmd_simulate)
	return parser


def cmd_simulate(args: argparse.Namespace) -> int:
	config = load_experiment_config(args.config)
	overrides = {}
	if args.reps is not None:
		overrides["reps"] = args.reps
	if args.seed is not None:
		overrides["seed"] = args.seed
	if overrides:
		config = config.model_validate({**config.model_dump(), **overrides})

	pool = ReplicationPool(threads=args.threads)
	logger.info(f"Running {len(config.grids)} grid(s), {config.reps} replications per point on {pool.threads} thread(s)")
	result = ExperimentRunner(config, pool).run()

	out = Path(args.out)
	write_results_csv(result, str(out / "results.csv"), timings=args.timings)
	write_results_json(result, str(out / "results.json"), timings=args.timings)
	return 0
