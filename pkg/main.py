import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from commands import compute, simulate
from config import settings
from models.errors import CalibCIError

# Configure logging
logging.basicConfig(
	level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
	format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
	stream=sys.stderr
)
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
	parser = argparse.ArgumentParser(
		prog="calib-ci",
		description="Debiased ECE estimation with confidence intervals and calibration tests"
	)
	parser.add_argument("--version", action="version", version=f"%(prog)s {settings.TOOL_VERSION}")
	parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
	subparsers = parser.add_subparsers(dest="command", required=True)
	compute.add_parser(subparsers)
	simulate.add_parser(subparsers)
	return parser


def main(argv: Optional[List[str]] = None) -> int:
	"""Exit codes: 0 success, 2 usage or validation failure, 3 numerical failure, 1 anything else"""
	parser = build_parser()
	args = parser.parse_args(argv)
	if args.verbose:
		logging.getLogger().setLevel(logging.DEBUG)

	try:
		return args.handler(args)
	except CalibCIError as e:
		logger.error(f"{args.command} failed: {e}")
		print(f"error: {e}", file=sys.stderr)
		return e.exit_code
	except ValidationError as e:
		logger.error(f"{args.command} got invalid options: {e}")
		print(f"error: {e}", file=sys.stderr)
		return 2
	except Exception as e:
		logger.exception(f"{args.command} failed unexpectedly: {e}")
		return 1


if __name__ == "__main__":
	sys.exit(main())
