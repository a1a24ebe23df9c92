import csv
import hashlib
import logging
import math
import re
import time
from typing import List, Tuple

import numpy as np

from models.errors import (
	CalibCIError, EmptyDataset, MalformedHeader, MalformedRow, MixedLabelModes
)
from models.schemas import Dataset
from services.topk import validate_dataset

logger = logging.getLogger(__name__)

# Header line is line 1, so data row i (0-based) sits on line i + 2
FIRST_DATA_LINE = 2

_PROB_COLUMN = re.compile(r"^z_(\d+)$")
_ONEHOT_COLUMN = re.compile(r"^y_(\d+)$")


def file_digest(path: str) -> str:
	"""sha256 of the raw file bytes, as recorded in reports"""
	h = hashlib.sha256()
	with open(path, "rb") as f:
		for chunk in iter(lambda: f.read(1 << 20), b""):
			h.update(chunk)
	return f"sha256:{h.hexdigest()}"


def _numbered(names: List[str], pattern: re.Pattern, start: int) -> bool:
	"""True when names are prefix_1, ..., prefix_len in order"""
	for offset, name in enumerate(names):
		match = pattern.match(name)
		if not match or int(match.group(1)) != start + offset:
			return False
	return True


def parse_header(header: List[str]) -> Tuple[int, str]:
	"""Number of classes and label mode ("label" or "onehot") of a predictions header"""
	header = [name.strip() for name in header]
	if not header:
		raise MalformedHeader("empty header")

	K = 0
	while K < len(header) and _PROB_COLUMN.match(header[K]):
		K += 1
	if K < 2 or not _numbered(header[:K], _PROB_COLUMN, 1):
		raise MalformedHeader(f"header must start with z_1,...,z_K for K >= 2, got {','.join(header)}")

	rest = header[K:]
	has_label = "label" in rest
	has_onehot = any(_ONEHOT_COLUMN.match(name) for name in rest)
	if has_label and has_onehot:
		raise MixedLabelModes("header mixes a label column with one-hot y_j columns")
	if rest == ["label"]:
		return K, "label"
	if len(rest) == K and _numbered(rest, _ONEHOT_COLUMN, 1):
		return K, "onehot"
	raise MalformedHeader(
		f"after z_1..z_{K} expected either 'label' or y_1..y_{K}, got {','.join(rest) or 'nothing'}"
	)


def _parse_float(text: str, line: int) -> float:
	try:
		return float(text)
	except ValueError:
		raise MalformedRow(f"'{text}' is not a number", line=line)


def _onehot_label(values: List[float], line: int) -> int:
	if any(v not in (0.0, 1.0) for v in values):
		raise MalformedRow("one-hot entries must be 0 or 1", line=line)
	hot = [j for j, v in enumerate(values) if v == 1.0]
	if len(hot) != 1:
		raise MalformedRow(f"one-hot row has {len(hot)} ones, expected exactly 1", line=line)
	return hot[0]


def _integer_label(text: str, line: int) -> float:
	value = _parse_float(text, line)
	if not math.isfinite(value) or value != math.floor(value):
		raise MalformedRow(f"label '{text}' is not an integer class index", line=line)
	return value


def parse_predictions_csv(path: str) -> Dataset:
	"""
	Load a predictions export into a validated Dataset.

	Accepted headers are `z_1,...,z_K,label` with a 0-based class index, or
	`z_1,...,z_K,y_1,...,y_K` with one-hot labels. Every failure names the
	offending file line.
	"""
	start_time = time.time()
	probs: List[List[float]] = []
	labels: List[float] = []

	try:
		f = open(path, newline="", encoding="utf-8-sig")
	except OSError as e:
		raise MalformedHeader(f"cannot read {path}: {e}")

	with f:
		reader = csv.reader(f)
		try:
			header = next(reader)
		except StopIteration:
			raise MalformedHeader(f"{path} is empty")
		except (csv.Error, UnicodeDecodeError) as e:
			raise MalformedHeader(f"unreadable header: {e}")
		K, mode = parse_header(header)
		width = K + (1 if mode == "label" else K)

		line = 1
		try:
			for line, row in enumerate(reader, start=FIRST_DATA_LINE):
				if not row or all(not cell.strip() for cell in row):
					raise MalformedRow("blank row", line=line)
				if len(row) != width:
					raise MalformedRow(f"expected {width} fields, got {len(row)}", line=line)
				z = [_parse_float(cell.strip(), line) for cell in row[:K]]
				if mode == "label":
					label = _integer_label(row[K].strip(), line)
				else:
					label = _onehot_label([_parse_float(cell.strip(), line) for cell in row[K:]], line)
				probs.append(z)
				labels.append(label)
		except (csv.Error, UnicodeDecodeError) as e:
			raise MalformedRow(f"unreadable row: {e}", line=line + 1)

	if not probs:
		raise EmptyDataset(f"{path} has a header but no data rows")

	try:
		d = validate_dataset(np.array(probs, dtype=np.float64), np.array(labels, dtype=np.float64))
	except CalibCIError as e:
		if e.row is None:
			raise
		raise MalformedRow(e.message, line=e.row + FIRST_DATA_LINE) from e

	processing_time = (time.time() - start_time) * 1000
	logger.info(f"Parsed {d.n} rows with K={d.K} ({mode} labels) from {path} in {processing_time:.2f}ms")
	return d
