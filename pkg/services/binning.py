import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from config import settings
from models.errors import DepthOutOfRange, PointOutsideChamber
from models.schemas import BinKey, PartitionSpec, TopKView

logger = logging.getLogger(__name__)


def check_chamber(z_top: np.ndarray, spec: PartitionSpec) -> None:
	"""Raise if any row lies outside the truncated Weyl chamber Delta(K, k)"""
	tol = settings.CHAMBER_TOLERANCE
	z_top = np.atleast_2d(z_top)
	if z_top.shape[1] != spec.k:
		raise DepthOutOfRange(f"expected {spec.k} coordinates, got {z_top.shape[1]}")

	sums = z_top.sum(axis=1)
	outside = (
		(z_top < -tol).any(axis=1)
		| (z_top > 1.0 + tol).any(axis=1)
		| (np.diff(z_top, axis=1) > tol).any(axis=1)
		| (sums < spec.k / spec.K - tol)
		| (sums > 1.0 + tol)
	)
	bad = np.flatnonzero(outside)
	if bad.size:
		i = int(bad[0])
		raise PointOutsideChamber(f"point {z_top[i].tolist()} is outside Delta({spec.K}, {spec.k})", row=i)


def assign_cells(z_top: np.ndarray, spec: PartitionSpec) -> np.ndarray:
	"""Vectorized hypercube index floor(z * mK), the closed upper boundary clamped into the last cell"""
	check_chamber(z_top, spec)
	cells = np.floor(np.atleast_2d(z_top) * spec.mk).astype(np.int64)
	return np.clip(cells, 0, spec.mk - 1)


def assign_bin(z_row: Sequence[float], spec: PartitionSpec) -> BinKey:
	"""Bin of a single point"""
	cells = assign_cells(np.asarray(z_row, dtype=np.float64).reshape(1, -1), spec)
	return tuple(int(i) for i in cells[0])


def bin_index(z_top: np.ndarray, spec: PartitionSpec) -> Tuple[np.ndarray, np.ndarray]:
	"""
	Non-empty cells in lexicographic order and, per example, the position of its cell.

	Returns (cells, inverse) with cells of shape (n_bins, k) and inverse of shape (n,).
	"""
	cells = assign_cells(z_top, spec)
	unique, inverse = np.unique(cells, axis=0, return_inverse=True)
	return unique, inverse.reshape(-1)


def group_by_bin(view: TopKView, spec: PartitionSpec) -> Dict[BinKey, List[int]]:
	"""Example indices per non-empty bin, ordered by BinKey"""
	if spec.k != view.k:
		raise DepthOutOfRange(f"partition depth {spec.k} does not match view depth {view.k}")
	cells, inverse = bin_index(view.z_top, spec)
	order = np.argsort(inverse, kind="stable")
	bounds = np.cumsum(np.bincount(inverse, minlength=len(cells)))[:-1]

	groups: Dict[BinKey, List[int]] = {}
	for cell, members in zip(cells, np.split(order, bounds)):
		groups[tuple(int(i) for i in cell)] = [int(j) for j in members]
	return groups


def choose_m(n: int, k: int, K: int, s: float = 1.0, c: float = 1.0) -> int:
	"""Bin resolution balancing squared bias m^(-2s) against variance"""
	if n < 2:
		return 1
	exponent = 2.0 / (4.0 * s + min(k, K - 1))
	m = max(1, int(round(c * n ** exponent)))
	logger.debug(f"choose_m(n={n}, k={k}, K={K}, s={s}, c={c}) -> {m}")
	return m
