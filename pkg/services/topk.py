import logging
from typing import Sequence, Union

import numpy as np

from config import settings
from models.errors import (
	DepthOutOfRange, DimensionMismatch, EmptyDataset, LabelOutOfRange, NegativeProbability,
	NonFiniteEntry, RowSumOutOfTolerance
)
from models.schemas import Dataset, TopKView

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence]


def validate_dataset(probs: ArrayLike, labels: ArrayLike) -> Dataset:
	"""Check a prediction/label pair and renormalize rows that are off by rounding"""
	probs = np.array(probs, dtype=np.float64)
	labels = np.asarray(labels)

	if probs.ndim != 2:
		raise DimensionMismatch(f"probabilities must be an n x K matrix, got shape {probs.shape}")
	n, K = probs.shape
	if n == 0:
		raise EmptyDataset("dataset has no examples")
	if K < 2:
		raise DimensionMismatch(f"need at least 2 classes, got K={K}")
	if labels.ndim != 1 or labels.shape[0] != n:
		raise DimensionMismatch(f"expected {n} labels, got shape {labels.shape}")

	bad = np.flatnonzero(~np.isfinite(probs).all(axis=1))
	if bad.size:
		raise NonFiniteEntry("probability row has a non-finite entry", row=int(bad[0]))
	bad = np.flatnonzero((probs < 0.0).any(axis=1))
	if bad.size:
		raise NegativeProbability("probability row has a negative entry", row=int(bad[0]))

	row_sums = probs.sum(axis=1)
	off = np.abs(row_sums - 1.0)
	bad = np.flatnonzero(off > settings.ROW_SUM_TOLERANCE)
	if bad.size:
		i = int(bad[0])
		raise RowSumOutOfTolerance(f"probability row sums to {row_sums[i]:.12g}", row=i)
	renormalize = off > 0.0
	if renormalize.any():
		probs[renormalize] /= row_sums[renormalize, None]
		logger.debug(f"Renormalized {int(renormalize.sum())} probability rows")

	if not np.issubdtype(labels.dtype, np.integer):
		as_float = labels.astype(np.float64)
		bad = np.flatnonzero(~np.isfinite(as_float) | (as_float != np.round(as_float)))
		if bad.size:
			raise LabelOutOfRange("label is not an integer class index", row=int(bad[0]))
		labels = as_float.astype(np.int64)
	labels = labels.astype(np.int64)
	bad = np.flatnonzero((labels < 0) | (labels >= K))
	if bad.size:
		i = int(bad[0])
		raise LabelOutOfRange(f"label {labels[i]} outside [0, {K - 1}]", row=i)

	probs.setflags(write=False)
	labels.setflags(write=False)
	return Dataset(probs=probs, labels=labels)


def rank_order(probs: np.ndarray) -> np.ndarray:
	"""Classes per row by non-increasing probability, ties by ascending class index"""
	return np.argsort(-probs, axis=1, kind="stable")


def topk_project(d: Dataset, k: int) -> TopKView:
	"""Sorted top-k probabilities, the labels attached to them and the residuals U"""
	if not 1 <= k <= d.K:
		raise DepthOutOfRange(f"depth k={k} outside [1, {d.K}]")

	order = rank_order(d.probs)[:, :k]
	z_top = np.take_along_axis(d.probs, order, axis=1)
	y_top = (order == d.labels[:, None]).astype(np.float64)
	u = y_top - z_top

	for arr in (z_top, y_top, u):
		arr.setflags(write=False)
	return TopKView(k=k, z_top=z_top, y_top=y_top, u=u)
