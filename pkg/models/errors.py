from typing import Optional


class CalibCIError(Exception):
	"""Base error; exit_code is what the CLI returns when it surfaces"""
	exit_code: int = 2

	def __init__(self, message: str, row: Optional[int] = None):
		super().__init__(message)
		self.message = message
		self.row = row

	def __str__(self) -> str:
		if self.row is not None:
			return f"{self.message} (row {self.row})"
		return self.message


class ValidationFailure(CalibCIError):
	exit_code = 2


class NumericalFailure(CalibCIError):
	exit_code = 3


# Dataset validation
class NonFiniteEntry(ValidationFailure):
	pass

class NegativeProbability(ValidationFailure):
	pass

class RowSumOutOfTolerance(ValidationFailure):
	pass

class LabelOutOfRange(ValidationFailure):
	pass

class EmptyDataset(ValidationFailure):
	pass

class DimensionMismatch(ValidationFailure):
	pass

class DepthOutOfRange(ValidationFailure):
	pass


# Binning / estimation
class PointOutsideChamber(ValidationFailure):
	pass

class UnsupportedPartition(ValidationFailure):
	pass

class CountMismatch(ValidationFailure):
	pass

class ResolutionTooCoarse(ValidationFailure):
	pass


# Inference and resampling
class InvalidLevel(ValidationFailure):
	pass

class InvalidArgument(ValidationFailure):
	pass

class InvalidCounts(ValidationFailure):
	pass

class SubsampleTooSmall(ValidationFailure):
	pass

class TooFewExamples(ValidationFailure):
	pass


# Ingestion
class MalformedHeader(ValidationFailure):
	pass

class MalformedRow(ValidationFailure):
	def __init__(self, message: str, line: int):
		super().__init__(message)
		self.line = line

	def __str__(self) -> str:
		return f"line {self.line}: {self.message}"

class MixedLabelModes(ValidationFailure):
	pass

class ConfigError(ValidationFailure):
	pass


class QuadratureNotConverged(NumericalFailure):
	pass
