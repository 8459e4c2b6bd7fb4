"""Exception hierarchy shared across the package."""


class PanError(Exception):
    """Base class for every error raised by pannet."""


class GraphError(PanError, ValueError):
    pass


class OutOfRangeEndpoint(GraphError):
    pass


class FeatureShapeMismatch(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class EmptyGraph(GraphError):
    pass


class WalkCountOverflow(PanError, OverflowError):
    """Walk counts left the exactly representable integer range of float64."""


class NonPositiveTemperature(PanError, ValueError):
    pass


class ZeroPartition(PanError, ArithmeticError):
    pass


class ShapeMismatch(PanError, ValueError):
    pass


class NonFiniteValue(PanError, FloatingPointError):
    """An operation produced NaN or Inf; ``op`` names the culprit."""

    def __init__(self, op: str, message: str | None = None):
        self.op = op
        super().__init__(message or f"non-finite value produced by {op!r}")


class NotScalarLoss(PanError, ValueError):
    pass


class CodeOutOfRange(PanError, ValueError):
    def __init__(self, field: int, value: int, cardinality: int):
        self.field = field
        self.value = value
        self.cardinality = cardinality
        super().__init__(
            f"categorical code {value} in field {field} outside [0, {cardinality})"
        )


class BadLabel(PanError, ValueError):
    pass


class DegenerateLabels(PanError, ValueError):
    pass


class DataError(PanError):
    """Base for dataset ingestion problems."""


class MissingFile(DataError, FileNotFoundError):
    pass


class RowCountMismatch(DataError, ValueError):
    pass


class NonIntegerField(DataError, ValueError):
    pass


class SchemaViolation(DataError, ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class CheckpointError(PanError):
    pass


class ConfigError(PanError, ValueError):
    pass
