"""Exception hierarchy for the link-prediction engine."""
from typing import Any, List, Optional


class TemplinkError(Exception):
    """Base class for every error raised by the engine."""


class ConfigError(TemplinkError, ValueError):
    """Configuration file or flag violates a declared invariant."""


class DatasetFormatError(TemplinkError, ValueError):
    """Raised when a dataset file cannot be parsed.

    Args:
        message: What went wrong
        path: File being read
        line: 1-based line number of the offending row, if known
    """

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class GraphQueryError(TemplinkError, IndexError):
    """Out-of-range node id or invalid observation window."""


class SplitError(TemplinkError, ValueError):
    """Sample sets cannot be built under the requested protocol."""


class SubgraphError(TemplinkError, ValueError):
    """Invalid enclosing-subgraph request."""


class ShapeError(TemplinkError, ValueError):
    """Tensor shapes do not line up."""


class NonFiniteError(TemplinkError, ArithmeticError):
    """NaN or Inf produced by a tensor op or found in gradients."""


class NonDifferentiableError(TemplinkError, TypeError):
    """Backward pass reached an op that has no gradient."""


class TrainingDivergedError(TemplinkError, ArithmeticError):
    """Training produced a non-finite loss.

    Args:
        message: Diagnostic message
        trace: Metric rows recorded before divergence
    """

    def __init__(self, message: str, trace: Optional[List[Any]] = None):
        self.trace = list(trace or [])
        super().__init__(message)


class MetricError(TemplinkError, ValueError):
    """Metric undefined for the given input (e.g. a single class)."""


class MissingArtifactError(TemplinkError, FileNotFoundError):
    """A run file needed by a later pipeline stage does not exist."""
