"""
Exception hierarchy for the private QNN / probabilistic OPF toolkit

Library code raises these; main.py maps them to process exit codes.
"""

from typing import Any, Dict, List, Optional


class QPOPFError(Exception):
    """Base class for every error raised by this package"""

    exit_code = 1


class ConfigurationError(QPOPFError):
    """Invalid sizes, indices, ranges or missing inputs"""

    exit_code = 2


class DimensionError(ConfigurationError):
    """Input length does not match the register / model width"""


class ArgumentError(ConfigurationError):
    """Argument outside its admissible domain (shots, step size, batch...)"""


class SchemaError(ConfigurationError):
    """Grid or artifact document does not satisfy its schema"""


class TopologyError(ConfigurationError):
    """Line graph is not a tree rooted at the slack bus"""


class NumericalError(QPOPFError):
    """Non-finite values where finite ones are required"""

    exit_code = 3


class InfeasibleOPFError(QPOPFError):
    """The OPF instance has no feasible point under the configured bounds"""

    exit_code = 3

    def __init__(self, message: str, violated: Optional[List[str]] = None):
        super().__init__(message)
        self.violated = list(violated or [])


class SolverConvergenceError(QPOPFError):
    """The interior point solver stopped without meeting its tolerances"""

    exit_code = 3

    def __init__(self, message: str, residuals: Optional[Dict[str, float]] = None):
        super().__init__(message)
        self.residuals = dict(residuals or {})


class AggregationError(QPOPFError):
    """Monte Carlo statistics requested but no sample was feasible"""

    exit_code = 3


class DataQualityError(QPOPFError):
    """Generated dataset has too few feasible rows"""

    exit_code = 3


class TrainingAborted(QPOPFError):
    """Training loss diverged or became non-finite"""

    exit_code = 3

    def __init__(self, message: str, step: int, loss: float, parameter_norm: float):
        super().__init__(message)
        self.step = step
        self.loss = loss
        self.parameter_norm = parameter_norm
        # filled by the training loop with whatever was completed before the abort
        self.partial: Any = None

    def diagnostic(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "loss": self.loss,
            "parameter_norm": self.parameter_norm,
            "message": str(self),
        }


class UndefinedMetricError(QPOPFError):
    """Metric is undefined for the given inputs (e.g. zero-variance truths)"""

    exit_code = 3


class ArtifactIOError(QPOPFError):
    """Reading or writing a dataset, model or report failed"""

    exit_code = 4
