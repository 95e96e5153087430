"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: validation problems exit 1, runtime
failures exit 2 and solver non-convergence exits 3.
"""


class QsmError(Exception):
    """Base class for all toolkit errors."""


class StructuralError(QsmError, ValueError):
    """Shapes, dimensions or placements that do not fit together."""


class DomainError(QsmError, ValueError):
    """A parameter or input value outside the operation's domain."""


class ConvergenceError(QsmError, RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class UnsupportedFeatureError(QsmError):
    """File feature (datatype, extension, layout) that is not handled."""


class CorruptionError(QsmError):
    """File content that is truncated or internally inconsistent."""


class LoadError(QsmError):
    """Checkpoint incompatible with the requested architecture."""


class TrainingDivergedError(QsmError, RuntimeError):
    pass
