"""Exception hierarchy shared across the package."""


class PVQMLError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PVQMLError, ValueError):
    """Invalid structural configuration (qubit counts, indices, hyperparameters)."""


class ShapeError(PVQMLError, ValueError):
    """Array or vector lengths do not conform."""


class ContractError(PVQMLError, ValueError):
    """A documented precondition was violated."""


class UnsupportedCircuitError(PVQMLError):
    """The circuit contains a gate the requested operation cannot handle."""


class ParseError(PVQMLError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SchemaError(PVQMLError, ValueError):
    """Input file columns do not match the expected schema."""


class CleaningError(PVQMLError):
    def __init__(self, message, timestamps=()):
        self.timestamps = list(timestamps)
        super().__init__(message)


class ScalingError(PVQMLError, ValueError):
    """Scaler statistics are degenerate."""


class TrainingError(PVQMLError):
    def __init__(self, message, checkpoint=None):
        self.checkpoint = checkpoint
        super().__init__(message)


class FormatError(PVQMLError):
    """A serialized document is corrupt or has an unsupported version."""
