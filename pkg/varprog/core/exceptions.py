class VarProgError(Exception):
    """Base class for errors raised by varprog."""


class ParameterError(VarProgError):
    """Raised when an ERP receives malformed or invalid parameters."""


class OutOfSupportError(ParameterError):
    """Raised when a gradient is requested at a value outside the ERP's support."""


class StructuralError(VarProgError):
    """Raised when an address is reused with a different ERP family, or is unknown."""


class DimensionError(VarProgError):
    """Raised when a flat parameter vector has the wrong length."""


class EstimatorError(VarProgError):
    """Raised when a gradient estimator's preconditions are not met."""


class NumericalError(VarProgError):
    """Raised when a direction is non-finite or a linear solve fails."""


class OracleBoundError(VarProgError):
    """Raised when exact enumeration is infeasible for a program."""


class ProgramError(VarProgError):
    """Raised when model code fails; carries the address reached before the failure."""


class ModelFileError(VarProgError):
    """Raised when a model file cannot be read or parsed."""
