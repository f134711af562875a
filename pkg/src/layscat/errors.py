"""Exception hierarchy. CLI exit codes map onto these classes."""


class LayscatError(Exception):
    """Base class for all package errors."""


class InvalidInputError(LayscatError, ValueError):
    """Bad user input; CLI exit code 2."""


class InvalidGeometryError(InvalidInputError):
    pass


class DimensionError(InvalidInputError):
    pass


class SingularityError(InvalidInputError):
    """Kernel evaluated at coincident points."""


class UnsupportedKernelError(InvalidInputError):
    pass


class UnsupportedOperationError(InvalidInputError):
    pass


class DegenerateDifferenceError(InvalidInputError):
    """Hypersingular difference requested with equal wavenumbers."""


class InvalidIncidenceError(InvalidInputError):
    pass


class WrongRegionError(InvalidInputError):
    pass


class ProbeHypothesisError(InvalidInputError):
    """Interface probe requires a transmission constant different from one."""


class ConfigError(InvalidInputError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class NumericalError(LayscatError):
    """Numerical failure; CLI exit code 3."""


class SolverFailure(NumericalError):
    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class OracleFailure(NumericalError):
    pass
