"""Exception hierarchy shared across the package."""


class RedunquantError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(RedunquantError):
    """Matrix or vector dimensions are mutually inconsistent."""


class DomainError(RedunquantError):
    """A value lies outside the mathematical domain of an operation
    (e.g. a covariance that is not positive definite)."""


class NumericalError(RedunquantError):
    """A numerical procedure failed or did not meet its accuracy contract."""


class NotHurwitzError(NumericalError):
    """A matrix required to be Hurwitz has spectral abscissa >= 0."""


class UnsupportedDiffusionError(RedunquantError):
    """The requested computation path does not support this diffusion variant."""


class DivergenceError(NumericalError):
    """A simulated trajectory left the admissible region (|x| > 1e12)."""

    def __init__(self, message: str, path_index: int):
        super().__init__(message)
        self.path_index = path_index


class OutOfBoxError(RedunquantError):
    """Too much sample mass fell outside the histogram box."""

    def __init__(self, message: str, leakage: float):
        super().__init__(message)
        self.leakage = leakage


class NonUniqueError(NumericalError):
    """The discrete stationary operator has a null space of dimension != 1."""


class GridMismatchError(RedunquantError):
    """Two grid densities do not share the same grid."""


class NotReliableError(RedunquantError):
    """The gain set does not stabilize every single-failure configuration."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class SynthesisFailedError(RedunquantError):
    """No gain set in the search family passed verification.

    Carries the best (largest-margin) report found. Failure of the
    heuristic is not a certificate that no reliable gain set exists.
    """

    def __init__(self, message: str, best_report=None):
        super().__init__(message)
        self.best_report = best_report


class ConfigError(RedunquantError):
    """Base class for configuration problems."""


class ConfigSyntaxError(ConfigError):
    """The configuration file is not syntactically valid."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.line = line
        self.column = column


class ConfigValidationError(ConfigError):
    """The configuration file is syntactically valid but semantically wrong."""

    def __init__(self, message: str, field: str):
        super().__init__(message)
        self.field = field


class IoError(RedunquantError):
    """A report file could not be written or read."""
