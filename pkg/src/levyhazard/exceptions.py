"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError/DataError -> 2,
DivergentIntegralError/DegenerateModelError/NumericError -> 3, I/O -> 4.
"""


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field."""


class DataError(ValueError):
    """Invalid input data; message names the offending row/column."""


class EnumerationCapError(ValueError):
    """A brute-force enumeration was requested beyond the configured cap."""


class DivergentIntegralError(ArithmeticError):
    """An integral required by the model is infinite or failed to converge."""


class DegenerateModelError(RuntimeError):
    """A sampler hit zero total mass (model/data support mismatch)."""


class NumericError(ArithmeticError):
    """A numerical routine exceeded its iteration cap; carries a residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
