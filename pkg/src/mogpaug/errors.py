"""Exception hierarchy shared by all modules.

Validation-type errors derive from :class:`ValueError` and map to CLI exit
status 1; numerical failures derive from :class:`ArithmeticError` and map to
exit status 2.
"""


class MogpAugError(Exception):
    """Base class for every error raised by this package."""


class InputError(MogpAugError, ValueError):
    """Malformed or inconsistent inputs (shapes, dimensions, lengths)."""


class ParameterError(MogpAugError, ValueError):
    """Hyperparameter outside its valid domain."""


class SchemaError(MogpAugError, ValueError):
    """A mandatory CSV column or config field is missing or malformed."""


class ValidationError(MogpAugError, ValueError):
    """A value in an input file violates a domain constraint."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PartitionError(MogpAugError, ValueError):
    """The requested building/floor partition holds no records."""


class FilterError(MogpAugError, ValueError):
    """No access point survives the coverage filter."""

    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = list(candidates)


class NumericalError(MogpAugError, ArithmeticError):
    """Cholesky factorisation failed at every jitter level tried."""

    def __init__(self, message, jitter_levels=()):
        super().__init__(message)
        self.jitter_levels = list(jitter_levels)


class FitError(MogpAugError, ArithmeticError):
    """Every optimiser restart failed."""

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)
