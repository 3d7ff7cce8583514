"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`TerpeneTraceError`; most also derive from the builtin they refine so
callers can catch ``ValueError`` etc. without importing anything from here.
"""


class TerpeneTraceError(Exception):
    """Base class for all package errors."""


class InvalidTemperature(TerpeneTraceError, ValueError):
    pass


class TraceTooShort(TerpeneTraceError, ValueError):
    pass


class DegenerateInversion(TerpeneTraceError, ValueError):
    """Emission inversion is undefined (t = 0 or no ventilation)."""


class IllConditioned(TerpeneTraceError, ValueError):
    """Emission inversion denominator is too close to zero to trust."""


class ZeroVariance(TerpeneTraceError, ValueError):
    pass


class SingleClass(TerpeneTraceError, ValueError):
    pass


class ClassTooSmall(TerpeneTraceError, ValueError):
    pass


class MissingFeature(TerpeneTraceError, KeyError):
    pass


class SchemaError(TerpeneTraceError, ValueError):
    pass


class MissingFile(TerpeneTraceError, FileNotFoundError):
    pass


class ValidationFailed(TerpeneTraceError, ValueError):
    def __init__(self, message, problems=()):
        super().__init__(message)
        self.problems = list(problems)


class UnknownName(TerpeneTraceError, KeyError):
    """Unknown preset or task name; the message lists the valid ones."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""
