"""Exception hierarchy. Every domain error is a ``ValueError`` so callers can
catch broadly, and the CLI maps them all to exit status 1."""


class DuoglassError(ValueError):
    pass


class ValidationError(DuoglassError):
    pass


class UnsupportedStageError(DuoglassError):
    pass


class MetricError(DuoglassError):
    pass


class FitError(DuoglassError):
    pass


class ConvergenceError(FitError):
    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class QuantizationError(DuoglassError):
    pass


class ScheduleFormatError(DuoglassError):
    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


class ScheduleVersionError(ScheduleFormatError):
    pass


class DimensionError(DuoglassError):
    pass


class StabilityError(DuoglassError):
    pass


class CalibrationError(DuoglassError):
    pass


class ConfigError(DuoglassError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ImageFormatError(DuoglassError):
    pass
