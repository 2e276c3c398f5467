"""Exception hierarchy. CLI exit codes key off these classes."""


class PretextProbeError(Exception):
    pass


class DimensionError(PretextProbeError, ValueError):
    """Shapes or lengths do not agree."""


class DegenerateError(PretextProbeError, ValueError):
    """A statistic is undefined for the input (e.g. zero variance)."""


class TaskError(PretextProbeError, ValueError):
    """Unknown augmentation family or strength outside its legal range."""


class ConfigError(PretextProbeError, ValueError):
    pass


class DataError(PretextProbeError):
    """Bad dataset contents: empty sets, invalid labels, missing classes."""


class CoverageError(DataError):
    """A class has no labeled examples where one is required."""


class FormatError(DataError):
    """Malformed KPD1/KPM1 file."""


class InvariantViolation(PretextProbeError):
    """An internal invariant failed (e.g. a bound violation was found)."""
