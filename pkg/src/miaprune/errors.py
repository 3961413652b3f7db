"""Exception hierarchy shared by every miaprune module."""


class MiapError(Exception):
    """Base class for all library errors."""


class DimensionError(MiapError, ValueError):
    pass


class StateError(MiapError, RuntimeError):
    pass


class NumericError(MiapError, ArithmeticError):
    pass


class ConfigError(MiapError, ValueError):
    pass


class DataError(MiapError, ValueError):
    pass


class CapacityError(MiapError, ValueError):
    pass


class FormatError(MiapError, ValueError):
    pass


class LengthError(FormatError):
    pass


class ConsistencyError(FormatError):
    pass
