class UsageError(ValueError):
    """Raised when an operation is called with arguments outside its contract."""


class DivergentDensityError(UsageError):
    """Density is unbounded at the requested point."""


class LoadError(Exception):
    """Base class for dataset file parsing failures."""


class BadMagicError(LoadError):
    pass


class TruncatedFileError(LoadError):
    pass


class CountMismatchError(LoadError):
    pass


class BadLabelError(LoadError):
    pass
