"""Exception types raised across the package."""


class PKLMError(Exception):
    """Base class for all errors raised by :mod:`pklm`."""


class DataError(PKLMError, ValueError):
    """Invalid or unusable input data."""


class EmptyDataError(DataError):
    pass


class AllMissingRowError(DataError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"row {row} has every cell missing")


class ParseError(DataError):
    def __init__(self, row, col, message=""):
        self.row = row
        self.col = col
        super().__init__(f"cannot parse cell ({row}, {col}){': ' + message if message else ''}")


class RaggedRowError(DataError):
    def __init__(self, row, expected, found):
        self.row = row
        super().__init__(f"record {row} has {found} fields, expected {expected}")


class DimensionTooSmallError(PKLMError, ValueError):
    pass


class DegenerateLabelingError(PKLMError):
    """A projection produced a single collapsed class."""


class SingleClassError(PKLMError, ValueError):
    pass


class EmptyTrainingError(PKLMError, ValueError):
    pass


class EmptyClassSideError(PKLMError):
    """Either the class or its complement has no usable rows."""


class NoValidClassTermError(PKLMError):
    pass


class NoProjectionsError(PKLMError, ValueError):
    pass


class InsufficientDataError(PKLMError):
    """No informative projection could be drawn within the resampling budget."""


class BadSpecError(PKLMError, ValueError):
    pass


class NoMissingnessWarning(UserWarning):
    """The data contain a single missingness pattern; nothing to test."""
