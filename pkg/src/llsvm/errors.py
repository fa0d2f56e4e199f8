"""Exception hierarchy shared by every llsvm module."""


class LLSVMError(ValueError):
    """Base class for all errors raised by the library."""


class InvalidSpecError(LLSVMError):
    """A kernel or configuration object was built with invalid parameters."""


class DimensionMismatchError(LLSVMError):
    """Input arrays do not have the dimension the receiver expects."""


class EmptyDatasetError(LLSVMError):
    pass


class InvalidRadiusError(LLSVMError):
    pass


class InsufficientPointsError(LLSVMError):
    """More neighbours were requested than the training set holds."""


class InvalidProblemError(LLSVMError):
    """A local problem carries non-finite or inconsistent data."""


class DegenerateProblemError(LLSVMError):
    """Every smoothing weight of a local problem is zero."""


class DataFormatError(LLSVMError):
    """A dataset file could not be parsed.

    ``lineno`` is 1-based and refers to the physical line in the file.
    """

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno
