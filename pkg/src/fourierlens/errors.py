"""Exception types shared across the package."""


class FourierLensError(Exception):
    """Base class for all package errors."""


class DimensionError(FourierLensError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class ContractError(FourierLensError, RuntimeError):
    """A caller violated an operation precondition (wrong layout, wrong mode, ...)."""


class DegenerateSpectrumError(FourierLensError, ValueError):
    """All power sits at DC, so a normalized radial profile is undefined.

    For input-gradient spectra this signals a vanishing gradient.
    """


class FormatError(FourierLensError, ValueError):
    """A data file does not follow its declared binary layout."""


class ConfigError(FourierLensError, ValueError):
    """An experiment or dataset configuration is invalid."""


class DivergenceError(FourierLensError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class ExportError(FourierLensError, ValueError):
    """Values cannot be written to an output format (e.g. NaN)."""


class StageError(FourierLensError, RuntimeError):
    """An experiment stage failed; ``cause`` holds the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
