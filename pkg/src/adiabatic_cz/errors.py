"""Exception hierarchy shared by every module of the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by :mod:`adiabatic_cz`."""


class InvalidDimensionError(ToolkitError, ValueError):
    pass


class ValidationError(ToolkitError, ValueError):
    pass


class RangeError(ToolkitError, ValueError):
    """A requested frequency, flux or time lies outside the valid band."""


class DegenerateLabelError(ToolkitError):
    """Two eigenvectors are equally good candidates for one bare-state label."""

    def __init__(self, label, candidates, overlaps):
        self.label = label
        self.candidates = tuple(candidates)
        self.overlaps = tuple(overlaps)
        super().__init__(
            f"ambiguous assignment for label {label}: candidates {self.candidates} "
            f"with squared overlaps {self.overlaps}"
        )


class AccuracyError(ToolkitError):
    """Step-size refinement did not converge to the requested accuracy."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class CalibrationRangeError(ToolkitError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class PhaseUndefinedError(ToolkitError):
    pass


class FitError(ToolkitError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class FitQualityError(FitError):
    pass


class NegativeBoundError(ToolkitError, ValueError):
    pass


class ConfigError(ToolkitError):
    pass
