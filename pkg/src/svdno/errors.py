"""Exception types shared across the package."""


class SvdnoError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(SvdnoError, ValueError):
    """Operand shapes are inconsistent (dimension mismatch, bad axis, ...)."""


class ConfigurationError(SvdnoError, ValueError):
    """A configuration value is invalid or unsupported."""


class ContractError(SvdnoError, ValueError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


class NumericError(SvdnoError, ArithmeticError):
    """A computation produced non-finite values."""


class DegenerateFieldError(SvdnoError, ValueError):
    """A field is degenerate for the requested statistic (zero norm/variance)."""


class SolverError(SvdnoError, RuntimeError):
    """A classical PDE solver failed (instability or non-convergence)."""


class TrainingError(SvdnoError, RuntimeError):
    """Training aborted (non-finite loss or gradients)."""


class FormatError(SvdnoError, ValueError):
    """An on-disk artifact is corrupt or inconsistent."""
