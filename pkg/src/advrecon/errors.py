"""Exception hierarchy shared by all modules."""


class AdvReconError(Exception):
    """Base class for errors raised by advrecon."""


class NumericalError(AdvReconError, ArithmeticError):
    """A numerical routine failed (non-convergence, non-finite values)."""


class DivergenceError(NumericalError):
    """Training loss exceeded the divergence threshold."""


class FormatError(AdvReconError, ValueError):
    """A serialized file is malformed."""
