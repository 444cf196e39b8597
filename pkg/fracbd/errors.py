"""Exception types raised by fracbd.

Each error carries the process exit code the command surface maps it to.
"""


class FbdError(Exception):
    """Base class for every failure raised by the package."""

    exit_code = 4


class InvalidParameter(FbdError, ValueError):
    """A precondition on a parameter or configuration value was violated."""

    exit_code = 2


class NonConvergence(FbdError, ArithmeticError):
    """A series, iteration or quadrature budget was exhausted before tolerance."""

    exit_code = 3


class QuadratureFailure(NonConvergence):
    """The independent quadrature oracle could not reach its error target."""


class UnstableStep(NonConvergence):
    """The Caputo time stepper produced a value outside [0, 1]."""
