"""Exception hierarchy shared across the package.

``UsageError`` subclasses indicate bad inputs (files, dimensions, options);
``NumericalError`` subclasses indicate a computation that could not be
completed.  The CLI maps the former to exit code 1 and the latter to 2.
"""


class LinfMorError(Exception):
    """Base class for all package errors."""


class UsageError(LinfMorError):
    """Invalid user input (files, dimensions, option values)."""


class DimensionMismatch(UsageError):
    """Matrix dimensions are inconsistent with each other."""


class ParseError(UsageError):
    """A matrix file could not be parsed."""

    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class NumericalError(LinfMorError):
    """A numerical computation failed or is not meaningful."""


class SingularPencil(NumericalError):
    """s*E - A is numerically singular at the requested point."""


class DecompositionFailure(NumericalError):
    """A dense eigenvalue or factorization routine did not converge."""


class DefectiveEigenstructure(NumericalError):
    """Eigenvector basis too ill-conditioned for a similarity transform."""


class Unbounded(NumericalError):
    """Sampled values blow up; the supremum is infinite (pole on the axis)."""


class NoFinite(NumericalError):
    """Every sampled value was non-finite."""


class BracketInvalid(NumericalError):
    """A refinement bracket does not satisfy lo < mid < hi with interior max."""


class NonFiniteObjective(NumericalError):
    """The objective is non-finite at the starting point."""


class LineSearchFailure(NumericalError):
    """No step satisfying the weak Wolfe conditions was found.

    For nonsmooth objectives this is a normal termination signal rather
    than a hard failure; the minimizer catches it.
    """


class Infeasible(NumericalError):
    """A barrier evaluation was requested outside the feasible region."""


class UnstableSystem(NumericalError):
    """Operation requires an asymptotically stable system."""


class SingularE(NumericalError):
    """Operation requires an invertible E matrix."""


class InitFailure(NumericalError):
    """Could not construct a valid initial basis or reduced estimate."""
