"""Exception hierarchy.

Two families matter to callers: :class:`DomainError` for inputs that fall
outside an operation's domain (bad shapes, points outside a tube, invalid
priors) and :class:`ComputationError` for numerical procedures that ran but
did not deliver (non-convergence, persistent cut-locus hits). The CLI maps
them to exit codes 2 and 1.
"""


class OrbitkitError(Exception):
    """Base class for every error raised by this package."""


class DomainError(OrbitkitError, ValueError):
    pass


class ComputationError(OrbitkitError, ArithmeticError):
    pass


class NotSymmetric(DomainError):
    pass


class NotPositiveDefinite(DomainError):
    pass


class SingularInput(DomainError):
    pass


class DegenerateProjection(DomainError):
    pass


class NotComplexSymmetric(DomainError):
    pass


class NotSkewSymmetric(DomainError):
    pass


class CutLocus(DomainError):
    pass


class NotTangent(DomainError):
    pass


class ShapeMismatch(DomainError):
    pass


class OutsideTube(DomainError):
    pass


class RankGapViolation(DomainError):
    pass


class PriorInvalid(DomainError):
    pass


class NonPositiveDensity(PriorInvalid):
    pass


class SingularTau(DomainError):
    pass


class TooFewSamples(DomainError):
    pass


class NoConvergence(ComputationError):
    pass


class AntipodalData(ComputationError):
    """Some design point is mapped (numerically) onto the antipode of its
    observation at the final iterate, where the squared distance is not
    differentiable."""
