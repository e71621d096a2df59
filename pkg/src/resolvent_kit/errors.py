"""Exception types shared by all modules.

Every error derives from :class:`ResolventKitError` so callers (and the CLI)
can catch the whole family at once.  Errors that signal a violated
mathematical hypothesis or a malformed request derive from
:class:`HypothesisError`; the CLI maps those to exit code 2.
"""


class ResolventKitError(Exception):
    """Base class for all package errors."""


class HypothesisError(ResolventKitError):
    """A precondition on kernels, grids or requests does not hold."""


class NonEvaluable(ResolventKitError):
    """The kernel descriptor has no pointwise closed form."""


class DomainError(HypothesisError):
    """An argument lies outside the domain of the operation."""


class NotIntegrable(HypothesisError):
    """A factor is not locally integrable where integrability is required."""


class NoClosedForm(HypothesisError):
    """A closed-form solution was requested for an unsupported descriptor."""


class OutOfRange(HypothesisError):
    """A parameter violates a stated inequality."""


class GridMismatch(HypothesisError):
    """Grids are incompatible (different steps or misaligned endpoints)."""


class AbscissaViolation(HypothesisError):
    """Re(lambda) does not exceed the growth bound of the transformed function."""


class DegenerateRequest(HypothesisError):
    """The request hits a removable degeneracy, e.g. lambda == mu."""


class HypothesisViolation(HypothesisError):
    """A theorem hypothesis failed its numerical pre-check."""


class PrecisionLoss(ResolventKitError):
    """No evaluation regime could certify the requested accuracy."""


class NonConvergent(ResolventKitError):
    """A series or iteration failed to converge."""


class UncertifiedSpectrum(HypothesisError):
    """The generator spectrum lies outside every certified evaluation regime."""


class UnknownPair(HypothesisError):
    """The kernel-pair name is not recognised."""


class ValidityViolation(HypothesisError):
    """The family's kernel pair does not satisfy the equation's validity predicate."""


class IntervalExceeded(HypothesisError):
    """Requested points leave the interval on which the family is defined."""


class NoShippedPair(HypothesisError):
    """No closed-form kernel pair is available for this method."""
