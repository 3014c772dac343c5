"""Exception types shared across the library.

Filters translate AllWeightsZero into a -inf log-likelihood rather than
letting it escape; the sampler in turn treats -inf as an automatic reject.
Everything else is a genuine caller error.
"""


class AdpfError(Exception):
    """Base class for library-specific errors."""


class AllWeightsZero(AdpfError):
    """Every log-weight is -inf: the swarm has fully degenerated."""


class InvalidWeights(AdpfError):
    """Weights are negative, non-finite, or do not sum to one."""


class ProposalUnsupported(AdpfError):
    """A disturbance proposal returned an unusable density."""


class CovarianceNotPD(AdpfError):
    """A covariance matrix lost positive-definiteness."""


class TraceMissing(AdpfError):
    """A filter trace lacks the stored swarms needed for this query."""


class DomainViolation(AdpfError):
    """A state entered a region where the model is undefined."""


class DenominatorNonPositive(AdpfError):
    """Price-dividend expansion denominator is not positive (explosive ratio)."""


class BetaOutOfRange(AdpfError):
    """Implied discount factor fell outside (0, 1)."""


class InitInvalid(AdpfError):
    """Chain initialisation point has zero posterior density."""


class ZeroVariance(AdpfError):
    """A diagnostic was asked for on a constant sequence."""


class OptimFailed(AdpfError):
    """Every optimiser restart returned an invalid objective."""


class FixtureFormatError(AdpfError):
    """A coefficient fixture file is malformed."""
