"""Exception types raised by the toolkit."""


class OpRenewalError(Exception):
    """Base class for all toolkit errors."""


class NonContractingPreimage(OpRenewalError):
    """Inverse-branch iteration failed to converge (the map is not valid)."""


class InvalidInducingSet(OpRenewalError):
    """The nominated set is not a full-branch first-return set for the map."""


class CylinderBoundary(OpRenewalError):
    """The point lies too close to a return-time cylinder endpoint."""


class NoConvergence(OpRenewalError):
    """An iterative eigen-solver stalled."""


class TruncationTooCoarse(OpRenewalError):
    """The requested truncation horizon is too short for the tail bound."""


class HorizonTooLarge(OpRenewalError):
    """Cylinders beyond the horizon are below floating-point resolution."""

    def __init__(self, message, max_usable=None):
        super().__init__(message)
        self.max_usable = max_usable


class SupportViolation(OpRenewalError):
    """An observable reaches below the representable region near 0."""


class BetaOutOfRange(OpRenewalError):
    """The tail exponent is outside the range a formula applies to."""


class NoDominantEigenvalue(OpRenewalError):
    """Power iteration found no isolated leading eigenvalue."""


class SingularResolvent(OpRenewalError):
    """I - R(theta) is numerically singular away from theta = 0."""


class UnsupportedObservable(OpRenewalError):
    """Observable outside the class handled by a verifier."""


class SeriesDivergence(OpRenewalError):
    """An alternating series lost all significant digits."""
