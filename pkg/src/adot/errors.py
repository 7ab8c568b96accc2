"""Exception hierarchy shared by all solver modules."""


class AdotError(Exception):
    """Base class for every error raised by :mod:`adot`."""

    #: exit status used by the command line front end
    exit_code = 1


class MalformedInput(AdotError):
    pass


class InvalidTree(AdotError):
    pass


class ZeroProbBranch(InvalidTree):
    pass


class OutOfRange(AdotError):
    pass


class HorizonMismatch(AdotError):
    pass


class MarginalMismatch(AdotError):
    pass


class MissingCostEntry(AdotError):
    pass


class EmptySupport(AdotError):
    pass


class NotMartingaleMarginal(AdotError):
    pass


class IncompleteMarket(AdotError):
    pass


class Infeasible(AdotError):
    pass


class NotPolar(AdotError):
    """The event is charged by some admissible coupling."""


class NumericalFailure(AdotError):
    exit_code = 2


class DualVerificationFailed(NumericalFailure):
    pass


class CertificateFailed(NumericalFailure):
    pass
