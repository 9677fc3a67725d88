"""Exception hierarchy shared by all modules."""


class MBLPropError(Exception):
    """Base class for every error raised by the package."""


class InvalidShape(MBLPropError, ValueError):
    pass


class InvalidInput(MBLPropError, ValueError):
    pass


class Unsupported(MBLPropError, NotImplementedError):
    pass


class NotConserved(MBLPropError):
    """An operator expected to commute with the Hamiltonian does not."""


class AmbiguousSpectrum(MBLPropError):
    """Eigenvalue clustering cannot be decided at the requested tolerance."""


class ClusterMismatch(MBLPropError):
    pass


class NeedTwoEigenspaces(MBLPropError):
    pass


class AssignmentAmbiguous(MBLPropError):
    pass


class DegenerateSpectrum(MBLPropError):
    pass


class EmptyIntersection(MBLPropError):
    pass


class InvalidProtocol(MBLPropError):
    pass


class ConfigError(MBLPropError):
    pass


class BoundViolation(MBLPropError):
    """A certified inequality failed. ``check`` names the failing inequality."""

    def __init__(self, check, message=None, report=None):
        self.check = check
        self.report = report
        super().__init__(message or f"bound violated: {check}")
