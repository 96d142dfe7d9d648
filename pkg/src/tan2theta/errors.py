"""Exception types shared across the package."""


class SpectralError(Exception):
    """Base class for failures of the spectral machinery."""


class ConvergenceError(SpectralError):
    """The Jacobi eigensolver hit its sweep cap."""

    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


class NearSingularityError(SpectralError):
    """A spectral function was evaluated inside its forbidden band."""

    def __init__(self, msg, eigenvalue):
        super().__init__(msg)
        self.eigenvalue = eigenvalue


class AmbiguousCutError(SpectralError):
    """An eigenvalue sits on (or too close to) a projection endpoint."""

    def __init__(self, msg, eigenvalue, endpoint):
        super().__init__(msg)
        self.eigenvalue = eigenvalue
        self.endpoint = endpoint


class NotPositiveDefiniteError(SpectralError):
    def __init__(self, msg, min_eigenvalue):
        super().__init__(msg)
        self.min_eigenvalue = min_eigenvalue


class NoGapError(SpectralError):
    """The spectrum of A does not split into two separated clusters."""


class SingularOperatorError(NoGapError):
    """Zero lies in the spectrum of A, so no gap contains the origin."""


class HintMismatchError(NoGapError):
    """A user supplied gap hint is not contained in the detected gap."""


class InvalidInstanceError(ValueError):
    """Malformed or inconsistent input data."""


class DomainError(ValueError):
    """A scalar formula was called outside its domain."""


class InternalInvariantError(RuntimeError):
    """A check that holds by construction failed; indicates a bug."""
