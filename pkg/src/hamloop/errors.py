"""Exception types raised across the package."""


class HamloopError(Exception):
    """Base class for all package errors."""


class NonSymplectic(HamloopError, ValueError):
    pass


class NonSymplecticJacobian(NonSymplectic):
    """A coordinate change between two charts is not Darboux-to-Darboux."""


class DegenerateSpectrum(HamloopError, ArithmeticError):
    """Eigenvalues on the unit circle could not be classified reliably."""


class NotClosed(HamloopError, ValueError):
    pass


class InsufficientResolution(HamloopError, ArithmeticError):
    """A phase step of at least pi/2 survived the maximal refinement depth."""


class ValidationFailure(HamloopError, ValueError):
    pass


class MissingInvarianceCertificate(HamloopError, ValueError):
    pass


class NonConstantBoundaryHamiltonian(HamloopError, ValueError):
    pass


class CertificateFailure(HamloopError, ValueError):
    def __init__(self, certificate, detail=""):
        self.certificate = certificate
        msg = f"certificate {certificate!r} failed"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class InvalidParameters(HamloopError, ValueError):
    pass
