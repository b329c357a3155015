"""Exception types raised by the qpfol solvers."""


class QpfolError(Exception):
    """Base class for all qpfol errors."""


class SingularJet(QpfolError):
    """Expansion point sits on (or too close to) a singularity of the
    lifted elementary function, e.g. division by a series whose constant
    part vanishes at some collocation angle."""


class NoConvergence(QpfolError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularJacobian(QpfolError):
    """Newton system is singular; for the torus solve this means the
    dichotomy spectrum touches the unit circle."""


class ResidualTooLarge(QpfolError):
    """A quantity that should vanish after centering exceeds tolerance."""


class EigenFailure(QpfolError):
    """The dense eigenvalue backend did not converge."""


class ClusteringFailed(QpfolError):
    """No admissible partition of eigenvalue magnitudes into clusters
    whose sizes are integer multiples of 2*ell + 1."""


class DefectiveFrame(QpfolError):
    """The left/right bundle pairing U(theta) W(theta) is singular, so the
    frames cannot be normalised to U W = I."""


class NotAttracting(QpfolError):
    """Spectral quotient requested for a torus that is not attracting
    (largest magnitude bound >= 1)."""


class ExternalResonance(QpfolError):
    """A cross term that must be solved for has a denominator below the
    fatal small-divisor threshold."""


class ParametricResonance(QpfolError):
    """An autonomous conjugate map was requested but a k != 0 internal
    term has a near-zero denominator."""


class SingularFrame(QpfolError):
    """Stacked encoder linear part is not invertible at some angle."""


class NotRotationEquivariant(QpfolError):
    """Polar reduction requested for a conjugate map whose angular
    dependence exceeds tolerance (not in rotational normal form)."""


class NonMonotoneKappa(QpfolError):
    """Amplitude parametrisation folds inside the requested radius."""
