"""Exception and warning types shared across the package."""


class MatscatError(Exception):
    """Base class for all errors raised by matscat."""


class NotUnitary(MatscatError):
    """Matrix expected to be unitary is not (message carries the norm)."""


class BadParams(MatscatError):
    """Invalid or missing parameters for a standard boundary condition."""


class ShapeMismatch(MatscatError):
    """Array arguments do not conform."""


class ZeroWavenumber(MatscatError):
    """Operation undefined at k = 0."""


class IntegratorFailure(MatscatError):
    """Adaptive ODE integration failed (step-size underflow or step budget)."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class SingularCoefficient(MatscatError):
    """M_minus is numerically singular (spectral singularity or k too small)."""


class ConstraintViolated(MatscatError):
    """A zero-energy frame override violates the projection constraint."""


class AllSingular(MatscatError):
    """The zero-energy solution frame is singular at every grid node."""


class SingularAtOrigin(MatscatError):
    """Darboux partner construction needs an invertible frame at x = 0."""


class DomainViolation(MatscatError):
    """A factorisation test function fails the domain preconditions."""


class TailTooLarge(MatscatError):
    """Scattering data has not converged to its high-energy limit at k_max."""


class IllConditioned(MatscatError):
    """Nystrom matrix condition number exceeds the safe threshold."""


class NonInvertibleTrace(MatscatError):
    """Boundary-trace combination is singular at every requested wavenumber."""


class JostZeroOnAxis(MatscatError):
    """A ray Jost function vanishes at a real wavenumber node."""


class VirtualLevelSuspected(MatscatError):
    """Normalised dispersion function nearly vanishes at small k."""


class TailNotDecayed(MatscatError):
    """Phase-retrieval integrand has not decayed at the ends of the k grid."""


class UnitaryCompletionDegenerate(MatscatError):
    """Unitary completion of the last scattering column is ill posed."""


class SystemSingular(MatscatError):
    """The two-point linear system for the last Jost function is singular."""


class ConfigError(MatscatError):
    """Invalid job configuration (CLI exit code 2)."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class VirtualLevelWarning(UserWarning):
    """det M_minus(i*kappa) stays small as kappa -> 0+ (possible virtual level)."""


class ConsistencyWarning(UserWarning):
    """Scattering data looks internally inconsistent (spread across k nodes)."""
