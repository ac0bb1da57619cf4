"""Exception types shared across the package.

Validation problems (bad exponents, malformed configs, grid mismatches)
are distinct from numerical failures (CFL refusal, blow-up, linear solver
breakdown) so the command line layer can map them to different exit codes.
"""


class HJLabError(Exception):
    """Base class for everything raised deliberately by this package."""


class ValidationError(HJLabError):
    """Inputs violate a documented precondition."""


class ParseError(ValidationError):
    """Config or expression text could not be parsed.

    ``location`` identifies the offending section/key or token position.
    """

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{message}" + (f" (at {location})" if location else ""))


class GridMismatch(ValidationError):
    """Fields defined on different grids were combined."""


class DimensionUnsupported(ValidationError):
    """Only d = 1 and d = 2 grids are supported."""


class BadExponent(ValidationError):
    """An integrability or growth exponent is out of range."""


class BadGamma(ValidationError):
    """Hamiltonian growth exponent must satisfy gamma > 1."""


class NotElliptic(ValidationError):
    """Diffusion coefficient matrix fails the ellipticity certificate."""


class InsufficientSamples(ValidationError):
    """Sample cloud too small for a meaningful certificate."""


class MissingSweep(ValidationError):
    """An estimate that averages over an adjoint sweep got an empty sweep."""


class RoughData(ValidationError):
    """Pointwise audit requested on data with unresolved spikes."""


class EmptyLedger(ValidationError):
    """Report emission asked for a ledger with no data rows."""


class NumericalFailure(HJLabError):
    """Base class for runtime numerical breakdowns."""


class CFLViolation(NumericalFailure):
    """Explicit step refused; ``dt_suggested`` satisfies the constraint."""

    def __init__(self, dt: float, dt_suggested: float, ratio: float):
        self.dt = dt
        self.dt_suggested = dt_suggested
        self.ratio = ratio
        super().__init__(
            f"explicit step violates CFL (ratio {ratio:.3g} > 1); "
            f"dt={dt:.3e}, suggested dt<={dt_suggested:.3e}"
        )


class LinearSolveFailure(NumericalFailure):
    """Implicit diffusion solve residual exceeded its tolerance."""


class NegativeDensity(NumericalFailure):
    """Density step produced negatives beyond round-off with limiter off."""


class BlowUp(NumericalFailure):
    """Trajectory or profile exceeded the configured magnitude cap."""


class CertificateFailed(NumericalFailure):
    """No admissible constant found within the search bracket."""


class QuadratureBudgetExceeded(NumericalFailure):
    """Adaptive quadrature hit its refinement budget before converging."""


class TableRangeWarning(UserWarning):
    """Profile evaluated beyond its tabulated range; tail extrapolation used."""


class SingularGradientWarning(UserWarning):
    """Gradient map evaluated at p = 0 with gamma < 2; drift value returned."""


class ExponentRangeWarning(UserWarning):
    """Exponent outside the regime the estimate is proved for; value still computed."""


class GatePreflightWarning(UserWarning):
    """Config parsed fine but an exponent-gate hypothesis is not met."""
