"""Exception hierarchy shared by the estimators, oracles and CLI."""


class SpectralSureError(Exception):
    """Base class for every error raised by this package."""


class InvalidSpecError(SpectralSureError, ValueError):
    """A penalty or experiment parameter violates its constraints."""


class NegativeInputError(SpectralSureError, ValueError):
    pass


class NonConvergenceError(SpectralSureError, RuntimeError):
    """An inner iterative solver hit its iteration cap."""


class AtKinkError(SpectralSureError, ValueError):
    """A derivative was requested at a non-differentiable point."""


class NotApplicableError(SpectralSureError, ValueError):
    """Stein's lemma does not apply to the requested estimator."""


class RepeatedSingularValuesError(SpectralSureError, ValueError):
    """Repeated (or zero) singular values where a simple spectrum is required."""


class TiedAtCutError(RepeatedSingularValuesError):
    """sigma_K == sigma_{K+1}: the reduced-rank estimator is discontinuous here."""


class MissingDensityError(SpectralSureError, ValueError):
    pass


class DegenerateSampleError(SpectralSureError, ValueError):
    """A sample has no spread (e.g. constant), so no bandwidth exists."""


class ShapeMismatchError(SpectralSureError, ValueError):
    pass


class DifferentiabilityError(SpectralSureError, ValueError):
    """The spectral function lacks the (directional) derivative a formula needs."""
