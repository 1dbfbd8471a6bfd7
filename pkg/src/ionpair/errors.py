"""Exception types raised by the simulator."""


class IonPairError(Exception):
    """Base class for every error raised by :mod:`ionpair`."""


class SpectrumFormatError(IonPairError, ValueError):
    """A spectrum file is malformed or violates the table invariants."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SpectralRangeError(IonPairError, ValueError):
    """A wavelength falls outside the sampled range of a spectral table."""


class FiberSpecError(IonPairError, ValueError):
    """A fiber description violates its physical invariants."""


class ModeApproximationError(IonPairError, ValueError):
    pass


class PropagationError(IonPairError, RuntimeError):
    pass


class DivergenceError(PropagationError):
    def __init__(self, z):
        self.z = z
        super().__init__(f"non-finite channel power at z = {z:.6g} m")


class AccuracyError(PropagationError):
    pass


class ConvergenceError(PropagationError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"bidirectional relaxation did not converge after {iterations} "
            f"iterations (last residual {residual:.3e})"
        )


class FitError(IonPairError, ValueError):
    pass


class RatioOutOfRangeError(IonPairError, ValueError):
    def __init__(self, ratio, r_min, r_max):
        self.ratio = ratio
        self.interval = (r_min, r_max)
        super().__init__(
            f"measured ratio {ratio:.6g} is outside the achievable interval "
            f"[{r_min:.6g}, {r_max:.6g}]"
        )


class DegenerateModelError(IonPairError, ValueError):
    """The ratio curve is not strictly monotone, so inversion is refused."""


class AmbiguousOptimumError(IonPairError, ValueError):
    def __init__(self, maxima):
        self.maxima = list(maxima)
        listing = ", ".join(f"{x:.4g} m" for x in self.maxima)
        super().__init__(f"output is not unimodal over the bracket; local maxima at {listing}")


class SweepError(IonPairError, RuntimeError):
    def __init__(self, x, cause):
        self.x = x
        self.cause = cause
        super().__init__(f"propagation failed at x = {x!r}: {cause}")


class ConfigError(IonPairError, ValueError):
    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
