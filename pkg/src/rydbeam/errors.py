"""Exception hierarchy shared by all rydbeam modules."""


class RydbeamError(Exception):
    """Base class for every error raised by this package."""


class NumericalError(RydbeamError):
    """Base class for failures of a numerical procedure (CLI exit code 3)."""


class SingularSystem(NumericalError):
    """The trace-constrained Liouvillian is numerically rank deficient."""

    def __init__(self, message, velocity=None, position=None):
        super().__init__(message)
        self.velocity = velocity
        self.position = position


class StepTooSmall(NumericalError):
    """Finite-difference step is below the solver noise floor."""


class AmplitudeNull(NumericalError):
    """Composite LO amplitude vanishes, so its phase is undefined."""

    def __init__(self, message, positions=None):
        super().__init__(message)
        self.positions = positions


class WeakLoViolation(RydbeamError, ValueError):
    """Signal Rabi frequency is not small compared to the LO."""


class AliasingRisk(RydbeamError, ValueError):
    """Sample rate too low for the intermediate frequencies involved."""


class NoCrossing(NumericalError):
    """Pattern never falls to half power inside the sampled sector."""

    censored = True


class DegenerateFit(NumericalError):
    """Two-peak model cannot be resolved from the trace."""


class NonConvergence(NumericalError):
    """Optimizer exhausted its evaluation budget."""


class LockFailure(NumericalError):
    """Receiver could not acquire symbol timing / carrier phase."""

    def __init__(self, message, metric=None, result=None):
        super().__init__(message)
        self.metric = metric
        self.result = result


class LengthMismatch(RydbeamError, ValueError):
    """Bit sequences of unequal length were compared."""


class ConfigError(RydbeamError, ValueError):
    """Invalid configuration document (CLI exit code 2)."""


class QuasiStaticWarning(UserWarning):
    """Intermediate frequency is not small compared to the optical relaxation."""
