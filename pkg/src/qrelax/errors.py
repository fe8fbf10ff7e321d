"""Exception types raised by the qrelax modules."""


class QRelaxError(Exception):
    """Base class for all library errors."""


class NumericalError(QRelaxError):
    """A numerical procedure could not produce a certified answer."""


class NodeProximity(NumericalError):
    """The velocity field is requested too close to a node of the wave function."""


class StepUnderflow(NumericalError):
    """The adaptive integrator needed a step below ``min_step``."""


class JacobianSingular(NumericalError):
    pass


class AmbiguousWinding(NumericalError):
    """Phase unwrapping could not be resolved after maximum refinement."""


class FineTuned(NumericalError):
    """The state sits on a measure-zero (finely-tuned) parameter set."""


class Degenerate(FineTuned):
    pass


class TrackingAmbiguity(NumericalError):
    pass


class EmptyShell(QRelaxError):
    """The highest energy shell of the state carries no amplitude."""


class ZeroNearCircle(NumericalError):
    """A zero of the shell polynomial lies too close to the unit circle."""


class AttemptsExhausted(QRelaxError):
    pass


class InconsistentAcrossRadii(QRelaxError):
    pass


class SchemaError(QRelaxError):
    pass


class NormalizationError(QRelaxError):
    pass
