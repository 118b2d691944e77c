"""Exception types shared across the package."""


class HudaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(HudaError, ValueError):
    pass


class NoEventFlagged(HudaError, ValueError):
    pass


class UnbalancedSystem(HudaError, ValueError):
    pass


class LoopyTopology(HudaError):
    def __init__(self, report):
        self.report = report
        super().__init__(f"connection topology contains algebraic loops: {report}")


class NoSolution(HudaError):
    def __init__(self, message, residual_norm):
        self.residual_norm = residual_norm
        super().__init__(f"{message} (residual norm {residual_norm:.3e})")


class NoConvergence(HudaError):
    def __init__(self, message, residual_norm):
        self.residual_norm = residual_norm
        super().__init__(f"{message} (residual norm {residual_norm:.3e})")


class StepSizeUnderflow(HudaError):
    pass


class EventCascadeLimit(HudaError):
    pass


class NoCrossing(HudaError, ValueError):
    pass


class NonFiniteGradient(HudaError, FloatingPointError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"non-finite gradient entry at parameter index {index}")


class EmptyHorizon(HudaError, ValueError):
    pass


class UnknownScenario(HudaError, KeyError):
    pass


class UnknownKind(HudaError, KeyError):
    pass


class TrainingError(HudaError):
    def __init__(self, step, cause):
        self.step = step
        super().__init__(f"training failed at step {step}: {cause!r}")
