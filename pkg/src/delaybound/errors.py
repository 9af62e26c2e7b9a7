"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class DelayBoundError(Exception):
    """Base class for all package errors."""


class IntegrationError(DelayBoundError):
    """Numerical failure while integrating a delay equation."""


class BlowUp(IntegrationError):
    """The state norm escaped the configured overflow bound or growth monitor."""

    def __init__(self, t: float, norm: float, reason: str = "overflow"):
        self.t = t
        self.norm = norm
        self.reason = reason
        super().__init__(f"blow-up ({reason}) at t={t:.6g}, |x|={norm:.6g}")


class StepUnderflow(IntegrationError):
    def __init__(self, t: float, step: float):
        self.t = t
        self.step = step
        super().__init__(f"step size {step:.3g} fell below the minimum at t={t:.6g}")


class DelayViolation(DelayBoundError):
    """A delay left its declared band [h_lower, h_upper] or is not positive."""


class OutOfDomain(DelayBoundError):
    """Trajectory evaluated outside [t_start - h_upper, t_end]."""


class InvalidSystem(DelayBoundError):
    """A system definition violates a structural requirement."""


class SingularFundamental(DelayBoundError):
    """The fundamental matrix lost invertibility on the sampling grid."""


class NonPositiveNorm(DelayBoundError):
    pass


class UnsupportedForm(DelayBoundError):
    """A nonlinearity is not expressible as monomials / linear matrix terms."""


class DegreeZeroTerm(DelayBoundError):
    pass


class WindowMismatch(DelayBoundError):
    """Objects built on incompatible time windows were combined."""


class InvalidSup(DelayBoundError):
    pass


class NotLinear(DelayBoundError):
    pass


class BadParameters(DelayBoundError):
    pass


class SeedBlowsUp(DelayBoundError):
    def __init__(self, radius: float, where: str = ""):
        self.radius = radius
        super().__init__(f"seed radius {radius:g} already blows up{where}")


class NoBlowUpFound(DelayBoundError):
    def __init__(self, theta: float | None, cap: float):
        self.theta = theta
        self.cap = cap
        super().__init__(f"no blow-up up to radius cap {cap:g} (theta={theta})")


class ConfigMismatch(DelayBoundError):
    pass


class InvalidParameters(DelayBoundError):
    pass


class ScenarioError(DelayBoundError):
    """Scenario file could not be parsed or validated."""
