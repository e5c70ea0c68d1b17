"""Exception types shared across the toolkit."""

from .lti import PoleOnAxisError


class AssumptionViolation(ValueError):
    """The reset element does not satisfy the convergence condition on A_rho exp(A_r delta)."""


class PoleAtHarmonicError(ZeroDivisionError):
    def __init__(self, omega, n, what="(j n omega I - A_r)"):
        self.omega = omega
        self.n = n
        super().__init__(f"{what} is singular at omega={omega!r} rad/s, n={n}")


class SingularSensitivityError(ZeroDivisionError):
    def __init__(self, omega, what="1 + L1"):
        self.omega = omega
        super().__init__(f"{what} vanishes at omega={omega!r} rad/s")


class DegenerateSpectrumError(ValueError):
    """First-harmonic magnitude is zero so relative measures are undefined."""


class NotSettledError(RuntimeError):
    """Simulation did not reach a periodic steady state."""


__all__ = [
    "AssumptionViolation", "PoleAtHarmonicError", "SingularSensitivityError",
    "DegenerateSpectrumError", "NotSettledError", "PoleOnAxisError",
]
