"""Exception types shared across the package."""


class BwPlannerError(Exception):
    """Base class for all package errors."""


class DomainError(BwPlannerError, ValueError):
    """An argument lies outside the domain of a function."""


class UnstableSystem(BwPlannerError):
    """The load rho = lambda / (C mu) is not below one."""

    def __init__(self, rho, where=""):
        self.rho = rho
        label = f"rho_{where}" if where else "rho"
        super().__init__(f"unstable model: {label} = {rho:.6g} >= 1")


class PrecisionError(BwPlannerError, ArithmeticError):
    """A finite-precision computation left the representable range."""


class NumericalDegeneracy(BwPlannerError, ArithmeticError):
    pass


class InfeasibleQuota(BwPlannerError, ValueError):
    pass


class NotApplicable(BwPlannerError):
    """A check was requested for a mode where it does not hold."""


class MonotonicityError(BwPlannerError):
    """A search probe sequence violated the monotone decrease it relies on."""

    def __init__(self, message, probes):
        self.probes = list(probes)
        super().__init__(message)


class NonConvergence(BwPlannerError):
    pass


class InfeasibleBudget(NonConvergence):
    """The budget lies at or below the limit of J_bar as C grows without bound."""
