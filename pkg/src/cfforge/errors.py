"""Exception types shared across the engine.

The CLI maps these onto exit codes: validation errors to 2, budget errors to 3
and precondition errors to 4.
"""


class ForgeError(Exception):
    pass


class ScheduleError(ForgeError, ValueError):
    """A (C,F) schedule violates one of its structural conditions at ``level``."""

    condition = "schedule"

    def __init__(self, level: int, detail: str = ""):
        self.level = level
        self.detail = detail
        msg = f"{self.condition} violated at level {level}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)

    def __reduce__(self):
        return (type(self), (self.level, self.detail))


class IndependenceViolation(ScheduleError):
    condition = "independence of F_n and C_(n+1)"


class ContainmentViolation(ScheduleError):
    condition = "containment F_n + C_(n+1) in F_(n+1)"


class StrongContainmentViolation(ScheduleError):
    condition = "strong containment a + F_n + C_(n+1) in F_(n+1)"


class BadCube(ScheduleError):
    condition = "cube shape"


class TooFewTranslations(ScheduleError):
    condition = "#C_(n+1) > 1"


class ScheduleTooShort(ForgeError):
    """The finite schedule has no level high enough for the requested action."""


class PreconditionError(ForgeError, ValueError):
    pass


class BudgetExhausted(ForgeError):
    """Filling did not pass half of the mass within the iteration budget."""

    def __init__(self, iterations: int, accumulated, context: dict | None = None):
        self.iterations = iterations
        self.accumulated = accumulated
        self.context = dict(context or {})
        msg = f"budget exhausted after {iterations} iterations (filled mass {accumulated})"
        if self.context:
            msg += " " + ", ".join(f"{k}={v}" for k, v in self.context.items())
        super().__init__(msg)

    def __reduce__(self):
        return (BudgetExhausted, (self.iterations, self.accumulated, self.context))


class CertificateViolation(ForgeError):
    """An internal consistency check failed; this indicates an engine bug."""


class DeadlineExceeded(ForgeError):
    pass


class WorkLimitExceeded(ForgeError):
    """A lift would produce more boxes than the configured cap."""
