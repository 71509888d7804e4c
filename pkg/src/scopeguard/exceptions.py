"""Exception hierarchy.

Every error raised on purpose derives from :class:`ScopeGuardError`, so callers
(and the CLI) can separate input problems from statistical infeasibility.
"""


class ScopeGuardError(Exception):
    """Base class for all package errors."""


# input errors -------------------------------------------------------------

class InvalidValue(ScopeGuardError, ValueError):
    """A value is non-finite or outside its allowed domain."""


class EmptySample(ScopeGuardError, ValueError):
    pass


class InvalidConfig(ScopeGuardError, ValueError):
    pass


class EmptyClass(ScopeGuardError, ValueError):
    pass


class SchemaMismatch(ScopeGuardError, ValueError):
    """Feature arity or column names disagree between two inputs."""


class MissingPredictions(ScopeGuardError, ValueError):
    pass


class NotCalibrated(ScopeGuardError, RuntimeError):
    pass


class AlreadyRegistered(ScopeGuardError, RuntimeError):
    pass


class UnknownClass(ScopeGuardError, KeyError):
    """A predicted class has no cell in the training scope set."""

    def __init__(self, classes):
        self.classes = sorted(int(c) for c in classes)
        super().__init__(f"predicted class(es) {self.classes} absent from training scope set")

    def __str__(self):
        return self.args[0]


# statistical infeasibility --------------------------------------------------

class StatisticalInfeasibility(ScopeGuardError):
    """The data do not support the requested statistical procedure."""


class DegenerateVariance(StatisticalInfeasibility, ValueError):
    pass


class EffectTooSmall(StatisticalInfeasibility, ValueError):
    pass


class NoUsableEffect(StatisticalInfeasibility, ValueError):
    pass


class NoIncorrectSamples(StatisticalInfeasibility, ValueError):
    pass


class NoFeasibleThreshold(StatisticalInfeasibility, ValueError):
    def __init__(self, message, best_fpr=None):
        super().__init__(message)
        self.best_fpr = best_fpr
