"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: usage/domain problems exit 2,
numerical failures exit 1.
"""


class QEmitterError(Exception):
    pass


class DomainError(QEmitterError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(QEmitterError, ValueError):
    """Malformed request: bad unit tag, missing data, inconsistent inputs."""


class DegenerateError(QEmitterError, ValueError):
    """A ratio or normalisation has a zero (or non-positive) denominator."""


class NumericalError(QEmitterError, RuntimeError):
    pass


class RankDeficiencyError(NumericalError):
    """Normal matrix of a least-squares problem is singular.

    ``parameters`` names the free parameters spanning the null space;
    ``result`` carries the (uncertainty-free) best point found, if any.
    """

    def __init__(self, message, parameters=(), result=None):
        super().__init__(message)
        self.parameters = tuple(parameters)
        self.result = result
