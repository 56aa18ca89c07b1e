"""Exception hierarchy.

Every error carries a short machine-readable ``code`` that the CLI prints as a
prefix on standard error. Input problems derive from :class:`InputError`
(exit status 1); numerical problems derive from :class:`NumericalError`
(exit status 2).
"""


class BoltzGreenError(Exception):
    code = "E_GENERIC"


class InputError(BoltzGreenError, ValueError):
    code = "E_INPUT"


class DomainError(InputError):
    code = "E_DOMAIN"


class BranchCutError(InputError):
    code = "E_BRANCH"


class InvalidPhaseError(InputError):
    code = "E_PHASE"


class SingularOriginError(InputError):
    code = "E_ORIGIN"


class CoplanarDegenerateError(InputError):
    code = "E_DEGENERATE"


class PreconditionError(InputError):
    code = "E_PRECONDITION"


class NumericalError(BoltzGreenError, ArithmeticError):
    code = "E_NUMERIC"


class NumericalConsistencyError(NumericalError):
    code = "E_CONSISTENCY"


class DispersionSingularityError(NumericalError):
    code = "E_DISPERSION"


class LadderRangeError(NumericalError, OverflowError):
    code = "E_RANGE"

    def __init__(self, message, degree=None):
        super().__init__(message)
        self.degree = degree


class ConventionError(NumericalError):
    code = "E_CONVENTION"


class TailDivergenceError(NumericalError):
    code = "E_TAIL"
