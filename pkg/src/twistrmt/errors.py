"""Exception hierarchy shared across the package."""


class TwistRMTError(Exception):
    """Base class for all package errors."""


class DomainError(TwistRMTError, ValueError):
    """An argument lies outside the domain of a formula."""


class PoleError(DomainError):
    """Moment requested at or beyond the pole at s = -1/2."""


class InvalidSpecError(DomainError):
    """An ensemble description is inconsistent or has zero mass."""


class InterpolationRangeError(DomainError):
    """A density table was queried outside its tabulated grid."""


class NumericalError(TwistRMTError, ArithmeticError):
    """A numerical routine failed to reach its accuracy contract."""


class ClusteredSpectrumError(NumericalError):
    """Eigenangle scan could not separate all N angles."""

    def __init__(self, message, seed=None):
        super().__init__(message if seed is None else f"{message} (seed={seed})")
        self.seed = seed


class SingularLocalFactorError(NumericalError):
    def __init__(self, p):
        super().__init__(f"local factor denominator vanishes at p={p}")
        self.p = p


class DataValidationError(TwistRMTError):
    """Input data violates its schema or invariants.

    ``problems`` holds ``(row, message)`` pairs; row is ``None`` for
    file-level problems.
    """

    def __init__(self, message, problems=()):
        self.problems = list(problems)
        if self.problems:
            shown = "; ".join(
                f"row {r}: {m}" if r is not None else m for r, m in self.problems[:10]
            )
            more = len(self.problems) - 10
            message = f"{message}: {shown}" + (f" (+{more} more)" if more > 0 else "")
        super().__init__(message)


class DataGapError(DataValidationError):
    def __init__(self, p):
        super().__init__(f"no lambda_p supplied for prime p={p}")
        self.p = p
