"""Exception hierarchy shared by all modules."""


class AMLError(Exception):
    """Base class for every error raised by this package."""


class LabelError(AMLError, KeyError):
    """Unknown or duplicate subsystem label."""

    def __str__(self):
        return Exception.__str__(self)


class ShapeError(AMLError, ValueError):
    """Operand shapes or factor dimensions do not match."""


class NotHermitianError(AMLError, ValueError):
    """An operator expected to be Hermitian is not, within tolerance."""

    def __init__(self, violation: float, tol: float):
        self.violation = violation
        self.tol = tol
        super().__init__(f"operator is not Hermitian: max|H - H^dag| = {violation:.3e} > {tol:.1e}")


class DensityError(AMLError, ValueError):
    """Base class for density-operator invariant violations."""


class HermiticityViolation(DensityError, NotHermitianError):
    pass


class PositivityViolation(DensityError):
    def __init__(self, min_eigenvalue: float, tol: float):
        self.min_eigenvalue = min_eigenvalue
        self.tol = tol
        super().__init__(f"operator is not positive semidefinite: min eigenvalue {min_eigenvalue:.6g} < -{tol:.1e}")


class TraceViolation(DensityError):
    def __init__(self, trace: complex, tol: float):
        self.trace = trace
        self.tol = tol
        super().__init__(f"trace {trace:.6g} deviates from 1 by more than {tol:.1e}")


class RankDeficiencyError(AMLError, ValueError):
    """A set of operators that must be linearly independent is not."""

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"operator at index {index} is linearly dependent on its predecessors")


class SpanError(AMLError, ValueError):
    """Input lies outside the subspace on which a map is defined."""

    def __init__(self, residual: float):
        self.residual = residual
        super().__init__(f"input is outside the span of the assignment basis (residual {residual:.3e})")


class UnitarityError(AMLError, ValueError):
    def __init__(self, violation: float, tol: float):
        self.violation = violation
        super().__init__(f"operator is not unitary: max|U^dag U - I| = {violation:.3e} > {tol:.1e}")
