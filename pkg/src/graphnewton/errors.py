"""Exception hierarchy shared by all modules."""


class GraphNewtonError(Exception):
    """Base class for every error raised by this package."""


# graph construction / evaluation

class GraphError(GraphNewtonError):
    pass


class CycleDetected(GraphError):
    pass


class MissingTransition(GraphError):
    pass


class DanglingParent(GraphError):
    pass


class DimensionMismatch(GraphNewtonError):
    pass


class NonFiniteState(GraphNewtonError):
    pass


class NonFiniteAdjoint(GraphNewtonError):
    pass


class DimensionCapExceeded(GraphNewtonError):
    pass


class ParseError(GraphNewtonError):
    pass


# linear algebra

class SolverError(GraphNewtonError):
    pass


class SingularPivot(SolverError):
    def __init__(self, bag, message=None):
        self.bag = bag
        super().__init__(message or f"bag {bag}: local KKT block cannot eliminate its interior variables")


class RankDeficientConstraints(SolverError):
    pass


class ResidualTooLarge(SolverError):
    def __init__(self, residual, tol):
        self.residual = residual
        self.tol = tol
        super().__init__(f"KKT residual {residual:.3e} exceeds tolerance {tol:.1e}")


class SingularSystem(SolverError):
    pass


# newton / sqp

class InfeasibleTrace(GraphNewtonError):
    pass


class MissingSecondDerivative(GraphNewtonError):
    pass


class LineSearchFailed(SolverError):
    pass
