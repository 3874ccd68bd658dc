"""Exception hierarchy.

Non-convergence of an outer Newton run is never an exception; it is a
terminal status on the trace.  Exceptions are reserved for oracle and
subproblem failures.
"""


class TiltNewtonError(Exception):
    """Base class for all package errors."""


class DimensionError(TiltNewtonError, ValueError):
    """Array shapes do not match the problem dimensions."""


class Infeasible(TiltNewtonError):
    """A set, multiplier system or QP has no feasible point."""


class UnsupportedSet(TiltNewtonError):
    """The operation is not implemented for this kind of set."""


class NotMember(TiltNewtonError):
    """A point expected to lie in a set does not."""


class NotNormal(TiltNewtonError):
    """A vector expected to be a normal to a set is not."""


class NotInGraph(TiltNewtonError):
    """A (point, normal) pair is not in the graph of the normal cone."""


class QPError(TiltNewtonError):
    """A quadratic subproblem did not reach an optimal solution."""


class QPUnbounded(QPError):
    pass


class QPMaxIter(QPError):
    pass


class InnerSolveFailed(TiltNewtonError):
    """The proximal-mapping inner solver did not reach its tolerance."""


class SingularSelection(TiltNewtonError):
    """The selected generalized Hessian is singular."""


class SubproblemUnbounded(TiltNewtonError):
    """The Newton model has no minimizer (tilt-stable regime lost)."""


class MultiplierInfeasible(Infeasible):
    """No Lagrange multiplier matches the given subgradient."""


class DegenerateMultipliers(TiltNewtonError):
    """The multiplier set is unbounded, so the max over it is undefined."""


class NotStationary(TiltNewtonError):
    """A probe was asked to certify a point that is not stationary."""


class ConfigInvalid(TiltNewtonError, ValueError):
    """An experiment or problem file failed schema validation."""
