"""Exception taxonomy shared across the toolkit.

Every failure mode that callers are expected to branch on gets its own
class; the CLI maps these onto exit codes.
"""


class MssmpcError(Exception):
    """Base class for all toolkit errors."""


class NotPositiveDefinite(MssmpcError):
    """A matrix required to be positive definite is not."""


class NoConvergence(MssmpcError):
    """An iterative routine hit its iteration cap before converging."""


class UnstableScaledSystem(MssmpcError):
    """Spectral radius of the closed loop is not strictly below lambda."""


class Unstabilizable(MssmpcError):
    """Riccati iteration diverged; the pair (A, B) is not stabilizable."""


class DegenerateFacet(MssmpcError):
    """A polytope facet has non-positive curvature against the shape matrix."""


class Unbounded(MssmpcError):
    """A set or program is unbounded in some direction."""


class RhoBelowFloor(MssmpcError):
    """Chebychev radius fell below the recursive-feasibility floor."""


class InvalidEpsilon(MssmpcError):
    """Violation level outside (0, 1)."""


class RadiusBelowRho(MssmpcError):
    """A relaxed tube radius is smaller than the Chebychev radius."""


class ValidationFailed(MssmpcError):
    """A design-parameter invariant failed; the message names the check."""


class DesignInvalid(MssmpcError):
    """A controller was asked to build a program from an invalid design."""


class SolverFailure(MssmpcError):
    """The conic solver did not return a usable solution."""


class NumericalBreakdown(SolverFailure):
    """A factorization inside the solver failed."""


class MaxIterReached(SolverFailure):
    """The interior-point iteration cap was exhausted."""


class InfeasibleAtStart(MssmpcError):
    """The open-loop-capable controller found no feasible plan at k = 0."""
