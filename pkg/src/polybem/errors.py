"""Exception hierarchy for polybem.

Every failure mode of the numerical pipeline raises a named subclass of
:class:`PolybemError` so that callers (and the CLI) can distinguish usage
errors from numerical-certification failures.
"""


class PolybemError(Exception):
    """Base class for all polybem errors."""


# -- geometry ---------------------------------------------------------------

class SelfIntersecting(PolybemError):
    """The input curve is not simple (edges intersect)."""


class Degenerate(PolybemError):
    """Fewer than 3 distinct vertices remain after merging."""


class InvalidGrading(PolybemError):
    """Mesh grading exponent below 1."""


class TooCoarse(PolybemError):
    """Graded meshes need at least 2 panels per edge."""


# -- quadrature -------------------------------------------------------------

class UnsupportedOrder(PolybemError):
    """Gauss rule order outside the supported range."""


class DegenerateSegment(PolybemError):
    """Zero-length integration segment."""


class NoConvergence(PolybemError):
    """Adaptive subdivision exceeded the maximum depth."""


# -- linear algebra / operators ---------------------------------------------

class CapacityViolation(PolybemError):
    """Logarithmic capacity too close to (or above) 1; system near-singular."""


class SolveFailure(PolybemError):
    """Factorization breakdown or unacceptable residual."""


class IncompatibleData(PolybemError):
    """Right-hand side violates a compatibility condition (e.g. mean-zero)."""


class RankDeficiency(PolybemError):
    """A Gram matrix that should be invertible is numerically singular."""


# -- potentials -------------------------------------------------------------

class PointOnBoundary(PolybemError):
    """Potential evaluation requested exactly on the boundary."""


class ExtrapolationDivergence(PolybemError):
    """Richardson trace extrapolation did not settle."""


class IllConditionedFit(PolybemError):
    """Far-field ring fit is ill conditioned (ring too close to the curve)."""


# -- harmonic bases ----------------------------------------------------------

class RankCollapse(PolybemError):
    """Truncated SVD retained too few singular values."""


class MeshFailure(PolybemError):
    """Domain triangulation failed."""


# -- corner singular functions ------------------------------------------------

class NoReentrantCorner(PolybemError):
    """The polygon has no corner with opening angle above pi."""


class PointAtCorner(PolybemError):
    """Corner-singular function evaluated exactly at its corner vertex."""
