"""Indirect boundary-integral solvers for Laplace problems on polygons.

All solvers use layer ansatz representations:

* interior/exterior Dirichlet: ``u = S q`` with ``V q = p`` (the
  single-layer trace is two-sided, so one solve covers both sides; the
  exterior solution carries the far field ``a ln|x| + O(1/|x|)`` with
  ``a = -<q, 1>/(2 pi)``),
* interior/exterior Neumann: ``u = D p`` with a hypersingular solve on
  the mean-zero trace space.  With the sign conventions of
  :mod:`polybem.boundary_ops` (W assembled by integration by parts),
  ``gamma_n+ D = +W`` and ``gamma_n- D = -W`` as Galerkin operators, so
  the interior problem solves ``W p = -b`` and the exterior ``W p = +b``.
* transmission problems: prescribed jumps are representable directly
  (given Neumann jump q: ``u = S q``; given Dirichlet jump p: ``u = D p``;
  both: ``u = S q + D p``); prescribed one-sided data reduce to the
  V / W solves above.

Right-hand data may be given as TraceVector/DensityVector function data
or as raw Galerkin pairing vectors (used by the discrete round trips).
Exterior solutions report their affine correction in the orthonormal
bases of :mod:`polybem.special_densities` when those are supplied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import potentials
from .boundary_ops import (DensityVector, OperatorSuite, TraceVector,
                           mean_value, solve_V, solve_W)
from .errors import IncompatibleData

INV_2PI = 1.0 / (2.0 * np.pi)


@dataclass
class ExteriorFarField:
    """Far-field structure of an exterior solution."""

    log_coefficient: float
    affine_single: np.ndarray | None = None  # coordinates in {q_j}
    affine_double: np.ndarray | None = None  # coordinates in {p_j}


@dataclass
class BiesSolution:
    """A boundary-integral solution in layer-ansatz form."""

    kind: str  # "single" | "double" | "single+double"
    density: DensityVector | None = None
    trace: TraceVector | None = None
    far_field: ExteriorFarField | None = None
    diagnostics: dict = field(default_factory=dict)

    def evaluate(self, points) -> np.ndarray:
        """Evaluate the representation at off-boundary points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(pts))
        if self.density is not None:
            out += potentials.single_layer_values(
                self.density.mesh, self.density.coefficients, pts)
        if self.trace is not None:
            out += potentials.double_layer_values(
                self.trace.mesh, self.trace.coefficients, pts)
        return out

    @property
    def mesh(self):
        src = self.density if self.density is not None else self.trace
        return src.mesh


def _residual(matrix, x, b) -> float:
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return 0.0
    return float(np.linalg.norm(matrix @ x - b) / nb)


# ---------------------------------------------------------------------------
# Dirichlet problems (single-layer ansatz)
# ---------------------------------------------------------------------------

def interior_dirichlet(suite: OperatorSuite, p,
                       margin: float = 0.05) -> BiesSolution:
    """Solve the interior Dirichlet problem with ``u = S q``, ``V q = p``."""
    q = solve_V(suite.V, p, margin=margin)
    from .boundary_ops import _as_pairing_p0
    b = _as_pairing_p0(suite.mesh, p)
    return BiesSolution(
        kind="single", density=q,
        diagnostics={"boundary_residual": _residual(suite.V.matrix,
                                                    q.coefficients, b)})


def exterior_dirichlet(suite: OperatorSuite, p, margin: float = 0.05,
                       affine_basis=None) -> BiesSolution:
    """Exterior Dirichlet solve; reports the log and affine far field.

    The same single-layer ansatz solves the exterior problem (its
    Dirichlet trace is two-sided); the far field carries
    ``a = -<q,1>/(2 pi)`` and, when ``affine_basis`` is given, the
    coordinates of q in the V-orthonormal affine basis.
    """
    sol = interior_dirichlet(suite, p, margin=margin)
    q = sol.density
    a = -INV_2PI * q.total_mass()
    coords = None
    if affine_basis is not None:
        coords = np.array([
            q.coefficients @ suite.V.matrix @ qj.coefficients
            for qj in affine_basis.densities])
    sol.kind = "single"
    sol.far_field = ExteriorFarField(log_coefficient=a, affine_single=coords)
    return sol


# ---------------------------------------------------------------------------
# Neumann problems (double-layer ansatz)
# ---------------------------------------------------------------------------

def _neumann_pairings(suite: OperatorSuite, q) -> np.ndarray:
    from .boundary_ops import _as_pairing_p1
    return _as_pairing_p1(suite.mesh, q)


def interior_neumann(suite: OperatorSuite, q,
                     compat_tol: float = 1e-8) -> BiesSolution:
    """Interior Neumann problem: ``u = D p`` with ``gamma_n- u = q``.

    The data must be Galerkin-orthogonal to constants (compatibility
    ``<q, 1> = 0``); the returned trace is normalized to mean zero, so
    the solution is the unique mean-normalized one.
    """
    b = _neumann_pairings(suite, q)
    p = solve_W(suite.W, -b, compat_tol=compat_tol)
    return BiesSolution(
        kind="double", trace=p,
        diagnostics={"boundary_residual": _residual(suite.W.matrix,
                                                    p.coefficients, -b),
                     "trace_mean": mean_value(p)})


def exterior_neumann(suite: OperatorSuite, q, compat_tol: float = 1e-8,
                     affine_basis=None) -> BiesSolution:
    """Exterior Neumann problem: ``u = D p`` with ``gamma_n+ u = q``.

    The double-layer field decays like O(1/|x|) (no log term); the
    affine correction coordinates in the W-orthonormal basis are reported
    when ``affine_basis`` is given.
    """
    b = _neumann_pairings(suite, q)
    p = solve_W(suite.W, b, compat_tol=compat_tol)
    coords = None
    if affine_basis is not None:
        coords = np.array([
            p.coefficients @ suite.W.matrix @ pj.coefficients
            for pj in affine_basis.traces])
    return BiesSolution(
        kind="double", trace=p,
        far_field=ExteriorFarField(log_coefficient=0.0,
                                   affine_double=coords),
        diagnostics={"boundary_residual": _residual(suite.W.matrix,
                                                    p.coefficients, b),
                     "trace_mean": mean_value(p)})


# ---------------------------------------------------------------------------
# Transmission problems
# ---------------------------------------------------------------------------

def transmission_p1(suite: OperatorSuite, q=None, p=None,
                    margin: float = 0.05) -> BiesSolution:
    """Single-layer transmission problem (continuous Dirichlet trace).

    Given the Neumann-trace jump ``q``, the solution is directly
    ``u = S q``.  Given the common Dirichlet trace ``p``, solve
    ``V qbar = p``.
    """
    if (q is None) == (p is None):
        raise ValueError("provide exactly one of q (jump) or p (trace)")
    if q is not None:
        qv = q if isinstance(q, DensityVector) else \
            DensityVector(suite.mesh, np.asarray(q, dtype=float))
        return BiesSolution(kind="single", density=qv,
                            diagnostics={"boundary_residual": 0.0})
    return interior_dirichlet(suite, p, margin=margin)


def transmission_p2(suite: OperatorSuite, p=None, q=None,
                    compat_tol: float = 1e-8) -> BiesSolution:
    """Double-layer transmission problem (continuous Neumann trace).

    Given the Dirichlet-trace jump ``p``, the solution is directly
    ``u = D p``.  Given the common (exterior-side) Neumann trace ``q``,
    solve ``W pbar = q`` on the mean-zero space.
    """
    if (p is None) == (q is None):
        raise ValueError("provide exactly one of p (jump) or q (trace)")
    if p is not None:
        pv = p if isinstance(p, TraceVector) else \
            TraceVector(suite.mesh, np.asarray(p, dtype=float))
        return BiesSolution(kind="double", trace=pv,
                            diagnostics={"boundary_residual": 0.0})
    b = _neumann_pairings(suite, q)
    pbar = solve_W(suite.W, b, compat_tol=compat_tol)
    return BiesSolution(
        kind="double", trace=pbar,
        diagnostics={"boundary_residual": _residual(suite.W.matrix,
                                                    pbar.coefficients, b)})


def transmission_p3(suite: OperatorSuite, p, q) -> BiesSolution:
    """Both jumps prescribed: the unique solution ``u = S q + D p``."""
    qv = q if isinstance(q, DensityVector) else \
        DensityVector(suite.mesh, np.asarray(q, dtype=float))
    pv = p if isinstance(p, TraceVector) else \
        TraceVector(suite.mesh, np.asarray(p, dtype=float))
    a = -INV_2PI * qv.total_mass()
    return BiesSolution(kind="single+double", density=qv, trace=pv,
                        far_field=ExteriorFarField(log_coefficient=a),
                        diagnostics={"boundary_residual": 0.0})


# ---------------------------------------------------------------------------
# Verification helpers
# ---------------------------------------------------------------------------

def verify_jumps(solution: BiesSolution,
                 eps0_factor: float = 1e-2) -> dict:
    """Extract both trace jumps of a solution at panel midpoints.

    Returns the Dirichlet jump ``gamma_d+ u - gamma_d- u`` and the
    Neumann jump ``gamma_n+ u + gamma_n- u`` as midpoint arrays.
    """
    mesh = solution.mesh
    fn = solution.evaluate
    out = {}
    gdp = potentials.one_sided_trace(fn, mesh, "+", "dirichlet", eps0_factor)
    gdm = potentials.one_sided_trace(fn, mesh, "-", "dirichlet", eps0_factor)
    gnp_ = potentials.one_sided_trace(fn, mesh, "+", "neumann", eps0_factor)
    gnm = potentials.one_sided_trace(fn, mesh, "-", "neumann", eps0_factor)
    out["dirichlet_jump"] = gdp - gdm
    out["neumann_jump"] = gnp_ + gnm
    return out
