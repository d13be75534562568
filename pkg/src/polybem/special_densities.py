"""Equilibrium density, logarithmic capacity and the affine bases.

The equilibrium density ``e`` is the unique density whose single-layer
potential is constant on the boundary, normalized to ``<e, 1> = 1``; the
constant value is the Robin constant ``c`` and the logarithmic capacity
is ``exp(-2 pi c)``.  On a disk of radius R the capacity equals R.

The affine bases realize the finite-dimensional spaces attached to the
far-field expansion:

* three densities ``q_j`` with ``<q_j, V q_k> = delta_jk`` spanning the
  preimage of the affine traces under the single-layer trace operator;
  the interior field of each is an affine function ``P_j``;
* two mean-zero traces ``p_j`` with ``<W p_j, p_k> = delta_jk`` spanning
  the preimage of span{n1, n2} under the hypersingular operator; the
  interior double-layer field of each is an affine function ``Q_j``,
  recovered here by a least-squares fit on an interior sample grid.

Both Gram-Schmidt orders are fixed ((1, x1, x2) and (n1, n2)); any other
orthonormal choice spans the same spaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .boundary_ops import (BoundaryOperatorMatrix, DensityVector,
                           TraceVector, affine_pairings_p0, pair_p1,
                           robin_constant, solve_W)
from .errors import CapacityViolation, RankDeficiency
from .geometry import BoundaryMesh, SimilarityTransform


@dataclass
class EquilibriumData:
    """Equilibrium density, Robin constant and logarithmic capacity."""

    e_gamma: DensityVector
    c_gamma: float
    capacity: float


def equilibrium_density(V: BoundaryOperatorMatrix) -> EquilibriumData:
    """Solve V e = 1 and normalize to unit total mass.

    The Robin constant comes from the unnormalized solve,
    ``c = 1 / <e_raw, 1>``, so a single factorization yields both the
    density and the capacity.  Uses a symmetric-indefinite solve, so it
    remains usable on curves with capacity above 1 (where V is no longer
    positive definite); only the near-singular case capacity ~ 1 raises.

    Raises
    ------
    CapacityViolation
        If the capacity is numerically indistinguishable from 1.
    """
    c_gamma, e_raw = robin_constant(V)
    total = float(e_raw @ V.mesh.lengths)
    e = DensityVector(V.mesh, e_raw / total)
    return EquilibriumData(e_gamma=e, c_gamma=c_gamma,
                           capacity=float(np.exp(-2.0 * np.pi * c_gamma)))


def recommend_rescale(eq: EquilibriumData,
                      target_c: float) -> SimilarityTransform:
    """Dilatation making the Robin constant equal ``target_c``.

    Under ``x -> s x`` the Robin constant shifts by ``-ln(s)/(2 pi)``, so
    ``s = exp(-2 pi (target_c - c))``.
    """
    if target_c <= 0.0:
        raise ValueError("target Robin constant must be positive")
    scale = float(np.exp(-2.0 * np.pi * (target_c - eq.c_gamma)))
    return SimilarityTransform(scale=scale, translation=np.zeros(2))


@dataclass
class AffineSingleBasis:
    """V-orthonormal densities q_j with affine interior fields P_j.

    ``P[j]`` holds the coefficients (a, b1, b2) of
    ``P_j(x) = a + b1 x1 + b2 x2``.
    """

    densities: list
    P: np.ndarray

    def interior_values(self, j: int, points: np.ndarray) -> np.ndarray:
        a, b1, b2 = self.P[j]
        pts = np.atleast_2d(points)
        return a + b1 * pts[:, 0] + b2 * pts[:, 1]


@dataclass
class AffineDoubleBasis:
    """W-orthonormal mean-zero traces p_j with affine interior fields Q_j."""

    traces: list
    Q: np.ndarray
    fit_residual: float

    def interior_values(self, j: int, points: np.ndarray) -> np.ndarray:
        a, b1, b2 = self.Q[j]
        pts = np.atleast_2d(points)
        return a + b1 * pts[:, 0] + b2 * pts[:, 1]


def _gram_schmidt_coefficients(gram: np.ndarray) -> np.ndarray:
    """Lower-triangular C with C G C^T = I (ordered Gram-Schmidt)."""
    try:
        chol = scipy.linalg.cholesky(gram, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise RankDeficiency(f"Gram matrix numerically singular: {exc}") \
            from exc
    return scipy.linalg.solve_triangular(chol, np.eye(len(gram)), lower=True)


def affine_single_basis(V: BoundaryOperatorMatrix,
                        margin: float = 0.05) -> AffineSingleBasis:
    """Orthonormalize the V-preimages of the affine traces {1, x1, x2}.

    Raises
    ------
    CapacityViolation
        c_Gamma below ``margin`` (V nearly singular on constants).
    RankDeficiency
        Degenerate Gram matrix (cannot occur for a Jordan curve).
    """
    mesh = V.mesh
    rhs = np.stack(affine_pairings_p0(mesh), axis=0)  # (3, n)
    try:
        factor = scipy.linalg.cho_factor(V.matrix)
    except scipy.linalg.LinAlgError as exc:
        raise CapacityViolation(
            "V is not positive definite (capacity >= 1?)") from exc
    r = scipy.linalg.cho_solve(factor, rhs.T).T  # (3, n)
    c_gamma = 1.0 / float(r[0] @ mesh.lengths)
    if c_gamma < margin:
        raise CapacityViolation(
            f"Robin constant {c_gamma:.4g} below margin {margin}")
    gram = r @ rhs.T
    gram = 0.5 * (gram + gram.T)
    coeff = _gram_schmidt_coefficients(gram)
    densities = [DensityVector(mesh, coeff[j] @ r) for j in range(3)]
    return AffineSingleBasis(densities=densities, P=coeff.copy())


def affine_double_basis(W: BoundaryOperatorMatrix,
                        fit_grid: int = 5) -> AffineDoubleBasis:
    """Orthonormalize the W-preimages of the normal components {n1, n2}.

    The affine representatives Q_j of the interior double-layer fields
    are recovered by a least-squares affine fit on a ``fit_grid`` by
    ``fit_grid`` interior sample grid.
    """
    from . import potentials

    mesh = W.mesh
    rhs = np.stack([pair_p1(mesh, lambda x, n: n[:, 0]),
                    pair_p1(mesh, lambda x, n: n[:, 1])], axis=0)
    traces_raw = [solve_W(W, rhs[j]) for j in range(2)]
    r = np.stack([t.coefficients for t in traces_raw], axis=0)
    gram = r @ rhs.T
    gram = 0.5 * (gram + gram.T)
    coeff = _gram_schmidt_coefficients(gram)
    traces = [TraceVector(mesh, coeff[j] @ r) for j in range(2)]

    pts = interior_sample_grid(mesh, fit_grid)
    design = np.column_stack([np.ones(len(pts)), pts[:, 0], pts[:, 1]])
    q_coeffs = []
    resid = 0.0
    for t in traces:
        vals = potentials.double_layer_values(mesh, t.coefficients, pts)
        sol, *_ = np.linalg.lstsq(design, vals, rcond=None)
        q_coeffs.append(sol)
        resid = max(resid, float(np.max(np.abs(design @ sol - vals))))
    return AffineDoubleBasis(traces=traces, Q=np.array(q_coeffs),
                             fit_residual=resid)


def interior_sample_grid(mesh: BoundaryMesh, n: int = 5) -> np.ndarray:
    """An interior point grid clear of the boundary (for affine fits)."""
    boundary = mesh.boundary
    if mesh.is_circle:
        r = boundary.radius
        grid = np.linspace(-0.55 * r, 0.55 * r, n)
        xx, yy = np.meshgrid(grid, grid)
        return boundary.center[None, :] + np.column_stack(
            [xx.ravel(), yy.ravel()])
    v = boundary.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    pad = 0.12 * (hi - lo)
    xs = np.linspace(lo[0] + pad[0], hi[0] - pad[0], 2 * n)
    ys = np.linspace(lo[1] + pad[1], hi[1] - pad[1], 2 * n)
    xx, yy = np.meshgrid(xs, ys)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    from .potentials import distance_to_mesh
    keep = boundary.contains(pts) \
        & (distance_to_mesh(mesh, pts) > 0.05 * boundary.diameter())
    pts = pts[keep]
    if len(pts) > n * n:
        sel = np.linspace(0, len(pts) - 1, n * n).astype(int)
        pts = pts[sel]
    return pts
