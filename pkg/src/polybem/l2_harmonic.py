"""Discrete harmonic Bergman projection from layer-potential bases.

The harmonic subspace of L^2 on the interior domain is spanned, in the
discrete realization, by single-layer fields of the P0 panel densities
(plus, optionally, corner-singular elements at reentrant corners and the
constant field).  The Gram matrix of these fields over a domain
quadrature is assembled directly; projections solve the normal equations
by truncated SVD since the fields become numerically dependent under
refinement.

The module also quantifies the non-injectivity of the discrete
Dirichlet-trace-of-single-layer map on reentrant polygons: the smallest
singular value of the trace map, normalized against the L^2(Omega) norm
of the generated field, decays under refinement exactly when nonzero
square-integrable harmonic fields with vanishing trace exist.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import potentials
from .errors import MeshFailure, RankCollapse
from .geometry import BoundaryMesh, CircleBoundary, PolygonalBoundary, \
    graded_mesh

# Dunavant degree-4 rule on the reference triangle (6 points, all interior)
_TRI_W = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3) * 0.5
_TRI_A = np.array([
    (0.108103018168070, 0.445948490915965),
    (0.445948490915965, 0.108103018168070),
    (0.445948490915965, 0.445948490915965),
    (0.816847572980459, 0.091576213509771),
    (0.091576213509771, 0.816847572980459),
    (0.091576213509771, 0.091576213509771)])


@dataclass
class DomainQuadrature:
    """Quadrature nodes and weights over the interior (or an annulus)."""

    points: np.ndarray
    weights: np.ndarray
    kind: str
    area: float

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def norm(self, values: np.ndarray) -> float:
        return float(np.sqrt(max(self.weights @ (values * values), 0.0)))


# ---------------------------------------------------------------------------
# Triangulation
# ---------------------------------------------------------------------------

def _ear_clip(vertices: np.ndarray) -> list:
    """Ear clipping of a simple CCW polygon into index triples."""
    n = len(vertices)
    idx = list(range(n))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * n * n:
            raise MeshFailure("ear clipping failed to terminate")
        clipped = False
        for k in range(len(idx)):
            i0, i1, i2 = (idx[k - 1], idx[k], idx[(k + 1) % len(idx)])
            a, b, c = vertices[i0], vertices[i1], vertices[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) \
                - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= 1e-14:
                continue
            ear = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                if _point_in_triangle(vertices[j], a, b, c):
                    ear = False
                    break
            if ear:
                tris.append((i0, i1, i2))
                idx.pop(k)
                clipped = True
                break
        if not clipped:
            raise MeshFailure("no ear found; polygon may be degenerate")
    tris.append(tuple(idx))
    return tris


def _point_in_triangle(p, a, b, c) -> bool:
    d1 = (p[0] - b[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (p[1] - b[1])
    d2 = (p[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (p[1] - c[1])
    d3 = (p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])
    neg = (d1 < 0) or (d2 < 0) or (d3 < 0)
    pos = (d1 > 0) or (d2 > 0) or (d3 > 0)
    return not (neg and pos)


def _split4(tri):
    a, b, c = tri
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    return [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]


def triangulate(polygon: PolygonalBoundary, h: float,
                corner_levels: int = 0,
                refine_corners: str = "reentrant") -> DomainQuadrature:
    """Triangulate the interior and attach a degree-4 rule per triangle.

    Triangles are refined uniformly until no edge exceeds ``h``, then
    triangles touching a corner (the reentrant ones by default, or every
    corner with ``refine_corners="all"``) are split ``corner_levels``
    more times, geometrically toward the vertex (the quadrature need not
    be conforming).
    """
    if h <= 0:
        raise ValueError("target size h must be positive")
    v = polygon.vertices
    tris = [tuple(v[i] for i in t) for t in _ear_clip(v)]

    def max_edge(t):
        a, b, c = t
        return max(np.hypot(*(b - a)), np.hypot(*(c - b)), np.hypot(*(a - c)))

    work = list(tris)
    out = []
    while work:
        t = work.pop()
        if max_edge(t) > h:
            work.extend(_split4(t))
        else:
            out.append(t)

    if refine_corners == "all":
        corners = v
    else:
        corners = v[polygon.corner_angles > np.pi + 1e-12]
    for _ in range(corner_levels):
        nxt = []
        for t in out:
            touches = any(
                min(np.hypot(*(p - c)) for p in t) < 1e-12 * polygon.diameter()
                for c in corners)
            nxt.extend(_split4(t) if touches else [t])
        out = nxt

    pts, wts = [], []
    for a, b, c in out:
        area2 = abs((b[0] - a[0]) * (c[1] - a[1])
                    - (b[1] - a[1]) * (c[0] - a[0]))
        for (l1, l2), w in zip(_TRI_A, _TRI_W):
            pts.append(a + l1 * (b - a) + l2 * (c - a))
            wts.append(w * area2)
    pts = np.asarray(pts)
    wts = np.asarray(wts)
    return DomainQuadrature(points=pts, weights=wts, kind="triangulation",
                            area=float(wts.sum()))


def _radial_rule(r_in: float, r_out: float, n_r: int):
    """Composite Gauss in radius (24-point segments), weight r attached."""
    from .quadrature import gauss_legendre
    per = 24
    nseg = max(1, round(n_r / per))
    rule = gauss_legendre(per)
    edges = np.linspace(r_in, r_out, nseg + 1)
    rs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = rule.mapped(a, b)
        rs.append(x)
        ws.append(w * x)
    return np.concatenate(rs), np.concatenate(ws)


def _polar_quadrature(r_in: float, r_out: float, n_r: int, n_theta: int,
                      center, kind: str) -> DomainQuadrature:
    r, wr = _radial_rule(r_in, r_out, n_r)
    th = 2.0 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    wt = 2.0 * np.pi / n_theta
    rr, tt = np.meshgrid(r, th)
    pts = np.asarray(center, dtype=float)[None, :] + np.stack(
        [(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=1)
    wts = (np.broadcast_to(wr[None, :], rr.shape) * wt).ravel()
    return DomainQuadrature(points=pts, weights=wts.copy(), kind=kind,
                            area=float(wts.sum()))


def disk_quadrature(radius: float, n_r: int = 96, n_theta: int = 192,
                    center=(0.0, 0.0)) -> DomainQuadrature:
    """Polar rule on a disk: composite Gauss radially, midpoints in angle.

    With ``n_theta`` above twice the boundary panel count, pairings of
    harmonic basis fields against polynomials are integrated exactly.
    """
    return _polar_quadrature(0.0, radius, n_r, n_theta, center, "disk")


def annulus_quadrature(r_in: float, r_out: float, n_r: int = 48,
                       n_theta: int = 96,
                       center=(0.0, 0.0)) -> DomainQuadrature:
    """Polar rule on an annulus (exterior truncation for representability)."""
    return _polar_quadrature(r_in, r_out, n_r, n_theta, center, "annulus")


# ---------------------------------------------------------------------------
# Harmonic bases and the Bergman projection
# ---------------------------------------------------------------------------

@dataclass
class HarmonicBasis:
    """Harmonic fields evaluated at the quadrature nodes (one column each)."""

    mesh: BoundaryMesh
    quad: DomainQuadrature
    values: np.ndarray
    kinds: list
    generators: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.values.shape[1]


def build_basis(mesh: BoundaryMesh, quad: DomainQuadrature,
                include_corner_singular: bool = False,
                include_constant: bool = False) -> HarmonicBasis:
    """Single-layer fields of the panel densities, optionally augmented.

    With ``include_corner_singular`` one r^{-pi/omega}-type element is
    appended per reentrant corner; ``include_constant`` appends the
    constant field (the double layer of p = 1 up to sign), needed e.g. on
    curves of capacity 1 where constants are not single-layer reachable.
    """
    cols = [potentials.single_layer_matrix(mesh, quad.points)]
    kinds = ["layer"] * mesh.n_panels
    generators: list = [None] * mesh.n_panels
    if include_corner_singular and not mesh.is_circle:
        from .singular_solutions import corner_singular_function
        boundary = mesh.boundary
        for j in boundary.reentrant_corners():
            csf = corner_singular_function(boundary, vertex_index=int(j))
            cols.append(csf.values(quad.points)[:, None])
            kinds.append("corner")
            generators.append(csf)
    if include_constant:
        cols.append(np.ones((len(quad.points), 1)))
        kinds.append("constant")
        generators.append(None)
    return HarmonicBasis(mesh=mesh, quad=quad,
                         values=np.hstack(cols), kinds=kinds,
                         generators=generators)


def gram(basis: HarmonicBasis) -> np.ndarray:
    """L^2(Omega) Gram matrix of the basis fields (symmetric PSD)."""
    w = basis.quad.weights
    m = basis.values.T @ (w[:, None] * basis.values)
    return 0.5 * (m + m.T)


@dataclass
class BergmanResult:
    """Projection coefficients and diagnostics."""

    coefficients: np.ndarray
    residual: float
    rank: int
    condition: float
    projected: np.ndarray = None

    def evaluate(self, basis: HarmonicBasis) -> np.ndarray:
        return basis.values @ self.coefficients


def bergman_project(f_values: np.ndarray, basis: HarmonicBasis,
                    M: np.ndarray | None = None, svd_tol: float = 1e-10,
                    min_rank: int = 3) -> BergmanResult:
    """L^2-orthogonal projection of ``f`` onto the basis span.

    Solves the normal equations ``M c = b`` by truncated SVD, dropping
    singular values below ``svd_tol`` times the largest (the layer fields
    are exponentially ill conditioned under refinement).

    Raises
    ------
    RankCollapse
        Fewer than ``min_rank`` singular values were retained.
    """
    f = np.asarray(f_values, dtype=float)
    if M is None:
        M = gram(basis)
    w = basis.quad.weights
    b = basis.values.T @ (w * f)
    u, s, vt = scipy.linalg.svd(M)
    keep = s > svd_tol * s[0]
    rank = int(np.count_nonzero(keep))
    if rank < min_rank:
        raise RankCollapse(
            f"only {rank} singular values above {svd_tol} * sigma_max")
    coef = vt[keep].T @ ((u[:, keep].T @ b) / s[keep])
    proj = basis.values @ coef
    nf = basis.quad.norm(f)
    resid = basis.quad.norm(f - proj) / nf if nf > 0 else 0.0
    return BergmanResult(coefficients=coef, residual=float(resid),
                         rank=rank, condition=float(s[0] / s[keep][-1]),
                         projected=proj)


def represent(target, basis: HarmonicBasis, svd_tol: float = 1e-10,
              probe_harmonicity: bool = True,
              probe_tol: float = 1e-6) -> BergmanResult:
    """Expand a harmonic field in the basis (same machinery as Bergman).

    ``target`` is a callable or an array of values at the quadrature
    nodes.  When a callable is given and ``probe_harmonicity`` is set,
    the mean-value property is checked at 5 interior probe disks first.
    """
    if callable(target):
        values = np.asarray(target(basis.quad.points), dtype=float)
        if probe_harmonicity:
            for center, radius in _probe_disks(basis):
                r = potentials.mean_value_residual(target, center, radius)
                scale = np.max(np.abs(values)) + 1e-300
                if r / scale > probe_tol:
                    raise ValueError(
                        f"target fails the harmonicity probe: {r:.3e}")
    else:
        values = np.asarray(target, dtype=float)
    return bergman_project(values, basis, svd_tol=svd_tol)


def _probe_disks(basis: HarmonicBasis):
    boundary = basis.mesh.boundary
    if isinstance(boundary, CircleBoundary):
        c = boundary.center
        r = boundary.radius
        centers = c[None, :] + 0.4 * r * np.array(
            [[0.0, 0.0], [1, 0], [-1, 0], [0, 1], [0, -1]])
        return [(ctr, 0.25 * r) for ctr in centers]
    pts = basis.quad.points
    d = potentials.distance_to_mesh(basis.mesh, pts)
    order = np.argsort(-d)[:5]
    return [(pts[i], 0.4 * d[i]) for i in order]


# ---------------------------------------------------------------------------
# Non-injectivity diagnostics
# ---------------------------------------------------------------------------

@dataclass
class TraceKernelReport:
    """Singular spectrum of the field -> trace map across refinements."""

    panels: list
    singular_values: list
    normalized_min: list

    @property
    def trend_ratio(self) -> float:
        """Normalized smallest singular value, finest over coarsest."""
        return self.normalized_min[-1] / self.normalized_min[0]


def trace_kernel_svd(boundary: PolygonalBoundary, panels_per_edge: int = 8,
                     beta: float = 3.0, refinements: int = 3,
                     quad_h: float = 0.08, corner_levels: int = 24,
                     gram_tol: float = 1e-12,
                     include_corner_singular: bool = True) \
        -> TraceKernelReport:
    """Smallest trace of a unit-L^2 harmonic field, across refinements.

    For each refinement level the singular values of the Dirichlet trace
    map are computed over the span of the harmonic basis (single-layer
    panel fields plus, on reentrant polygons, the corner-singular fields
    that stand in for extended-density single layers).  Inputs are
    measured by the L^2(Omega) norm of the field (Gram matrix over a
    corner-refined domain quadrature); outputs by the L^2(Gamma) norm of
    the pointwise boundary trace, sampled at panel Gauss points.  Values
    are normalized against the uniform-density direction, which is mesh
    stable.

    A decaying smallest singular value is the numerical signature of a
    nonzero square-integrable harmonic field with vanishing boundary
    trace; on convex polygons no such field exists and the quantity is
    mesh stable.
    """
    from .boundary_ops import _panel_rule

    quad = triangulate(boundary, quad_h * boundary.diameter(),
                       corner_levels=corner_levels, refine_corners="all")
    panels, sigmas, normalized = [], [], []
    ppe = panels_per_edge
    for _ in range(refinements):
        mesh = graded_mesh(boundary, ppe, beta=beta)
        basis = build_basis(mesh, quad,
                            include_corner_singular=include_corner_singular)
        bpts, bw, _ = _panel_rule(mesh, 4)
        bpts = bpts.reshape(-1, 2)
        bw = bw.reshape(-1)
        cols = [potentials.single_layer_matrix(mesh, bpts)]
        for gen, kind in zip(basis.generators, basis.kinds):
            if kind == "corner":
                cols.append(gen.values(bpts)[:, None])
        t_mat = np.hstack(cols)
        n_mat = t_mat.T @ (bw[:, None] * t_mat)
        n_mat = 0.5 * (n_mat + n_mat.T)
        g = gram(basis)
        lam, u = scipy.linalg.eigh(g)
        keep = lam > gram_tol * lam[-1]
        white = u[:, keep] / np.sqrt(lam[keep])[None, :]
        a = white.T @ n_mat @ white
        a = 0.5 * (a + a.T)
        sig = np.sort(np.sqrt(np.clip(scipy.linalg.eigvalsh(a), 0.0, None)))
        uniform = np.zeros(basis.size)
        uniform[:mesh.n_panels] = 1.0
        sig_ref = np.sqrt((uniform @ n_mat @ uniform)
                          / (uniform @ g @ uniform))
        panels.append(mesh.n_panels)
        sigmas.append(sig)
        normalized.append(float(sig[0] / sig_ref))
        ppe *= 2
    return TraceKernelReport(panels=panels, singular_values=sigmas,
                             normalized_min=normalized)
