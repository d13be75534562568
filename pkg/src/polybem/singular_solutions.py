"""Corner-singular square-integrable harmonic functions on polygons.

At a reentrant corner of opening omega > pi the local harmonic functions

    U(r, theta) = r^{-alpha} sin(alpha theta),   alpha = pi / omega
    U(r, theta) = r^{-alpha} cos(alpha theta)

(in polar coordinates attached to the corner, theta = 0 along one corner
edge and theta = omega along the other) are square integrable near the
corner but have infinite Dirichlet energy.  The sine variant vanishes on
both corner edges; the cosine variant (its harmonic conjugate) has zero
normal derivative there.

Subtracting the finite-energy harmonic correction with matching boundary
data (computed by the boundary-integral solvers) produces a nonzero
L^2 harmonic function with vanishing Dirichlet (resp. Neumann) data; the
construction is certified numerically by

* the boundary-trace ratio ||gamma v|| / ||v||,
* a lower bound on ||v||_{L^2} across refinements,
* mean-value harmonicity probes,
* the annulus energy-growth exponent (gradient energy on {eps < r < 2 eps}
  grows like eps^{-2 alpha}), the finite-computation witness that v is
  not of finite energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import potentials, solvers
from .boundary_ops import OperatorSuite
from .errors import NoReentrantCorner, PointAtCorner
from .geometry import PolygonalBoundary, graded_mesh
from .l2_harmonic import DomainQuadrature, triangulate
from .quadrature import gauss_legendre


@dataclass(frozen=True)
class CornerSingularFunction:
    """r^{-alpha}-type harmonic function attached to a polygon corner."""

    vertex: np.ndarray
    omega: float
    e1: np.ndarray       # frame direction at theta = 0 (outgoing edge)
    variant: str         # "sine" (Dirichlet-null) | "cosine" (Neumann-null)

    @property
    def alpha(self) -> float:
        return np.pi / self.omega

    def local_polar(self, points: np.ndarray):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        u = pts - self.vertex[None, :]
        e1p = np.array([-self.e1[1], self.e1[0]])
        xi = u @ self.e1
        up = u @ e1p
        r = np.hypot(xi, up)
        theta = np.mod(np.arctan2(up, xi), 2.0 * np.pi)
        return r, theta

    def values(self, points: np.ndarray) -> np.ndarray:
        r, theta = self.local_polar(points)
        if np.any(r == 0.0):
            raise PointAtCorner("corner-singular function evaluated at its "
                                "corner vertex")
        a = self.alpha
        angular = np.sin(a * theta) if self.variant == "sine" \
            else np.cos(a * theta)
        return r ** (-a) * angular

    def gradient(self, points: np.ndarray) -> np.ndarray:
        r, theta = self.local_polar(points)
        if np.any(r == 0.0):
            raise PointAtCorner("gradient evaluated at the corner vertex")
        a = self.alpha
        e1p = np.array([-self.e1[1], self.e1[0]])
        e_r = np.cos(theta)[:, None] * self.e1[None, :] \
            + np.sin(theta)[:, None] * e1p[None, :]
        e_t = -np.sin(theta)[:, None] * self.e1[None, :] \
            + np.cos(theta)[:, None] * e1p[None, :]
        amp = (a * r ** (-a - 1.0))[:, None]
        if self.variant == "sine":
            return amp * (-np.sin(a * theta)[:, None] * e_r
                          + np.cos(a * theta)[:, None] * e_t)
        return -amp * (np.cos(a * theta)[:, None] * e_r
                       + np.sin(a * theta)[:, None] * e_t)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.values(points)


def corner_singular_function(polygon: PolygonalBoundary,
                             vertex_index: int | None = None,
                             variant: str = "sine") -> CornerSingularFunction:
    """Attach the singular function to a reentrant corner of the polygon.

    The local frame puts theta = 0 along the outgoing edge; for a
    counterclockwise polygon the interior then occupies 0 < theta < omega.

    Raises
    ------
    NoReentrantCorner
        If no corner opens wider than pi (or the given one does not).
    """
    if variant not in ("sine", "cosine"):
        raise ValueError("variant must be 'sine' or 'cosine'")
    reentrant = polygon.reentrant_corners()
    if vertex_index is None:
        if len(reentrant) == 0:
            raise NoReentrantCorner("polygon has no corner wider than pi")
        vertex_index = int(reentrant[0])
    elif vertex_index not in reentrant:
        raise NoReentrantCorner(
            f"vertex {vertex_index} has opening "
            f"{polygon.corner_angles[vertex_index]:.4f} <= pi")
    v = polygon.vertices
    nxt = v[(vertex_index + 1) % len(v)]
    e1 = nxt - v[vertex_index]
    e1 = e1 / np.hypot(*e1)
    return CornerSingularFunction(
        vertex=v[vertex_index].copy(),
        omega=float(polygon.corner_angles[vertex_index]),
        e1=e1, variant=variant)


def eval_corner_singular(csf: CornerSingularFunction,
                         points) -> np.ndarray:
    """Evaluate the singular function (exact local-polar formula)."""
    return csf.values(points)


def sector_quadrature(csf: CornerSingularFunction, r_in: float, r_out: float,
                      n_r: int = 24, n_t: int = 48) -> DomainQuadrature:
    """Polar quadrature on the sector annulus {r_in < r < r_out}."""
    rule_r = gauss_legendre(min(n_r, 64))
    rule_t = gauss_legendre(min(n_t, 64))
    r = 0.5 * (r_in + r_out) + 0.5 * (r_out - r_in) * rule_r.nodes
    wr = 0.5 * (r_out - r_in) * rule_r.weights * r
    t = 0.5 * csf.omega * (rule_t.nodes + 1.0)
    wt = 0.5 * csf.omega * rule_t.weights
    e1p = np.array([-csf.e1[1], csf.e1[0]])
    rr, tt = np.meshgrid(r, t)
    pts = csf.vertex[None, :] \
        + rr.ravel()[:, None] * (np.cos(tt.ravel())[:, None] * csf.e1[None, :]
                                 + np.sin(tt.ravel())[:, None] * e1p[None, :])
    wts = (wt[:, None] * wr[None, :]).ravel()
    return DomainQuadrature(points=pts, weights=wts, kind="sector",
                            area=float(wts.sum()))


@dataclass
class CornerCertification:
    """Numerical certificates of the zero-data corner function."""

    trace_ratio: float
    l2_mass: float
    reference_mass: float
    harmonicity: float
    energy_exponent: float
    expected_exponent: float


@dataclass
class CornerField:
    """v = U - h with h the finite-energy harmonic correction."""

    csf: CornerSingularFunction
    correction: solvers.BiesSolution
    offset: float = 0.0

    def __call__(self, points) -> np.ndarray:
        return self.csf.values(points) - self.correction.evaluate(points) \
            - self.offset

    def gradient(self, points) -> np.ndarray:
        grad_h = potentials.single_layer_gradient(
            self.correction.mesh, self.correction.density.coefficients,
            points) if self.correction.density is not None else \
            _double_layer_gradient_fd(self.correction, points)
        return self.csf.gradient(points) - grad_h


def _double_layer_gradient_fd(solution: solvers.BiesSolution, points,
                              h: float = 1e-6) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty((len(pts), 2))
    for k, e in enumerate(np.eye(2)):
        out[:, k] = (solution.evaluate(pts + h * e)
                     - solution.evaluate(pts - h * e)) / (2.0 * h)
    return out


def _certify(field: CornerField, polygon: PolygonalBoundary,
             mesh, quad: DomainQuadrature, kind: str) -> CornerCertification:
    csf = field.csf
    # (a) boundary trace ratio
    if kind == "dirichlet":
        trace = potentials.one_sided_trace(field, mesh, "-", "dirichlet")
    else:
        trace = potentials.one_sided_trace(field, mesh, "-", "neumann")
    trace_norm = float(np.sqrt(mesh.lengths @ trace ** 2))
    vals = field(quad.points)
    mass = quad.norm(vals)
    u_mass = quad.norm(csf.values(quad.points))
    # (c) harmonicity probes on disks separated from corner and boundary
    probes = _corner_probe_disks(polygon, csf)
    harm = max(potentials.mean_value_residual(field, c, r)
               for c, r in probes)
    # (d) annulus gradient-energy exponent
    eps = 0.12 * _corner_clearance(polygon, csf) * 0.5 ** np.arange(4)
    energies = []
    for e in eps:
        ann = sector_quadrature(csf, e, 2.0 * e)
        g = field.gradient(ann.points)
        energies.append(ann.integrate(np.sum(g * g, axis=1)))
    slope = np.polyfit(np.log(eps), np.log(energies), 1)[0]
    return CornerCertification(
        trace_ratio=trace_norm / mass,
        l2_mass=mass, reference_mass=u_mass,
        harmonicity=harm,
        energy_exponent=float(slope),
        expected_exponent=-2.0 * csf.alpha)


def _corner_clearance(polygon: PolygonalBoundary,
                      csf: CornerSingularFunction) -> float:
    others = [v for v in polygon.vertices
              if np.hypot(*(v - csf.vertex)) > 1e-12]
    return min(np.hypot(*(v - csf.vertex)) for v in others)


def _corner_probe_disks(polygon, csf):
    quad = triangulate(polygon, 0.2 * polygon.diameter())
    pts = quad.points
    d_corner = np.hypot(*(pts - csf.vertex[None, :]).T)
    mesh0 = graded_mesh(polygon, 2)
    d_bnd = potentials.distance_to_mesh(mesh0, pts)
    clear = np.minimum(d_corner, d_bnd)
    order = np.argsort(-clear)[:5]
    return [(pts[i], 0.4 * clear[i]) for i in order]


def build_zero_dirichlet_function(polygon: PolygonalBoundary,
                                  panels_per_edge: int = 64,
                                  beta: float = 3.0,
                                  quad_h: float = 0.05,
                                  margin: float = 0.05):
    """Nonzero L^2 harmonic function with vanishing Dirichlet data.

    Construction: v = U - h with U the sine-variant corner function
    (globally harmonic on the polygon when it fits in the corner sector,
    as the L-shape does) and h the interior Dirichlet solution with data
    gamma_d U (zero on the corner edges, smooth elsewhere).

    Returns (field, certification); the field is callable.

    Raises
    ------
    NoReentrantCorner
        For convex input.
    """
    csf = corner_singular_function(polygon, variant="sine")
    mesh = graded_mesh(polygon, panels_per_edge, beta=beta)
    suite = OperatorSuite(mesh)
    sol = solvers.interior_dirichlet(suite, csf.values, margin=margin)
    field = CornerField(csf=csf, correction=sol)
    quad = triangulate(polygon, quad_h * polygon.diameter(), corner_levels=8)
    cert = _certify(field, polygon, mesh, quad, "dirichlet")
    return field, cert


def build_zero_neumann_function(polygon: PolygonalBoundary,
                                panels_per_edge: int = 64,
                                beta: float = 3.0,
                                quad_h: float = 0.05,
                                compat_tol: float = 1e-6):
    """Nonzero L^2 harmonic function with vanishing Neumann data.

    Cosine variant plus an interior Neumann correction with data
    gamma_n U; the compatibility integral of the data vanishes
    analytically (the flux of U through the boundary of the punctured
    domain is sin(pi) = 0) and is asserted numerically.
    """
    csf = corner_singular_function(polygon, variant="cosine")
    mesh = graded_mesh(polygon, panels_per_edge, beta=beta)
    suite = OperatorSuite(mesh)

    def neumann_data(x, n):
        return np.einsum("ij,ij->i", csf.gradient(x), n)

    from .boundary_ops import pair_p1
    b = pair_p1(mesh, neumann_data)
    defect = abs(b.sum()) / (np.linalg.norm(b) + 1e-300)
    if defect > compat_tol:
        raise ValueError(f"Neumann data compatibility defect {defect:.3e}")
    sol = solvers.interior_neumann(suite, b, compat_tol=np.inf)
    field = CornerField(csf=csf, correction=sol)
    # pin the additive constant: match mean values over the domain
    quad = triangulate(polygon, quad_h * polygon.diameter(), corner_levels=8)
    field.offset = quad.integrate(field(quad.points)) / quad.area
    cert = _certify(field, polygon, mesh, quad, "neumann")
    return field, cert
