"""Off-boundary evaluation of layer potentials, traces and far fields.

Field conventions (pinned by the discrete jump relations, see
:mod:`polybem.boundary_ops`):

    S q (x) = int_Gamma G(x - y) q(y) ds(y),      G(x) = -ln|x| / (2 pi)
    D p (x) = int_Gamma (x-y).n(y) / (2 pi |x-y|^2) p(y) ds(y)

so that ``D 1 = -1`` inside and ``0`` outside, and the four jump relations

    gamma_d+ S - gamma_d- S = 0        gamma_n+ D + gamma_n- D = 0
    gamma_n+ S + gamma_n- S = Id       gamma_d+ D - gamma_d- D = Id

hold with ``gamma_n^{+-} u = grad u . n^{+-}``, ``n-`` outward.

One-sided traces are extracted independently of the boundary operators by
Richardson extrapolation of field values along the normal (offsets
``eps_k = eps0 2^{-k}`` with ``eps0`` a fixed fraction of the local panel
length), evaluated at panel midpoints only; corners are excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from functools import lru_cache

import numpy as np

from . import quadrature as quad
from .boundary_ops import DensityVector, TraceVector
from .errors import (ExtrapolationDivergence, IllConditionedFit,
                     PointOnBoundary)
from .geometry import BoundaryMesh

INV_2PI = 1.0 / (2.0 * np.pi)

_CHUNK = 2048


# ---------------------------------------------------------------------------
# Core field evaluation
# ---------------------------------------------------------------------------

def distance_to_mesh(mesh: BoundaryMesh, points: np.ndarray) -> np.ndarray:
    """Distance from each point to the discretized boundary."""
    pts = np.atleast_2d(points)
    if mesh.is_circle:
        arc = mesh.arc
        return np.abs(np.hypot(*(pts - arc.center).T) - arc.radius)
    xi, eta = quad.panel_frames(mesh.starts, mesh.tangents, mesh.normals,
                                mesh.lengths, pts)
    clamped = np.clip(xi, 0.0, mesh.lengths[None, :])
    d2 = (xi - clamped) ** 2 + eta ** 2
    return np.sqrt(d2.min(axis=1))


def _require_off_boundary(mesh: BoundaryMesh, points: np.ndarray) -> None:
    scale = mesh.perimeter
    d = distance_to_mesh(mesh, points)
    if np.any(d <= 1e-13 * scale):
        raise PointOnBoundary(
            "potential evaluation requested on the boundary; use traces")


def _p1_panel_values(mesh: BoundaryMesh, nodal: np.ndarray):
    """(left, right) nodal values per panel for a P1 trace."""
    return nodal, np.roll(nodal, -1)


def _arc_contributions(arc, theta, x):
    """Kernel samples on arcs: ``theta``/``x`` broadcast to (..., k).

    Returns (G * R, dl_kernel * R, tloc-free) sample arrays for reuse.
    """
    nrm = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    y = arc.center + arc.radius * nrm
    d = x[..., None, :] - y
    r2 = np.sum(d * d, axis=-1)
    g = -0.5 * INV_2PI * np.log(r2) * arc.radius
    dl = INV_2PI * np.sum(d * nrm, axis=-1) / r2 * arc.radius
    return g, dl


@lru_cache(maxsize=None)
def _foot_split_rule(levels: int = 22, order: int = 12):
    """Composite Gauss on [0, 1] graded dyadically toward 1."""
    br = np.array([0.0] + [2.0 ** -(levels - j) for j in range(levels + 1)])
    rule = quad.gauss_legendre(order)
    fr, wt = [], []
    for a, b in zip(br[:-1], br[1:]):
        fr.append(a + 0.5 * (b - a) * (rule.nodes + 1.0))
        wt.append(0.5 * (b - a) * rule.weights)
    return 1.0 - np.concatenate(fr)[::-1], np.concatenate(wt)[::-1]


def _circle_pair_contributions(mesh: BoundaryMesh, points: np.ndarray,
                               kind: str):
    """Per (point, arc) integrals of one kernel times {1, tloc}.

    Far pairs use one 16-point Gauss rule; pairs with a near-singular
    kernel are recomputed with a composite rule graded toward the foot
    angle.  Returns ``(const, tloc)`` of shape (m, n); the tloc-weighted
    part is only computed for the double-layer kernel (None otherwise).
    """
    arc = mesh.arc
    n = mesh.n_panels
    m = len(points)
    theta_mid = 0.5 * (arc.theta0 + arc.theta1)
    dtheta = arc.theta1 - arc.theta0
    want_tloc = kind == "double"
    pick = (lambda gs, ds: gs) if kind == "single" else (lambda gs, ds: ds)

    rule = quad.gauss_legendre(16)
    frac = 0.5 * (rule.nodes + 1.0)
    wts = 0.5 * rule.weights
    theta = arc.theta0[:, None] + dtheta[:, None] * frac[None, :]
    const = np.empty((m, n))
    tlocw = np.empty((m, n)) if want_tloc else None
    for lo in range(0, m, _CHUNK):
        hi = min(lo + _CHUNK, m)
        vals = pick(*_arc_contributions(arc, theta[None, :, :],
                                        points[lo:hi, None, :]))
        w = (dtheta[:, None] * wts[None, :])[None, :, :]
        const[lo:hi] = np.sum(vals * w, axis=-1)
        if want_tloc:
            tlocw[lo:hi] = np.sum(vals * w * frac[None, None, :], axis=-1)

    # near pairs: distance to the arc below ~2 panel lengths
    rel = points - arc.center[None, :]
    rad = np.hypot(rel[:, 0], rel[:, 1])
    phi = np.arctan2(rel[:, 1], rel[:, 0])
    dphi = np.abs(np.angle(np.exp(1j * (phi[:, None] - theta_mid[None, :]))))
    ang_gap = np.maximum(dphi - 0.5 * dtheta[None, :], 0.0)
    gap = np.hypot(rad[:, None] - arc.radius, arc.radius * ang_gap)
    near = gap < 2.0 * arc.radius * dtheta[None, :]
    rows, cols = np.nonzero(near)
    if len(rows):
        foot = theta_mid[cols] + np.clip(
            np.angle(np.exp(1j * (phi[rows] - theta_mid[cols]))),
            -0.5 * dtheta[cols], 0.5 * dtheta[cols])
        fr, wt = _foot_split_rule()
        acc_c = np.zeros(len(rows))
        acc_t = np.zeros(len(rows))
        for a, b, flip in ((arc.theta0[cols], foot, False),
                           (foot, arc.theta1[cols], True)):
            span = b - a
            f = fr[None, :] if not flip else (1.0 - fr)[None, ::-1]
            w = wt[None, :] if not flip else wt[None, ::-1]
            th = a[:, None] + span[:, None] * f
            vals = pick(*_arc_contributions(arc, th, points[rows]))
            ww = span[:, None] * w
            acc_c += np.sum(vals * ww, axis=-1)
            if want_tloc:
                tloc = (th - arc.theta0[cols][:, None]) \
                    / dtheta[cols][:, None]
                acc_t += np.sum(vals * ww * tloc, axis=-1)
        const[rows, cols] = acc_c
        if want_tloc:
            tlocw[rows, cols] = acc_t
    return const, tlocw


def single_layer_matrix(mesh: BoundaryMesh, points) -> np.ndarray:
    """Matrix mapping P0 density coefficients to S q at ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if mesh.is_circle:
        return _circle_pair_contributions(mesh, pts, "single")[0]
    s_const, _ = quad.single_layer_panel_integrals(
        mesh.starts, mesh.tangents, mesh.normals, mesh.lengths, pts)
    return s_const


def double_layer_matrix(mesh: BoundaryMesh, points) -> np.ndarray:
    """Matrix mapping P1 nodal values to D p at ``points``.

    On circle meshes the rows are corrected by the exact Gauss integral
    (the total kernel integral is -1 inside and 0 outside): subtracting
    the density value at the closest boundary point regularizes the
    near-singular kernel, which removes the 1/distance amplification of
    quadrature noise for points close to the boundary.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = mesh.n_panels
    if mesh.is_circle:
        d_const, d_tloc = _circle_pair_contributions(mesh, pts, "double")
    else:
        d_const, d_tloc = quad.double_layer_panel_integrals(
            mesh.starts, mesh.tangents, mesh.normals, mesh.lengths, pts)
    idx = np.arange(n)
    out = np.zeros((len(pts), n))
    out[:, idx] = d_const - d_tloc
    wrap = np.zeros((len(pts), n))
    wrap[:, (idx + 1) % n] = d_tloc
    out += wrap
    if mesh.is_circle:
        arc = mesh.arc
        rel = pts - arc.center[None, :]
        chi = np.where(np.hypot(rel[:, 0], rel[:, 1]) < arc.radius, -1.0, 0.0)
        beta = d_const.sum(axis=1)
        phi = np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2.0 * np.pi)
        tglob = phi / (2.0 * np.pi / n)
        j_star = np.minimum(tglob.astype(int), n - 1)
        tloc = tglob - j_star
        rows = np.arange(len(pts))
        corr = chi - beta
        out[rows, j_star] += corr * (1.0 - tloc)
        out[rows, (j_star + 1) % n] += corr * tloc
    return out


def _circle_field(mesh: BoundaryMesh, coeffs, points, kind: str,
                  tol: float) -> np.ndarray:
    if kind == "single":
        return _circle_pair_contributions(mesh, points, "single")[0] @ coeffs
    return double_layer_matrix(mesh, points) @ coeffs


def single_layer_values(mesh: BoundaryMesh, coeffs: np.ndarray,
                        points: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """S q at arbitrary points (exact panelwise closed form on polygons)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if mesh.is_circle:
        return _circle_field(mesh, coeffs, pts, "single", tol)
    out = np.empty(len(pts))
    for lo in range(0, len(pts), _CHUNK):
        hi = min(lo + _CHUNK, len(pts))
        s_const, _ = quad.single_layer_panel_integrals(
            mesh.starts, mesh.tangents, mesh.normals, mesh.lengths,
            pts[lo:hi])
        out[lo:hi] = s_const @ coeffs
    return out


def double_layer_values(mesh: BoundaryMesh, nodal: np.ndarray,
                        points: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """D p at arbitrary points for a continuous P1 trace ``p``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if mesh.is_circle:
        return _circle_field(mesh, nodal, pts, "double", tol)
    left, right = _p1_panel_values(mesh, nodal)
    out = np.empty(len(pts))
    for lo in range(0, len(pts), _CHUNK):
        hi = min(lo + _CHUNK, len(pts))
        d_const, d_right = quad.double_layer_panel_integrals(
            mesh.starts, mesh.tangents, mesh.normals, mesh.lengths,
            pts[lo:hi])
        out[lo:hi] = (d_const - d_right) @ left + d_right @ right
    return out


def single_layer_gradient(mesh: BoundaryMesh, coeffs: np.ndarray,
                          points: np.ndarray) -> np.ndarray:
    """grad S q, exact closed form on polygons, Gauss/adaptive on arcs."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if mesh.is_circle:
        return _circle_gradient(mesh, coeffs, pts)
    out = np.empty((len(pts), 2))
    for lo in range(0, len(pts), _CHUNK):
        hi = min(lo + _CHUNK, len(pts))
        grad = quad.single_layer_panel_gradient(
            mesh.starts, mesh.tangents, mesh.normals, mesh.lengths,
            pts[lo:hi])
        out[lo:hi] = np.einsum("mnk,n->mk", grad, coeffs)
    return out


def _circle_gradient(mesh: BoundaryMesh, coeffs, points) -> np.ndarray:
    arc = mesh.arc
    rule = quad.gauss_legendre(24)
    th = 0.5 * (arc.theta0[:, None] + arc.theta1[:, None]) \
        + 0.5 * (arc.theta1 - arc.theta0)[:, None] * rule.nodes[None, :]
    w = (0.5 * (arc.theta1 - arc.theta0)[:, None] * rule.weights[None, :]
         * arc.radius * coeffs[:, None])
    y = arc.center[None, None, :] + arc.radius * np.stack(
        [np.cos(th), np.sin(th)], axis=-1)
    out = np.empty((len(points), 2))
    for i, x in enumerate(points):
        d = x[None, None, :] - y
        r2 = np.sum(d * d, axis=-1)
        out[i] = -INV_2PI * np.sum((w / r2)[:, :, None] * d, axis=(0, 1))
    return out


@dataclass
class PotentialField:
    """A single or double layer field with evaluated values."""

    kind: str
    source: object
    points: np.ndarray
    values: np.ndarray
    near_strategy: str = "closed-form (polygon) / adaptive arcs (circle)"

    def __call__(self, points) -> np.ndarray:
        return evaluate(self.source, points)


def evaluate(source, points, tol: float = 1e-13) -> np.ndarray:
    """Evaluate the field of a DensityVector or TraceVector source."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if isinstance(source, DensityVector):
        return single_layer_values(source.mesh, source.coefficients, pts, tol)
    if isinstance(source, TraceVector):
        return double_layer_values(source.mesh, source.coefficients, pts, tol)
    raise TypeError("source must be a DensityVector or TraceVector")


def eval_single(q: DensityVector, points, tol: float = 1e-13) -> PotentialField:
    """Single layer potential field at off-boundary points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    _require_off_boundary(q.mesh, pts)
    return PotentialField(kind="single", source=q, points=pts,
                          values=single_layer_values(q.mesh, q.coefficients,
                                                     pts, tol))


def eval_double(p: TraceVector, points, tol: float = 1e-13) -> PotentialField:
    """Double layer potential field at off-boundary points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    _require_off_boundary(p.mesh, pts)
    return PotentialField(kind="double", source=p, points=pts,
                          values=double_layer_values(p.mesh, p.coefficients,
                                                     pts, tol))


# ---------------------------------------------------------------------------
# One-sided traces by normal-offset extrapolation
# ---------------------------------------------------------------------------

def _as_field_callable(field):
    if isinstance(field, PotentialField):
        return field.source, (lambda pts: evaluate(field.source, pts))
    if isinstance(field, (DensityVector, TraceVector)):
        return field, (lambda pts: evaluate(field, pts))
    return None, field


def _offset_points(mesh: BoundaryMesh, side: str, eps0_factor: float,
                   n_offsets: int):
    """Midpoint offset fan ``x_mid -+ eps_k n-``, eps_k = eps0 2^{-k}."""
    sign = 1.0 if side == "+" else -1.0
    eps0 = eps0_factor * mesh.lengths
    taus = 0.5 ** np.arange(n_offsets)
    pts = mesh.midpoints[:, None, :] \
        + sign * (eps0[:, None] * taus[None, :])[:, :, None] \
        * mesh.normals[:, None, :]
    return pts.reshape(-1, 2), eps0, taus


def _extrapolate_offsets(vals: np.ndarray, eps0: np.ndarray,
                         taus: np.ndarray, kind: str,
                         check: bool) -> np.ndarray:
    """Polynomial extrapolation in eps of per-panel offset samples.

    ``vals`` has shape (n_panels, n_offsets).  Returns the boundary value
    (Dirichlet) or the outward-side normal derivative convention
    ``gamma_n = -d/deps`` (Neumann): the approach parameter increases away
    from the boundary on the ``+`` side and toward the interior on the
    ``-`` side, so the same sign rule holds for both.
    """
    n_offsets = vals.shape[1]
    vand = np.vander(taus, n_offsets, increasing=True)
    fit = np.linalg.solve(vand, np.eye(n_offsets))
    coeffs = vals @ fit.T
    value = coeffs[:, 0]
    slope = coeffs[:, 1] / eps0

    if check:
        vand_red = np.vander(taus[1:], n_offsets - 1, increasing=True)
        fit_red = np.linalg.solve(vand_red, np.eye(n_offsets - 1))
        coeffs_red = vals[:, 1:] @ fit_red.T
        scale = np.max(np.abs(vals)) + 1e-300
        if kind == "dirichlet":
            drift = np.max(np.abs(coeffs_red[:, 0] - value)) / scale
        else:
            drift = np.max(np.abs(coeffs_red[:, 1] / eps0 - slope)) \
                / (np.max(np.abs(slope)) + scale)
        if not np.isfinite(drift) or drift > 1e-3:
            raise ExtrapolationDivergence(
                f"offset sequence not settling (drift {drift:.2e})")
    return value if kind == "dirichlet" else -slope


def one_sided_trace(field, mesh: BoundaryMesh, side: str,
                    kind: str = "dirichlet", eps0_factor: float = 1e-2,
                    n_offsets: int = 5, check: bool = True) -> np.ndarray:
    """One-sided Dirichlet or Neumann trace at panel midpoints.

    The field is sampled at ``x_mid -+ eps_k n-`` for a geometric offset
    sequence ``eps_k = eps0 2^{-k}`` with ``eps0 = eps0_factor`` times the
    local panel length, then extrapolated to the boundary (value for
    Dirichlet, normal slope for Neumann, with ``gamma_n^{+-} = grad . n^{+-}``).

    Raises
    ------
    ExtrapolationDivergence
        If dropping the coarsest offset moves the extrapolant by more than
        1e-3 of the field scale (only when ``check``).
    """
    if side not in ("+", "-"):
        raise ValueError("side must be '+' or '-'")
    if kind not in ("dirichlet", "neumann"):
        raise ValueError("kind must be 'dirichlet' or 'neumann'")
    _, fn = _as_field_callable(field)
    pts, eps0, taus = _offset_points(mesh, side, eps0_factor, n_offsets)
    vals = fn(pts).reshape(mesh.n_panels, n_offsets)
    return _extrapolate_offsets(vals, eps0, taus, kind, check)


# ---------------------------------------------------------------------------
# Jump relations
# ---------------------------------------------------------------------------

def _smooth_trial(mesh: BoundaryMesh, rng: np.random.Generator,
                  n_modes: int = 4):
    """Random low-frequency Fourier profile in normalized arclength."""
    coeff = rng.standard_normal(2 * n_modes + 1)

    def profile(s):
        t = 2.0 * np.pi * s
        out = np.full_like(t, coeff[0])
        for k in range(1, n_modes + 1):
            out += coeff[2 * k - 1] * np.cos(k * t) \
                + coeff[2 * k] * np.sin(k * t)
        return out
    return profile


def _arclength_fractions(mesh: BoundaryMesh):
    cum = np.concatenate([[0.0], np.cumsum(mesh.lengths)])
    nodes = cum[:-1] / cum[-1]
    mids = (cum[:-1] + 0.5 * mesh.lengths) / cum[-1]
    return nodes, mids


def corner_distances(mesh: BoundaryMesh) -> np.ndarray:
    """Distance of each panel midpoint to the nearest polygon corner."""
    corners = mesh.starts[mesh.corner_flags]
    if len(corners) == 0:
        return np.full(mesh.n_panels, np.inf)
    d = mesh.midpoints[:, None, :] - corners[None, :, :]
    return np.min(np.hypot(d[:, :, 0], d[:, :, 1]), axis=1)


@dataclass
class JumpReport:
    """Residuals of the four jump identities for a batch of trials."""

    mesh: BoundaryMesh
    residual_sl_dirichlet: np.ndarray  # gamma_d+ S - gamma_d- S
    residual_sl_neumann: np.ndarray    # gamma_n+ S + gamma_n- S - q
    residual_dl_neumann: np.ndarray    # gamma_n+ D + gamma_n- D
    residual_dl_dirichlet: np.ndarray  # gamma_d+ D - gamma_d- D - p
    corner_distance: np.ndarray = dataclass_field(default=None)

    @property
    def max_residual(self) -> float:
        return max(float(np.max(np.abs(r))) for r in (
            self.residual_sl_dirichlet, self.residual_sl_neumann,
            self.residual_dl_neumann, self.residual_dl_dirichlet))

    def by_identity(self) -> dict:
        return {
            "sl_dirichlet": float(np.max(np.abs(self.residual_sl_dirichlet))),
            "sl_neumann": float(np.max(np.abs(self.residual_sl_neumann))),
            "dl_neumann": float(np.max(np.abs(self.residual_dl_neumann))),
            "dl_dirichlet": float(np.max(np.abs(self.residual_dl_dirichlet))),
        }


def jump_report(mesh: BoundaryMesh, n_trials: int = 5, seed: int = 0,
                eps0_factor: float = 1e-2, n_offsets: int = 5,
                compare: str = "discrete") -> JumpReport:
    """Verify all four jump identities at panel midpoints.

    Trials are smooth fixed-seed Fourier profiles sampled into the
    discrete spaces.  With ``compare="discrete"`` the identity operators
    are checked against the discrete densities themselves (they hold
    exactly in the continuum for P0/P1 densities, so the residual is pure
    trace-extraction error).  With ``compare="function"`` the identities
    are checked against the smooth trial profiles; this adds the
    interpolation gap of the discrete spaces and is the quantity that
    converges under mesh refinement (order ~2 in the panel size).  The
    offset-point evaluation matrices are built once per side and reused
    across trials.
    """
    if compare not in ("discrete", "function"):
        raise ValueError("compare must be 'discrete' or 'function'")
    rng = np.random.default_rng(seed)
    nodes_s, mids_s = _arclength_fractions(mesh)
    n = mesh.n_panels

    mats = {}
    for side in ("+", "-"):
        pts, eps0, taus = _offset_points(mesh, side, eps0_factor, n_offsets)
        mats[side] = (single_layer_matrix(mesh, pts),
                      double_layer_matrix(mesh, pts), eps0, taus)

    def traces(side, coeffs, which, kind):
        smat, dmat, eps0, taus = mats[side]
        mat = smat if which == "single" else dmat
        vals = (mat @ coeffs).reshape(n, n_offsets)
        return _extrapolate_offsets(vals, eps0, taus, kind, check=False)

    r1, r2, r3, r4 = [], [], [], []
    for _ in range(n_trials):
        prof_q = _smooth_trial(mesh, rng)
        prof_p = _smooth_trial(mesh, rng)
        q = DensityVector(mesh, prof_q(mids_s))
        p = TraceVector(mesh, prof_p(nodes_s))
        q_ref = q.coefficients
        p_ref = prof_p(mids_s) if compare == "function" else p.at_midpoints()
        r1.append(traces("+", q.coefficients, "single", "dirichlet")
                  - traces("-", q.coefficients, "single", "dirichlet"))
        r2.append(traces("+", q.coefficients, "single", "neumann")
                  + traces("-", q.coefficients, "single", "neumann")
                  - q_ref)
        r3.append(traces("+", p.coefficients, "double", "neumann")
                  + traces("-", p.coefficients, "double", "neumann"))
        r4.append(traces("+", p.coefficients, "double", "dirichlet")
                  - traces("-", p.coefficients, "double", "dirichlet")
                  - p_ref)
    return JumpReport(
        mesh=mesh,
        residual_sl_dirichlet=np.array(r1),
        residual_sl_neumann=np.array(r2),
        residual_dl_neumann=np.array(r3),
        residual_dl_dirichlet=np.array(r4),
        corner_distance=corner_distances(mesh))


# ---------------------------------------------------------------------------
# Far-field expansion
# ---------------------------------------------------------------------------

@dataclass
class FarFieldMoments:
    """Direct moments of a density/trace and the fitted ring coefficients.

    Single layer:  S q = -(m0 / 2 pi) ln|x| + (m1 x1 + m2 x2)/(2 pi |x|^2) + ...
    Double layer:  D p = (d1 x1 + d2 x2) / (2 pi |x|^2) + O(1/|x|^2), no log
    term and no constant (the dipole sign follows the jump-pinned kernel).
    """

    m0: float = 0.0
    m1: float = 0.0
    m2: float = 0.0
    d1: float = 0.0
    d2: float = 0.0
    fitted_log: float = 0.0
    fitted_dipole: tuple = (0.0, 0.0)
    fitted_const: float = 0.0
    discrepancy: dict = dataclass_field(default_factory=dict)


def direct_moments(source) -> FarFieldMoments:
    """Moments <q,1>, <q,y_i> or <n_i,p> straight from the coefficients."""
    from .boundary_ops import affine_pairings_p0
    mesh = source.mesh
    out = FarFieldMoments()
    if isinstance(source, DensityVector):
        i1, ix, iy = affine_pairings_p0(mesh)
        out.m0 = float(source.coefficients @ i1)
        out.m1 = float(source.coefficients @ ix)
        out.m2 = float(source.coefficients @ iy)
    elif isinstance(source, TraceVector):
        from .boundary_ops import pair_p1
        out.d1 = float(pair_p1(mesh, lambda x, n: n[:, 0])
                       @ source.coefficients)
        out.d2 = float(pair_p1(mesh, lambda x, n: n[:, 1])
                       @ source.coefficients)
    else:
        raise TypeError("source must be a DensityVector or TraceVector")
    return out


def far_field(source, ring_radius: float | None = None,
              n_ring: int = 64) -> FarFieldMoments:
    """Fit ``a ln|x| + b.x/|x|^2 + c`` on far rings and compare to moments.

    The sample points are split over two concentric rings (radius and
    1.5 radius): on a single ring ``ln|x|`` is constant, hence collinear
    with the constant column of the fit.

    Raises
    ------
    IllConditionedFit
        Ring radius below 5 boundary diameters.
    """
    mesh = source.mesh
    diam = mesh.boundary.diameter()
    center = mesh.midpoints.mean(axis=0)
    if ring_radius is None:
        ring_radius = 10.0 * diam
    if ring_radius < 5.0 * diam:
        raise IllConditionedFit(
            "ring radius must be at least 5 boundary diameters")
    half = n_ring // 2
    phi = 2.0 * np.pi * np.arange(half) / half
    ring = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    pts = np.vstack([center[None, :] + ring_radius * ring,
                     center[None, :] + 1.5 * ring_radius * ring])
    n_ring = len(pts)
    vals = evaluate(source, pts)
    r2 = np.sum(pts * pts, axis=1)
    design = np.stack([
        0.5 * np.log(r2),
        pts[:, 0] / r2,
        pts[:, 1] / r2,
        np.ones(n_ring)], axis=1)
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)

    out = direct_moments(source)
    out.fitted_log = float(coef[0])
    out.fitted_dipole = (float(coef[1]), float(coef[2]))
    out.fitted_const = float(coef[3])
    if isinstance(source, DensityVector):
        expect_log = -INV_2PI * out.m0
        expect_dip = (INV_2PI * out.m1, INV_2PI * out.m2)
    else:
        expect_log = 0.0
        expect_dip = (INV_2PI * out.d1, INV_2PI * out.d2)
    out.discrepancy = {
        "log": abs(out.fitted_log - expect_log),
        "dipole": float(np.hypot(out.fitted_dipole[0] - expect_dip[0],
                                 out.fitted_dipole[1] - expect_dip[1])),
        "const": abs(out.fitted_const),
    }
    return out


# ---------------------------------------------------------------------------
# Green's identity and harmonicity probes
# ---------------------------------------------------------------------------

def greens_identity_check(mesh: BoundaryMesh, u, v, order: int = 8) -> float:
    """Residual of <gamma_n u, gamma_d v> - <gamma_n v, gamma_d u> on Gamma.

    ``u`` and ``v`` are (dirichlet_trace, neumann_trace) pairs of
    callables taking boundary points (and normals, for the Neumann part).
    """
    from .boundary_ops import _panel_rule
    pts, weights, normals = _panel_rule(mesh, order)
    p = pts.reshape(-1, 2)
    nn = normals.reshape(-1, 2)
    w = weights.reshape(-1)
    gd_u, gn_u = u
    gd_v, gn_v = v
    term = (np.asarray(gn_u(p, nn)) * np.asarray(gd_v(p, nn))
            - np.asarray(gn_v(p, nn)) * np.asarray(gd_u(p, nn)))
    return float(np.abs(np.dot(w, term)))


def mean_value_residual(field, center, radius: float, n: int = 128) -> float:
    """|circle average - center value|; vanishes for harmonic fields."""
    _, fn = _as_field_callable(field)
    phi = 2.0 * np.pi * np.arange(n) / n
    ring = np.asarray(center, dtype=float)[None, :] + radius * np.stack(
        [np.cos(phi), np.sin(phi)], axis=1)
    ring_avg = float(np.mean(fn(ring)))
    center_val = float(fn(np.asarray(center, dtype=float)[None, :])[0])
    return abs(ring_avg - center_val)
