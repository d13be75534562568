"""Galerkin assembly and solves for the four boundary operators.

Discrete spaces on a :class:`~polybem.geometry.BoundaryMesh` with ``n``
panels:

* P0 densities: one coefficient per panel (the H^{-1/2} side),
* continuous P1 traces: one coefficient per panel-start node (the
  H^{1/2} side); hats are linear in arclength, shared across corners.

Operators (all dense ``n x n``):

* ``V``    weakly singular single-layer form
  ``V_ij = iint G(x-y) phi_i(x) phi_j(y) ds ds``,
* ``K``    principal-value double-layer trace paired against P0 tests,
* ``Kadj`` its Galerkin transpose,
* ``W``    hypersingular form, assembled through the integration-by-parts
  identity ``<W p, psi> = <V p', psi'>`` with ``'`` the arclength
  derivative mapping P1 onto P0 (exact for straight panels given the
  closed-form inner integrals of :mod:`polybem.quadrature`).

Sign conventions are pinned operationally, not read off the kernel
notation: the double-layer kernel is ``(x - y) . n(y) / (2 pi |x-y|^2)``,
the unique sign for which the discrete jump relations hold with
``gamma_d+ D - gamma_d- D = Id`` (the field of p = 1 is -1 inside and 0
outside) and ``W 1 = 0``.  :func:`convention_self_test` asserts both on a
small circle the first time an operator is assembled.

Straight panels use the exact inner integrals with a corner-graded
composite Gauss outer rule; the self entry of ``V`` is the fully closed
form ``V_ii = L^2 (3/2 - ln L) / (2 pi)``.  Circle meshes keep the exact
arc geometry: there ``V`` is a circulant whose entries are evaluated from
the Fourier series of ``ln |x - y|`` via Clausen functions (machine
accurate), and the double-layer kernel is the exact constant
``-1/(4 pi R)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from . import quadrature as quad
from .errors import CapacityViolation, IncompatibleData, SolveFailure
from .geometry import BoundaryMesh

INV_2PI = 1.0 / (2.0 * np.pi)

P0_SPACE = "P0-density"
P1_SPACE = "P1-trace"


@dataclass
class DensityVector:
    """Piecewise-constant boundary density (one value per panel)."""

    mesh: BoundaryMesh
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.mesh.n_panels,):
            raise ValueError("coefficient count must equal panel count")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("density coefficients must be finite")

    def total_mass(self) -> float:
        """<q, 1> = integral of the density over the boundary."""
        return float(self.coefficients @ self.mesh.lengths)


@dataclass
class TraceVector:
    """Continuous piecewise-linear boundary trace (one value per node)."""

    mesh: BoundaryMesh
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.mesh.n_panels,):
            raise ValueError("coefficient count must equal node count")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("trace coefficients must be finite")

    def at_midpoints(self) -> np.ndarray:
        c = self.coefficients
        return 0.5 * (c + np.roll(c, -1))


@dataclass
class BoundaryOperatorMatrix:
    """Dense Galerkin matrix with space and operator tags."""

    mesh: BoundaryMesh
    matrix: np.ndarray
    operator: str
    row_space: str
    col_space: str

    @property
    def shape(self):
        return self.matrix.shape


def mean_value(p: TraceVector) -> float:
    """mu(p) = |Gamma|^{-1} int_Gamma p ds (exact for P1 traces)."""
    m = p.mesh
    return float(m.node_weights @ p.coefficients) / m.perimeter


# ---------------------------------------------------------------------------
# Mass and derivative matrices (exact in arclength)
# ---------------------------------------------------------------------------

def p0_mass(mesh: BoundaryMesh) -> np.ndarray:
    """Diagonal of the P0 mass matrix: the panel lengths."""
    return mesh.lengths.copy()


def p0_p1_mass(mesh: BoundaryMesh) -> np.ndarray:
    """Mixed mass M[i, j] = int_panel_i psi_j ds (ell_i / 2 per end node)."""
    n = mesh.n_panels
    m = np.zeros((n, n))
    idx = np.arange(n)
    m[idx, idx] = 0.5 * mesh.lengths
    m[idx, (idx + 1) % n] += 0.5 * mesh.lengths
    return m


def p1_mass(mesh: BoundaryMesh) -> np.ndarray:
    """P1 mass matrix (cyclic tridiagonal, exact)."""
    n = mesh.n_panels
    ell = mesh.lengths
    m = np.zeros((n, n))
    idx = np.arange(n)
    m[idx, idx] = (ell + np.roll(ell, 1)) / 3.0
    m[idx, (idx + 1) % n] += ell / 6.0
    m[(idx + 1) % n, idx] += ell / 6.0
    return m


def arclength_derivative(mesh: BoundaryMesh) -> np.ndarray:
    """Matrix of d/ds mapping P1 node values to P0 panel slopes."""
    n = mesh.n_panels
    b = np.zeros((n, n))
    idx = np.arange(n)
    b[idx, idx] = -1.0 / mesh.lengths
    b[idx, (idx + 1) % n] = 1.0 / mesh.lengths
    return b


# ---------------------------------------------------------------------------
# Panel parametrization and Galerkin pairings
# ---------------------------------------------------------------------------

def panel_points(mesh: BoundaryMesh, fractions: np.ndarray):
    """Physical points at given arclength fractions of every panel.

    Returns arrays of shape (n_panels, len(fractions), 2) for the points
    and, for convenience, the panelwise normals broadcast alongside.
    Circle meshes place the points on the true arcs.
    """
    f = np.asarray(fractions, dtype=float)
    if mesh.is_circle:
        arc = mesh.arc
        th = arc.theta0[:, None] + (arc.theta1 - arc.theta0)[:, None] * f[None, :]
        pts = arc.center[None, None, :] + arc.radius * np.stack(
            [np.cos(th), np.sin(th)], axis=-1)
        normals = np.stack([np.cos(th), np.sin(th)], axis=-1)
    else:
        pts = mesh.starts[:, None, :] + (mesh.lengths[:, None] * f[None, :])[
            :, :, None] * mesh.tangents[:, None, :]
        normals = np.broadcast_to(mesh.normals[:, None, :], pts.shape).copy()
    return pts, normals


def _panel_rule(mesh: BoundaryMesh, order: int):
    """Per-panel Gauss points, weights (arclength measure) and normals."""
    rule = quad.gauss_legendre(order)
    f = 0.5 * (rule.nodes + 1.0)
    w = 0.5 * rule.weights
    pts, normals = panel_points(mesh, f)
    weights = mesh.lengths[:, None] * w[None, :]
    return pts, weights, normals


def pair_p0(mesh: BoundaryMesh, f, order: int = 12) -> np.ndarray:
    """Galerkin pairings <f, phi_i> = int_panel_i f ds for a callable f.

    ``f`` takes points (m, 2) and optionally normals, returning (m,).
    """
    pts, weights, normals = _panel_rule(mesh, order)
    vals = _call_boundary_function(f, pts.reshape(-1, 2),
                                   normals.reshape(-1, 2))
    return np.einsum("ik,ik->i", weights, vals.reshape(weights.shape))


def pair_p1(mesh: BoundaryMesh, f, order: int = 12) -> np.ndarray:
    """Galerkin pairings <f, psi_j> against the continuous P1 hats."""
    rule = quad.gauss_legendre(order)
    frac = 0.5 * (rule.nodes + 1.0)
    w = 0.5 * rule.weights
    pts, normals = panel_points(mesh, frac)
    vals = _call_boundary_function(f, pts.reshape(-1, 2),
                                   normals.reshape(-1, 2))
    vals = vals.reshape(pts.shape[:2])
    left = np.einsum("k,ik->i", w, vals * (1.0 - frac)[None, :]) * mesh.lengths
    right = np.einsum("k,ik->i", w, vals * frac[None, :]) * mesh.lengths
    n = mesh.n_panels
    out = np.zeros(n)
    np.add.at(out, np.arange(n), left)
    np.add.at(out, (np.arange(n) + 1) % n, right)
    return out


def _call_boundary_function(f, points, normals):
    try:
        return np.asarray(f(points, normals), dtype=float)
    except TypeError:
        return np.asarray(f(points), dtype=float)


def affine_pairings_p0(mesh: BoundaryMesh):
    """Exact panel integrals of {1, x1, x2} in the arclength measure."""
    if not mesh.is_circle:
        ell = mesh.lengths
        return ell, ell * mesh.midpoints[:, 0], ell * mesh.midpoints[:, 1]
    arc = mesh.arc
    ell = mesh.lengths
    r2 = arc.radius ** 2
    ix = arc.center[0] * ell + r2 * (np.sin(arc.theta1) - np.sin(arc.theta0))
    iy = arc.center[1] * ell - r2 * (np.cos(arc.theta1) - np.cos(arc.theta0))
    return ell, ix, iy


# ---------------------------------------------------------------------------
# Outer Galerkin quadrature (corner-graded composite Gauss)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _outer_fractions(levels: int, order: int):
    """Dyadically graded composite Gauss rule on [0, 1], graded to both ends."""
    br = [0.0] + [2.0 ** -(levels - j) for j in range(1, levels)] + [0.5]
    br = np.array(br + [1.0 - b for b in reversed(br[:-1])])
    rule = quad.gauss_legendre(order)
    fr, wt = [], []
    for a, b in zip(br[:-1], br[1:]):
        fr.append(a + 0.5 * (b - a) * (rule.nodes + 1.0))
        wt.append(0.5 * (b - a) * rule.weights)
    return np.concatenate(fr), np.concatenate(wt)


def _near_pair_indices(mesh: BoundaryMesh, factor: float = 4.0):
    """Pairs (i, j), i != j, closer than ``factor * (ell_i + ell_j)``.

    Outside this set the outer Galerkin integrand is analytic on a scale
    comfortably larger than the panel, so a plain Gauss rule is already at
    machine precision.
    """
    mid = mesh.midpoints
    ell = mesh.lengths
    d2 = np.sum((mid[:, None, :] - mid[None, :, :]) ** 2, axis=2)
    thresh = (factor * (ell[:, None] + ell[None, :])) ** 2
    near = d2 < thresh
    np.fill_diagonal(near, False)
    return np.nonzero(near)


def _pair_quadrature(mesh: BoundaryMesh, rows, cols, fractions, weights,
                     kernel: str):
    """Outer-integrate paired closed forms over listed (row, col) pairs.

    Returns ``(const, right)`` arrays of length ``len(rows)``.
    """
    m = len(rows)
    p = len(fractions)
    pts = mesh.starts[rows][:, None, :] \
        + (mesh.lengths[rows, None] * fractions[None, :])[:, :, None] \
        * mesh.tangents[rows][:, None, :]
    shape = (m, p, 2)
    const, right = quad.paired_panel_integrals(
        np.broadcast_to(mesh.starts[cols][:, None, :], shape),
        np.broadcast_to(mesh.tangents[cols][:, None, :], shape),
        np.broadcast_to(mesh.normals[cols][:, None, :], shape),
        np.broadcast_to(mesh.lengths[cols, None], shape[:2]),
        pts, kernel=kernel)
    w = mesh.lengths[rows, None] * weights[None, :]
    return np.einsum("ip,ip->i", w, const), np.einsum("ip,ip->i", w, right)


def _assemble_pairs(mesh: BoundaryMesh, kernel: str, levels: int,
                    order: int):
    """Panel-pair Galerkin integrals for one kernel.

    Strategy: one plain Gauss pass over all pairs, a graded-rule
    recomputation of near pairs, and a deep one-sided rule for pairs
    sharing a corner.  Returns ``(const, right)`` of shape (n, n); the
    diagonal of the single-layer ``const`` is replaced by its closed form
    by the caller.
    """
    n = mesh.n_panels
    rule = quad.gauss_legendre(order)
    frac_plain = 0.5 * (rule.nodes + 1.0)
    wts_plain = 0.5 * rule.weights

    def columns(points):
        if kernel == "single":
            return quad.single_layer_panel_integrals(
                mesh.starts, mesh.tangents, mesh.normals, mesh.lengths,
                points)
        return quad.double_layer_panel_integrals(
            mesh.starts, mesh.tangents, mesh.normals, mesh.lengths, points)

    pts, _ = panel_points(mesh, frac_plain)
    const = np.empty((n, n))
    right = np.empty((n, n))
    block = max(1, (1 << 22) // (n * order))
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        c, r = columns(pts[lo:hi].reshape(-1, 2))
        pshape = (hi - lo, len(frac_plain), n)
        w = mesh.lengths[lo:hi, None] * wts_plain[None, :]
        const[lo:hi] = np.einsum("ip,ipj->ij", w, c.reshape(pshape))
        right[lo:hi] = np.einsum("ip,ipj->ij", w, r.reshape(pshape))

    rows, cols = _near_pair_indices(mesh)
    if len(rows):
        frac_g, wts_g = _outer_fractions(levels, order)
        cg, rg = _pair_quadrature(mesh, rows, cols, frac_g, wts_g, kernel)
        const[rows, cols] = cg
        right[rows, cols] = rg

    # pairs sharing a corner: grade deep toward the shared endpoint
    idx = np.arange(n)
    frac_1s, wts_1s = _onesided_fractions(24, 8)
    for succ in (True, False):
        cols_a = (idx + 1) % n if succ else (idx - 1) % n
        f = (1.0 - frac_1s) if succ else frac_1s
        ca, ra = _pair_quadrature(mesh, idx, cols_a, f, wts_1s, kernel)
        const[idx, cols_a] = ca
        right[idx, cols_a] = ra
    return const, right


@lru_cache(maxsize=None)
def _onesided_fractions(levels: int, order: int):
    """Composite Gauss on [0, 1] graded dyadically toward 0 only."""
    br = np.array([0.0] + [2.0 ** -(levels - j) for j in range(levels + 1)])
    rule = quad.gauss_legendre(order)
    fr, wt = [], []
    for a, b in zip(br[:-1], br[1:]):
        fr.append(a + 0.5 * (b - a) * (rule.nodes + 1.0))
        wt.append(0.5 * (b - a) * rule.weights)
    return np.concatenate(fr), np.concatenate(wt)


# ---------------------------------------------------------------------------
# Circle circulant entries
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _clausen3_table(n: int) -> tuple:
    """Cl_3(2 pi k / n) = sum cos(2 pi k m / n) / m^3 for k = 0..n."""
    import mpmath as mp

    with mp.workdps(30):
        return tuple(float(mp.clcos(3, 2.0 * np.pi * k / n))
                     for k in range(n + 1))


def _circle_V(mesh: BoundaryMesh) -> np.ndarray:
    """Exact P0 Galerkin single-layer matrix on uniform circle arcs.

    With |x - y| = 2 R |sin((theta - phi)/2)| and the Fourier series of
    ln(2 |sin(t/2)|), the double arc integral reduces to Clausen-function
    values; the matrix is circulant in the panel index.
    """
    arc = mesh.arc
    n = mesh.n_panels
    r = arc.radius
    delta = 2.0 * np.pi / n
    cl = np.array(_clausen3_table(n))
    k = np.arange(n)
    first = -(r * r * INV_2PI) * (
        delta * delta * np.log(r)
        - 2.0 * cl[k] + cl[k + 1] + cl[np.abs(k - 1)])
    return scipy.linalg.circulant(first)


# ---------------------------------------------------------------------------
# Operator assembly
# ---------------------------------------------------------------------------

_DEFAULT_LEVELS = 5
_DEFAULT_ORDER = 8


def assemble_V(mesh: BoundaryMesh, levels: int = _DEFAULT_LEVELS,
               order: int = _DEFAULT_ORDER) -> BoundaryOperatorMatrix:
    """Single-layer Galerkin matrix; symmetric, PD for capacity below 1."""
    convention_self_test()
    if mesh.is_circle:
        matrix = _circle_V(mesh)
    else:
        matrix, _ = _assemble_pairs(mesh, "single", levels, order)
        ell = mesh.lengths
        matrix[np.arange(mesh.n_panels), np.arange(mesh.n_panels)] = \
            ell * ell * INV_2PI * (1.5 - np.log(ell))
        matrix = 0.5 * (matrix + matrix.T)
    return BoundaryOperatorMatrix(mesh=mesh, matrix=matrix, operator="V",
                                  row_space=P0_SPACE, col_space=P0_SPACE)


def assemble_K(mesh: BoundaryMesh, levels: int = _DEFAULT_LEVELS,
               order: int = _DEFAULT_ORDER) -> BoundaryOperatorMatrix:
    """Double-layer trace paired as <K p, phi_i> (P0 rows, P1 columns)."""
    convention_self_test()
    n = mesh.n_panels
    if mesh.is_circle:
        # kernel is exactly -1/(4 pi R) between circle points
        matrix = -np.outer(mesh.lengths, mesh.node_weights) / (
            4.0 * np.pi * mesh.arc.radius)
    else:
        pair_const, pair_right = _assemble_pairs(mesh, "double", levels,
                                                 order)
        idx = np.arange(n)
        matrix = np.zeros((n, n))
        matrix[:, idx] = pair_const - pair_right
        cols = np.zeros((n, n))
        cols[:, (idx + 1) % n] = pair_right
        matrix += cols
    return BoundaryOperatorMatrix(mesh=mesh, matrix=matrix, operator="K",
                                  row_space=P0_SPACE, col_space=P1_SPACE)


def assemble_Kadj(mesh: BoundaryMesh, levels: int = _DEFAULT_LEVELS,
                  order: int = _DEFAULT_ORDER) -> BoundaryOperatorMatrix:
    """Adjoint double-layer operator: the exact Galerkin transpose of K."""
    k = assemble_K(mesh, levels=levels, order=order)
    return BoundaryOperatorMatrix(mesh=mesh, matrix=k.matrix.T.copy(),
                                  operator="Kadj",
                                  row_space=P1_SPACE, col_space=P0_SPACE)


def assemble_W(mesh: BoundaryMesh, V: BoundaryOperatorMatrix | None = None,
               levels: int = _DEFAULT_LEVELS,
               order: int = _DEFAULT_ORDER) -> BoundaryOperatorMatrix:
    """Hypersingular form via integration by parts: W = B^T V B.

    ``B`` is the arclength derivative (P1 -> P0), so the kernel of W is
    exactly the constants and W inherits symmetry and positive
    semidefiniteness from V.
    """
    if V is None:
        V = assemble_V(mesh, levels=levels, order=order)
    b = arclength_derivative(mesh)
    matrix = b.T @ V.matrix @ b
    matrix = 0.5 * (matrix + matrix.T)
    return BoundaryOperatorMatrix(mesh=mesh, matrix=matrix, operator="W",
                                  row_space=P1_SPACE, col_space=P1_SPACE)


# ---------------------------------------------------------------------------
# Sign-convention self test
# ---------------------------------------------------------------------------

@lru_cache(maxsize=1)
def convention_self_test() -> bool:
    """Assert the pinned double-layer sign on a small circle once.

    Checks (i) the field of the double layer of p = 1 is -1 at the circle
    center (Gauss integral), (ii) K 1 = -(1/2) M 1, (iii) W 1 = 0.
    """
    from .geometry import circle_mesh

    mesh = circle_mesh(0.5, 16)
    center = np.zeros((1, 2))
    # chord geometry is enough for the Gauss integral of the 16-gon
    d_const, _ = quad.double_layer_panel_integrals(
        mesh.starts, (mesh.ends - mesh.starts) /
        np.hypot(*(mesh.ends - mesh.starts).T)[:, None],
        _chord_normals(mesh), np.hypot(*(mesh.ends - mesh.starts).T), center)
    gauss = float(d_const.sum())
    if abs(gauss + 1.0) > 1e-12:
        raise AssertionError(
            f"double-layer sign convention violated: Gauss integral {gauss}")
    v = _circle_V(mesh)
    b = arclength_derivative(mesh)
    w1 = b.T @ v @ (b @ np.ones(mesh.n_panels))
    if np.max(np.abs(w1)) > 1e-12:
        raise AssertionError("W 1 != 0 under the pinned convention")
    k = -np.outer(mesh.lengths, mesh.node_weights) / (
        4.0 * np.pi * mesh.arc.radius)
    m01 = p0_p1_mass(mesh)
    resid = k @ np.ones(mesh.n_panels) + 0.5 * m01 @ np.ones(mesh.n_panels)
    if np.max(np.abs(resid)) > 1e-12:
        raise AssertionError("K 1 != -(1/2) M 1 under the pinned convention")
    return True


def _chord_normals(mesh: BoundaryMesh) -> np.ndarray:
    seg = mesh.ends - mesh.starts
    ell = np.hypot(seg[:, 0], seg[:, 1])
    t = seg / ell[:, None]
    return np.stack([t[:, 1], -t[:, 0]], axis=1)


# ---------------------------------------------------------------------------
# Solves
# ---------------------------------------------------------------------------

def _as_pairing_p0(mesh: BoundaryMesh, rhs) -> np.ndarray:
    """Galerkin pairings of Dirichlet-type data against P0 tests.

    Accepts a TraceVector (paired exactly through the mixed mass), a
    callable boundary function (paired by panelwise Gauss quadrature) or
    a raw pairing vector.
    """
    if isinstance(rhs, TraceVector):
        return p0_p1_mass(mesh) @ rhs.coefficients
    if callable(rhs):
        return pair_p0(mesh, rhs)
    b = np.asarray(rhs, dtype=float)
    if b.shape != (mesh.n_panels,):
        raise ValueError("rhs length must equal panel count")
    return b


def _as_pairing_p1(mesh: BoundaryMesh, rhs) -> np.ndarray:
    """Galerkin pairings of Neumann-type data against P1 tests."""
    if isinstance(rhs, DensityVector):
        return p0_p1_mass(mesh).T @ rhs.coefficients
    if callable(rhs):
        return pair_p1(mesh, rhs)
    b = np.asarray(rhs, dtype=float)
    if b.shape != (mesh.n_panels,):
        raise ValueError("rhs length must equal node count")
    return b


def robin_constant(V: BoundaryOperatorMatrix):
    """(c_Gamma, raw equilibrium solve) from LDL factors of V.

    Uses a symmetric indefinite solve so the constant is computable on
    either side of capacity 1; near capacity 1 the solve blows up and a
    :class:`CapacityViolation` is raised.
    """
    mesh = V.mesh
    try:
        e_raw = scipy.linalg.solve(V.matrix, mesh.lengths, assume_a="sym")
    except scipy.linalg.LinAlgError as exc:
        raise CapacityViolation(f"equilibrium solve failed: {exc}") from exc
    total = float(e_raw @ mesh.lengths)
    if not np.isfinite(total) or abs(total) >= 1e12:
        raise CapacityViolation("logarithmic capacity is too close to 1")
    return 1.0 / total, e_raw


def solve_V(V: BoundaryOperatorMatrix, rhs,
            margin: float | None = 0.05) -> DensityVector:
    """Solve the single-layer Galerkin system V q = rhs.

    ``rhs`` is a TraceVector or a raw pairing vector against P0 tests.
    A Cholesky factorization is used; ``margin`` is the minimum Robin
    constant accepted (None skips the check).

    Raises
    ------
    CapacityViolation
        V is not positive definite or c_Gamma falls below ``margin``.
    SolveFailure
        The residual exceeds 1e-10 relative.
    """
    mesh = V.mesh
    b = _as_pairing_p0(mesh, rhs)
    try:
        factor = scipy.linalg.cho_factor(V.matrix)
    except scipy.linalg.LinAlgError as exc:
        raise CapacityViolation(
            "V is not positive definite (capacity >= 1?)") from exc
    if margin is not None:
        e_raw = scipy.linalg.cho_solve(factor, mesh.lengths)
        c_gamma = 1.0 / float(e_raw @ mesh.lengths)
        if c_gamma < margin:
            raise CapacityViolation(
                f"Robin constant {c_gamma:.4g} below margin {margin}; "
                "rescale the geometry first")
    q = scipy.linalg.cho_solve(factor, b)
    norm_b = np.linalg.norm(b)
    if norm_b > 0:
        resid = np.linalg.norm(V.matrix @ q - b) / norm_b
        if not np.isfinite(resid) or resid > 1e-10:
            raise SolveFailure(f"V solve residual {resid:.3e}")
    return DensityVector(mesh=mesh, coefficients=q)


def solve_W(W: BoundaryOperatorMatrix, rhs,
            compat_tol: float = 1e-8) -> TraceVector:
    """Solve W p = rhs on the mean-zero trace space.

    The one-dimensional kernel (constants) is pinned by a Lagrange
    multiplier on the P1 mass vector, keeping the system symmetric; the
    returned trace has mu(p) = 0.

    Raises
    ------
    IncompatibleData
        rhs is not Galerkin-orthogonal to constants within ``compat_tol``.
    SolveFailure
        Residual above 1e-10 relative.
    """
    mesh = W.mesh
    b = _as_pairing_p1(mesh, rhs)
    scale = np.linalg.norm(b)
    if scale > 0 and abs(b.sum()) > compat_tol * max(scale, 1.0):
        raise IncompatibleData(
            f"rhs pairs with the constant: <rhs,1> = {b.sum():.3e}")
    n = mesh.n_panels
    m = mesh.node_weights
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = W.matrix
    aug[:n, n] = m
    aug[n, :n] = m
    rhs_aug = np.concatenate([b, [0.0]])
    try:
        sol = scipy.linalg.solve(aug, rhs_aug, assume_a="sym")
    except scipy.linalg.LinAlgError as exc:
        raise SolveFailure(f"augmented W solve failed: {exc}") from exc
    p = sol[:n]
    if scale > 0:
        resid = np.linalg.norm(W.matrix @ p - b) / scale
        if not np.isfinite(resid) or resid > 1e-10:
            raise SolveFailure(f"W solve residual {resid:.3e}")
    return TraceVector(mesh=mesh, coefficients=p)


# ---------------------------------------------------------------------------
# Assembled bundle
# ---------------------------------------------------------------------------

class OperatorSuite:
    """Lazily assembled operator set for one mesh (shared by the solvers)."""

    def __init__(self, mesh: BoundaryMesh, levels: int = _DEFAULT_LEVELS,
                 order: int = _DEFAULT_ORDER):
        self.mesh = mesh
        self._levels = levels
        self._order = order
        self._cache: dict = {}

    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    @property
    def V(self) -> BoundaryOperatorMatrix:
        return self._get("V", lambda: assemble_V(
            self.mesh, self._levels, self._order))

    @property
    def K(self) -> BoundaryOperatorMatrix:
        return self._get("K", lambda: assemble_K(
            self.mesh, self._levels, self._order))

    @property
    def Kadj(self) -> BoundaryOperatorMatrix:
        return self._get("Kadj", lambda: assemble_Kadj(
            self.mesh, self._levels, self._order))

    @property
    def W(self) -> BoundaryOperatorMatrix:
        return self._get("W", lambda: assemble_W(self.mesh, self.V))

    @property
    def M01(self) -> np.ndarray:
        return self._get("M01", lambda: p0_p1_mass(self.mesh))

    @property
    def M1(self) -> np.ndarray:
        return self._get("M1", lambda: p1_mass(self.mesh))

    @property
    def robin(self) -> float:
        return self._get("robin", lambda: robin_constant(self.V)[0])
