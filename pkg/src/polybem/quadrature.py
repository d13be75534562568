"""Gauss rules and closed-form panel integrals for the logarithmic kernel.

All boundary integrals in this package reduce to integrals of

    G(x - y) = -ln|x - y| / (2 pi)          (single-layer kernel)
    k(x, y)  = (x - y) . n(y) / (2 pi |x - y|^2)   (double-layer kernel)

against constant or linear densities on straight segments.  On a straight
panel both families have elementary antiderivatives, so the inner integral
of every Galerkin entry and every field evaluation is computed exactly.
The double-layer sign convention is fixed in :mod:`polybem.boundary_ops`
by the discrete jump relations; this module only provides the raw
integrals for the kernel written above.

Local panel frame: a panel runs from ``a`` to ``b = a + L t`` with unit
tangent ``t`` and unit normal ``n`` (``t . n = 0``).  A target point ``x``
has coordinates ``xi = (x - a) . t`` and ``eta = (x - a) . n``.  With
``u0 = -xi`` and ``u1 = L - xi``:

    int_panel ln|x - y| ds(y) = [ u ln(u^2 + eta^2) - 2 u
                                  + 2 eta atan(u / eta) ]_{u0}^{u1} / ... (Ilog)
    int_panel s ln|x - y| ds  = xi * Ilog + [ (u^2 + eta^2)/2 ln(u^2+eta^2)
                                  - u^2 / 2 ]_{u0}^{u1}                  (Jlog)
    int_panel (x-y).n / |x-y|^2 ds(y)      = atan(u1/eta) - atan(u0/eta) (beta)
    int_panel s (x-y).n / |x-y|^2 ds(y)    = eta/2 ln(r1^2/r0^2) + xi beta

``beta`` is the signed angle subtended by the panel at ``x``; it vanishes
for ``eta = 0`` (principal value on the panel's own line).  The formulas
are valid for ``x`` on, near, or far from the panel, endpoints included.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateSegment, NoConvergence, UnsupportedOrder

TWO_PI = 2.0 * np.pi
INV_2PI = 1.0 / TWO_PI
INV_4PI = 1.0 / (4.0 * np.pi)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on [-1, 1]."""

    nodes: np.ndarray
    weights: np.ndarray

    def mapped(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights mapped to the interval [a, b]."""
        half = 0.5 * (b - a)
        return a + half * (self.nodes + 1.0), np.abs(half) * self.weights


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``n`` points on [-1, 1].

    Raises
    ------
    UnsupportedOrder
        If ``n`` is outside 1..64.
    """
    if not (1 <= n <= 64):
        raise UnsupportedOrder(f"Gauss-Legendre order must be in 1..64, got {n}")
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes=nodes, weights=weights)


# ---------------------------------------------------------------------------
# Vectorized closed forms
# ---------------------------------------------------------------------------

def panel_frames(starts, tangents, normals, lengths, points):
    """Local coordinates of ``points`` relative to a family of panels.

    Parameters are panel arrays of shape (n, 2)/(n,), points of shape (m, 2).
    Returns ``xi, eta`` of shape (m, n).
    """
    d = points[:, None, :] - starts[None, :, :]
    xi = d[:, :, 0] * tangents[None, :, 0] + d[:, :, 1] * tangents[None, :, 1]
    eta = d[:, :, 0] * normals[None, :, 0] + d[:, :, 1] * normals[None, :, 1]
    return xi, eta


def _xlogr2(u, r2):
    """u * ln(r2) with the integrable limit 0 at r2 = 0."""
    safe = np.where(r2 > 0.0, r2, 1.0)
    return np.where(r2 > 0.0, u * np.log(safe), 0.0)


def _eta_atan(u, eta):
    """eta * atan(u / eta), continuous value 0 at eta = 0."""
    mask = eta != 0.0
    safe = np.where(mask, eta, 1.0)
    return np.where(mask, eta * np.arctan(u / safe), 0.0)


def _atan_ratio(u, eta):
    """atan(u / eta), set to 0 where eta = 0 (principal value)."""
    mask = eta != 0.0
    safe = np.where(mask, eta, 1.0)
    return np.where(mask, np.arctan(u / safe), 0.0)


def _safe_logratio(r1sq, r0sq, eta):
    """ln(r1^2 / r0^2), zeroed where eta = 0 or an endpoint is hit."""
    mask = (eta != 0.0) & (r0sq > 0.0) & (r1sq > 0.0)
    s1 = np.where(mask, r1sq, 1.0)
    s0 = np.where(mask, r0sq, 1.0)
    return np.where(mask, np.log(s1 / s0), 0.0)


def single_layer_panel_integrals(starts, tangents, normals, lengths, points):
    """Exact integrals of G(x - y) times {1, s/L} over straight panels.

    Returns ``(S_const, S_right)`` of shape (m, n): the integral of
    ``G(x-y)`` against the constant 1 and against the right-rising linear
    basis ``s/L``.  The left basis integral is ``S_const - S_right``.
    """
    xi, eta = panel_frames(starts, tangents, normals, lengths, points)
    L = lengths[None, :]
    u0 = -xi
    u1 = L - xi
    r0sq = u0 * u0 + eta * eta
    r1sq = u1 * u1 + eta * eta

    ilog = (_xlogr2(u1, r1sq) - _xlogr2(u0, r0sq)
            - 2.0 * (u1 - u0)
            + 2.0 * (_eta_atan(u1, eta) - _eta_atan(u0, eta)))
    jlog = 0.5 * (_xlogr2(r1sq, r1sq) - _xlogr2(r0sq, r0sq)) \
        - 0.5 * (u1 * u1 - u0 * u0)

    s_const = -INV_4PI * ilog
    s_right = -INV_4PI * (xi * ilog + jlog) / L
    return s_const, s_right


def double_layer_panel_integrals(starts, tangents, normals, lengths, points):
    """Exact integrals of the double-layer kernel times {1, s/L}.

    Kernel: ``(x - y) . n(y) / (2 pi |x - y|^2)`` with ``n`` the panel
    normal.  Returns ``(D_const, D_right)`` of shape (m, n); the left
    basis integral is ``D_const - D_right``.  On the panel's own line the
    kernel vanishes identically and the integrals are 0.
    """
    xi, eta = panel_frames(starts, tangents, normals, lengths, points)
    L = lengths[None, :]
    u0 = -xi
    u1 = L - xi
    r0sq = u0 * u0 + eta * eta
    r1sq = u1 * u1 + eta * eta

    beta = _atan_ratio(u1, eta) - _atan_ratio(u0, eta)
    dlog = _safe_logratio(r1sq, r0sq, eta)

    d_const = INV_2PI * beta
    d_right = INV_2PI * (0.5 * eta * dlog + xi * beta) / L
    return d_const, d_right


def paired_panel_integrals(starts, tangents, normals, lengths, points,
                           kernel: str = "single"):
    """Pointwise variant of the panel integrals: one panel per point.

    All panel arrays and ``points`` share the same leading shape; returns
    ``(const, right)`` of that shape.  Used where evaluating every point
    against every panel would be wasteful.
    """
    d = points - starts
    xi = d[..., 0] * tangents[..., 0] + d[..., 1] * tangents[..., 1]
    eta = d[..., 0] * normals[..., 0] + d[..., 1] * normals[..., 1]
    L = lengths
    u0 = -xi
    u1 = L - xi
    r0sq = u0 * u0 + eta * eta
    r1sq = u1 * u1 + eta * eta
    if kernel == "single":
        ilog = (_xlogr2(u1, r1sq) - _xlogr2(u0, r0sq)
                - 2.0 * (u1 - u0)
                + 2.0 * (_eta_atan(u1, eta) - _eta_atan(u0, eta)))
        jlog = 0.5 * (_xlogr2(r1sq, r1sq) - _xlogr2(r0sq, r0sq)) \
            - 0.5 * (u1 * u1 - u0 * u0)
        return -INV_4PI * ilog, -INV_4PI * (xi * ilog + jlog) / L
    beta = _atan_ratio(u1, eta) - _atan_ratio(u0, eta)
    dlog = _safe_logratio(r1sq, r0sq, eta)
    return INV_2PI * beta, INV_2PI * (0.5 * eta * dlog + xi * beta) / L


def single_layer_panel_gradient(starts, tangents, normals, lengths, points):
    """Exact gradient (w.r.t. x) of the constant-basis single-layer integral.

    Returns an array of shape (m, n, 2); summing over panels with density
    coefficients gives ``grad S q (x)`` for piecewise-constant ``q``.
    """
    xi, eta = panel_frames(starts, tangents, normals, lengths, points)
    L = lengths[None, :]
    u0 = -xi
    u1 = L - xi
    r0sq = u0 * u0 + eta * eta
    r1sq = u1 * u1 + eta * eta

    mask = (r0sq > 0.0) & (r1sq > 0.0)
    s1 = np.where(mask, r1sq, 1.0)
    s0 = np.where(mask, r0sq, 1.0)
    dlog = np.where(mask, np.log(s1 / s0), 0.0)
    beta = _atan_ratio(u1, eta) - _atan_ratio(u0, eta)

    gt = INV_2PI * 0.5 * dlog
    gn = -INV_2PI * beta
    grad = gt[:, :, None] * tangents[None, :, :] + gn[:, :, None] * normals[None, :, :]
    return grad


# ---------------------------------------------------------------------------
# Scalar segment interface
# ---------------------------------------------------------------------------

_BASIS_KEYS = ("constant", "linear-left", "linear-right")


def _segment_arrays(segment):
    a = np.asarray(segment[0], dtype=float)
    b = np.asarray(segment[1], dtype=float)
    length = float(np.hypot(*(b - a)))
    if length == 0.0:
        raise DegenerateSegment("segment endpoints coincide")
    t = (b - a) / length
    n = np.array([t[1], -t[0]])  # outward for counterclockwise traversal
    return (a[None, :], t[None, :], n[None, :], np.array([length]))


def segment_log_integral(segment, x, basis: str = "constant") -> float:
    """Exact ``int_segment G(x - y) phi(y) ds(y)`` on a straight segment.

    ``segment`` is a pair of 2-D endpoints; ``basis`` selects the density
    ``phi``: 1, the hat rising toward the first endpoint ("linear-left"),
    or the hat rising toward the second endpoint ("linear-right").  Valid
    for any ``x``, endpoints and on-segment points included.
    """
    if basis not in _BASIS_KEYS:
        raise ValueError(f"basis must be one of {_BASIS_KEYS}")
    starts, t, n, lengths = _segment_arrays(segment)
    pts = np.asarray(x, dtype=float)[None, :]
    s_const, s_right = single_layer_panel_integrals(starts, t, n, lengths, pts)
    if basis == "constant":
        return float(s_const[0, 0])
    if basis == "linear-right":
        return float(s_right[0, 0])
    return float(s_const[0, 0] - s_right[0, 0])


def segment_double_layer_integral(segment, x, basis: str = "constant") -> float:
    """Exact double-layer companion of :func:`segment_log_integral`."""
    if basis not in _BASIS_KEYS:
        raise ValueError(f"basis must be one of {_BASIS_KEYS}")
    starts, t, n, lengths = _segment_arrays(segment)
    pts = np.asarray(x, dtype=float)[None, :]
    d_const, d_right = double_layer_panel_integrals(starts, t, n, lengths, pts)
    if basis == "constant":
        return float(d_const[0, 0])
    if basis == "linear-right":
        return float(d_right[0, 0])
    return float(d_const[0, 0] - d_right[0, 0])


# ---------------------------------------------------------------------------
# Adaptive quadrature for near-singular off-boundary evaluation
# ---------------------------------------------------------------------------

_MAX_DEPTH = 40


def adaptive_interval(f, a: float, b: float, tol: float, order: int = 8) -> float:
    """Adaptive composite Gauss integration of ``f`` over [a, b].

    Bisects until the two-panel refinement of each leaf changes its
    estimate by less than the locally apportioned tolerance.  Raises
    :class:`NoConvergence` past depth 40.
    """
    rule = gauss_legendre(order)

    def gauss(lo, hi):
        x, w = rule.mapped(lo, hi)
        return float(np.dot(w, f(x)))

    total = 0.0
    stack = [(a, b, gauss(a, b), 0)]
    span = b - a
    while stack:
        lo, hi, coarse, depth = stack.pop()
        if depth > _MAX_DEPTH:
            raise NoConvergence(
                f"adaptive subdivision exceeded depth {_MAX_DEPTH}")
        mid = 0.5 * (lo + hi)
        left = gauss(lo, mid)
        right = gauss(mid, hi)
        fine = left + right
        if abs(fine - coarse) <= tol * max((hi - lo) / span, 1e-3):
            total += fine
        else:
            stack.append((lo, mid, left, depth + 1))
            stack.append((mid, hi, right, depth + 1))
    return total


def near_singular_quadrature(segment, x, kind: str = "G",
                             tol: float = 1e-10) -> float:
    """Adaptive integration of G or the double-layer kernel on a segment.

    Subdivides dyadically toward the foot point of ``x`` until the
    composite Gauss estimate settles below ``tol``.  Where the closed
    forms apply (straight segment) this agrees with them; it exists as an
    independent cross-check and as the evaluation path for curved panels.
    """
    if not (1e-14 <= tol <= 1e-4):
        raise ValueError("tol must lie in [1e-14, 1e-4]")
    if kind not in ("G", "grad_g_dot_n"):
        raise ValueError("kind must be 'G' or 'grad_g_dot_n'")
    a = np.asarray(segment[0], dtype=float)
    b = np.asarray(segment[1], dtype=float)
    length = float(np.hypot(*(b - a)))
    if length == 0.0:
        raise DegenerateSegment("segment endpoints coincide")
    t = (b - a) / length
    n = np.array([t[1], -t[0]])
    x = np.asarray(x, dtype=float)

    if kind == "G":
        def f(s):
            y = a[None, :] + s[:, None] * t[None, :]
            r2 = np.sum((x[None, :] - y) ** 2, axis=1)
            return -0.5 * INV_2PI * np.log(r2)
    else:
        def f(s):
            y = a[None, :] + s[:, None] * t[None, :]
            d = x[None, :] - y
            r2 = np.sum(d * d, axis=1)
            return INV_2PI * (d @ n) / r2

    # split at the foot point so each half sees a one-sided singularity
    foot = float(np.clip((x - a) @ t, 0.0, length))
    result = 0.0
    for lo, hi in ((0.0, foot), (foot, length)):
        if hi - lo > 0.0:
            result += adaptive_interval(f, lo, hi, tol)
    return result
