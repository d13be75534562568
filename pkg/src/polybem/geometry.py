"""Polygonal Jordan curves, corner bookkeeping and graded boundary meshes.

Orientation convention: boundaries are stored counterclockwise, so the
interior lies to the left of travel.  With unit tangent ``tau`` the outer
unit normal is ``n- = -tau_perp`` (``tau_perp`` is ``tau`` rotated by
+pi/2) and the inner normal is ``n+ = -n-``.

Two boundary families are supported:

* straight polygons (the main objects; all panels are segments), and
* a built-in circle used as an analytic oracle.  Its mesh keeps the exact
  arc geometry (nodes on the circle, radial normals, arc lengths) so that
  closed-form circle identities hold to machine precision.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import Degenerate, InvalidGrading, SelfIntersecting, TooCoarse

_MERGE_TOL = 1e-12


@dataclass(frozen=True)
class SimilarityTransform:
    """Map x -> scale * x + translation with scale > 0."""

    scale: float
    translation: np.ndarray

    def __post_init__(self):
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "translation",
                           np.asarray(self.translation, dtype=float))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(points, dtype=float) + self.translation

    def inverse(self) -> "SimilarityTransform":
        return SimilarityTransform(1.0 / self.scale,
                                   -self.translation / self.scale)

    @staticmethod
    def identity() -> "SimilarityTransform":
        return SimilarityTransform(1.0, np.zeros(2))


def _signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _cross2(a, b):
    """z-component of the 2-D cross product (works on (..., 2) arrays)."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _segments_intersect(p, q, r, s) -> bool:
    """Proper intersection of open segments pq and rs."""
    d1 = _cross2(q - p, r - p)
    d2 = _cross2(q - p, s - p)
    d3 = _cross2(s - r, p - r)
    d4 = _cross2(s - r, q - r)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    return False


@dataclass(frozen=True)
class PolygonalBoundary:
    """A simple closed polygon, stored counterclockwise.

    ``corner_angles[j]`` is the interior opening at ``vertices[j]`` in
    (0, 2 pi); reentrant corners have angles above pi.
    """

    vertices: np.ndarray
    corner_angles: np.ndarray = field(init=False)
    perimeter: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        object.__setattr__(self, "vertices", v)
        e = np.roll(v, -1, axis=0) - v
        lengths = np.hypot(e[:, 0], e[:, 1])
        object.__setattr__(self, "perimeter", float(lengths.sum()))
        d_out = e / lengths[:, None]
        d_in = np.roll(d_out, 1, axis=0)
        turn = np.arctan2(_cross2(d_in, d_out),
                          np.einsum("ij,ij->i", d_in, d_out))
        object.__setattr__(self, "corner_angles", np.pi - turn)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def edges(self) -> np.ndarray:
        """Edge segments as an (n, 2, 2) array of endpoint pairs."""
        return np.stack([self.vertices, np.roll(self.vertices, -1, axis=0)],
                        axis=1)

    @property
    def edge_lengths(self) -> np.ndarray:
        e = np.roll(self.vertices, -1, axis=0) - self.vertices
        return np.hypot(e[:, 0], e[:, 1])

    def signed_area(self) -> float:
        return _signed_area(self.vertices)

    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(np.hypot(v[:, 0, None] - v[None, :, 0],
                                     v[:, 1, None] - v[None, :, 1])))

    def reentrant_corners(self) -> np.ndarray:
        """Indices of vertices with opening angle above pi."""
        return np.nonzero(self.corner_angles > np.pi + 1e-12)[0]

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Strict interior test via winding (crossing) number."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        inside = np.zeros(len(pts), dtype=bool)
        for a, b in zip(v, w):
            cond = (a[1] > pts[:, 1]) != (b[1] > pts[:, 1])
            with np.errstate(divide="ignore", invalid="ignore"):
                xs = a[0] + (pts[:, 1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0])
            inside ^= cond & (pts[:, 0] < xs)
        return inside


def build_polygon(vertices) -> PolygonalBoundary:
    """Validate, clean up and orient a polygon.

    Repeated and collinear consecutive vertices are merged; a clockwise
    input is reversed to counterclockwise.

    Raises
    ------
    Degenerate
        Fewer than 3 distinct vertices remain.
    SelfIntersecting
        The cleaned curve is not simple.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise Degenerate("need at least 3 two-dimensional vertices")

    scale = max(float(np.max(np.abs(v))), 1.0)

    # drop repeated consecutive vertices
    keep = [0]
    for i in range(1, len(v)):
        if np.hypot(*(v[i] - v[keep[-1]])) > _MERGE_TOL * scale:
            keep.append(i)
    if np.hypot(*(v[keep[-1]] - v[keep[0]])) <= _MERGE_TOL * scale:
        keep.pop()
    v = v[keep]
    if len(v) < 3:
        raise Degenerate("fewer than 3 distinct vertices")

    # merge collinear consecutive vertices (straight-through only)
    changed = True
    while changed and len(v) >= 3:
        changed = False
        for i in range(len(v)):
            a, b, c = v[i - 1], v[i], v[(i + 1) % len(v)]
            ab, bc = b - a, c - b
            cross = float(_cross2(ab, bc))
            if abs(cross) <= _MERGE_TOL * scale * scale:
                if float(ab @ bc) <= 0.0:
                    raise SelfIntersecting(
                        "zero-width spike at vertex %d" % i)
                v = np.delete(v, i, axis=0)
                changed = True
                break
    if len(v) < 3:
        raise Degenerate("fewer than 3 distinct vertices after merging")

    if _signed_area(v) < 0.0:
        v = v[::-1].copy()

    # simplicity: non-adjacent edges must not intersect
    n = len(v)
    w = np.roll(v, -1, axis=0)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j - i) % n == 1 or (i - j) % n == 1:
                continue
            if _segments_intersect(v[i], w[i], v[j], w[j]):
                raise SelfIntersecting(
                    f"edges {i} and {j} intersect")
    return PolygonalBoundary(vertices=v)


def apply_similarity(boundary: PolygonalBoundary,
                     t: SimilarityTransform) -> PolygonalBoundary:
    """Rescale and translate a polygon; angles are unchanged."""
    return PolygonalBoundary(vertices=t.apply(boundary.vertices))


# ---------------------------------------------------------------------------
# Built-in shapes
# ---------------------------------------------------------------------------

def unit_square() -> PolygonalBoundary:
    return build_polygon([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


def lshape(scale: float = 1.0) -> PolygonalBoundary:
    """The 6-vertex L with one reentrant corner of opening 3 pi / 2.

    ``scale < 1`` shrinks the shape; solves require the logarithmic
    capacity below 1, which the unit-size L violates.
    """
    v = scale * np.array([(0.0, 0.0), (2.0, 0.0), (2.0, 1.0),
                          (1.0, 1.0), (1.0, 2.0), (0.0, 2.0)])
    return build_polygon(v)


@dataclass(frozen=True)
class CircleBoundary:
    """Analytic circle oracle."""

    radius: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "center",
                           np.asarray(self.center, dtype=float))

    @property
    def perimeter(self) -> float:
        return 2.0 * np.pi * self.radius

    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.hypot(*(pts - self.center).T) < self.radius


# ---------------------------------------------------------------------------
# Boundary meshes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArcData:
    """Exact arc geometry of a circle mesh (one entry per panel)."""

    center: np.ndarray
    radius: float
    theta0: np.ndarray
    theta1: np.ndarray


@dataclass(frozen=True)
class BoundaryMesh:
    """Panel discretization of a boundary.

    Panels are ordered counterclockwise.  ``nodes[i]`` is the start point
    of panel ``i`` (the continuous-P1 node set); ``midpoints``, ``normals``
    and ``tangents`` are panelwise.  For circle meshes ``arc`` stores the
    exact arc parameters and the straight-panel arrays describe the
    chords, while ``lengths``/``midpoints``/``normals`` refer to the true
    arcs.
    """

    boundary: object
    starts: np.ndarray
    ends: np.ndarray
    lengths: np.ndarray
    midpoints: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    corner_flags: np.ndarray
    grading: float
    panels_per_edge: int
    arc: ArcData | None = None

    @property
    def n_panels(self) -> int:
        return len(self.lengths)

    @property
    def nodes(self) -> np.ndarray:
        return self.starts

    @property
    def node_weights(self) -> np.ndarray:
        """Lumped P1 mass: half the two adjacent panel lengths."""
        return 0.5 * (self.lengths + np.roll(self.lengths, 1))

    @property
    def perimeter(self) -> float:
        return float(self.lengths.sum())

    @property
    def is_circle(self) -> bool:
        return self.arc is not None

    def refined(self, factor: int = 2) -> "BoundaryMesh":
        """Same boundary, ``factor`` times more panels per edge."""
        if self.is_circle:
            return circle_mesh(self.boundary.radius,
                               self.n_panels * factor,
                               center=self.boundary.center)
        return graded_mesh(self.boundary, self.panels_per_edge * factor,
                           beta=self.grading)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("panel_id,x0,y0,x1,y1,nx,ny\n")
        for i in range(self.n_panels):
            buf.write("%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n" % (
                i, self.starts[i, 0], self.starts[i, 1],
                self.ends[i, 0], self.ends[i, 1],
                self.normals[i, 0], self.normals[i, 1]))
        return buf.getvalue()


def _edge_breakpoints(length: float, n: int, beta: float) -> np.ndarray:
    """Symmetric power-law breakpoints on [0, length].

    s_k = (L/2) (2k/n)^beta for k <= n/2, mirrored on the other half, so
    panels cluster toward both edge endpoints (every endpoint of a polygon
    edge is a corner).
    """
    k = np.arange(n + 1)
    half = k <= n / 2
    s = np.empty(n + 1)
    s[half] = 0.5 * length * (2.0 * k[half] / n) ** beta
    s[~half] = length - 0.5 * length * (2.0 * (n - k[~half]) / n) ** beta
    return s


def graded_mesh(boundary: PolygonalBoundary, panels_per_edge: int,
                beta: float = 1.0) -> BoundaryMesh:
    """Corner-graded panel mesh of a polygon.

    Each edge is split into ``panels_per_edge`` panels whose breakpoints
    follow the symmetric law ``s_k = (L/2)(2k/n)^beta``; ``beta = 1``
    gives uniform panels.

    Raises
    ------
    InvalidGrading
        For ``beta < 1``.
    TooCoarse
        For graded meshes with fewer than 2 panels per edge.
    """
    if beta < 1.0:
        raise InvalidGrading("grading exponent must satisfy beta >= 1")
    if panels_per_edge < 1 or (beta > 1.0 and panels_per_edge < 2):
        raise TooCoarse("graded meshes need panels_per_edge >= 2")

    starts, ends, corner = [], [], []
    for a, b in boundary.edges:
        length = float(np.hypot(*(b - a)))
        s = _edge_breakpoints(length, panels_per_edge, beta)
        direction = (b - a) / length
        pts = a[None, :] + s[:, None] * direction[None, :]
        starts.append(pts[:-1])
        ends.append(pts[1:])
        flags = np.zeros(panels_per_edge, dtype=bool)
        flags[0] = True
        corner.append(flags)

    starts = np.vstack(starts)
    ends = np.vstack(ends)
    seg = ends - starts
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    tangents = seg / lengths[:, None]
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)
    return BoundaryMesh(
        boundary=boundary,
        starts=starts, ends=ends, lengths=lengths,
        midpoints=0.5 * (starts + ends),
        tangents=tangents, normals=normals,
        corner_flags=np.concatenate(corner),
        grading=float(beta), panels_per_edge=int(panels_per_edge))


def circle_mesh(radius: float, n_panels: int,
                center=(0.0, 0.0)) -> BoundaryMesh:
    """Uniform arc-panel mesh of the analytic circle oracle."""
    if n_panels < 3:
        raise TooCoarse("circle meshes need at least 3 panels")
    center = np.asarray(center, dtype=float)
    theta = 2.0 * np.pi * np.arange(n_panels + 1) / n_panels
    pts = center[None, :] + radius * np.stack(
        [np.cos(theta), np.sin(theta)], axis=1)
    starts, ends = pts[:-1], pts[1:]
    tc = 0.5 * (theta[:-1] + theta[1:])
    midpoints = center[None, :] + radius * np.stack(
        [np.cos(tc), np.sin(tc)], axis=1)
    normals = np.stack([np.cos(tc), np.sin(tc)], axis=1)
    tangents = np.stack([-np.sin(tc), np.cos(tc)], axis=1)
    lengths = np.full(n_panels, 2.0 * np.pi * radius / n_panels)
    return BoundaryMesh(
        boundary=CircleBoundary(radius=float(radius), center=center),
        starts=starts, ends=ends, lengths=lengths,
        midpoints=midpoints, tangents=tangents, normals=normals,
        corner_flags=np.zeros(n_panels, dtype=bool),
        grading=1.0, panels_per_edge=n_panels,
        arc=ArcData(center=center, radius=float(radius),
                    theta0=theta[:-1], theta1=theta[1:]))


def load_vertices(path) -> PolygonalBoundary:
    """Read a polygon from a JSON text file: a list of [x, y] pairs."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return build_polygon(np.asarray(data, dtype=float))
