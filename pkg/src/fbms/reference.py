"""Analytic reference surfaces: structured meshes plus their exact quantities.

The critical catenoid is ``X(s, t) = c (cosh s cos t, cosh s sin t, s)`` for
``|s| <= s0``.  It meets the unit sphere orthogonally exactly when the
position vector is tangent to the meridian at ``s0``, i.e. when
``X_s`` is parallel to ``X`` there: ``sinh s0 / cosh s0 = 1 / s0``, so ``s0``
is the positive root of ``s tanh s = 1``.  Requiring ``|X(s0)| = 1`` then
fixes ``c = 1 / (s0 cosh s0)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .domains import Ball, Ellipsoid, EllipsoidSpec, LevelSetDomain, Quadric, QuadricSpec, project_to_boundary
from .mesh import TriMesh, save_obj

KINDS = ("equatorial-disk", "critical-catenoid", "ellipsoid-disk", "cylinder-disk")


def solve_critical_catenoid(tol: float = 1e-14) -> tuple[float, float]:
    """``(s0, c)``: bisection for ``s tanh s = 1`` on [1, 1.5]."""
    lo, hi = 1.0, 1.5
    r = lambda s: s * math.tanh(s) - 1.0
    assert r(lo) < 0 < r(hi)
    s = 0.5 * (lo + hi)
    for _ in range(200):
        s = 0.5 * (lo + hi)
        v = r(s)
        if v == 0 or hi - lo < 1e-16:
            break
        if v < 0:
            lo = s
        else:
            hi = s
    # pick the better endpoint once the bracket has collapsed to adjacent floats
    s = min((lo, hi, s), key=lambda x: abs(r(x)))
    if abs(r(s)) > tol:
        raise RuntimeError(f"bisection residual {r(s):.3e} above {tol}")
    return s, 1.0 / (s * math.cosh(s))


# ---------------------------------------------------------------------------
# structured meshes


def _zip_rings(inner: np.ndarray, outer: np.ndarray, P: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate the strip between two closed rings of vertices sharing angle 0.

    Each step takes the shorter of the two candidate diagonals (a Delaunay
    flip criterion on the strip).  Near-ties fall back to an exact rational
    angle comparison so the result keeps every rotational symmetry the two
    ring sizes share.
    """
    ni, no = len(inner), len(outer)
    tris = []
    i = j = 0
    while i < ni or j < no:
        if i == ni:
            advance_outer = True
        elif j == no:
            advance_outer = False
        else:
            d_out = np.linalg.norm(P[inner[i % ni]] - P[outer[(j + 1) % no]])
            d_in = np.linalg.norm(P[inner[(i + 1) % ni]] - P[outer[j % no]])
            if abs(d_out - d_in) <= 1e-9 * (d_out + d_in):
                advance_outer = (j + 1) * ni <= (i + 1) * no
            else:
                advance_outer = d_out < d_in
        if advance_outer:
            tris.append((inner[i % ni], outer[j % no], outer[(j + 1) % no]))
            j += 1
        else:
            tris.append((inner[i % ni], outer[j % no], inner[(i + 1) % ni]))
            i += 1
    return tris


def disk_mesh(rings: int) -> TriMesh:
    """Unit disk in the x1x2-plane, ring ``k`` carrying ``6k`` vertices; normal +x3."""
    pts = [(0.0, 0.0, 0.0)]
    ring_ids = [np.array([0])]
    for k in range(1, rings + 1):
        n = 6 * k
        r = k / rings
        t = 2 * np.pi * np.arange(n) / n
        start = len(pts)
        pts.extend(zip(r * np.cos(t), r * np.sin(t), np.zeros(n)))
        ring_ids.append(np.arange(start, start + n))
    tris = []
    for k in range(1, rings + 1):
        inner, outer = ring_ids[k - 1], ring_ids[k]
        if k == 1:
            tris += [(0, outer[j], outer[(j + 1) % 6]) for j in range(6)]
        else:
            tris += _zip_rings(inner, outer, np.array(pts))
    return TriMesh(np.array(pts), np.array(tris))


def tube_mesh(n_theta: int, n_axial: int, profile: Callable) -> TriMesh:
    """Surface of revolution ``t -> profile(t) = (radius, height)``, ``t in [0, 1]``.

    Normal points away from the axis when height increases with ``t``.
    """
    t = np.linspace(0.0, 1.0, n_axial + 1)
    r, z = profile(t)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    V = np.stack([
        np.outer(r, np.cos(th)).ravel(),
        np.outer(r, np.sin(th)).ravel(),
        np.repeat(z, n_theta),
    ], axis=1)
    idx = np.arange((n_axial + 1) * n_theta).reshape(n_axial + 1, n_theta)
    a = idx[:-1, :]
    b = np.roll(idx[:-1, :], -1, axis=1)
    c = np.roll(idx[1:, :], -1, axis=1)
    d = idx[1:, :]
    # diagonals flip at mid-height so the triangulation is mirror symmetric
    # under t -> 1 - t (keeps z-even flows z-even on symmetric profiles)
    lower = (np.arange(n_axial) < n_axial // 2)[:, None, None]
    t1 = np.where(lower, np.stack([a, b, d], -1), np.stack([a, b, c], -1))
    t2 = np.where(lower, np.stack([b, c, d], -1), np.stack([a, c, d], -1))
    T = np.concatenate([t1.reshape(-1, 3), t2.reshape(-1, 3)])
    return TriMesh(V, T)


def cylinder_annulus(radius: float, z0: float, z1: float, n_theta: int, n_axial: int) -> TriMesh:
    return tube_mesh(n_theta, n_axial, lambda t: (np.full_like(t, radius), z0 + (z1 - z0) * t))


def icosphere(level: int, radius: float = 1.0) -> TriMesh:
    """Subdivided icosahedron projected to the sphere; ``20 * 4**level`` faces."""
    p = (1 + 5**0.5) / 2
    V = np.array([
        [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
        [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
        [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
    ], dtype=float)
    T = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    from .mesh import refine

    m = TriMesh(radius * V / np.linalg.norm(V, axis=1, keepdims=True), T)
    for _ in range(level):
        m = refine(m, snap=lambda q: radius * q / np.linalg.norm(q, axis=1, keepdims=True))
    return m


def spherical_cap(rings: int, polar_angle: float, radius: float = 1.0) -> TriMesh:
    """Cap ``{polar angle <= polar_angle}`` of a sphere, outward normal."""
    d = disk_mesh(rings)
    V = d.vertices
    r = np.linalg.norm(V[:, :2], axis=1)
    th = np.arctan2(V[:, 1], V[:, 0])
    phi = r * polar_angle
    P = radius * np.stack([np.sin(phi) * np.cos(th), np.sin(phi) * np.sin(th), np.cos(phi)], axis=1)
    return TriMesh(P, d.triangles)


# ---------------------------------------------------------------------------
# references


@dataclass(eq=False)
class ReferenceSurface:
    kind: str
    params: dict
    domain: LevelSetDomain
    exact_area: float
    exact_boundary_length: float
    sampler: Callable[[int], TriMesh] = field(repr=False)
    snap: Callable | None = field(default=None, repr=False)
    free_boundary_minimal: bool = True

    def sample(self, resolution: int) -> TriMesh:
        if resolution < 8:
            raise ValueError("reference resolution must be >= 8")
        return self.sampler(resolution)

    def sidecar(self) -> dict:
        d = {"kind": self.kind, **self.params, "domain": self.domain.to_dict(),
             "exact_area": self.exact_area, "exact_boundary_length": self.exact_boundary_length}
        return d


def _plane_snap(normal, offset=0.0):
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)

    def snap(p):
        p = np.asarray(p, dtype=float)
        return p - ((p @ n) - offset)[:, None] * n

    return snap


def equatorial_disk(radius: float = 1.0) -> ReferenceSurface:
    def sampler(res):
        d = disk_mesh(res)
        return TriMesh(radius * d.vertices, d.triangles)

    return ReferenceSurface(
        "equatorial-disk", {"radius": radius}, Ball(radius),
        math.pi * radius**2, 2 * math.pi * radius, sampler, _plane_snap([0, 0, 1]),
    )


def critical_catenoid() -> ReferenceSurface:
    s0, c = solve_critical_catenoid()

    def sampler(res):
        n_s = max(2, 2 * round(res * s0 / (2 * math.pi)))
        m = tube_mesh(res, n_s, lambda t: (c * np.cosh(-s0 + 2 * s0 * t), c * (-s0 + 2 * s0 * t)))
        V = m.vertices.copy()
        b = m.is_boundary
        V[b] = project_to_boundary(Ball(), V[b])
        return m.with_vertices(V)

    def snap(p):
        p = np.asarray(p, dtype=float)
        s = p[:, 2] / c
        th = np.arctan2(p[:, 1], p[:, 0])
        r = c * np.cosh(s)
        return np.stack([r * np.cos(th), r * np.sin(th), p[:, 2]], axis=1)

    area = 2 * math.pi * c**2 * (s0 + math.sinh(s0) * math.cosh(s0))
    length = 4 * math.pi * c * math.cosh(s0)
    return ReferenceSurface("critical-catenoid", {"s0": s0, "c": c}, Ball(), area, length, sampler, snap)


def ellipsoid_disk(a: float = 2.0, b: float = 1.0, plane: str = "equatorial", angle: float = 0.0) -> ReferenceSurface:
    """Planar section of the ellipsoid through a symmetry plane.

    ``plane="equatorial"`` is ``x3 = 0``; ``plane="meridian"`` is the plane
    containing the x3-axis at azimuth ``angle``.
    """
    spec = EllipsoidSpec(a, b)
    if plane == "equatorial":
        e1, e2, s1, s2, normal = np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), a, a, [0, 0, 1]
    elif plane == "meridian":
        e1 = np.array([math.cos(angle), math.sin(angle), 0.0])
        e2 = np.array([0, 0, 1.0])
        s1, s2, normal = a, b, np.cross(e1, e2)
    else:
        raise ValueError(f"unknown plane {plane!r}")

    def sampler(res):
        d = disk_mesh(res)
        V = d.vertices
        P = np.outer(s1 * V[:, 0], e1) + np.outer(s2 * V[:, 1], e2)
        m = TriMesh(P, d.triangles)
        bnd = m.is_boundary
        P[bnd] = project_to_boundary(Ellipsoid(spec), P[bnd])
        return m.with_vertices(P)

    area = math.pi * s1 * s2
    # Ramanujan's second approximation; exact for circles
    h = ((s1 - s2) / (s1 + s2)) ** 2
    length = math.pi * (s1 + s2) * (1 + 3 * h / (10 + math.sqrt(4 - 3 * h)))
    return ReferenceSurface(
        "ellipsoid-disk", {"a": a, "b": b, "plane": plane, "angle": angle}, Ellipsoid(spec),
        area, length, sampler, _plane_snap(normal),
    )


def cylinder_disk(height: float = 0.0) -> ReferenceSurface:
    dom = Quadric(QuadricSpec((1, 1, 0), 0.0, 0.0))

    def sampler(res):
        d = disk_mesh(res)
        V = d.vertices.copy()
        V[:, 2] = height
        return TriMesh(V, d.triangles)

    return ReferenceSurface(
        "cylinder-disk", {"height": height}, dom, math.pi, 2 * math.pi, sampler,
        _plane_snap([0, 0, 1], height),
    )


def get_reference(kind: str, **params) -> ReferenceSurface:
    if kind == "equatorial-disk":
        return equatorial_disk(**params)
    if kind == "critical-catenoid":
        return critical_catenoid()
    if kind == "ellipsoid-disk":
        return ellipsoid_disk(**params)
    if kind == "cylinder-disk":
        return cylinder_disk(**params)
    raise ValueError(f"unknown reference kind {kind!r}; expected one of {KINDS}")


def make_reference(kind: str, resolution: int, **params) -> tuple[TriMesh, ReferenceSurface]:
    ref = get_reference(kind, **params)
    return ref.sample(resolution), ref


def export_reference(mesh: TriMesh, ref: ReferenceSurface, obj_path) -> Path:
    """Write the OBJ and a JSON sidecar next to it; returns the sidecar path."""
    obj_path = Path(obj_path)
    save_obj(mesh, obj_path)
    side = obj_path.with_suffix(".json")
    side.write_text(json.dumps(ref.sidecar(), indent=2))
    return side


_PARAMS = {
    "equatorial-disk": ("radius",),
    "critical-catenoid": (),
    "ellipsoid-disk": ("a", "b", "plane", "angle"),
    "cylinder-disk": ("height",),
}


def reference_from_sidecar(d: dict) -> ReferenceSurface:
    """Rebuild the reference described by a sidecar written by ``export_reference``."""
    kind = d.get("kind")
    if kind not in _PARAMS:
        raise ValueError(f"sidecar kind {kind!r} is not a reference kind")
    return get_reference(kind, **{k: d[k] for k in _PARAMS[kind] if k in d})
