"""Free-boundary minimal surfaces by damped mean-curvature descent.

Interior vertices move along the cotan mean-curvature vector; boundary
vertices follow the finite-element area gradient projected onto the tangent
plane of the domain boundary and are then re-projected onto ``F = 1``.  The
conormal term hidden in the boundary rows of the area gradient is what drives
the surface to meet the boundary orthogonally.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .discrete_ops import angle_weighted_normals, boundary_fit_normals
from .domains import LevelSetDomain, project_to_boundary
from .errors import MeshDegenerated
from .mesh import TriMesh

log = logging.getLogger(__name__)

AREA_SLACK = 1e-12


@dataclass
class SolveConfig:
    step: float | None = None  # None: 0.1 * mean edge length**2 of the input
    max_iters: int = 10000
    tol_H: float = 1e-3
    tol_angle: float = 1e-2
    damping: bool = True
    tangential_smoothing: float = 0.2
    min_quality_ratio: float = 1e-3
    stop_on_convergence: bool = True

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        if not (self.tol_H > 0 and self.tol_angle > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class SolveReport:
    iterations: int
    final_area: float
    residual_H: float
    residual_angle: float
    converged: bool
    energy_trace: list = field(default_factory=list, repr=False)
    max_displacement: list = field(default_factory=list, repr=False)
    rejected_steps: int = 0

    def to_dict(self, trace: bool = False) -> dict:
        d = {k: getattr(self, k) for k in ("iterations", "final_area", "residual_H", "residual_angle", "converged")}
        d["rejected_steps"] = self.rejected_steps
        if trace:
            d["energy_trace"] = list(self.energy_trace)
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=2)


# ---------------------------------------------------------------------------
# fast per-iteration kernels (no sparse assembly)


def _faces(V, T):
    e0 = V[T[:, 2]] - V[T[:, 1]]  # opposite corner 0
    e1 = V[T[:, 0]] - V[T[:, 2]]
    e2 = V[T[:, 1]] - V[T[:, 0]]
    cr = np.cross(e2, -e1)
    dbl = np.linalg.norm(cr, axis=1)
    return (e0, e1, e2), dbl


def area_gradient(V: np.ndarray, T: np.ndarray):
    """``(LX, mass, area)``: integrated cotan Laplacian of the position
    (``-grad Area``), mixed Voronoi vertex areas and total area."""
    (e0, e1, e2), dbl = _faces(V, T)
    dblsafe = np.where(dbl == 0, 1.0, dbl)
    # cot at corner c = <a, b> / |a x b| for the two edges leaving it
    cot0 = -np.einsum("ij,ij->i", e1, e2) / dblsafe
    cot1 = -np.einsum("ij,ij->i", e2, e0) / dblsafe
    cot2 = -np.einsum("ij,ij->i", e0, e1) / dblsafe
    n = len(V)
    LX = np.zeros_like(V)
    # edge opposite corner c runs between the other two corners
    for cot, a, b in ((cot0, 1, 2), (cot1, 2, 0), (cot2, 0, 1)):
        d = 0.5 * cot[:, None] * (V[T[:, b]] - V[T[:, a]])
        for k in range(3):
            LX[:, k] += np.bincount(T[:, a], d[:, k], minlength=n) - np.bincount(T[:, b], d[:, k], minlength=n)
    fa = 0.5 * dbl
    l0, l1, l2 = (np.einsum("ij,ij->i", e, e) for e in (e0, e1, e2))
    vor = np.stack([(l2 * cot2 + l1 * cot1) / 8, (l0 * cot0 + l2 * cot2) / 8, (l1 * cot1 + l0 * cot0) / 8], 1)
    cots = np.stack([cot0, cot1, cot2], 1)
    obt = cots < 0
    any_obt = obt.any(axis=1, keepdims=True)
    per = np.where(obt, fa[:, None] / 2, np.where(any_obt, fa[:, None] / 4, vor))
    mass = np.bincount(T.ravel(), per.ravel(), minlength=n)
    return LX, mass, float(fa.sum())


def triangle_quality(V: np.ndarray, T: np.ndarray) -> np.ndarray:
    """``4 sqrt(3) area / sum of squared edges``; 1 for equilateral, 0 when flat."""
    (e0, e1, e2), dbl = _faces(V, T)
    s = sum(np.einsum("ij,ij->i", e, e) for e in (e0, e1, e2))
    return 2 * np.sqrt(3) * dbl / np.where(s == 0, 1.0, s)


def _total_area(V, T):
    return 0.5 * float(np.linalg.norm(np.cross(V[T[:, 1]] - V[T[:, 0]], V[T[:, 2]] - V[T[:, 0]]), axis=1).sum())


# ---------------------------------------------------------------------------


def residuals(mesh: TriMesh, domain: LevelSetDomain, with_angle: bool = True) -> tuple[float, float]:
    """``(max interior |H| * diameter, max boundary |<N, Nbar>|)``.

    The boundary normal is the fitted one; the one-sided angle-weighted
    average carries an O(h) angle error even on exact free-boundary surfaces.
    """
    V, T = mesh.vertices, mesh.triangles
    LX, mass, _ = area_gradient(V, T)
    N = angle_weighted_normals(mesh)
    H = -0.5 * np.einsum("ij,ij->i", LX, N) / mass
    inner = ~mesh.is_boundary
    res_h = float(np.abs(H[inner]).max() * mesh.diameter()) if inner.any() else 0.0
    res_a = 0.0
    if with_angle and mesh.boundary_loops:
        ids = np.concatenate(mesh.boundary_loops)
        Nf = boundary_fit_normals(mesh, N)
        res_a = float(np.abs(np.einsum("ij,ij->i", Nf, domain.outward_normal(V[ids]))).max())
    return res_h, res_a


def _umbrella(V, T, n):
    s = np.zeros_like(V)
    cnt = np.zeros(n)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        for k in range(3):
            s[:, k] += np.bincount(T[:, a], V[T[:, b], k], minlength=n)
            s[:, k] += np.bincount(T[:, b], V[T[:, a], k], minlength=n)
        cnt += np.bincount(T[:, a], minlength=n) + np.bincount(T[:, b], minlength=n)
    return s / np.maximum(cnt, 1)[:, None] - V


def _loop_tangent(V, loops, nb):
    """Unit tangent of each boundary loop (central differences), orthogonal to ``nb``."""
    t = np.concatenate([V[np.roll(lp, -1)] - V[np.roll(lp, 1)] for lp in loops])
    t -= np.einsum("ij,ij->i", t, nb)[:, None] * nb
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def _loop_umbrella(V, loops):
    return np.concatenate([0.5 * (V[np.roll(lp, -1)] + V[np.roll(lp, 1)]) - V[lp] for lp in loops])


def solve_free_boundary(mesh0: TriMesh, domain: LevelSetDomain, config: SolveConfig | None = None,
                        callback=None) -> tuple[TriMesh, SolveReport]:
    """Descend area with boundary vertices sliding on ``F = 1``.

    Returns the final mesh and a report; ``report.converged`` tells whether
    both residuals met their tolerances.  Raises ``MeshDegenerated`` when the
    worst triangle quality falls below ``min_quality_ratio`` times its
    initial value.
    """
    cfg = config or SolveConfig()
    T = mesh0.triangles
    n = mesh0.n_vertices
    bnd = mesh0.is_boundary
    inner = ~bnd
    loops = mesh0.boundary_loops
    bids = np.concatenate(loops) if loops else np.zeros(0, np.int64)
    V = np.array(mesh0.vertices, dtype=float)
    if bnd.any():
        F, g, _ = domain.evaluate(V[bnd])
        dist = np.abs(F - 1) / np.linalg.norm(g, axis=1)
        if dist.max() > 0.1:
            raise ValueError(f"boundary vertex {dist.max():.3g} away from the domain boundary (limit 0.1)")
        V[bnd] = project_to_boundary(domain, V[bnd])

    step0 = cfg.step if cfg.step is not None else 0.1 * mesh0.mean_edge_length() ** 2
    step = step0
    q0 = triangle_quality(V, T).min()
    diam = mesh0.diameter()
    mesh = mesh0.with_vertices(V)
    area = _total_area(V, T)
    trace = [area]
    disp = []
    rejected = 0
    converged = False
    res_h = res_a = float("inf")
    smooth_off_at = int(0.9 * cfg.max_iters)
    it = 0
    for it in range(cfg.max_iters + 1):
        LX, mass, area = area_gradient(V, T)
        N = angle_weighted_normals(mesh)
        lx = LX / mass[:, None]
        H = -0.5 * np.einsum("ij,ij->i", lx, N)
        res_h = float(np.abs(H[inner]).max() * diam) if inner.any() else 0.0
        if res_h <= cfg.tol_H:
            res_a = residuals(mesh, domain)[1] if bnd.any() else 0.0
            if res_a <= cfg.tol_angle and cfg.stop_on_convergence:
                converged = True
                break
        if it == cfg.max_iters:
            break

        # interior: normal component of the mean-curvature vector
        move = np.zeros_like(V)
        move[inner] = np.einsum("ij,ij->i", lx[inner], N[inner])[:, None] * N[inner]
        if bnd.any():
            # tangent plane of dOmega, minus the along-curve part: sliding
            # along the loop only reparametrizes the boundary and, left in,
            # collapses boundary triangles
            nb = domain.outward_normal(V[bids])
            tb = _loop_tangent(V, loops, nb)
            gb = lx[bids]
            gb = gb - np.einsum("ij,ij->i", gb, nb)[:, None] * nb
            move[bids] = gb - np.einsum("ij,ij->i", gb, tb)[:, None] * tb
        w = cfg.tangential_smoothing
        smoothing = w > 0 and it < smooth_off_at and res_h > 10 * cfg.tol_H
        if smoothing:
            u = _umbrella(V, T, n)
            u -= np.einsum("ij,ij->i", u, N)[:, None] * N
            if bnd.any():
                # boundary vertices are only evened out along their loop
                ub = _loop_umbrella(V, loops)
                u[bids] = np.einsum("ij,ij->i", ub, tb)[:, None] * tb

        while True:
            Vn = V + step * move
            if smoothing:
                Vn += (w * step / step0) * u
            if bnd.any():
                Vn[bnd] = project_to_boundary(domain, Vn[bnd])
            a_new = _total_area(Vn, T)
            if not cfg.damping or a_new <= area * (1 + AREA_SLACK):
                break
            rejected += 1
            step *= 0.5
            if step < 1e-14 * step0:
                break
        q = triangle_quality(Vn, T).min()
        if q < cfg.min_quality_ratio * q0:
            raise MeshDegenerated(f"triangle quality {q:.3e} fell below {cfg.min_quality_ratio:g} x initial {q0:.3e}"
                                  f" at iteration {it}")
        disp.append(float(np.linalg.norm(Vn - V, axis=1).max()))
        V = Vn
        mesh = mesh0.with_vertices(V)
        trace.append(a_new)
        step = min(step * 1.1, step0)
        if callback is not None:
            callback(it, mesh, res_h)

    report = SolveReport(
        iterations=it,
        final_area=_total_area(V, T),
        residual_H=res_h,
        residual_angle=res_a if res_h <= cfg.tol_H else residuals(mesh, domain)[1],
        converged=converged,
        energy_trace=trace,
        max_displacement=disp,
        rejected_steps=rejected,
    )
    log.info("solve: %s", report)
    return mesh, report


# ---------------------------------------------------------------------------
# initial meshes


def _antipodes(V: np.ndarray) -> np.ndarray:
    from scipy.spatial import cKDTree

    d, idx = cKDTree(V).query(-V)
    if d.max() > 1e-9:
        raise ValueError("mesh is not centrally symmetric")
    return idx


def perturbed_disk(rings: int = 24, amplitude: float = 0.05, seed: int = 0, domain: LevelSetDomain | None = None,
                   antisymmetric: bool = True) -> TriMesh:
    """Equatorial unit disk with random normal displacements of size <= ``amplitude``.

    With ``antisymmetric`` the displacement is odd under ``x -> -x``, which
    keeps the perturbation orthogonal to the unstable (translation-like)
    mode of the disk in the ball.
    """
    from .domains import Ball
    from .reference import disk_mesh

    d = disk_mesh(rings)
    V = d.vertices.copy()
    rng = np.random.default_rng(seed)
    z = amplitude * rng.uniform(-1.0, 1.0, len(V))
    if antisymmetric:
        z = 0.5 * (z - z[_antipodes(V)])
    V[:, 2] = z
    m = TriMesh(V, d.triangles)
    b = m.is_boundary
    V[b] = project_to_boundary(domain or Ball(), V[b])
    return m.with_vertices(V)


def sphere_annulus(half_height: float = 0.4, n_theta: int = 64, n_axial: int | None = None) -> TriMesh:
    """Cylinder ``|x3| <= half_height`` with both boundary circles on the unit sphere."""
    from .reference import cylinder_annulus

    r = float(np.sqrt(1 - half_height**2))
    if n_axial is None:
        n_axial = max(2, int(round(n_theta * 2 * half_height / (2 * np.pi * r))))
    return cylinder_annulus(r, -half_height, half_height, n_theta, n_axial)


def neck_radius(mesh: TriMesh) -> float:
    """Smallest distance to the x3-axis among vertices (annulus meshes)."""
    return float(np.linalg.norm(mesh.vertices[:, :2], axis=1).min())


def plane_fit_rms(mesh: TriMesh) -> float:
    V = mesh.vertices - mesh.vertices.mean(axis=0)
    s = np.linalg.svd(V, compute_uv=False)
    return float(s[-1] / np.sqrt(len(V)))


# ---------------------------------------------------------------------------
# shooting for the saddle between the two annulus failure modes


class _Escaped(Exception):
    def __init__(self, side: int):
        self.side = side


@dataclass
class ShootingResult:
    half_height: float
    mesh: TriMesh
    report: SolveReport
    bracket: tuple
    bisections: int


def _annulus_side(mesh: TriMesh, pinch_radius: float, collapse_height: float) -> int:
    V = mesh.vertices
    if neck_radius(mesh) < pinch_radius:
        return +1
    if np.ptp(V[:, 2]) < collapse_height:
        return -1
    return 0


def shoot_annulus(domain: LevelSetDomain | None = None, bracket=(0.6, 0.8), n_theta: int = 48,
                  config: SolveConfig | None = None, max_bisections: int = 60,
                  pinch_radius: float = 0.2, collapse_height: float = 0.3) -> ShootingResult:
    """Bisect the initial half-height of a sphere annulus between starts whose
    flows collapse the band (too short) and pinch the neck (too tall).

    Descent alone only finds stable stationary surfaces; the critical
    catenoid is a saddle between these two outcomes, so the bisection tracks
    its stable manifold and the final flow settles on it.  Returns the last
    run, converged or not.
    """
    from .domains import Ball

    dom = domain or Ball()
    cfg = config or SolveConfig()

    def run(h):
        def cb(it, mesh, res_h):
            side = _annulus_side(mesh, pinch_radius, collapse_height)
            if side:
                raise _Escaped(side)

        try:
            out, rep = solve_free_boundary(sphere_annulus(h, n_theta), dom, cfg, callback=cb)
        except _Escaped as e:
            return e.side, None, None
        except MeshDegenerated:
            return 0, None, None
        return (0 if rep.converged else None), out, rep

    lo, hi = bracket
    best = None
    k = 0
    for k in range(1, max_bisections + 1):
        mid = 0.5 * (lo + hi)
        side, out, rep = run(mid)
        if out is not None:
            best = ShootingResult(mid, out, rep, (lo, hi), k)
            if rep.converged:
                return best
        if side == -1:
            lo = mid
        elif side == +1:
            hi = mid
        else:
            break
        if hi - lo < 1e-15:
            break
    if best is None:
        raise RuntimeError(f"shooting found no surviving flow in [{lo}, {hi}]")
    return best
