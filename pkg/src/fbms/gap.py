"""Gap-theorem predicates and pointwise boundary analysis on discrete surfaces.

Shape-operator convention is the package one, ``<A X, Y> = -<D_X Y, N>``
(unit sphere with outward normal: ``A = +Id``).  Formulas stated with
``A = -dN`` pick up a sign where ``A`` appears linearly; every predicate below
that only involves ``|A|`` or ``|A| g`` is unaffected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .discrete_ops import (
    DiscreteGeometry, XT_DEGENERATE, _tangent_frame, boundary_frame, geodesic_curvature_in_surface,
    laplacian_apply, tangent_gradient,
)
from .domains import Ball, EllipsoidSpec, LevelSetDomain
from .errors import HypothesisUnmet, TangentProjectionDegenerate
from .mesh import TriMesh

REPORT_TOL = 1e-9
E3 = np.array([0.0, 0.0, 1.0])


@dataclass
class GapReport:
    kind: str
    values: np.ndarray = field(repr=False)
    max_value: float
    bound: float
    hypothesis_satisfied: bool
    witness: int
    per_loop: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_dict(self, per_vertex: bool = False) -> dict:
        d = {
            "kind": self.kind,
            "max_value": self.max_value,
            "bound": self.bound,
            "hypothesis_satisfied": self.hypothesis_satisfied,
            "witness_vertex": self.witness,
            "per_loop": self.per_loop,
            **{k: v for k, v in self.extras.items()},
        }
        if per_vertex:
            d["values"] = [float(v) for v in self.values]
        return json.loads(json.dumps(d, default=_jsonable))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=2)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _report(kind, values, bound, ids=None, **extras) -> GapReport:
    v = np.asarray(values, dtype=float)
    k = int(np.nanargmax(v)) if v.size else -1
    mx = float(v[k]) if v.size else 0.0
    wit = int(ids[k]) if ids is not None and k >= 0 else k
    return GapReport(kind, v, mx, bound, bool(mx <= bound + REPORT_TOL), wit, extras.pop("per_loop", []), extras)


def check_minimal_free_boundary(mesh: TriMesh, domain: LevelSetDomain, gate_H: float = 1e-2,
                                gate_angle: float = 1e-1, what: str = "gap check"):
    """Raise ``HypothesisUnmet`` unless the surface passes the solver residual gates."""
    from .solver import residuals

    rh, ra = residuals(mesh, domain)
    if rh > gate_H or ra > gate_angle:
        raise HypothesisUnmet(
            f"{what}: surface is not free-boundary minimal within tolerance "
            f"(residual_H={rh:.3e} > {gate_H:g} or angle={ra:.3e} > {gate_angle:g})",
            {"residual_H": rh, "residual_angle": ra},
        )
    return rh, ra


def _normals(geom: DiscreteGeometry) -> np.ndarray:
    return geom.fit_normal if geom.fit_normal is not None else geom.normal


# ---------------------------------------------------------------------------
# ellipsoid


def ellipsoid_g(X: np.ndarray, N: np.ndarray, spec: EllipsoidSpec) -> np.ndarray:
    """``g = <x, N> + (a^2/b^2 - 1) <x, E3> <N, E3>``."""
    k = spec.a**2 / spec.b**2 - 1
    return np.einsum("ij,ij->i", X, N) + k * X[:, 2] * N[:, 2]


def ellipsoid_hessian_eigs(mesh: TriMesh, geom: DiscreteGeometry, spec: EllipsoidSpec):
    """Eigenvalues of ``(a^2/2) Hess_Sigma F`` in the fitted tangent frame, per vertex.

    ``(a^2/2) Hess_Sigma F = I - g A + (a^2/b^2 - 1) T`` with ``T X = <X, E3^T> E3^T``
    (the minus sign is the package's shape-operator convention).
    """
    X = mesh.vertices
    N = _normals(geom)
    g = ellipsoid_g(X, N, spec)
    k = spec.a**2 / spec.b**2 - 1
    eigs = np.zeros((len(X), 2))
    for i in range(len(X)):
        eu, ev = _tangent_frame(N[i])
        B = np.stack([eu, ev])
        At = B @ geom.shape_operator[i] @ B.T
        At = 0.5 * (At + At.T)
        e = B @ E3
        M = np.eye(2) - g[i] * At + k * np.outer(e, e)
        eigs[i] = np.linalg.eigvalsh(M)
    return eigs, g


def gap_ellipsoid(mesh: TriMesh, geom: DiscreteGeometry, spec: EllipsoidSpec, check_hypothesis: bool = True,
                  slack: float = 5e-2, **gates) -> GapReport:
    """``|A|^2 g^2 <= 2`` plus the pointwise eigenvalue bound of the Hessian of ``F``."""
    from .domains import Ellipsoid

    if check_hypothesis:
        check_minimal_free_boundary(mesh, Ellipsoid(spec), what="ellipsoid gap", **gates)
    eigs, g = ellipsoid_hessian_eigs(mesh, geom, spec)
    nA = np.sqrt(np.maximum(geom.norm_A_sq, 0))
    vals = geom.norm_A_sq * g**2
    lower = np.minimum(1 - nA * g / math.sqrt(2), 1 + nA * g / math.sqrt(2))
    margin = eigs[:, 0] - (lower - slack)
    return _report(
        "EllipsoidAN", vals, 2.0,
        min_hessian_eigenvalue=float(eigs[:, 0].min()),
        lemma_bound_holds=bool(np.all(margin >= 0)),
        lemma_worst_margin=float(margin.min()),
        lemma_worst_vertex=int(np.argmin(margin)),
        lemma_slack=slack,
        max_abs_g=float(np.abs(g).max()),
    )


def ellipsoid_principal_curvatures(spec: EllipsoidSpec, t):
    """Closed-form principal curvatures at profile angle ``t`` of ``(a cos t, b sin t)``.

    Returns ``(meridian, parallel)``.
    """
    a, b = spec.a, spec.b
    q = a**2 * np.sin(t) ** 2 + b**2 * np.cos(t) ** 2
    return a * b / q**1.5, b / (a * np.sqrt(q))


def ellipsoid_min_curvature(spec: EllipsoidSpec, samples: int = 4097) -> float:
    """Smallest principal curvature of the ellipsoid over a dense profile sample."""
    t = np.linspace(0.0, 0.5 * np.pi, samples)
    km, kp = ellipsoid_principal_curvatures(spec, t)
    return float(min(km.min(), kp.min()))


def boundary_convexity(mesh: TriMesh, geom: DiscreteGeometry, spec: EllipsoidSpec, tol: float = 1e-2) -> GapReport:
    """Geodesic curvature of the boundary inside the surface against the
    ellipsoid's smallest principal curvature ``c``; the reported value is
    ``c - k_g`` with bound ``tol``."""
    kg = geodesic_curvature_in_surface(geom)
    c = ellipsoid_min_curvature(spec)
    per_loop = [
        {"loop": int(l), "min_kg": float(kg[geom.boundary_loop == l].min()),
         "max_kg": float(kg[geom.boundary_loop == l].max())}
        for l in np.unique(geom.boundary_loop)
    ]
    return _report("EllipsoidBoundaryConvexity", c - kg, tol, ids=geom.boundary_ids, per_loop=per_loop,
                   min_kg=float(kg.min()) if kg.size else float("nan"), c=c)


# ---------------------------------------------------------------------------
# ball


def gap_ball(mesh: TriMesh, geom: DiscreteGeometry, check_hypothesis: bool = True, **gates) -> GapReport:
    """``max |A|^2`` against ``2 dim(Sigma) = 4``."""
    if check_hypothesis:
        check_minimal_free_boundary(mesh, Ball(), what="ball gap", **gates)
    return _report("BallChern", geom.norm_A_sq, 4.0)


def _sign_pattern(v: np.ndarray, tol: float) -> str:
    if np.all(np.abs(v) <= tol):
        return "zero"
    if np.all(v >= -tol):
        return "all-nonnegative"
    if np.all(v <= tol):
        return "all-nonpositive"
    return "mixed"


def jacobi_residual(mesh: TriMesh, geom: DiscreteGeometry) -> GapReport:
    """``r = Laplacian g + |A|^2 g`` with ``g = <x, N>`` at interior vertices,
    normalized by ``max(max |g| |A|^2, 1)``; bound 5e-2."""
    X = mesh.vertices
    g = np.einsum("ij,ij->i", X, _normals(geom))
    lap = laplacian_apply(mesh, g)
    inner = ~mesh.is_boundary
    r = (lap + geom.norm_A_sq * g)[inner]
    norm = max(float(np.max(np.abs(g) * geom.norm_A_sq)), 1.0)
    ids = np.flatnonzero(inner)
    scale = max(float(np.abs(g).max()), 1.0)
    rep = _report("Jacobi", np.abs(r) / norm, 5e-2, ids=ids,
                  g_sign_pattern=_sign_pattern(g, 1e-12 * scale),
                  normalization=norm)
    # per half along x3, the datum that matters for sign-changing support functions
    upper, lower = X[:, 2] > 1e-12, X[:, 2] < -1e-12
    rep.extras["g_sign_upper_half"] = _sign_pattern(g[upper], 1e-12 * scale) if upper.any() else "empty"
    rep.extras["g_sign_lower_half"] = _sign_pattern(g[lower], 1e-12 * scale) if lower.any() else "empty"
    return rep


# ---------------------------------------------------------------------------
# boundary principal-direction analysis


def collar(mesh: TriMesh, loop: np.ndarray, width: int = 2) -> np.ndarray:
    """Vertices within ``width`` edges of a boundary loop (loop included)."""
    R = mesh.rings(width)
    out = set(int(v) for v in loop)
    for v in loop:
        out.update(int(u) for u in R.indices[R.indptr[v] : R.indptr[v + 1]])
    return np.array(sorted(out), dtype=np.int64)


def _spread(v: np.ndarray) -> float:
    """``(max - min) / |mean|``; absolute when the mean is below 1e-6."""
    if v.size == 0:
        return 0.0
    m = abs(float(np.mean(v)))
    d = float(v.max() - v.min())
    return d / m if m > 1e-6 else d


def lem1_sides(mesh: TriMesh, geom: DiscreteGeometry, ids: np.ndarray, omega_jac: np.ndarray):
    """Both sides of ``<D_X omega, X> = g <A X, N x X>`` with ``omega = N x x^T``,
    for ``X = x^T/|x^T|`` and the diagonal ``(X + N x X)/sqrt 2``.

    The left side uses the fitted tangent Jacobian of ``omega``; the right side
    only pointwise ``g`` and ``A``.  Rows: ``ids`` repeated for the two
    directions.
    """
    X = mesh.vertices[ids]
    N = _normals(geom)[ids]
    A = geom.shape_operator[ids]
    g = np.einsum("ij,ij->i", X, N)
    xT = X - g[:, None] * N
    e1 = xT / np.linalg.norm(xT, axis=1, keepdims=True)
    e2 = np.cross(N, e1)
    lhs, rhs = [], []
    for D in (e1, (e1 + e2) / math.sqrt(2)):
        DX = np.einsum("nij,nj->ni", omega_jac[ids], D)
        lhs.append(np.einsum("ij,ij->i", DX, D))
        AX = np.einsum("nij,nj->ni", A, D)
        rhs.append(g * np.einsum("ij,ij->i", AX, np.cross(N, D)))
    return np.concatenate(lhs), np.concatenate(rhs)


def boundary_principal(mesh: TriMesh, geom: DiscreteGeometry, domain: LevelSetDomain | None = None,
                       collar_width: int = 2, defect_tol: float = 5e-2, spread_tol: float = 2e-2) -> GapReport:
    """Per boundary loop: principal-direction defect of ``x^T`` on the collar,
    spread of ``lambda`` and ``tau`` along the loop, ``lambda`` against
    ``|grad g|``, the ``H = (tau + lambda)/2`` residual and both sides of the
    ``omega`` identity.  Reported value per loop: the dependence defect."""
    domain = domain or Ball()
    fr = boundary_frame(mesh, geom, domain)
    if np.any(fr.degenerate):
        raise TangentProjectionDegenerate(
            f"|x^T| < {XT_DEGENERATE:g} at boundary vertex {int(fr.ids[np.argmax(fr.degenerate)])}")
    X = mesh.vertices
    N = _normals(geom)
    g = np.einsum("ij,ij->i", X, N)
    xT_all = X - g[:, None] * N
    grad_g = tangent_gradient(mesh, N, g)
    omega = np.cross(N, xT_all)
    omega_jac = tangent_gradient(mesh, N, omega)
    A = geom.shape_operator
    nA = np.sqrt(np.maximum(geom.norm_A_sq, 0))
    per_loop = []
    defects = []
    for k, lp in enumerate(mesh.boundary_loops):
        sel = fr.loop == k
        band = collar(mesh, lp, collar_width)
        xT = xT_all[band]
        xn = np.linalg.norm(xT, axis=1)
        AxT = np.einsum("nij,nj->ni", A[band], xT)
        lam_band = np.einsum("ij,ij->i", AxT, xT) / np.maximum(xn, XT_DEGENERATE) ** 2
        resid = np.linalg.norm(AxT - lam_band[:, None] * xT, axis=1)
        den = nA[band] * xn
        d = np.where(den > 1e-12, resid / np.where(den > 1e-12, den, 1.0), 0.0)
        defect = float(d.max())
        lam = fr.lam[sel]
        gg = np.linalg.norm(grad_g[fr.ids[sel]], axis=1)
        lam_scale = max(float(np.abs(lam).max()), 1e-12)
        grad_mismatch = float(np.abs(np.abs(lam) - gg).max() / lam_scale) if lam_scale > 1e-8 else \
            float(np.abs(np.abs(lam) - gg).max())
        hscale = np.maximum(np.abs(lam), np.abs(fr.tau_curve[sel]))
        hres_abs = np.abs(2 * fr.H[sel] - fr.tau_curve[sel] - lam)
        h_resid = float(np.max(np.where(hscale > 1e-8, hres_abs / np.where(hscale > 1e-8, hscale, 1), hres_abs)))
        lhs, rhs = lem1_sides(mesh, geom, band, omega_jac)
        # both sides are bounded by |g| |A| |x^T|^2; that is the scale of the comparison
        lscale = float(np.max(np.abs(g[band]) * nA[band] * xn**2))
        err = np.abs(lhs - rhs)
        nb = len(band)
        rel = (lambda e: float(e.max() / lscale)) if lscale > 1e-8 else (lambda e: float(e.max()))
        lem1, lem1_diag = rel(err[:nb]), rel(err[nb:])
        lam_spread = _spread(lam)
        tau_spread = _spread(fr.tau[sel])
        per_loop.append({
            "loop": k,
            "collar_vertices": int(len(band)),
            "min_xT_collar": float(xn.min()),
            "defect": defect,
            "lambda_mean": float(lam.mean()),
            "lambda_spread": lam_spread,
            "lambda_vs_grad_g": grad_mismatch,
            "tau_mean": float(fr.tau[sel].mean()),
            "tau_spread": tau_spread,
            "tau_curve_mean": float(fr.tau_curve[sel].mean()),
            "H_tau_lambda_residual": h_resid,
            "lem1_mismatch": lem1,
            "lem1_diagonal_mismatch": lem1_diag,
            "lem1_scale": lscale,
            "rotationally_invariant_compatible": bool(defect <= defect_tol and lam_spread <= spread_tol),
        })
        defects.append(defect)
    return _report("BoundaryPrincipal", defects, defect_tol, per_loop=per_loop)
