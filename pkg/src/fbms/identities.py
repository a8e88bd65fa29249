"""Integral identities for free-boundary surfaces, checked on meshes with refinement studies.

All identities are assembled from the same three discrete pieces: lumped
surface quadrature, lumped boundary quadrature and the cotan Laplacian at
interior vertices.  Boundary vertex values of a Laplacian are copied from the
mean over interior neighbours, since the boundary rows of the cotan operator
are not a consistent Laplacian.

Dimension convention: surfaces are 2-dimensional in R^3, so every
``(n - 1)|Sigma|`` of the codimension-one statements (``Sigma^{n-1}`` in
``R^n``) and every ``n|Sigma|`` of the rotational and ball statements
(``Sigma^n`` in ``R^{n+1}``) becomes ``2|Sigma|``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .discrete_ops import compute_geometry, integrate_boundary, integrate_surface, laplacian_apply
from .domains import (
    Ball, Ellipsoid, LevelSetDomain, ProfileCurve, Quadric, QuadricSpec, Rotational,
    project_where_possible,
)
from .errors import HypothesisUnmet
from .mesh import TriMesh, refine

DIM = 2
ROUNDOFF = 1e-10

TEST_FUNCTIONS = {
    "1": lambda X: np.ones(len(X)),
    "x1": lambda X: X[:, 0],
    "x2": lambda X: X[:, 1],
    "x3": lambda X: X[:, 2],
    "|x|^2": lambda X: np.einsum("ij,ij->i", X, X),
    "x1x2": lambda X: X[:, 0] * X[:, 1],
}

TAGS = ("fundamental", "minkowski", "homogeneous", "quadric-laplacian", "quadric-combined",
        "rotational-combined", "ball-half")
NEEDS_MINIMAL = {"minkowski", "homogeneous", "quadric-laplacian", "quadric-combined",
                 "rotational-combined", "ball-half"}


@dataclass(frozen=True)
class IdentityKind:
    tag: str
    phi: str | None = None
    k: float | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown identity {self.tag!r}; expected one of {TAGS}")
        if self.tag in ("fundamental", "ball-half"):
            if self.phi is None:
                object.__setattr__(self, "phi", "1")
            if self.phi not in TEST_FUNCTIONS:
                raise ValueError(f"unknown test function {self.phi!r}; expected one of {list(TEST_FUNCTIONS)}")
        if self.tag == "homogeneous" and self.k is None:
            object.__setattr__(self, "k", 2.0)

    @classmethod
    def parse(cls, text: str) -> "IdentityKind":
        """``minkowski``, ``fundamental:x1``, ``ball-half:|x|^2``, ``homogeneous:2``."""
        tag, _, arg = text.partition(":")
        tag = tag.strip().lower()
        if tag == "homogeneous":
            return cls(tag, k=float(arg) if arg else None)
        return cls(tag, phi=arg or None)

    def __str__(self):
        if self.phi is not None:
            return f"{self.tag}:{self.phi}"
        if self.tag == "homogeneous":
            return f"{self.tag}:{self.k:g}"
        return self.tag


@dataclass
class LevelRecord:
    level: int
    h: float
    n_triangles: int
    lhs: float
    rhs: float
    residual: float
    relative_residual: float
    scale: float


@dataclass
class IdentityReport:
    kind: IdentityKind
    records: list[LevelRecord]
    estimated_order: float | None = None
    status: str = "ok"
    hypothesis: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def finest(self) -> LevelRecord:
        return self.records[-1]

    def to_dict(self) -> dict:
        order = self.estimated_order
        return {
            "kind": str(self.kind),
            "status": self.status,
            "estimated_order": None if order is None else (order if math.isfinite(order) else "inf"),
            "hypothesis": self.hypothesis,
            "notes": self.notes,
            "levels": [asdict(r) for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["level", "h", "n_triangles", "lhs", "rhs", "residual", "relative_residual"])
        for r in self.records:
            w.writerow([r.level, repr(r.h), r.n_triangles, repr(r.lhs), repr(r.rhs), repr(r.residual),
                        repr(r.relative_residual)])
        return buf.getvalue()

    def table(self) -> str:
        lines = [f"identity {self.kind}  [{self.status}]",
                 f"{'level':>5} {'h':>10} {'tris':>7} {'lhs':>14} {'rhs':>14} {'residual':>10} {'relative':>10}"]
        for r in self.records:
            lines.append(f"{r.level:>5} {r.h:>10.4g} {r.n_triangles:>7} {r.lhs:>14.8g} {r.rhs:>14.8g} "
                         f"{r.residual:>10.3e} {r.relative_residual:>10.3e}")
        if self.estimated_order is not None:
            lines.append(f"estimated order: {self.estimated_order:.3f}")
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# discrete pieces


def interior_laplacian(mesh: TriMesh, values) -> np.ndarray:
    """Pointwise Laplacian at interior vertices; boundary vertices get the
    mean of their interior neighbours (or of all neighbours if they have none)."""
    lap = laplacian_apply(mesh, values)
    b = mesh.boundary_vertices()
    if b.size == 0:
        return lap
    A = mesh.adjacency()
    inner = (~mesh.is_boundary).astype(float)
    for i in b:
        nb = A.indices[A.indptr[i] : A.indptr[i + 1]]
        w = inner[nb]
        lap[i] = lap[nb] @ w / w.sum() if w.sum() > 0 else lap[nb].mean()
    return lap


def _abs_scale(mesh, g, boundary_terms, surface_terms) -> float:
    """Sum of the integrals of the absolute integrands: the size of the
    quantities being cancelled, nonzero even when symmetry zeroes each side."""
    return sum(integrate_boundary(mesh, g, np.abs(t)) for t in boundary_terms) + \
        sum(integrate_surface(mesh, g, np.abs(t)) for t in surface_terms)


def _order(hs, res, scales) -> tuple[float | None, list[str]]:
    if len(hs) < 3:
        return None, []
    res = np.asarray(res)
    if np.all(res <= ROUNDOFF * np.asarray(scales)):
        return math.inf, ["residuals at roundoff on every level; order reported as inf"]
    if np.any(res <= 0):
        return math.inf, ["a residual is exactly zero; order reported as inf"]
    slope = np.polyfit(np.log(hs), np.log(res), 1)[0]
    return float(slope), []


def _as_rotational(domain) -> Rotational:
    if isinstance(domain, Rotational):
        return domain
    if isinstance(domain, Ball):
        return Rotational(ProfileCurve.sphere(domain.radius))
    raise ValueError("rotational-combined needs a rotational domain (or a ball, read as one)")


def _homogeneous_offset(domain) -> tuple[float, list[str]]:
    """``F - c0`` is homogeneous; returns ``c0`` (so ``<grad F, x> = k (1 - c0)`` on the boundary)."""
    if isinstance(domain, (Ball, Ellipsoid)):
        return 0.0, []
    if isinstance(domain, Quadric) and domain.spec.b == 0:
        c = domain.spec.c
        notes = []
        if c != 0:
            notes.append(f"F = G + c with G homogeneous and c = {c:g}: the boundary integrand is "
                         "k (1 - c) / |grad F|; with the bare k / |grad F| the identity fails")
        return c, notes
    raise ValueError("homogeneous identity needs a ball, ellipsoid or a quadric with b = 0")


def evaluate_identity(kind: IdentityKind, mesh: TriMesh, domain: LevelSetDomain, geom=None):
    """One level: ``(lhs, rhs, residual, scale, notes)``."""
    g = geom if geom is not None else compute_geometry(mesh, fit_shape=False)
    X = mesh.vertices
    Xb = X[g.boundary_ids]
    F, grad, _ = domain.evaluate(X)
    gb = grad[g.boundary_ids]
    gnb = np.linalg.norm(gb, axis=1)
    N = g.normal
    notes: list[str] = []
    area = integrate_surface(mesh, g, 1.0)
    tag = kind.tag

    if tag == "fundamental":
        phi = TEST_FUNCTIONS[kind.phi](X)
        b = gnb * phi[g.boundary_ids]
        s1 = phi * interior_laplacian(mesh, F)
        s2 = (1 - F) * interior_laplacian(mesh, phi)
        lhs, t1, t2 = integrate_boundary(mesh, g, b), integrate_surface(mesh, g, s1), integrate_surface(mesh, g, s2)
        scale = _abs_scale(mesh, g, [b], [s1, s2])
        return lhs, t1 + t2, abs(lhs - t1 - t2), scale, notes

    if tag == "minkowski":
        lhs = integrate_boundary(mesh, g, np.einsum("ij,ij->i", Xb, gb / gnb[:, None]))
        rhs = DIM * area
        return lhs, rhs, abs(lhs - rhs), abs(lhs) + abs(rhs), notes

    if tag == "homogeneous":
        c0, notes = _homogeneous_offset(domain)
        lhs = integrate_boundary(mesh, g, kind.k * (1 - c0) / gnb)
        rhs = DIM * area
        return lhs, rhs, abs(lhs - rhs), abs(lhs) + abs(rhs), notes

    if tag == "ball-half":
        if not isinstance(domain, Ball) or domain.radius != 1.0:
            raise ValueError("ball-half is stated for the unit ball")
        phi = TEST_FUNCTIONS[kind.phi](X)
        b = phi[g.boundary_ids]
        s1 = DIM * phi
        s2 = 0.5 * (1 - np.einsum("ij,ij->i", X, X)) * interior_laplacian(mesh, phi)
        lhs, t1, t2 = integrate_boundary(mesh, g, b), integrate_surface(mesh, g, s1), integrate_surface(mesh, g, s2)
        scale = _abs_scale(mesh, g, [b], [s1, s2])
        return lhs, t1 + t2, abs(lhs - t1 - t2), scale, notes

    if tag in ("quadric-laplacian", "quadric-combined"):
        if not isinstance(domain, Quadric) or domain.dim != 3:
            raise ValueError(f"{tag} needs a quadric domain in R^3")
        s = domain.spec
        a = np.asarray(s.a, dtype=float)
        closed = 2 * ((1 - N**2) @ a)
        if tag == "quadric-laplacian":
            disc = interior_laplacian(mesh, F)
            inner = ~mesh.is_boundary
            err = np.abs(disc - closed)[inner]
            lhs, rhs = float(disc[inner].mean()), float(closed[inner].mean())
            scale = float(np.abs(closed[inner]).max()) or 1.0
            notes.append("pointwise: lhs/rhs are interior means, residual is the max interior error")
            return lhs, rhs, float(err.max()), scale, notes
        xn = Xb[:, -1]
        lhs_int = (gnb**2 + s.b * xn - 2 * (1 - s.c)) / gnb
        lhs = integrate_boundary(mesh, g, lhs_int)
        rhs = integrate_surface(mesh, g, closed - DIM)
        scale = integrate_boundary(mesh, g, gnb) + DIM * area
        return lhs, rhs, abs(lhs - rhs), scale, notes

    if tag == "rotational-combined":
        rot = _as_rotational(domain)
        pr = rot.profile
        yb = Xb[:, 2]
        f, df = pr.f(yb), pr.df(yb)
        b = (f * df**2 + yb * df) / np.sqrt(1 + df**2)
        y = X[:, 2]
        fac = pr.df(y) ** 2 + pr.f(y) * pr.d2f(y) + 1
        s1 = (N[:, 2] ** 2 - 1) * fac
        lhs, rhs = integrate_boundary(mesh, g, b), integrate_surface(mesh, g, s1)
        # both sides are differences of n|Sigma|-sized terms; that is the natural scale
        scale = max(_abs_scale(mesh, g, [b], [s1]), DIM * area)
        return lhs, rhs, abs(lhs - rhs), scale, notes

    raise ValueError(tag)


def minimality_residuals(mesh: TriMesh, domain: LevelSetDomain) -> tuple[float, float]:
    from .solver import residuals

    return residuals(mesh, domain)


def check_identity(kind, mesh: TriMesh, domain: LevelSetDomain, levels: int = 1, snap=None,
                   gate_H: float = 1e-2, gate_angle: float = 1e-1, strict: bool = False) -> IdentityReport:
    """Evaluate one identity on ``mesh`` and ``levels - 1`` successive refinements.

    ``snap`` maps refinement midpoints back onto the underlying smooth
    surface (references provide one); without it, midpoints of a curved
    surface stay on the chords and the identity residual stalls at the
    coarse geometric error.  Identities that need minimality are gated on
    ``residual_H <= gate_H`` and the free-boundary angle ``<= gate_angle``
    at the input level; failing the gate tags the report
    ``hypothesis-unmet`` (raised as ``HypothesisUnmet`` with ``strict``).
    """
    if isinstance(kind, str):
        kind = IdentityKind.parse(kind)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    report = IdentityReport(kind, [])
    if kind.tag in NEEDS_MINIMAL:
        rh, ra = minimality_residuals(mesh, domain)
        report.hypothesis = {"residual_H": rh, "residual_angle": ra, "gate_H": gate_H, "gate_angle": gate_angle}
        if rh > gate_H or ra > gate_angle:
            report.status = "hypothesis-unmet"
    m = mesh
    for lev in range(levels):
        if lev:
            m = refine(m, domain, snap=snap)
        lhs, rhs, res, scale, notes = evaluate_identity(kind, m, domain)
        for n in notes:
            if n not in report.notes:
                report.notes.append(n)
        report.records.append(LevelRecord(lev, m.mean_edge_length(), m.n_triangles, lhs, rhs, res,
                                          res / scale if scale > 0 else res, scale))
    order, notes = _order([r.h for r in report.records], [r.residual for r in report.records],
                          [r.scale for r in report.records])
    report.estimated_order = order
    report.notes += notes
    if report.status == "hypothesis-unmet" and strict:
        raise HypothesisUnmet(
            f"minimality hypothesis unmet for {kind}: residual_H={report.hypothesis['residual_H']:.3e} "
            f"(gate {gate_H:g}), angle={report.hypothesis['residual_angle']:.3e} (gate {gate_angle:g})",
            report,
        )
    return report


def boundary_flux_and_laplacian(mesh: TriMesh, domain: LevelSetDomain) -> tuple[float, float]:
    """``(int_dSigma |grad F|, int_Sigma Laplacian F)``, assembled directly."""
    g = compute_geometry(mesh, fit_shape=False)
    F, grad, _ = domain.evaluate(mesh.vertices)
    flux = integrate_boundary(mesh, g, np.linalg.norm(grad[g.boundary_ids], axis=1))
    return flux, integrate_surface(mesh, g, interior_laplacian(mesh, F))


# ---------------------------------------------------------------------------
# signature scan


SIGN_CONCLUSIONS = {
    "positive": "no immersed free-boundary minimal hypersurface (strict sign of dF/dv)",
    "negative": "no immersed free-boundary minimal hypersurface (strict sign of dF/dv)",
    "vanishing": "any free-boundary minimal hypersurface is totally geodesic: a plane section orthogonal to v",
    "nonnegative": "any free-boundary minimal hypersurface is totally geodesic, with dF/dv = 0 on its boundary",
    "nonpositive": "any free-boundary minimal hypersurface is totally geodesic, with dF/dv = 0 on its boundary",
    "mixed": "no conclusion",
}


@dataclass
class DirectionSign:
    direction: list
    pattern: str
    min: float
    max: float
    conclusion: str


@dataclass
class SignatureReport:
    n_samples: int
    directions: list[DirectionSign]
    conclusion: str

    def to_dict(self) -> dict:
        return {"n_samples": self.n_samples, "conclusion": self.conclusion,
                "directions": [asdict(d) for d in self.directions]}


def sample_boundary(domain, n: int = 10_000, seed: int = 0, box: float = 2.0) -> np.ndarray:
    """Quasi-random points of ``F = 1``.

    Quadrics (and other closed-form domains): Halton points in ``[-box, box]^3``
    projected by Newton, keeping those that stay in the box.  Profiles:
    Halton points in ``(y, theta)`` mapped onto the surface of revolution.
    """
    from scipy.stats import qmc

    if isinstance(domain, ProfileCurve):
        domain = Rotational(domain)
    if isinstance(domain, Rotational):
        y0, y1 = domain.profile.interval
        u = qmc.Halton(2, seed=seed).random(n)
        y = y0 + (y1 - y0) * u[:, 0]
        th = 2 * np.pi * u[:, 1]
        r = domain.profile.f(y)
        return np.stack([r * np.cos(th), r * np.sin(th), y], axis=1)
    if isinstance(domain, QuadricSpec):
        domain = Quadric(domain)
    pts = box * (2 * qmc.Halton(domain.dim, seed=seed).random(n) - 1)
    q, ok = project_where_possible(domain, pts)
    keep = ok & (np.abs(q) <= box).all(axis=1)
    return q[keep]


def signature_scan(domain, directions=None, n_samples: int = 10_000, seed: int = 0, tol: float = 1e-9,
                   box: float = 2.0) -> SignatureReport:
    """Sign pattern of ``dF/dv`` over a boundary sample for each direction ``v``."""
    dom = domain
    if isinstance(dom, QuadricSpec):
        dom = Quadric(dom)
    elif isinstance(dom, ProfileCurve):
        dom = Rotational(dom)
    P = sample_boundary(dom, n_samples, seed, box)
    dirs = np.eye(dom.dim) if directions is None else np.asarray(directions, dtype=float).reshape(-1, dom.dim)
    grad = dom.gradient(P)
    scale = max(float(np.abs(grad).max()), 1.0)
    out = []
    for v in dirs:
        v = v / np.linalg.norm(v)
        d = grad @ v
        lo, hi = float(d.min()), float(d.max())
        t = tol * scale
        if hi <= t and lo >= -t:
            pat = "vanishing"
        elif lo > t:
            pat = "positive"
        elif hi < -t:
            pat = "negative"
        elif lo >= -t:
            pat = "nonnegative"
        elif hi <= t:
            pat = "nonpositive"
        else:
            pat = "mixed"
        out.append(DirectionSign(v.tolist(), pat, lo, hi, SIGN_CONCLUSIONS[pat]))
    pats = {d.pattern for d in out}
    if pats & {"positive", "negative"}:
        concl = SIGN_CONCLUSIONS["positive"]
    elif pats & {"vanishing", "nonnegative", "nonpositive"}:
        concl = "totally geodesic branch: any free-boundary minimal hypersurface lies in a plane"
    else:
        concl = SIGN_CONCLUSIONS["mixed"]
    return SignatureReport(len(P), out, concl)
