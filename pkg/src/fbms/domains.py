"""Level-set domains ``Omega`` with ``boundary = F^{-1}(1)`` and their classification.

Every domain evaluates ``F``, its gradient and its Hessian in closed form for
arrays of points of shape ``(..., dim)``.  The outward normal of the boundary
is ``grad F / |grad F|``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    DegenerateGradient,
    ParseError,
    ProjectionDiverged,
    QueryOutsideProfileInterval,
)

GRAD_TOL = 1e-12


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class QuadricSpec:
    """``F(x) = sum_i a_i x_i^2 + b x_n + c`` with ``a_i`` in {-1, 0, 1}."""

    a: tuple[int, ...]
    b: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        a = tuple(int(v) for v in self.a)
        if len(a) < 2:
            raise ValueError("quadric needs ambient dimension n >= 2")
        if any(v not in (-1, 0, 1) for v in self.a):
            raise ValueError(f"quadric coefficients must lie in {{-1,0,1}}, got {self.a}")
        if all(v == 0 for v in a) and self.b == 0:
            raise ValueError("quadric F is constant (all a_i = 0 and b = 0)")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "c", float(self.c))

    @property
    def n(self) -> int:
        return len(self.a)


PROFILE_FAMILIES = ("sphere", "catenoid", "cone", "cylinder", "custom")


@dataclass(frozen=True, eq=False)
class ProfileCurve:
    """Generating curve ``y -> (f(y), y)`` of a rotational domain.

    ``params`` by family: sphere ``radius``; catenoid ``scale``; cone ``f0``
    and ``slope``; cylinder ``radius``; custom ``y`` and ``f`` samples
    interpolated by a cubic spline.
    """

    family: str
    interval: tuple[float, float]
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in PROFILE_FAMILIES:
            raise ValueError(f"unknown profile family {self.family!r}")
        y0, y1 = (float(v) for v in self.interval)
        if not y1 > y0:
            raise ValueError("profile interval must satisfy y0 < y1")
        object.__setattr__(self, "interval", (y0, y1))
        if self.family == "custom":
            ys = np.asarray(self.params["y"], dtype=float)
            fs = np.asarray(self.params["f"], dtype=float)
            if ys.shape != fs.shape or ys.ndim != 1 or len(ys) < 4:
                raise ValueError("custom profile needs arrays y, f of equal length >= 4")
            object.__setattr__(self, "_spline", CubicSpline(ys, fs))
        grid = np.linspace(y0, y1, 257)
        if np.any(self._f(grid) <= 0):
            raise ValueError("profile f must be positive on its interval")

    @classmethod
    def sphere(cls, radius: float = 1.0, interval=None) -> "ProfileCurve":
        if interval is None:
            interval = (-0.999 * radius, 0.999 * radius)
        return cls("sphere", interval, {"radius": float(radius)})

    @classmethod
    def catenoid(cls, scale: float = 1.0, interval=(0.0, 2.0)) -> "ProfileCurve":
        return cls("catenoid", interval, {"scale": float(scale)})

    @classmethod
    def cone(cls, f0: float = 1.0, slope: float = 1.0, interval=(0.0, 1.0)) -> "ProfileCurve":
        return cls("cone", interval, {"f0": float(f0), "slope": float(slope)})

    @classmethod
    def cylinder(cls, radius: float = 1.0, interval=(-1.0, 1.0)) -> "ProfileCurve":
        return cls("cylinder", interval, {"radius": float(radius)})

    @classmethod
    def custom(cls, y: Sequence[float], f: Sequence[float]) -> "ProfileCurve":
        y = [float(v) for v in y]
        return cls("custom", (y[0], y[-1]), {"y": y, "f": [float(v) for v in f]})

    def _check(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        y0, y1 = self.interval
        slack = 1e-12 * max(1.0, abs(y0), abs(y1))
        if np.any(y < y0 - slack) or np.any(y > y1 + slack):
            bad = y[(y < y0 - slack) | (y > y1 + slack)]
            raise QueryOutsideProfileInterval(
                f"y={bad.flat[0]!r} outside profile interval [{y0}, {y1}]"
            )
        return y

    def _f(self, y):
        p = self.params
        if self.family == "sphere":
            return np.sqrt(p["radius"] ** 2 - y**2)
        if self.family == "catenoid":
            k = p["scale"]
            return k * np.cosh(y / k)
        if self.family == "cone":
            return p["f0"] + p["slope"] * y
        if self.family == "cylinder":
            return np.full_like(y, p["radius"], dtype=float)
        return self._spline(y)

    def f(self, y):
        return self._f(self._check(y))

    def df(self, y):
        y = self._check(y)
        p = self.params
        if self.family == "sphere":
            return -y / self._f(y)
        if self.family == "catenoid":
            return np.sinh(y / p["scale"])
        if self.family == "cone":
            return np.full_like(y, p["slope"], dtype=float)
        if self.family == "cylinder":
            return np.zeros_like(y, dtype=float)
        return self._spline(y, 1)

    def d2f(self, y):
        y = self._check(y)
        p = self.params
        if self.family == "sphere":
            return -p["radius"] ** 2 / self._f(y) ** 3
        if self.family == "catenoid":
            k = p["scale"]
            return np.cosh(y / k) / k
        if self.family in ("cone", "cylinder"):
            return np.zeros_like(y, dtype=float)
        return self._spline(y, 2)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": "profile", "family": self.family}
        if self.family == "custom":
            d["y"] = list(self.params["y"])
            d["f"] = list(self.params["f"])
        else:
            d["interval"] = list(self.interval)
            d.update(self.params)
        return d


@dataclass(frozen=True)
class EllipsoidSpec:
    """Ellipsoid of revolution about the x3-axis, semi-axes ``a, a, b``."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.b > 0 and self.a >= self.b):
            raise ValueError(f"ellipsoid needs a >= b > 0, got a={self.a}, b={self.b}")


# ---------------------------------------------------------------------------
# domains


class LevelSetDomain:
    """Base class.  Subclasses implement ``_eval`` on arrays of shape (m, dim)."""

    kind = "generic"
    dim = 3

    def _eval(self, p: np.ndarray):
        raise NotImplementedError

    def evaluate(self, point):
        """Return ``(F, grad F, Hess F)`` at ``point`` (shape ``(dim,)`` or ``(..., dim)``)."""
        p = np.asarray(point, dtype=float)
        shape = p.shape[:-1]
        if p.shape[-1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {p.shape[-1]}")
        F, g, H = self._eval(p.reshape(-1, self.dim))
        return (
            F.reshape(shape),
            g.reshape(shape + (self.dim,)),
            H.reshape(shape + (self.dim, self.dim)),
        )

    def value(self, point):
        return self.evaluate(point)[0]

    def gradient(self, point):
        return self.evaluate(point)[1]

    def hessian(self, point):
        return self.evaluate(point)[2]

    def outward_normal(self, point):
        """Unit normal ``grad F / |grad F|``; raises on a vanishing gradient."""
        g = self.gradient(point)
        norm = np.linalg.norm(g, axis=-1, keepdims=True)
        if np.any(norm < GRAD_TOL):
            raise DegenerateGradient("|grad F| vanishes at a boundary point")
        return g / norm

    def to_dict(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} is not serializable")


class Ball(LevelSetDomain):
    """``F(x) = |x|^2 / R^2``."""

    kind = "ball"

    def __init__(self, radius: float = 1.0):
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        self.radius = float(radius)

    def _eval(self, p):
        s = 1.0 / self.radius**2
        F = s * np.einsum("ij,ij->i", p, p)
        H = np.broadcast_to(2 * s * np.eye(3), (len(p), 3, 3)).copy()
        return F, 2 * s * p, H

    def to_dict(self):
        return {"kind": "ball", "radius": self.radius}

    def __repr__(self):
        return f"Ball(radius={self.radius})"


class Quadric(LevelSetDomain):
    kind = "quadric"

    def __init__(self, spec: QuadricSpec):
        self.spec = spec
        self.dim = spec.n
        self._a = np.array(spec.a, dtype=float)

    def _eval(self, p):
        a, b, c = self._a, self.spec.b, self.spec.c
        F = p**2 @ a + b * p[:, -1] + c
        g = 2 * a * p
        g[:, -1] += b
        H = np.broadcast_to(np.diag(2 * a), (len(p), self.dim, self.dim)).copy()
        return F, g, H

    def to_dict(self):
        s = self.spec
        return {"kind": "quadric", "n": s.n, "a": list(s.a), "b": s.b, "c": s.c}

    def __repr__(self):
        return f"Quadric({self.spec})"


class Rotational(LevelSetDomain):
    """``F(x1, x2, y) = x1^2 + x2^2 - f(y)^2 + 1`` for a profile ``f``."""

    kind = "rotational"

    def __init__(self, profile: ProfileCurve):
        self.profile = profile

    def _eval(self, p):
        y = p[:, 2]
        f, df, d2f = self.profile.f(y), self.profile.df(y), self.profile.d2f(y)
        F = p[:, 0] ** 2 + p[:, 1] ** 2 - f**2 + 1.0
        g = np.stack([2 * p[:, 0], 2 * p[:, 1], -2 * f * df], axis=1)
        H = np.zeros((len(p), 3, 3))
        H[:, 0, 0] = 2.0
        H[:, 1, 1] = 2.0
        H[:, 2, 2] = -2 * (df**2 + f * d2f)
        return F, g, H

    def to_dict(self):
        return self.profile.to_dict()

    def __repr__(self):
        return f"Rotational({self.profile.family}, {self.profile.interval})"


class Ellipsoid(LevelSetDomain):
    """``F = (x1^2 + x2^2) / a^2 + x3^2 / b^2``."""

    kind = "ellipsoid"

    def __init__(self, spec: EllipsoidSpec):
        self.spec = spec
        self._w = np.array([1 / spec.a**2, 1 / spec.a**2, 1 / spec.b**2])

    def _eval(self, p):
        F = p**2 @ self._w
        H = np.broadcast_to(np.diag(2 * self._w), (len(p), 3, 3)).copy()
        return F, 2 * self._w * p, H

    def to_dict(self):
        return {"kind": "ellipsoid", "a": self.spec.a, "b": self.spec.b}

    def __repr__(self):
        return f"Ellipsoid(a={self.spec.a}, b={self.spec.b})"


class ScalarField(LevelSetDomain):
    """User-supplied ``F`` with caller-provided gradient and Hessian (single points)."""

    kind = "scalar-field"

    def __init__(self, F: Callable, grad: Callable, hess: Callable, dim: int = 3):
        self._F, self._grad, self._hess = F, grad, hess
        self.dim = dim

    def _eval(self, p):
        F = np.array([float(self._F(q)) for q in p])
        g = np.array([np.asarray(self._grad(q), dtype=float) for q in p]).reshape(-1, self.dim)
        H = np.array([np.asarray(self._hess(q), dtype=float) for q in p]).reshape(-1, self.dim, self.dim)
        return F, g, H


# ---------------------------------------------------------------------------
# projection


def _newton_project(domain: LevelSetDomain, q: np.ndarray, tol: float, max_iter: int):
    """In-place Newton on rows of ``q``; returns ``(converged, degenerate)`` masks."""
    active = np.ones(len(q), dtype=bool)
    degenerate = np.zeros(len(q), dtype=bool)
    for _ in range(max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        F, g, _ = domain._eval(q[idx])
        r = F - 1.0
        done = np.abs(r) <= tol
        active[idx[done]] = False
        idx, r, g = idx[~done], r[~done], g[~done]
        if idx.size == 0:
            break
        gg = np.einsum("ij,ij->i", g, g)
        bad = gg < GRAD_TOL**2
        degenerate[idx[bad]] = True
        active[idx[bad]] = False
        idx, r, g, gg = idx[~bad], r[~bad], g[~bad], gg[~bad]
        q[idx] -= (r / gg)[:, None] * g
    return ~active & ~degenerate, degenerate


def project_to_boundary(domain: LevelSetDomain, point, tol: float = 1e-12, max_iter: int = 50):
    """Newton iteration ``q <- q - (F(q) - 1) grad F / |grad F|^2`` onto ``F = 1``.

    Accepts one point or an array of points; every returned point satisfies
    ``|F(q) - 1| <= tol``.
    """
    p = np.asarray(point, dtype=float)
    q = p.reshape(-1, domain.dim).copy()
    ok, degenerate = _newton_project(domain, q, tol, max_iter)
    if degenerate.any():
        raise DegenerateGradient("|grad F| vanishes along the projection path")
    if not ok.all():
        F = domain._eval(q[~ok])[0]
        raise ProjectionDiverged(
            f"projection did not reach |F-1| <= {tol} in {max_iter} iterations "
            f"(worst residual {np.max(np.abs(F - 1)):.3e})"
        )
    return q.reshape(p.shape)


def project_where_possible(domain: LevelSetDomain, points, tol: float = 1e-12, max_iter: int = 50):
    """Project a batch, returning ``(projected, ok)`` instead of raising."""
    q = np.array(points, dtype=float).reshape(-1, domain.dim)
    ok, _ = _newton_project(domain, q, tol, max_iter)
    return q, ok


# ---------------------------------------------------------------------------
# classification


class Outcome(str, enum.Enum):
    NO_EXISTENCE = "NoExistence"
    ONLY_TOTALLY_GEODESIC = "OnlyTotallyGeodesic"
    UNCONSTRAINED = "Unconstrained"


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    description: str = ""
    citation: str = ""

    def __post_init__(self):
        if self.outcome is Outcome.ONLY_TOTALLY_GEODESIC and not self.description:
            raise ValueError("OnlyTotallyGeodesic verdicts need a description")

    def to_dict(self) -> dict:
        return {"outcome": self.outcome.value, "description": self.description, "citation": self.citation}


DISK_AT_ORIGIN = "flat disk supported at the origin"
DISKS_ORTHOGONAL = "flat disks intersecting ∂Ω orthogonally"

CITE_BNEQ0 = "Theorem (bneq0)"
CITE_ALL1 = "Theorem (all=1)"
CITE_ALL1_A = "Theorem (all=1)(a)"
CITE_ALL1_B = "Theorem (all=1)(b)"
CITE_2SHEETS = "Theorem (2sheets)"
CITE_CILINDCONE = "Theorem (cilindcone)"
CITE_ROTATIONAL = "Theorem (rotational f'>=0)"


def classify_quadric(spec: QuadricSpec) -> Verdict:
    """Decision tree over the quadric coefficients; total on valid specs."""
    a, b, c = spec.a, spec.b, spec.c
    head, last = a[:-1], a[-1]
    if last == 0 and b != 0:
        return Verdict(
            Outcome.NO_EXISTENCE,
            "∂F/∂x_n = b has a fixed sign",
            CITE_BNEQ0,
        )
    if b != 0:
        return Verdict(Outcome.UNCONSTRAINED, "b != 0 with a_n != 0 is not covered")
    if c <= 0:
        off = [v for v in a if v != 1]
        if len(off) == 0:
            return Verdict(Outcome.UNCONSTRAINED, "all a_i = 1 (round ball) is outside the hypothesis")
        if len(off) >= 2:
            return Verdict(
                Outcome.NO_EXISTENCE,
                "two or more coefficients differ from 1",
                CITE_ALL1,
            )
        if off[0] == -1:
            return Verdict(Outcome.ONLY_TOTALLY_GEODESIC, DISK_AT_ORIGIN, CITE_ALL1_A)
        return Verdict(Outcome.ONLY_TOTALLY_GEODESIC, DISKS_ORTHOGONAL, CITE_ALL1_B)
    if c >= 1 and last == -1:
        if all(v == 1 for v in head):
            return Verdict(
                Outcome.NO_EXISTENCE,
                "cone or hyperboloid of two sheets",
                CITE_2SHEETS,
            )
        if sorted(head) == [0] + [1] * (len(head) - 1):
            return Verdict(
                Outcome.NO_EXISTENCE,
                "cylinder over a cone or a hyperbola",
                CITE_CILINDCONE,
            )
    return Verdict(Outcome.UNCONSTRAINED, "no classification result applies")


def classify_profile(profile: ProfileCurve, samples: int = 1024, tol: float = 1e-10) -> Verdict:
    """Sign test of ``f'`` on a uniform grid over the profile interval.

    A monotone profile (``f' >= 0``, or ``f' <= 0`` by the reflection
    ``y -> -y``) pins any free-boundary minimal hypersurface to a flat disk
    sitting where ``f'`` vanishes; if ``f'`` never vanishes there is none.
    """
    y0, y1 = profile.interval
    ys = np.linspace(y0, y1, samples)
    d = profile.df(ys)
    if not np.all(d >= -tol):
        if not np.all(d <= tol):
            return Verdict(Outcome.UNCONSTRAINED, "f' changes sign")
        d = -d
    k = int(np.argmin(np.abs(d)))
    if abs(d[k]) >= tol:
        return Verdict(Outcome.NO_EXISTENCE, "f' never vanishes", CITE_ROTATIONAL)
    y = float(ys[k])
    if abs(y) <= tol:
        desc = DISK_AT_ORIGIN
    else:
        desc = f"flat disk supported at y={y:.6g}"
    return Verdict(Outcome.ONLY_TOTALLY_GEODESIC, desc, CITE_ROTATIONAL)


def classify(domain) -> Verdict:
    if isinstance(domain, QuadricSpec):
        return classify_quadric(domain)
    if isinstance(domain, ProfileCurve):
        return classify_profile(domain)
    if isinstance(domain, Quadric):
        return classify_quadric(domain.spec)
    if isinstance(domain, Rotational):
        return classify_profile(domain.profile)
    raise TypeError(f"cannot classify {type(domain).__name__}")


# ---------------------------------------------------------------------------
# serialization


def domain_from_dict(d: dict) -> LevelSetDomain:
    """Build a domain from its JSON document; raises ``ParseError`` on bad input."""
    if not isinstance(d, dict):
        raise ParseError("domain spec must be a JSON object")
    kind = d.get("kind", "quadric" if "a" in d else None)
    try:
        if kind == "ball":
            return Ball(d.get("radius", 1.0))
        if kind == "quadric":
            a = d["a"]
            if "n" in d and int(d["n"]) != len(a):
                raise ValueError(f"n={d['n']} does not match len(a)={len(a)}")
            return Quadric(QuadricSpec(tuple(a), d.get("b", 0.0), d.get("c", 0.0)))
        if kind == "ellipsoid":
            return Ellipsoid(EllipsoidSpec(float(d["a"]), float(d["b"])))
        if kind == "profile":
            family = d["family"]
            if family == "custom":
                return Rotational(ProfileCurve.custom(d["y"], d["f"]))
            params = {k: v for k, v in d.items() if k not in ("kind", "family", "interval")}
            interval = d.get("interval")
            if interval is None:
                if family != "sphere":
                    raise ValueError("profile needs an interval")
                return Rotational(ProfileCurve.sphere(**params))
            return Rotational(ProfileCurve(family, tuple(interval), params))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid {kind} spec: {exc}") from exc
    raise ParseError(f"unknown domain kind {kind!r}")


def load_domain(path) -> LevelSetDomain:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", exc.lineno) from exc
    return domain_from_dict(d)


def spec_from_dict(d: dict):
    """Like ``domain_from_dict`` but returns the bare spec for classification."""
    dom = domain_from_dict(d)
    if isinstance(dom, Quadric):
        return dom.spec
    if isinstance(dom, Rotational):
        return dom.profile
    return dom
