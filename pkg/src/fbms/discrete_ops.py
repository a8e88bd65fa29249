"""Discrete differential geometry on triangle meshes.

Sign conventions: ``N`` is the right-hand-rule normal of the triangles and
``<A X, Y> = -<D_X Y, N>``, ``H = trace(A) / 2``, so the unit sphere with
``N = x`` has principal curvatures +1 and ``H = 1``.  ``nu`` always denotes the outward conormal.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DegenerateGradient, InsufficientNeighborhood
from .mesh import TriMesh

XT_DEGENERATE = 1e-8


def _unit(v, axis=-1):
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / np.where(n == 0, 1.0, n)


# ---------------------------------------------------------------------------
# Laplacian and mass


def _corner_cotangents(mesh: TriMesh):
    V, T = mesh.vertices, mesh.triangles
    cots = np.empty(T.shape)
    for c in range(3):
        i, j, k = T[:, c], T[:, (c + 1) % 3], T[:, (c + 2) % 3]
        u, w = V[j] - V[i], V[k] - V[i]
        cots[:, c] = np.einsum("ij,ij->i", u, w) / np.linalg.norm(np.cross(u, w), axis=1)
    return cots


def mixed_area(mesh: TriMesh) -> np.ndarray:
    """Per-vertex mixed Voronoi area; positive, sums to the total area."""
    V, T = mesh.vertices, mesh.triangles
    cots = _corner_cotangents(mesh)
    fa = mesh.face_areas()
    out = np.zeros(mesh.n_vertices)
    for c in range(3):
        i, j, k = T[:, c], T[:, (c + 1) % 3], T[:, (c + 2) % 3]
        lij = np.sum((V[j] - V[i]) ** 2, axis=1)
        lik = np.sum((V[k] - V[i]) ** 2, axis=1)
        vor = (lij * cots[:, (c + 2) % 3] + lik * cots[:, (c + 1) % 3]) / 8.0
        obtuse_here = cots[:, c] < 0
        obtuse_other = (cots < 0).any(axis=1) & ~obtuse_here
        a = np.where(obtuse_here, fa / 2, np.where(obtuse_other, fa / 4, vor))
        np.add.at(out, i, a)
    return out


def cotan_laplacian(mesh: TriMesh):
    """``(L, mass)`` with ``L_ij = (cot a + cot b) / 2`` and zero row sums.

    ``(L @ f)[i]`` is the integrated Laplacian at vertex ``i``; dividing by
    ``mass`` gives the pointwise estimate.  Cached on the mesh.
    """
    if "cotan" not in mesh._cache:
        T = mesh.triangles
        cots = _corner_cotangents(mesh)
        rows, cols, vals = [], [], []
        for c in range(3):
            j, k = T[:, (c + 1) % 3], T[:, (c + 2) % 3]
            w = 0.5 * cots[:, c]
            rows += [j, k]
            cols += [k, j]
            vals += [w, w]
        n = mesh.n_vertices
        W = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        L = W - sparse.diags(np.asarray(W.sum(axis=1)).ravel())
        mesh._cache["cotan"] = (L.tocsr(), mixed_area(mesh))
    return mesh._cache["cotan"]


def laplacian_apply(mesh: TriMesh, values) -> np.ndarray:
    """Pointwise Laplace-Beltrami estimate of a per-vertex field (scalar or vector).

    Assembled as ``sum_j w_ij (f_j - f_i)`` so constants map to exactly zero.
    """
    L, m = cotan_laplacian(mesh)
    if "cotan_coo" not in mesh._cache:
        C = L.tocoo()
        off = C.row != C.col
        mesh._cache["cotan_coo"] = (C.row[off], C.col[off], C.data[off])
    i, j, w = mesh._cache["cotan_coo"]
    f = np.asarray(values, dtype=float)
    n = mesh.n_vertices
    d = f[j] - f[i]
    if f.ndim == 2:
        out = np.stack([np.bincount(i, w * d[:, k], minlength=n) for k in range(f.shape[1])], axis=1)
        return out / m[:, None]
    return np.bincount(i, w * d, minlength=n) / m


def angle_weighted_normals(mesh: TriMesh) -> np.ndarray:
    V, T = mesh.vertices, mesh.triangles
    fn = _unit(mesh.face_vectors())
    n = len(V)
    acc = np.zeros_like(V)
    for c in range(3):
        i, j, k = T[:, c], T[:, (c + 1) % 3], T[:, (c + 2) % 3]
        u, w = _unit(V[j] - V[i]), _unit(V[k] - V[i])
        ang = np.arccos(np.clip(np.einsum("ij,ij->i", u, w), -1, 1))
        for d in range(3):
            acc[:, d] += np.bincount(i, ang * fn[:, d], minlength=n)
    return _unit(acc)


# ---------------------------------------------------------------------------
# local polynomial fits


def _tangent_frame(n):
    helper = np.array([1.0, 0, 0]) if abs(n[0]) < 0.9 else np.array([0, 1.0, 0])
    eu = _unit(helper - np.dot(helper, n) * n)
    return eu, np.cross(n, eu)


def _design(u, v, cubic):
    cols = [u, v, 0.5 * u * u, u * v, 0.5 * v * v]
    if cubic:
        cols += [u**3, u * u * v, u * v * v, v**3]
    return np.stack(cols, axis=1)


def fit_height(p0, pts, normal, cubic=False, passes=2):
    """Least-squares height-function fit ``w(u, v)`` around ``p0``.

    Returns ``(n_fit, eu, ev, coef)`` where ``coef[2:5]`` are the second
    derivatives ``(w_uu, w_uv, w_vv)`` in the frame of the fitted normal.
    """
    n = normal
    for _ in range(passes):
        eu, ev = _tangent_frame(n)
        d = pts - p0
        u, v, w = d @ eu, d @ ev, d @ n
        coef, *_ = np.linalg.lstsq(_design(u, v, cubic), w, rcond=None)
        n = _unit(n - coef[0] * eu - coef[1] * ev)
    eu, ev = _tangent_frame(n)
    d = pts - p0
    coef, *_ = np.linalg.lstsq(_design(d @ eu, d @ ev, cubic), d @ n, rcond=None)
    return n, eu, ev, coef


def _neighborhood(mesh, i, k):
    R = mesh.rings(k)
    return R.indices[R.indptr[i] : R.indptr[i + 1]]


def shape_operators(mesh: TriMesh, normals: np.ndarray, boundary_cubic: bool = True):
    """Per-vertex ``A`` (ambient 3x3, zero on the normal) from height-function fits.

    Interior vertices fit a quadric over the 2-ring.  Near the boundary (the
    2-ring touches it) the stencil is one-sided; with ``boundary_cubic`` those
    vertices fit a cubic over the 3-ring when it has at least 12 points, which
    removes the O(h) bias of one-sided quadrics.
    """
    V = mesh.vertices
    n = mesh.n_vertices
    A = np.zeros((n, 3, 3))
    nfit = np.zeros((n, 3))
    for i in range(n):
        nb = _neighborhood(mesh, i, 2)
        if len(nb) < 5:
            raise InsufficientNeighborhood(f"vertex {i} has {len(nb)} neighbors in its 2-ring")
        cubic = False
        if boundary_cubic and (mesh.is_boundary[i] or mesh.is_boundary[nb].any()):
            nb3 = _neighborhood(mesh, i, 3)
            if len(nb3) >= 12:
                nb, cubic = nb3, True
        nf, eu, ev, coef = fit_height(V[i], V[nb], normals[i], cubic=cubic)
        a, b, c = coef[2], coef[3], coef[4]
        A[i] = -(a * np.outer(eu, eu) + b * (np.outer(eu, ev) + np.outer(ev, eu)) + c * np.outer(ev, ev))
        nfit[i] = nf
    return A, nfit


def boundary_fit_normals(mesh: TriMesh, normals: np.ndarray) -> np.ndarray:
    """Fitted normals at boundary vertices only (rows follow ``concatenate(boundary_loops)``).

    Cheap enough to call inside iterative loops; same fit as ``shape_operators``.
    """
    V = mesh.vertices
    ids = np.concatenate(mesh.boundary_loops) if mesh.boundary_loops else np.zeros(0, np.int64)
    out = np.zeros((len(ids), 3))
    for r, i in enumerate(ids):
        nb = _neighborhood(mesh, i, 3)
        cubic = len(nb) >= 12
        if not cubic:
            nb = _neighborhood(mesh, i, 2)
        out[r] = fit_height(V[i], V[nb], normals[i], cubic=cubic)[0]
    return out


def tangent_gradient(mesh: TriMesh, normals: np.ndarray, values: np.ndarray, ring: int = 2):
    """Surface gradient of a per-vertex field by local quadratic fits.

    ``values`` of shape ``(n,)`` gives ``(n, 3)``; shape ``(n, d)`` gives the
    tangent Jacobian ``(n, d, 3)`` with rows ``grad values[:, j]``.
    """
    V = mesh.vertices
    f = np.asarray(values, dtype=float)
    vec = f.ndim == 2
    F = f if vec else f[:, None]
    out = np.zeros((mesh.n_vertices, F.shape[1], 3))
    for i in range(mesh.n_vertices):
        nb = _neighborhood(mesh, i, ring)
        eu, ev = _tangent_frame(normals[i])
        d = V[nb] - V[i]
        u, v = d @ eu, d @ ev
        X = np.stack([u, v, 0.5 * u * u, u * v, 0.5 * v * v], axis=1)
        coef, *_ = np.linalg.lstsq(X, F[nb] - F[i], rcond=None)
        out[i] = np.outer(coef[0], eu) + np.outer(coef[1], ev)
    return out if vec else out[:, 0, :]


# ---------------------------------------------------------------------------
# geometry bundle


@dataclass
class DiscreteGeometry:
    vertex_area: np.ndarray
    normal: np.ndarray
    mean_curvature: np.ndarray
    shape_operator: np.ndarray | None
    norm_A_sq: np.ndarray | None
    fit_normal: np.ndarray | None
    is_boundary: np.ndarray
    boundary_ids: np.ndarray
    boundary_loop: np.ndarray
    conormal: np.ndarray
    line_element: np.ndarray
    tangent: np.ndarray
    curve_curvature: np.ndarray
    laplace_x: np.ndarray

    @property
    def H(self):
        return self.mean_curvature

    def boundary_slot(self) -> np.ndarray:
        """Map vertex id -> row in the boundary arrays (-1 if interior)."""
        slot = np.full(len(self.is_boundary), -1, dtype=np.int64)
        slot[self.boundary_ids] = np.arange(len(self.boundary_ids))
        return slot


def _boundary_data(mesh: TriMesh, normals: np.ndarray):
    V = mesh.vertices
    ids = np.concatenate(mesh.boundary_loops) if mesh.boundary_loops else np.zeros(0, np.int64)
    loop = np.concatenate([np.full(len(lp), k) for k, lp in enumerate(mesh.boundary_loops)]) \
        if mesh.boundary_loops else np.zeros(0, np.int64)
    slot = np.full(mesh.n_vertices, -1, dtype=np.int64)
    slot[ids] = np.arange(len(ids))

    # outward in-plane normals of the boundary edges, accumulated at both ends
    fn = mesh.face_vectors()
    bmask = mesh.edge_count[mesh._directed_edge] == 1
    d = mesh._directed[bmask]
    f = mesh._face_of[bmask]
    t = V[d[:, 1]] - V[d[:, 0]]
    en = _unit(np.cross(t, fn[f]))
    acc = np.zeros((len(ids), 3))
    np.add.at(acc, slot[d[:, 0]], en)
    np.add.at(acc, slot[d[:, 1]], en)
    nb = normals[ids]
    acc -= np.einsum("ij,ij->i", acc, nb)[:, None] * nb
    conormal = _unit(acc)

    line = np.zeros(len(ids))
    tangent = np.zeros((len(ids), 3))
    kvec = np.zeros((len(ids), 3))
    start = 0
    for lp in mesh.boundary_loops:
        P = V[lp]
        nxt, prv = np.roll(P, -1, axis=0), np.roll(P, 1, axis=0)
        lf = np.linalg.norm(nxt - P, axis=1)
        lb = np.linalg.norm(P - prv, axis=1)
        tf, tb = (nxt - P) / lf[:, None], (P - prv) / lb[:, None]
        sl = slice(start, start + len(lp))
        line[sl] = 0.5 * (lf + lb)
        tangent[sl] = _unit(tf + tb)
        kvec[sl] = 2 * (tf - tb) / (lf + lb)[:, None]
        start += len(lp)
    return ids, loop, conormal, line, tangent, kvec


def compute_geometry(mesh: TriMesh, fit_shape: bool = True, boundary_cubic: bool = True) -> DiscreteGeometry:
    """All per-vertex quantities used downstream.

    Interior ``H`` comes from the cotan mean-curvature vector,
    ``Delta x = -2 H N``; boundary ``H`` from the trace of the fitted shape
    operator (the boundary cotan row is not a consistent Laplacian).
    """
    L, mass = cotan_laplacian(mesh)
    N = angle_weighted_normals(mesh)
    lx = (L @ mesh.vertices) / mass[:, None]
    H = -0.5 * np.einsum("ij,ij->i", lx, N)
    A = nA2 = nfit = None
    if fit_shape:
        A, nfit = shape_operators(mesh, N, boundary_cubic=boundary_cubic)
        nA2 = np.einsum("nij,nji->n", A, A)
        b = mesh.is_boundary
        H = H.copy()
        H[b] = 0.5 * np.trace(A[b], axis1=1, axis2=2)
    ids, loop, conormal, line, tangent, kvec = _boundary_data(mesh, N)
    return DiscreteGeometry(
        vertex_area=mass,
        normal=N,
        mean_curvature=H,
        shape_operator=A,
        norm_A_sq=nA2,
        fit_normal=nfit,
        is_boundary=mesh.is_boundary,
        boundary_ids=ids,
        boundary_loop=loop,
        conormal=conormal,
        line_element=line,
        tangent=tangent,
        curve_curvature=kvec,
        laplace_x=lx,
    )


# ---------------------------------------------------------------------------
# quadrature


def integrate_surface(mesh: TriMesh, geom: DiscreteGeometry, values) -> float:
    f = np.broadcast_to(np.asarray(values, dtype=float), (mesh.n_vertices,))
    return float(np.dot(geom.vertex_area, f))


def integrate_boundary(mesh: TriMesh, geom: DiscreteGeometry, values) -> float:
    """Lumped line integral; ``values`` per boundary vertex (in ``boundary_ids``
    order) or per mesh vertex."""
    f = np.asarray(values, dtype=float)
    if f.ndim == 0:
        f = np.full(len(geom.boundary_ids), float(f))
    elif len(f) == mesh.n_vertices and len(f) != len(geom.boundary_ids):
        f = f[geom.boundary_ids]
    return float(np.dot(geom.line_element, f))


# ---------------------------------------------------------------------------
# boundary frame


@dataclass
class BoundaryFrame:
    ids: np.ndarray
    loop: np.ndarray
    conormal: np.ndarray
    domain_normal: np.ndarray
    grad_norm: np.ndarray
    normal_dot: np.ndarray
    xT: np.ndarray
    xT_norm: np.ndarray
    AxT: np.ndarray
    lam: np.ndarray
    tau: np.ndarray
    tau_curve: np.ndarray
    H: np.ndarray
    degenerate: np.ndarray

    @property
    def angle_defect(self) -> float:
        return float(np.max(np.abs(self.normal_dot))) if len(self.ids) else 0.0


def boundary_frame(mesh: TriMesh, geom: DiscreteGeometry, domain, tol: float = 1e-6) -> BoundaryFrame:
    """Boundary analysis in the frame ``{boundary tangent, x^T}``.

    ``lam = <A x^T, x^T> / |x^T|^2``; ``tau = 2H - lam``.  ``tau_curve`` is an
    independent estimate: ``-<k, n_S>`` with ``k`` the curvature vector of the
    boundary polyline and ``n_S`` the unit normal of the curve inside the
    domain boundary, oriented along ``N`` (same sign as ``A(t, t)``).
    """
    if geom.shape_operator is None:
        raise ValueError("boundary_frame needs a geometry computed with fit_shape=True")
    ids = geom.boundary_ids
    X = mesh.vertices[ids]
    F, g, _ = domain.evaluate(X)
    off = np.abs(F - 1)
    if np.any(off > tol):
        raise ValueError(f"boundary vertex off the domain boundary by |F-1|={off.max():.3e}")
    gn = np.linalg.norm(g, axis=1)
    if np.any(gn < 1e-12):
        raise DegenerateGradient("|grad F| vanishes at a boundary vertex")
    Nbar = g / gn[:, None]
    # the fitted normal is the frame A lives in and is O(h^2) at the boundary,
    # where the one-sided angle-weighted average is only O(h)
    N = geom.fit_normal[ids]
    A = geom.shape_operator[ids]
    xT = X - np.einsum("ij,ij->i", X, N)[:, None] * N
    xn = np.linalg.norm(xT, axis=1)
    degenerate = xn < XT_DEGENERATE
    AxT = np.einsum("nij,nj->ni", A, xT)
    lam = np.where(degenerate, np.nan, np.einsum("ij,ij->i", AxT, xT) / np.where(degenerate, 1, xn**2))
    H = geom.mean_curvature[ids]
    nS = _unit(np.cross(Nbar, geom.tangent))
    nS *= np.sign(np.einsum("ij,ij->i", nS, N))[:, None]
    tau_curve = -np.einsum("ij,ij->i", geom.curve_curvature, nS)
    return BoundaryFrame(
        ids=ids,
        loop=geom.boundary_loop,
        conormal=geom.conormal,
        domain_normal=Nbar,
        grad_norm=gn,
        normal_dot=np.einsum("ij,ij->i", N, Nbar),
        xT=xT,
        xT_norm=xn,
        AxT=AxT,
        lam=lam,
        tau=2 * H - lam,
        tau_curve=tau_curve,
        H=H,
        degenerate=degenerate,
    )


def geodesic_curvature_in_surface(geom: DiscreteGeometry) -> np.ndarray:
    """``k_g`` of the boundary inside the surface, positive when it bends inward."""
    return -np.einsum("ij,ij->i", geom.curve_curvature, geom.conormal)


def export_csv(path, mesh: TriMesh, geom: DiscreteGeometry, frame: BoundaryFrame | None = None):
    slot = geom.boundary_slot()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", "area", "Nx", "Ny", "Nz", "H", "normA2", "boundary",
                    "nux", "nuy", "nuz", "lambda", "tau", "N_dot_Nbar"])
        for i in range(mesh.n_vertices):
            s = slot[i]
            row = [i, geom.vertex_area[i], *geom.normal[i], geom.mean_curvature[i],
                   "" if geom.norm_A_sq is None else geom.norm_A_sq[i], int(geom.is_boundary[i])]
            if s >= 0:
                row += list(geom.conormal[s])
                if frame is not None:
                    row += [frame.lam[s], frame.tau[s], frame.normal_dot[s]]
                else:
                    row += ["", "", ""]
            else:
                row += [""] * 6
            w.writerow(row)
