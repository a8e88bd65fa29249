"""Oriented triangle meshes with boundary loops, validation, refinement and OBJ I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NonTriangularFace, ParseError

DEGENERACY_FACTOR = 1e-14


@dataclass(frozen=True)
class Violation:
    kind: str
    simplex: tuple
    message: str = ""

    def __str__(self):
        return f"{self.kind}{self.simplex}" + (f": {self.message}" if self.message else "")


class TriMesh:
    """Indexed triangle list.  Derived tables are built once at construction.

    ``edges`` holds each undirected edge once as a sorted pair; ``edge_faces``
    lists the triangles bordering it.  Boundary loops follow the orientation
    of their triangles and are ordered by their lowest vertex index, each loop
    starting at that vertex.
    """

    def __init__(self, vertices, triangles):
        V = np.array(vertices, dtype=float).reshape(-1, 3)
        T = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if T.size and (T.min() < 0 or T.max() >= len(V)):
            raise ValueError("triangle references a vertex index out of range")
        V.setflags(write=False)
        T.setflags(write=False)
        self.vertices = V
        self.triangles = T
        self._cache: dict = {}
        self._build_tables()

    # -- derived tables -----------------------------------------------------

    def _build_tables(self):
        T = self.triangles
        directed = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
        face_of = np.tile(np.arange(len(T)), 3)
        und = np.sort(directed, axis=1)
        edges, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        self.edges = edges
        self.edge_count = counts
        self.face_edges = inv.reshape(3, -1).T
        self._directed = directed
        self._directed_edge = inv
        self._face_of = face_of

        bmask = counts[inv] == 1
        bdir = directed[bmask]
        self.boundary_edges = bdir
        is_b = np.zeros(len(self.vertices), dtype=bool)
        is_b[bdir.ravel()] = True
        self.is_boundary = is_b
        is_b.setflags(write=False)
        self.boundary_loops = self._extract_loops(bdir)

    @staticmethod
    def _extract_loops(bdir: np.ndarray) -> list[np.ndarray]:
        nxt: dict[int, int] = {}
        for i, j in bdir:
            nxt.setdefault(int(i), int(j))
        unvisited = set(nxt)
        loops = []
        while unvisited:
            start = min(unvisited)
            loop = [start]
            unvisited.discard(start)
            v = nxt[start]
            while v != start and v in unvisited:
                loop.append(v)
                unvisited.discard(v)
                v = nxt.get(v, start)
            loops.append(np.array(loop, dtype=np.int64))
        loops.sort(key=lambda lp: int(lp.min()))
        return loops

    # -- basic quantities ---------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def face_vectors(self):
        V, T = self.vertices, self.triangles
        return np.cross(V[T[:, 1]] - V[T[:, 0]], V[T[:, 2]] - V[T[:, 0]])

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_vectors(), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def edge_lengths(self) -> np.ndarray:
        V = self.vertices
        return np.linalg.norm(V[self.edges[:, 1]] - V[self.edges[:, 0]], axis=1)

    def mean_edge_length(self) -> float:
        return float(self.edge_lengths().mean())

    def bbox_diagonal(self) -> float:
        V = self.vertices
        return float(np.linalg.norm(V.max(axis=0) - V.min(axis=0)))

    def diameter(self) -> float:
        """Twice the largest distance from the centroid (cheap diameter bound)."""
        V = self.vertices
        return float(2 * np.linalg.norm(V - V.mean(axis=0), axis=1).max())

    def euler_characteristic(self) -> int:
        used = np.unique(self.triangles)
        return int(len(used) - len(self.edges) + len(self.triangles))

    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary)

    def boundary_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.is_boundary)

    def adjacency(self):
        """Symmetric vertex adjacency as a CSR matrix (cached)."""
        if "adj" not in self._cache:
            from scipy import sparse

            e = self.edges
            n = self.n_vertices
            data = np.ones(2 * len(e))
            A = sparse.csr_matrix(
                (data, (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
                shape=(n, n),
            )
            A.data[:] = 1.0
            self._cache["adj"] = A
        return self._cache["adj"]

    def neighbors(self, i: int) -> np.ndarray:
        A = self.adjacency()
        return A.indices[A.indptr[i] : A.indptr[i + 1]]

    def rings(self, k: int):
        """CSR pattern of the k-ring of every vertex (vertex itself excluded)."""
        key = ("ring", k)
        if key not in self._cache:
            from scipy import sparse

            A = self.adjacency()
            I = sparse.identity(self.n_vertices, format="csr")
            R = A + I
            P = R
            for _ in range(k - 1):
                P = P @ R
            P = P.tocsr()
            P.setdiag(0)
            P.eliminate_zeros()
            P.sort_indices()
            self._cache[key] = P
        return self._cache[key]

    def loop_of_vertex(self) -> np.ndarray:
        """Per-vertex index of its boundary loop, -1 for interior vertices."""
        out = np.full(self.n_vertices, -1, dtype=np.int64)
        for k, lp in enumerate(self.boundary_loops):
            out[lp] = k
        return out

    def with_vertices(self, vertices) -> "TriMesh":
        """Same connectivity, new positions."""
        m = TriMesh.__new__(TriMesh)
        V = np.array(vertices, dtype=float).reshape(self.vertices.shape)
        V.setflags(write=False)
        m.vertices = V
        m.triangles = self.triangles
        m._cache = {k: v for k, v in self._cache.items() if k == "adj" or (isinstance(k, tuple) and k[0] == "ring")}
        for name in (
            "edges", "edge_count", "face_edges", "_directed", "_directed_edge", "_face_of",
            "boundary_edges", "is_boundary", "boundary_loops",
        ):
            setattr(m, name, getattr(self, name))
        return m

    def __repr__(self):
        return (
            f"TriMesh(V={self.n_vertices}, F={self.n_triangles}, "
            f"loops={len(self.boundary_loops)})"
        )


# ---------------------------------------------------------------------------
# validation


def validate(mesh: TriMesh) -> list[Violation]:
    """Check the manifold, orientation, loop and non-degeneracy invariants."""
    out: list[Violation] = []
    T = mesh.triangles
    for f, (i, j, k) in enumerate(T):
        if i == j or j == k or i == k:
            out.append(Violation("DegenerateTriangle", (f,), "repeated vertex"))

    for e in np.flatnonzero(mesh.edge_count > 2):
        out.append(Violation("NonManifoldEdge", tuple(int(v) for v in mesh.edges[e]),
                             f"{mesh.edge_count[e]} triangles"))

    # orientation: the two directed copies of an interior edge must be opposite
    directed = mesh._directed
    inv = mesh._directed_edge
    interior = np.flatnonzero(mesh.edge_count == 2)
    order = np.argsort(inv, kind="stable")
    starts = np.searchsorted(inv[order], interior)
    for e, s in zip(interior, starts):
        d0, d1 = directed[order[s]], directed[order[s + 1]]
        if d0[0] == d1[0]:
            out.append(Violation("OrientationMismatch", tuple(int(v) for v in mesh.edges[e])))

    diag2 = mesh.bbox_diagonal() ** 2
    areas = mesh.face_areas()
    for f in np.flatnonzero(areas <= DEGENERACY_FACTOR * diag2):
        if not any(v.kind == "DegenerateTriangle" and v.simplex == (int(f),) for v in out):
            out.append(Violation("DegenerateTriangle", (int(f),), f"area {areas[f]:.3e}"))

    n_bedges = len(mesh.boundary_edges)
    n_loop_edges = sum(len(lp) for lp in mesh.boundary_loops)
    if n_loop_edges != n_bedges:
        out.append(Violation("BoundaryLoopMismatch", (), f"{n_bedges} boundary edges, "
                             f"{n_loop_edges} covered by loops"))
    else:
        bset = {(int(i), int(j)) for i, j in mesh.boundary_edges}
        for k, lp in enumerate(mesh.boundary_loops):
            for a, b in zip(lp, np.roll(lp, -1)):
                if (int(a), int(b)) not in bset:
                    out.append(Violation("BoundaryLoopMismatch", (k,), "loop is not closed"))
                    break
    return out


# ---------------------------------------------------------------------------
# refinement


def refine(mesh: TriMesh, domain=None, snap: Callable | None = None) -> TriMesh:
    """1-to-4 midpoint subdivision.

    ``snap`` (optional) maps new vertex positions onto an underlying smooth
    surface; boundary midpoints are then projected onto ``F = 1`` when a
    domain is given.
    """
    from .domains import project_to_boundary

    V, T = mesh.vertices, mesh.triangles
    E = mesh.edges
    mids = 0.5 * (V[E[:, 0]] + V[E[:, 1]])
    if snap is not None:
        mids = np.asarray(snap(mids), dtype=float)
    bmask = mesh.edge_count == 1
    if domain is not None and np.any(bmask):
        mids[bmask] = project_to_boundary(domain, mids[bmask])
    nv = len(V)
    m = nv + mesh.face_edges  # midpoint vertex ids per face: edges (01, 12, 20)
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    mab, mbc, mca = m[:, 0], m[:, 1], m[:, 2]
    newT = np.concatenate([
        np.stack([a, mab, mca], 1),
        np.stack([mab, b, mbc], 1),
        np.stack([mca, mbc, c], 1),
        np.stack([mab, mbc, mca], 1),
    ])
    return TriMesh(np.vstack([V, mids]), newT)


# ---------------------------------------------------------------------------
# OBJ I/O


def load_obj(path) -> TriMesh:
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            toks = line.split()
            if not toks or toks[0].startswith("#"):
                continue
            if toks[0] == "v":
                if len(toks) < 4:
                    raise ParseError("vertex needs 3 coordinates", lineno)
                try:
                    verts.append([float(t) for t in toks[1:4]])
                except ValueError as exc:
                    raise ParseError(f"bad vertex coordinate: {exc}", lineno) from exc
            elif toks[0] == "f":
                if len(toks) != 4:
                    raise NonTriangularFace(f"face with {len(toks) - 1} vertices", lineno)
                try:
                    idx = [int(t.split("/")[0]) for t in toks[1:]]
                except ValueError as exc:
                    raise ParseError(f"bad face index: {exc}", lineno) from exc
                nv = len(verts)
                idx = [i - 1 if i > 0 else nv + i for i in idx]
                if any(i < 0 or i >= nv for i in idx):
                    raise ParseError("face index out of range", lineno)
                faces.append(idx)
    return TriMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh: TriMesh, path) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {i + 1} {j + 1} {k + 1}" for i, j, k in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")
