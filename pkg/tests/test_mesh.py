import numpy as np
import pytest

from fbms.domains import Ball
from fbms.errors import NonTriangularFace, ParseError
from fbms.mesh import TriMesh, load_obj, refine, save_obj, validate
from fbms.reference import cylinder_annulus, disk_mesh

TRI = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


def test_single_triangle_valid():
    assert validate(TRI) == []
    assert len(TRI.boundary_loops) == 1
    assert TRI.euler_characteristic() == 1


def test_orientation_mismatch():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], [[0, 1, 2], [1, 3, 2]])
    assert validate(m) == []
    bad = TriMesh(m.vertices, [[0, 1, 2], [1, 2, 3]])
    kinds = [(v.kind, v.simplex) for v in validate(bad)]
    assert ("OrientationMismatch", (1, 2)) in kinds


def test_degenerate_triangle():
    m = TriMesh([[0, 0, 0], [1, 0, 0]], [[0, 0, 1]])
    assert [v.kind for v in validate(m)] == ["DegenerateTriangle"]
    assert validate(m)[0].simplex == (0,)


def test_refine_one_triangle():
    r = refine(TRI)
    assert r.n_triangles == 4
    assert r.n_vertices == 6
    assert validate(r) == []


def test_refine_disk_projects_boundary():
    m = disk_mesh(5)  # 150 triangles
    r = refine(m, Ball())
    assert r.n_triangles == 4 * m.n_triangles
    nb = r.boundary_vertices()
    np.testing.assert_allclose(np.linalg.norm(r.vertices[nb], axis=1), 1.0, atol=1e-12)
    assert r.euler_characteristic() == 1
    assert validate(r) == []


def test_refine_annulus_keeps_loops():
    a = cylinder_annulus(0.9, -0.4, 0.4, 16, 4)
    assert a.euler_characteristic() == 0
    r = refine(a)
    assert len(r.boundary_loops) == 2
    assert r.euler_characteristic() == 0
    assert validate(r) == []


def test_boundary_loops_deterministic():
    a = cylinder_annulus(0.9, -0.4, 0.4, 16, 4)
    loops = a.boundary_loops
    assert [lp[0] for lp in loops] == sorted(lp.min() for lp in loops)
    assert all(lp[0] == lp.min() for lp in loops)
    # traversal follows triangle orientation: each consecutive pair is a directed boundary edge
    bset = {tuple(e) for e in a.boundary_edges.tolist()}
    for lp in loops:
        assert all((int(i), int(j)) in bset for i, j in zip(lp, np.roll(lp, -1)))


def test_obj_roundtrip(tmp_path):
    p = tmp_path / "tri.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    m = load_obj(p)
    assert m.n_triangles == 1 and m.n_vertices == 3
    d = disk_mesh(3)
    save_obj(d, tmp_path / "d.obj")
    back = load_obj(tmp_path / "d.obj")
    np.testing.assert_array_equal(back.vertices, d.vertices)
    np.testing.assert_array_equal(back.triangles, d.triangles)


def test_obj_errors(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(NonTriangularFace) as ei:
        load_obj(p)
    assert ei.value.line == 5
    p.write_text("v 0 0 0\nv 1 x 0\n")
    with pytest.raises(ParseError) as ei:
        load_obj(p)
    assert ei.value.line == 2
