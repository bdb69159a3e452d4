import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_grid_template, random_rotation
from sftkit.eigen3 import sym_eigvals3
from sftkit.mesh import (
    MeshError,
    build_template,
    load_template,
    parse_obj,
    save_obj,
    template_eigen,
    vertex_covariance,
)

CHECKER = np.indices((2, 2)).sum(axis=0) % 2
CHECKER_TEX = np.repeat(CHECKER[:, :, None], 3, axis=2).astype(np.float64)


def write_unit_square_obj(path):
    path.write_text(
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
        "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n"
        "f 1/1 2/2 3/3\nf 1/1 3/3 4/4\n"
    )


def test_unit_square_template(tmp_path):
    obj = tmp_path / "square.obj"
    write_unit_square_obj(obj)
    tex = tmp_path / "tex.png"
    from sftkit.imageio import save_rgb

    save_rgb(tex, CHECKER_TEX)
    mesh = load_template(obj, tex)
    assert mesh.num_vertices == 4
    assert mesh.num_faces == 2
    # Edges 1,1,1,1 and the sqrt(2) diagonal: median 1.0.
    assert mesh.delta_hat == pytest.approx(1.0)


def test_single_triangle_ring_sizes(tmp_path):
    obj = tmp_path / "tri.obj"
    obj.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n")
    tex = tmp_path / "tex.png"
    from sftkit.imageio import save_rgb

    save_rgb(tex, CHECKER_TEX)
    mesh = load_template(obj, tex)
    assert all(len(ring) == 2 for ring in mesh.neighborhoods)


def test_quad_face_fan_triangulated(tmp_path):
    obj = tmp_path / "quad.obj"
    obj.write_text(
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
        "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n"
        "f 1/1 2/2 3/3 4/4\n"
    )
    verts, uvs, face_v, face_vt = parse_obj(obj)
    assert len(face_v) == 2
    assert face_v == [[0, 1, 2], [0, 2, 3]]


def test_missing_uvs_rejected(tmp_path):
    obj = tmp_path / "plain.obj"
    obj.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    tex = tmp_path / "tex.png"
    from sftkit.imageio import save_rgb

    save_rgb(tex, CHECKER_TEX)
    with pytest.raises(MeshError, match="not textured"):
        load_template(obj, tex)


def test_zero_area_face_rejected():
    verts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [0, 1, 3]], dtype=np.int32)  # first is collinear
    uvs = np.zeros((2, 3, 2))
    with pytest.raises(MeshError, match="face rejected: index 0"):
        build_template(verts, faces, uvs, CHECKER_TEX)


def test_non_manifold_edge_rejected():
    verts = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0.2], [0.3, 0.4, 1.0]], dtype=float
    )
    faces = np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]], dtype=np.int32)
    uvs = np.zeros((3, 3, 2))
    with pytest.raises(MeshError, match="non-manifold"):
        build_template(verts, faces, uvs, CHECKER_TEX)


def test_vertex_covariance_cross_neighborhood():
    pts = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]], dtype=float)
    cov = vertex_covariance(pts)
    assert np.allclose(cov, np.diag([0.5, 0.5, 0.0]))


def test_vertex_covariance_identical_points():
    pts = np.ones((5, 3))
    assert np.allclose(vertex_covariance(pts), 0.0)


def test_vertex_covariance_degenerate():
    with pytest.raises(MeshError, match="degenerate neighborhood"):
        vertex_covariance(np.array([[1.0, 2.0, 3.0]]))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_vertex_covariance_rotation_equivariant(seed):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((7, 3))
    rot = random_rotation(rng)
    cov = vertex_covariance(pts)
    cov_rot = vertex_covariance(pts @ rot.T)
    assert np.allclose(cov_rot, rot @ cov @ rot.T, atol=1e-10)


def test_template_eigen_diagonal_case():
    assert np.allclose(
        sym_eigvals3(np.diag([0.5, 0.5, 0.0])), [0.5, 0.5, 0.0]
    )


def test_template_eigen_offdiag_case():
    # Characteristic polynomial of [[0,1,0],[1,0,0],[0,0,0]] gives 1, 0, -1.
    c = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    assert np.allclose(sym_eigvals3(c), [1.0, 0.0, -1.0], atol=1e-12)


def test_template_eigen_planar_third_zero():
    mesh = make_grid_template(m=5)
    lam = template_eigen(mesh)
    assert np.all(np.abs(lam[:, 2]) < 1e-12)
    assert np.all(lam[:, 0] >= lam[:, 1])
    assert np.all(lam[:, 1] >= lam[:, 2] - 1e-15)


def test_template_eigen_rigid_motion_invariant(rng):
    mesh = make_grid_template(m=6, bend=0.15)
    lam0 = template_eigen(mesh)
    for _ in range(5):
        rot = random_rotation(rng)
        shift = rng.standard_normal(3)
        moved = mesh.with_vertices(mesh.vertices @ rot.T + shift)
        lam = template_eigen(moved)
        assert np.allclose(lam, lam0, atol=1e-8)


def test_save_obj_round_trip(tmp_path):
    mesh = make_grid_template(m=4, bend=0.1)
    path = tmp_path / "out.obj"
    save_obj(path, mesh, mesh.vertices)
    verts, _, face_v, _ = parse_obj(path)
    assert np.array_equal(np.array(verts), mesh.vertices)
    assert np.array_equal(np.array(face_v), mesh.faces)


def test_border_edges_of_grid():
    mesh = make_grid_template(m=4)
    # 4x4 grid: boundary has 12 edges (3 per side).
    assert mesh.border_edges.shape == (12, 2)
