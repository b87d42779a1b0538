import numpy as np
import pytest

from subfit import models
from subfit.mesh import TriMesh, build_adjacency
from subfit.simplify import (
    InvalidTargetError,
    TargetUnreachableError,
    collapse_cost,
    plane_quadrics,
    qem_simplify,
    vertex_quadrics,
)


def plane_quadric(n, d):
    p = np.array([*n, d], dtype=np.float64)
    return np.outer(p, p)


def test_planar_grid_stays_planar():
    grid = models.planar_grid(12, 12)
    log = []
    out = qem_simplify(grid, 4, collapse_log=log)
    assert out.n_vertices == 4
    assert np.abs(out.positions[:, 2]).max() <= 1e-9
    assert max(c for _, _, c in log) <= 1e-12
    build_adjacency(out)


def test_planar_grid_keeps_outline():
    out = qem_simplify(models.planar_grid(8, 8), 4)
    lo, hi = out.positions[:, :2].min(axis=0), out.positions[:, :2].max(axis=0)
    assert np.allclose(lo, 0.0, atol=1e-9) and np.allclose(hi, 1.0, atol=1e-9)


def test_target_equal_to_input_is_noop(cube):
    assert qem_simplify(cube, 8) is cube


@pytest.mark.parametrize("target", [3, 0, -1, 9])
def test_invalid_targets(cube, target):
    with pytest.raises(InvalidTargetError):
        qem_simplify(cube, target)


def test_optimal_position_on_plane():
    q = plane_quadric([0, 0, 1], 0)
    c = collapse_cost(q, q, [0, 0, 1], [0, 0, -1])
    assert c.position[2] == pytest.approx(0.0, abs=1e-12)
    assert c.cost == pytest.approx(0.0, abs=1e-12)


def test_corner_of_three_planes():
    qa = plane_quadric([1, 0, 0], -1) + plane_quadric([0, 1, 0], -2)
    qb = plane_quadric([0, 0, 1], -3)
    c = collapse_cost(qa, qb, [0, 0, 0], [5, 5, 5])
    assert np.allclose(c.position, [1, 2, 3])
    assert c.cost == pytest.approx(0.0, abs=1e-12)


def test_singular_quadric_falls_back_to_candidates():
    q = plane_quadric([0, 0, 1], 0)  # rank one: no unique minimiser
    p1, p2 = np.array([0.0, 0.0, 2.0]), np.array([1.0, 0.0, 0.0])
    c = collapse_cost(q, np.zeros((4, 4)), p1, p2)
    assert c.position == (1.0, 0.0, 0.0)
    assert c.cost == 0.0
    c = collapse_cost(q, np.zeros((4, 4)), p1, [0.0, 0.0, -1.0])
    assert np.allclose(c.position, [0, 0, 0.5])
    assert c.cost == pytest.approx(0.25)


def test_plane_quadric_measures_squared_distance(tetra):
    K = plane_quadrics(tetra.positions, tetra.faces)
    x = np.array([0.3, -2.0, 1.5, 1.0])
    P, F = tetra.positions, tetra.faces
    for f, Kf in zip(F, K):
        n = np.cross(P[f[1]] - P[f[0]], P[f[2]] - P[f[0]])
        n /= np.linalg.norm(n)
        assert x @ Kf @ x == pytest.approx(np.dot(n, x[:3] - P[f[0]]) ** 2)


def test_vertex_quadrics_vanish_at_vertices(lumpy_small):
    Q = vertex_quadrics(lumpy_small)
    h = np.c_[lumpy_small.positions, np.ones(lumpy_small.n_vertices)]
    vals = np.einsum("ni,nij,nj->n", h, Q, h)
    assert np.abs(vals).max() <= 1e-12


@pytest.mark.parametrize("mesh,target", [
    (models.icosphere(3), 50),
    (models.torus(), 60),
    (models.random_disk_mesh(200, 7), 30),
], ids=["sphere", "torus", "disk"])
def test_topology_preserved(mesh, target):
    out = qem_simplify(mesh, target)
    assert out.n_vertices == target
    assert out.euler_characteristic() == mesh.euler_characteristic()
    assert np.isfinite(out.positions).all()
    adj = build_adjacency(out)
    assert (adj.edge_faces[:, 0] >= 0).all()


def test_collapse_costs_nondecreasing(lumpy_small):
    log = []
    out = qem_simplify(lumpy_small, 100, collapse_log=log)
    assert len(log) == lumpy_small.n_vertices - out.n_vertices
    costs = np.array([c for _, _, c in log])
    assert (costs >= 0).all()
    assert (np.diff(costs) >= -1e-12 * costs.max()).all()


def test_survivors_keep_input_order():
    log = []
    out = qem_simplify(models.icosphere(2), 40, collapse_log=log)
    removed = {b for _, b, _ in log}
    assert all(a < b for a, b, _ in log)
    assert len(removed) == 162 - out.n_vertices


def test_tetrahedron_cannot_shrink(tetra):
    with pytest.raises(InvalidTargetError):
        qem_simplify(tetra, 3)


def test_octahedron_down_to_tetrahedron():
    octa = TriMesh(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
        [[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
         [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]])
    out = qem_simplify(octa, 4)
    assert (out.n_vertices, out.n_faces) == (4, 4)
    assert build_adjacency(out).valence.tolist() == [3, 3, 3, 3]


def test_unreachable_error_keeps_mesh(cube):
    exc = TargetUnreachableError("stuck", cube)
    assert exc.mesh is cube
    assert isinstance(exc, ValueError)
