"""Procedural test models.

Small closed and open meshes for tests, plus a dense lumpy sphere that
stands in for scanned models at desk scale.
"""

import numpy as np
from scipy.spatial import ConvexHull, Delaunay

from .mesh import TriMesh, unique_edges
from .subdivision import _one_step


def tetrahedron():
    positions = [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]
    faces = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]
    return TriMesh(positions, faces)


def cube():
    """Unit cube with two triangles per side (8 vertices, 12 faces)."""
    positions = [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)]
    quads = [
        (0, 1, 3, 2),  # x = 0
        (4, 6, 7, 5),  # x = 1
        (0, 4, 5, 1),  # y = 0
        (2, 3, 7, 6),  # y = 1
        (0, 2, 6, 4),  # z = 0
        (1, 5, 7, 3),  # z = 1
    ]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return TriMesh(positions, faces)


def planar_grid(nx, ny, size=1.0):
    """Triangulated square in the z=0 plane with ``nx * ny`` vertices."""
    xs = np.linspace(0.0, size, nx)
    ys = np.linspace(0.0, size, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    positions = np.stack([X.ravel(), Y.ravel(), np.zeros(nx * ny)], axis=1)
    idx = np.arange(nx * ny).reshape(nx, ny)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    faces = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return TriMesh(positions, faces)


def icosahedron():
    t = (1.0 + 5 ** 0.5) / 2.0
    positions = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    positions /= np.linalg.norm(positions, axis=1, keepdims=True)
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    return TriMesh(positions, faces)


def icosphere(level):
    """Unit icosphere with ``10 * 4**level + 2`` vertices."""
    mesh = icosahedron()
    for _ in range(level):
        n = mesh.n_vertices
        S, faces = _one_step(mesh)
        # midpoint split: keep old vertices, put edge points at edge midpoints
        pos = np.empty((S.n_rows, 3))
        pos[:n] = mesh.positions
        edges = unique_edges(mesh.faces)
        pos[n:] = 0.5 * (mesh.positions[edges[:, 0]] + mesh.positions[edges[:, 1]])
        pos /= np.linalg.norm(pos, axis=1, keepdims=True)
        mesh = TriMesh(pos, faces)
    return mesh


def lumpy_sphere(level=6, seed=7, n_bumps=9):
    """Icosphere radially displaced by a fixed set of smooth Gaussian bumps.

    ``level=6`` gives 40,962 vertices, the size of a typical scanned model.
    """
    rng = np.random.default_rng(seed)
    sphere = icosphere(level)
    dirs = rng.normal(size=(n_bumps, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    heights = rng.uniform(-0.25, 0.45, size=n_bumps)
    widths = rng.uniform(0.25, 0.6, size=n_bumps)
    u = sphere.positions
    cosang = u @ dirs.T
    r = 1.0 + (heights * np.exp(-(1.0 - cosang) / widths ** 2)).sum(axis=1)
    # anisotropic stretch so the model has no spherical symmetry
    positions = u * r[:, None] * np.array([1.3, 1.0, 0.8])
    return TriMesh(positions, sphere.faces)


def torus(n_major=24, n_minor=12, R=1.0, r=0.35):
    i, j = np.meshgrid(np.arange(n_major), np.arange(n_minor), indexing="ij")
    u = 2 * np.pi * i.ravel() / n_major
    v = 2 * np.pi * j.ravel() / n_minor
    positions = np.stack([(R + r * np.cos(v)) * np.cos(u),
                          (R + r * np.cos(v)) * np.sin(u),
                          r * np.sin(v)], axis=1)
    idx = np.arange(n_major * n_minor).reshape(n_major, n_minor)
    a = idx
    b = np.roll(idx, -1, axis=0)
    c = np.roll(b, -1, axis=1)
    d = np.roll(idx, -1, axis=1)
    faces = np.concatenate([np.stack([a.ravel(), b.ravel(), c.ravel()], 1),
                            np.stack([a.ravel(), c.ravel(), d.ravel()], 1)])
    return TriMesh(positions, faces)


def random_sphere_mesh(n, rng):
    """Closed genus-0 mesh: convex hull of ``n`` random points on a jittered sphere."""
    rng = np.random.default_rng(rng)
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    hull = ConvexHull(u)
    faces = hull.simplices.copy()
    normals = np.cross(u[faces[:, 1]] - u[faces[:, 0]], u[faces[:, 2]] - u[faces[:, 0]])
    flip = (normals * u[faces].mean(axis=1)).sum(axis=1) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    radii = rng.uniform(0.8, 1.2, size=n)
    return TriMesh(u * radii[:, None], faces)


def random_disk_mesh(n, rng):
    """Open mesh with one boundary loop: Delaunay triangulation of a random height field."""
    rng = np.random.default_rng(rng)
    xy = rng.uniform(-1, 1, size=(n, 2))
    tri = Delaunay(xy)
    faces = tri.simplices.copy()
    e1 = xy[faces[:, 1]] - xy[faces[:, 0]]
    e2 = xy[faces[:, 2]] - xy[faces[:, 0]]
    flip = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    z = 0.3 * np.sin(2 * xy[:, 0]) * np.cos(3 * xy[:, 1]) + rng.normal(scale=0.02, size=n)
    return TriMesh(np.column_stack([xy, z]), faces)
