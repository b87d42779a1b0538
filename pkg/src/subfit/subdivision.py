"""Loop subdivision with explicit coefficient tracking.

Every refined vertex is stored as a sparse affine combination of the
vertices one level up, so after ``k`` levels each vertex of the fine mesh is
a known combination of the control points::

    foot_points = C @ control_points

Interior masks follow Loop's original weights, boundary curves use the cubic
B-spline masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh, build_adjacency


def loop_beta(valence):
    """Neighbour weight of an interior vertex of the given valence."""
    n = np.asarray(valence, dtype=np.float64)
    return (5.0 / 8.0 - (3.0 / 8.0 + 0.25 * np.cos(2.0 * np.pi / n)) ** 2) / n


class SparseRowMatrix:
    """Row-compressed non-negative coefficient matrix.

    Thin wrapper over a canonical ``scipy.sparse.csr_matrix`` (sorted, unique
    column indices per row).
    """

    def __init__(self, matrix):
        csr = sp.csr_matrix(matrix, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        self._csr = csr

    @classmethod
    def identity(cls, n):
        return cls(sp.identity(n, dtype=np.float64, format="csr"))

    @classmethod
    def from_rows(cls, rows, n_cols):
        """Build from a list of ``[(col, coeff), ...]`` per row."""
        indptr = [0]
        indices, data = [], []
        for row in rows:
            for col, coeff in row:
                indices.append(col)
                data.append(coeff)
            indptr.append(len(indices))
        return cls(sp.csr_matrix((data, indices, indptr), shape=(len(rows), n_cols)))

    @property
    def csr(self):
        return self._csr

    @property
    def shape(self):
        return self._csr.shape

    @property
    def n_rows(self):
        return self._csr.shape[0]

    @property
    def n_cols(self):
        return self._csr.shape[1]

    @property
    def nnz(self):
        return self._csr.nnz

    def row(self, j):
        lo, hi = self._csr.indptr[j], self._csr.indptr[j + 1]
        return self._csr.indices[lo:hi], self._csr.data[lo:hi]

    def row_sums(self):
        return np.asarray(self._csr.sum(axis=1)).ravel()

    def column_sums(self):
        return np.asarray(self._csr.sum(axis=0)).ravel()

    def row_support(self):
        return np.diff(self._csr.indptr)

    def take_rows(self, rows):
        """Row subset as a plain CSR matrix."""
        return self._csr[rows]

    def compose(self, other):
        """``self @ other`` as a new SparseRowMatrix."""
        return SparseRowMatrix(self._csr @ other.csr)

    def dot(self, x):
        return self._csr @ x

    def toarray(self):
        return self._csr.toarray()

    def save_text(self, path):
        """Write ``row col coeff`` triples, one per line."""
        coo = self._csr.tocoo()
        with open(path, "w", newline="\n") as f:
            f.writelines(f"{r} {c} {v:.17g}\n"
                         for r, c, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))


@dataclass(frozen=True)
class SubdivisionResult:
    mesh: TriMesh
    one_step_matrix: SparseRowMatrix


def _one_step(mesh: TriMesh):
    adj = build_adjacency(mesh)
    n, E = mesh.n_vertices, adj.n_edges
    edges = adj.edges
    boundary_edge = adj.boundary_edge
    interior_edge = ~boundary_edge

    rows, cols, vals = [], [], []

    # edge points
    erow = n + np.arange(E)
    ie = np.flatnonzero(interior_edge)
    be = np.flatnonzero(boundary_edge)
    for end in (0, 1):
        rows += [erow[ie], erow[be]]
        cols += [edges[ie, end], edges[be, end]]
        vals += [np.full(len(ie), 3.0 / 8.0), np.full(len(be), 0.5)]
    for side in (0, 1):
        rows.append(erow[ie])
        cols.append(adj.edge_opposite[ie, side])
        vals.append(np.full(len(ie), 1.0 / 8.0))

    # old vertices
    valence = adj.valence
    bv = adj.boundary_vertex
    isolated = valence == 0
    interior_v = ~bv & ~isolated
    beta = np.zeros(n)
    beta[interior_v] = loop_beta(valence[interior_v])
    self_w = np.ones(n)
    self_w[interior_v] = 1.0 - valence[interior_v] * beta[interior_v]
    self_w[bv] = 0.75
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(self_w)

    for a_col, b_col in ((0, 1), (1, 0)):
        a, b = edges[:, a_col], edges[:, b_col]
        # interior vertex a takes beta from every neighbour
        m = interior_v[a]
        rows.append(a[m])
        cols.append(b[m])
        vals.append(beta[a[m]])
        # boundary vertex a takes 1/8 from its two boundary neighbours
        m = bv[a] & boundary_edge
        rows.append(a[m])
        cols.append(b[m])
        vals.append(np.full(int(m.sum()), 1.0 / 8.0))

    S = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n + E, n))
    S = SparseRowMatrix(S)

    fe = adj.face_edges + n
    f = mesh.faces
    m01, m12, m20 = fe[:, 0], fe[:, 1], fe[:, 2]
    # children of face i occupy rows 4i .. 4i+3
    new_faces = np.stack([
        np.stack([f[:, 0], m01, m20], axis=1),
        np.stack([f[:, 1], m12, m01], axis=1),
        np.stack([f[:, 2], m20, m12], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ], axis=1).reshape(-1, 3)
    return S, new_faces


def subdivide_once(mesh: TriMesh) -> SubdivisionResult:
    """One Loop step: 1-to-4 face split plus the (V+E) x V stencil matrix."""
    S, faces = _one_step(mesh)
    return SubdivisionResult(TriMesh(S.dot(mesh.positions), faces), S)


def subdivide_k(mesh: TriMesh, k: int):
    """Subdivide ``k`` times.

    Returns the fine mesh and the composed matrix ``C = S_k ... S_1`` of
    shape (n_k, n_0).
    """
    if k < 0:
        raise ValueError(f"subdivision level must be non-negative, got {k}")
    C = SparseRowMatrix.identity(mesh.n_vertices)
    current = mesh
    for _ in range(k):
        S, faces = _one_step(current)
        C = S.compose(C)
        current = TriMesh(S.dot(current.positions), faces)
    return TriMesh(C.dot(mesh.positions), current.faces), C


def evaluate_foot_points(C: SparseRowMatrix, control_positions):
    """Fine-mesh vertex positions ``C @ control_positions``."""
    V = np.asarray(control_positions, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] != C.n_cols:
        raise ValueError(
            f"coefficient matrix has {C.n_cols} columns but {V.shape[0]} control points were given")
    return C.dot(V)


def subdivided_counts(n_vertices, n_edges, n_faces, k):
    """(V, E, F) after ``k`` steps on a closed mesh."""
    V, E, F = n_vertices, n_edges, n_faces
    for _ in range(k):
        V, E, F = V + E, 2 * E + 3 * F, 4 * F
    return V, E, F
