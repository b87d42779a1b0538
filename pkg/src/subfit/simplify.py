"""Quadric error metric (Garland-Heckbert) edge-collapse simplification.

Each vertex carries the sum of the squared-distance quadrics of its incident
face planes; boundary edges add a heavily weighted plane perpendicular to
their face. Edges are collapsed cheapest first from a lazily invalidated
priority queue. Collapses that change topology, create duplicate faces or
flip a face normal are refused.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass

import numpy as np

from .mesh import MeshError, TriMesh, build_adjacency

logger = logging.getLogger(__name__)

BOUNDARY_WEIGHT = 1000.0
DET_RTOL = 1e-12

# upper triangle of a symmetric 4x4 quadric, row-major
_TRIU = [(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3)]


class InvalidTargetError(MeshError):
    pass


class TargetUnreachableError(MeshError):
    """No legal collapse remains above the requested vertex count.

    ``mesh`` holds the simplification reached so far.
    """

    def __init__(self, message, mesh=None):
        super().__init__(message)
        self.mesh = mesh


@dataclass(frozen=True)
class CollapseCandidate:
    cost: float
    position: tuple
    edge: tuple | None = None


def plane_quadrics(positions, faces):
    """Per-face plane quadrics ``p p^T`` with ``p = (n, -n.x0)``, shape (F, 4, 4).

    Degenerate faces get a zero quadric.
    """
    P = np.asarray(positions, dtype=np.float64)
    F = np.asarray(faces, dtype=np.int64)
    nrm = np.cross(P[F[:, 1]] - P[F[:, 0]], P[F[:, 2]] - P[F[:, 0]])
    length = np.linalg.norm(nrm, axis=1)
    ok = length > 0
    unit = np.zeros_like(nrm)
    unit[ok] = nrm[ok] / length[ok, None]
    p = np.column_stack([unit, -(unit * P[F[:, 0]]).sum(axis=1)])
    return p[:, :, None] * p[:, None, :]


def vertex_quadrics(mesh: TriMesh, boundary_weight=BOUNDARY_WEIGHT):
    """Accumulated quadric of every vertex, shape (n, 4, 4)."""
    P, F = mesh.positions, mesh.faces
    Q = np.zeros((mesh.n_vertices, 4, 4))
    if mesh.n_faces == 0:
        return Q
    K = plane_quadrics(P, F)
    for c in range(3):
        np.add.at(Q, F[:, c], K)

    adj = build_adjacency(mesh)
    be = np.flatnonzero(adj.boundary_edge)
    if len(be):
        area = 0.5 * np.linalg.norm(
            np.cross(P[F[:, 1]] - P[F[:, 0]], P[F[:, 2]] - P[F[:, 0]]), axis=1)
        w = boundary_weight * area.mean()
        a, b = adj.edges[be, 0], adj.edges[be, 1]
        f = adj.edge_faces[be, 0]
        fn = np.cross(P[F[f, 1]] - P[F[f, 0]], P[F[f, 2]] - P[F[f, 0]])
        m = np.cross(P[b] - P[a], fn)
        length = np.linalg.norm(m, axis=1)
        ok = length > 0
        m = m[ok] / length[ok, None]
        a, b = a[ok], b[ok]
        p = np.column_stack([m, -(m * P[a]).sum(axis=1)])
        Kb = w * (p[:, :, None] * p[:, None, :])
        np.add.at(Q, a, Kb)
        np.add.at(Q, b, Kb)
    return Q


def _to_tuple(Q):
    return tuple(float(Q[i, j]) for i, j in _TRIU)


def _from_tuple(q):
    Q = np.empty((4, 4))
    for val, (i, j) in zip(q, _TRIU):
        Q[i, j] = Q[j, i] = val
    return Q


def _qadd(q1, q2):
    return tuple(a + b for a, b in zip(q1, q2))


def _qeval(q, x, y, z):
    a00, a01, a02, a03, a11, a12, a13, a22, a23, a33 = q
    return (a00 * x * x + a11 * y * y + a22 * z * z + a33
            + 2.0 * (a01 * x * y + a02 * x * z + a12 * y * z
                     + a03 * x + a13 * y + a23 * z))


def _best_position(q, p1, p2):
    a00, a01, a02, a03, a11, a12, a13, a22, a23, a33 = q
    # minimise over x: A x = -b
    c00 = a11 * a22 - a12 * a12
    c01 = a02 * a12 - a01 * a22
    c02 = a01 * a12 - a02 * a11
    det = a00 * c00 + a01 * c01 + a02 * c02
    scale = max(abs(a00), abs(a01), abs(a02), abs(a11), abs(a12), abs(a22))
    if scale > 0 and abs(det) > DET_RTOL * scale ** 3:
        c11 = a00 * a22 - a02 * a02
        c12 = a01 * a02 - a00 * a12
        c22 = a00 * a11 - a01 * a01
        x = -(c00 * a03 + c01 * a13 + c02 * a23) / det
        y = -(c01 * a03 + c11 * a13 + c12 * a23) / det
        z = -(c02 * a03 + c12 * a13 + c22 * a23) / det
        if math.isfinite(x) and math.isfinite(y) and math.isfinite(z):
            return max(_qeval(q, x, y, z), 0.0), (x, y, z)
    mid = (0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1]), 0.5 * (p1[2] + p2[2]))
    best = None
    for cand in (tuple(p1), tuple(p2), mid):
        c = max(_qeval(q, *cand), 0.0)
        if best is None or c < best[0]:
            best = (c, cand)
    return best


def collapse_cost(q1, q2, p1, p2) -> CollapseCandidate:
    """Cost and position of merging two vertices with quadrics ``q1``, ``q2``.

    The position minimises the summed quadric when its 3x3 block is
    invertible, otherwise it is the cheapest of the two endpoints
    ``p1``, ``p2`` and their midpoint.
    """
    q = _qadd(_to_tuple(np.asarray(q1)), _to_tuple(np.asarray(q2)))
    cost, pos = _best_position(q, tuple(map(float, p1)), tuple(map(float, p2)))
    return CollapseCandidate(cost, pos)


def _normal(a, b, c):
    ux, uy, uz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    vx, vy, vz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    return (uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx)


class _Simplifier:
    def __init__(self, mesh: TriMesh, boundary_weight):
        adj = build_adjacency(mesh)
        self.pos = [tuple(p) for p in mesh.positions.tolist()]
        self.faces = [list(f) for f in mesh.faces.tolist()]
        self.face_alive = [True] * len(self.faces)
        n = mesh.n_vertices
        self.alive = [True] * n
        self.n_alive = n
        self.boundary = adj.boundary_vertex.tolist()
        self.vfaces = [set() for _ in range(n)]
        for fi, f in enumerate(self.faces):
            for v in f:
                self.vfaces[v].add(fi)
        self.nbrs = [set(r) for r in adj.rings]
        Q = vertex_quadrics(mesh, boundary_weight)
        self.Q = [_to_tuple(q) for q in Q]
        self.version = {}
        self.heap = []
        self.rejected = set()
        for a, b in adj.edges.tolist():
            self._push(a, b)

    def _push(self, a, b):
        if a > b:
            a, b = b, a
        ver = self.version.get((a, b), 0) + 1
        self.version[(a, b)] = ver
        cost, x = _best_position(_qadd(self.Q[a], self.Q[b]), self.pos[a], self.pos[b])
        heapq.heappush(self.heap, (cost, a, b, ver, x))

    def _legal(self, u, v, x):
        shared = self.vfaces[u] & self.vfaces[v]
        if not shared:
            return False
        opposite = set()
        for fi in shared:
            opposite.update(self.faces[fi])
        opposite -= {u, v}
        if (self.nbrs[u] & self.nbrs[v]) != opposite:
            return False
        if len(shared) == 2 and self.boundary[u] and self.boundary[v]:
            return False
        if self.n_alive - 1 < 4 or len((self.nbrs[u] | self.nbrs[v]) - {u, v}) < 3:
            return False

        pos = self.pos
        seen = set()
        for fi in (self.vfaces[u] | self.vfaces[v]) - shared:
            f = self.faces[fi]
            before = _normal(pos[f[0]], pos[f[1]], pos[f[2]])
            moved = [x if w == u or w == v else pos[w] for w in f]
            after = _normal(*moved)
            if (before[0] * after[0] + before[1] * after[1] + before[2] * after[2]) <= 0.0:
                return False
            key = frozenset(u if w == v else w for w in f)
            if key in seen:
                return False
            seen.add(key)
        return True

    def _collapse(self, u, v, x):
        shared = self.vfaces[u] & self.vfaces[v]
        for fi in shared:
            self.face_alive[fi] = False
            for w in self.faces[fi]:
                self.vfaces[w].discard(fi)
        for fi in self.vfaces[v]:
            f = self.faces[fi]
            f[f.index(v)] = u
            self.vfaces[u].add(fi)
        self.vfaces[v] = set()
        for w in self.nbrs[v]:
            self.nbrs[w].discard(v)
            if w != u:
                self.nbrs[w].add(u)
                self.nbrs[u].add(w)
        self.nbrs[v] = set()
        self.pos[u] = x
        self.Q[u] = _qadd(self.Q[u], self.Q[v])
        self.boundary[u] = self.boundary[u] or self.boundary[v]
        self.alive[v] = False
        self.n_alive -= 1
        for w in self.nbrs[u]:
            self._push(u, w)

    def run(self, target, log):
        while self.n_alive > target:
            if not self.heap:
                if not self.rejected:
                    break
                retry, self.rejected = self.rejected, set()
                for a, b in sorted(retry):
                    if self.alive[a] and self.alive[b] and b in self.nbrs[a]:
                        self._push(a, b)
                if not self.heap:
                    break
                # a full retry pass that collapses nothing ends the run
                before = self.n_alive
                self._drain(target, log)
                if self.n_alive == before:
                    break
                continue
            self._drain(target, log)

    def _drain(self, target, log):
        while self.heap and self.n_alive > target:
            cost, a, b, ver, x = heapq.heappop(self.heap)
            if not (self.alive[a] and self.alive[b]) or self.version.get((a, b)) != ver:
                continue
            if b not in self.nbrs[a]:
                continue
            if not self._legal(a, b, x):
                self.rejected.add((a, b))
                continue
            self.rejected.discard((a, b))
            if log is not None:
                log.append((a, b, cost))
            self._collapse(a, b, x)

    def result(self):
        keep = [i for i, a in enumerate(self.alive) if a]
        remap = {old: new for new, old in enumerate(keep)}
        positions = np.array([self.pos[i] for i in keep], dtype=np.float64)
        faces = [[remap[w] for w in f] for f, a in zip(self.faces, self.face_alive) if a]
        return TriMesh(positions, np.array(faces, dtype=np.int64).reshape(-1, 3))


def qem_simplify(mesh: TriMesh, target_vertex_count: int, *,
                 boundary_weight=BOUNDARY_WEIGHT, collapse_log=None) -> TriMesh:
    """Collapse edges of ``mesh`` until it has ``target_vertex_count`` vertices.

    Surviving vertices keep their relative order. ``collapse_log``, if given,
    receives one ``(kept, removed, cost)`` tuple per executed collapse, indices
    referring to the input mesh.

    Raises
    ------
    InvalidTargetError
        target below 4 or above the input vertex count.
    TargetUnreachableError
        legal collapses ran out first; the partial result is attached.
    """
    if target_vertex_count < 4:
        raise InvalidTargetError(f"target vertex count must be at least 4, got {target_vertex_count}")
    if target_vertex_count > mesh.n_vertices:
        raise InvalidTargetError(
            f"target {target_vertex_count} exceeds the {mesh.n_vertices} input vertices")
    if target_vertex_count == mesh.n_vertices:
        build_adjacency(mesh)
        return mesh
    s = _Simplifier(mesh, boundary_weight)
    s.run(target_vertex_count, collapse_log)
    out = s.result()
    if out.n_vertices > target_vertex_count:
        raise TargetUnreachableError(
            f"no legal collapse left at {out.n_vertices} vertices "
            f"(target {target_vertex_count})", out)
    logger.debug("simplified %d -> %d vertices", mesh.n_vertices, out.n_vertices)
    return out
