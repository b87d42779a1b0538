"""Indexed triangle meshes, edge adjacency and Wavefront OBJ I/O."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Base class for invalid or unsupported mesh input."""


class ObjParseError(MeshError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class IndexOutOfRangeError(MeshError):
    pass


class EmptyMeshError(MeshError):
    pass


class NonManifoldError(MeshError):
    pass


class OrientationError(MeshError):
    pass


def _canonical_rotation(faces):
    """Rotate each index triple so that its smallest index comes first."""
    if len(faces) == 0:
        return faces.copy()
    shift = np.argmin(faces, axis=1)
    cols = (shift[:, None] + np.arange(3)[None, :]) % 3
    return np.take_along_axis(faces, cols, axis=1)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh with ``positions`` of shape (n, 3) and ``faces`` of shape (m, 3).

    Faces are counter-clockwise vertex-index triples. Both arrays are made
    read-only on construction.
    """

    positions: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1, 3)
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        n = len(pos)
        if len(faces):
            if faces.min() < 0 or faces.max() >= n:
                bad = int(np.flatnonzero((faces < 0).any(1) | (faces >= n).any(1))[0])
                raise IndexOutOfRangeError(
                    f"face {bad} {faces[bad].tolist()} references a vertex outside 0..{n - 1}")
            degenerate = ((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2])
                          | (faces[:, 0] == faces[:, 2]))
            if degenerate.any():
                bad = int(np.flatnonzero(degenerate)[0])
                raise MeshError(f"face {bad} {faces[bad].tolist()} repeats a vertex")
            canon = _canonical_rotation(faces)
            uniq = np.unique(canon, axis=0)
            if len(uniq) != len(faces):
                raise MeshError("mesh contains duplicate faces")
        pos.flags.writeable = False
        faces.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "faces", faces)

    @property
    def n_vertices(self):
        return len(self.positions)

    @property
    def n_faces(self):
        return len(self.faces)

    def with_positions(self, positions):
        return TriMesh(positions, self.faces)

    def translated(self, offset):
        return TriMesh(self.positions + np.asarray(offset, dtype=np.float64), self.faces)

    def bounding_box(self):
        return self.positions.min(axis=0), self.positions.max(axis=0)

    def euler_characteristic(self):
        return self.n_vertices - len(unique_edges(self.faces)) + self.n_faces


def unique_edges(faces):
    """Sorted unique undirected edges of ``faces`` as an (E, 2) array."""
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    he = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    he.sort(axis=1)
    if len(he) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(he, axis=0)


@dataclass(frozen=True, eq=False)
class EdgeAdjacency:
    """Edge and one-ring connectivity of a manifold triangle mesh.

    Attributes
    ----------
    edges : (E, 2) int array
        Undirected edges with ``edges[e, 0] < edges[e, 1]``, lexicographically sorted.
    edge_faces : (E, 2) int array
        Incident faces per edge; the second slot is -1 on boundary edges.
    edge_opposite : (E, 2) int array
        Vertex opposite to the edge in each incident face (-1 where absent).
    face_edges : (F, 3) int array
        Edge ids of face sides (f0 f1), (f1 f2), (f2 f0).
    rings : list of lists
        One-ring of each vertex in cyclic order consistent with face orientation.
        Boundary rings are open chains starting at a boundary neighbour.
    valence : (n,) int array
    boundary_vertex : (n,) bool array
    """

    edges: np.ndarray
    edge_faces: np.ndarray
    edge_opposite: np.ndarray
    face_edges: np.ndarray
    rings: list = field(repr=False)
    valence: np.ndarray
    boundary_vertex: np.ndarray

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def boundary_edge(self):
        return self.edge_faces[:, 1] < 0

    def edge_id(self, a, b):
        """Index of the undirected edge (a, b), or -1."""
        key = (min(a, b), max(a, b))
        lo = np.searchsorted(self.edges[:, 0], key[0], side="left")
        hi = np.searchsorted(self.edges[:, 0], key[0], side="right")
        j = lo + np.searchsorted(self.edges[lo:hi, 1], key[1])
        if j < hi and self.edges[j, 1] == key[1]:
            return int(j)
        return -1


def build_adjacency(mesh: TriMesh) -> EdgeAdjacency:
    """Edge list, incident faces and ordered one-rings of ``mesh``.

    Raises NonManifoldError for edges with more than two incident faces or
    vertices whose incident faces do not form a single fan, and
    OrientationError when two faces traverse a shared edge in the same direction.
    """
    faces = mesh.faces
    n, nf = mesh.n_vertices, mesh.n_faces
    if nf == 0:
        empty = np.zeros((0, 2), dtype=np.int64)
        return EdgeAdjacency(empty, empty.copy(), empty.copy(),
                             np.zeros((0, 3), dtype=np.int64),
                             [[] for _ in range(n)], np.zeros(n, dtype=np.int64),
                             np.zeros(n, dtype=bool))

    # half-edge s of face f runs faces[f, s] -> faces[f, s+1]
    tail = faces.reshape(-1)
    head = faces[:, [1, 2, 0]].reshape(-1)
    opp = faces[:, [2, 0, 1]].reshape(-1)
    face_of = np.repeat(np.arange(nf), 3)

    keys = np.stack([np.minimum(tail, head), np.maximum(tail, head)], axis=1)
    edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if counts.max() > 2:
        e = int(np.argmax(counts))
        raise NonManifoldError(
            f"edge {edges[e].tolist()} has {counts[e]} incident faces")

    directed = tail.astype(np.int64) * n + head
    uniq_dir, dir_counts = np.unique(directed, return_counts=True)
    if dir_counts.max() > 1:
        d = int(uniq_dir[np.argmax(dir_counts)])
        raise OrientationError(
            f"edge ({d // n}, {d % n}) is traversed in the same direction by two faces")

    order = np.argsort(inverse, kind="stable")
    slot = np.zeros(len(order), dtype=np.int64)
    sorted_inv = inverse[order]
    first = np.r_[True, sorted_inv[1:] != sorted_inv[:-1]]
    slot[order[~first]] = 1

    E = len(edges)
    edge_faces = np.full((E, 2), -1, dtype=np.int64)
    edge_opposite = np.full((E, 2), -1, dtype=np.int64)
    edge_faces[inverse, slot] = face_of
    edge_opposite[inverse, slot] = opp
    face_edges = inverse.reshape(nf, 3)

    # link a -> b for every corner (v, a, b)
    nxt = [dict() for _ in range(n)]
    for v, a, b in zip(tail.tolist(), head.tolist(), opp.tolist()):
        nxt[v][a] = b

    rings = []
    boundary_vertex = np.zeros(n, dtype=bool)
    for v in range(n):
        links = nxt[v]
        if not links:
            rings.append([])
            continue
        starts = set(links) - set(links.values())
        if len(starts) > 1:
            raise NonManifoldError(f"vertex {v} joins more than one fan of faces")
        if starts:
            boundary_vertex[v] = True
            cur = starts.pop()
        else:
            cur = min(links)
        ring = [cur]
        start = cur
        while cur in links:
            cur = links[cur]
            if cur == start:
                break
            ring.append(cur)
        expected = len(links) + (1 if boundary_vertex[v] else 0)
        if len(ring) != expected:
            raise NonManifoldError(f"vertex {v} joins more than one fan of faces")
        rings.append(ring)

    valence = np.array([len(r) for r in rings], dtype=np.int64)
    return EdgeAdjacency(edges, edge_faces, edge_opposite, face_edges, rings,
                         valence, boundary_vertex)


def load_obj(path) -> TriMesh:
    """Read the ``v``/``f`` records of a Wavefront OBJ file.

    Polygons are fan-triangulated, ``i/j/k`` references keep only the vertex
    index and negative indices count back from the latest vertex. All other
    record types are skipped.
    """
    positions = []
    faces = []
    face_lines = []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError("vertex record needs three coordinates", lineno)
                try:
                    positions.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise ObjParseError(f"bad vertex coordinate in {line.strip()!r}", lineno)
            elif tag == "f":
                if len(parts) < 4:
                    raise ObjParseError("face record needs at least three vertices", lineno)
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise ObjParseError(f"bad face index {tok!r}", lineno)
                    if i == 0:
                        raise ObjParseError("face index 0 is not valid in OBJ", lineno)
                    idx.append(i - 1 if i > 0 else len(positions) + i)
                for j in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[j], idx[j + 1]))
                    face_lines.append(lineno)

    if not positions:
        raise EmptyMeshError(f"{os.fspath(path)} contains no vertices")
    n = len(positions)
    for tri, lineno in zip(faces, face_lines):
        for i in tri:
            if i < 0 or i >= n:
                raise IndexOutOfRangeError(
                    f"line {lineno}: face index {i + 1} outside 1..{n}")
    return TriMesh(np.array(positions, dtype=np.float64),
                   np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh: TriMesh, path) -> None:
    # 17 significant digits: positions survive the text round trip exactly
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}\n" for x, y, z in mesh.positions.tolist()]
    lines.extend(f"f {a + 1} {b + 1} {c + 1}\n" for a, b, c in mesh.faces.tolist())
    with open(path, "w", newline="\n") as f:
        f.writelines(lines)
