"""Exact nearest-neighbour search on a uniform grid.

Points are bucketed into ``resolution**3`` cells of their (slightly expanded)
bounding box. A query scans concentric shells of cells around its own cell
and stops once no unscanned cell can hold a closer point, so results always
match an exhaustive scan, ties going to the lowest point index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


class EmptyPointSetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class UniformGrid:
    """Bucketed point set.

    ``order[cell_start[c]:cell_start[c + 1]]`` are the indices of the points in
    flat cell ``c`` (x-major), in increasing index order.
    """

    points: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    resolution: int
    cell_size: np.ndarray
    cell_start: np.ndarray
    order: np.ndarray

    @property
    def slack(self):
        # guards the stopping test against rounding in cell-face coordinates
        return 1e-12 * float(np.abs(self.lo).max() + np.abs(self.hi).max()
                             + self.cell_size.max() * self.resolution)

    def cell_of(self, q):
        return _cell_coords(np.atleast_2d(np.asarray(q, dtype=np.float64)),
                            self.lo, self.cell_size, self.resolution)

    def bucket(self, i, j, k):
        c = (i * self.resolution + j) * self.resolution + k
        return self.order[self.cell_start[c]:self.cell_start[c + 1]]

    def bucket_sizes(self):
        return np.diff(self.cell_start)


def _cell_coords(q, lo, cell_size, res):
    # a point on a cell boundary belongs to the lower cell
    t = (q - lo) / cell_size
    c = np.ceil(t).astype(np.int64) - 1
    return np.clip(c, 0, res - 1)


def build_grid(points, resolution: int = 100) -> UniformGrid:
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise EmptyPointSetError("cannot build a grid over zero points")
    if resolution < 1:
        raise ValueError(f"grid resolution must be positive, got {resolution}")
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if diag == 0.0:
        diag = 1.0
    pad = 1e-9 * diag
    lo = lo - pad
    hi = hi + pad
    cell_size = np.maximum((hi - lo) / resolution, 1e-12 * diag)

    cells = _cell_coords(points, lo, cell_size, resolution)
    flat = (cells[:, 0] * resolution + cells[:, 1]) * resolution + cells[:, 2]
    order = np.argsort(flat, kind="stable").astype(np.int64)
    counts = np.bincount(flat, minlength=resolution ** 3)
    cell_start = np.zeros(resolution ** 3 + 1, dtype=np.int64)
    np.cumsum(counts, out=cell_start[1:])
    return UniformGrid(points, lo, hi, int(resolution), cell_size, cell_start, order)


@numba.njit(cache=True)
def _scan_cell(points, order, cell_start, c, qx, qy, qz, best_d2, best_i):
    for s in range(cell_start[c], cell_start[c + 1]):
        p = order[s]
        dx = points[p, 0] - qx
        dy = points[p, 1] - qy
        dz = points[p, 2] - qz
        d2 = dx * dx + dy * dy + dz * dz
        if d2 < best_d2 or (d2 == best_d2 and p < best_i):
            best_d2 = d2
            best_i = p
    return best_d2, best_i


@numba.njit(cache=True)
def _nearest_one(points, order, cell_start, lo, cell_size, res, slack, qx, qy, qz):
    q = (qx, qy, qz)
    ci = np.empty(3, dtype=np.int64)
    for a in range(3):
        t = (q[a] - lo[a]) / cell_size[a]
        c = np.int64(np.ceil(t)) - 1
        if c < 0:
            c = 0
        if c > res - 1:
            c = res - 1
        ci[a] = c

    best_d2 = np.inf
    best_i = -1
    s = 0
    while True:
        i0 = max(ci[0] - s, 0)
        i1 = min(ci[0] + s, res - 1)
        j0 = max(ci[1] - s, 0)
        j1 = min(ci[1] + s, res - 1)
        k0 = max(ci[2] - s, 0)
        k1 = min(ci[2] + s, res - 1)
        for i in range(i0, i1 + 1):
            edge_i = i == ci[0] - s or i == ci[0] + s
            for j in range(j0, j1 + 1):
                edge_j = j == ci[1] - s or j == ci[1] + s
                if edge_i or edge_j:
                    for k in range(k0, k1 + 1):
                        c = (i * res + j) * res + k
                        best_d2, best_i = _scan_cell(points, order, cell_start, c,
                                                     qx, qy, qz, best_d2, best_i)
                else:
                    # interior of the shell: only the two k-faces are new
                    for k in (ci[2] - s, ci[2] + s):
                        if k0 <= k <= k1:
                            c = (i * res + j) * res + k
                            best_d2, best_i = _scan_cell(points, order, cell_start, c,
                                                         qx, qy, qz, best_d2, best_i)
                            if s == 0:
                                break

        # distance from q to the closest face of the scanned envelope that
        # still has unscanned cells behind it
        covered = True
        bound = np.inf
        lows = (i0, j0, k0)
        highs = (i1, j1, k1)
        for a in range(3):
            if lows[a] > 0:
                covered = False
                d = q[a] - (lo[a] + lows[a] * cell_size[a])
                if d < bound:
                    bound = d
            if highs[a] < res - 1:
                covered = False
                d = (lo[a] + (highs[a] + 1) * cell_size[a]) - q[a]
                if d < bound:
                    bound = d
        if covered:
            break
        # strict: an equally distant point behind the envelope may carry a lower index
        bound -= slack
        if best_i >= 0 and bound > 0 and best_d2 < bound * bound:
            break
        s += 1
    return best_i, best_d2


@numba.njit(cache=True)
def _nearest_many(points, order, cell_start, lo, cell_size, res, slack, queries, out_i, out_d2):
    for n in range(queries.shape[0]):
        i, d2 = _nearest_one(points, order, cell_start, lo, cell_size, res, slack,
                             queries[n, 0], queries[n, 1], queries[n, 2])
        out_i[n] = i
        out_d2[n] = d2


def nearest(grid: UniformGrid, query):
    """Index of the indexed point closest to ``query`` and its distance."""
    q = np.asarray(query, dtype=np.float64).reshape(3)
    i, d2 = _nearest_one(grid.points, grid.order, grid.cell_start, grid.lo,
                         grid.cell_size, grid.resolution, grid.slack, q[0], q[1], q[2])
    return int(i), float(np.sqrt(d2))


def nearest_many(grid: UniformGrid, queries):
    """Vectorised :func:`nearest` over an (m, 3) array; returns (indices, distances)."""
    queries = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
    out_i = np.empty(len(queries), dtype=np.int64)
    out_d2 = np.empty(len(queries), dtype=np.float64)
    _nearest_many(grid.points, grid.order, grid.cell_start, grid.lo, grid.cell_size,
                  grid.resolution, grid.slack, queries, out_i, out_d2)
    return out_i, np.sqrt(out_d2)
