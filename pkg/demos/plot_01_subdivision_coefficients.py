"""
Loop subdivision as a matrix
============================

Every vertex of a subdivided mesh is a fixed weighted average of the
control points. This script builds that matrix for a tetrahedron and looks
at a few of its rows.
"""

import numpy as np

from subfit import models
from subfit.subdivision import evaluate_foot_points, subdivide_k

# %%
# One step on a tetrahedron: 4 old vertices plus 6 edge points.
tetra = models.tetrahedron()
fine, C = subdivide_k(tetra, 1)
print(fine.n_vertices, "vertices,", fine.n_faces, "faces")
print(np.round(C.toarray(), 4))

# %%
# Rows are convex weights, so the refined surface stays inside the hull of
# the control points and moves rigidly with them.
_, C3 = subdivide_k(tetra, 3)
print("row sums in", C3.row_sums().min(), "..", C3.row_sums().max())
shift = np.array([1.0, 2.0, 3.0])
moved = evaluate_foot_points(C3, tetra.positions + shift)
print("translation error", np.abs(moved - C3.dot(tetra.positions) - shift).max())

# %%
# Column sums say how much each control point is pulled on. Their maximum
# fixes the step size of the fitting iteration.
print("column sums", C3.column_sums())
print("step size", 1.0 / C3.column_sums().max())

# %%
# A 400-point sphere after three levels, the size used for fitting.
ctrl = models.random_sphere_mesh(400, 0)
fine, C = subdivide_k(ctrl, 3)
print(ctrl.n_vertices, "->", fine.n_vertices, "vertices,", C.nnz, "stored coefficients")
