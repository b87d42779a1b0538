"""
Building a control mesh
=======================

The fit starts from a coarse version of the input produced by quadric
edge collapse. Topology is kept, and flat regions collapse for free.
"""

import numpy as np

from subfit import models
from subfit.simplify import qem_simplify

# %%
# A 10k-vertex lumpy sphere down to 300 vertices. The log records every
# collapse with its cost.
mesh = models.lumpy_sphere(level=5)
log = []
coarse = qem_simplify(mesh, 300, collapse_log=log)
costs = np.array([c for _, _, c in log])
print(mesh.n_vertices, "->", coarse.n_vertices, "vertices")
print("Euler characteristic", mesh.euler_characteristic(), "->", coarse.euler_characteristic())
print("first / median / last collapse cost", costs[0], np.median(costs), costs[-1])

# %%
# A flat grid has zero-cost collapses all the way down. Boundary planes
# keep the square outline in place.
grid = models.planar_grid(10, 10)
square = qem_simplify(grid, 4)
print(np.round(square.positions, 12) + 0.0)
