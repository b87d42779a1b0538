"""Loop subdivision surface fitting by stochastic geometric iteration."""

from .fitter import (
    ErrorTrace,
    FitConfig,
    FitResult,
    FootTargets,
    assign_targets,
    compute_eta,
    fit,
    iterate_once,
    prepare,
    rms_error,
    run_iterations,
    select_batch,
    should_stop,
)
from .mesh import EdgeAdjacency, TriMesh, build_adjacency, load_obj, save_obj
from .simplify import collapse_cost, qem_simplify
from .spatial import UniformGrid, build_grid, nearest, nearest_many
from .subdivision import SparseRowMatrix, evaluate_foot_points, subdivide_k, subdivide_once

__version__ = "0.1.0"
