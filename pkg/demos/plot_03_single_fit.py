"""
Fitting a subdivision surface
=============================

Simplify, subdivide three times and let the control points follow the
difference vectors between foot points and their nearest data points.
"""

import tempfile
from pathlib import Path

from subfit import models
from subfit.fitter import FitConfig, fit
from subfit.mesh import save_obj

mesh = models.lumpy_sphere(level=5)

# %%
# A 20% batch per iteration, 50 iterations, full RMS recorded for plotting.
config = FitConfig(control_count=200, subdivision_levels=3, sample_rate=20,
                   max_iterations=50, epsilon=0.0, rng_seed=1)
result = fit(mesh, config, record_full=True)

full = result.trace.errors("full")
for t in (0, 4, 9, 24, 49):
    print(f"iteration {t + 1:3d}  batch {result.trace.batch_rms[t]:.5f}  full {full[t]:.5f}")
print("final full RMS", result.final_full_rms)
print(f"QEM {result.qem_seconds:.2f} s, Loop {result.loop_seconds:.2f} s, "
      f"iterations {result.iteration_seconds:.2f} s")

# %%
# The fitted surface and its control mesh are ordinary OBJ files.
out = Path(tempfile.mkdtemp())
save_obj(result.fine_mesh, out / "Mk.obj")
save_obj(result.control_mesh, out / "M0_fitted.obj")
print("wrote", sorted(p.name for p in out.iterdir()), "to", out)
