"""
Sample rate against convergence
===============================

Smaller batches make each iteration cheaper but noisier. Half of the foot
points per step tracks the full-batch curve closely, 5% settles higher.
"""

import tempfile

import numpy as np

from subfit import models
from subfit.fitter import FitConfig
from subfit.harness import ExperimentSpec, read_csv, run_rate_sweep, run_steps_to_error

mesh = models.lumpy_sphere(level=5)
out = tempfile.mkdtemp()

# %%
# All rates share one simplified control mesh. ``sweep.csv`` has one
# full-RMS column per run, ready for any plotting tool.
config = FitConfig(control_count=200, subdivision_levels=3, epsilon=0.0,
                   max_iterations=100, rng_seed=3)
spec = ExperimentSpec("lumpy.obj", config, out, sweep="sample_rate",
                      sweep_values=[100, 50, 20, 5], model_name="lumpy")
results = run_rate_sweep(spec, mesh=mesh)
for label, res in results.items():
    e = res.trace.errors("full")
    print(f"{label:8s} iteration 10 {e[9]:.5f}  iteration 100 {e[99]:.5f}")
print(len(read_csv(f"{out}/sweep.csv")), "rows in sweep.csv")

# %%
# Iterations needed to match the full-batch error after 30 steps. Targets
# are assigned once so all rates chase the same goal.
spec = ExperimentSpec("lumpy.obj", FitConfig(control_count=200, max_iterations=800,
                                             freeze_after=0, epsilon=0.0),
                      f"{out}/steps", sweep="sample_rate", sweep_values=[100, 50, 20, 10],
                      reference_iterations=[30], model_name="lumpy")
rows = run_steps_to_error(spec, mesh=mesh)
for r in rows:
    print(f"r={r.sample_rate:g}%  {r.steps} steps  {r.seconds:.2f} s")
# a little more than 1/r: the smaller step of a small batch is also noisier
print("steps x r/100:", np.round([r.steps * r.sample_rate / 100 for r in rows], 1))
