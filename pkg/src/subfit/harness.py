"""Experiment driver: single fits, sample-rate sweeps and steps-to-error runs.

Every run writes plain CSV (17 significant digits, LF line endings) and OBJ
files into an output directory:

``M0.obj``          initial control mesh from simplification
``M0_fitted.obj``   control mesh after fitting
``Mk.obj``          fitted subdivision surface
``trace.csv``       iteration, batch_rms, full_rms, batch_size
``timing.csv``      per-iteration phase seconds and cumulative seconds
``summary.csv``     one summary row

``trace.csv`` holds no wall-clock values, so identical inputs and seeds
reproduce it byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fitter import PHASES, FitConfig, FitResult, derive_seed, prepare, run_iterations
from .mesh import TriMesh, load_obj, save_obj

logger = logging.getLogger(__name__)

SWEEP_VARIABLES = ("none", "sample_rate", "control_count")
STOP_MODES = ("config", "iterations", "reference_error")


@dataclass
class ExperimentSpec:
    input_path: str | os.PathLike
    config: FitConfig
    output_dir: str | os.PathLike
    sweep: str = "none"
    sweep_values: list = field(default_factory=list)
    stop_mode: str = "config"
    reference_iterations: list = field(default_factory=lambda: [30, 50])
    repeats: int = 1
    model_name: str | None = None

    def __post_init__(self):
        if self.sweep not in SWEEP_VARIABLES:
            raise ValueError(f"sweep must be one of {SWEEP_VARIABLES}")
        if self.stop_mode not in STOP_MODES:
            raise ValueError(f"stop_mode must be one of {STOP_MODES}")
        if self.sweep != "none":
            if not self.sweep_values:
                raise ValueError("sweep values must be non-empty")
            for v in self.sweep_values:
                key = "sample_rate" if self.sweep == "sample_rate" else "control_count"
                dataclasses.replace(self.config, **{key: v})  # validates the range
        if self.repeats < 1:
            raise ValueError("repeats must be positive")
        if self.model_name is None:
            self.model_name = Path(self.input_path).stem


@dataclass(frozen=True)
class SummaryRow:
    model: str
    original_vertices: int
    control_vertices: int
    subdivision_times: int
    final_full_rms: float
    qem_pct: float
    loop_pct: float
    iteration_pct: float
    total_seconds: float

    @property
    def overhead_pct(self):
        return 100.0 - self.qem_pct - self.loop_pct - self.iteration_pct


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else f"{float(x):.17g}"
    return "" if x is None else str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def summarize(model, data_mesh: TriMesh, config: FitConfig, result: FitResult, total_seconds):
    pct = lambda s: 100.0 * s / total_seconds if total_seconds > 0 else 0.0
    return SummaryRow(
        model=model,
        original_vertices=data_mesh.n_vertices,
        control_vertices=result.control_mesh.n_vertices,
        subdivision_times=config.subdivision_levels,
        final_full_rms=result.final_full_rms,
        qem_pct=pct(result.qem_seconds),
        loop_pct=pct(result.loop_seconds),
        iteration_pct=pct(result.iteration_seconds),
        total_seconds=total_seconds,
    )


SUMMARY_HEADER = [f.name for f in dataclasses.fields(SummaryRow)]


def write_run(out_dir, result: FitResult, summary: SummaryRow | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_obj(result.initial_control_mesh, out / "M0.obj")
    save_obj(result.control_mesh, out / "M0_fitted.obj")
    save_obj(result.fine_mesh, out / "Mk.obj")
    tr = result.trace
    write_csv(out / "trace.csv", ["iteration", "batch_rms", "full_rms", "batch_size"],
              zip(tr.iteration, tr.batch_rms, tr.full_rms, tr.batch_size))
    write_csv(out / "timing.csv", ["iteration", *PHASES, "elapsed"],
              zip(tr.iteration, *(tr.phase_seconds[p] for p in PHASES), tr.elapsed))
    if summary is not None:
        write_csv(out / "summary.csv", SUMMARY_HEADER, [dataclasses.astuple(summary)])


def _stopping_config(spec: ExperimentSpec, config):
    # "iterations" runs exactly max_iterations steps
    if spec.stop_mode == "iterations":
        return dataclasses.replace(config, epsilon=0.0)
    return config


def run_fit(spec: ExperimentSpec):
    """One fit of ``spec.input_path``; returns (SummaryRow, FitResult)."""
    mesh = load_obj(spec.input_path)
    config = _stopping_config(spec, spec.config)
    start = time.perf_counter()
    setup = prepare(mesh, config)
    result = run_iterations(setup, config, record_full=config.error_mode == "full")
    total = time.perf_counter() - start
    summary = summarize(spec.model_name, mesh, config, result, total)
    write_run(spec.output_dir, result, summary)
    return summary, result


def _rate_label(index, rate):
    return f"r{rate:g}_{index}"


def run_rate_sweep(spec: ExperimentSpec, mesh: TriMesh | None = None):
    """Fit once per sample rate (and repeat) from one shared initial control mesh.

    Every run records the full RMS each iteration. Writes one subdirectory per
    run plus ``sweep.csv`` (one full-RMS column per run) and ``summary.csv``.
    Returns ``{label: FitResult}`` in sweep order.
    """
    if spec.sweep != "sample_rate" or len(spec.sweep_values) < 1:
        raise ValueError("rate sweep needs sweep='sample_rate' and a list of rates")
    if mesh is None:
        mesh = load_obj(spec.input_path)
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = spec.config
    t0 = time.perf_counter()
    setup = prepare(mesh, base)
    shared_seconds = time.perf_counter() - t0

    results = {}
    summaries = []
    k = 0
    for rep in range(spec.repeats):
        for rate in spec.sweep_values:
            label = _rate_label(k, rate)
            config = _stopping_config(spec, dataclasses.replace(
                base, sample_rate=rate, rng_seed=derive_seed(base.rng_seed, k)))
            res = run_iterations(setup, config, record_full=True)
            total = shared_seconds + res.iteration_seconds
            summary = summarize(f"{spec.model_name}:{label}", mesh, config, res, total)
            write_run(out / f"rate_{label}", res, summary)
            results[label] = res
            summaries.append(summary)
            logger.info("rate %g (run %d): full RMS %.6g", rate, k, res.final_full_rms)
            k += 1

    labels = list(results)
    length = max(len(r.trace) for r in results.values())
    rows = []
    for i in range(length):
        row = [i + 1]
        for lab in labels:
            fr = results[lab].trace.full_rms
            row.append(fr[i] if i < len(fr) else math.nan)
        rows.append(row)
    write_csv(out / "sweep.csv", ["iteration", *labels], rows)
    write_csv(out / "summary.csv", SUMMARY_HEADER, [dataclasses.astuple(s) for s in summaries])
    return results


@dataclass(frozen=True)
class StepsRow:
    sample_rate: float
    run: int
    seed: int
    reference_iteration: int | None
    reference_error: float
    steps: int
    seconds: float
    reached: bool


def first_reaching(errors, target):
    """1-based index of the first error <= target, or None."""
    hits = np.flatnonzero(np.asarray(errors, dtype=float) <= target)
    return int(hits[0]) + 1 if len(hits) else None


def run_steps_to_error(spec: ExperimentSpec, reference_errors=None, mesh: TriMesh | None = None):
    """Steps and seconds each sample rate needs to reach preset full-RMS errors.

    Without ``reference_errors`` a full-batch run provides them: its full RMS
    at each of ``spec.reference_iterations``. Every rate then iterates (up to
    ``config.max_iterations``) until the smallest reference is reached.
    Writes ``steps.csv`` and returns the list of :class:`StepsRow`.
    """
    if spec.sweep != "sample_rate":
        raise ValueError("steps-to-error needs sweep='sample_rate' and a list of rates")
    if mesh is None:
        mesh = load_obj(spec.input_path)
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = dataclasses.replace(spec.config, epsilon=0.0)
    setup = prepare(mesh, base)

    ref_iters = [None] * (len(reference_errors) if reference_errors is not None else 0)
    if reference_errors is None:
        ref_iters = list(spec.reference_iterations)
        ref_cfg = dataclasses.replace(base, sample_rate=100.0,
                                      max_iterations=max(max(ref_iters), base.freeze_after))
        ref = run_iterations(setup, ref_cfg, record_full=True)
        reference_errors = [ref.trace.full_rms[t - 1] for t in ref_iters]
        write_csv(out / "reference.csv", ["iteration", "full_rms"],
                  zip(ref_iters, reference_errors))
    goal = min(reference_errors)

    rows = []
    k = 0
    for rep in range(spec.repeats):
        for rate in spec.sweep_values:
            seed = derive_seed(base.rng_seed, k)
            config = dataclasses.replace(base, sample_rate=rate, rng_seed=seed)
            res = run_iterations(setup, config, record_full=True, target_error=goal)
            for it, err in zip(ref_iters, reference_errors):
                t = first_reaching(res.trace.full_rms, err)
                reached = t is not None
                if not reached:
                    t = len(res.trace)
                rows.append(StepsRow(rate, k, seed, it, err, t, res.trace.elapsed[t - 1], reached))
                if not reached:
                    logger.warning("rate %g did not reach %.6g within %d iterations",
                                   rate, err, config.max_iterations)
            k += 1
    write_csv(out / "steps.csv", [f.name for f in dataclasses.fields(StepsRow)],
              [dataclasses.astuple(r) for r in rows])
    return rows


def run_control_sweep(spec: ExperimentSpec):
    """One :func:`run_fit` per control-point count, each in its own subdirectory."""
    if spec.sweep != "control_count":
        raise ValueError("control sweep needs sweep='control_count'")
    rows = []
    for n0 in spec.sweep_values:
        sub = dataclasses.replace(spec, sweep="none", sweep_values=[],
                                  config=dataclasses.replace(spec.config, control_count=n0),
                                  output_dir=Path(spec.output_dir) / f"n0_{n0}")
        summary, _ = run_fit(sub)
        rows.append(summary)
    write_csv(Path(spec.output_dir) / "summary.csv", SUMMARY_HEADER,
              [dataclasses.astuple(s) for s in rows])
    return rows
