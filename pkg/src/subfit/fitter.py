"""Stochastic geometric iterative fitting of a Loop subdivision surface.

The control points ``V`` (n0 x 3) generate the foot points ``C @ V`` of the
k-times subdivided control mesh. Every iteration draws a random batch of
foot points, takes their difference vectors to the fitting targets, spreads
each one back onto the control points with the weights of its row of ``C``,
and moves every control point by ``eta`` times its accumulated sum.
With a batch of all foot points and frozen targets this is gradient descent
on ``0.5 * ||C V - P*||^2``; smaller batches give its mini-batch variant.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numba
import numpy as np

from .mesh import TriMesh, build_adjacency
from .simplify import qem_simplify
from .spatial import build_grid, nearest_many
from .subdivision import SparseRowMatrix, evaluate_foot_points, subdivide_k

logger = logging.getLogger(__name__)

ERROR_MODES = ("batch", "full")


class ConfigError(ValueError):
    pass


class ZeroColumnError(ValueError):
    pass


class EmptyBatchError(ValueError):
    pass


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters of one fit.

    ``sample_rate`` is a percentage in (0, 100]. Targets are recomputed by
    nearest-neighbour search during the first ``freeze_after`` iterations
    (always at least the first) and kept fixed afterwards. ``epsilon = 0``
    disables the relative-change stopping test.
    """

    control_count: int
    subdivision_levels: int = 3
    sample_rate: float = 100.0
    epsilon: float = 1e-5
    max_iterations: int = 50
    freeze_after: int = 5
    rng_seed: int = 0
    error_mode: str = "batch"
    eta_override: float | None = None
    grid_resolution: int = 100

    def __post_init__(self):
        if not 0 < self.sample_rate <= 100:
            raise ConfigError(f"sample rate must lie in (0, 100], got {self.sample_rate}")
        if self.subdivision_levels < 0:
            raise ConfigError("subdivision levels must be non-negative")
        if self.control_count < 4:
            raise ConfigError("control mesh needs at least 4 vertices")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be positive")
        if not 0 <= self.freeze_after <= self.max_iterations:
            raise ConfigError("freeze_after must lie in [0, max_iterations]")
        if self.error_mode not in ERROR_MODES:
            raise ConfigError(f"error_mode must be one of {ERROR_MODES}")
        if self.eta_override is not None and not self.eta_override > 0:
            raise ConfigError("eta_override must be positive")
        if self.grid_resolution < 1:
            raise ConfigError("grid resolution must be positive")


@dataclass(frozen=True, eq=False)
class FootTargets:
    """Fitting target per foot point.

    ``points[j]`` is the mean of the data points whose nearest foot point is
    ``j``; rows with ``counts[j] == 0`` have no target and hold zeros.
    """

    points: np.ndarray
    counts: np.ndarray

    @property
    def has_target(self):
        return self.counts > 0

    def __len__(self):
        return len(self.counts)


PHASES = ("target_search", "accumulate", "update", "subdivide")


@dataclass
class ErrorTrace:
    iteration: list = field(default_factory=list)
    batch_rms: list = field(default_factory=list)
    full_rms: list = field(default_factory=list)
    batch_size: list = field(default_factory=list)
    phase_seconds: dict = field(default_factory=lambda: {p: [] for p in PHASES})
    elapsed: list = field(default_factory=list)

    def append(self, t, batch_rms, full_rms, batch_size, phases, elapsed):
        self.iteration.append(t)
        self.batch_rms.append(batch_rms)
        self.full_rms.append(full_rms)
        self.batch_size.append(batch_size)
        for p in PHASES:
            self.phase_seconds[p].append(phases.get(p, 0.0))
        self.elapsed.append(elapsed)

    def __len__(self):
        return len(self.iteration)

    def errors(self, mode="batch"):
        return np.array(self.batch_rms if mode == "batch" else self.full_rms, dtype=float)


def assign_targets(data_points, foot_points, grid_resolution: int = 100) -> FootTargets:
    """Average every data point into the target of its nearest foot point."""
    data = np.asarray(data_points, dtype=np.float64).reshape(-1, 3)
    feet = np.asarray(foot_points, dtype=np.float64).reshape(-1, 3)
    if len(data) == 0:
        raise ValueError("no data points")
    grid = build_grid(feet, grid_resolution)
    idx, _ = nearest_many(grid, data)
    counts = np.bincount(idx, minlength=len(feet))
    sums = np.stack([np.bincount(idx, weights=data[:, a], minlength=len(feet))
                     for a in range(3)], axis=1)
    points = np.zeros_like(sums)
    has = counts > 0
    points[has] = sums[has] / counts[has, None]
    return FootTargets(points, counts)


def compute_eta(C: SparseRowMatrix) -> float:
    """Step size: reciprocal of the largest column sum of ``C``."""
    colsum = C.column_sums()
    if len(colsum) == 0:
        raise ZeroColumnError("coefficient matrix has no columns")
    if colsum.min() <= 1e-15:
        i = int(np.argmin(colsum))
        raise ZeroColumnError(f"control point {i} influences no foot point")
    return 1.0 / float(colsum.max())


def batch_size(n_k, sample_rate):
    return math.floor(n_k * sample_rate / 100.0)


@numba.njit(cache=True)
def _partial_shuffle(perm, offsets):
    for i in range(offsets.shape[0]):
        j = i + offsets[i]
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp


def select_batch(n_k: int, sample_rate: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``floor(n_k * r / 100)`` distinct foot-point indices, returned sorted.

    Partial Fisher-Yates: position ``i`` swaps with a uniform pick from
    ``i..n_k-1``. The offsets are drawn in one vectorised call, so the
    generator advances identically for identical arguments.
    """
    m = batch_size(n_k, sample_rate)
    if m < 1:
        raise EmptyBatchError(f"{sample_rate}% of {n_k} foot points selects nothing")
    offsets = rng.integers(0, n_k - np.arange(m, dtype=np.int64))
    perm = np.arange(n_k, dtype=np.int64)
    _partial_shuffle(perm, offsets)
    return np.sort(perm[:m])


def rms_error(deltas, denominator: int) -> float:
    d = np.asarray(deltas, dtype=np.float64).reshape(-1, 3)
    return math.sqrt(float(np.einsum("ij,ij->", d, d)) / denominator)


def residuals(foot_points, targets: FootTargets, rows=None):
    """Difference vectors ``target - foot`` (zero where a foot point has no target)."""
    if rows is None:
        goal, has = targets.points, targets.has_target
    else:
        goal, has = targets.points[rows], targets.has_target[rows]
    return np.where(has[:, None], goal - foot_points, 0.0)


def iterate_once(control_positions, C: SparseRowMatrix, targets: FootTargets, batch, eta,
                 timings=None):
    """One stochastic update on the foot points in ``batch``.

    Returns the moved control points and the batch RMS of the difference
    vectors before the move. ``timings``, if given, accumulates seconds under
    ``subdivide``, ``accumulate`` and ``update``.
    """
    V = np.asarray(control_positions, dtype=np.float64)
    if V.shape != (C.n_cols, 3):
        raise ValueError(f"expected ({C.n_cols}, 3) control points, got {V.shape}")
    if len(targets) != C.n_rows:
        raise ValueError(f"{len(targets)} targets for {C.n_rows} foot points")
    batch = np.asarray(batch, dtype=np.int64)
    if len(batch) == 0:
        raise EmptyBatchError("empty batch")

    t0 = time.perf_counter()
    Cb = C.take_rows(batch)
    feet = Cb @ V
    t1 = time.perf_counter()
    delta = residuals(feet, targets, batch)
    acc = Cb.T @ delta
    t2 = time.perf_counter()
    V_new = V + eta * acc
    t3 = time.perf_counter()
    if timings is not None:
        timings["subdivide"] = timings.get("subdivide", 0.0) + (t1 - t0)
        timings["accumulate"] = timings.get("accumulate", 0.0) + (t2 - t1)
        timings["update"] = timings.get("update", 0.0) + (t3 - t2)
    return V_new, rms_error(delta, len(batch))


def should_stop(e_prev, e_curr, eps0, t, max_iterations) -> bool:
    if t >= max_iterations:
        return True
    if e_prev is None or not e_prev > 0 or eps0 <= 0:
        return False
    return abs(e_curr / e_prev - 1.0) < eps0


def make_rng(seed) -> np.random.Generator:
    """PCG64 stream seeded through a SeedSequence."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def derive_seed(seed, index) -> int:
    """Independent 64-bit seed for the ``index``-th member of a run family."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class FitSetup:
    """Everything fixed before the first iteration."""

    data_mesh: TriMesh
    control_mesh: TriMesh
    fine_faces: np.ndarray
    C: SparseRowMatrix
    eta: float
    qem_seconds: float
    loop_seconds: float


@dataclass(eq=False)
class FitResult:
    control_mesh: TriMesh
    fine_mesh: TriMesh
    C: SparseRowMatrix
    trace: ErrorTrace
    initial_control_mesh: TriMesh
    targets: FootTargets
    eta: float
    final_full_rms: float
    reached_error: bool | None
    qem_seconds: float
    loop_seconds: float
    iteration_seconds: float


def prepare(mesh: TriMesh, config: FitConfig, control_mesh: TriMesh | None = None) -> FitSetup:
    """Simplify ``mesh`` to the initial control mesh and build its coefficient matrix.

    Pass ``control_mesh`` to skip simplification (it must be a valid
    manifold mesh).
    """
    build_adjacency(mesh)
    t0 = time.perf_counter()
    if control_mesh is None:
        control_mesh = qem_simplify(mesh, config.control_count)
    else:
        build_adjacency(control_mesh)
    t1 = time.perf_counter()
    fine, C = subdivide_k(control_mesh, config.subdivision_levels)
    eta = config.eta_override if config.eta_override is not None else compute_eta(C)
    t2 = time.perf_counter()
    return FitSetup(mesh, control_mesh, fine.faces, C, eta, t1 - t0, t2 - t1)


def run_iterations(setup: FitSetup, config: FitConfig, *, record_full=False,
                   target_error=None) -> FitResult:
    """Iterate from ``setup.control_mesh`` under ``config``.

    ``record_full`` evaluates the full RMS at every iteration regardless of
    ``error_mode``. With ``target_error`` the run also stops as soon as the
    monitored error (full RMS when recorded, else the mode's error) drops to
    it; ``FitResult.reached_error`` tells whether that happened.
    """
    C = setup.C
    n_k = C.n_rows
    m = batch_size(n_k, config.sample_rate)
    if m < 1:
        raise EmptyBatchError(f"{config.sample_rate}% of {n_k} foot points selects nothing")
    full_each = record_full or config.error_mode == "full"
    data = setup.data_mesh.positions
    rng = make_rng(config.rng_seed)
    V = setup.control_mesh.positions.copy()
    last_refresh = max(config.freeze_after, 1)

    trace = ErrorTrace()
    targets = None
    e_prev = None
    reached = None if target_error is None else False
    start = time.perf_counter()
    t = 0
    while True:
        t += 1
        phases = {}
        if t <= last_refresh:
            s0 = time.perf_counter()
            feet = evaluate_foot_points(C, V)
            s1 = time.perf_counter()
            targets = assign_targets(data, feet, config.grid_resolution)
            s2 = time.perf_counter()
            phases["subdivide"] = s1 - s0
            phases["target_search"] = s2 - s1

        batch = select_batch(n_k, config.sample_rate, rng)
        full = math.nan
        if full_each:
            s0 = time.perf_counter()
            full = rms_error(residuals(evaluate_foot_points(C, V), targets), n_k)
            phases["subdivide"] = phases.get("subdivide", 0.0) + time.perf_counter() - s0
        V, e_batch = iterate_once(V, C, targets, batch, setup.eta, phases)
        trace.append(t, e_batch, full, len(batch), phases, time.perf_counter() - start)

        e_curr = full if config.error_mode == "full" else e_batch
        if target_error is not None:
            monitored = full if full_each else e_curr
            if monitored <= target_error:
                reached = True
                break
        comparable = t > last_refresh
        if should_stop(e_prev if comparable else None, e_curr, config.epsilon, t,
                       config.max_iterations):
            break
        e_prev = e_curr
    iteration_seconds = time.perf_counter() - start

    feet = evaluate_foot_points(C, V)
    final_full = rms_error(residuals(feet, targets), n_k)
    logger.info("fit stopped after %d iterations, full RMS %.6g", t, final_full)
    return FitResult(
        control_mesh=setup.control_mesh.with_positions(V),
        fine_mesh=TriMesh(feet, setup.fine_faces),
        C=C,
        trace=trace,
        initial_control_mesh=setup.control_mesh,
        targets=targets,
        eta=setup.eta,
        final_full_rms=final_full,
        reached_error=reached,
        qem_seconds=setup.qem_seconds,
        loop_seconds=setup.loop_seconds,
        iteration_seconds=iteration_seconds,
    )


def fit(mesh: TriMesh, config: FitConfig, *, control_mesh: TriMesh | None = None,
        **kwargs) -> FitResult:
    """Simplify, subdivide and iterate: the whole fitting pipeline.

    ``control_mesh`` replaces the simplified initial control mesh; remaining
    keywords go to :func:`run_iterations`.
    """
    return run_iterations(prepare(mesh, config, control_mesh), config, **kwargs)
