import numpy as np
import pytest

from oracles import brute_targets, dense_coefficients
from subfit import models
from subfit.fitter import (
    ConfigError,
    EmptyBatchError,
    FitConfig,
    FootTargets,
    ZeroColumnError,
    assign_targets,
    compute_eta,
    derive_seed,
    fit,
    iterate_once,
    make_rng,
    prepare,
    residuals,
    rms_error,
    run_iterations,
    select_batch,
    should_stop,
)
from subfit.subdivision import SparseRowMatrix, evaluate_foot_points, subdivide_k


def frozen_problem(seed, n=30, k=2, noise=0.05):
    """Control mesh, its C, and targets near (not on) the limit surface."""
    ctrl = models.random_sphere_mesh(n, seed)
    fine, C = subdivide_k(ctrl, k)
    rng = np.random.default_rng(seed)
    goal = fine.positions + rng.normal(scale=noise, size=fine.positions.shape)
    return ctrl, C, FootTargets(goal, np.ones(C.n_rows, dtype=np.int64))


# assign_targets

def test_targets_self():
    pts = np.random.default_rng(0).random((40, 3))
    t = assign_targets(pts, pts)
    assert np.array_equal(t.points, pts)
    assert (t.counts == 1).all()
    assert np.abs(residuals(pts, t)).max() == 0.0


def test_targets_mean_of_contributors():
    t = assign_targets([[0, 0, 0], [2, 0, 0]], [[1, 0, 0]])
    assert t.points.tolist() == [[1.0, 0.0, 0.0]]
    assert t.counts.tolist() == [2]


def test_targets_match_brute_force_grouping():
    rng = np.random.default_rng(1)
    data, feet = rng.random((500, 3)), rng.random((50, 3))
    t = assign_targets(data, feet, grid_resolution=7)
    groups = brute_targets(data, feet)
    for j in range(50):
        members = groups.get(j, [])
        assert t.counts[j] == len(members)
        if members:
            assert np.allclose(t.points[j], data[members].mean(axis=0), atol=1e-14)
        else:
            assert not t.has_target[j]


def test_untargeted_feet_have_zero_residual():
    t = assign_targets([[0, 0, 0]], [[0.1, 0, 0], [5, 5, 5]])
    r = residuals(np.array([[0.1, 0, 0], [5, 5, 5]]), t)
    assert r[1].tolist() == [0, 0, 0]
    assert r[0] == pytest.approx([-0.1, 0, 0])


# compute_eta

def test_eta_identity():
    assert compute_eta(SparseRowMatrix.identity(5)) == 1.0


def test_eta_two_rows():
    C = SparseRowMatrix(np.array([[0.5, 0.5], [0.25, 0.75]]))
    assert compute_eta(C) == pytest.approx(0.8)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_eta_matches_dense_oracle(seed):
    ctrl = models.random_sphere_mesh(40, seed)
    _, C = subdivide_k(ctrl, 2)
    dense = dense_coefficients(ctrl.faces, ctrl.n_vertices, 2)
    assert compute_eta(C) == pytest.approx(1.0 / dense.sum(axis=0).max(), rel=1e-12)


def test_eta_bounds_spectral_radius():
    _, C, _ = frozen_problem(3)
    A = C.toarray()
    lam_max = np.linalg.eigvalsh(A.T @ A).max()
    assert compute_eta(C) <= 1.0 / lam_max + 1e-15


def test_zero_column_rejected():
    C = SparseRowMatrix(np.array([[1.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(ZeroColumnError, match="control point 1"):
        compute_eta(C)


# select_batch

def test_full_batch_covers_everything():
    assert np.array_equal(select_batch(17, 100, make_rng(0)), np.arange(17))


def test_batch_size_contract():
    b = select_batch(10, 20, make_rng(4))
    assert len(b) == 2 and len(set(b.tolist())) == 2
    assert ((0 <= b) & (b < 10)).all()


def test_batch_determinism():
    a, b = make_rng(99), make_rng(99)
    for _ in range(20):
        assert np.array_equal(select_batch(1000, 7.5, a), select_batch(1000, 7.5, b))


def test_batch_uniform_inclusion():
    rng = make_rng(5)
    hits = np.zeros(20)
    draws = 4000
    for _ in range(draws):
        hits[select_batch(20, 25, rng)] += 1
    expected = draws * 5 / 20
    sd = np.sqrt(draws * 0.25 * 0.75)
    assert np.abs(hits - expected).max() < 5 * sd


def test_empty_batch():
    with pytest.raises(EmptyBatchError):
        select_batch(10, 5, make_rng(0))


def test_derived_seeds_differ():
    seeds = {derive_seed(7, i) for i in range(100)}
    assert len(seeds) == 100
    assert derive_seed(7, 3) == derive_seed(7, 3)


# iterate_once

def test_update_with_zero_residual():
    ctrl, C, _ = frozen_problem(0)
    feet = evaluate_foot_points(C, ctrl.positions)
    t = FootTargets(feet, np.ones(C.n_rows, dtype=np.int64))
    V, e = iterate_once(ctrl.positions, C, t, np.arange(C.n_rows), compute_eta(C))
    assert e == 0.0
    assert np.array_equal(V, ctrl.positions)


def test_identity_jumps_onto_targets():
    rng = np.random.default_rng(0)
    V0, goal = rng.random((6, 3)), rng.random((6, 3))
    C = SparseRowMatrix.identity(6)
    t = FootTargets(goal, np.ones(6, dtype=np.int64))
    V1, e0 = iterate_once(V0, C, t, np.arange(6), 1.0)
    assert e0 > 0
    assert np.allclose(V1, goal, atol=1e-15)
    _, e1 = iterate_once(V1, C, t, np.arange(6), 1.0)
    assert e1 == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_full_batch_loss_nonincreasing(seed):
    ctrl, C, t = frozen_problem(seed)
    eta = compute_eta(C)
    V, everything = ctrl.positions, np.arange(C.n_rows)
    prev = np.inf
    for _ in range(50):
        V, e = iterate_once(V, C, t, everything, eta)
        loss = e * e * C.n_rows
        assert loss <= prev * (1 + 1e-12)
        prev = loss


def test_untargeted_rows_still_count():
    C = SparseRowMatrix.identity(2)
    t = FootTargets(np.array([[1.0, 0, 0], [0, 0, 0]]), np.array([1, 0]))
    V, e = iterate_once(np.zeros((2, 3)), C, t, np.arange(2), 1.0)
    assert e == pytest.approx(np.sqrt(0.5))
    assert V[1].tolist() == [0, 0, 0]


def test_stochastic_consistency():
    ctrl, C, t = frozen_problem(4, n=12, k=1)
    eta = compute_eta(C)
    V0 = ctrl.positions
    n_k, rate = C.n_rows, 30.0
    m = int(np.floor(n_k * rate / 100))
    full, _ = iterate_once(V0, C, t, np.arange(n_k), eta)
    full_step = full - V0
    rng = make_rng(11)
    samples = 4000
    steps = np.empty((samples,) + V0.shape)
    for s in range(samples):
        V, _ = iterate_once(V0, C, t, select_batch(n_k, rate, rng), eta)
        steps[s] = V - V0
    mean = steps.mean(axis=0)
    se = steps.std(axis=0, ddof=1) / np.sqrt(samples)
    expected = (m / n_k) * full_step
    z = np.abs(mean - expected) / np.maximum(se, 1e-300)
    assert (z < 3).mean() >= 0.99
    assert z.max() < 5


def test_iterate_dimension_mismatch():
    _, C, t = frozen_problem(0)
    with pytest.raises(ValueError):
        iterate_once(np.zeros((3, 3)), C, t, [0], 0.1)


# rms_error and should_stop

def test_rms_examples():
    assert rms_error(np.zeros((4, 3)), 4) == 0.0
    assert rms_error([[3, 0, 4]], 1) == 5.0
    assert rms_error([[1, 0, 0], [0, 1, 0]], 2) == 1.0


def test_stop_examples():
    assert should_stop(1.0, 1.0005, 1e-3, 3, 50)
    assert not should_stop(1.0, 0.5, 1e-3, 3, 50)
    assert should_stop(1.0, 0.5, 1e-3, 50, 50)
    assert should_stop(None, 7.0, 1e-3, 50, 50)
    assert not should_stop(None, 1.0, 1e-3, 1, 50)
    assert not should_stop(0.0, 0.0, 1e-3, 4, 50)
    assert not should_stop(1.0, 1.0, 0.0, 4, 50)


# config

@pytest.mark.parametrize("kwargs", [
    dict(sample_rate=0), dict(sample_rate=101), dict(subdivision_levels=-1),
    dict(control_count=3), dict(epsilon=-1), dict(max_iterations=0),
    dict(freeze_after=60), dict(error_mode="mean"), dict(eta_override=0.0),
    dict(grid_resolution=0),
])
def test_config_validation(kwargs):
    base = dict(control_count=20)
    base.update(kwargs)
    with pytest.raises(ConfigError):
        FitConfig(**base)


# whole fits

def test_seeded_fit_is_bit_identical(lumpy_small):
    cfg = FitConfig(control_count=60, subdivision_levels=2, sample_rate=30,
                    max_iterations=25, rng_seed=123)
    a, b = fit(lumpy_small, cfg), fit(lumpy_small, cfg)
    assert a.trace.batch_rms == b.trace.batch_rms
    assert np.array_equal(a.control_mesh.positions, b.control_mesh.positions)
    assert np.array_equal(a.fine_mesh.positions, b.fine_mesh.positions)


def test_different_seeds_differ(lumpy_small):
    cfg = FitConfig(control_count=60, subdivision_levels=2, sample_rate=30, max_iterations=10)
    setup = prepare(lumpy_small, cfg)
    a = run_iterations(setup, cfg)
    b = run_iterations(setup, FitConfig(**{**cfg.__dict__, "rng_seed": 1}))
    assert a.trace.batch_rms != b.trace.batch_rms


def test_translation_equivariance(lumpy_small):
    shift = np.array([10.0, -3.0, 0.5])
    cfg = FitConfig(control_count=60, subdivision_levels=2, sample_rate=50,
                    max_iterations=20, rng_seed=5)
    a = fit(lumpy_small, cfg)
    b = fit(lumpy_small.translated(shift), cfg)
    assert np.array_equal(a.initial_control_mesh.faces, b.initial_control_mesh.faces)
    assert np.abs(b.initial_control_mesh.positions - a.initial_control_mesh.positions - shift).max() <= 1e-9
    assert np.abs(b.fine_mesh.positions - a.fine_mesh.positions - shift).max() <= 1e-9


def test_final_rms_recomputes(lumpy_small):
    cfg = FitConfig(control_count=60, subdivision_levels=2, sample_rate=40, max_iterations=15)
    res = fit(lumpy_small, cfg)
    feet = evaluate_foot_points(res.C, res.control_mesh.positions)
    again = rms_error(residuals(feet, res.targets), res.C.n_rows)
    assert abs(again - res.final_full_rms) <= 1e-12
    assert np.array_equal(feet, res.fine_mesh.positions)


def test_trace_records(lumpy_small):
    cfg = FitConfig(control_count=60, subdivision_levels=2, sample_rate=25,
                    max_iterations=12, error_mode="full", epsilon=0.0)
    res = fit(lumpy_small, cfg)
    n_k = res.C.n_rows
    assert len(res.trace) == 12
    assert res.trace.iteration == list(range(1, 13))
    assert set(res.trace.batch_size) == {int(np.floor(n_k * 0.25))}
    assert np.isfinite(res.trace.errors("full")).all()
    assert all(b >= a for a, b in zip(res.trace.elapsed, res.trace.elapsed[1:]))


def test_fit_improves_on_initial_mesh(lumpy_small):
    cfg = FitConfig(control_count=60, subdivision_levels=2, max_iterations=30, epsilon=0.0)
    res = fit(lumpy_small, cfg, record_full=True)
    full = res.trace.errors("full")
    assert full[-1] < 0.8 * full[0]


def test_ratio_test_stops_early(lumpy_small):
    cfg = FitConfig(control_count=60, subdivision_levels=2, max_iterations=500,
                    epsilon=1e-3, freeze_after=2)
    res = fit(lumpy_small, cfg)
    assert 3 <= len(res.trace) < 500
    e = res.trace.errors()
    assert abs(e[-1] / e[-2] - 1) < 1e-3


def test_target_error_stop(lumpy_small):
    cfg = FitConfig(control_count=60, subdivision_levels=2, max_iterations=200, epsilon=0.0)
    setup = prepare(lumpy_small, cfg)
    ref = run_iterations(setup, cfg, record_full=True)
    goal = ref.trace.full_rms[9]
    res = run_iterations(setup, cfg, record_full=True, target_error=goal)
    assert res.reached_error and len(res.trace) == 10
