import math

import numpy as np
import pytest

from divknn import (
    BasisEntry,
    BasisSystem,
    ConfigurationError,
    EnsembleConfig,
    PointSet,
    SolverError,
    build_basis,
    ensemble_estimate,
    k_schedule,
    make_functional,
    plugin_estimate,
    solve_weights_exact,
    solve_weights_relaxed,
)
from divknn.ensemble import _round_half_away, solve_weights


def odin1(l_values, d, n, **kw):
    return EnsembleConfig("odin1", l_values, d, n, **kw)


def odin2(l_values, d, n, **kw):
    return EnsembleConfig("odin2", l_values, d, n, **kw)


# ---------------------------------------------------------------- k_schedule

def test_schedule_odin1_basic():
    sched, warn = k_schedule(odin1((1.0,), 1, 400))
    assert sched == [(1.0, 20)]
    assert warn == []


def test_schedule_odin1_paper_grid_endpoints():
    lv = tuple(np.linspace(0.3, 3.0, 50))
    sched, _ = k_schedule(odin1(lv, 7, 1000))
    assert sched[0][1] == round(0.3 * math.sqrt(1000))  # 9
    assert sched[-1][1] == 95


def test_schedule_odin2():
    sched, _ = k_schedule(odin2((1.4,), 4, 256, delta=0.5))
    assert sched == [(1.4, 22)]


def test_schedule_k_min_clamp_and_collision_warning():
    cfg = odin1((0.01, 0.011, 2.0), 1, 100, k_min=3)
    sched, warn = k_schedule(cfg)
    assert sched[0][1] == 3 and sched[1][1] == 3
    assert any("collision" in w for w in warn)


def test_schedule_degenerate_error():
    with pytest.raises(ConfigurationError, match="degenerate"):
        k_schedule(odin1((0.001, 0.002, 0.003), 1, 100, k_min=3))


def test_round_half_away():
    assert _round_half_away(2.5) == 3
    assert _round_half_away(2.4999) == 2
    assert _round_half_away(-2.5) == -3


# ---------------------------------------------------------------- build_basis

def test_basis_odin1_d2():
    basis = build_basis(odin1((1.0, 2.0, 3.0, 4.0), 2, 100))
    entries = [(e.l_exponent, e.n_exponent) for e in basis.entries]
    assert entries == [(0.5, -0.25), (1.0, -0.5), (-1.0, -0.5)]
    assert basis.count == 3


def test_basis_odin2_d4():
    basis = build_basis(odin2(tuple(np.linspace(1, 3, 8)), 4, 256, delta=0.5, nu=2))
    pairs = {e.label for e in basis.entries}
    assert pairs == {"j=1,q=0", "j=2,q=0", "j=3,q=0", "j=1,q=1"}


def test_basis_odin2_d1_empty():
    basis = build_basis(odin2((1.0, 2.0), 1, 100, delta=0.5, nu=2))
    assert basis.count == 0
    sol = solve_weights_relaxed(basis, (1.0, 2.0), 100, 1.0)
    assert np.allclose(sol.weights, 0.5)


def test_basis_odin2_exponent_window():
    for d in (2, 3, 7, 10):
        basis = build_basis(odin2(tuple(np.linspace(1, 2, 40)), d, 500, delta=0.3, nu=4))
        for e in basis.entries:
            assert -0.5 < e.n_exponent < 0.0


def test_basis_too_large_for_ensemble():
    with pytest.raises(ConfigurationError, match="increase L"):
        build_basis(odin1((1.0, 2.0), 7, 100))


def test_nu_warning_when_rate_not_guaranteed():
    with pytest.warns(UserWarning, match="parametric"):
        odin2((1.0, 2.0, 3.0), 2, 100, delta=0.25, nu=2)


# ---------------------------------------------------------------- exact solver

def test_exact_single_weight():
    basis = BasisSystem((), "odin1")
    sol = solve_weights_exact(basis, [2.0])
    assert np.allclose(sol.weights, [1.0])


def test_exact_two_point_hand_case():
    basis = BasisSystem((BasisEntry("psi", 1.0, -0.5),), "odin1")
    sol = solve_weights_exact(basis, [1.0, 2.0])
    assert np.allclose(sol.weights, [2.0, -1.0], atol=1e-12)


def test_exact_three_point_hand_case():
    basis = BasisSystem((BasisEntry("psi", 1.0, -0.5),), "odin1")
    sol = solve_weights_exact(basis, [1.0, 2.0, 3.0])
    assert np.allclose(sol.weights, [4 / 3, 1 / 3, -2 / 3], atol=1e-9)
    assert sol.weights @ sol.weights == pytest.approx(21 / 9, abs=1e-9)
    assert sol.objective == pytest.approx(math.sqrt(21 / 9), abs=1e-9)


def test_exact_random_instances_feasible():
    rng = np.random.default_rng(0)
    for _ in range(50):
        L = int(rng.integers(2, 9))
        I = int(rng.integers(0, min(L - 1, 6) + 1))
        lv = np.sort(rng.uniform(0.2, 4.0, L))
        basis = BasisSystem(
            tuple(BasisEntry(str(i), float(e), -0.3) for i, e in
                  enumerate(rng.uniform(-1.5, 1.5, I))), "odin1")
        A = np.vstack([np.ones(L), basis.psi_matrix(lv)])
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[-1] < 1e-10 * sv[0]:  # near-singular draws exercise the error path
            with pytest.raises(SolverError):
                solve_weights_exact(basis, lv)
            continue
        if sv[-1] < 1e-6 * sv[0]:
            # Numerically borderline: tolerances below are not attainable in
            # double precision, and such grids are useless for estimation.
            continue
        sol = solve_weights_exact(basis, lv)
        assert abs(sol.weights.sum() - 1.0) < 1e-10
        if I:
            assert np.abs(sol.residuals).max() < 1e-8


def test_exact_rank_deficient_duplicate_l():
    basis = BasisSystem((BasisEntry("a", 1.0, -0.5), BasisEntry("b", 1.0, -0.25)), "odin1")
    with pytest.raises(SolverError, match="rank deficient"):
        solve_weights_exact(basis, [1.0, 2.0, 3.0])


def test_exact_min_norm_against_sampled_feasible_points():
    # Oracle: sample the affine solution space; the KKT solution's norm must
    # be minimal over every sampled feasible point.
    rng = np.random.default_rng(4)
    for _ in range(10):
        L = int(rng.integers(3, 9))
        I = int(rng.integers(1, min(L - 1, 6) + 1))
        lv = np.sort(rng.uniform(0.3, 3.0, L))
        basis = BasisSystem(
            tuple(BasisEntry(str(i), float(e), -0.3) for i, e in
                  enumerate(rng.uniform(-1.2, 1.2, I))), "odin1")
        A = np.vstack([np.ones(L), basis.psi_matrix(lv)])
        if np.linalg.matrix_rank(A) < A.shape[0]:
            continue
        sol = solve_weights_exact(basis, lv)
        w0, _, _, _ = np.linalg.lstsq(A, np.r_[1.0, np.zeros(I)], rcond=None)
        null = np.linalg.svd(A)[2][A.shape[0]:]
        norm = np.linalg.norm(sol.weights)
        for _ in range(1000):
            cand = w0 + null.T @ rng.normal(size=null.shape[0])
            assert norm <= np.linalg.norm(cand) + 1e-9


# ---------------------------------------------------------------- relaxed solver

def test_relaxed_empty_basis_uniform():
    sol = solve_weights_relaxed(BasisSystem((), "odin2"), np.linspace(1, 2, 5), 100, 2.0)
    assert np.allclose(sol.weights, 0.2)
    assert sol.objective == pytest.approx(1 / (5 * 2.0), abs=1e-12)


def test_relaxed_constant_row():
    # A constraint row constant over l cannot be reduced below |a| by any
    # sum-one weighting; the norm term then fixes w at uniform.
    basis = BasisSystem((BasisEntry("c", 0.0, -0.5),), "odin2")
    a = 100 ** (0.5 - 0.5)  # scaled row value: N^(1/2+n_exp) * l^0 = 1
    sol = solve_weights_relaxed(basis, [1.0, 2.0], 100, 4.0)
    assert np.allclose(sol.weights, 0.5, atol=1e-6)
    assert sol.objective == pytest.approx(max(a, 1 / (2 * 4.0)), rel=1e-6)


def test_relaxed_matches_exact_at_large_eta():
    basis = BasisSystem((BasisEntry("psi", 1.0, -0.5),), "odin1")
    sol = solve_weights_relaxed(basis, [1.0, 2.0, 3.0], 100, 1e9)
    assert np.allclose(sol.weights, [4 / 3, 1 / 3, -2 / 3], atol=1e-6)
    assert sol.objective < 1e-4


def test_relaxed_solution_invariants():
    lv = tuple(np.linspace(0.3, 3.0, 50))
    cfg = odin1(lv, 7, 1600, eta=1.0)
    basis = build_basis(cfg)
    sol = solve_weights_relaxed(basis, lv, 1600, 1.0)
    assert abs(sol.weights.sum() - 1.0) < 1e-10
    assert sol.weights @ sol.weights <= 1.0 * sol.objective + 1e-8
    scaled = basis.scaled_rows(np.asarray(lv), 1600) @ sol.weights
    assert np.abs(scaled).max() <= sol.objective + 1e-8


def test_relaxed_requires_l2():
    with pytest.raises(Exception):
        solve_weights_relaxed(BasisSystem((), "odin1"), [1.0], 100, 1.0)


# ---------------------------------------------------------------- ensemble_estimate

def test_single_member_reduces_to_plugin():
    rng = np.random.default_rng(8)
    x = PointSet(rng.random((100, 2)))
    y = PointSet(rng.random((100, 2)))
    spec = make_functional("renyi_integral", alpha=0.5)
    cfg = odin1((1.0,), 2, 100)
    report = ensemble_estimate(x, y, cfg, spec)
    k = round(math.sqrt(100))
    assert report.value == pytest.approx(plugin_estimate(x, y, k, k, spec).value, abs=1e-15)
    assert np.allclose(report.weights.weights, [1.0])


def test_value_is_dot_product():
    rng = np.random.default_rng(12)
    x = PointSet(rng.random((150, 2)))
    y = PointSet(rng.random((150, 2)))
    spec = make_functional("kl")
    cfg = odin1(tuple(np.linspace(0.5, 2.0, 10)), 2, 150)
    report = ensemble_estimate(x, y, cfg, spec)
    w = report.weights.weights
    v = np.array([pk[2] for pk in report.per_k])
    assert report.value == pytest.approx(float(np.dot(w, v)), abs=1e-12)


def test_linearity_in_functional():
    rng = np.random.default_rng(14)
    x = PointSet(rng.random((120, 2)))
    y = PointSet(rng.random((120, 2)))
    cfg = odin1(tuple(np.linspace(0.5, 2.0, 8)), 2, 120)
    g1 = make_functional("kl")
    g2 = make_functional("l2")
    a, b = 2.5, -0.75
    combo = make_functional("custom", g=lambda t1, t2: a * g1.eval(t1, t2) + b * g2.eval(t1, t2))
    v1 = ensemble_estimate(x, y, cfg, g1).value
    v2 = ensemble_estimate(x, y, cfg, g2).value
    vc = ensemble_estimate(x, y, cfg, combo).value
    assert vc == pytest.approx(a * v1 + b * v2, abs=1e-10)


def test_mismatched_n_warns_in_report():
    rng = np.random.default_rng(15)
    x = PointSet(rng.random((90, 1)))
    y = PointSet(rng.random((90, 1)))
    cfg = odin1((0.5, 1.0, 2.0), 1, 120)
    report = ensemble_estimate(x, y, cfg, make_functional("kl"))
    assert any("config.n" in w for w in report.warnings)


def test_solver_selection_through_config():
    rng = np.random.default_rng(16)
    x = PointSet(rng.random((100, 1)))
    y = PointSet(rng.random((100, 1)))
    spec = make_functional("renyi_integral", alpha=0.5)
    lv = tuple(np.linspace(0.5, 2.5, 6))
    exact = ensemble_estimate(x, y, odin1(lv, 1, 100, solver="exact"), spec)
    relaxed = ensemble_estimate(x, y, odin1(lv, 1, 100, solver="relaxed", eta=1e9), spec)
    assert relaxed.value == pytest.approx(exact.value, abs=1e-3)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        EnsembleConfig("odin3", (1.0,), 1, 100)
    with pytest.raises(ConfigurationError):
        odin1((1.0, 1.0), 1, 100)  # duplicate l
    with pytest.raises(ConfigurationError):
        odin1((-1.0,), 1, 100)
    with pytest.raises(ConfigurationError):
        odin2((1.0, 2.0), 1, 100, delta=1.5)
    with pytest.raises(ConfigurationError):
        odin1((1.0,), 1, 100, eta=0.0)


def test_solve_weights_l1_shortcut():
    sol = solve_weights(odin1((1.5,), 3, 400))
    assert np.allclose(sol.weights, [1.0])
