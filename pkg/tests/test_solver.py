import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secbeam import (
    Allocation,
    DualState,
    InvalidInputError,
    Scenario,
    SolverConfig,
    baseline_los_only,
    baseline_uniform,
    certify_kkt,
    evaluate,
    is_feasible,
    kkt_residuals,
    solve_joint,
    solve_power_only,
    solve_time_only,
)
from secbeam.solver import dual_step, primal_step, repair, solve_scheme

RAW = SolverConfig(eta_t=0.01, eta_p=0.01, eta_lambda=0.1, eta_mu=0.1, scale_steps=False)


def test_config_validation():
    for bad in ({"eta_t": 0}, {"eta_mu": -1}, {"epsilon": math.inf}, {"max_iters": 0},
                {"window": 0}, {"feasibility_tol": -1}):
        with pytest.raises(InvalidInputError):
            SolverConfig(**bad)
    with pytest.raises(InvalidInputError, match="bogus"):
        SolverConfig.from_mapping({"bogus": 1})
    assert SolverConfig.from_mapping({"eta_t": 0.5}).eta_t == 0.5


def test_step_scaling():
    cfg = SolverConfig(eta_p=0.01, eta_mu=10.0)
    assert cfg.step_sizes(10.0) == pytest.approx((0.01, 1.0, 0.1, 0.1))
    assert cfg.step_sizes(2.0) == pytest.approx((0.01, 0.04, 0.1, 2.5))
    assert RAW.step_sizes(10.0) == (0.01, 0.01, 0.1, 0.1)


# -- single steps ---------------------------------------------------------------

def test_primal_step_single_beam_from_zero_power():
    sc = Scenario([2.0], [[0.0]], 10.0)
    out = primal_step(sc, Allocation([1.0], [0.0]), DualState(), RAW)
    assert out.p[0] == pytest.approx(2 * RAW.eta_p)
    assert out.t[0] == 1.0


def test_primal_step_dead_beam_only_pushed_down():
    sc = Scenario([2.0, 1.0], [[2.0, 0.0]], 10.0)
    dual = DualState(lam=0.3, mu=0.05, active_j=0)
    a = Allocation([0.4, 0.4], [5.0, 5.0])
    out = primal_step(sc, a, dual, RAW)
    assert out.p[0] == pytest.approx(5.0 - RAW.eta_p * 0.05 * 0.4)
    assert out.t[0] == pytest.approx(0.4 - RAW.eta_t * (0.3 + 0.05 * 5.0))


def test_primal_step_zero_time_freezes_power(two_beam):
    out = primal_step(two_beam, Allocation([0.0, 0.0], [3.0, 7.0]), DualState(mu=1.0), RAW)
    np.testing.assert_array_equal(out.p, [3.0, 7.0])


def test_primal_step_from_uniform_point(two_beam):
    out = primal_step(two_beam, Allocation.uniform(two_beam), DualState(active_j=0), RAW)
    # location 0 sees beam 0 at equal gain and beam 1 unopposed
    g = [2 / 21 - 2 / 21, 0.2 / 3]
    q = [0.0, math.log(3.0)]
    np.testing.assert_allclose(out.p, [10 + 0.01 * g[0] * 0.5, 10 + 0.01 * g[1] * 0.5], rtol=1e-14)
    np.testing.assert_allclose(out.t, [0.5 + 0.01 * q[0], 0.5 + 0.01 * q[1]], rtol=1e-14)


def test_dual_step_examples(two_beam):
    dual = dual_step(two_beam, Allocation.uniform(two_beam), DualState(0.2, 0.3), RAW)
    assert (dual.lam, dual.mu) == (0.2, 0.3)
    cfg = SolverConfig(eta_lambda=0.5, scale_steps=False)
    dual = dual_step(two_beam, Allocation([0.6, 0.6], [0, 0]), DualState(), cfg)
    assert dual.lam == pytest.approx(0.1) and dual.mu == 0.0
    dual = dual_step(two_beam, Allocation([0.25, 0.25], [0, 0]), DualState(lam=0.01), RAW)
    assert dual.lam == 0.0


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 5), st.floats(0, 5), st.floats(1e-3, 10))
def test_projection_safety(seed, lam, mu, eta):
    r = np.random.default_rng(seed)
    L, J = int(r.integers(1, 4)), int(r.integers(1, 4))
    sc = Scenario(r.exponential(1, L), r.exponential(1, (J, L)), float(r.uniform(0.5, 20)))
    a = Allocation(r.random(L), r.uniform(0, 30, L))
    cfg = SolverConfig(eta_t=eta, eta_p=eta, eta_lambda=eta, eta_mu=eta, scale_steps=False)
    dual = DualState(lam, mu, int(r.integers(J)))
    out = primal_step(sc, a, dual, cfg)
    assert np.all(out.t >= 0) and np.all(out.p >= 0)
    d = dual_step(sc, out, dual, cfg)
    assert d.lam >= 0 and d.mu >= 0


def test_repair_variants(two_beam):
    a = Allocation([0.8, 0.6], [20.0, 20.0])
    r = repair(two_beam, a)
    assert r.t.sum() == pytest.approx(1.0) and r.p @ r.t == pytest.approx(10.0)
    r = repair(two_beam, a, freeze_p=True)
    np.testing.assert_array_equal(r.p, a.p)
    assert r.p @ r.t == pytest.approx(10.0)
    r = repair(two_beam, Allocation([0.5, 0.5], [20.0, 20.0]), freeze_t=True)
    np.testing.assert_array_equal(r.t, [0.5, 0.5])
    assert r.p @ r.t == pytest.approx(10.0)


# -- full solves ----------------------------------------------------------------

def test_single_beam_closed_form():
    sc = Scenario([2.0], [[0.0]], 10.0)
    rep = solve_joint(sc)
    assert rep.converged
    assert rep.allocation.t[0] == pytest.approx(1.0, abs=1e-6)
    assert rep.allocation.p[0] == pytest.approx(10.0, rel=1e-5)
    assert rep.secrecy_bits == pytest.approx(math.log2(21), rel=1e-5)


def test_equal_gains_give_zero(two_beam):
    sc = Scenario([1.0, 0.5], [[1.0, 0.5], [1.0, 0.5]], 10.0)
    for fn in (solve_joint, solve_time_only, solve_power_only):
        rep = fn(sc)
        assert rep.secrecy_bits == 0.0 and rep.converged and rep.iterations == 0
        assert "location 0" in rep.message
    assert baseline_uniform(sc).secrecy_bits == 0.0


def test_all_alpha_zero_power_only():
    sc = Scenario([0.0, 0.0], [[0.0, 0.0]], 3.0)
    assert solve_power_only(sc).secrecy_bits == 0.0


def test_single_beam_time_only():
    sc = Scenario([1.0], [[0.5]], 4.0)
    rep = solve_time_only(sc)
    assert rep.allocation.t[0] == pytest.approx(1.0, abs=1e-6)


def test_power_only_one_secure_beam():
    sc = Scenario([1.0, 1.0], [[0.0, 2.0]], 2.0)
    rep = solve_power_only(sc, fixed_t=[0.25, 0.5])
    assert rep.converged
    np.testing.assert_array_equal(rep.allocation.t, [0.25, 0.5])
    assert rep.allocation.p[0] == pytest.approx(2.0 / 0.25, rel=1e-3)
    assert rep.allocation.p[1] == pytest.approx(0.0, abs=1e-2)


def test_power_only_rejects_oversubscribed_time(two_beam):
    with pytest.raises(InvalidInputError):
        solve_power_only(two_beam, fixed_t=[0.7, 0.6])


def test_baselines(two_beam):
    u = baseline_uniform(two_beam)
    assert u.secrecy_bits == pytest.approx(0.5 * math.log2(3), abs=1e-12)
    assert u.iterations == 0 and u.converged
    assert baseline_los_only(two_beam).secrecy_bits == 0.0
    sc = Scenario([2.0, 0.2], [[0.0, 0.1], [0.0, 0.3]], 10.0)
    assert baseline_los_only(sc).secrecy_bits == pytest.approx(math.log2(21))
    sc = Scenario([2.0], [[0.5]], 10.0)
    assert baseline_los_only(sc).secrecy_bits == pytest.approx(math.log2(21 / 6))
    one = Scenario([1.0], [[0.0]], 3.0)
    u = baseline_uniform(one)
    assert u.allocation.t.tolist() == [1.0] and u.allocation.p.tolist() == [3.0]
    with pytest.raises(InvalidInputError):
        baseline_los_only(two_beam, 2)


def test_solve_scheme_dispatch(two_beam):
    assert solve_scheme("uniform", two_beam).scheme == "uniform"
    with pytest.raises(InvalidInputError, match="unknown scheme"):
        solve_scheme("magic", two_beam)


def test_reports_are_feasible_and_consistent(two_beam):
    for fn in (solve_joint, solve_time_only, solve_power_only):
        rep = fn(two_beam)
        assert is_feasible(two_beam, rep.allocation, tol=SolverConfig().feasibility_tol)
        assert rep.secrecy_bits == evaluate(two_beam, rep.allocation).worst_value


def test_dominance(two_beam):
    d = 1e-3
    u = baseline_uniform(two_beam).secrecy_bits
    j = solve_joint(two_beam).secrecy_bits
    t = solve_time_only(two_beam).secrecy_bits
    p = solve_power_only(two_beam).secrecy_bits
    assert j >= t - d and j >= p - d
    assert t >= u - d and p >= u - d
    assert u < p < j


def test_power_only_uniform_time_closed_form(two_beam):
    # equal time, balanced rates: 1 + 2 p1 = 1 + 0.2 p2 with p1 + p2 = 20
    rep = solve_power_only(two_beam)
    assert rep.secrecy_bits == pytest.approx(0.5 * math.log2(1 + 40 / 11), rel=1e-4)


def test_time_only_closed_form(two_beam):
    a, b = math.log2(21), math.log2(3)
    rep = solve_time_only(two_beam)
    assert rep.secrecy_bits == pytest.approx(a * b / (a + b), rel=1e-4)


def test_joint_balances_worst_cases(two_beam):
    rep = solve_joint(two_beam)
    f = evaluate(two_beam, rep.allocation).f_values
    assert f[0] == pytest.approx(f[1], abs=1e-3)
    assert rep.allocation.p[0] < rep.allocation.p[1]


def test_best_iterate_monotone(two_beam):
    rep = solve_joint(two_beam, trace=True)
    best = rep.trace["best_c"]
    assert np.all(np.diff(best) >= 0)
    assert best[-1] == pytest.approx(rep.secrecy_bits)
    assert np.all(rep.trace["lam"] >= 0) and np.all(rep.trace["mu"] >= 0)
    assert len(rep.trace["c"]) == rep.iterations


@pytest.mark.parametrize("s", [0.25, 3.0])
def test_scale_consistency(two_beam, s):
    scaled = Scenario(two_beam.alpha * s, two_beam.beta * s, two_beam.p_tx / s)
    a, b = solve_joint(two_beam), solve_joint(scaled)
    assert b.secrecy_bits == pytest.approx(a.secrecy_bits, abs=1e-6)
    np.testing.assert_allclose(b.allocation.p * s, a.allocation.p, rtol=1e-4)


def test_non_convergence_is_reported(two_beam):
    rep = solve_joint(two_beam, SolverConfig(max_iters=10))
    assert not rep.converged and rep.iterations == 10
    assert "not met" in rep.message
    assert is_feasible(two_beam, rep.allocation, tol=1e-9)


def test_init_validation(two_beam):
    with pytest.raises(InvalidInputError):
        solve_joint(two_beam, init=Allocation([1.0], [1.0]))


# -- KKT ------------------------------------------------------------------------

def test_kkt_single_beam_hand_solution():
    sc = Scenario([2.0], [[0.0]], 10.0)
    mu = 2.0 / 21.0
    lam = math.log(21.0) - 10.0 * mu
    res = kkt_residuals(sc, Allocation([1.0], [10.0]), DualState(lam, mu, 0))
    assert res.max <= 1e-9
    assert certify_kkt(sc, Allocation([1.0], [10.0])).max <= 1e-9


def test_kkt_zero_point(two_beam):
    res = kkt_residuals(two_beam, Allocation([0.0, 0.0], [0.0, 0.0]), DualState())
    assert res.stationarity == 0.0
    assert res.primal_feasibility == 0.0
    assert res.complementary_slackness == 0.0


def test_kkt_flags_infeasibility_and_bad_duals(two_beam):
    res = kkt_residuals(two_beam, Allocation([0.7, 0.5], [10, 10]), DualState(lam=1.0))
    assert res.primal_feasibility == pytest.approx(2.0)
    assert res.complementary_slackness == pytest.approx(0.2)


def test_kkt_separates_optimum_from_baseline(two_beam):
    opt = Allocation([0.334583, 0.665417], [5.409107, 12.308317])
    assert certify_kkt(two_beam, opt).max < 1e-5
    assert certify_kkt(two_beam, Allocation.uniform(two_beam)).max > 0.1


def test_converged_joint_kkt(two_beam):
    rep = solve_joint(two_beam)
    assert rep.converged and rep.kkt_residuals.max < 1e-3
    assert rep.dual.nu.sum() == pytest.approx(1.0)
