import math

import numpy as np
import pytest

from helpers import brute_force_decision

from cdmsim import analysis, rng
from cdmsim.analysis import (
    DecisionOutcome,
    SprtState,
    bernoulli_llr,
    detect_decision,
    deriv_transformed,
    estimate_drift,
    fit_step_polynomial,
    inverse_transform,
    simulate_sprt_bernoulli,
    spearman_trend,
    speed_accuracy_sweep,
    sprt_decide,
    sprt_update,
    trajectory_llr,
    transform_to_xy,
)
from cdmsim.dynamics import ColonyState, GainModel, ModelParams, deriv_modified
from cdmsim.errors import FitError, ParameterError, SweepTimeoutError
from cdmsim.sde import IntegratorConfig, Trajectory, simulate

PARAMS = ModelParams(n=100.0, q=(0.12, 0.08), r_prime=(0.2, 0.15),
                     r_switch=(0.02, 0.02), k_decay=(0.05, 0.05),
                     sigma_q=(0.1, 0.1), sigma_r_prime=(0.08, 0.08),
                     sigma_r_switch=(0.03, 0.03), sigma_k_decay=(0.03, 0.03),
                     quorum_T=0.3, steepness_k=4.0)


def synthetic_trajectory(y1, y2, dt=1.0, n=100.0):
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    params = ModelParams(n=n, q=(0.1, 0.1), r_prime=(0.0, 0.0),
                         r_switch=(0.0, 0.0), k_decay=(0.0, 0.0))
    cfg = IntegratorConfig(dt=dt, t_max=max(dt, (len(y1) - 1) * dt or dt))
    t = np.arange(len(y1)) * dt
    return Trajectory(t=t, y1=y1, y2=y2, params=params, model="baseline",
                      gain_model=None, config=cfg, seed=0)


# --- decision detection -------------------------------------------------------

def test_durable_crossing_decides_at_first_crossing():
    y1 = [0, 10, 35, 40, 45, 50, 55, 60]
    y2 = [0, 5, 6, 7, 8, 9, 10, 11]
    traj = synthetic_trajectory(y1, y2)
    out = detect_decision(traj, 0.3, hold=3.0, correct_site=1)
    assert out.site == 1 and not out.timeout
    assert out.time == 2.0  # first sample at or above 30
    assert out.correct is True


def test_never_reaching_threshold_times_out():
    traj = synthetic_trajectory([0, 5, 10, 12], [0, 4, 8, 9])
    out = detect_decision(traj, 0.5, hold=0.0)
    assert out.timeout and out.site == 0 and math.isnan(out.time)
    assert out.correct is None


def test_transient_crossing_is_not_a_decision():
    # site 1 pokes above the threshold but recedes before the hold
    # elapses; site 2 crosses later and stays
    y1 = [0, 35, 36, 20, 10, 10, 10, 10, 10, 10]
    y2 = [0, 0, 5, 10, 32, 33, 34, 35, 36, 37]
    traj = synthetic_trajectory(y1, y2)
    out = detect_decision(traj, 0.3, hold=3.0)
    assert out.site == 2
    assert out.time == 4.0


def test_zero_hold_reduces_to_first_crossing():
    y1 = [0, 35, 20, 10]
    y2 = [0, 0, 0, 0]
    out = detect_decision(synthetic_trajectory(y1, y2), 0.3, hold=0.0)
    assert out.site == 1 and out.time == 1.0


def test_unfinished_hold_at_series_end_is_timeout():
    y1 = [0, 0, 0, 35, 36]  # crossing persists but the data ends mid-hold
    out = detect_decision(synthetic_trajectory(y1, [0] * 5), 0.3, hold=5.0)
    assert out.timeout


def test_detection_matches_brute_force_oracle():
    gen = np.random.default_rng(40)
    for _ in range(150):
        m = int(gen.integers(3, 60))
        y1 = np.clip(np.cumsum(gen.normal(1.2, 8.0, m)), 0, 100)
        y2 = np.clip(np.cumsum(gen.normal(1.0, 8.0, m)), 0, 100)
        over = y1 + y2 > 100
        y2[over] = 100 - y1[over]
        theta = float(gen.uniform(0.1, 0.9))
        hold_steps = int(gen.integers(0, 6))
        traj = synthetic_trajectory(y1, y2)
        want_site, want_onset = brute_force_decision(y1, y2, theta * 100.0, hold_steps)
        got = detect_decision(traj, theta, hold=hold_steps * 1.0)
        assert got.site == want_site
        if want_site:
            assert got.time == pytest.approx(float(want_onset))


def test_decision_monotone_in_threshold():
    gen = np.random.default_rng(41)
    for _ in range(60):
        m = 80
        y1 = np.clip(np.cumsum(gen.normal(1.5, 6.0, m)), 0, 100)
        y2 = np.clip(np.cumsum(gen.normal(1.0, 6.0, m)), 0, 100)
        over = y1 + y2 > 100
        y2[over] = 100 - y1[over]
        traj = synthetic_trajectory(y1, y2)
        lo = detect_decision(traj, 0.25, hold=3.0)
        hi = detect_decision(traj, 0.55, hold=3.0)
        if hi.site != 0:
            assert lo.site != 0
            assert lo.time <= hi.time


def test_detect_decision_validates_theta():
    traj = synthetic_trajectory([0, 1], [0, 1])
    with pytest.raises(ParameterError):
        detect_decision(traj, 0.0, hold=0.0)
    with pytest.raises(ParameterError):
        detect_decision(traj, 0.5, hold=-1.0)


# --- rotated coordinates ------------------------------------------------------

def test_transform_symmetry_axis_and_reference_point():
    x1, x2 = transform_to_xy(7.3, 7.3)
    assert x1 == 0.0
    x1, x2 = transform_to_xy(1.0, 0.0)
    assert x1 == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert x2 == pytest.approx(1 / math.sqrt(2), abs=1e-15)


def test_transform_round_trip_and_isometry():
    gen = np.random.default_rng(42)
    y = gen.uniform(-200, 200, size=(1000, 2))
    x1, x2 = transform_to_xy(y[:, 0], y[:, 1])
    b1, b2 = inverse_transform(x1, x2)
    assert np.max(np.abs(b1 - y[:, 0])) < 1e-12
    assert np.max(np.abs(b2 - y[:, 1])) < 1e-12
    assert np.max(np.abs((x1**2 + x2**2) - (y[:, 0]**2 + y[:, 1]**2))) < 1e-9


def test_deriv_transformed_is_chain_rule_of_modified():
    gen = np.random.default_rng(43)
    gm = GainModel.sigmoid()
    for _ in range(100):
        y1 = gen.uniform(0, 70)
        y2 = gen.uniform(0, PARAMS.n - y1)
        noise = gen.normal(0, 0.05, 8)
        dy = deriv_modified(ColonyState(y1, y2), PARAMS, gm, noise)
        x1, x2 = transform_to_xy(y1, y2)
        dx = deriv_transformed(x1, x2, PARAMS, gm, noise)
        want = transform_to_xy(*dy)
        assert dx[0] == pytest.approx(want[0], rel=1e-12, abs=1e-12)
        assert dx[1] == pytest.approx(want[1], rel=1e-12, abs=1e-12)
        assert dx[0]**2 + dx[1]**2 == pytest.approx(dy[0]**2 + dy[1]**2, rel=1e-9)


def test_deriv_transformed_symmetric_axis():
    sym = ModelParams(n=100.0, q=(0.1, 0.1), r_prime=(0.2, 0.2),
                      r_switch=(0.02, 0.02), k_decay=(0.05, 0.05))
    dx1, _ = deriv_transformed(0.0, 40.0, sym, GainModel.hard_step())
    assert dx1 == pytest.approx(0.0, abs=1e-12)


# --- drift estimation ---------------------------------------------------------

def test_noise_free_baseline_drift_is_affine_in_x1():
    quiet = ModelParams(n=100.0, q=(0.12, 0.08), r_prime=(0.2, 0.2),
                        r_switch=(0.02, 0.02), k_decay=(0.05, 0.05))
    x2 = 50.0 / math.sqrt(2)
    grid = np.linspace(-0.9, 0.9, 31) * x2
    est = estimate_drift(quiet, None, x2, grid, replicates=1, model="baseline")
    assert all(p.feasible for p in est.points)
    means = np.array([p.mean_dx1 for p in est.points])
    resid = means - np.polyval(np.polyfit(grid, means, 1), grid)
    assert np.max(np.abs(resid)) < 1e-9
    assert (np.array([p.var_dx1 for p in est.points]) == 0.0).all()


def test_symmetric_drift_vanishes_on_axis():
    sym = ModelParams(n=100.0, q=(0.1, 0.1), r_prime=(0.2, 0.2),
                      r_switch=(0.02, 0.02), k_decay=(0.05, 0.05))
    est = estimate_drift(sym, GainModel.hard_step(), 30.0, [0.0],
                         replicates=1, model="modified")
    assert est.points[0].mean_dx1 == pytest.approx(0.0, abs=1e-12)


def test_hard_step_gain_creates_drift_jump_across_quorum():
    quiet = ModelParams(n=100.0, q=(0.12, 0.08), r_prime=(0.2, 0.2),
                        r_switch=(0.02, 0.02), k_decay=(0.05, 0.05),
                        quorum_T=0.3, steepness_k=4.0)
    x2 = 70.0 / math.sqrt(2)  # y1 crosses 30 inside the grid
    grid = np.linspace(-0.9, 0.9, 41) * x2
    est = estimate_drift(quiet, GainModel.hard_step(), x2, grid,
                         replicates=1, model="modified")
    means = np.array([p.mean_dx1 for p in est.points])
    diffs = np.abs(np.diff(means))
    # analytic jump at the boundary: the gain adds 2*r'*y across u = T
    jump = diffs.max()
    assert jump > 10 * np.median(diffs)


def test_drift_reports_infeasible_points():
    est = estimate_drift(PARAMS, GainModel.hard_step(), 30.0,
                         [-40.0, 0.0, 40.0], replicates=2, model="modified",
                         seed=1)
    flags = [p.feasible for p in est.points]
    assert flags == [False, True, False]
    assert math.isnan(est.points[0].mean_dx1)
    assert len(est.infeasible) == 2


def test_drift_noise_statistics_match_direct_monte_carlo():
    est = estimate_drift(PARAMS, GainModel.sigmoid(), 35.0, [5.0],
                         replicates=4000, model="modified", seed=9)
    # independent recomputation from the same stream contract
    gen = rng.generator(rng.KIND_DRIFT, 9, 0)
    draws = gen.standard_normal((4000, 8)) * np.asarray(PARAMS.sigmas())
    y1, y2 = inverse_transform(5.0, 35.0)
    vals = []
    for row in draws:
        dy1, dy2 = deriv_modified(ColonyState(y1, y2), PARAMS,
                                  GainModel.sigmoid(), row)
        vals.append((dy1 - dy2) / math.sqrt(2))
    assert est.points[0].mean_dx1 == pytest.approx(np.mean(vals), rel=1e-12)
    assert est.points[0].var_dx1 == pytest.approx(np.var(vals), rel=1e-12)
    assert est.diagnostic >= 0.0


# --- sequential test ----------------------------------------------------------

def test_sprt_state_validation_and_continue():
    with pytest.raises(ParameterError):
        SprtState(upper=-1.0, lower=-2.0)
    st = SprtState(upper=3.0, lower=-3.0)
    assert sprt_decide(st) == "continue"
    assert sprt_decide(sprt_update(st, 0.0)) == "continue"


def test_sprt_accepts_h1_after_three_equal_increments():
    st = SprtState(upper=3.0, lower=-3.0)
    for expected in ("continue", "continue", "accept_h1"):
        st = sprt_update(st, 1.0)
        assert sprt_decide(st) == expected
    assert st.steps == 3


def test_sprt_accepts_h2_on_negative_sum():
    st = SprtState(upper=2.0, lower=-2.0)
    st = sprt_update(st, -2.5)
    assert sprt_decide(st) == "accept_h2"


def test_vectorized_sprt_matches_update_loop():
    p0, p1, upper, lower = 0.4, 0.6, math.log(19), -math.log(19)
    m, cap = 300, 512
    counts, decisions = simulate_sprt_bernoulli(p1, p0, p1, upper, lower,
                                                m, seed=77, max_steps=cap,
                                                batch=m)
    draws = np.random.Generator(np.random.PCG64(np.random.SeedSequence([77])))\
        .random((m, cap)) < p1
    for i in range(m):
        st = SprtState(upper=upper, lower=lower)
        verdict = "continue"
        while verdict == "continue":
            st = sprt_update(st, bernoulli_llr(int(draws[i, st.steps]), p0, p1))
            verdict = sprt_decide(st)
        assert st.steps == counts[i]
        assert decisions[i] == (1 if verdict == "accept_h1" else 2)


def test_sprt_terminates_within_cap():
    counts, _ = simulate_sprt_bernoulli(0.6, 0.4, 0.6, math.log(19),
                                        -math.log(19), 20000, seed=3,
                                        max_steps=512)
    assert counts.max() < 512


def test_trajectory_llr_favors_the_generating_hypothesis():
    h1 = PARAMS
    h2 = ModelParams(n=100.0, q=(0.08, 0.12), r_prime=(0.15, 0.2),
                     r_switch=(0.02, 0.02), k_decay=(0.05, 0.05),
                     sigma_q=(0.1, 0.1), sigma_r_prime=(0.08, 0.08),
                     sigma_r_switch=(0.03, 0.03), sigma_k_decay=(0.03, 0.03),
                     quorum_T=0.3, steepness_k=4.0)
    cfg = IntegratorConfig(dt=0.02, t_max=80.0, seed=15)
    wins = 0
    for trial in range(20):
        traj = simulate(h1, "baseline", None, cfg, trial_index=trial)
        incs = trajectory_llr(traj, h1, h2, "baseline")
        st = SprtState(upper=math.log(19), lower=-math.log(19))
        verdict = "continue"
        for inc in incs:
            st = sprt_update(st, float(inc))
            verdict = sprt_decide(st)
            if verdict != "continue":
                break
        if verdict == "accept_h1":
            wins += 1
    assert wins >= 16


def test_trajectory_llr_rejects_singular_covariance():
    quiet = ModelParams(n=100.0, q=(0.12, 0.08), r_prime=(0.2, 0.15),
                        r_switch=(0.02, 0.02), k_decay=(0.05, 0.05))
    cfg = IntegratorConfig(dt=0.02, t_max=1.0, seed=0)
    traj = simulate(quiet, "baseline", None, cfg)
    with pytest.raises(ParameterError):
        trajectory_llr(traj, quiet, quiet, "baseline")


# --- speed-accuracy sweep ------------------------------------------------------

def test_sweep_rejects_indistinguishable_sites_without_designation():
    sym = ModelParams(n=100.0, q=(0.1, 0.1), r_prime=(0.2, 0.2),
                      r_switch=(0.02, 0.02), k_decay=(0.05, 0.05),
                      sigma_q=(0.1, 0.1))
    cfg = IntegratorConfig(dt=0.05, t_max=50.0, seed=0)
    with pytest.raises(ParameterError):
        speed_accuracy_sweep(sym, "modified", GainModel.hard_step(),
                             [0.5], 10, cfg)
    pts = speed_accuracy_sweep(sym, "modified", GainModel.hard_step(),
                               [0.5], 10, cfg, correct_site=1)
    assert len(pts) == 1 and pts[0].trials == 10


def test_sweep_validates_theta_ladder():
    cfg = IntegratorConfig(dt=0.05, t_max=10.0, seed=0)
    with pytest.raises(ParameterError):
        speed_accuracy_sweep(PARAMS, "baseline", None, [0.5, 0.3], 5, cfg)
    with pytest.raises(ParameterError):
        speed_accuracy_sweep(PARAMS, "baseline", None, [0.0, 0.5], 5, cfg)


def test_sweep_aborts_when_every_trial_times_out():
    cfg = IntegratorConfig(dt=0.05, t_max=1.0, seed=0)  # far too short
    with pytest.raises(SweepTimeoutError) as err:
        speed_accuracy_sweep(PARAMS, "baseline", None, [1.0], 20, cfg)
    assert err.value.theta == 1.0
    assert "error rate undefined" in str(err.value)


def test_sweep_deterministic_and_parallel_equals_serial():
    cfg = IntegratorConfig(dt=0.02, t_max=200.0, seed=12)
    serial = speed_accuracy_sweep(PARAMS, "modified", GainModel.hard_step(),
                                  [0.3, 0.5], 80, cfg)
    again = speed_accuracy_sweep(PARAMS, "modified", GainModel.hard_step(),
                                 [0.3, 0.5], 80, cfg)
    parallel = speed_accuracy_sweep(PARAMS, "modified", GainModel.hard_step(),
                                    [0.3, 0.5], 80, cfg, jobs=2)
    assert serial == again == parallel


def test_sweep_point_fields_and_csv():
    cfg = IntegratorConfig(dt=0.02, t_max=200.0, seed=4)
    pts = speed_accuracy_sweep(PARAMS, "baseline", None, [0.3, 0.5], 60, cfg)
    csv = analysis.sweep_to_csv(pts)
    lines = csv.strip().split("\n")
    assert lines[0] == "theta,mean_decision_time,error_rate,timeout_rate,trials"
    assert len(lines) == 3
    for p in pts:
        assert 0.0 <= p.error_rate <= 1.0
        assert 0.0 <= p.timeout_rate <= 1.0
        assert p.mean_decision_time > 0.0


# --- polynomial fitting --------------------------------------------------------

def test_constant_target_recovers_constant_polynomial():
    fit = fit_step_polynomial(lambda u: 0.5, 3, np.linspace(0, 1, 20), 0.3)
    assert fit.rmse == pytest.approx(0.0, abs=1e-12)
    assert fit.coefficients[-1] == pytest.approx(0.5, abs=1e-12)
    for c in fit.coefficients[:-1]:
        assert c == pytest.approx(0.0, abs=1e-9)


def test_degree_one_fit_of_symmetric_step_passes_through_center():
    grid = np.linspace(0.0, 1.0, 100)  # no grid point at exactly 0.5
    fit = fit_step_polynomial("hard_step", 1, grid, quorum_t=0.5)
    a, b = fit.coefficients
    assert a * 0.5 + b == pytest.approx(0.5, abs=1e-12)


def test_higher_degree_fit_has_smaller_rmse():
    grid = np.linspace(0.0, 1.0, 101)
    rmse_by_degree = [fit_step_polynomial("hard_step", d, grid, 0.3).rmse
                      for d in range(1, 7)]
    assert rmse_by_degree[4] < rmse_by_degree[2]  # degree 5 beats degree 3
    for lo, hi in zip(rmse_by_degree, rmse_by_degree[1:]):
        assert hi <= lo + 1e-12


def test_fit_validates_inputs_and_rank():
    with pytest.raises(ParameterError):
        fit_step_polynomial("hard_step", 0, np.linspace(0, 1, 10), 0.3)
    with pytest.raises(ParameterError):
        fit_step_polynomial("hard_step", 5, np.linspace(0, 1, 6), 0.3)
    with pytest.raises(ParameterError):
        fit_step_polynomial("hard_step", 2, np.linspace(-0.2, 1, 30), 0.3)
    with pytest.raises(FitError):
        fit_step_polynomial("hard_step", 2, np.full(10, 0.5), 0.3)


def test_default_refit_gain_is_degree_five_and_bounded():
    gm = analysis.default_refit_gain(PARAMS)
    assert len(gm.coefficients) == 6
    from cdmsim.dynamics import gain
    vals = [gain(u, gm, PARAMS) for u in np.linspace(0, 1, 101)]
    assert min(vals) >= 1.0 and max(vals) <= 3.0


# --- trend test ----------------------------------------------------------------

def test_spearman_exact_pvalues():
    rho, p = spearman_trend([5.0, 4.0, 3.0, 2.0, 1.0], increasing=False)
    assert rho == pytest.approx(-1.0)
    assert p == pytest.approx(1 / 120)
    rho, p = spearman_trend([1.0, 2.0, 3.0, 4.0, 5.0], increasing=True)
    assert p == pytest.approx(1 / 120)
    _, p_wrong = spearman_trend([1.0, 2.0, 3.0, 4.0, 5.0], increasing=False)
    assert p_wrong == pytest.approx(1.0)


def test_spearman_handles_ties_conservatively():
    _, p = spearman_trend([3.0, 2.0, 1.0, 0.0, 0.0], increasing=False)
    assert p == pytest.approx(2 / 120)


def test_decision_outcome_json_round_trip():
    import json
    out = DecisionOutcome(site=2, time=4.5, correct=False, timeout=False)
    blob = json.loads(out.to_json())
    assert blob == {"site": 2, "decision_time": 4.5, "correct": False,
                    "timeout": False}
