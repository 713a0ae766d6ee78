"""Small hand-checkable cases and reference values for each operation."""

import math

import numpy as np
import pytest

from covert_sched.belief_dp import (ROOT, belief_update, belief_update_truncated,
                                    expected_eaves_stat, node_bound, psi_gap,
                                    solve_finite_partial)
from covert_sched.cli import run
from covert_sched.errors import InputError, ModelError, ResourceError
from covert_sched.horizon_inf import (leakage_bounds, min_t_for_unbounded,
                                      relative_value_iteration, threshold_policy)
from covert_sched.meas_tx import composition_value, scalar_threshold_check, solve_finite_full_meas
from covert_sched.model import (Problem, SystemModel, build_ladder, riccati_predict,
                                riccati_update, stability_threshold, steady_state_filter)
from covert_sched.sched_dp import ObjectiveConfig, phi_gap, solve_finite_full, stage_cost
from covert_sched.simkit import (SimConfig, Threshold, aggregate, always_transmit, simulate,
                                 sweep_beta)
from covert_sched.structcheck import scan_sequence, verify_lemma_suite, verify_threshold_rows


def scalar(a=1.0, c=1.0, q=1.0, r=1.0, lam=0.5, lam_e=0.5):
    return SystemModel([[a]], [[c]], [[q]], [[r]], lam, lam_e)


# ------------------------------------------------------------------- maps

def test_predict_scalar_cases():
    assert riccati_predict([[3.0]], scalar(a=1.0))[0, 0] == pytest.approx(4.0)
    assert riccati_predict([[1.0]], scalar(a=2.0))[0, 0] == pytest.approx(5.0)


def test_predict_two_state_against_direct_product(model):
    P = steady_state_filter(model).P_bar
    A = np.array(model.A)
    assert np.allclose(riccati_predict(P, model), np.einsum("ij,jk,lk->il", A, P, A) + np.eye(2))


def test_predict_rejects_bad_inputs(model):
    with pytest.raises(InputError):
        riccati_predict([[1.0, 2.0], [0.0, 1.0]], model)
    with pytest.raises(ModelError):
        riccati_predict(np.eye(3), model)


def test_update_approaches_predict_for_noisy_sensor():
    X = np.array([[2.0]])
    gaps = []
    for r in (1e2, 1e3, 1e4):
        m = scalar(a=1.3, r=r)
        gaps.append(riccati_predict(X, m)[0, 0] - riccati_update(X, m)[0, 0])
    # the gap shrinks like 1/R
    assert gaps[1] == pytest.approx(gaps[0] / 10, rel=0.02)
    assert gaps[2] == pytest.approx(gaps[1] / 10, rel=0.02)


def test_update_trace_matches_counterexample_send_cost(meas_model):
    Pp = steady_state_filter(meas_model).P_bar_plus
    g = riccati_update(Pp, meas_model)
    # with P_e = f(Pbar+) the send cost mixes tr g(P) and tr f(P)
    Pe = riccati_predict(Pp, meas_model)
    lam, lam_e, beta = meas_model.lam, meas_model.lam_e, 0.73
    cost = (beta * (lam * np.trace(g) + (1 - lam) * np.trace(riccati_predict(Pp, meas_model)))
            - (1 - beta) * (lam_e * np.trace(riccati_update(Pe, meas_model))
                            + (1 - lam_e) * np.trace(riccati_predict(Pe, meas_model))))
    assert cost == pytest.approx(5.4427, abs=5e-4)


def test_scalar_steady_state_golden_ratio():
    ss = steady_state_filter(scalar())
    assert ss.P_bar[0, 0] == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-9)


def test_ladder_small_cases(model):
    lad = build_ladder([[1.0]], 3, scalar(a=1.0))
    assert np.allclose(lad.traces, [1, 2, 3, 4])
    pb = Problem.build(model, 10)
    assert pb.ladder.traces[0] == pytest.approx(1.3411 + 1.0919, abs=1e-3)
    assert np.all(np.diff(pb.ladder.traces) > 0) and np.all(np.diff(pb.ladder.logdets) > 0)
    with pytest.raises(InputError):
        build_ladder([[1.0]], 0, scalar())


def test_stability_threshold_cases(model):
    assert stability_threshold(scalar(a=2.0)) == pytest.approx(0.75)
    eye = SystemModel(np.eye(2), [[1.0, 1.0]], np.eye(2), [[1.0]], 0.5, 0.5)
    assert stability_threshold(eye) == pytest.approx(0.0, abs=1e-12)
    assert stability_threshold(model) == pytest.approx(0.4227, abs=1e-4)


# ---------------------------------------------------------------- full DP

def test_stage_cost_scalar_hand_expansion():
    m = scalar()
    pb = Problem.build(m, 4)
    obj = ObjectiveConfig(0.7)
    assert stage_cost(0, 0, 0, obj, pb.ladder, m) == pytest.approx(0.6472, abs=1e-4)
    assert stage_cost(0, 0, 1, obj, pb.ladder, m) == pytest.approx(0.4472, abs=1e-4)
    info = ObjectiveConfig(0.7, "information")
    assert stage_cost(2, 1, 0, info, pb.ladder, m) == pytest.approx(0.7 * pb.ladder.traces[3])


def test_extreme_weights(model, problem):
    near_one = solve_finite_full(model, problem.ladder, 6, ObjectiveConfig(0.999))
    assert np.all(near_one.policy.nu == 1)
    near_zero = solve_finite_full(model, problem.ladder, 6, ObjectiveConfig(0.001))
    assert np.all(near_zero.policy.nu == 0)


def test_phi_sign_agrees_with_decisions(model, problem):
    obj = ObjectiveConfig(0.7)
    sol = solve_finite_full(model, problem.ladder, 5, obj)
    for k in range(1, 6):
        for n in range(6):
            for ne in range(6):
                gap = phi_gap(k, n, ne, sol.values, obj, problem.ladder, model)
                if sol.policy.at(k, n, ne):
                    assert gap > -1e-9


def test_thresholds_move_between_stages(model, problem):
    sol = solve_finite_full(model, problem.ladder, 10, ObjectiveConfig(0.7))
    for k in (4, 6):
        assert verify_threshold_rows(sol.policy.stage(k)[None], "n").ok
        assert verify_threshold_rows(sol.policy.stage(k)[None], "n_e").ok
    assert not np.array_equal(sol.policy.stage(4), sol.policy.stage(6))


# -------------------------------------------------------------- belief DP

def test_belief_reference_vectors(model):
    assert np.allclose(belief_update([0.6, 0.4, 0.0], 1, model), [0.6, 0.24, 0.16])
    pi = np.array([1.0, 0.0, 0.0])
    for _ in range(3):
        pi = belief_update_truncated(pi, 0, model, 2)
    assert np.allclose(pi, [0, 0, 1])
    assert np.allclose(belief_update_truncated([0, 0, 1.0], 0, model, 2), [0, 0, 1])
    assert np.allclose(belief_update_truncated([0.6, 0.4, 0.0], 1, model, 2), [0.6, 0.24, 0.16])


def test_expected_stat_reference(problem):
    lad = problem.ladder
    assert expected_eaves_stat([1.0, 0.0], lad, "covariance") == pytest.approx(lad.traces[1])
    assert expected_eaves_stat([0.5, 0.5], lad, "covariance") == pytest.approx(
        (lad.traces[1] + lad.traces[2]) / 2)
    assert expected_eaves_stat([0.6, 0.4], lad, "covariance") == pytest.approx(
        0.6 * lad.traces[1] + 0.4 * lad.traces[2])


def test_reliable_interception_makes_beliefs_point_masses(model):
    m = model.with_channels(lam_e=0.999)
    pb = Problem.build(m, 20)
    obj = ObjectiveConfig(0.6)
    full = solve_finite_full(m, pb.ladder, 6, obj)
    part = solve_finite_partial(m, pb.ladder, 6, obj)
    # follow the all-intercepted path: n_e = 0 after every transmission
    key, n, ne = ROOT, 0, 0
    for k in range(1, 7):
        a = full.policy.at(k, n, ne)
        assert part.action(k, n, key) == a
        key = key.child(a, None)
        n, ne = (0, 0) if a else (n + 1, ne + 1)


def test_exact_belief_depth_cap(model, problem):
    with pytest.raises(ResourceError, match="truncation"):
        solve_finite_partial(model, problem.ladder, 17, ObjectiveConfig(0.5))
    assert node_bound(3) == 4 * 15


def test_psi_gap_sign(model, problem):
    obj = ObjectiveConfig(0.5)
    sol = solve_finite_partial(model, problem.ladder, 4, obj)
    for st in sol.stages:
        for r, key in enumerate(st.keys):
            for n in range(5):
                g = psi_gap(st.k, n, key, sol, model, problem.ladder)
                assert g == pytest.approx(st.psi[r, n], rel=1e-12, abs=1e-12)
                if st.nu[r, n]:
                    assert g > -1e-9


# ------------------------------------------------------------ long run

def test_near_one_weight_is_always_transmit_and_matches_simulation(model):
    pb = Problem.build(model, 40)
    obj = ObjectiveConfig(0.999, "information")
    sol = relative_value_iteration(model, pb.ladder, obj, N=30)
    assert np.all(sol.policy.stage(1) == 1)
    rec = simulate(model, pb.ladder, SimConfig(1_000_000, 0, always_transmit()))
    assert sol.rho == pytest.approx(0.999 * rec.mean_trP + 0.001 * rec.mean_Ie, rel=0.02)


def test_min_t_zero_when_interception_rare(model):
    m = model.with_channels(lam_e=0.01)
    assert min_t_for_unbounded(m) == 0


def test_threshold_policy_cases():
    assert all(threshold_policy(0)(n) == 1 for n in range(5))
    p = threshold_policy(3)
    assert p(2) == 0 and p(3) == 1


def test_scalar_unstable_mode_bounds():
    m = scalar(a=2.0, lam=0.6, lam_e=0.6)
    lb = leakage_bounds(m, steady_state_filter(m))
    assert lb.delta_L <= math.log(2) + 1e-12 <= lb.delta_U + 1e-12


# ------------------------------------------------------------- measurement

def test_composition_codes(meas_model):
    P0 = steady_state_filter(meas_model).P_bar_plus
    assert np.allclose(composition_value("", P0, meas_model), P0)
    assert np.allclose(composition_value("1", P0, meas_model), riccati_predict(P0, meas_model))
    assert np.allclose(composition_value("0", P0, meas_model), riccati_update(P0, meas_model))


def test_scalar_measurement_reference_case():
    m = scalar(a=1.2, lam=0.6, lam_e=0.6)
    sol = solve_finite_full_meas(m, 4, 0.7)
    assert all(scalar_threshold_check(sol, k).ok for k in range(1, 5))
    # stage 1 has a single state: trivially a threshold
    assert scalar_threshold_check(sol, 1).summary == (1, 1)


# --------------------------------------------------------------- structure

def test_scan_reference_cases():
    assert verify_threshold_rows(np.zeros((1, 3, 3), dtype=int), "n").ok
    assert verify_threshold_rows(np.zeros((1, 3, 3), dtype=int), "n_e").ok
    assert scan_sequence([0, 1, 0]) == (False, (1, 2))


def test_lemma_suite_equal_pairs_and_shift(model):
    # every pair with X == Y is included; no violations possible there
    assert verify_lemma_suite(model, samples=10, seed=5).ok
    X = np.array([[2.0, 0.3], [0.3, 1.0]])
    Y = X + np.eye(2)
    A = np.array(model.A)
    diff = np.trace(riccati_predict(Y, model)) - np.trace(riccati_predict(X, model))
    assert diff == pytest.approx(np.trace(A @ A.T))


# ---------------------------------------------------------------- simulation

def test_reception_frequency_within_binomial_bounds(model, problem):
    rec = simulate(model, problem.ladder, SimConfig(1_000_000, 11, always_transmit()))
    for draws, p in ((rec.gamma, model.lam), (rec.gamma_e, model.lam_e)):
        sigma = math.sqrt(p * (1 - p) / len(draws))
        assert abs(draws.mean() - p) < 3 * sigma


def test_aggregate_identical_seeds(model, problem):
    a = simulate(model, problem.ladder, SimConfig(2000, 4, Threshold(1)))
    b = simulate(model, problem.ladder, SimConfig(2000, 4, Threshold(1)))
    agg = aggregate([a, b])
    assert agg.mean_trP == a.mean_trP and agg.se_trP == 0.0
    assert aggregate([a]).mean_trPe == pytest.approx(a.mean_trPe)


def test_sweep_endpoints(model, problem):
    betas = [0.05, 0.3, 0.6, 0.95]
    pts = sweep_beta(model, 10, "covariance", "full", betas, 0, problem=problem, exact=True)
    assert pts[-1].mean_trP == min(p.mean_trP for p in pts)
    assert pts[0].mean_trPe == max(p.mean_trPe for p in pts)


def test_cli_simulate_threshold_one(capsys):
    assert run(["simulate", "--model", "paper.json", "--policy", "threshold:1",
                "--steps", "1000000", "--seed", "7"]) == 0
    head, row = capsys.readouterr().out.splitlines()
    rec = dict(zip(head.split(","), row.split(",")))
    assert float(rec["mean_trP"]) == pytest.approx(5.59, rel=0.05)


def test_cli_verify_reference_run(capsys):
    assert run(["verify", "--model", "paper.json", "--horizon", "10", "--beta", "0.7"]) == 0


@pytest.mark.slow
def test_pooled_threshold_one_estimator_mean(model):
    """100 seeds of the t=1 run: pooled mean within two standard errors of 5.59."""
    pb = Problem.build(model, 60)
    recs = [simulate(model, pb.ladder, SimConfig(1_000_000, s, Threshold(1))) for s in range(100)]
    agg = aggregate(recs)
    assert abs(agg.mean_trP - 5.59) <= 2 * agg.se_trP, (agg.mean_trP, agg.se_trP)
