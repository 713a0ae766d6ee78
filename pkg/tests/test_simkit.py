import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covert_sched.belief_dp import solve_finite_partial
from covert_sched.errors import InputError, MixError, TruncationError
from covert_sched.horizon_inf import relative_value_iteration, relative_value_iteration_belief
from covert_sched.meas_tx import solve_finite_full_meas, solve_finite_partial_meas
from covert_sched.model import Problem
from covert_sched.sched_dp import ObjectiveConfig, solve_finite_full
from covert_sched.simkit import (BeliefTable, FullInfoTable, Measurement, Mode, NeverTransmit,
                                 SimConfig, Stationary, StationaryBelief, Threshold, aggregate,
                                 always_transmit, curve_csv, evaluate_finite, parse_policy,
                                 simulate, simulate_batch, summary_csv, summary_row, sweep_beta)


def test_parse_policy():
    assert isinstance(parse_policy("threshold:3"), Threshold)
    assert parse_policy("always").t == 0
    assert isinstance(parse_policy("never"), NeverTransmit)
    for bad in ("threshold:x", "sometimes", "threshold:-1"):
        with pytest.raises(InputError):
            parse_policy(bad)


def test_config_validation(model, problem):
    sol = solve_finite_full(model, problem.ladder, 3, ObjectiveConfig(0.5))
    with pytest.raises(InputError):
        SimConfig(0, 0, Threshold(1))
    with pytest.raises(InputError):
        SimConfig(5, 0, FullInfoTable(sol))          # table only covers 3 stages
    with pytest.raises(InputError):
        SimConfig(5, 0, Threshold(1), mode=Mode.MEASUREMENT)


def test_same_seed_same_record(model, problem):
    a = simulate(model, problem.ladder, SimConfig(5000, 7, Threshold(2)))
    b = simulate(model, problem.ladder, SimConfig(5000, 7, Threshold(2)))
    assert np.array_equal(a.nu, b.nu) and np.array_equal(a.I_e, b.I_e)
    assert a.trace_csv() == b.trace_csv()
    c = simulate(model, problem.ladder, SimConfig(5000, 8, Threshold(2)))
    assert not np.array_equal(a.gamma, c.gamma)


def test_channels_are_common_across_policies(model, problem):
    a = simulate(model, problem.ladder, SimConfig(2000, 3, Threshold(1)))
    b = simulate(model, problem.ladder, SimConfig(2000, 3, always_transmit()))
    assert np.array_equal(a.gamma, b.gamma) and np.array_equal(a.gamma_e, b.gamma_e)


def test_record_bookkeeping(model, problem):
    rec = simulate(model, problem.ladder, SimConfig(3000, 1, Threshold(1)))
    # holding counts follow the decision and channel sequences
    n = 0
    for k in range(rec.steps):
        n = 0 if rec.nu[k] and rec.gamma[k] else n + 1
        assert rec.n[k] == n
    assert np.all((rec.I_e > 0) == (rec.nu.astype(bool) & rec.gamma_e.astype(bool)))
    assert rec.mean_trP == pytest.approx(np.mean(problem.ladder.traces[rec.n]))
    assert 0 < rec.tx_rate < 1


def test_never_transmit_grows_without_bound(model, problem):
    rec = simulate(model, problem.ladder, SimConfig(200, 0, NeverTransmit()))
    assert rec.tx_rate == 0 and rec.mean_Ie == 0
    assert np.all(np.diff(rec.n) == 1)
    with pytest.raises(TruncationError):
        simulate(model, problem.ladder, SimConfig(200, 0, NeverTransmit(), extend_ladder=False))


def test_heavy_tail_extrapolation_flagged(model):
    pb = Problem.build(model, 10)
    rec = simulate(model, pb.ladder, SimConfig(20_000, 0, NeverTransmit()))
    assert rec.extrapolated and np.isfinite(rec.log_trPe).all()


def test_threshold_one_matches_invariant_law(model, problem):
    """Long-run mean tr P under threshold t equals its stationary expectation."""
    lam, t = model.lam, 1
    tr = problem.ladder.traces
    w = np.concatenate([np.ones(t), (1 - lam) ** np.arange(len(tr) - t)])
    exact = float(w @ tr / w.sum())
    rec = simulate(model, problem.ladder, SimConfig(200_000, 0, Threshold(t)))
    assert rec.mean_trP == pytest.approx(exact, rel=0.02)


def test_state_tracking_agrees_with_covariances(model, problem):
    rec = simulate(model, problem.ladder, SimConfig(100_000, 2, Threshold(0), track_states=True))
    err = rec.state_error
    assert err["mse_sensor"] == pytest.approx(np.trace(problem.steady.P_bar), rel=0.05)
    assert err["mse_estimator"] == pytest.approx(rec.mean_trP, rel=0.05)


@pytest.mark.parametrize("kind", ["covariance", "information"])
def test_exact_evaluation_reproduces_dp_value(model, problem, kind):
    K, beta = 6, 0.55
    obj = ObjectiveConfig(beta, kind)
    full = solve_finite_full(model, problem.ladder, K, obj)
    res = evaluate_finite(model, problem.ladder, FullInfoTable(full), K)
    if kind == "covariance":
        got = K * (beta * res.mean_trP - (1 - beta) * res.mean_trPe)
    else:
        got = K * (beta * res.mean_trP + (1 - beta) * res.mean_Ie)
    assert got == pytest.approx(full.values.at(1, 0, 0), rel=1e-10)
    part = solve_finite_partial(model, problem.ladder, K, obj)
    res = evaluate_finite(model, problem.ladder, BeliefTable(part), K)
    if kind == "covariance":
        got = K * (beta * res.mean_trP - (1 - beta) * res.mean_trPe)
    else:
        got = K * (beta * res.mean_trP + (1 - beta) * res.mean_Ie)
    assert got == pytest.approx(part.value(1, 0), rel=1e-10)


def test_batch_monte_carlo_agrees_with_exact(model, problem):
    K = 8
    sol = solve_finite_full(model, problem.ladder, K, ObjectiveConfig(0.6, "information"))
    pol = FullInfoTable(sol)
    exact = evaluate_finite(model, problem.ladder, pol, K)
    mc = simulate_batch(model, problem.ladder, pol, K, 40_000, 0)
    assert abs(mc.mean_trP - exact.mean_trP) < 5 * mc.se_trP
    assert abs(mc.mean_Ie - exact.mean_Ie) < 5 * mc.se_Ie


def test_stationary_policies_run(model, problem):
    obj = ObjectiveConfig(0.1, "information")
    full = relative_value_iteration(model, problem.ladder, obj, N=10)
    part = relative_value_iteration_belief(model, problem.ladder, obj, N=8)
    for pol in (Stationary(full), StationaryBelief(part)):
        rec = simulate(model, problem.ladder, SimConfig(20_000, 0, pol))
        assert np.isfinite(rec.mean_trP) and rec.mean_Ie > 0


def test_measurement_mode_runs(meas_model):
    for sol in (solve_finite_full_meas(meas_model, 5, 0.6), solve_finite_partial_meas(meas_model, 5, 0.6)):
        pol = Measurement(sol)
        rec = simulate(meas_model, None, SimConfig(5, 0, pol, mode=Mode.MEASUREMENT))
        assert rec.steps == 5 and rec.mean_Ie == 0
        res = simulate_batch(meas_model, None, pol, 5, 20_000, 0)
        # the sample mean cost is close to the optimal value
        cost = 5 * (0.6 * res.mean_trP - 0.4 * res.mean_trPe)
        assert cost == pytest.approx(sol.root_value, abs=0.05 * abs(sol.root_value) + 0.1)


def test_aggregate_and_csv(model, problem):
    recs = [simulate(model, problem.ladder, SimConfig(1000, s, Threshold(2))) for s in (2, 0, 1)]
    agg = aggregate(recs)
    assert agg.seeds == (0, 1, 2) and agg.runs == 3 and agg.steps == 3000
    other = simulate(model, problem.ladder, SimConfig(1000, 0, Threshold(3)))
    with pytest.raises(MixError):
        aggregate(recs + [other])
    text = summary_csv([summary_row(r, "", 2) for r in recs])
    assert text.splitlines()[0] == "policy,beta,t,mean_trP,mean_trPe,mean_Ie,tx_rate,steps,seed"


def test_sweep_annotates_beta_and_is_deterministic(model, problem):
    a = sweep_beta(model, 4, "covariance", "full", [0.3, 0.8], 0, problem=problem, exact=True)
    b = sweep_beta(model, 4, "covariance", "full", [0.3, 0.8], 0, problem=problem, exact=True)
    assert curve_csv(a) == curve_csv(b)
    with pytest.raises(InputError, match="beta"):
        sweep_beta(model, 4, "covariance", "full", [0.3, 1.2], 0, problem=problem, exact=True)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 6), st.integers(0, 10_000))
def test_threshold_rate_formula(t, seed):
    """Under threshold t the fraction of transmitting steps tracks its stationary value."""
    from covert_sched.model import load_model
    m = load_model("paper.json")
    pb = Problem.build(m, 40)
    rec = simulate(m, pb.ladder, SimConfig(20_000, seed, Threshold(t)))
    lam = m.lam
    # stationary mass on n >= t: (1/lam) / (t + 1/lam)
    assert rec.tx_rate == pytest.approx((1 / lam) / (t + 1 / lam), abs=0.03)
