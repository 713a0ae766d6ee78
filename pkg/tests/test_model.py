import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covert_sched.errors import DivergenceError, InputError, ModelError, TruncationError
from covert_sched.model import (Problem, SystemModel, build_ladder, load_model, psd_leq,
                                riccati_predict, riccati_update, spectral_radius,
                                stability_threshold, steady_state_filter)

import oracles as O


def test_bundled_models_load(model, meas_model):
    assert model.n_x == 2 and model.n_y == 1
    assert np.allclose(meas_model.C, [[1.0, -0.5]])
    assert model.lam == model.lam_e == 0.6


def test_model_roundtrip_and_fingerprint(model, tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(model.to_dict()))
    again = load_model(p)
    assert again.fingerprint() == model.fingerprint()
    assert model.with_channels(lam_e=0.8).fingerprint() != model.fingerprint()


@pytest.mark.parametrize("kw, err", [
    (dict(Q=[[1.0, 0.5], [0.0, 1.0]]), InputError),
    (dict(Q=[[1.0, 0.0], [0.0, -1.0]]), InputError),
    (dict(R=[[0.0]]), InputError),
    (dict(lam=1.0), InputError),
    (dict(lam_e=0.0), InputError),
    (dict(C=[[1.0, 2.0, 3.0]]), ModelError),
    (dict(A=[[1.0, 0.0]]), ModelError),
])
def test_model_validation(kw, err):
    base = dict(A=np.eye(2), C=[[1.0, 0.0]], Q=np.eye(2), R=[[1.0]], lam=0.5, lam_e=0.5)
    base.update(kw)
    with pytest.raises(err):
        SystemModel(**base)


def test_missing_keys_rejected(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"A": [[1.0]]}))
    with pytest.raises(ModelError, match="missing"):
        load_model(p)


def test_steady_state_is_fixed_point(model):
    ss = steady_state_filter(model)
    assert np.allclose(riccati_update(ss.P_bar_plus, model), ss.P_bar_plus, atol=1e-9)
    _, Pp = O.steady(np.array(model.A), np.array(model.C), np.array(model.Q), np.array(model.R))
    assert np.allclose(ss.P_bar_plus, Pp, atol=1e-8)
    # the posterior is smaller than the prior
    assert psd_leq(ss.P_bar, ss.P_bar_plus)


def test_undetectable_model_diverges():
    m = SystemModel([[1.5, 0.0], [0.0, 1.2]], [[1.0, 0.0]], np.eye(2), [[1.0]], 0.5, 0.5)
    with pytest.raises(DivergenceError):
        steady_state_filter(m)


def test_ladder_matches_repeated_prediction(problem, model):
    lad = problem.ladder
    X = problem.steady.P_bar
    for n in range(12):
        assert np.allclose(lad.rungs[n], X, rtol=1e-12)
        assert lad.traces[n] == pytest.approx(np.trace(X), rel=1e-12)
        assert lad.logdets[n] == pytest.approx(np.linalg.slogdet(X)[1], rel=1e-10, abs=1e-10)
        X = riccati_predict(X, model)
    with pytest.raises(TruncationError):
        lad.require(lad.N + 1)


def test_deep_ladder_logdets_stay_finite(model):
    lad = build_ladder(steady_state_filter(model).P_bar, 300, model)
    assert np.all(np.isfinite(lad.logdets))
    # only the unstable mode keeps growing, at 2 log rho(A) per step
    rate = np.diff(lad.logdets[-20:])
    assert np.allclose(rate, 2 * np.log(spectral_radius(model.A)), rtol=1e-6)


def test_spectral_quantities(model):
    assert spectral_radius(model.A) == pytest.approx(1.3162277660, rel=1e-9)
    assert stability_threshold(model) == pytest.approx(0.4227846, abs=1e-6)


def test_problem_deepen_reuses_when_shallow(problem):
    assert problem.deepen(10) is problem
    assert problem.deepen(60).ladder.N == 60


sym2 = st.lists(st.floats(-2, 2), min_size=4, max_size=4)


@settings(max_examples=60, deadline=None)
@given(sym2, sym2, st.integers(1, 6))
def test_riccati_maps_are_monotone(a, b, n):
    """X <= Y implies f(X) <= f(Y) and g(X) <= g(Y)."""
    m = load_model("paper.json")
    W = np.array(a).reshape(2, 2)
    D = np.array(b).reshape(2, 2)
    X = W @ W.T + 0.1 * np.eye(2)
    Y = X + D @ D.T
    for _ in range(n):
        assert psd_leq(riccati_predict(X, m), riccati_predict(Y, m), tol=1e-8)
        assert psd_leq(riccati_update(X, m), riccati_update(Y, m), tol=1e-8)
        assert psd_leq(riccati_update(X, m), riccati_predict(X, m), tol=1e-8)
        X, Y = riccati_predict(X, m), riccati_predict(Y, m)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_ladder_is_increasing(seed):
    """Rungs f^n(Pbar) are increasing in n in the PSD order."""
    m = O.random_model(np.random.default_rng(seed), 2)
    try:
        pb = Problem.build(m, 8)
    except DivergenceError:
        return
    for lo, hi in zip(pb.ladder.rungs, pb.ladder.rungs[1:]):
        assert psd_leq(lo, hi, tol=1e-8)
    assert np.all(np.diff(pb.ladder.traces) > 0)
