import math

import numpy as np
import pytest

from fedsched import data, dual, training
from fedsched.params import NetworkParams, db_to_linear
from fedsched.training import (
    BernoulliChannel,
    PhysicalChannel,
    _eta_next,
    conditional_success,
    make_channel,
    solve_primal,
    train_algorithm1,
    train_algorithm2,
)
from fedsched.rates import RateQuery, success_prob


def small(loss="logistic", K=4, N=2, xi=0.1, n=20, d=3, seed=3, theta_db=-20.0):
    ds = data.generate_synthetic(n, d, 2.0, 0.0, seed=seed)
    prob = data.build_problem(ds, K, loss, xi=xi)
    p = NetworkParams(ues_per_cell=K, subchannels=N, sinr_threshold=db_to_linear(theta_db))
    return prob, p


def test_eta_running_average():
    eta = _eta_next(123.0, 0, 7, 10)
    assert eta == pytest.approx(0.7, abs=1e-15)
    assert _eta_next(eta, 1, 3, 10) == pytest.approx(0.5, abs=1e-15)


def test_eta_matches_decode_average():
    prob, p = small(K=10, N=5, n=40)
    res = train_algorithm2(prob, p, "RS", rounds=30, master_seed=2)
    for r in res.records[1:]:
        mean = np.mean([q.decodes for q in res.records[1:r.round + 1]]) / p.subchannels
        assert r.eta == pytest.approx(mean, abs=1e-12)


@pytest.mark.parametrize("policy", ["RS", "RR", "PF", "NS"])
def test_weak_duality_and_identity(policy):
    prob, p = small()
    res = train_algorithm2(prob, p, policy, rounds=40, master_seed=5)
    for r in res.records:
        assert r.gap >= -1e-9
        assert r.drift <= 1e-12
    assert res.records[0].gap == pytest.approx(math.log(2), rel=1e-12)


@pytest.mark.parametrize("loss", ["least_squares", "squared_smooth_hinge", "logistic"])
def test_ideal_ns_gap_is_monotone(loss):
    prob, p = small(loss, K=4, N=4)
    res = train_algorithm2(prob, p, "NS", "ideal", rounds=40, master_seed=1)
    D = [r.dual for r in res.records]
    assert all(b >= a - 1e-12 for a, b in zip(D, D[1:]))
    assert res.records[-1].gap < 1e-3 * res.records[0].gap


def test_more_local_passes_help():
    prob, p = small(K=4, N=4, xi=0.05)
    g1 = train_algorithm2(prob, p, "NS", "ideal", rounds=15, H=1, master_seed=1).gaps()[-1]
    g8 = train_algorithm2(prob, p, "NS", "ideal", rounds=15, H=8, master_seed=1).gaps()[-1]
    assert g8 < g1


def test_eta_reference_update_drifts():
    prob, p = small()
    res = train_algorithm2(prob, p, "RS", rounds=20, master_seed=1, reference_update="eta")
    assert max(r.drift for r in res.records) > 1e-6
    with pytest.raises(ValueError):
        train_algorithm2(prob, p, "RS", rounds=1, reference_update="bogus")


def test_multi_round_only_moves_on_aggregation():
    prob, p = small(K=4, N=2)
    res = train_algorithm2(prob, p, "MultiRound(2)", "ideal", rounds=6, master_seed=1)
    D = [r.dual for r in res.records]
    assert D[1] == D[0] and D[3] == D[2] and D[2] > D[0]


@pytest.mark.parametrize("loss,xi", [("least_squares", 1.0), ("squared_smooth_hinge", 0.1),
                                     ("squared_smooth_hinge", 1.0)])
def test_rs_contracts_at_predicted_rate(loss, xi):
    # ideal decoding: a scheduled UE always delivers, U = N/K
    prob, p = small(loss, K=4, N=2, xi=xi)
    res = train_algorithm2(prob, p, "RS", "ideal", rounds=60, master_seed=1, beta_every=1)
    g = res.gaps()
    ok = g > 1e-11
    slope = np.polyfit(np.arange(g.size)[ok], np.log(g[ok]), 1)[0]
    pred = math.log1p(-(1 - res.beta_max) * p.subchannels / p.ues_per_cell)
    assert slope <= pred + 0.05


def test_beta_measurement_recorded():
    prob, p = small()
    res = train_algorithm2(prob, p, "RS", rounds=5, master_seed=1, beta_every=2)
    betas = [r.beta for r in res.records]
    assert math.isnan(betas[0]) and not math.isnan(betas[1]) and math.isnan(betas[2])
    assert 0 < res.beta_max < 1


def test_stop_gap_and_rounds_to():
    prob, p = small(K=4, N=4)
    res = train_algorithm2(prob, p, "NS", "ideal", rounds=500, master_seed=1, stop_gap=1e-4)
    assert res.records[-1].gap <= 1e-4 and res.records[-2].gap > 1e-4
    assert res.rounds_to(1e-4) == res.records[-1].round
    assert res.rounds_to(-1.0) == math.inf


def test_determinism_and_seed_sensitivity():
    prob, p = small()
    a = train_algorithm2(prob, p, "RS", rounds=20, master_seed=4)
    b = train_algorithm2(prob, p, "RS", rounds=20, master_seed=4)
    c = train_algorithm2(prob, p, "RS", rounds=20, master_seed=5)
    assert np.array_equal(a.gaps(), b.gaps())
    assert [r.selected for r in a.records] == [r.selected for r in b.records]
    assert not np.array_equal(a.gaps(), c.gaps())


def test_metric_is_recorded():
    prob, p = small()
    res = train_algorithm2(prob, p, "RS", rounds=3, metric=lambda w: data.accuracy(w, prob.X, prob.y))
    assert all(0 <= r.metric <= 1 for r in res.records)


def test_physical_channel_runs_and_decodes_less_at_high_threshold():
    prob, p = small(K=10, N=5, n=40)
    lo = train_algorithm2(prob, p.with_(sinr_threshold=db_to_linear(-30)), "RS", "physical", rounds=40)
    hi = train_algorithm2(prob, p.with_(sinr_threshold=db_to_linear(30)), "RS", "physical", rounds=40)
    assert sum(r.decodes for r in lo.records) > sum(r.decodes for r in hi.records)
    assert isinstance(make_channel("physical", p, "RS", 0), PhysicalChannel)
    with pytest.raises(ValueError):
        make_channel("bogus", p, "RS", 0)


def test_bernoulli_channel_rate():
    p = NetworkParams(ues_per_cell=20, subchannels=5)
    ch = BernoulliChannel(p, "RS", 0)
    assert ch.p_decode == pytest.approx(success_prob(RateQuery(p, "RS")) * p.group_ratio, rel=1e-12)
    assert conditional_success(p, "NS") < ch.p_decode


def test_problem_size_must_match_network():
    prob, p = small(K=4)
    with pytest.raises(ValueError):
        train_algorithm2(prob, p.with_(ues_per_cell=5), "RS", rounds=1)
    with pytest.raises(ValueError):
        train_algorithm2(prob, p, "RS", rounds=1, H=0)


def test_algorithm1_single_ue_is_gradient_descent():
    ds = data.generate_synthetic(1, 2, seed=0)
    prob = data.build_problem(ds, 1, "logistic", xi=0.1)
    p = NetworkParams(ues_per_cell=1, subchannels=1)
    res = train_algorithm1(prob, p, "NS", "ideal", rounds=10, tau=1, step=0.3)
    w = np.zeros(2)
    for _ in range(10):
        u = prob.X.T @ w
        w = w - 0.3 * (prob.X @ prob.loss.grad(u, prob.y) + prob.xi * w)
    assert np.allclose(res.w, w, atol=1e-14)


def test_algorithm1_improves_under_ideal_channel():
    prob, p = small(K=4, N=2, n=40)
    w_star, p_star = solve_primal(prob)
    gaps = np.array([train_algorithm1(prob, p, "RS", "ideal", rounds=60, p_star=p_star,
                                      master_seed=s).gaps() for s in range(5)]).mean(axis=0)
    assert gaps[-1] < 0.2 * gaps[0]
    assert np.all(gaps >= -1e-12)
    with pytest.raises(ValueError):
        train_algorithm1(prob, p, tau=0)
    with pytest.raises(ValueError):
        train_algorithm1(prob, p, step=0.0)


def test_solve_primal_is_stationary():
    prob, _ = small()
    w, f = solve_primal(prob)
    g = prob.X @ prob.loss.grad(prob.X.T @ w, prob.y) / prob.n + prob.xi * w
    assert np.linalg.norm(g) < 1e-8
    assert f == pytest.approx(dual.primal_objective(w, prob), rel=1e-14)
    assert training.REFERENCE_UPDATES == ("delivered", "eta")
