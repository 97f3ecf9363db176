import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsched.scheduling import Scheduler, fairness_audit, write_decision_log
from fedsched.rng import stream


def test_rr_cycles_contiguous_groups():
    s = Scheduler("RR", 6, 2)
    groups = [s.select(t).selected.tolist() for t in range(5)]
    assert groups == [[0, 1], [2, 3], [4, 5], [0, 1], [2, 3]]
    assert s.state.rr_group_pointer == 2


@settings(max_examples=30, deadline=None)
@given(K=st.integers(1, 40), N=st.integers(1, 40), start=st.integers(0, 30))
def test_rr_each_ue_once_per_window(K, N, start):
    if N > K:
        return
    s = Scheduler("RR", K, N)
    G = s.state.G
    for t in range(start + G):
        s.select(t)
    counts = fairness_audit(s.log, K, (start, start + G))
    assert np.all(counts == 1)


def test_pf_equal_averages_picks_largest_snapshots():
    s = Scheduler("PF", 8, 3)
    snap = np.array([0.1, 5.0, 0.3, 2.0, 9.0, 0.2, 0.0, 1.0])
    assert s.select(0, snap).selected.tolist() == [1, 3, 4]


def test_pf_ties_broken_by_lowest_index():
    s = Scheduler("PF", 6, 2)
    assert s.select(0, np.ones(6)).selected.tolist() == [0, 1]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(1e-3, 1e3))
def test_pf_invariant_to_common_scale(seed, scale):
    rng = np.random.default_rng(seed)
    avg = rng.uniform(0.5, 2.0, 12)
    snap = rng.exponential(size=12)
    a = Scheduler("PF", 12, 4, mean_snr=avg).select(0, snap).selected
    b = Scheduler("PF", 12, 4, mean_snr=avg).select(0, snap * scale).selected
    assert np.array_equal(a, b)


def test_pf_needs_snapshot():
    with pytest.raises(ValueError):
        Scheduler("PF", 4, 2).select(0)
    with pytest.raises(ValueError):
        Scheduler("PF", 4, 2).select(0, np.ones(3))


def test_rejects_more_channels_than_ues():
    with pytest.raises(ValueError):
        Scheduler("RS", 4, 5)


def test_rs_marginal_selection_probability():
    s = Scheduler("RS", 100, 10, stream(3, "rs"))
    for t in range(100_000):
        s.select(t)
    freq = fairness_audit(s.log, 100) / 100_000
    assert np.all(np.abs(freq - 0.1) <= 0.005)


def test_rs_fairness_concentration():
    s = Scheduler("RS", 100, 10, stream(4, "rs"))
    for t in range(10_000):
        s.select(t)
    c = fairness_audit(s.log, 100)
    assert c.max() / c.min() < 1.5


@settings(max_examples=25, deadline=None)
@given(policy=st.sampled_from(["RS", "RR", "PF", "NS", "OneShot", "MultiRound(2)"]),
       K=st.integers(2, 30), N=st.integers(1, 10), seed=st.integers(0, 1000))
def test_decisions_are_well_formed(policy, K, N, seed):
    if N > K:
        return
    s = Scheduler(policy, K, N, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    for t in range(6):
        d = s.select(t, rng.exponential(size=K))
        sel = d.selected
        assert len(set(sel.tolist())) == sel.size
        assert np.all((0 <= sel) & (sel < K))
        if policy == "NS":
            assert sel.size == K
            assert np.all(np.bincount(d.channel, minlength=N) >= K // N)
        elif policy == "OneShot":
            assert sel.tolist() == [t % K] and d.channel.tolist() == [0]
        else:
            assert sorted(d.channel.tolist()) == list(range(sel.size))
            if policy != "RR":
                assert sel.size == N


def test_ns_deals_channels_evenly():
    d = Scheduler("NS", 100, 10).select(0)
    assert np.all(np.bincount(d.channel) == 10)


def test_multi_round_aggregates_every_c():
    s = Scheduler("MultiRound(4)", 100, 10, stream(1))
    flags = [s.select(t).aggregate for t in range(12)]
    assert flags == [False, False, False, True] * 3
    with pytest.raises(ValueError):
        Scheduler("MultiRound", 100, 10)


def test_pf_average_updates():
    s = Scheduler("PF", 3, 1, forgetting=1.0)
    snap = np.array([0.5, 2.0, 3.0])
    s.update_pf_average(snap)
    assert np.array_equal(s.state.pf_avg_snr, snap)
    s = Scheduler("PF", 3, 1, forgetting=0.1)
    for i in range(50):
        s.update_pf_average(np.full(3, 4.0))
        assert np.allclose(s.state.pf_avg_snr - 4.0, -3.0 * 0.9 ** (i + 1))


def test_pf_average_tracks_mean_of_iid_stream():
    s = Scheduler("PF", 5, 2, forgetting=0.05)
    rng = stream(2, "snr")
    hist = []
    for _ in range(10_000):
        s.update_pf_average(rng.exponential(2.0, size=5))
        hist.append(s.state.pf_avg_snr.copy())
    assert np.mean(hist[1000:]) == pytest.approx(2.0, rel=0.02)


def test_fairness_audit_cycles():
    s = Scheduler("RR", 12, 3)
    for t in range(s.state.G):
        s.select(t)
    assert np.all(fairness_audit(s.log, 12) == 1)
    s = Scheduler("NS", 7, 2)
    for t in range(9):
        s.select(t)
    assert np.all(fairness_audit(s.log, 7) == 9)
    with pytest.raises(ValueError):
        fairness_audit([], 3)


def test_decision_log_file(tmp_path):
    s = Scheduler("RR", 4, 2)
    for t in range(3):
        s.select(t)
    path = tmp_path / "log.csv"
    write_decision_log(s.log, path, s.label, ["seed: 0"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed: 0"
    assert lines[1] == "round,policy,selected,channels,aggregate"
    assert lines[2] == "0,RR,0 1,0 1,1"
    assert lines[4] == "2,RR,0 1,0 1,1"
