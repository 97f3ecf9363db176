"""Per-round UE selection policies and subchannel assignment."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .params import NetworkParams, Policy, parse_policy, policy_label


@dataclass
class ScheduleDecision:
    round: int
    selected: np.ndarray  # UE indices, ascending for RS/RR/PF/NS
    channel: np.ndarray  # channel[i] is the subchannel of selected[i]
    aggregate: bool = True  # False on non-final multi-round subrounds

    def channel_map(self) -> dict:
        return {int(k): int(c) for k, c in zip(self.selected, self.channel)}


@dataclass
class SchedulerState:
    policy: Policy
    K: int
    N: int
    multi_round: int | None = None
    rr_group_pointer: int = 0
    pf_avg_snr: np.ndarray | None = None
    multi_round_phase: int = 0
    forgetting: float = 0.05

    @property
    def G(self):
        return -(-self.K // self.N)


class Scheduler:
    """Stateful scheduler for one cell.

    ``rng`` drives the random policies; ``mean_snr`` warm-starts the PF
    averages (a scalar or per-UE vector, default 1).
    """

    def __init__(self, policy, K: int, N: int, rng: np.random.Generator | None = None,
                 multi_round: int | None = None, forgetting: float = 0.05, mean_snr=1.0):
        pol, c = parse_policy(policy)
        if N < 1 or N > K:
            raise ValueError(f"need 1 <= N <= K, got N={N}, K={K}")
        if multi_round is None:
            multi_round = c
        if pol is Policy.MULTI_ROUND and (multi_round is None or multi_round < 1):
            raise ValueError("MultiRound needs a positive period C")
        if not 0 < forgetting <= 1:
            raise ValueError("forgetting factor must lie in (0, 1]")
        avg = None
        if pol is Policy.PF:
            avg = np.broadcast_to(np.asarray(mean_snr, dtype=float), (K,)).copy()
            if np.any(avg <= 0):
                raise ValueError("PF warm-start SNR must be positive")
        self.state = SchedulerState(pol, K, N, multi_round, 0, avg, 0, forgetting)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.log: list[ScheduleDecision] = []

    @classmethod
    def for_params(cls, policy, params: NetworkParams, rng=None, **kw):
        return cls(policy, params.ues_per_cell, params.subchannels, rng, **kw)

    @property
    def policy(self):
        return self.state.policy

    @property
    def label(self):
        return policy_label(self.state.policy, self.state.multi_round)

    @property
    def needs_snapshot(self):
        return self.state.policy is Policy.PF

    def select(self, t: int, snapshot=None) -> ScheduleDecision:
        st = self.state
        K, N = st.K, st.N
        pol = st.policy
        agg = True
        if pol is Policy.RS or pol is Policy.MULTI_ROUND:
            sel = np.sort(self.rng.choice(K, size=N, replace=False))
            chan = np.arange(N)
            if pol is Policy.MULTI_ROUND:
                agg = st.multi_round_phase == st.multi_round - 1
                st.multi_round_phase = (st.multi_round_phase + 1) % st.multi_round
        elif pol is Policy.RR:
            g = st.rr_group_pointer
            sel = np.arange(g * N, min(g * N + N, K))
            chan = np.arange(sel.size)
            st.rr_group_pointer = (g + 1) % st.G
        elif pol is Policy.PF:
            if snapshot is None:
                raise ValueError("PF selection needs an instantaneous SNR snapshot")
            snap = np.asarray(snapshot, dtype=float)
            if snap.shape != (K,):
                raise ValueError(f"snapshot must have length K={K}")
            ratio = snap / st.pf_avg_snr
            # stable sort on -ratio keeps the lowest index first among ties
            sel = np.sort(np.argsort(-ratio, kind="stable")[:N])
            chan = np.arange(N)
            self.update_pf_average(snap)
        elif pol is Policy.NS:
            sel = np.arange(K)
            chan = sel % N
        elif pol is Policy.ONE_SHOT:
            sel = np.array([t % K])
            chan = np.array([0])
        else:
            raise ValueError(f"unknown policy {pol!r}")
        dec = ScheduleDecision(t, sel, chan, agg)
        self.log.append(dec)
        return dec

    def update_pf_average(self, snapshot):
        st = self.state
        snap = np.asarray(snapshot, dtype=float)
        if snap.shape != (st.K,):
            raise ValueError(f"snapshot must have length K={st.K}")
        if st.pf_avg_snr is None:
            st.pf_avg_snr = snap.copy()
        else:
            w = st.forgetting
            st.pf_avg_snr = (1 - w) * st.pf_avg_snr + w * snap
        return st


def fairness_audit(log, K: int, window: tuple[int, int] | None = None) -> np.ndarray:
    """Selection count per UE over decisions with round in [start, stop)."""
    if not log:
        raise ValueError("empty decision log")
    counts = np.zeros(K, dtype=np.int64)
    for dec in log:
        if window is not None and not window[0] <= dec.round < window[1]:
            continue
        counts[dec.selected] += 1
    return counts


def write_decision_log(log, path, policy_name: str, header_lines=()):
    """Decision log as CSV: round, policy, selected (space-separated), channels."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["round", "policy", "selected", "channels", "aggregate"])
        for dec in log:
            w.writerow([dec.round, policy_name,
                        " ".join(map(str, dec.selected.tolist())),
                        " ".join(map(str, dec.channel.tolist())),
                        int(dec.aggregate)])
