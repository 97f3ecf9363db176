"""Federated training over an unreliable scheduled uplink.

``train_algorithm2`` is the dual-decomposition scheme: every UE solves its
local dual subproblem, the scheduler picks who uploads, and only decoded
increments reach the shared vector. ``train_algorithm1`` is the local-SGD
plus model-averaging baseline under the same scheduling and decoding gates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dual
from .dual import Problem
from .geometry import sample_interference_powers, sample_serving_distance
from .params import NetworkParams, Policy, parse_policy
from .rates import pf_binomial_sum, v_integral, z_integral
from .rng import stream
from .scheduling import ScheduleDecision, Scheduler

REFERENCE_UPDATES = ("delivered", "eta")


# -- channel sources ------------------------------------------------------


def conditional_success(params: NetworkParams, policy) -> float:
    """Decode probability of a UE given that it was scheduled."""
    pol, _ = parse_policy(policy)
    th = params.sinr_threshold
    if pol is Policy.PF:
        return pf_binomial_sum(th, params.ues_per_cell - params.subchannels + 1, params)
    if pol is Policy.NS:
        return 1.0 / (1 + z_integral(th, params))
    if pol is Policy.ONE_SHOT:
        return 1.0 / (1 + v_integral(th / params.subchannels, params))
    return 1.0 / (1 + v_integral(th, params))


class BernoulliChannel:
    """Scheduled UEs decode independently with the analytic conditional probability.

    ``ideal=True`` decodes every scheduled UE. PF snapshots are i.i.d.
    unit-mean fades, so every UE has mean SNR 1.
    """

    kind = "bernoulli"
    mean_snr = 1.0

    def __init__(self, params: NetworkParams, policy, master_seed: int, ideal: bool = False,
                 p_decode: float | None = None):
        self.params = params
        self.ideal = ideal
        if p_decode is None:
            p_decode = 1.0 if ideal else conditional_success(params, policy)
        self.p_decode = float(p_decode)
        self.seed = master_seed
        self._rng = None

    def begin_round(self, t: int):
        self._rng = stream(self.seed, "channel", t)
        return self._rng.standard_exponential(self.params.ues_per_cell)

    def decode(self, decision: ScheduleDecision, snapshot) -> np.ndarray:
        if self.ideal:
            return np.ones(decision.selected.size, dtype=bool)
        return self._rng.random(decision.selected.size) < self.p_decode


class PhysicalChannel:
    """Fixed per-UE serving distances, fresh fades and interference every round."""

    kind = "physical"

    def __init__(self, params: NetworkParams, policy, master_seed: int,
                 mode: str = "standard_exclusion"):
        self.params = params
        self.policy, _ = parse_policy(policy)
        self.mode = mode
        self.seed = master_seed
        self.r = sample_serving_distance(params.ap_density, stream(master_seed, "positions"),
                                         params.ues_per_cell)
        self.gain = params.tx_power * self.r ** (-params.path_loss_exp)
        self.noise = params.noise_power if params.noise_power > 0 else 1.0
        self.mean_snr = self.gain / self.noise
        self._rng = None
        self._fades = None

    def begin_round(self, t: int):
        self._rng = stream(self.seed, "channel", t)
        self._fades = self._rng.standard_exponential(self.params.ues_per_cell)
        return self._fades * self.mean_snr

    def decode(self, decision: ScheduleDecision, snapshot) -> np.ndarray:
        p = self.params
        sel = decision.selected
        shared = self.policy is Policy.NS
        interference = sample_interference_powers(p, sel.size, self._rng, self.mode, shared)
        signal = self._fades[sel] * self.r[sel] ** (-p.path_loss_exp)
        sinr = signal / (interference + p.noise_power / p.tx_power)
        th = p.sinr_threshold
        if self.policy is Policy.ONE_SHOT:
            th = th / p.subchannels
        return sinr > th


def make_channel(kind, params, policy, master_seed, **kw):
    if not isinstance(kind, str):
        return kind
    if kind == "bernoulli":
        return BernoulliChannel(params, policy, master_seed, **kw)
    if kind == "ideal":
        return BernoulliChannel(params, policy, master_seed, ideal=True)
    if kind == "physical":
        return PhysicalChannel(params, policy, master_seed, **kw)
    raise ValueError(f"unknown channel source {kind!r}")


# -- records --------------------------------------------------------------


@dataclass
class RoundRecord:
    round: int
    selected: list
    decoded: list
    dual: float
    primal: float
    gap: float
    eta: float
    drift: float = 0.0
    beta: float = math.nan
    metric: float = math.nan

    @property
    def decodes(self):
        return int(sum(self.decoded))


@dataclass
class TrainResult:
    records: list
    w: np.ndarray
    a: np.ndarray | None = None
    beta_max: float = math.nan
    beta_degenerate: int = 0
    policy: str = ""
    algorithm: str = "algorithm2"

    def gaps(self):
        return np.array([r.gap for r in self.records])

    def rounds_to(self, target: float) -> float:
        """First round index whose gap is <= target (inf when never reached).

        Record t holds the state after t updates; record 0 is the start.
        """
        for r in self.records:
            if r.gap <= target:
                return r.round
        return math.inf


def _check(prob: Problem, params: NetworkParams):
    if prob.K != params.ues_per_cell:
        raise ValueError(f"problem has {prob.K} UEs but params.ues_per_cell={params.ues_per_cell}")


def _eta_next(eta, t, decodes, N):
    # running average of decodes per subchannel
    return t * eta / (t + 1) + decodes / (N * (t + 1))


def train_algorithm2(prob: Problem, params: NetworkParams, policy="RS", channel="bernoulli",
                     rounds: int = 100, H: int = 1, master_seed: int = 0,
                     reference_update: str = "delivered", beta_every: int = 0,
                     stop_gap: float | None = None, multi_round: int | None = None,
                     forgetting: float = 0.05, channel_kw=None, metric=None) -> TrainResult:
    """Run the dual-decomposition training loop for ``rounds`` rounds.

    ``reference_update="delivered"`` advances a UE's dual block only when its
    upload is decoded, so v = Xa/(xi n) holds exactly. ``"eta"`` advances
    every UE's local reference by eta^t * delta (projected into the conjugate
    domain) regardless of delivery; ||v - Xa/(xi n)|| is recorded as drift.
    ``beta_every > 0`` measures the local-solver error level against exact
    local maximizers every that many rounds. ``metric(w)``, when given, is
    stored on every record (e.g. test accuracy).
    """
    _check(prob, params)
    if reference_update not in REFERENCE_UPDATES:
        raise ValueError(f"reference_update must be one of {REFERENCE_UPDATES}")
    if H < 1:
        raise ValueError("H must be >= 1")
    chan = make_channel(channel, params, policy, master_seed, **(channel_kw or {}))
    sched = Scheduler.for_params(policy, params, stream(master_seed, "scheduler"),
                                 multi_round=multi_round, forgetting=forgetting,
                                 mean_snr=getattr(chan, "mean_snr", 1.0))
    K, N = params.ues_per_cell, params.subchannels
    scale = 1.0 / (prob.xi * prob.n)
    a = np.zeros(prob.n)
    v = np.zeros(prob.d)
    eta = K / (2 * N)
    pending = {}
    betas = []
    n_degen = 0
    records = [_record(prob, 0, [], [], a, v, eta, math.nan, metric)]
    for t in range(rounds):
        delta = dual.solve_local_all(prob, v, a, H, stream(master_seed, "local", t))
        beta_t = math.nan
        if beta_every and t % beta_every == 0:
            exact = dual.solve_local_exact_all(prob, v, a)
            vals = []
            for k in range(prob.K):
                idx = prob.partition[k]
                m = dual.measure_beta(prob, k, delta[idx], v, a, exact=exact[idx])
                if m.degenerate:
                    n_degen += 1
                else:
                    vals.append(m.beta)
            if vals:
                beta_t = max(vals)
                betas.append(beta_t)
        snap = chan.begin_round(t)
        dec = sched.select(t, snap if sched.needs_snapshot else None)
        ok = chan.decode(dec, snap)
        for k, good in zip(dec.selected.tolist(), ok.tolist()):
            if good:
                pending[k] = delta[prob.partition[k]].copy()
        if dec.aggregate:
            for k, dk in sorted(pending.items()):
                idx = prob.partition[k]
                v = v + scale * (prob.X[:, idx] @ dk)
                if reference_update == "delivered":
                    a[idx] += dk
            pending = {}
        if reference_update == "eta":
            a = prob.loss.project(a + eta * delta, prob.y)
        eta = _eta_next(eta, t, int(ok.sum()), N)
        records.append(_record(prob, t + 1, dec.selected.tolist(), ok.tolist(), a, v, eta, beta_t,
                               metric))
        if stop_gap is not None and records[-1].gap <= stop_gap:
            break
    return TrainResult(records, prob.reg.conj_grad(v), a, max(betas) if betas else math.nan,
                       n_degen, sched.label, "algorithm2")


def _record(prob, t, sel, ok, a, v, eta, beta, metric=None):
    D = dual.dual_objective(a, prob)
    w = prob.reg.conj_grad(v)
    P = dual.primal_objective(w, prob)
    drift = float(np.linalg.norm(v - dual.shared_vector(a, prob)))
    m = float(metric(w)) if metric is not None else math.nan
    return RoundRecord(t, sel, ok, D, P, P - D, eta, drift, beta, m)


def train_algorithm1(prob: Problem, params: NetworkParams, policy="RS", channel="bernoulli",
                     rounds: int = 100, tau: int = 5, step: float = 0.05, master_seed: int = 0,
                     p_star: float | None = None, stop_gap: float | None = None,
                     multi_round: int | None = None, forgetting: float = 0.05,
                     channel_kw=None, metric=None) -> TrainResult:
    """Local SGD with weighted model averaging; undelivered UEs count as w^t.

    Records carry ``gap = P(w^t) - p_star`` (nan when ``p_star`` is None).
    """
    _check(prob, params)
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if not step > 0:
        raise ValueError("step size must be positive")
    chan = make_channel(channel, params, policy, master_seed, **(channel_kw or {}))
    sched = Scheduler.for_params(policy, params, stream(master_seed, "scheduler"),
                                 multi_round=multi_round, forgetting=forgetting,
                                 mean_snr=getattr(chan, "mean_snr", 1.0))
    K, N = params.ues_per_cell, params.subchannels
    idx, mask = prob.padded()
    sizes = prob.sizes
    weights = sizes / prob.n
    X, y, loss = prob.X, prob.y, prob.loss
    xi_grad = prob.xi
    w = np.zeros(prob.d)
    eta = K / (2 * N)
    rows = np.arange(K)
    pending = {}

    def rec(t, sel, ok):
        P = dual.primal_objective(w, prob)
        gap = P - p_star if p_star is not None else math.nan
        m = float(metric(w)) if metric is not None else math.nan
        return RoundRecord(t, sel, ok, math.nan, P, gap, eta, 0.0, math.nan, m)

    records = [rec(0, [], [])]
    for t in range(rounds):
        rng = stream(master_seed, "sgd", t)
        W = np.repeat(w[:, None], K, axis=1)
        reg = xi_grad * prob.reg.grad(w)
        for _ in range(tau):
            pos = np.floor(rng.random(K) * sizes).astype(np.int64)
            ii = idx[rows, pos]
            Xi = X[:, ii]
            g = loss.grad(np.einsum("ij,ij->j", Xi, W), y[ii])
            W -= step * (Xi * g + reg[:, None])
        snap = chan.begin_round(t)
        dec = sched.select(t, snap if sched.needs_snapshot else None)
        ok = chan.decode(dec, snap)
        for k, good in zip(dec.selected.tolist(), ok.tolist()):
            if good:
                pending[k] = W[:, k].copy()
        if dec.aggregate:
            new = np.repeat(w[:, None], K, axis=1)
            for k, wk in pending.items():
                new[:, k] = wk
            w = new @ weights
            pending = {}
        eta = _eta_next(eta, t, int(ok.sum()), N)
        records.append(rec(t + 1, dec.selected.tolist(), ok.tolist()))
        if stop_gap is not None and p_star is not None and records[-1].gap <= stop_gap:
            break
    return TrainResult(records, w, None, math.nan, 0, sched.label, "algorithm1")


def solve_primal(prob: Problem, tol: float = 1e-12):
    """Reference minimizer of the primal objective (BFGS with analytic gradient)."""
    from scipy.optimize import minimize

    X, y = prob.X, prob.y

    def fg(w):
        u = X.T @ w
        f = float(np.mean(prob.loss.value(u, y)) + prob.xi * prob.reg.value(w))
        g = X @ prob.loss.grad(u, y) / prob.n + prob.xi * prob.reg.grad(w)
        return f, g

    res = minimize(fg, np.zeros(prob.d), jac=True, method="BFGS", options={"gtol": tol, "maxiter": 10000})
    return res.x, float(res.fun)
