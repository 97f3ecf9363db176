"""Closed-form update-success probabilities and rounds-to-gap bounds.

All thresholds are linear. ``V`` governs a UE alone on its subchannel
(with a guard-zone thinned interference field), ``Z`` a subchannel shared
by ``G`` co-channel UEs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .params import NetworkParams, Policy, parse_policy, policy_label

# guard-zone constant of the thinned interferer intensity, divided by pi
EXCLUSION_C = 12.0 / (5.0 * math.pi)

PF_DIRECT_MAX = 8
PF_MAX_TERMS = 1000


def _check_alpha(alpha):
    if not alpha > 2:
        raise ValueError(f"path-loss exponent must exceed 2, got {alpha}")


def v_noise_coef(params: NetworkParams) -> float:
    a = params.path_loss_exp
    return params.noise_power * params.ap_density ** (1 - a / 2) / (params.tx_power * 2 ** (a - 2))


def z_noise_coef(params: NetworkParams) -> float:
    a = params.path_loss_exp
    return params.noise_power * params.ap_density ** (a / 2) / (params.tx_power * 2 ** (a / 2 - 1))


def _tail_series(t, alpha, U, terms=8):
    """int_U^inf du/(1+u^p) by its expansion in u^-p (U > 1)."""
    p = alpha / 2
    total = 0.0
    for j in range(1, terms + 1):
        total += (-1) ** (j + 1) * U ** (1 - j * p) / (j * p - 1)
    return total


@lru_cache(maxsize=65536)
def _interference_integral(theta: float, alpha: float, epsrel: float = 1e-10) -> float:
    """theta^{2/a} * int_0^inf (1 - exp(-c theta^{2/a} u)) / (1 + u^{a/2}) du."""
    if theta == 0:
        return 0.0
    p = alpha / 2
    t = theta ** (1 / p)
    ct = EXCLUSION_C * t

    def head(u):
        return -math.expm1(-ct * u) / (1 + u**p)

    # past U the exponential factor is below 1e-300 relative and the
    # remaining tail has a convergent series
    U = max(1e3, 700.0 / ct)
    pts = sorted({min(1.0 / ct, U), 1.0, U})
    edges = [0.0] + [x for x in pts if 0 < x <= U]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        if lo >= 1.0:
            # log substitution keeps decades of slow power-law decay cheap
            val, _ = quad(lambda s: head(math.exp(s)) * math.exp(s), math.log(lo), math.log(hi),
                          epsabs=0, epsrel=epsrel, limit=200)
        else:
            val, _ = quad(head, lo, hi, epsabs=0, epsrel=epsrel, limit=200)
        total += val
    total += _tail_series(t, alpha, U)
    return t * total


def v_integral(theta: float, params: NetworkParams) -> float:
    """V(theta, alpha) for a UE alone on its subchannel."""
    _check_alpha(params.path_loss_exp)
    if theta < 0:
        raise ValueError("theta must be non-negative")
    if theta == 0:
        return 0.0
    return v_noise_coef(params) * theta + _interference_integral(float(theta), float(params.path_loss_exp))


def shared_channel_constant(alpha: float) -> float:
    """int_0^inf du / (1 + u^{a/2}) = (2 pi / a) / sin(2 pi / a)."""
    _check_alpha(alpha)
    x = 2 * math.pi / alpha
    return x / math.sin(x)


def z_integral(theta: float, params: NetworkParams) -> float:
    """Z(theta, alpha) for a subchannel shared by G simultaneous UEs."""
    a = params.path_loss_exp
    _check_alpha(a)
    if theta < 0:
        raise ValueError("theta must be non-negative")
    if theta == 0:
        return 0.0
    return (z_noise_coef(params) * theta
            + params.group_ratio * theta ** (2 / a) * shared_channel_constant(a))


# -- PF: alternating binomial sum -----------------------------------------


class _ComplexV:
    """V(z) for complex z with Re z > 0, via a log-grid trapezoid rule.

    Uses the change of variable w = theta^{2/a} u, under which
    V(z) = int_0^inf (1 - e^{-c w}) z / (z + w^{a/2}) dw, analytic in z.
    """

    def __init__(self, alpha, noise_coef, zmax, h=0.04):
        self.p = alpha / 2
        self.noise = noise_coef
        # the upper cut makes the power-series tail converge fast
        W = max(1e4, (1e4 * zmax) ** (1 / self.p), 800.0 / EXCLUSION_C)
        self.W = W
        t = np.arange(-32.0, math.log(W) + 1e-12, h)
        t += math.log(W) - t[-1]
        self.w = np.exp(t)
        self.h = h
        self.base = -np.expm1(-EXCLUSION_C * self.w) * self.w

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        p, W, h = self.p, self.W, self.h
        wp = self.w**p
        out = np.empty(z.shape, dtype=complex)
        flat = z.ravel()
        res = out.ravel()
        chunk = 256
        for i in range(0, flat.size, chunk):
            zz = flat[i:i + chunk, None]
            g = self.base * zz / (zz + wp)
            # trapezoid with Euler-Maclaurin end correction at t = log W
            s = h * (g.sum(axis=1) - 0.5 * g[:, -1])
            dg = g[:, -1] * (1 - p * wp[-1] / (zz[:, 0] + wp[-1]))
            s -= h * h / 12 * dg
            zc = zz[:, 0]
            tail = zc * W ** (1 - p) / (p - 1) - zc**2 * W ** (1 - 2 * p) / (2 * p - 1) \
                + zc**3 * W ** (1 - 3 * p) / (3 * p - 1)
            res[i:i + chunk] = s + tail + self.noise * zc
        return out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _pf_sum_contour(theta, m, params, y_max=None, panel=0.5):
    """sum_{i=1}^m C(m,i)(-1)^{i+1} / (1 + V(i theta)) by a contour integral.

    The alternating sum equals E[1 - (1 - e^{-X})^m]-type expectations whose
    finite-difference form loses all digits in float64 once m exceeds ~20.
    Rewriting it as (1/pi) int_0^inf Re[f(s)/s prod_j j/(j - s)] dy on the
    line s = 1/2 + iy (Rice's integral) needs no cancellation.
    """
    if y_max is None:
        y_max = 60.0 if m > 20 else 40.0 + 400.0 / m
    n_panels = int(math.ceil(y_max / panel))
    a = np.arange(n_panels) * panel
    y = (a[:, None] + (_GL_X[None, :] + 1) * panel / 2).ravel()
    wts = np.tile(_GL_W * panel / 2, n_panels)
    s = 0.5 + 1j * y
    cv = _ComplexV(params.path_loss_exp, v_noise_coef(params), zmax=theta * abs(s[-1]))
    f = 1.0 / (1.0 + cv(s * theta))
    j = np.arange(1, m + 1, dtype=float)
    logprod = np.zeros(s.shape, dtype=complex)
    logj = np.log(j)
    for start in range(0, m, 512):
        jj = j[start:start + 512]
        logprod += np.sum(logj[start:start + 512][None, :] - np.log(jj[None, :] - s[:, None]), axis=1)
    g = (f / s * np.exp(logprod)).real
    return float(np.dot(wts, g) / math.pi)


def _pf_sum_direct(theta, m, params):
    return math.fsum(math.comb(m, i) * (-1) ** (i + 1) / (1 + v_integral(i * theta, params))
                     for i in range(1, m + 1))


def pf_binomial_sum(theta: float, m: int, params: NetworkParams) -> float:
    """sum_{i=1}^m C(m,i)(-1)^{i+1} / (1 + V(i theta)); equals G * U_PF."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > PF_MAX_TERMS:
        raise ValueError(
            f"PF sum with K-N+1={m} > {PF_MAX_TERMS} terms is numerically unstable; "
            "use the Monte Carlo estimator (estimate_update_success) instead")
    if theta == 0:
        return 1.0
    if m <= PF_DIRECT_MAX:
        return _pf_sum_direct(theta, m, params)
    return min(1.0, max(0.0, _pf_sum_contour(theta, m, params)))


# -- queries and reports --------------------------------------------------


@dataclass(frozen=True)
class RateQuery:
    params: NetworkParams
    policy: Policy | str = Policy.RS
    beta: float = 0.25
    eps: float = 1e-2
    n: int = 1000
    multi_round: int | None = None

    def __post_init__(self):
        pol, c = parse_policy(self.policy)
        object.__setattr__(self, "policy", pol)
        if c is not None and self.multi_round is None:
            object.__setattr__(self, "multi_round", c)
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < self.eps < self.n:
            raise ValueError("need 0 < eps < n")
        if pol is Policy.MULTI_ROUND:
            C = self.multi_round
            if C is None or C < 1:
                raise ValueError("MultiRound needs a positive aggregation period C")
            if self.params.ues_per_cell % C:
                raise ValueError("MultiRound period C must divide K")
            if C > self.params.group_ratio:
                raise ValueError("MultiRound period C must not exceed G (success prob would exceed 1)")

    @property
    def label(self):
        return policy_label(self.policy, self.multi_round)

    @property
    def log_n_over_eps(self):
        return math.log(self.n / self.eps)


@dataclass
class RateReport:
    policy: str
    theta: float
    success_prob: float
    v_value: float | None
    z_value: float | None
    rounds: float  # integer-valued, or inf when non-convergent
    rounds_real: float
    normalized_rounds: float
    degenerate: bool = False
    flags: list = field(default_factory=list)

    @property
    def converges(self):
        return math.isfinite(self.rounds)


def success_prob(query: RateQuery) -> float:
    p = query.params
    th = p.sinr_threshold
    G = p.group_ratio
    pol = query.policy
    if pol is Policy.RS:
        return 1.0 / (G * (1 + v_integral(th, p)))
    if pol is Policy.RR:
        return 1.0 / (1 + v_integral(th, p))
    if pol is Policy.PF:
        return pf_binomial_sum(th, p.ues_per_cell - p.subchannels + 1, p) / G
    if pol is Policy.ONE_SHOT:
        return 1.0 / (1 + v_integral(th / p.subchannels, p))
    if pol is Policy.MULTI_ROUND:
        return query.multi_round / (G * (1 + v_integral(th, p)))
    if pol is Policy.NS:
        return 1.0 / (1 + z_integral(th, p))
    raise ValueError(f"unknown policy {pol!r}")


def round_multiplier(query: RateQuery) -> int:
    """Rounds per aggregation opportunity: G for RR, K for one-shot, C for multi-round."""
    pol = query.policy
    if pol is Policy.RR:
        return query.params.group_ratio
    if pol is Policy.ONE_SHOT:
        return query.params.ues_per_cell
    if pol is Policy.MULTI_ROUND:
        return query.multi_round
    return 1


def _ceil_tol(x, rtol=1e-9):
    r = round(x)
    if abs(x - r) <= rtol * max(1.0, abs(x)):
        return float(r)
    return float(math.ceil(x))


def rounds_from_success(U, beta, log_eps_over_n, mult=1):
    """(T, T_real, degenerate) with T = ceil(mult * log(eps/n) / log(1 - (1-beta) U))."""
    q = (1 - beta) * U
    if U <= 0:
        return math.inf, math.inf, False
    if q >= 1:
        return float(mult), float(mult), True
    real = mult * log_eps_over_n / math.log1p(-q)
    return _ceil_tol(real), real, False


def rounds_to_gap(query: RateQuery) -> RateReport:
    p = query.params
    U = success_prob(query)
    mult = round_multiplier(query)
    T, real, degen = rounds_from_success(U, query.beta, -query.log_n_over_eps, mult)
    flags = []
    if degen:
        flags.append("degenerate_bound")
    if not math.isfinite(T):
        flags.append("non_convergent")
    if not p.group_ratio_exact:
        flags.append("G_rounded_up")
    v = z = None
    if query.policy is Policy.NS:
        z = z_integral(p.sinr_threshold, p)
    elif query.policy is Policy.ONE_SHOT:
        v = v_integral(p.sinr_threshold / p.subchannels, p)
    else:
        v = v_integral(p.sinr_threshold, p)
    return RateReport(
        policy=query.label,
        theta=p.sinr_threshold,
        success_prob=U,
        v_value=v,
        z_value=z,
        rounds=T,
        rounds_real=real,
        normalized_rounds=real / query.log_n_over_eps,
        degenerate=degen,
        flags=flags,
    )


def normalized_rounds(params: NetworkParams, policy, beta: float = 0.25) -> float:
    """Rounds-to-gap divided by log(n/eps); independent of eps and n."""
    return rounds_to_gap(RateQuery(params, policy, beta)).normalized_rounds


def asymptotic_rounds(policy, regime: str, params: NetworkParams, beta: float,
                      log_n_over_eps: float = 1.0) -> float:
    """High/low-threshold asymptotes of the rounds-to-gap bound.

    With the default ``log_n_over_eps=1`` the result is in normalized rounds.
    """
    pol, _ = parse_policy(policy)
    G = params.group_ratio
    N = params.subchannels
    L = log_n_over_eps
    if regime == "high":
        v = v_integral(params.sinr_threshold, params)
        if pol in (Policy.RS, Policy.RR):
            return G * L * (1 + v) / (1 - beta)
        if pol is Policy.PF:
            return L * (1 + v) / ((1 - beta) * (N * (1 - 1 / G) + 1 / G))
        if pol is Policy.NS:
            z = z_integral(params.sinr_threshold, params)
            return L * (1 + z) / (1 - beta)
    elif regime == "low":
        if pol in (Policy.RS, Policy.PF):
            return -L / math.log1p(-(1 - beta) / G)
        if pol is Policy.RR:
            return -G * L / math.log(beta)
        if pol is Policy.NS:
            return -L / math.log(beta)
    else:
        raise ValueError("regime must be 'high' or 'low'")
    raise ValueError(f"no {regime}-threshold asymptote for {pol.value}")
