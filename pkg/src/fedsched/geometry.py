"""Monte Carlo sampler for the uplink environment of the typical AP.

The serving UE sits at a Rayleigh-distributed distance. Co-channel
interferers from other cells form a Poisson field whose intensity is
thinned near the origin (the guard zone around the typical AP) and tends
to ``lambda`` far away. The field is drawn on a finite disk; the mean
contribution of the region beyond the disk is added deterministically.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .params import NetworkParams, Policy, parse_policy
from .rng import stream

MODES = ("standard_exclusion", "paper_literal")
EXCLUSION_K = 12.0 / 5.0
BLOCK = 4096
MC_POLICIES = (Policy.RS, Policy.RR, Policy.PF, Policy.NS, Policy.ONE_SHOT)


@dataclass
class ChannelRealization:
    serving_distance: float
    serving_fade: float
    interferer_distances: np.ndarray
    interferer_fades: np.ndarray
    # mean received power (per unit tx power) from beyond the sampled disk
    tail_interference: float = 0.0

    def __post_init__(self):
        if not self.serving_distance > 0:
            raise ValueError("serving distance must be positive")
        d = np.asarray(self.interferer_distances, dtype=float)
        if d.size and not np.all(d > 0):
            raise ValueError("interferer distances must be positive")
        self.interferer_distances = d
        self.interferer_fades = np.asarray(self.interferer_fades, dtype=float)

    @property
    def interferers(self):
        return list(zip(self.interferer_distances.tolist(), self.interferer_fades.tolist()))


@dataclass(frozen=True)
class McEstimate:
    mean: float
    half_width_95: float
    trials: int
    successes: int = 0

    @classmethod
    def from_counts(cls, successes: int, trials: int) -> "McEstimate":
        p = successes / trials
        return cls(p, 1.959963984540054 * math.sqrt(p * (1 - p) / trials), trials, int(successes))


def sample_serving_distance(lam: float, rng: np.random.Generator, size=None):
    """Distance to the serving AP, density 2 pi lam r exp(-lam pi r^2)."""
    if not lam > 0:
        raise ValueError("ap density must be positive")
    return np.sqrt(rng.standard_exponential(size) / (lam * math.pi))


def truncation_radius(lam_eff: float, alpha: float, tol: float = 1e-3) -> float:
    """Disk radius beyond which the interference field is replaced by its mean.

    Chosen so the standard deviation of the discarded far-field interference
    is ``tol`` times the mean interference of a homogeneous field outside the
    typical inter-point distance d0 = 1/sqrt(pi lam_eff).
    """
    if not alpha > 2:
        raise ValueError("path-loss exponent must exceed 2")
    d0 = 1.0 / math.sqrt(math.pi * lam_eff)
    rho = ((alpha - 2) / math.sqrt(2 * alpha - 2) / tol) ** (1 / (alpha - 1))
    return d0 * max(rho, 3.0)


def far_field_mean(lam_eff: float, alpha: float, radius: float) -> float:
    """Mean of sum h d^-alpha over a homogeneous field outside ``radius``."""
    return 2 * math.pi * lam_eff * radius ** (2 - alpha) / (alpha - 2)


def keep_probability(x, lam: float, mode: str):
    """Thinning factor of the interferer intensity at distance ``x``."""
    if mode == "standard_exclusion":
        return -np.expm1(-EXCLUSION_K * lam * math.pi * np.square(x))
    if mode == "paper_literal":
        return -np.expm1(-EXCLUSION_K * lam * np.square(x))
    raise ValueError(f"unknown interference mode {mode!r}; expected one of {MODES}")


def expected_point_count(lam: float, radius: float, mode: str = "standard_exclusion",
                         exclusion: bool = True) -> float:
    """Expected number of interferers inside ``radius`` (closed form)."""
    hom = lam * math.pi * radius**2
    if not exclusion:
        return hom
    k = EXCLUSION_K * lam * (math.pi if mode == "standard_exclusion" else 1.0)
    # int_0^R 2 pi x lam e^{-k x^2} dx = pi lam (1 - e^{-k R^2}) / k
    return hom - math.pi * lam * (-math.expm1(-k * radius**2)) / k


def _field_params(params: NetworkParams, shared: bool, mode: str, tol: float):
    lam = params.ap_density
    lam_eff = lam * params.group_ratio if shared else lam
    R = truncation_radius(lam_eff, params.path_loss_exp, tol)
    return lam_eff, R


def sample_interference_field(params: NetworkParams, mode: str = "standard_exclusion",
                              serving_distance: float | None = None,
                              rng: np.random.Generator | None = None,
                              radius: float | None = None, shared: bool = False,
                              tol: float = 1e-3):
    """Draw one interferer field as (distances, fades).

    The intensity is deconditioned from the serving distance, so
    ``serving_distance`` is accepted for interface symmetry only. ``shared``
    draws the unthinned field of density lam*G seen by a subchannel carrying
    G co-channel UEs per cell.
    """
    if not params.path_loss_exp > 2:
        raise ValueError("path-loss exponent must exceed 2")
    if mode not in MODES:
        raise ValueError(f"unknown interference mode {mode!r}")
    rng = rng if rng is not None else np.random.default_rng()
    lam_eff, R = _field_params(params, shared, mode, tol)
    if radius is not None:
        R = radius
    count = rng.poisson(lam_eff * math.pi * R**2)
    d = R * np.sqrt(rng.random(count))
    if not shared:
        d = d[rng.random(count) < keep_probability(d, params.ap_density, mode)]
    d = d[d > 0]
    return d, rng.standard_exponential(d.size)


def sample_realization(params: NetworkParams, rng: np.random.Generator,
                       mode: str = "standard_exclusion", shared: bool = False,
                       serving_fade: float | None = None, tol: float = 1e-3) -> ChannelRealization:
    r = float(sample_serving_distance(params.ap_density, rng))
    d, h = sample_interference_field(params, mode, r, rng, shared=shared, tol=tol)
    lam_eff, R = _field_params(params, shared, mode, tol)
    hk = float(rng.standard_exponential()) if serving_fade is None else serving_fade
    return ChannelRealization(r, hk, d, h, far_field_mean(lam_eff, params.path_loss_exp, R))


def compute_sinr(real: ChannelRealization, params: NetworkParams) -> float:
    a = params.path_loss_exp
    P = params.tx_power
    signal = P * real.serving_fade * real.serving_distance ** (-a)
    interference = P * (float(np.sum(real.interferer_fades * real.interferer_distances ** (-a)))
                        + real.tail_interference)
    denom = interference + params.noise_power
    if denom == 0:
        return math.inf
    return signal / denom


# -- vectorized block sampler ----------------------------------------------


def _policy_setup(params: NetworkParams, policy):
    pol, _ = parse_policy(policy)
    if pol not in MC_POLICIES:
        raise ValueError(f"policy {policy!r} has no Monte Carlo estimator")
    return pol


def sample_interference_powers(params: NetworkParams, size: int, rng: np.random.Generator,
                               mode: str = "standard_exclusion", shared: bool = False,
                               tol: float = 1e-3):
    """Independent interference fields, returned as sum h d^-alpha per field
    (per unit transmit power, far-field mean included)."""
    a = params.path_loss_exp
    lam_eff, R = _field_params(params, shared, mode, tol)
    counts = rng.poisson(lam_eff * math.pi * R**2, size)
    total = int(counts.sum())
    d = R * np.sqrt(rng.random(total))
    h = rng.standard_exponential(total)
    owner = np.repeat(np.arange(size), counts)
    if not shared:
        keep = rng.random(total) < keep_probability(d, params.ap_density, mode)
        d, h, owner = d[keep], h[keep], owner[keep]
    d = np.maximum(d, np.finfo(float).tiny)
    power = h * d ** (-a)
    interference = np.bincount(owner, weights=power, minlength=size)
    return interference + far_field_mean(lam_eff, a, R)


def _sample_block(params, pol, mode, rng, size, tol):
    """Per-trial (r, h_serving, interference, selected) arrays for one block."""
    r = sample_serving_distance(params.ap_density, rng, size)
    interference = sample_interference_powers(params, size, rng, mode, pol is Policy.NS, tol)
    if pol is Policy.PF:
        m = params.ues_per_cell - params.subchannels + 1
        # max of m unit exponentials by CDF inversion
        hs = -np.log1p(-rng.random(size) ** (1.0 / m))
    else:
        hs = rng.standard_exponential(size)
    if pol in (Policy.RS, Policy.PF):
        selected = rng.random(size) < 1.0 / params.group_ratio
    else:
        selected = np.ones(size, dtype=bool)
    return r, hs, interference, selected


def _block_sinr(params, r, hs, interference):
    a = params.path_loss_exp
    signal = hs * r ** (-a)
    denom = interference + params.noise_power / params.tx_power
    with np.errstate(divide="ignore"):
        return np.where(denom > 0, signal / np.where(denom > 0, denom, 1.0), np.inf)


def _effective_thresholds(params, pol, thetas):
    th = np.asarray(thetas, dtype=float)
    if pol is Policy.ONE_SHOT:
        th = th / params.subchannels
    return th


def _count_block(args):
    params, pol, mode, master_seed, b, size, thetas, tol = args
    rng = stream(master_seed, "mc", pol.value, mode, b)
    r, hs, interference, selected = _sample_block(params, pol, mode, rng, size, tol)
    sinr = _block_sinr(params, r, hs, interference)
    hit = selected[None, :] & (sinr[None, :] > thetas[:, None])
    return hit.sum(axis=1).astype(np.int64)


def _blocks(trials):
    n_full, rest = divmod(trials, BLOCK)
    sizes = [BLOCK] * n_full + ([rest] if rest else [])
    return sizes


def count_successes(params: NetworkParams, policy, thetas, trials: int, master_seed: int,
                    mode: str = "standard_exclusion", threads: int = 1, tol: float = 1e-3):
    """Success counts for each threshold in ``thetas`` over shared realizations."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mode not in MODES:
        raise ValueError(f"unknown interference mode {mode!r}")
    pol = _policy_setup(params, policy)
    th = _effective_thresholds(params, pol, thetas)
    jobs = [(params, pol, mode, master_seed, b, size, th, tol) for b, size in enumerate(_blocks(trials))]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(_count_block, jobs))
    else:
        parts = [_count_block(j) for j in jobs]
    total = np.zeros(len(th), dtype=np.int64)
    for part in parts:
        total += part
    return total


def estimate_update_success(params: NetworkParams, policy, trials: int, master_seed: int,
                            mode: str = "standard_exclusion", threads: int = 1,
                            thetas=None, tol: float = 1e-3):
    """Empirical probability that the typical UE is scheduled and decoded.

    Returns one :class:`McEstimate` at ``params.sinr_threshold``, or a list
    when ``thetas`` (linear) is given; all thresholds share realizations.
    """
    single = thetas is None
    th = [params.sinr_threshold] if single else list(thetas)
    counts = count_successes(params, policy, th, trials, master_seed, mode, threads, tol)
    est = [McEstimate.from_counts(int(c), trials) for c in counts]
    return est[0] if single else est


def dump_realizations(params: NetworkParams, policy, trials: int, master_seed: int,
                      mode: str = "standard_exclusion", tol: float = 1e-3):
    """Per-trial diagnostic rows: trial, r_k, h_k, interference_power, sinr, selected, success."""
    pol = _policy_setup(params, policy)
    th = float(_effective_thresholds(params, pol, [params.sinr_threshold])[0])
    rows = []
    offset = 0
    for b, size in enumerate(_blocks(trials)):
        rng = stream(master_seed, "mc", pol.value, mode, b)
        r, hs, interference, selected = _sample_block(params, pol, mode, rng, size, tol)
        sinr = _block_sinr(params, r, hs, interference)
        for i in range(size):
            rows.append((offset + i, float(r[i]), float(hs[i]), float(params.tx_power * interference[i]),
                         float(sinr[i]), int(selected[i]), int(selected[i] and sinr[i] > th)))
        offset += size
    return rows
