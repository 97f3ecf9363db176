"""Experiment drivers behind the CLI subcommands.

Each driver takes an :class:`ExperimentConfig` and an output directory,
writes CSV tables (with config hash and seed in the header) plus SVG
figures, and returns the rows it wrote. Work is spread over a thread pool
but assembled in grid order, so output never depends on ``threads``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import plotting, training
from .config import ExperimentConfig, dump_config
from .data import accuracy, build_problem, from_spec
from .geometry import estimate_update_success
from .params import db_to_linear, linear_to_db
from .persist import SENTINEL, persist_run, write_table
from .rates import RateQuery, asymptotic_rounds, rounds_to_gap
from .rng import derive_seed

RATE_COLUMNS = ["policy", "theta_db", "K", "N", "G", "alpha", "beta", "U", "T", "T_normalized", "note"]


def _pmap(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _base_params(cfg: ExperimentConfig):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return cfg.network.params()


def _start(cfg, out):
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    return out


def _plot(csv_path, logy=False, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            return plotting.plot_csv(csv_path, logy=logy, **kw)
        except plotting.SchemaError:
            return None


# -- analytic sweeps ------------------------------------------------------


def rate_point(params, policy, beta, eps, n):
    """One output row; errors and non-convergence become explicit markers."""
    row = {"policy": policy, "theta_db": params.theta_db, "K": params.ues_per_cell,
           "N": params.subchannels, "G": params.group_ratio, "alpha": params.path_loss_exp,
           "beta": beta}
    try:
        rep = rounds_to_gap(RateQuery(params, policy, beta, eps, n))
    except (ValueError, OverflowError, ArithmeticError) as e:
        row.update(U="error", T="error", T_normalized="error", note=str(e))
        return row
    row.update(U=rep.success_prob, T=rep.rounds, T_normalized=rep.normalized_rounds,
               note=";".join(rep.flags))
    return row


def rates_sweep(cfg: ExperimentConfig, out=None):
    """G sweeps at fixed thresholds and a threshold sweep at fixed G.

    Returns {file stem: rows}.
    """
    out = _start(cfg, out)
    r = cfg.rates
    base = _base_params(cfg)
    N = base.subchannels
    prov = cfg.provenance()
    tables = {}

    def point(args):
        kw, pol = args
        try:
            p = base.with_(**kw)
        except ValueError as e:
            return {"policy": pol, "theta_db": kw.get("theta_db", base.theta_db), "K": kw.get(
                "ues_per_cell", base.ues_per_cell), "N": N, "G": "", "alpha": base.path_loss_exp,
                "beta": r.beta, "U": "error", "T": "error", "T_normalized": "error", "note": str(e)}
        return rate_point(p, pol, r.beta, r.eps, r.n)

    for th in r.g_sweep_theta_db:
        jobs = [({"theta_db": th, "ues_per_cell": int(G) * N}, pol)
                for pol in r.policies for G in r.g_grid]
        rows = _pmap(point, jobs, cfg.threads)
        stem = f"rates_G_{th:g}dB"
        write_table(out / f"{stem}.csv", RATE_COLUMNS, rows, prov)
        _plot(out / f"{stem}.csv", logy=True)
        tables[stem] = rows

    K = int(r.theta_sweep_g) * N
    jobs = [({"theta_db": th, "ues_per_cell": K}, pol) for pol in r.policies for th in r.theta_db_grid]
    rows = _pmap(point, jobs, cfg.threads)
    stem = f"rates_theta_G{r.theta_sweep_g}"
    write_table(out / f"{stem}.csv", RATE_COLUMNS, rows, prov)
    _plot(out / f"{stem}.csv", x="theta_db", logy=True)
    tables[stem] = rows

    # asymptote overlays on the threshold sweep
    arows = []
    for pol in r.policies:
        for regime in ("high", "low"):
            for th in r.theta_db_grid:
                try:
                    val = asymptotic_rounds(pol, regime, base.with_(theta_db=th, ues_per_cell=K), r.beta)
                except ValueError:
                    continue
                arows.append({"policy": f"{pol} {regime}", "theta_db": th, "T_normalized": val})
    write_table(out / "asymptotes.csv", ["policy", "theta_db", "T_normalized"], arows, prov)
    tables["asymptotes"] = arows
    return tables


def tradeoff_threshold(theta_ref: float, N: int, N_ref: int) -> float:
    """Per-subchannel threshold keeping the total rate fixed as N varies."""
    return math.expm1(N / N_ref * math.log1p(theta_ref))


def tradeoff(cfg: ExperimentConfig, out=None):
    """Sweep N under the equal-total-rate model; returns (rows, argmin rows)."""
    out = _start(cfg, out)
    t = cfg.tradeoff
    base = _base_params(cfg)
    r = cfg.rates
    theta_ref = db_to_linear(t.theta_ref_db)

    def point(args):
        pol, N = args
        N = int(N)
        row = {"policy": pol, "N": N}
        try:
            th = tradeoff_threshold(theta_ref, N, t.n_ref)
        except OverflowError:
            th = math.inf
        if not math.isfinite(th):
            row.update(theta_db=math.inf, K=base.ues_per_cell, G="", alpha=base.path_loss_exp,
                       beta=r.beta, U=0.0, T=math.inf, T_normalized=math.inf, note="threshold overflow")
            return row
        try:
            p = base.with_(subchannels=N, sinr_threshold=th)
        except ValueError as e:
            row.update(theta_db=linear_to_db(th), K=base.ues_per_cell, G="", alpha=base.path_loss_exp,
                       beta=r.beta, U="error", T="error", T_normalized="error", note=str(e))
            return row
        return rate_point(p, pol, r.beta, r.eps, r.n)

    jobs = [(pol, N) for pol in t.policies for N in t.n_grid]
    rows = _pmap(point, jobs, cfg.threads)
    cols = ["policy", "N", "theta_db", "K", "G", "alpha", "beta", "U", "T", "T_normalized", "note"]
    prov = cfg.provenance()
    write_table(out / "tradeoff.csv", cols, rows, prov)
    _plot(out / "tradeoff.csv", x="N", logy=True)
    best = []
    for pol in t.policies:
        pts = [(row["T_normalized"], row["N"]) for row in rows
               if row["policy"] == pol and isinstance(row["T_normalized"], float)
               and math.isfinite(row["T_normalized"])]
        if pts:
            val, n_best = min(pts)
            best.append({"policy": pol, "argmin_N": n_best, "T_normalized": val})
        else:
            best.append({"policy": pol, "argmin_N": SENTINEL, "T_normalized": math.inf})
    write_table(out / "tradeoff_argmin.csv", ["policy", "argmin_N", "T_normalized"], best, prov)
    return rows, best


# -- Monte Carlo validation -----------------------------------------------


def validate_mc(cfg: ExperimentConfig, out=None):
    out = _start(cfg, out)
    m = cfg.mc
    base = _base_params(cfg)
    thetas = [db_to_linear(x) for x in m.theta_db]
    rows = []
    for pol in m.policies:
        ests = estimate_update_success(base, pol, m.trials, cfg.seed, m.mode, cfg.threads, thetas=thetas)
        for th_db, th, est in zip(m.theta_db, thetas, ests):
            U = rounds_to_gap(RateQuery(base.with_(sinr_threshold=th), pol)).success_prob
            rel = (est.mean - U) / U if U > 0 else math.nan
            rows.append({"policy": pol, "theta_db": th_db, "U_analytic": U, "U_mc": est.mean,
                         "ci_low": est.mean - est.half_width_95, "ci_high": est.mean + est.half_width_95,
                         "rel_dev": rel, "trials": est.trials, "mode": m.mode})
    cols = ["policy", "theta_db", "U_analytic", "U_mc", "ci_low", "ci_high", "rel_dev", "trials", "mode"]
    write_table(out / "validate_mc.csv", cols, rows, cfg.provenance())
    _plot(out / "validate_mc.csv", logy=True)
    return rows


# -- training -------------------------------------------------------------


@dataclass
class TraceRow:
    algorithm: str
    policy: str
    seed: int
    round: int
    dual: float
    primal: float
    gap: float
    eta: float
    decodes: int
    accuracy: float


TRACE_COLUMNS = ["algorithm", "policy", "seed", "round", "dual", "primal", "gap", "eta", "decodes",
                 "accuracy"]


def _problem(cfg: ExperimentConfig, loss=None):
    K = cfg.network.K
    train_ds, test_ds = from_spec(cfg.dataset, K)
    tr = cfg.training
    prob = build_problem(train_ds, K, loss or tr.loss, xi=tr.xi, rule=cfg.dataset.partition,
                         seed=cfg.dataset.seed, sizes=cfg.dataset.sizes)
    ev = test_ds if test_ds is not None else train_ds
    metric = (lambda w: accuracy(w, ev.X, ev.y)) if prob.loss.is_classification else None
    return prob, metric


def _trace(res, algorithm, policy, seed):
    return [TraceRow(algorithm, policy, seed, r.round, r.dual, r.primal, r.gap, r.eta, r.decodes,
                     r.metric) for r in res.records]


def _curves(trace):
    """Mean/std of gap and accuracy per (algorithm, policy, round)."""
    groups = {}
    for row in trace:
        groups.setdefault((row.algorithm, row.policy, row.round), []).append(row)
    out = []
    for (alg, pol, rnd), rows in groups.items():
        g = np.array([r.gap for r in rows])
        acc = np.array([r.accuracy for r in rows])
        out.append({"algorithm": alg, "policy": pol, "round": rnd, "seeds": len(rows),
                    "gap_mean": float(g.mean()), "gap_std": float(g.std()),
                    "accuracy_mean": float(acc.mean()), "accuracy_std": float(acc.std())})
    return out


CURVE_COLUMNS = ["algorithm", "policy", "round", "seeds", "gap_mean", "gap_std", "accuracy_mean",
                 "accuracy_std"]


def _manifest(cfg, kind):
    return {"kind": kind, "seed": cfg.seed, "config_hash": cfg.config_hash(), "config": cfg.result_dict()}


def bound_check(cfg: ExperimentConfig, prob, params, policy):
    """Measure the local error level, predict T, and compare the mean gap at T.

    Pilot runs record the worst per-UE error level; the rounds bound is then
    evaluated for eps = f * n, f in ``training.bound_eps_factors``, and
    ``training.seeds`` fresh runs are averaged at that round.
    """
    tr = cfg.training
    pilots = [training.train_algorithm2(
        prob, params, policy, tr.channel, tr.beta_rounds, tr.H,
        derive_seed(cfg.seed, "pilot", policy, s), tr.reference_update, beta_every=1)
        for s in range(tr.beta_seeds)]
    betas = [p.beta_max for p in pilots if math.isfinite(p.beta_max)]
    beta_hat = max(betas) if betas else 0.0
    beta_q = min(max(beta_hat, 1e-12), 1 - 1e-12)
    factors = tr.bound_eps_factors
    reports = [(f, rounds_to_gap(RateQuery(params, policy, beta_q, f * prob.n, prob.n))) for f in factors]
    horizon = max((int(rep.rounds) for _, rep in reports if rep.converges), default=0)

    def run(s):
        res = training.train_algorithm2(prob, params, policy, tr.channel, horizon, tr.H,
                                        derive_seed(cfg.seed, "bound", policy, s), tr.reference_update)
        return res.gaps()

    gaps = _pmap(run, range(tr.seeds), cfg.threads) if horizon else []
    rows = []
    for f, rep in reports:
        eps = f * prob.n
        if rep.converges:
            at = np.array([g[int(rep.rounds)] for g in gaps])
            mean, std = float(at.mean()), float(at.std())
        else:
            mean = std = math.nan
        rows.append({"policy": policy, "beta_hat": beta_hat, "U": rep.success_prob, "eps": eps,
                     "T": rep.rounds, "mean_gap_at_T": mean, "std_gap_at_T": std,
                     "seeds": tr.seeds, "holds": bool(rep.converges and mean <= eps)})
    return rows


BOUND_COLUMNS = ["policy", "beta_hat", "U", "eps", "T", "mean_gap_at_T", "std_gap_at_T", "seeds", "holds"]


def train(cfg: ExperimentConfig, out=None):
    """Algorithm 2 for every policy and seed; optional bound check.

    Returns {"trace": TraceRows, "curves": rows, "summary": rows, "bound": rows}.
    """
    out = _start(cfg, out)
    tr = cfg.training
    params = _base_params(cfg)
    prob, metric = _problem(cfg)
    jobs = [(pol, s) for pol in tr.policies for s in range(tr.seeds)]

    def run(job):
        pol, s = job
        res = training.train_algorithm2(prob, params, pol, tr.channel, tr.rounds, tr.H,
                                        derive_seed(cfg.seed, "train", pol, s), tr.reference_update,
                                        metric=metric)
        return _trace(res, "algorithm2", pol, s), res

    results = _pmap(run, jobs, cfg.threads)
    trace = [row for rows, _ in results for row in rows]
    prov = cfg.provenance()
    write_table(out / "train_trace.csv", TRACE_COLUMNS,
                [[getattr(r, c) for c in TRACE_COLUMNS] for r in trace], prov)
    curves = _curves(trace)
    write_table(out / "train_curves.csv", CURVE_COLUMNS, curves, prov)
    _plot(out / "train_curves.csv", y="gap_mean", logy=True, out_path=out / "train_gap.svg")
    if metric is not None:
        _plot(out / "train_curves.csv", y="accuracy_mean", out_path=out / "train_accuracy.svg")
    summary = []
    for (pol, s), (_, res) in zip(jobs, results):
        to_acc = math.inf
        if tr.target_accuracy is not None:
            to_acc = next((r.round for r in res.records if r.metric >= tr.target_accuracy), math.inf)
        summary.append({"policy": pol, "seed": s, "final_gap": res.records[-1].gap,
                        "rounds_to_eps": float(res.rounds_to(tr.eps)), "rounds_to_accuracy": float(to_acc),
                        "final_accuracy": res.records[-1].metric})
    write_table(out / "train_summary.csv", ["policy", "seed", "final_gap", "rounds_to_eps",
                                            "rounds_to_accuracy", "final_accuracy"], summary, prov)
    persist_run(trace, _manifest(cfg, "train"), out / "train_run")
    bound = []
    if tr.bound_check:
        for pol in tr.policies:
            bound.extend(bound_check(cfg, prob, params, pol))
        write_table(out / "bound_check.csv", BOUND_COLUMNS, bound, prov)
    return {"trace": trace, "curves": curves, "summary": summary, "bound": bound}


def compare_algs(cfg: ExperimentConfig, out=None):
    """Rounds to reach the gap target ``training.eps``: Algorithm 2 (duality
    gap) against Algorithm 1 (primal suboptimality), per policy and seed."""
    out = _start(cfg, out)
    tr = cfg.training
    params = _base_params(cfg)
    prob, metric = _problem(cfg)
    _, p_star = training.solve_primal(prob)
    jobs = [(alg, pol, s) for pol in tr.policies for alg in ("algorithm2", "algorithm1")
            for s in range(tr.seeds)]

    def run(job):
        alg, pol, s = job
        seed = derive_seed(cfg.seed, "compare", pol, s)
        if alg == "algorithm2":
            res = training.train_algorithm2(prob, params, pol, tr.channel, tr.rounds, tr.H, seed,
                                            tr.reference_update, stop_gap=tr.eps, metric=metric)
        else:
            res = training.train_algorithm1(prob, params, pol, tr.channel, tr.rounds, tr.tau, tr.step,
                                            seed, p_star=p_star, stop_gap=tr.eps, metric=metric)
        return _trace(res, alg, pol, s), float(res.rounds_to(tr.eps))

    results = _pmap(run, jobs, cfg.threads)
    trace = [row for rows, _ in results for row in rows]
    prov = dict(cfg.provenance(), p_star=repr(p_star))
    write_table(out / "compare_trace.csv", TRACE_COLUMNS,
                [[getattr(r, c) for c in TRACE_COLUMNS] for r in trace], prov)
    curves = _curves(trace)
    write_table(out / "compare_curves.csv", CURVE_COLUMNS, curves, prov)
    _plot(out / "compare_curves.csv", y="gap_mean", logy=True, out_path=out / "compare_gap.svg")
    summary = []
    for pol in tr.policies:
        for alg in ("algorithm2", "algorithm1"):
            rr = [t for (a, p, _), (_, t) in zip(jobs, results) if a == alg and p == pol]
            summary.append({"algorithm": alg, "policy": pol, "eps": tr.eps,
                            "median_rounds": float(np.median(rr)),
                            "reached": sum(math.isfinite(x) for x in rr), "seeds": len(rr)})
    write_table(out / "compare_summary.csv", ["algorithm", "policy", "eps", "median_rounds", "reached",
                                              "seeds"], summary, prov)
    persist_run(trace, _manifest(cfg, "compare-algs"), out / "compare_run")
    return {"trace": trace, "summary": summary, "p_star": p_star}

