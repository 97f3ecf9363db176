"""Primal/dual objectives and the per-UE local dual subproblem.

Data is stored feature-major: ``X`` has shape (d, n), column i is x_i.
UE k owns the dual coordinates ``partition[k]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

from .losses import LOGISTIC_DELTA, L2Regularizer, LossSpec


@dataclass
class Problem:
    X: np.ndarray
    y: np.ndarray
    loss: LossSpec
    xi: float
    partition: list
    reg: L2Regularizer = field(default_factory=L2Regularizer)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.X.shape[1] != self.y.size:
            raise ValueError(f"X must be (d, n) with n = len(y); got {self.X.shape} and {self.y.size}")
        if not self.xi > 0:
            raise ValueError("regularization weight xi must be positive")
        self.partition = [np.asarray(p, dtype=np.int64) for p in self.partition]
        allidx = np.concatenate(self.partition) if self.partition else np.array([], dtype=np.int64)
        if allidx.size != self.n or np.unique(allidx).size != self.n or (
                self.n and (allidx.min() < 0 or allidx.max() >= self.n)):
            raise ValueError("partition cells must be disjoint and cover 0..n-1")
        self._sq_norms = np.einsum("ij,ij->j", self.X, self.X)
        self._pad = None

    @property
    def d(self):
        return self.X.shape[0]

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def K(self):
        return len(self.partition)

    @property
    def kappa(self):
        return self.K / self.reg.zeta

    @property
    def sigma(self):
        """Coefficient kappa/xi of the local quadratic penalty."""
        return self.kappa / self.xi

    @property
    def sizes(self):
        return np.array([p.size for p in self.partition])

    def padded(self):
        """(K, n_max) index matrix, -1 padded, and its validity mask."""
        if self._pad is None:
            nmax = max(p.size for p in self.partition)
            idx = -np.ones((self.K, nmax), dtype=np.int64)
            for k, p in enumerate(self.partition):
                idx[k, :p.size] = p
            self._pad = (idx, idx >= 0)
        return self._pad


def primal_objective(w, prob: Problem) -> float:
    w = np.asarray(w, dtype=float)
    if w.shape != (prob.d,):
        raise ValueError(f"w must have shape ({prob.d},), got {w.shape}")
    u = prob.X.T @ w
    return float(np.mean(prob.loss.value(u, prob.y)) + prob.xi * prob.reg.value(w))


def shared_vector(a, prob: Problem):
    """v(a) = X a / (xi n)."""
    return prob.X @ a / (prob.xi * prob.n)


def dual_objective(a, prob: Problem) -> float:
    a = np.asarray(a, dtype=float)
    if a.shape != (prob.n,):
        raise ValueError(f"a must have shape ({prob.n},), got {a.shape}")
    conj = prob.loss.conj(a, prob.y)
    if not np.all(np.isfinite(conj)):
        bad = int(np.flatnonzero(~np.isfinite(conj))[0])
        raise ValueError(f"dual coordinate {bad} (a={a[bad]!r}) outside the conjugate domain of {prob.loss.kind}")
    return float(-np.mean(conj) - prob.xi * prob.reg.conj(shared_vector(a, prob)))


def primal_from_dual(prob: Problem, a=None, v=None):
    if v is None:
        if a is None:
            raise ValueError("need a or v")
        v = shared_vector(a, prob)
    return prob.reg.conj_grad(v)


def duality_gap(a, prob: Problem) -> float:
    return primal_objective(primal_from_dual(prob, a=a), prob) - dual_objective(a, prob)


def local_subproblem_value(prob: Problem, k: int, delta, v, a) -> float:
    """Local dual objective of UE k at increment ``delta`` (length n_k).

    ``a`` is the UE's local reference of the full dual vector (only its own
    coordinates are read).
    """
    idx = prob.partition[k]
    delta = np.asarray(delta, dtype=float)
    if delta.shape != idx.shape:
        raise ValueError(f"increment must have length n_k={idx.size}")
    n = prob.n
    Xk = prob.X[:, idx]
    w = prob.reg.conj_grad(v)
    ak = np.asarray(a, dtype=float)[idx] + delta
    conj = prob.loss.conj(ak, prob.y[idx])
    if not np.all(np.isfinite(conj)):
        raise ValueError("local dual iterate outside the conjugate domain")
    q = Xk @ delta
    return float(-np.sum(conj) / n - prob.xi / prob.K * prob.reg.conj(v)
                 - (w @ q) / n - prob.sigma / (2 * n * n) * (q @ q))


def _ca_passes(prob, v, a, H, rng, delta, Q, tol=None):
    """Lockstep randomized coordinate ascent on every UE's subproblem.

    ``delta`` (n,) and ``Q`` (d, K) = [X_k delta_k] are updated in place.
    """
    idx, mask = prob.padded()
    K, nmax = idx.shape
    n = prob.n
    sig_n = prob.sigma / n
    w = prob.reg.conj_grad(v)
    X, y, loss = prob.X, prob.y, prob.loss
    rows = np.arange(K)
    safe = np.where(mask, idx, 0)
    for _ in range(H):
        if rng is not None:
            keys = rng.random((K, nmax))
            keys[~mask] = np.inf
            order = np.argsort(keys, axis=1, kind="stable")
        else:
            order = np.broadcast_to(np.arange(nmax), (K, nmax))
        biggest = 0.0
        for j in range(nmax):
            pos = order[:, j]
            ii = safe[rows, pos]
            ok = mask[rows, pos]
            Xi = X[:, ii]
            c1 = w @ Xi + sig_n * np.einsum("ij,ij->j", Xi, Q)
            c2 = sig_n * prob._sq_norms[ii]
            A = a[ii] + delta[ii]
            step = loss.coordinate_step(A, y[ii], c1, c2)
            step = np.where(ok, step, 0.0)
            delta[ii] += step
            Q += Xi * step
            biggest = max(biggest, float(np.max(np.abs(step))))
        if tol is not None and biggest <= tol:
            break
    return delta, Q


def solve_local_all(prob: Problem, v, a, H: int, rng: np.random.Generator | None):
    """H passes of randomized coordinate ascent for every UE at once.

    Returns the full-length increment vector (UE k's block on D_k).
    """
    if H < 1:
        raise ValueError("need at least one local pass (H >= 1)")
    delta = np.zeros(prob.n)
    Q = np.zeros((prob.d, prob.K))
    _ca_passes(prob, v, np.asarray(a, dtype=float), H, rng, delta, Q)
    return delta


def solve_local(prob: Problem, k: int, v, a, H: int, rng: np.random.Generator | None = None):
    """H passes of randomized coordinate ascent on UE k's subproblem; returns delta_k."""
    if H < 1:
        raise ValueError("need at least one local pass (H >= 1)")
    idx = prob.partition[k]
    sub = Problem(prob.X[:, idx], prob.y[idx], prob.loss, prob.xi,
                  [np.arange(idx.size)], prob.reg)
    # keep the global n, K in the subproblem coefficients
    return _solve_block(prob, sub, idx, v, a, H, rng)


def _solve_block(prob, sub, idx, v, a, H, rng, tol=None):
    n, sigma = prob.n, prob.sigma
    w = prob.reg.conj_grad(v)
    Xk, yk = sub.X, sub.y
    ak = np.asarray(a, dtype=float)[idx]
    nk = idx.size
    delta = np.zeros(nk)
    q = np.zeros(prob.d)
    sq = sub._sq_norms
    for _ in range(H):
        order = rng.permutation(nk) if rng is not None else range(nk)
        biggest = 0.0
        for i in order:
            xi = Xk[:, i]
            c1 = w @ xi + sigma / n * (xi @ q)
            c2 = sigma / n * sq[i]
            step = float(prob.loss.coordinate_step(ak[i] + delta[i], yk[i], c1, c2))
            delta[i] += step
            q += step * xi
            biggest = max(biggest, abs(step))
        if tol is not None and biggest <= tol:
            break
    return delta


def _local_terms(prob, k, v, a):
    idx = prob.partition[k]
    Xk = prob.X[:, idx]
    w = prob.reg.conj_grad(v)
    return idx, Xk, prob.y[idx], np.asarray(a, dtype=float)[idx], w


def solve_local_exact(prob: Problem, k: int, v, a, tol: float = 1e-15, max_iter: int = 200):
    """Maximizer of UE k's subproblem.

    Least squares: one linear solve. Squared hinge: a bound-constrained
    least-squares problem in b = y*(a + delta) >= 0. Logistic: damped Newton
    in b in (0, 1) with a fraction-to-boundary rule.
    """
    idx, Xk, yk, ak, w = _local_terms(prob, k, v, a)
    n, sig = prob.n, prob.sigma
    G = Xk.T @ Xk
    c = Xk.T @ w
    if prob.loss.kind == "least_squares":
        M = np.eye(idx.size) + sig / n * G
        return np.linalg.solve(M, yk - ak - c)
    # change of variable a_new = y * b; D = diag(y)
    Gb = (yk[:, None] * G) * yk[None, :]
    if prob.loss.kind == "squared_smooth_hinge":
        # minimize 1/2 b'Mb - q'b over b >= 0 (n times the negated objective)
        M = np.eye(idx.size) + sig / n * Gb
        q = 1.0 - yk * c + sig / n * yk * (G @ ak)
        L = np.linalg.cholesky(M)
        rhs = np.linalg.solve(L, q)
        res = lsq_linear(L.T, rhs, bounds=(0.0, np.inf), method="bvls", tol=1e-15)
        return yk * res.x - ak
    # logistic
    lin = yk * c - sig / n * yk * (G @ ak)

    def obj(b):
        ent = np.sum(b * np.log(b) + (1 - b) * np.log1p(-b))
        return -ent - lin @ b - sig / (2 * n) * (b @ Gb @ b)

    b = np.full(idx.size, 0.5)
    f = obj(b)
    for _ in range(max_iter):
        g = -(np.log(b) - np.log1p(-b)) - lin - sig / n * (Gb @ b)
        Hm = -np.diag(1.0 / (b * (1 - b))) - sig / n * Gb
        step = -np.linalg.solve(Hm, g)
        dec = float(g @ step)
        if dec <= tol * max(1.0, abs(f)):
            break
        # stay strictly inside (0, 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            lim = np.where(step > 0, (1 - b) / step, np.where(step < 0, -b / step, np.inf))
        t = min(1.0, 0.99 * float(np.min(lim)))
        while t > 1e-20:
            bn = b + t * step
            fn = obj(bn)
            if fn >= f + 1e-4 * t * dec:
                break
            t *= 0.5
        else:
            break
        b, f = bn, fn
    b = np.clip(b, LOGISTIC_DELTA, 1 - LOGISTIC_DELTA)
    return yk * b - ak


def solve_local_exact_all(prob: Problem, v, a):
    """Exact maximizers for every UE (full-length vector)."""
    a = np.asarray(a, dtype=float)
    out = np.zeros(prob.n)
    for k, idx in enumerate(prob.partition):
        out[idx] = solve_local_exact(prob, k, v, a)
    return out


@dataclass(frozen=True)
class BetaMeasurement:
    beta: float
    degenerate: bool


def measure_beta(prob: Problem, k: int, delta, v, a, exact=None) -> BetaMeasurement:
    """Relative shortfall of ``delta`` against the exact local maximizer, in [0, 1]."""
    if exact is None:
        exact = solve_local_exact(prob, k, v, a)
    f_star = local_subproblem_value(prob, k, exact, v, a)
    f0 = local_subproblem_value(prob, k, np.zeros_like(exact), v, a)
    f = local_subproblem_value(prob, k, delta, v, a)
    denom = f_star - f0
    if not denom > 1e-14 * max(1.0, abs(f_star)):
        return BetaMeasurement(0.0, True)
    return BetaMeasurement(float(np.clip((f_star - f) / denom, 0.0, 1.0)), False)
