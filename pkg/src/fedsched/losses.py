"""Smooth convex losses with conjugates, and the L2 regularizer.

``conj(a, y)`` returns l*(-a), the form that appears in the dual. All
methods are vectorized over matching arrays ``u``/``a`` and ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log1p, xlogy

KINDS = ("least_squares", "squared_smooth_hinge", "logistic")
LOGISTIC_DELTA = 1e-12
# round-off allowance when checking dual feasibility
DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class LossSpec:
    kind: str = "logistic"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss {self.kind!r}; expected one of {KINDS}")

    @property
    def smoothness(self) -> float:
        """Lipschitz constant 1/mu of the loss derivative."""
        return 0.25 if self.kind == "logistic" else 1.0

    @property
    def mu(self) -> float:
        return 1.0 / self.smoothness

    @property
    def is_classification(self) -> bool:
        return self.kind != "least_squares"

    def value(self, u, y):
        u = np.asarray(u, dtype=float)
        if self.kind == "least_squares":
            return 0.5 * (u - y) ** 2
        if self.kind == "squared_smooth_hinge":
            return 0.5 * np.maximum(0.0, 1.0 - y * u) ** 2
        return np.logaddexp(0.0, -y * u)

    def grad(self, u, y):
        """Derivative of the loss in its first argument."""
        u = np.asarray(u, dtype=float)
        if self.kind == "least_squares":
            return u - y
        if self.kind == "squared_smooth_hinge":
            return -y * np.maximum(0.0, 1.0 - y * u)
        return -y * expit(-y * u)

    def dual_point(self, u, y):
        """a = -l'(u): the dual coordinate paired with margin ``u``."""
        return -self.grad(u, y)

    def in_domain(self, a, y, tol=0.0):
        a = np.asarray(a, dtype=float)
        if self.kind == "least_squares":
            return np.isfinite(a)
        b = y * a
        if self.kind == "squared_smooth_hinge":
            return b >= -tol
        return (b >= -tol) & (b <= 1 + tol)

    def project(self, a, y):
        """Nearest point of the conjugate domain (logistic kept off the log singularities)."""
        a = np.asarray(a, dtype=float)
        if self.kind == "least_squares":
            return a
        b = y * a
        if self.kind == "squared_smooth_hinge":
            return y * np.maximum(b, 0.0)
        return y * np.clip(b, LOGISTIC_DELTA, 1 - LOGISTIC_DELTA)

    def conj(self, a, y):
        """l*(-a); +inf outside the domain."""
        a = np.asarray(a, dtype=float)
        if self.kind == "least_squares":
            return 0.5 * a * a - a * y
        b = y * a
        if self.kind == "squared_smooth_hinge":
            bc = np.maximum(b, 0.0)
            return np.where(b >= -DOMAIN_SLACK, 0.5 * bc * bc - bc, np.inf)
        ok = (b >= -DOMAIN_SLACK) & (b <= 1 + DOMAIN_SLACK)
        bc = np.clip(b, 0.0, 1.0)
        out = xlogy(bc, bc) + xlogy(1 - bc, 1 - bc)
        return np.where(ok, out, np.inf)

    def conj_grad(self, a, y):
        """d/da of l*(-a)."""
        a = np.asarray(a, dtype=float)
        if self.kind in ("least_squares", "squared_smooth_hinge"):
            return a - y
        b = np.clip(y * a, LOGISTIC_DELTA, 1 - LOGISTIC_DELTA)
        return y * (np.log(b) - log1p(-b))

    def coordinate_step(self, A, y, c1, c2):
        """delta maximizing -l*(-(A+delta)) - c1 delta - c2 delta^2 / 2.

        ``c2 >= 0``; vectorized over all arguments.
        """
        A = np.asarray(A, dtype=float)
        if self.kind != "logistic":
            delta = (y - A - c1) / (1.0 + c2)
            if self.kind == "squared_smooth_hinge":
                delta = np.where(y * (A + delta) < 0, -A, delta)
            return delta
        return _logistic_step(A, y, c1, c2)


def _logistic_step(A, y, c1, c2, iters=200):
    # Solve for the new b = y (A + delta) in (0, 1) on the logit scale:
    # g(z) = -z - y c1 - c2 (sigmoid(z) - y A) = 0, strictly decreasing, with
    # the root bracketed by the range of the sigmoid. Newton steps are kept
    # only while they stay inside the bracket and halve |g|; otherwise bisect.
    A, y, c1, c2 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (A, y, c1, c2)))
    yA = np.clip(y * A, 0.0, 1.0)
    base = -y * c1
    lo = base - c2 * (1 - yA)
    hi = base + c2 * yA
    z = np.clip(base, lo, hi)
    prev = np.full(z.shape, np.inf)
    for _ in range(iters):
        s = expit(z)
        g = -z + base - c2 * (s - yA)
        lo = np.where(g > 0, z, lo)
        hi = np.where(g > 0, hi, z)
        dg = -1.0 - c2 * s * (1 - s)
        zn = z - g / dg
        bad = (zn <= lo) | (zn >= hi) | (np.abs(g) > 0.5 * prev)
        zn = np.where(bad, 0.5 * (lo + hi), zn)
        prev = np.abs(g)
        scale = 1.0 + np.abs(z) + np.abs(base) + c2
        done = (np.abs(g) <= 1e-15 * scale) | (hi - lo <= 1e-15 * scale)
        z = np.where(done, z, zn)
        if done.all():
            break
    b = np.clip(expit(z), LOGISTIC_DELTA, 1 - LOGISTIC_DELTA)
    return y * b - A


@dataclass(frozen=True)
class L2Regularizer:
    """r(w) = (zeta/2)||w||^2."""

    zeta: float = 1.0

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")

    def value(self, w):
        return 0.5 * self.zeta * float(np.dot(w, w))

    def grad(self, w):
        return self.zeta * np.asarray(w)

    def conj(self, v):
        return float(np.dot(v, v)) / (2 * self.zeta)

    def conj_grad(self, v):
        return np.asarray(v) / self.zeta
