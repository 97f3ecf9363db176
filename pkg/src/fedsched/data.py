"""Synthetic problems, dataset loading, and partitioning across UEs."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .dual import Problem
from .losses import L2Regularizer, LossSpec
from .rng import stream

PARTITION_RULES = ("balanced_iid", "label_sorted_noniid", "unbalanced")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray  # (d, n)
    y: np.ndarray
    standardized: bool = False
    source: str = "synthetic"

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def d(self):
        return self.X.shape[0]


@dataclass(frozen=True)
class DatasetSpec:
    source: str = "synthetic_gaussian"
    n: int = 500
    d: int = 5
    separation: float = 2.0
    label_noise: float = 0.0
    path: str | None = None
    format: str = "dense"
    standardize: bool = True
    partition: str = "balanced_iid"
    sizes: tuple | None = None
    seed: int = 0
    test_fraction: float = 0.0


def generate_synthetic(n: int, d: int, separation: float = 2.0, label_noise: float = 0.0,
                       seed: int = 0, K: int | None = None) -> Dataset:
    """Two unit-covariance Gaussian clusters at +-(separation/2) e_1, labels +-1."""
    if K is not None and n < K:
        raise ValueError(f"need n >= K, got n={n}, K={K}")
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if not 0 <= label_noise <= 1:
        raise ValueError("label_noise must lie in [0, 1]")
    rng = stream(seed, "synthetic")
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    X = rng.standard_normal((d, n))
    X[0] += 0.5 * separation * y
    flip = rng.random(n) < label_noise
    y = np.where(flip, -y, y)
    return Dataset(X, y)


def _is_number(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _split(line):
    return [t for t in re.split(r"[,\s]+", line.strip()) if t]


def load_dataset(path, format: str = "dense", standardize: bool = True,
                 classification: bool = True) -> Dataset:
    """Parse a dense delimited file (label first) or sparse ``label idx:val`` rows.

    Dense files may start with a header line (all non-numeric tokens) and use
    commas or whitespace. Sparse indices are 1-based. Labels of a two-class
    file are mapped to -1/+1 (smaller value to -1).
    """
    with open(path) as fh:
        lines = [(i + 1, ln) for i, ln in enumerate(fh) if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty dataset")
    labels, rows = [], []
    if format == "dense":
        first = _split(lines[0][1])
        if not any(_is_number(t) for t in first):
            lines = lines[1:]
        if not lines:
            raise ValueError(f"{path}: header but no data rows")
        width = None
        for lineno, ln in lines:
            toks = _split(ln)
            try:
                vals = [float(t) for t in toks]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric token in row") from None
            if len(vals) < 2:
                raise ValueError(f"{path}:{lineno}: need a label and at least one feature")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} columns, found {len(vals)}")
            labels.append(vals[0])
            rows.append(vals[1:])
        X = np.array(rows, dtype=float).T
    elif format == "sparse":
        entries = []
        dmax = 0
        for r, (lineno, ln) in enumerate(lines):
            toks = ln.split()
            try:
                labels.append(float(toks[0]))
                for tok in toks[1:]:
                    i, v = tok.split(":")
                    i = int(i)
                    if i < 1:
                        raise ValueError
                    entries.append((r, i - 1, float(v)))
                    dmax = max(dmax, i)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed sparse row") from None
        if dmax == 0:
            raise ValueError(f"{path}: no features found")
        X = np.zeros((dmax, len(lines)))
        for r, i, v in entries:
            X[i, r] = v
    else:
        raise ValueError(f"unknown dataset format {format!r}; expected 'dense' or 'sparse'")
    y = np.array(labels, dtype=float)
    if classification:
        y = coerce_labels(y)
    if standardize:
        X = standardize_features(X)
    return Dataset(X, y, standardize, str(path))


def coerce_labels(y):
    classes = np.unique(y)
    if classes.size > 2:
        raise ValueError(f"classification loss needs two classes, found {classes.size}")
    if classes.size == 1:
        return np.where(y > 0, 1.0, -1.0)
    return np.where(y == classes[1], 1.0, -1.0)


def standardize_features(X):
    mu = X.mean(axis=1, keepdims=True)
    sd = X.std(axis=1, keepdims=True)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


def partition_data(y, K: int, rule: str = "balanced_iid", seed: int = 0, sizes=None):
    """Split indices 0..n-1 into K disjoint cells."""
    n = len(y)
    if K < 1 or K > n:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={n}")
    if rule == "balanced_iid":
        perm = stream(seed, "partition").permutation(n)
        return [np.sort(c) for c in np.array_split(perm, K)]
    if rule == "label_sorted_noniid":
        order = np.argsort(np.asarray(y), kind="stable")
        return [np.sort(c) for c in np.array_split(order, K)]
    if rule == "unbalanced":
        if sizes is None or len(sizes) != K:
            raise ValueError("unbalanced partition needs K sizes")
        sizes = [int(s) for s in sizes]
        if sum(sizes) != n or min(sizes) < 1:
            raise ValueError(f"sizes must be positive and sum to n={n}, got {sum(sizes)}")
        perm = stream(seed, "partition").permutation(n)
        return [np.sort(c) for c in np.split(perm, np.cumsum(sizes)[:-1])]
    raise ValueError(f"unknown partition rule {rule!r}; expected one of {PARTITION_RULES}")


def train_test_split(ds: Dataset, fraction: float, seed: int = 0):
    if not 0 < fraction < 1:
        return ds, None
    perm = stream(seed, "split").permutation(ds.n)
    m = int(round(fraction * ds.n))
    te, tr = perm[:m], perm[m:]
    mk = lambda ii: Dataset(ds.X[:, ii], ds.y[ii], ds.standardized, ds.source)  # noqa: E731
    return mk(tr), mk(te)


def build_problem(ds: Dataset, K: int, loss="logistic", xi: float = 0.01, zeta: float = 1.0,
                  rule: str = "balanced_iid", seed: int = 0, sizes=None) -> Problem:
    if ds.n < K:
        raise ValueError(f"need n >= K, got n={ds.n}, K={K}")
    part = partition_data(ds.y, K, rule, seed, sizes)
    spec = loss if isinstance(loss, LossSpec) else LossSpec(loss)
    return Problem(ds.X, ds.y, spec, xi, part, L2Regularizer(zeta))


def from_spec(spec: DatasetSpec, K: int):
    """(train Dataset, test Dataset or None) for a DatasetSpec."""
    if spec.source == "synthetic_gaussian":
        ds = generate_synthetic(spec.n, spec.d, spec.separation, spec.label_noise, spec.seed, K)
    elif spec.source == "file":
        if not spec.path:
            raise ValueError("file dataset needs a path")
        ds = load_dataset(spec.path, spec.format, spec.standardize)
    else:
        raise ValueError(f"unknown dataset source {spec.source!r}")
    return train_test_split(ds, spec.test_fraction, spec.seed)


def accuracy(w, X, y) -> float:
    pred = np.where(X.T @ w >= 0, 1.0, -1.0)
    return float(np.mean(pred == y))
