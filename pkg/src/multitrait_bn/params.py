"""Per-node linear-Gaussian local distributions fitted by OLS or ridge."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .graph import Dag

DEFAULT_GRID = tuple(float(v) for v in np.logspace(-4, 4, 17))


@dataclass(frozen=True)
class LocalDistribution:
    """``node = intercept + sum(coef * parent) + N(0, residual_variance)``."""

    node: str
    intercept: float
    coefficients: Mapping[str, float] = field(default_factory=dict)
    residual_variance: float = 1.0
    penalty: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "coefficients", dict(sorted(self.coefficients.items())))
        if not self.residual_variance >= 0:
            raise ConfigError(f"negative residual variance for {self.node!r}")

    @property
    def parents(self) -> tuple[str, ...]:
        return tuple(self.coefficients)

    def mean(self, values: Mapping[str, np.ndarray]) -> np.ndarray | float:
        out = self.intercept
        for p, b in self.coefficients.items():
            out = out + b * np.asarray(values[p], dtype=float)
        return out


@dataclass(frozen=True)
class GaussianBn:
    dag: Dag
    locals: Mapping[str, LocalDistribution]
    fit_method: str = "ols"
    lambda_policy: str | None = None

    def __post_init__(self):
        missing = set(self.dag.ids) - set(self.locals)
        if missing:
            raise ConfigError(f"no local distribution for {sorted(missing)}")
        object.__setattr__(self, "locals", {k: self.locals[k] for k in self.dag.ids})
        for node_id, ld in self.locals.items():
            if set(ld.coefficients) != set(self.dag.parents(node_id)):
                raise ConfigError(
                    f"coefficients of {node_id!r} do not match its parents in the DAG"
                )

    @cached_property
    def order(self) -> tuple[str, ...]:
        return tuple(self.dag.topological_order())

    @property
    def nodes(self):
        return self.dag.nodes

    def local(self, node_id: str) -> LocalDistribution:
        return self.locals[node_id]


@dataclass(frozen=True)
class FixedLambda:
    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ConfigError(f"ridge penalty must be non-negative, got {self.value}")

    def describe(self) -> str:
        return f"fixed({self.value!r})"


@dataclass(frozen=True)
class GcvLambda:
    """Generalized cross-validation over a log grid (default 1e-4 ... 1e4, 17 points)."""

    grid: tuple[float, ...] = DEFAULT_GRID

    def describe(self) -> str:
        return "gcv" if self.grid == DEFAULT_GRID else f"gcv({','.join(map(repr, self.grid))})"


@dataclass(frozen=True)
class KFoldLambda:
    k: int = 5
    grid: tuple[float, ...] = DEFAULT_GRID
    seed: int = 0

    def describe(self) -> str:
        return f"kfold({self.k},{self.seed})"


LambdaPolicy = Union[FixedLambda, GcvLambda, KFoldLambda]


def parse_lambda_policy(text: str) -> LambdaPolicy:
    """Parse ``gcv``, ``kfold``, ``kfold(5,1)``, ``fixed(0.5)`` or a bare number."""
    text = text.strip().lower()
    if text == "gcv":
        return GcvLambda()
    if text.startswith("kfold"):
        args = text[5:].strip("()")
        parts = [a for a in args.split(",") if a.strip()]
        k = int(parts[0]) if parts else 5
        seed = int(parts[1]) if len(parts) > 1 else 0
        return KFoldLambda(k=k, seed=seed)
    if text.startswith("fixed"):
        text = text[5:].strip("()")
    try:
        return FixedLambda(float(text))
    except ValueError:
        raise ConfigError(f"unknown lambda policy {text!r}") from None


def _table(data):
    """Column index and matrix of a Dataset-like object."""
    return {c: k for k, c in enumerate(data.columns)}, np.asarray(data.matrix, dtype=float)


def _collinear_parents(x: np.ndarray, names: Sequence[str]) -> list[str]:
    xc = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    tol = s.max(initial=0.0) * max(xc.shape) * np.finfo(float).eps
    null = vt[s <= tol] if s.size else vt
    if null.size == 0:
        null = vt[-1:]
    weight = np.abs(null).max(axis=0)
    return [names[j] for j in np.flatnonzero(weight > 1e-8)] or list(names)


def ols_local(node: str, y: np.ndarray, x: np.ndarray, parents: Sequence[str]) -> LocalDistribution:
    n, p = x.shape
    if n <= p + 1:
        raise DataError(f"node {node!r}: {n} observations cannot fit {p} parents and an intercept")
    if p == 0:
        return LocalDistribution(node, float(y.mean()), {}, float(y.var(ddof=1)))
    xm = x.mean(axis=0)
    ym = y.mean()
    xc = x - xm
    rank = np.linalg.matrix_rank(xc)
    if rank < p:
        bad = _collinear_parents(x, parents)
        raise NumericalError(f"node {node!r}: design is rank deficient; collinear parents {bad}")
    beta, *_ = np.linalg.lstsq(xc, y - ym, rcond=None)
    resid = (y - ym) - xc @ beta
    rss = float(resid @ resid)
    return LocalDistribution(
        node,
        float(ym - xm @ beta),
        {pa: float(b) for pa, b in zip(parents, beta)},
        rss / (n - p - 1),
    )


def fit_ols(dag: Dag, data) -> GaussianBn:
    """Least-squares fit of every node on its parents.

    Residual variance is RSS / (n - |parents| - 1).
    """
    index, m = _table(data)
    locals_ = {}
    for node in dag.ids:
        parents = sorted(dag.parents(node))
        x = m[:, [index[p] for p in parents]]
        locals_[node] = ols_local(node, m[:, index[node]], x, parents)
    return GaussianBn(dag, locals_, "ols")


def _ridge_path(z: np.ndarray, yc: np.ndarray, lams: Sequence[float]):
    """Coefficients, RSS and effective df (without intercept) for each lambda."""
    u, d, vt = np.linalg.svd(z, full_matrices=False)
    uty = u.T @ yc
    out = []
    for lam in lams:
        if lam == 0:
            keep = d > d.max(initial=0.0) * max(z.shape) * np.finfo(float).eps
            shrink = np.where(keep, 1.0 / np.where(keep, d, 1.0), 0.0)
            hat = keep.astype(float)
        else:
            shrink = d / (d * d + lam)
            hat = d * d / (d * d + lam)
        beta = vt.T @ (shrink * uty)
        resid = yc - u @ (hat * uty)
        out.append((beta, float(resid @ resid), float(hat.sum())))
    return out


def _kfold_lambda(z, yc, policy: KFoldLambda) -> float:
    n = z.shape[0]
    if policy.k < 2 or policy.k > n:
        raise ConfigError(f"k-fold lambda selection needs 2 <= k <= n, got k={policy.k}")
    perm = np.random.default_rng(policy.seed).permutation(n)
    folds = np.array_split(perm, policy.k)
    errors = np.zeros(len(policy.grid))
    for test in folds:
        train = np.setdiff1d(perm, test)
        zt, yt = z[train], yc[train]
        zm, ym = zt.mean(axis=0), yt.mean()
        for g, (beta, _, _) in enumerate(_ridge_path(zt - zm, yt - ym, policy.grid)):
            pred = ym + (z[test] - zm) @ beta
            errors[g] += float(((yc[test] - pred) ** 2).sum())
    return float(policy.grid[int(np.argmin(errors))])


def ridge_local(node: str, y: np.ndarray, x: np.ndarray, parents: Sequence[str],
                policy: LambdaPolicy) -> LocalDistribution:
    n, p = x.shape
    if p == 0:
        return ols_local(node, y, x, parents)
    if n <= 2:
        raise DataError(f"node {node!r}: too few observations for ridge")
    xm = x.mean(axis=0)
    xs = x.std(axis=0)
    if np.any(xs == 0):
        raise DataError(f"node {node!r}: constant parent {parents[int(np.flatnonzero(xs == 0)[0])]!r}")
    z = (x - xm) / xs
    ym = y.mean()
    yc = y - ym
    if isinstance(policy, FixedLambda):
        lam = policy.value
    elif isinstance(policy, GcvLambda):
        path = _ridge_path(z, yc, policy.grid)
        scores = []
        for beta, rss, edf in path:
            dof = n - 1 - edf
            scores.append(n * rss / (dof * dof) if dof > 0 else math.inf)
        lam = float(policy.grid[int(np.argmin(scores))])
    elif isinstance(policy, KFoldLambda):
        lam = _kfold_lambda(z, yc, policy)
    else:
        raise ConfigError(f"unknown lambda policy {policy!r}")
    if lam < 0:
        raise ConfigError(f"ridge penalty must be non-negative, got {lam}")
    (beta_z, rss, edf), = _ridge_path(z, yc, [lam])
    dof = n - 1 - edf
    if dof <= 0:
        raise DataError(f"node {node!r}: no residual degrees of freedom left (lambda={lam})")
    beta = beta_z / xs
    return LocalDistribution(
        node,
        float(ym - xm @ beta),
        {pa: float(b) for pa, b in zip(parents, beta)},
        rss / dof,
        penalty=lam,
    )


def fit_ridge(dag: Dag, data, lambda_policy: LambdaPolicy | float = GcvLambda()) -> GaussianBn:
    """Ridge fit of every node on its parents.

    Parents are standardized (population sd) before penalizing, the
    intercept is left unpenalized and coefficients are reported on the
    original scale.  Residual variance is RSS / (n - tr(H)) where the hat
    matrix H includes the intercept column.
    """
    if isinstance(lambda_policy, (int, float)):
        lambda_policy = FixedLambda(float(lambda_policy))
    index, m = _table(data)
    locals_ = {}
    for node in dag.ids:
        parents = sorted(dag.parents(node))
        x = m[:, [index[p] for p in parents]]
        locals_[node] = ridge_local(node, m[:, index[node]], x, parents, lambda_policy)
    return GaussianBn(dag, locals_, "ridge", lambda_policy.describe())


def fit(dag: Dag, data, method: str = "ridge", lambda_policy: LambdaPolicy | float = GcvLambda()) -> GaussianBn:
    if method == "ols":
        return fit_ols(dag, data)
    if method == "ridge":
        return fit_ridge(dag, data, lambda_policy)
    raise ConfigError(f"unknown fit method {method!r}")
