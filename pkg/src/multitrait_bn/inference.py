"""Joint distribution of a Gaussian BN, exact and Monte Carlo conditioning,
and trait prediction.

Monte Carlo queries use logic sampling (forward sampling with rejection
of samples outside interval evidence) or likelihood weighting (evidence
nodes are clamped or drawn from their truncated local distribution, and
each sample is weighted by the local density or interval mass).
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import linalg
from scipy.special import log_ndtr, ndtri
from scipy.stats import truncnorm

from .data_io import GenotypeMatrix, TraitMatrix
from .errors import ConfigError, DataError, InsufficientSupportError, NumericalError
from .params import GaussianBn

log = logging.getLogger(__name__)

JITTER = 1e-10
ENGINES = ("exact", "logic", "lw")


@dataclass(frozen=True)
class JointGaussian:
    order: tuple[str, ...]
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "covariance", np.asarray(self.covariance, dtype=float))

    def index(self, ids: Iterable[str]) -> list[int]:
        pos = {k: i for i, k in enumerate(self.order)}
        try:
            return [pos[i] for i in ids]
        except KeyError as e:
            raise ConfigError(f"unknown node {e.args[0]!r}") from None

    def marginal(self, ids: Sequence[str]) -> "JointGaussian":
        idx = self.index(ids)
        return JointGaussian(tuple(ids), self.mean[idx], self.covariance[np.ix_(idx, idx)])

    def precision(self) -> np.ndarray:
        c = _cholesky(self.covariance, "joint covariance")
        inv = linalg.cho_solve((c, True), np.eye(len(self.order)))
        return 0.5 * (inv + inv.T)

    def sd(self, node: str) -> float:
        i = self.index([node])[0]
        return math.sqrt(max(self.covariance[i, i], 0.0))


def _cholesky(m: np.ndarray, what: str) -> np.ndarray:
    """Lower Cholesky factor, with a logged diagonal jitter as last resort."""
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        pass
    log.warning("%s is not positive definite; adding %g to the diagonal", what, JITTER)
    try:
        return np.linalg.cholesky(m + JITTER * np.eye(m.shape[0]))
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"{what} is singular; refit with OLS or add jitter to the residual variances"
        ) from None


def to_joint(bn: GaussianBn) -> JointGaussian:
    """Mean and covariance implied by the local distributions.

    With B the parent-to-child coefficient matrix and D the residual
    variances, X = c + B'X + e, so Sigma = A D A' with A = (I - B')^-1.
    In topological order I - B' is unit lower triangular and A follows by
    forward substitution.
    """
    order = bn.order
    pos = {k: i for i, k in enumerate(order)}
    v = len(order)
    lower = np.eye(v)
    c = np.empty(v)
    d = np.empty(v)
    for i, node in enumerate(order):
        ld = bn.locals[node]
        c[i] = ld.intercept
        d[i] = ld.residual_variance
        for p, b in ld.coefficients.items():
            lower[i, pos[p]] = -b
    a = linalg.solve_triangular(lower, np.eye(v), lower=True, unit_diagonal=True)
    mean = a @ c
    cov = (a * d) @ a.T
    cov = 0.5 * (cov + cov.T)
    return JointGaussian(order, mean, cov)


def precision_zero_pattern(j: JointGaussian, tol: float = 1e-8) -> np.ndarray:
    """Boolean matrix marking |Omega_ij| <= tol (diagonal always False)."""
    try:
        c = np.linalg.cholesky(j.covariance)
    except np.linalg.LinAlgError:
        raise NumericalError(
            "covariance is singular; add jitter or refit so every residual variance is positive"
        ) from None
    omega = linalg.cho_solve((c, True), np.eye(len(j.order)))
    zero = np.abs(omega) <= tol
    np.fill_diagonal(zero, False)
    return zero


def implied_coefficients(j: JointGaussian, child: str, regressors: Sequence[str]) -> dict[str, float]:
    """Regression of ``child`` on ``regressors`` read off a precision matrix.

    Uses beta_k = -Omega_ck / Omega_cc with Omega the inverse covariance of
    {child} + regressors.  With the regressors equal to the child's parents
    this recovers the local-distribution coefficients.
    """
    sub = j.marginal([child, *regressors])
    omega = sub.precision()
    return {r: float(-omega[0, k + 1] / omega[0, 0]) for k, r in enumerate(regressors)}


def condition_exact(j: JointGaussian, evidence: Mapping[str, float]) -> JointGaussian:
    """Gaussian conditioning on point evidence (Schur complement)."""
    if not evidence:
        return j
    ev = list(evidence)
    rest = [k for k in j.order if k not in evidence]
    i2 = j.index(ev)
    i1 = j.index(rest)
    s22 = j.covariance[np.ix_(i2, i2)]
    s12 = j.covariance[np.ix_(i1, i2)]
    try:
        c = np.linalg.cholesky(s22)
    except np.linalg.LinAlgError:
        raise NumericalError(f"covariance of evidence nodes {ev} is singular") from None
    x = np.array([evidence[k] for k in ev], dtype=float)
    gain = linalg.cho_solve((c, True), s12.T).T
    mean = j.mean[i1] + gain @ (x - j.mean[i2])
    cov = j.covariance[np.ix_(i1, i1)] - gain @ s12.T
    return JointGaussian(tuple(rest), mean, 0.5 * (cov + cov.T))


def bn_from_joint(j: JointGaussian, nodes: Sequence, tol: float = 1e-12) -> GaussianBn:
    """Gaussian BN reproducing ``j`` with ``nodes`` as the topological order.

    Each node is regressed on all of its predecessors; coefficients with
    magnitude at most ``tol`` (relative to the largest) become absent arcs.
    """
    from .graph import Dag
    from .params import LocalDistribution

    ids = [n.id for n in nodes]
    sub = j.marginal(ids)
    cov, mu = sub.covariance, sub.mean
    arcs, locs = set(), {}
    for k, node in enumerate(ids):
        if k == 0:
            locs[node] = LocalDistribution(node, float(mu[0]), {}, float(cov[0, 0]))
            continue
        s_pp = cov[:k, :k]
        s_py = cov[:k, k]
        c = _cholesky(s_pp, f"covariance of the predecessors of {node!r}")
        beta = linalg.cho_solve((c, True), s_py)
        resid = float(cov[k, k] - s_py @ beta)
        if resid <= 0:
            raise NumericalError(f"{node!r} is a deterministic function of its predecessors")
        big = max(1.0, float(np.abs(beta).max()))
        coefs = {ids[i]: float(b) for i, b in enumerate(beta) if abs(b) > tol * big}
        arcs.update((p, node) for p in coefs)
        intercept = float(mu[k] - sum(b * mu[ids.index(p)] for p, b in coefs.items()))
        locs[node] = LocalDistribution(node, intercept, coefs, resid)
    return GaussianBn(Dag(tuple(nodes), frozenset(arcs)), locs, fit_method="joint")


@dataclass(frozen=True)
class Evidence:
    points: Mapping[str, float] = field(default_factory=dict)
    intervals: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "points", {k: float(v) for k, v in self.points.items()})
        object.__setattr__(
            self, "intervals", {k: (float(lo), float(hi)) for k, (lo, hi) in self.intervals.items()}
        )
        for k, (lo, hi) in self.intervals.items():
            if not lo <= hi:
                raise ConfigError(f"interval evidence on {k!r} has lo > hi")
        both = set(self.points) & set(self.intervals)
        if both:
            raise ConfigError(f"nodes with both point and interval evidence: {sorted(both)}")

    @property
    def nodes(self) -> set[str]:
        return set(self.points) | set(self.intervals)

    def __bool__(self) -> bool:
        return bool(self.points or self.intervals)

    @classmethod
    def parse(cls, items: Iterable[str]) -> "Evidence":
        """Parse ``node=1.5`` and ``node in [2,3]`` (bounds may be +-inf)."""
        points, intervals = {}, {}
        pattern = re.compile(r"^\s*(\S+)\s+in\s+\[\s*([^,\]]+)\s*,\s*([^\]]+)\s*\]\s*$")
        for item in items:
            m = pattern.match(item)
            try:
                if m:
                    intervals[m.group(1)] = (float(m.group(2)), float(m.group(3)))
                    continue
                name, sep, value = item.partition("=")
                if not sep:
                    raise ValueError
                points[name.strip()] = float(value)
            except ValueError:
                raise ConfigError(f"cannot parse evidence {item!r}") from None
        return cls(points, intervals)


@dataclass(frozen=True)
class QueryResult:
    """Posterior summaries per target.

    ``sd`` is the posterior standard deviation of the target; ``mc_se`` is
    the Monte Carlo standard error of the reported mean (0 for the exact
    engine).  ``effective_sample_size`` is None for the exact engine.
    """

    engine: str
    mean: Mapping[str, float]
    sd: Mapping[str, float]
    mc_se: Mapping[str, float]
    effective_sample_size: float | None = None
    n_samples: int = 0


def logic_sample(bn: GaussianBn, n: int, seed=0) -> np.ndarray:
    """Forward samples, one column per node in ``bn.order``."""
    if n < 1:
        raise ConfigError("need at least one sample")
    rng = np.random.default_rng(seed)
    return _forward(bn, n, rng, Evidence())[0]


def _log_mass(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log(Phi(b) - Phi(a)) for standardized bounds a <= b, stable in both tails."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    lhi = log_ndtr(hi)
    llo = log_ndtr(lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lhi + np.log1p(-np.exp(llo - lhi))
    return np.where(hi <= lo, -np.inf, out)


def _forward(bn: GaussianBn, n: int, rng: np.random.Generator, ev: Evidence):
    """Ancestral sampling; evidence nodes are clamped / truncated and weighted."""
    order = bn.order
    pos = {k: i for i, k in enumerate(order)}
    x = np.empty((n, len(order)))
    logw = np.zeros(n)
    for i, node in enumerate(order):
        ld = bn.locals[node]
        mean = np.full(n, ld.intercept)
        for p, b in ld.coefficients.items():
            mean += b * x[:, pos[p]]
        sd = math.sqrt(ld.residual_variance)
        if node in ev.points:
            value = ev.points[node]
            x[:, i] = value
            if sd > 0:
                z = (value - mean) / sd
                logw += -0.5 * z * z - math.log(sd) - 0.5 * math.log(2 * math.pi)
            else:
                logw = np.where(mean == value, logw, -np.inf)
        elif node in ev.intervals:
            lo, hi = ev.intervals[node]
            if sd > 0:
                a = (lo - mean) / sd
                b = (hi - mean) / sd
                lm = _log_mass(a, b)
                ok = np.isfinite(lm)
                logw = np.where(ok, logw + lm, -np.inf)
                draw = mean.copy()
                if ok.any():
                    draw[ok] = truncnorm.rvs(
                        a[ok], b[ok], loc=mean[ok], scale=sd, random_state=rng
                    )
                x[:, i] = draw
            else:
                x[:, i] = mean
                logw = np.where((mean >= lo) & (mean <= hi), logw, -np.inf)
        else:
            x[:, i] = mean + sd * rng.standard_normal(n) if sd > 0 else mean
    return x, logw


def _summaries(values: np.ndarray, w: np.ndarray | None):
    if w is None:
        m = values.mean(axis=0)
        var = values.var(axis=0)
        ess = float(values.shape[0])
    else:
        total = w.sum()
        m = (w[:, None] * values).sum(axis=0) / total
        var = (w[:, None] * (values - m) ** 2).sum(axis=0) / total
        ess = float(total * total / (w * w).sum())
    sd = np.sqrt(np.maximum(var, 0.0))
    return m, sd, sd / math.sqrt(ess), ess


def query(bn: GaussianBn, targets: Iterable[str], evidence: Evidence | Mapping[str, float] | None = None,
          engine: str = "exact", n: int = 100_000, seed=0) -> QueryResult:
    """Posterior mean and sd of ``targets`` given ``evidence``."""
    targets = list(targets)
    if evidence is None:
        evidence = Evidence()
    elif not isinstance(evidence, Evidence):
        evidence = Evidence(points=evidence)
    known = set(bn.dag.ids)
    unknown = [k for k in [*targets, *evidence.nodes] if k not in known]
    if unknown:
        raise ConfigError(f"unknown nodes {unknown}")
    overlap = set(targets) & evidence.nodes
    if overlap:
        raise ConfigError(f"targets also given as evidence: {sorted(overlap)}")
    if engine == "weighting":
        engine = "lw"

    if engine == "exact":
        if evidence.intervals:
            raise ConfigError("the exact engine accepts point evidence only")
        post = condition_exact(to_joint(bn), evidence.points).marginal(targets)
        sds = np.sqrt(np.maximum(np.diag(post.covariance), 0.0))
        return QueryResult(
            "exact",
            dict(zip(targets, post.mean.tolist())),
            dict(zip(targets, sds.tolist())),
            dict.fromkeys(targets, 0.0),
        )
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}; choose from {ENGINES}")
    if n < 1:
        raise ConfigError("need at least one sample")

    rng = np.random.default_rng(seed)
    cols = [bn.order.index(t) for t in targets]
    if engine == "logic":
        if evidence.points:
            raise ConfigError(
                "logic sampling cannot condition on point evidence; use the exact or lw engine"
            )
        x, _ = _forward(bn, n, rng, Evidence())
        keep = np.ones(n, dtype=bool)
        for node, (lo, hi) in evidence.intervals.items():
            col = x[:, bn.order.index(node)]
            keep &= (col >= lo) & (col <= hi)
        if not keep.any():
            raise InsufficientSupportError("no sample satisfied the evidence")
        m, sd, se, ess = _summaries(x[keep][:, cols], None)
    else:
        x, logw = _forward(bn, n, rng, evidence)
        if not np.isfinite(logw).any():
            raise InsufficientSupportError("all samples have zero weight")
        w = np.exp(logw - logw.max())
        m, sd, se, ess = _summaries(x[:, cols], w)
    return QueryResult(
        engine,
        dict(zip(targets, m.tolist())),
        dict(zip(targets, sd.tolist())),
        dict(zip(targets, se.tolist())),
        ess,
        n,
    )


def quartile_interval(bn_or_joint, node: str, which: str) -> tuple[float, float]:
    """Bottom or top quartile of a node's model marginal as an interval."""
    j = bn_or_joint if isinstance(bn_or_joint, JointGaussian) else to_joint(bn_or_joint)
    i = j.index([node])[0]
    mu, sd = j.mean[i], math.sqrt(j.covariance[i, i])
    q = float(ndtri(0.75))
    if which == "bottom":
        return (-math.inf, mu - q * sd)
    if which == "top":
        return (mu + q * sd, math.inf)
    raise ConfigError("which must be 'bottom' or 'top'")


def _columns(table, ids: Sequence[str], names: Sequence[str]) -> dict[str, np.ndarray]:
    pos = {k: i for i, k in enumerate(names)}
    return {k: table[:, pos[k]] for k in ids if k in pos}


def predict(bn: GaussianBn, new_genotypes: GenotypeMatrix, mode: str = "genetic",
            observed_traits: TraitMatrix | None = None) -> TraitMatrix:
    """Predicted trait values for new individuals.

    ``genetic``: conditional mean of all traits jointly given every SNP in
    the network.  ``causal``: each trait's local mean evaluated at the
    observed values of its parents (SNPs from ``new_genotypes``, traits
    from ``observed_traits``).
    """
    traits = list(bn.dag.traits)
    snps = list(bn.dag.snps)
    tiers = [bn.dag.node(t).tier for t in traits]
    g_cols = _columns(new_genotypes.counts, snps, new_genotypes.snp_ids)
    n = new_genotypes.n
    if mode == "genetic":
        missing = [s for s in snps if s not in g_cols]
        if missing:
            raise DataError(f"genotypes lack SNP column {missing[0]!r} required by the model")
        joint = to_joint(bn)
        it = joint.index(traits)
        if not snps:
            out = np.tile(joint.mean[it], (n, 1))
        else:
            is_ = joint.index(snps)
            s_ss = joint.covariance[np.ix_(is_, is_)]
            s_ts = joint.covariance[np.ix_(it, is_)]
            c = _cholesky(s_ss, "SNP covariance")
            gain = linalg.cho_solve((c, True), s_ts.T).T
            xs = np.column_stack([g_cols[s] for s in snps]) - joint.mean[is_]
            out = joint.mean[it] + xs @ gain.T
    elif mode == "causal":
        t_cols = {}
        if observed_traits is not None:
            if observed_traits.individual_ids != new_genotypes.individual_ids:
                raise DataError("observed traits and genotypes are not aligned by individual")
            t_cols = _columns(observed_traits.values, traits, observed_traits.trait_ids)
        out = np.empty((n, len(traits)))
        for k, t in enumerate(traits):
            ld = bn.locals[t]
            values = {}
            for p in ld.parents:
                src = g_cols if bn.dag.node(p).is_snp else t_cols
                if p not in src:
                    kind = "SNP" if bn.dag.node(p).is_snp else "trait"
                    raise DataError(f"causal prediction of {t!r} needs {kind} column {p!r}")
                values[p] = src[p]
            out[:, k] = ld.mean(values)
    else:
        raise ConfigError(f"unknown prediction mode {mode!r}")
    return TraitMatrix(new_genotypes.individual_ids, traits, out, tiers)
