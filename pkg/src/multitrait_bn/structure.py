"""Hybrid structure learning.

1. For every trait, SI-HITON-PC finds its parents and children among the
   SNPs and the other traits (t-tests on partial correlations).
2. SNPs that are not in any trait's parent/child set are dropped.
3. Greedy hill climbing over add / delete / reverse moves maximizes the
   Gaussian BIC on the remaining nodes, with arc directions restricted by
   the tier rules.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .graph import Dag, Node, arc_allowed
from .stats import RCOND_MIN, ci_test_from_corr

# Minimum BIC gain for a move to count as an improvement.
SCORE_TOL = 1e-8


@dataclass(frozen=True)
class SearchConfig:
    alpha: float = 0.01
    max_cond_size: int = 3
    restarts: int = 0
    perturb: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.max_cond_size < 0:
            raise ConfigError("max_cond_size must be non-negative")
        if self.restarts < 0 or self.perturb < 1:
            raise ConfigError("restarts must be >= 0 and perturb >= 1")


@dataclass(frozen=True)
class HitonResult:
    target: str
    pc_set: frozenset[str]
    test_count: int


class _Correlations:
    """Correlation matrix of a dataset with constant columns flagged."""

    def __init__(self, data):
        self.columns = tuple(data.columns)
        self.index = {c: k for k, c in enumerate(self.columns)}
        m = np.asarray(data.matrix, dtype=float)
        self.n = m.shape[0]
        centered = m - m.mean(axis=0)
        ss = np.einsum("ij,ij->j", centered, centered)
        self.constant = ss <= 1e-12 * np.maximum(1.0, np.abs(m).max(axis=0)) ** 2 * self.n
        scale = np.where(self.constant, 1.0, np.sqrt(np.where(self.constant, 1.0, ss)))
        scaled = centered / scale
        corr = scaled.T @ scaled
        np.clip(corr, -1.0, 1.0, out=corr)
        np.fill_diagonal(corr, 1.0)
        self.corr = corr

    def usable(self, ids: Iterable[str]) -> list[str]:
        return [i for i in ids if not self.constant[self.index[i]]]


def _hiton(t: int, candidates: Sequence[int], cc: _Correlations, cfg: SearchConfig):
    corr, n, alpha, names = cc.corr, cc.n, cfg.alpha, cc.columns
    tests = 0

    def survives(c: int, others: Sequence[int]) -> bool:
        nonlocal tests
        for k in range(1, min(cfg.max_cond_size, len(others)) + 1):
            for z in itertools.combinations(others, k):
                tests += 1
                if not ci_test_from_corr(corr, n, t, c, z, alpha).dependent:
                    return False
        return True

    ranked = []
    for c in candidates:
        tests += 1
        res = ci_test_from_corr(corr, n, t, c, (), alpha)
        if res.dependent:
            # p-values of strong associations underflow to 0; |r| is
            # monotone in p at fixed df, so it refines the ranking.
            ranked.append((res.p_value, -abs(res.r), names[c], c))
    ranked.sort()

    pc: list[int] = []
    for *_, c in ranked:
        if survives(c, pc):
            pc.append(c)
    for c in list(pc):
        if not survives(c, [o for o in pc if o != c]):
            pc.remove(c)
    return frozenset(names[c] for c in pc), tests


def hiton_pc(target: str, candidates: Iterable[str], data, cfg: SearchConfig = SearchConfig(),
             _cc: _Correlations | None = None) -> HitonResult:
    """Parents-and-children candidates of ``target`` by SI-HITON-PC.

    Forward phase: candidates marginally dependent on the target are ranked
    by p-value (then |r|, then id) and admitted one at a time if they stay
    dependent given every subset of the admitted set of size up to
    ``cfg.max_cond_size``.  Backward phase: each admitted member is
    re-tested against subsets of the other members and removed if it
    becomes independent.  Constant candidates are ignored.
    """
    cc = _cc or _Correlations(data)
    if cc.constant[cc.index[target]]:
        return HitonResult(target, frozenset(), 0)
    cands = sorted(c for c in cc.usable(set(candidates)) if c != target)
    pc, tests = _hiton(cc.index[target], [cc.index[c] for c in cands], cc, cfg)
    return HitonResult(target, pc, tests)


def hiton_all(data, cfg: SearchConfig = SearchConfig()) -> dict[str, HitonResult]:
    """``hiton_pc`` for every trait, candidates = all SNPs and the other traits."""
    cc = _Correlations(data)
    out = {}
    for t in data.trait_ids:
        cands = [c for c in data.columns if c != t]
        out[t] = hiton_pc(t, cands, data, cfg, _cc=cc)
    return out


def mb_filter(data, cfg: SearchConfig = SearchConfig()) -> frozenset[str]:
    """Traits plus every node found in some trait's parent/child set.

    Under the tier rules anything sharing a child with a trait is another
    trait or a parent of another trait, so the union of parent/child sets
    covers every trait's Markov blanket.
    """
    if not data.trait_ids:
        raise ConfigError("mb_filter needs at least one trait")
    keep = set(data.trait_ids)
    for res in hiton_all(data, cfg).values():
        keep |= res.pc_set
    return frozenset(keep)


class GaussianBic:
    """Decomposable Gaussian BIC with cached local terms.

    Local term of node i with parents P: the maximized log-likelihood of
    the OLS regression of i on P (MLE residual variance) minus
    ``(|P| + 2) / 2 * log n``.
    """

    def __init__(self, data, nodes: Iterable[str] | None = None):
        cols = list(data.columns) if nodes is None else sorted(nodes)
        index = {c: k for k, c in enumerate(data.columns)}
        m = np.asarray(data.matrix, dtype=float)[:, [index[c] for c in cols]]
        self.n = m.shape[0]
        self.columns = cols
        self.index = {c: k for k, c in enumerate(cols)}
        centered = m - m.mean(axis=0)
        self.cov = centered.T @ centered / self.n
        self.log_n = math.log(self.n)
        self._cache: dict[tuple[int, frozenset[int]], float] = {}

    def residual_variance(self, i: int, parents: Sequence[int]) -> float:
        """MLE residual variance, NaN when the parents are collinear."""
        syy = self.cov[i, i]
        if not parents:
            return float(syy)
        p = list(parents)
        spp = self.cov[np.ix_(p, p)]
        try:
            chol = np.linalg.cholesky(spp)
        except np.linalg.LinAlgError:
            return math.nan
        d = np.diag(chol)
        if d.min() <= math.sqrt(RCOND_MIN) * d.max():
            return math.nan
        w = np.linalg.solve(chol, self.cov[p, i])
        return float(syy - w @ w)

    def local_index(self, i: int, parents: frozenset[int]) -> float:
        key = (i, parents)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        var = self.residual_variance(i, sorted(parents))
        if not var > 1e-12 * max(self.cov[i, i], 1e-300):
            value = -math.inf
        else:
            n = self.n
            ll = -0.5 * n * (math.log(2 * math.pi * var) + 1.0)
            value = ll - 0.5 * (len(parents) + 2) * self.log_n
        self._cache[key] = value
        return value

    def local(self, node: str, parents: Iterable[str]) -> float:
        return self.local_index(self.index[node], frozenset(self.index[p] for p in parents))

    def score(self, dag: Dag) -> float:
        return sum(self.local(v, dag.parents(v)) for v in dag.ids)


def bic_score(dag: Dag, data) -> float:
    return GaussianBic(data, dag.ids).score(dag)


class _Climber:
    def __init__(self, nodes: Sequence[Node], scorer: GaussianBic):
        self.nodes = list(nodes)
        self.ids = [v.id for v in self.nodes]
        self.v = len(self.nodes)
        self.scorer = scorer
        self.sidx = [scorer.index[i] for i in self.ids]
        self.allowed = [[arc_allowed(a, b) for b in self.nodes] for a in self.nodes]

    def local(self, j: int, parents: set[int] | frozenset[int]) -> float:
        return self.scorer.local_index(self.sidx[j], frozenset(self.sidx[p] for p in parents))

    def ancestors(self, parents: list[set[int]]) -> list[int]:
        """Bitset of ancestors for every node."""
        anc = [0] * self.v
        order = []
        indeg = [len(p) for p in parents]
        children = [[] for _ in range(self.v)]
        for j, ps in enumerate(parents):
            for p in ps:
                children[p].append(j)
        ready = [j for j in range(self.v) if indeg[j] == 0]
        while ready:
            u = ready.pop()
            order.append(u)
            for c in children[u]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        for u in order:
            bits = 0
            for p in parents[u]:
                bits |= anc[p] | (1 << p)
            anc[u] = bits
        return anc

    def moves(self, parents: list[set[int]]):
        """All valid moves as (kind, i, j): arc i->j added, deleted or reversed."""
        anc = self.ancestors(parents)
        for i in range(self.v):
            for j in range(self.v):
                if i == j:
                    continue
                if i in parents[j]:
                    yield ("delete", i, j)
                    if self.allowed[j][i] and not any(
                        (anc[p] >> i) & 1 for p in parents[j] if p != i
                    ):
                        yield ("reverse", i, j)
                elif j not in parents[i] and self.allowed[i][j] and not (anc[i] >> j) & 1:
                    yield ("add", i, j)

    def delta(self, move, parents, local) -> float:
        kind, i, j = move
        if kind == "add":
            return self.local(j, parents[j] | {i}) - local[j]
        if kind == "delete":
            return self.local(j, parents[j] - {i}) - local[j]
        return (self.local(j, parents[j] - {i}) - local[j]) + (
            self.local(i, parents[i] | {j}) - local[i]
        )

    @staticmethod
    def apply(move, parents):
        kind, i, j = move
        if kind == "add":
            parents[j].add(i)
        elif kind == "delete":
            parents[j].discard(i)
        else:
            parents[j].discard(i)
            parents[i].add(j)

    def climb(self, parents: list[set[int]]) -> tuple[list[set[int]], float]:
        parents = [set(p) for p in parents]
        local = [self.local(j, parents[j]) for j in range(self.v)]
        while True:
            best, best_delta = None, SCORE_TOL
            for move in self.moves(parents):
                d = self.delta(move, parents, local)
                if d > best_delta:
                    best, best_delta = move, d
            if best is None:
                break
            self.apply(best, parents)
            _, i, j = best
            local[j] = self.local(j, parents[j])
            local[i] = self.local(i, parents[i])
        return parents, sum(local)

    def perturb(self, parents: list[set[int]], steps: int, rng: np.random.Generator):
        parents = [set(p) for p in parents]
        for _ in range(steps):
            moves = list(self.moves(parents))
            if not moves:
                break
            self.apply(moves[int(rng.integers(len(moves)))], parents)
        return parents

    def to_dag(self, parents: list[set[int]]) -> Dag:
        arcs = frozenset((self.ids[p], self.ids[j]) for j in range(self.v) for p in parents[j])
        return Dag(tuple(self.nodes), arcs)


def hill_climb(data, nodes: Iterable[str] | None = None, cfg: SearchConfig = SearchConfig(),
               start: Dag | None = None) -> Dag:
    """Greedy BIC search over tier-valid DAGs on ``nodes``.

    Each step applies the single best add / delete / reverse move and the
    search stops when no move improves the score by more than ``SCORE_TOL``.
    With ``cfg.restarts > 0`` each restart applies ``cfg.perturb`` random
    valid moves to the starting graph (empty unless ``start`` is given),
    climbs from there and replaces the result if it scores higher.  Each
    restart draws from its own stream seeded by (seed, restart index).
    Ties between moves go to the lowest (parent, child) ids.
    """
    node_map = {v.id: v for v in data.nodes}
    ids = sorted(node_map) if nodes is None else sorted(set(nodes))
    missing = [i for i in ids if i not in node_map]
    if missing:
        raise ConfigError(f"nodes not in data: {missing}")
    node_list = [node_map[i] for i in ids]
    scorer = GaussianBic(data, ids)
    climber = _Climber(node_list, scorer)
    pos = {i: k for k, i in enumerate(ids)}
    init = [set() for _ in ids]
    if start is not None:
        for a, b in start.arcs:
            if a in pos and b in pos:
                init[pos[b]].add(pos[a])
    best, best_score = climber.climb(init)
    for r in range(cfg.restarts):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, r]))
        cand, score = climber.climb(climber.perturb(init, cfg.perturb, rng))
        if score > best_score + SCORE_TOL:
            best, best_score = cand, score
    return climber.to_dag(best)
