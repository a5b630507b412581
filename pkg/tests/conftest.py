"""Shared builders for tests."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from multitrait_bn.data_io import Dataset, GenotypeMatrix, TraitMatrix
from multitrait_bn.graph import SNP, TRAIT, Dag, Node
from multitrait_bn.params import GaussianBn, LocalDistribution


def make_dataset(columns: dict[str, np.ndarray], tiers: dict[str, int] | None = None,
                 snps: tuple[str, ...] = ()) -> Dataset:
    """Dataset from named columns; ``snps`` lists which columns are SNPs."""
    n = len(next(iter(columns.values())))
    ids = [f"i{k:04d}" for k in range(n)]
    tiers = tiers or {}
    traits = [c for c in columns if c not in snps]
    g = GenotypeMatrix(ids, list(snps),
                       np.column_stack([columns[s] for s in snps]) if snps else np.zeros((n, 0)))
    t = TraitMatrix(ids, traits, np.column_stack([columns[c] for c in traits]),
                    [tiers.get(c, 0) for c in traits])
    return Dataset(g, t)


def random_bn(rng: np.random.Generator, n_nodes: int, p_arc: float = 0.5,
              n_snps: int | None = None) -> GaussianBn:
    """Random tier-valid Gaussian BN with continuous 'SNP' roots and chains."""
    if n_snps is None:
        n_snps = int(rng.integers(0, max(1, n_nodes // 2) + 1))
    nodes = [Node(f"S{i}", SNP) for i in range(n_snps)]
    nodes += [Node(f"T{i}", TRAIT, int(rng.integers(0, 2))) for i in range(n_nodes - n_snps)]
    order = sorted(nodes, key=lambda v: (v.tier, rng.random()))
    arcs = set()
    coefs: dict[str, dict[str, float]] = {v.id: {} for v in nodes}
    for a, b in itertools.combinations(range(n_nodes), 2):
        pa, ch = order[a], order[b]
        if rng.random() < p_arc and not (pa.kind == TRAIT and ch.kind == SNP):
            arcs.add((pa.id, ch.id))
            coefs[ch.id][pa.id] = float(rng.choice([-1, 1]) * rng.uniform(0.2, 1.0))
    locs = {
        v.id: LocalDistribution(v.id, float(rng.normal()), coefs[v.id], float(rng.uniform(0.5, 1.5)))
        for v in nodes
    }
    return GaussianBn(Dag(tuple(nodes), frozenset(arcs)), locs)


def sample_dataset(bn: GaussianBn, n: int, rng: np.random.Generator) -> Dataset:
    """Ancestral sampling written out directly (independent of the library sampler)."""
    vals: dict[str, np.ndarray] = {}
    for v in bn.dag.topological_order():
        ld = bn.locals[v]
        m = ld.intercept + sum(b * vals[p] for p, b in ld.coefficients.items())
        vals[v] = m + np.sqrt(ld.residual_variance) * rng.standard_normal(n)
    snps = bn.dag.snps
    tiers = {t: bn.dag.node(t).tier for t in bn.dag.traits}
    cols = {k: vals[k] for k in list(snps) + list(bn.dag.traits)}
    return make_dataset(cols, tiers, tuple(snps))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.criteria_lines = {}


@pytest.fixture
def detail(request):
    """List of short strings appended to this criterion's summary line."""
    request.node.criterion_detail = []
    return request.node.criterion_detail


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    status = "PASS" if rep.passed else "FAIL"
    extra = "; ".join(getattr(item, "criterion_detail", []))
    line = f"criterion {number:>2} {status}: {title}" + (f" [{extra}]" if extra else "")
    item.config.criteria_lines.setdefault(number, line)


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "criteria_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
