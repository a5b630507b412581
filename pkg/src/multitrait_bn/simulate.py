"""Synthetic genotype panels and phenotypes drawn from known Gaussian BNs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import multivariate_normal

from .data_io import Dataset, GenotypeMatrix, TraitMatrix
from .errors import ConfigError
from .graph import SNP, TRAIT, Dag, Node
from .params import GaussianBn, LocalDistribution


@dataclass(frozen=True)
class TraitSpec:
    id: str
    tier: int = 0
    parents: Mapping[str, float] = field(default_factory=dict)
    residual_variance: float = 1.0
    intercept: float = 0.0


@dataclass(frozen=True)
class SimSpec:
    n: int
    s: int
    maf_range: tuple[float, float] = (0.05, 0.5)
    ld_rho: float = 0.0
    traits: Sequence[TraitSpec] = ()
    seed: int = 0
    snp_prefix: str = "S"

    def __post_init__(self):
        lo, hi = self.maf_range
        if not 0 < lo <= hi <= 0.5:
            raise ConfigError(f"maf_range must satisfy 0 < lo <= hi <= 0.5, got {self.maf_range}")
        if not 0 <= self.ld_rho < 1:
            raise ConfigError(f"ld_rho must lie in [0, 1), got {self.ld_rho}")
        if self.n < 3 or self.s < 1:
            raise ConfigError("need n >= 3 individuals and s >= 1 SNPs")
        snps = set(self.snp_ids)
        seen: dict[str, int] = {}
        for t in self.traits:
            if not t.residual_variance > 0:
                raise ConfigError(f"trait {t.id!r}: residual variance must be positive")
            for p in t.parents:
                if p in snps:
                    continue
                if p not in seen:
                    raise ConfigError(
                        f"trait {t.id!r}: parent {p!r} is neither a SNP nor an earlier trait"
                    )
                if seen[p] > t.tier:
                    raise ConfigError(f"trait {t.id!r}: parent {p!r} is in a later tier")
            seen[t.id] = t.tier

    @property
    def snp_ids(self) -> list[str]:
        width = len(str(self.s))
        return [f"{self.snp_prefix}{j + 1:0{width}d}" for j in range(self.s)]


def _rng(spec: SimSpec, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([spec.seed, stream]))


def allele_frequencies(spec: SimSpec) -> np.ndarray:
    lo, hi = spec.maf_range
    return _rng(spec, 0).uniform(lo, hi, size=spec.s)


def simulate_genotypes(spec: SimSpec) -> GenotypeMatrix:
    """Allele counts as the sum of two haplotypes.

    Each haplotype thresholds a stationary AR(1) Gaussian chain along the
    SNP order (lag-one correlation ``ld_rho``) at the quantile matching the
    SNP's allele frequency, so LD decays with distance.
    """
    p = allele_frequencies(spec)
    cut = ndtri(p)
    rng = _rng(spec, 1)
    rho = spec.ld_rho
    innov = math.sqrt(1.0 - rho * rho)
    counts = np.zeros((spec.n, spec.s))
    for _ in range(2):
        z = rng.standard_normal(spec.n)
        for j in range(spec.s):
            if j:
                z = rho * z + innov * rng.standard_normal(spec.n)
            counts[:, j] += z < cut[j]
    ids = [f"ind{i + 1:0{len(str(spec.n))}d}" for i in range(spec.n)]
    return GenotypeMatrix(ids, spec.snp_ids, counts)


def _trait_order(spec: SimSpec) -> list[TraitSpec]:
    # stable: tiers ascending, then the order given (parents precede children)
    return sorted(spec.traits, key=lambda t: t.tier)


def snp_moments(spec: SimSpec) -> tuple[np.ndarray, np.ndarray]:
    """Exact count variances and lag-one covariances of the genotype model."""
    p = allele_frequencies(spec)
    var = 2.0 * p * (1.0 - p)
    cov1 = np.zeros(max(spec.s - 1, 0))
    if spec.ld_rho > 0:
        cut = ndtri(p)
        for j in range(spec.s - 1):
            joint = multivariate_normal.cdf(
                [cut[j], cut[j + 1]], mean=[0.0, 0.0], cov=[[1.0, spec.ld_rho], [spec.ld_rho, 1.0]]
            )
            cov1[j] = 2.0 * (joint - p[j] * p[j + 1])
    return var, cov1


def ground_truth(spec: SimSpec) -> GaussianBn:
    """Gaussian BN matching the simulator.

    Trait local distributions are exact.  SNPs form a first-order chain
    whose coefficients reproduce the exact count means, variances and
    adjacent covariances; covariances between non-adjacent SNPs are the
    chain's approximation (exact when ``ld_rho == 0``).
    """
    p = allele_frequencies(spec)
    var, cov1 = snp_moments(spec)
    snps = spec.snp_ids
    nodes = [Node(s, SNP) for s in snps]
    arcs = set()
    locals_ = {}
    for j, s in enumerate(snps):
        if j and cov1[j - 1] != 0:
            b = cov1[j - 1] / var[j - 1]
            arcs.add((snps[j - 1], s))
            locals_[s] = LocalDistribution(
                s, 2 * p[j] - b * 2 * p[j - 1], {snps[j - 1]: b}, var[j] - b * cov1[j - 1]
            )
        else:
            locals_[s] = LocalDistribution(s, 2 * p[j], {}, var[j])
    for t in _trait_order(spec):
        nodes.append(Node(t.id, TRAIT, t.tier))
        coefs = {k: float(v) for k, v in t.parents.items() if v != 0}
        arcs |= {(k, t.id) for k in coefs}
        locals_[t.id] = LocalDistribution(t.id, t.intercept, coefs, t.residual_variance)
    return GaussianBn(Dag(tuple(nodes), frozenset(arcs)), locals_, "truth")


def simulate_phenotypes(g: GenotypeMatrix, spec: SimSpec) -> tuple[Dataset, GaussianBn]:
    """Traits generated in tier order from their linear models plus noise."""
    rng = _rng(spec, 2)
    values: dict[str, np.ndarray] = {s: g.counts[:, j] for j, s in enumerate(g.snp_ids)}
    order = _trait_order(spec)
    for t in order:
        mean = np.full(g.n, float(t.intercept))
        for p, b in t.parents.items():
            mean = mean + b * values[p]
        values[t.id] = mean + math.sqrt(t.residual_variance) * rng.standard_normal(g.n)
    trait_ids = [t.id for t in order]
    matrix = np.column_stack([values[t] for t in trait_ids]) if trait_ids else np.zeros((g.n, 0))
    traits = TraitMatrix(g.individual_ids, trait_ids, matrix, [t.tier for t in order])
    return Dataset(g, traits), ground_truth(spec)


def simulate(spec: SimSpec) -> tuple[Dataset, GaussianBn]:
    return simulate_phenotypes(simulate_genotypes(spec), spec)
