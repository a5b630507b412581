import numpy as np
import pytest

from multitrait_bn.data_io import minor_allele_frequency
from multitrait_bn.errors import ConfigError
from multitrait_bn.graph import Dag
from multitrait_bn.inference import to_joint
from multitrait_bn.params import fit_ols
from multitrait_bn.simulate import SimSpec, TraitSpec, allele_frequencies, simulate, simulate_genotypes


def adjacent_r(counts):
    return np.array([np.corrcoef(counts[:, j], counts[:, j + 1])[0, 1] for j in range(counts.shape[1] - 1)])


def test_ld_levels():
    free = simulate_genotypes(SimSpec(2000, 20, (0.2, 0.5), 0.0, seed=1)).counts
    linked = simulate_genotypes(SimSpec(2000, 20, (0.2, 0.5), 0.9, seed=1)).counts
    assert np.abs(adjacent_r(free)).max() < 0.1
    assert adjacent_r(linked).min() > 0.4


def test_maf_within_binomial_error():
    # [DERIVED] binomial SE around the configured range
    spec = SimSpec(3000, 40, (0.05, 0.3), 0.5, seed=2)
    g = simulate_genotypes(spec)
    p = allele_frequencies(spec)
    maf = minor_allele_frequency(g)
    se = np.sqrt(p * (1 - p) / (2 * spec.n))
    lo, hi = spec.maf_range
    assert np.all((maf >= lo - 3 * se) & (maf <= hi + 3 * se))
    assert set(np.unique(g.counts)) <= {0.0, 1.0, 2.0}


def test_effect_recovered_by_ols():
    spec = SimSpec(10_000, 3, traits=(TraitSpec("y", parents={"S1": 1.5}),), seed=3)
    d, truth = simulate(spec)
    b = fit_ols(truth.dag.subgraph(["S1", "y"]), d).locals["y"].coefficients["S1"]
    assert b == pytest.approx(1.5, abs=0.05)


def test_null_trait_uncorrelated():
    d, _ = simulate(SimSpec(10_000, 5, traits=(TraitSpec("y"),), seed=4))
    for s in d.snp_ids:
        assert abs(np.corrcoef(d.column(s), d.column("y"))[0, 1]) < 0.05


def test_two_tier_covariance():
    spec = SimSpec(20_000, 2, traits=(TraitSpec("t1", 0, {"S1": 1.0}),
                                      TraitSpec("t2", 1, {"t1": 2.0})), seed=5)
    d, _ = simulate(spec)
    c = np.cov(d.column("t1"), d.column("t2"))
    assert c[0, 1] == pytest.approx(2 * c[0, 0], rel=0.03)


def test_truth_moments_match_sample():
    spec = SimSpec(50_000, 6, (0.1, 0.5), 0.6, (TraitSpec("y", 0, {"S2": 0.5, "S4": -0.4}),), seed=6)
    d, truth = simulate(spec)
    j = to_joint(truth).marginal(d.columns)
    np.testing.assert_allclose(d.matrix.mean(0), j.mean, atol=0.03)
    emp = np.cov(d.matrix.T)
    # adjacent SNP covariances and every trait covariance are exact in the truth model
    for a in range(len(d.columns)):
        for b in range(len(d.columns)):
            if abs(a - b) <= 1 or "y" in (d.columns[a], d.columns[b]):
                assert emp[a, b] == pytest.approx(j.covariance[a, b], abs=0.03)


def test_deterministic_and_validated():
    spec = SimSpec(50, 10, ld_rho=0.3, traits=(TraitSpec("y", 0, {"S01": 1.0}),), seed=7)
    a, _ = simulate(spec)
    b, _ = simulate(spec)
    assert a.fingerprint() == b.fingerprint()
    with pytest.raises(ConfigError):
        SimSpec(50, 10, traits=(TraitSpec("y", 0, {"nope": 1.0}),))
    with pytest.raises(ConfigError):
        SimSpec(50, 10, traits=(TraitSpec("a", 1), TraitSpec("b", 0, {"a": 1.0})))
    with pytest.raises(ConfigError):
        SimSpec(50, 10, maf_range=(0.0, 0.4))
