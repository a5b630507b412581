import math

import numpy as np
import pytest

from multitrait_bn import pipeline
from multitrait_bn.errors import DataError, NumericalError
from multitrait_bn.pipeline import CvConfig, fold_partition, predictive_correlation, run_cv
from multitrait_bn.simulate import SimSpec, TraitSpec, simulate


def small_data(n=200, seed=0, traits=None):
    traits = traits or (TraitSpec("A", 0, {"S01": 0.8, "S03": 0.6}), TraitSpec("B", 1, {"A": 0.7}))
    return simulate(SimSpec(n, 12, traits=traits, seed=seed))


def test_predictive_correlation_examples(rng):
    x = rng.normal(size=1000)
    assert predictive_correlation(x, x) == pytest.approx(1.0)
    assert predictive_correlation(-x, x) == pytest.approx(-1.0)
    # [DERIVED] attenuation by equal-variance noise is 1/sqrt(2)
    assert predictive_correlation(x + rng.normal(size=1000), x) == pytest.approx(1 / math.sqrt(2), abs=0.05)
    assert predictive_correlation(np.ones(5), np.arange(5.0)) == 0.0
    with pytest.raises(DataError):
        predictive_correlation(x[:5], np.ones(5))


def test_folds_partition():
    for n, k in [(10, 3), (101, 10), (7, 7)]:
        folds = fold_partition(n, k, seed=4, run=1)
        allrows = np.concatenate(folds)
        assert sorted(allrows.tolist()) == list(range(n))
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1
    assert [f.tolist() for f in fold_partition(50, 5, 1, 0)] != [f.tolist() for f in fold_partition(50, 5, 1, 1)]


def test_no_test_rows_reach_learning(monkeypatch):
    d, _ = small_data()
    seen = []
    real = pipeline.learn_bn

    def spy(data, *a, **k):
        seen.append(set(data.individual_ids))
        return real(data, *a, **k)

    audits = []
    monkeypatch.setattr(pipeline, "learn_bn", spy)
    run_cv(d, CvConfig(runs=2, folds=4), hook=lambda r, f, tr, te: audits.append(
        (set(tr.individual_ids), set(te.individual_ids))))
    assert len(seen) == len(audits) == 8
    for learned, (train, test) in zip(seen, audits):
        assert learned == train
        assert not learned & test
        assert train | test == set(d.individual_ids)


def test_failed_fold_is_skipped_and_recorded(monkeypatch):
    d, _ = small_data()
    real = pipeline.learn_bn
    calls = []

    def flaky(data, *a, **k):
        calls.append(1)
        if len(calls) == 2:
            raise NumericalError("singular")
        return real(data, *a, **k)

    monkeypatch.setattr(pipeline, "learn_bn", flaky)
    rep = run_cv(d, CvConfig(runs=1, folds=4))
    assert rep.skipped == ((0, 1, "singular"),)
    assert len(rep.networks) == 3
    assert np.isfinite(rep.rho_g).all()


def test_cv_deterministic_and_threads_agree(tmp_path):
    d, _ = small_data()
    cfg = CvConfig(runs=2, folds=5, seed=11)
    a = run_cv(d, cfg, tmp_path / "a")
    b = run_cv(d, cfg, tmp_path / "b", threads=4)
    assert np.array_equal(a.rho_g, b.rho_g) and np.array_equal(a.rho_c, b.rho_c)
    assert a.networks == b.networks
    for pa, pb in zip(a.model_paths, b.model_paths):
        assert open(pa).read() == open(pb).read()
    assert len(a.model_paths) == 10
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "trait,metric,mean,sd"


def intercept_only_rho(y, folds):
    """Oracle: pooled correlation when every prediction is the training mean."""
    pred = np.empty_like(y)
    for test in folds:
        pred[test] = np.delete(y, test).mean()
    return np.corrcoef(pred, y)[0, 1]


def test_noise_traits_match_intercept_only_baseline():
    # [DERIVED] pooled training means are anti-correlated with held-out values
    # (about -sqrt((k-1)/n) on average), so pure noise scores near that baseline, not 0
    d, _ = simulate(SimSpec(600, 30, traits=(TraitSpec("N1"), TraitSpec("N2")), seed=5))
    cfg = CvConfig(runs=3, folds=5, seed=1)
    rep = run_cv(d, cfg)
    for k, t in enumerate(d.trait_ids):
        y = d.column(t)
        base = [intercept_only_rho(y, fold_partition(d.n, 5, 1, r)) for r in range(3)]
        assert abs(np.nanmean(rep.rho_g[:, k]) - np.mean(base)) < 0.05
        assert abs(np.nanmean(rep.rho_c[:, k]) - np.mean(base)) < 0.05


def test_config_validation():
    with pytest.raises(Exception):
        CvConfig(folds=1)
    with pytest.raises(Exception):
        CvConfig(runs=0)
