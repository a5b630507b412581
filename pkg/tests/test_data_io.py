import numpy as np
import pytest

from multitrait_bn.data_io import (GenotypeMatrix, filter_maf, load_dataset, minor_allele_frequency,
                                   parse_tiers, prune_correlated, standardize)
from multitrait_bn.errors import DataError


def write(path, text):
    path.write_text(text)
    return path


def test_inner_join_in_genotype_order(tmp_path):
    g = write(tmp_path / "g.csv", "id,s1,s2\nb,0,1\na,2,1\nc,1,0\nx,0,0\n")
    t = write(tmp_path / "t.csv", "id,y,z\na,1.5,2\nb,-1,0\nc,0.25,1\nq,9,9\n")
    d = load_dataset(g, t, {"y": 0, "z": 1})
    assert d.individual_ids == ("b", "a", "c")
    assert d.n_dropped == 2
    assert d.traits.tiers == (0, 1)
    np.testing.assert_array_equal(d.column("y"), [-1, 1.5, 0.25])
    assert d.columns == ("s1", "s2", "y", "z")


def test_missing_value_rejected_with_location(tmp_path):
    g = write(tmp_path / "g.csv", "id,s1\na,0\nb,1\nc,2\n")
    t = write(tmp_path / "t.csv", "id,y\na,1\nb,NA\nc,3\n")
    with pytest.raises(DataError, match=r"row 2, column 'y'"):
        load_dataset(g, t)
    d = load_dataset(g, t, impute_mean=True)
    assert d.column("y")[1] == pytest.approx(2.0)


def test_bad_genotype_value_names_row(tmp_path):
    g = write(tmp_path / "g.csv", "id,s1\na,0\nb,3\nc,2\n")
    t = write(tmp_path / "t.csv", "id,y\na,1\nb,2\nc,3\n")
    with pytest.raises(DataError, match="row 2"):
        load_dataset(g, t)


def test_missing_file_and_no_overlap(tmp_path):
    t = write(tmp_path / "t.csv", "id,y\na,1\nb,2\nc,3\n")
    with pytest.raises(DataError, match="not found"):
        load_dataset(tmp_path / "nope.csv", t)
    g = write(tmp_path / "g.csv", "id,s1\nx,0\ny,1\nz,2\n")
    with pytest.raises(DataError, match="share no"):
        load_dataset(g, t)


def test_parse_tiers(tmp_path):
    assert parse_tiers("a=0, b=2") == {"a": 0, "b": 2}
    f = write(tmp_path / "tiers.csv", "trait,tier\na,1\nb,0\n")
    assert parse_tiers(f) == {"a": 1, "b": 0}


def geno(counts):
    counts = np.asarray(counts, dtype=float)
    return GenotypeMatrix([f"i{k}" for k in range(len(counts))],
                          [f"s{j}" for j in range(counts.shape[1])], counts)


def test_maf_filter():
    g = geno([[0, 0, 2, 1], [0, 1, 2, 1], [0, 0, 2, 2], [0, 0, 2, 0]])
    np.testing.assert_allclose(minor_allele_frequency(g), [0, 1 / 8, 0, 0.5])
    kept = filter_maf(g, 0.2)
    assert kept.snp_ids == ("s3",)
    with pytest.raises(DataError):
        filter_maf(geno([[0], [0], [0]]))


def test_prune_keeps_first_of_each_pair():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 3, 50)
    b = rng.integers(0, 3, 50)
    g = geno(np.column_stack([a, b, 2 - a, a]))  # s2 = -s0, s3 = s0
    assert prune_correlated(g, 0.95).snp_ids == ("s0", "s1")


def test_standardize_preserves_correlations(rng):
    from conftest import make_dataset

    x = rng.normal(size=200)
    d = make_dataset({"s": rng.integers(0, 3, 200).astype(float), "y": x, "z": x + rng.normal(size=200)},
                     snps=("s",))
    z = standardize(d)
    np.testing.assert_allclose(z.matrix.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(z.matrix.std(axis=0, ddof=1), 1, atol=1e-12)
    np.testing.assert_allclose(np.corrcoef(z.matrix.T), np.corrcoef(d.matrix.T), atol=1e-12)


def test_standardize_zero_variance_names_column():
    from conftest import make_dataset

    d = make_dataset({"s": np.array([1.0, 1.0, 1.0, 1.0]), "y": np.array([1.0, 2.0, 3.0, 5.0])},
                     snps=("s",))
    with pytest.raises(DataError, match="'s'"):
        standardize(d)
