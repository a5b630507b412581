"""Loading, validation and preprocessing of genotype and phenotype tables.

Genotypes are allele counts (0/1/2) and traits are real-valued phenotypes
with a temporal tier each.  Both tables are CSV files with a header row and
a leading individual-id column.  Inputs must be complete: missing values
are rejected unless mean imputation is requested explicitly.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .graph import SNP, TRAIT, Node

MISSING_TOKENS = frozenset({"", "na", "nan", "NA", "NaN", "N/A", "."})


@dataclass(frozen=True)
class GenotypeMatrix:
    individual_ids: tuple[str, ...]
    snp_ids: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "individual_ids", tuple(self.individual_ids))
        object.__setattr__(self, "snp_ids", tuple(self.snp_ids))
        counts = np.asarray(self.counts, dtype=float)
        if counts.ndim != 2 or counts.shape != (len(self.individual_ids), len(self.snp_ids)):
            raise DataError(
                f"genotype matrix shape {counts.shape} does not match "
                f"{len(self.individual_ids)} individuals x {len(self.snp_ids)} SNPs"
            )
        _check_unique(self.individual_ids, "individual id")
        _check_unique(self.snp_ids, "SNP id")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return len(self.individual_ids)

    def select_columns(self, keep: Sequence[int]) -> "GenotypeMatrix":
        keep = list(keep)
        return GenotypeMatrix(
            self.individual_ids, [self.snp_ids[j] for j in keep], self.counts[:, keep]
        )

    def select_rows(self, rows: Sequence[int]) -> "GenotypeMatrix":
        rows = list(rows)
        return GenotypeMatrix(
            [self.individual_ids[i] for i in rows], self.snp_ids, self.counts[rows]
        )


@dataclass(frozen=True)
class TraitMatrix:
    individual_ids: tuple[str, ...]
    trait_ids: tuple[str, ...]
    values: np.ndarray
    tiers: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "individual_ids", tuple(self.individual_ids))
        object.__setattr__(self, "trait_ids", tuple(self.trait_ids))
        object.__setattr__(self, "tiers", tuple(int(t) for t in self.tiers))
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(self.individual_ids), len(self.trait_ids)):
            raise DataError(
                f"trait matrix shape {values.shape} does not match "
                f"{len(self.individual_ids)} individuals x {len(self.trait_ids)} traits"
            )
        if len(self.tiers) != len(self.trait_ids):
            raise DataError("a tier is required for every trait")
        if any(t < 0 for t in self.tiers):
            raise DataError("trait tiers must be non-negative")
        if np.isnan(values).any():
            raise DataError("trait matrix contains missing values")
        _check_unique(self.individual_ids, "individual id")
        _check_unique(self.trait_ids, "trait id")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return len(self.individual_ids)

    def tier_map(self) -> dict[str, int]:
        return dict(zip(self.trait_ids, self.tiers))

    def column(self, trait_id: str) -> np.ndarray:
        return self.values[:, self.trait_ids.index(trait_id)]

    def select_rows(self, rows: Sequence[int]) -> "TraitMatrix":
        rows = list(rows)
        return TraitMatrix(
            [self.individual_ids[i] for i in rows], self.trait_ids, self.values[rows], self.tiers
        )


@dataclass(frozen=True)
class Dataset:
    """Genotypes and traits aligned by individual.

    ``standardization`` maps every column id to the (mean, sd) of the
    column as it was before any call to :func:`standardize`; ``standardized``
    tells whether the stored values are on the standardized scale.
    """

    genotypes: GenotypeMatrix
    traits: TraitMatrix
    standardization: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    standardized: bool = False
    n_dropped: int = 0

    def __post_init__(self):
        if self.genotypes.individual_ids != self.traits.individual_ids:
            raise DataError("genotype and trait rows are not aligned by individual id")
        if self.genotypes.n < 3:
            raise DataError(f"at least 3 individuals are required, got {self.genotypes.n}")
        overlap = set(self.genotypes.snp_ids) & set(self.traits.trait_ids)
        if overlap:
            raise DataError(f"ids used for both a SNP and a trait: {sorted(overlap)}")
        if not self.standardization:
            object.__setattr__(self, "standardization", _column_stats(self))

    @property
    def n(self) -> int:
        return self.genotypes.n

    @property
    def individual_ids(self) -> tuple[str, ...]:
        return self.genotypes.individual_ids

    @property
    def snp_ids(self) -> tuple[str, ...]:
        return self.genotypes.snp_ids

    @property
    def trait_ids(self) -> tuple[str, ...]:
        return self.traits.trait_ids

    @property
    def columns(self) -> tuple[str, ...]:
        return self.genotypes.snp_ids + self.traits.trait_ids

    @cached_property
    def matrix(self) -> np.ndarray:
        """n x (S + T) matrix, SNP columns first."""
        m = np.hstack([self.genotypes.counts, self.traits.values])
        m.setflags(write=False)
        return m

    @cached_property
    def nodes(self) -> tuple[Node, ...]:
        snps = tuple(Node(s, SNP) for s in self.snp_ids)
        traits = tuple(Node(t, TRAIT, tier) for t, tier in zip(self.trait_ids, self.traits.tiers))
        return snps + traits

    def column(self, node_id: str) -> np.ndarray:
        return self.matrix[:, self.columns.index(node_id)]

    def select_rows(self, rows: Sequence[int]) -> "Dataset":
        return Dataset(self.genotypes.select_rows(rows), self.traits.select_rows(rows))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update("\x1f".join(self.individual_ids).encode())
        h.update(b"\x1e")
        h.update("\x1f".join(self.columns).encode())
        h.update(np.ascontiguousarray(self.matrix).tobytes())
        return h.hexdigest()[:16]


def _check_unique(ids: Sequence[str], what: str) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise DataError(f"duplicate {what}: {i!r}")
        seen.add(i)


def _column_stats(d: Dataset) -> dict[str, tuple[float, float]]:
    m = np.hstack([d.genotypes.counts, d.traits.values])
    means = m.mean(axis=0)
    sds = m.std(axis=0, ddof=1)
    cols = d.genotypes.snp_ids + d.traits.trait_ids
    return {c: (float(mu), float(sd)) for c, mu, sd in zip(cols, means, sds)}


def _read_table(path, what: str, impute_mean: bool) -> tuple[list[str], list[str], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{what} file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{what} file {path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise DataError(f"{what} file {path}: header needs an id column and at least one data column")
    columns = header[1:]
    ids: list[str] = []
    values = np.empty((len(rows) - 1, len(columns)))
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise DataError(
                f"{what} file {path}: row {r} has {len(row)} fields, expected {len(header)}"
            )
        ids.append(row[0].strip())
        for c, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell in MISSING_TOKENS:
                if not impute_mean:
                    raise DataError(
                        f"{what} file {path}: missing value at row {r}, column {columns[c]!r}"
                        " (inputs must be complete; pass impute_mean to fill with column means)"
                    )
                values[r - 1, c] = np.nan
                continue
            try:
                values[r - 1, c] = float(cell)
            except ValueError:
                raise DataError(
                    f"{what} file {path}: cannot parse {cell!r} at row {r}, column {columns[c]!r}"
                ) from None
            if not math.isfinite(values[r - 1, c]):
                raise DataError(f"{what} file {path}: non-finite value at row {r}, column {columns[c]!r}")
    if impute_mean and np.isnan(values).any():
        means = np.nanmean(values, axis=0)
        if np.isnan(means).any():
            bad = columns[int(np.flatnonzero(np.isnan(means))[0])]
            raise DataError(f"{what} file {path}: column {bad!r} has no observed values")
        values = np.where(np.isnan(values), means, values)
    return ids, columns, values


def parse_tiers(spec: str | Path) -> dict[str, int]:
    """Parse ``trait=0,trait2=1`` or a two-column ``trait,tier`` CSV file."""
    path = Path(str(spec))
    if "=" not in str(spec) and path.exists():
        tiers = {}
        with path.open(newline="") as fh:
            for r, row in enumerate(csv.reader(fh), start=1):
                if not row or not row[0].strip():
                    continue
                if len(row) != 2:
                    raise DataError(f"tier file {path}: row {r} must have two fields")
                name, tier = row[0].strip(), row[1].strip()
                try:
                    tiers[name] = int(tier)
                except ValueError:
                    if r == 1:  # header row
                        continue
                    raise DataError(f"tier file {path}: bad tier {tier!r} at row {r}") from None
        return tiers
    tiers = {}
    for item in str(spec).split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, tier = item.partition("=")
        if not sep:
            raise DataError(f"bad tier assignment {item!r}; expected trait=tier")
        try:
            tiers[name.strip()] = int(tier)
        except ValueError:
            raise DataError(f"bad tier {tier!r} for trait {name!r}") from None
    return tiers


def load_genotypes(path, *, impute_mean: bool = False) -> GenotypeMatrix:
    """Read a genotype CSV; counts must be 0/1/2 (any value in [0, 2] once imputed)."""
    ids, snp_ids, counts = _read_table(path, "genotype", impute_mean)
    if not impute_mean:
        bad = np.argwhere(~np.isin(counts, (0.0, 1.0, 2.0)))
        why = "is not an allele count in {0,1,2}"
    else:
        bad = np.argwhere((counts < 0) | (counts > 2))
        why = "outside [0,2]"
    if bad.size:
        r, c = bad[0]
        raise DataError(f"genotype value {counts[r, c]:g} at row {r + 1}, column {snp_ids[c]!r} {why}")
    _check_unique(ids, "individual id in genotype file")
    return GenotypeMatrix(ids, snp_ids, counts)


def load_traits(path, tier_spec: Mapping[str, int] | None = None, *,
                impute_mean: bool = False) -> TraitMatrix:
    ids, trait_ids, values = _read_table(path, "trait", impute_mean)
    _check_unique(ids, "individual id in trait file")
    if tier_spec is None:
        tier_spec = {t: 0 for t in trait_ids}
    missing = [t for t in trait_ids if t not in tier_spec]
    if missing:
        raise DataError(f"no tier given for traits {missing}")
    return TraitMatrix(ids, trait_ids, values, [tier_spec[t] for t in trait_ids])


def load_dataset(
    genotype_path,
    trait_path,
    tier_spec: Mapping[str, int] | None = None,
    *,
    impute_mean: bool = False,
) -> Dataset:
    """Read both CSV files and inner-join them on individual id.

    Row order follows the genotype file.  Individuals present in only one
    file are dropped and counted in ``Dataset.n_dropped``.  Traits missing
    from ``tier_spec`` are an error; ``None`` puts every trait in tier 0.
    """
    g = load_genotypes(genotype_path, impute_mean=impute_mean)
    t = load_traits(trait_path, tier_spec, impute_mean=impute_mean)
    t_index = {i: k for k, i in enumerate(t.individual_ids)}
    g_rows = [k for k, i in enumerate(g.individual_ids) if i in t_index]
    if not g_rows:
        raise DataError("genotype and trait files share no individual ids")
    t_rows = [t_index[g.individual_ids[k]] for k in g_rows]
    dropped = (g.n - len(g_rows)) + (t.n - len(t_rows))
    return Dataset(g.select_rows(g_rows), t.select_rows(t_rows), n_dropped=dropped)


def minor_allele_frequency(g: GenotypeMatrix) -> np.ndarray:
    p = g.counts.sum(axis=0) / (2.0 * g.n)
    return np.minimum(p, 1.0 - p)


def filter_maf(g: GenotypeMatrix, min_maf: float = 0.01) -> GenotypeMatrix:
    """Drop SNPs whose minor allele frequency is below ``min_maf``.

    Monomorphic SNPs are dropped even when ``min_maf`` is 0.
    """
    if not 0 <= min_maf < 0.5:
        raise DataError(f"min_maf must lie in [0, 0.5), got {min_maf}")
    maf = minor_allele_frequency(g)
    keep = np.flatnonzero((maf >= min_maf) & (g.counts.min(axis=0) != g.counts.max(axis=0)))
    if keep.size == 0:
        raise DataError("MAF filter removed every SNP")
    return g.select_columns(keep)


def prune_correlated(g: GenotypeMatrix, r_max: float = 0.95) -> GenotypeMatrix:
    """Greedy LD pruning in file order.

    A SNP is dropped when its absolute correlation with any previously
    retained SNP exceeds ``r_max``.  The result depends on column order.
    """
    if not 0 < r_max <= 1:
        raise DataError(f"r_max must lie in (0, 1], got {r_max}")
    if g.counts.shape[1] == 0:
        raise DataError("genotype matrix has no SNPs")
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.abs(np.corrcoef(g.counts, rowvar=False))
    r = np.atleast_2d(r)
    keep: list[int] = []
    for j in range(r.shape[0]):
        if not keep or not np.any(r[j, keep] > r_max):
            keep.append(j)
    return g.select_columns(keep)


def standardize(d: Dataset) -> Dataset:
    """Center every column and scale it to unit sample variance.

    The original per-column means and sds remain available through
    ``d.standardization`` so predictions can be mapped back.
    """
    m = d.matrix
    means = m.mean(axis=0)
    sds = m.std(axis=0, ddof=1)
    zero = np.flatnonzero(~(sds > 0))
    if zero.size:
        raise DataError(f"column {d.columns[zero[0]]!r} has zero variance")
    z = (m - means) / sds
    s = d.genotypes.counts.shape[1]
    genotypes = GenotypeMatrix(d.individual_ids, d.snp_ids, z[:, :s])
    traits = replace(d.traits, values=z[:, s:])
    return Dataset(
        genotypes, traits, standardization=dict(d.standardization), standardized=True,
        n_dropped=d.n_dropped,
    )


def write_table(path, ids: Sequence[str], columns: Sequence[str], values: np.ndarray,
                precision: int | None = None) -> None:
    """Write an ``id,<columns>`` CSV; ``precision`` significant digits, or exact repr."""
    fmt = (lambda v: repr(float(v))) if precision is None else (lambda v: f"{v:.{precision}g}")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *columns])
        for i, row in zip(ids, np.asarray(values)):
            w.writerow([i, *(fmt(v) for v in row)])


def write_genotypes(path, g: GenotypeMatrix) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *g.snp_ids])
        for i, row in zip(g.individual_ids, g.counts.astype(int)):
            w.writerow([i, *row.tolist()])
