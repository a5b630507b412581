"""Learning pipeline and repeated k-fold cross-validation."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data_io import Dataset, filter_maf, prune_correlated
from .errors import BnError, ConfigError, DataError
from .graph import Dag
from .inference import predict, to_joint
from .modelfile import ModelFile
from .params import GaussianBn, GcvLambda, LambdaPolicy, fit
from .structure import SearchConfig, hill_climb, mb_filter

log = logging.getLogger(__name__)


def preprocess(data: Dataset, min_maf: float = 0.01, r_max: float = 0.95) -> Dataset:
    """Drop rare or monomorphic SNPs, then near-duplicate SNPs (file order)."""
    g = prune_correlated(filter_maf(data.genotypes, min_maf), r_max)
    if g.snp_ids == data.snp_ids:
        return data
    return Dataset(g, data.traits, n_dropped=data.n_dropped)


def learn_bn(data: Dataset, cfg: SearchConfig = SearchConfig(), fit_method: str = "ridge",
             lambda_policy: LambdaPolicy | float = GcvLambda(), min_maf: float = 0.01,
             r_max: float = 0.95) -> GaussianBn:
    """Preprocess, select nodes by Markov-blanket filtering, search and fit.

    The returned network covers the traits and the retained SNPs only.
    """
    d = preprocess(data, min_maf, r_max)
    nodes = mb_filter(d, cfg)
    dag = hill_climb(d, nodes, cfg)
    return fit(dag, d, fit_method, lambda_policy)


def predictive_correlation(predicted, observed) -> float:
    """Pearson correlation; constant predictions score 0 (they carry no signal)."""
    p = np.asarray(predicted, dtype=float)
    o = np.asarray(observed, dtype=float)
    if p.shape != o.shape or p.ndim != 1 or p.size < 2:
        raise ConfigError("need two vectors of equal length >= 2")
    oc = o - o.mean()
    if not np.any(np.abs(oc) > 1e-12 * max(1.0, np.abs(o).max())):
        raise DataError("correlation is undefined for constant observations")
    pc = p - p.mean()
    denom = math.sqrt(float(pc @ pc) * float(oc @ oc))
    if denom == 0.0:
        return 0.0
    return float(np.clip((pc @ oc) / denom, -1.0, 1.0))


def oracle_rho(bn: GaussianBn, trait: str) -> float:
    """Correlation between a trait and its best linear predictor from all SNPs."""
    j = to_joint(bn)
    snps = list(bn.dag.snps)
    t = j.index([trait])[0]
    if not snps:
        return 0.0
    s = j.index(snps)
    s_ss = j.covariance[np.ix_(s, s)]
    s_ts = j.covariance[t, s]
    explained = float(s_ts @ np.linalg.solve(s_ss, s_ts))
    return math.sqrt(max(explained, 0.0) / j.covariance[t, t])


@dataclass(frozen=True)
class CvConfig:
    runs: int = 10
    folds: int = 10
    search: SearchConfig = SearchConfig()
    fit_method: str = "ridge"
    lambda_policy: LambdaPolicy | float = GcvLambda()
    seed: int = 0
    min_maf: float = 0.01
    r_max: float = 0.95

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")


@dataclass(frozen=True)
class FoldResult:
    run: int
    fold: int
    test_rows: np.ndarray
    genetic: np.ndarray | None
    causal: np.ndarray | None
    dag: Dag | None
    model_path: str | None
    error: str | None = None


@dataclass(frozen=True)
class CvReport:
    trait_ids: tuple[str, ...]
    rho_g: np.ndarray
    rho_c: np.ndarray
    networks: tuple[Dag, ...]
    model_paths: tuple[str, ...]
    skipped: tuple[tuple[int, int, str], ...]
    seconds: float = field(default=0.0, compare=False)

    def __eq__(self, other):
        if not isinstance(other, CvReport):
            return NotImplemented
        return (self.trait_ids == other.trait_ids
                and np.array_equal(self.rho_g, other.rho_g, equal_nan=True)
                and np.array_equal(self.rho_c, other.rho_c, equal_nan=True)
                and self.networks == other.networks
                and self.model_paths == other.model_paths
                and self.skipped == other.skipped)

    def summary(self) -> list[tuple[str, str, float, float]]:
        """(trait, metric, mean, sd) with the sd across runs (ddof 1; 0 for one run)."""
        out = []
        for k, t in enumerate(self.trait_ids):
            for name, m in (("rho_g", self.rho_g), ("rho_c", self.rho_c)):
                col = m[:, k]
                col = col[np.isfinite(col)]
                mean = float(col.mean()) if col.size else math.nan
                sd = float(col.std(ddof=1)) if col.size > 1 else 0.0
                out.append((t, name, mean, sd))
        return out

    def write_csv(self, path, precision: int = 6) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trait", "metric", "mean", "sd"])
            for t, metric, mean, sd in self.summary():
                w.writerow([t, metric, f"{mean:.{precision}g}", f"{sd:.{precision}g}"])


def fold_partition(n: int, folds: int, seed: int, run: int) -> list[np.ndarray]:
    """Shuffled split of range(n) into ``folds`` parts whose sizes differ by at most 1."""
    if folds > n:
        raise ConfigError(f"cannot split {n} individuals into {folds} folds")
    rng = np.random.default_rng(np.random.SeedSequence([seed, run]))
    return [np.sort(p) for p in np.array_split(rng.permutation(n), folds)]


def _fold_seed(seed: int, run: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, run, fold]).generate_state(1)[0])


Hook = Callable[[int, int, Dataset, Dataset], None]


def _run_fold(data: Dataset, cfg: CvConfig, run: int, fold: int, test: np.ndarray,
              model_dir: Path | None, hook: Hook | None) -> FoldResult:
    train = np.setdiff1d(np.arange(data.n), test)
    tr, te = data.select_rows(train), data.select_rows(test)
    if hook is not None:
        hook(run, fold, tr, te)
    search = replace(cfg.search, seed=_fold_seed(cfg.seed, run, fold))
    try:
        bn = learn_bn(tr, search, cfg.fit_method, cfg.lambda_policy, cfg.min_maf, cfg.r_max)
        gen = predict(bn, te.genotypes, "genetic")
        cau = predict(bn, te.genotypes, "causal", te.traits)
    except BnError as e:
        log.warning("run %d fold %d skipped: %s", run, fold, e)
        return FoldResult(run, fold, test, None, None, None, None, str(e))
    order = [gen.trait_ids.index(t) for t in data.trait_ids]
    path = None
    if model_dir is not None:
        path = str(model_dir / f"run{run:02d}_fold{fold:02d}.json")
        ModelFile.from_bn(bn, {"run": run, "fold": fold, "seed": cfg.seed,
                               "alpha": cfg.search.alpha, "fingerprint": tr.fingerprint()}).save(path)
    return FoldResult(run, fold, test, gen.values[:, order], cau.values[:, order], bn.dag, path)


def run_cv(data: Dataset, cfg: CvConfig = CvConfig(), model_dir=None, hook: Hook | None = None,
           threads: int = 1) -> CvReport:
    """Repeated k-fold cross-validation of the whole learning pipeline.

    Every run reshuffles the individuals with its own seeded stream.  Each
    fold learns and fits on its training rows only, then predicts the
    held-out rows from SNPs alone (genetic) and from each trait's observed
    parents (causal).  Predictions are pooled over the folds of a run before
    computing one correlation per trait and run.  ``hook(run, fold, train,
    test)`` is called before learning, for auditing.  Folds that fail are
    skipped with a warning and listed in ``CvReport.skipped``.
    """
    start = time.perf_counter()
    if model_dir is not None:
        model_dir = Path(model_dir)
        model_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(r, f, test) for r in range(cfg.runs)
            for f, test in enumerate(fold_partition(data.n, cfg.folds, cfg.seed, r))]
    args = lambda job: _run_fold(data, cfg, *job, model_dir, hook)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(args, jobs))
    else:
        results = [args(j) for j in jobs]

    t = len(data.trait_ids)
    obs = data.traits.values
    rho_g = np.full((cfg.runs, t), np.nan)
    rho_c = np.full((cfg.runs, t), np.nan)
    for r in range(cfg.runs):
        gen = np.full((data.n, t), np.nan)
        cau = np.full((data.n, t), np.nan)
        for res in results:
            if res.run == r and res.error is None:
                gen[res.test_rows] = res.genetic
                cau[res.test_rows] = res.causal
        ok = ~np.isnan(gen[:, 0]) if t else np.zeros(data.n, bool)
        if ok.sum() < 3:
            continue
        for k in range(t):
            rho_g[r, k] = predictive_correlation(gen[ok, k], obs[ok, k])
            rho_c[r, k] = predictive_correlation(cau[ok, k], obs[ok, k])
    good = [res for res in results if res.error is None]
    return CvReport(
        data.trait_ids, rho_g, rho_c,
        tuple(res.dag for res in good),
        tuple(res.model_path for res in good if res.model_path is not None),
        tuple((res.run, res.fold, res.error) for res in results if res.error is not None),
        time.perf_counter() - start,
    )
