"""Correlation, partial correlation and the Student's t independence test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import betainc

from .errors import DataError, NumericalError

# Reciprocal condition number below which a correlation submatrix is
# treated as singular.
RCOND_MIN = 1e-12
# Residual (partial) variance, on the correlation scale, treated as zero.
RESIDUAL_MIN = 1e-10


@dataclass(frozen=True)
class CiTestResult:
    r: float
    statistic: float
    df: int
    p_value: float
    dependent: bool
    degenerate: bool = False


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("pearson needs two vectors of equal length")
    if x.size < 3:
        raise DataError("pearson needs at least 3 observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DataError("correlation undefined for a constant vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def t_pvalue(t: float, df: int) -> float:
    """Two-sided p-value of Student's t with ``df`` degrees of freedom.

    Uses P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2).
    """
    if math.isinf(t):
        return 0.0
    return float(betainc(0.5 * df, 0.5, df / (df + t * t)))


def correlation_matrix(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    centered = data - data.mean(axis=0)
    ss = np.einsum("ij,ij->j", centered, centered)
    if np.any(ss == 0):
        raise DataError(f"constant column(s) {np.flatnonzero(ss == 0).tolist()}")
    scaled = centered / np.sqrt(ss)
    c = scaled.T @ scaled
    np.clip(c, -1.0, 1.0, out=c)
    np.fill_diagonal(c, 1.0)
    return c


def partial_corr_from_corr(corr: np.ndarray, x: int, y: int, z: Sequence[int] = ()) -> float:
    """Partial correlation of x and y given z from a correlation matrix.

    The {x, y} block of the inverse of the submatrix over {x, y} + z is the
    inverse of the Schur complement ``S = C_ab - C_az C_zz^-1 C_zb``, so
    ``-W_xy / sqrt(W_xx W_yy)`` equals ``S_xy / sqrt(S_xx S_yy)``.  When x or y
    has no variation left given z the partial correlation is reported as 0.
    """
    z = list(z)
    if not z:
        return float(corr[x, y])
    ab = [x, y]
    czz = corr[np.ix_(z, z)]
    try:
        chol = np.linalg.cholesky(czz)
    except np.linalg.LinAlgError:
        raise NumericalError(f"conditioning set {z} is collinear") from None
    d = np.diag(chol)
    if d.min() / d.max() < math.sqrt(RCOND_MIN):
        raise NumericalError(f"conditioning set {z} is numerically collinear")
    w = np.linalg.solve(chol, corr[np.ix_(z, ab)])
    schur = corr[np.ix_(ab, ab)] - w.T @ w
    sxx, syy = schur[0, 0], schur[1, 1]
    if sxx <= RESIDUAL_MIN or syy <= RESIDUAL_MIN:
        return 0.0
    r = 0.5 * (schur[0, 1] + schur[1, 0]) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, float(r)))


def partial_corr(x: int, y: int, z: Iterable[int], data) -> float:
    """Partial correlation of columns x and y of ``data`` given columns z.

    Computed from the {x, y} block of the inverse correlation submatrix
    over {x, y} + z (see :func:`partial_corr_from_corr`).
    """
    z = list(z)
    data = np.asarray(data, dtype=float)
    if data.shape[0] <= len(z) + 2:
        raise DataError(f"need more than {len(z) + 2} observations, got {data.shape[0]}")
    if not z:
        return pearson(data[:, x], data[:, y])
    idx = [x, y, *z]
    corr = correlation_matrix(data[:, idx])
    return partial_corr_from_corr(corr, 0, 1, range(2, len(idx)))


def ci_test_from_r(r: float, n: int, k: int, alpha: float) -> CiTestResult:
    """t-test of a (partial) correlation ``r`` from n samples and k conditioning variables."""
    df = n - 2 - k
    if df <= 0:
        return CiTestResult(r, 0.0, max(df, 0), 1.0, False, degenerate=True)
    if abs(r) >= 1.0:
        return CiTestResult(r, math.copysign(math.inf, r), df, 0.0, True)
    t = r * math.sqrt(df / (1.0 - r * r))
    p = t_pvalue(t, df)
    return CiTestResult(r, t, df, p, p <= alpha)


def ci_test(x: int, y: int, z: Iterable[int], data, alpha: float = 0.05) -> CiTestResult:
    """Test x _||_ y | z on the columns of ``data``.

    A numerically singular conditioning set yields a degenerate result that
    declares independence, as does df <= 0.
    """
    z = list(z)
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if n - 2 - len(z) <= 0:
        return CiTestResult(0.0, 0.0, 0, 1.0, False, degenerate=True)
    try:
        r = partial_corr(x, y, z, data)
    except NumericalError:
        return CiTestResult(0.0, 0.0, n - 2 - len(z), 1.0, False, degenerate=True)
    return ci_test_from_r(r, n, len(z), alpha)


def ci_test_from_corr(corr: np.ndarray, n: int, x: int, y: int, z: Sequence[int],
                      alpha: float) -> CiTestResult:
    if n - 2 - len(z) <= 0:
        return CiTestResult(0.0, 0.0, 0, 1.0, False, degenerate=True)
    try:
        r = partial_corr_from_corr(corr, x, y, z)
    except NumericalError:
        return CiTestResult(0.0, 0.0, n - 2 - len(z), 1.0, False, degenerate=True)
    return ci_test_from_r(r, n, len(z), alpha)
