"""Multivariate GBLUP as a Gaussian BN.

The model for T traits measured on n individuals with S SNPs is

    y_t = mu_t + Z u_t + e_t,   COV(u) = G (T x T grid of S x S blocks),
                                COV(e) = R (T x T grid of r_tt' * I_n).

Over the stacked vector (y, u) the joint covariance is

    [ Z~ G Z~' + R    Z~ G ]
    [ (Z~ G)'         G    ]     with Z~ = blockdiag(Z, ..., Z).

Inverting it gives the precision matrix whose zero pattern is the BN
structure and whose entries give each variable's regression on the rest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_io import GenotypeMatrix
from .errors import ConfigError, NumericalError
from .graph import SNP, TRAIT, Node
from .inference import JITTER, JointGaussian, bn_from_joint, to_joint
from .params import GaussianBn

log = logging.getLogger(__name__)

PSD_TOL = 1e-10


@dataclass(frozen=True)
class GblupModel:
    design: np.ndarray
    g_blocks: tuple[tuple[np.ndarray, ...], ...]
    r_blocks: np.ndarray
    means: np.ndarray
    trait_ids: tuple[str, ...]
    snp_ids: tuple[str, ...]
    individual_ids: tuple[str, ...]

    @property
    def n_traits(self) -> int:
        return len(self.trait_ids)

    def assembled_g(self) -> np.ndarray:
        return np.block([list(row) for row in self.g_blocks])

    def assembled_r(self) -> np.ndarray:
        return np.kron(self.r_blocks, np.eye(self.design.shape[0]))


def _check_psd(m: np.ndarray, what: str, strict: bool = False) -> None:
    if not np.allclose(m, m.T, atol=1e-12 * max(1.0, np.abs(m).max(initial=0.0))):
        raise ConfigError(f"{what} is not symmetric")
    eig = np.linalg.eigvalsh(0.5 * (m + m.T))
    scale = max(1.0, float(np.abs(eig).max(initial=0.0)))
    low = float(eig.min()) if eig.size else 0.0
    if strict and low <= PSD_TOL * scale:
        raise ConfigError(f"{what} is not positive definite (smallest eigenvalue {low:.3g})")
    if low < -PSD_TOL * scale:
        raise ConfigError(f"{what} is not positive semidefinite (smallest eigenvalue {low:.3g})")


def build_gblup(
    genotypes: GenotypeMatrix,
    g_policy: str | Sequence[Sequence[np.ndarray]] = "identity",
    residual: np.ndarray | Sequence[Sequence[float]] = ((1.0,),),
    means: Sequence[float] | None = None,
    genetic: np.ndarray | Sequence[Sequence[float]] | None = None,
    trait_ids: Sequence[str] | None = None,
    scale: float | None = None,
) -> GblupModel:
    """Assemble a multivariate GBLUP model.

    ``genetic`` is the T x T matrix C of genetic (co)variances between
    traits; the SNP-effect blocks are G_ij = C_ij * K with K given by
    ``g_policy``:

    * ``"identity"``: K = scale * I_S (default scale 1), the random
      regression on allele counts, so Z G_ii Z' is proportional to X X'.
    * ``"crossprod"``: K = scale * X'X (default scale 1/n).
    * a T x T nested sequence of S x S arrays: used as G directly.

    ``residual`` is the T x T matrix of residual (co)variances.
    """
    z = np.asarray(genotypes.counts, dtype=float)
    n, s = z.shape
    r = np.atleast_2d(np.asarray(residual, dtype=float))
    t = r.shape[0]
    if r.shape != (t, t):
        raise ConfigError("residual covariance must be square")
    _check_psd(r, "residual covariance", strict=True)
    if isinstance(g_policy, str):
        c = np.eye(t) if genetic is None else np.atleast_2d(np.asarray(genetic, dtype=float))
        if c.shape != (t, t):
            raise ConfigError(f"genetic covariance must be {t} x {t}")
        _check_psd(c, "genetic covariance between traits")
        if g_policy == "identity":
            k = (1.0 if scale is None else scale) * np.eye(s)
        elif g_policy == "crossprod":
            k = (1.0 / n if scale is None else scale) * (z.T @ z)
        else:
            raise ConfigError(f"unknown g_policy {g_policy!r}")
        blocks = tuple(tuple(c[i, j] * k for j in range(t)) for i in range(t))
    else:
        blocks = tuple(tuple(np.asarray(b, dtype=float) for b in row) for row in g_policy)
        if len(blocks) != t or any(len(row) != t for row in blocks):
            raise ConfigError(f"G must be a {t} x {t} grid of blocks")
        if any(b.shape != (s, s) for row in blocks for b in row):
            raise ConfigError(f"every G block must be {s} x {s}")
    g = np.block([list(row) for row in blocks])
    _check_psd(g, "G")
    mu = np.zeros(t) if means is None else np.asarray(means, dtype=float)
    if mu.shape != (t,):
        raise ConfigError(f"need {t} trait means")
    ids = tuple(trait_ids) if trait_ids is not None else tuple(f"T{i + 1}" for i in range(t))
    if len(ids) != t:
        raise ConfigError(f"need {t} trait ids")
    return GblupModel(z, blocks, r, mu, ids, genotypes.snp_ids, genotypes.individual_ids)


def variable_names(m: GblupModel) -> tuple[list[str], list[str]]:
    ys = [f"{t}:{i}" for t in m.trait_ids for i in m.individual_ids]
    us = [f"u_{t}:{s}" for t in m.trait_ids for s in m.snp_ids]
    return ys, us


def joint_covariance(m: GblupModel) -> JointGaussian:
    """Joint distribution of the stacked phenotypes and random effects."""
    z = m.design
    n, s = z.shape
    t = m.n_traits
    if m.r_blocks.shape != (t, t) or len(m.g_blocks) != t:
        raise ConfigError("dimension mismatch between G, R and the number of traits")
    if any(b.shape != (s, s) for row in m.g_blocks for b in row):
        raise ConfigError(f"G blocks must be {s} x {s} to match the design")
    zt = np.kron(np.eye(t), z)
    g = m.assembled_g()
    zg = zt @ g
    syy = zg @ zt.T + m.assembled_r()
    cov = np.block([[syy, zg], [zg.T, g]])
    cov = 0.5 * (cov + cov.T)
    mean = np.concatenate([np.repeat(m.means, n), np.zeros(t * s)])
    ys, us = variable_names(m)
    return JointGaussian(tuple(ys + us), mean, cov)


def gblup_bn(m: GblupModel) -> GaussianBn:
    """Gaussian BN with the random effects first (as SNP-like roots) and the
    phenotypes after them, reproducing the joint distribution exactly."""
    joint = joint_covariance(m)
    ys, us = variable_names(m)
    nodes = [Node(u, SNP) for u in us] + [Node(y, TRAIT, 0) for y in ys]
    return bn_from_joint(joint, nodes)


@dataclass(frozen=True)
class EquivalenceReport:
    order: tuple[str, ...]
    precision: np.ndarray
    zero_pattern: np.ndarray
    coefficients: np.ndarray
    sampled: np.ndarray
    standard_errors: np.ndarray
    n_samples: int
    jitter: float
    roundtrip_error: float

    @property
    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (self.sampled - self.coefficients) / self.standard_errors
        np.fill_diagonal(z, 0.0)
        return z

    @property
    def max_abs_z(self) -> float:
        return float(np.abs(self.z_scores).max(initial=0.0))

    @property
    def within(self) -> bool:
        return self.max_abs_z <= 3.0

    def rows(self):
        """(response, regressor, implied, sampled, se, zero) for every ordered pair."""
        for i, a in enumerate(self.order):
            for j, b in enumerate(self.order):
                if i != j:
                    yield (a, b, self.coefficients[i, j], self.sampled[i, j],
                           self.standard_errors[i, j], bool(self.zero_pattern[i, j]))


def _precision(cov: np.ndarray) -> tuple[np.ndarray, float]:
    jitter = 0.0
    try:
        c = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = JITTER
        log.warning("joint covariance is singular; adding %g to the diagonal", jitter)
        try:
            c = np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            raise NumericalError("joint covariance is singular even after jitter") from None
    ci = np.linalg.inv(c)
    omega = ci.T @ ci
    return 0.5 * (omega + omega.T), jitter


def full_conditional_coefficients(omega: np.ndarray) -> np.ndarray:
    """B[i, j] = -Omega_ij / Omega_ii (row i regressed on all the others)."""
    b = -omega / np.diag(omega)[:, None]
    np.fill_diagonal(b, 0.0)
    return b


def verify_equivalence(m: GblupModel, tol: float = 1e-8, n_samples: int = 1_000_000,
                       seed=0, chunk: int = 100_000) -> EquivalenceReport:
    """Precision-matrix view of a GBLUP model, checked by simulation.

    Draws ``n_samples`` observations from the joint distribution and
    regresses every variable on all the others; the sample coefficients and
    their standard errors come from the inverse sample covariance.
    """
    joint = joint_covariance(m)
    omega, jitter = _precision(joint.covariance)
    coef = full_conditional_coefficients(omega)
    zero = np.abs(omega) <= tol
    np.fill_diagonal(zero, False)

    d = len(joint.order)
    cov = joint.covariance + jitter * np.eye(d)
    chol = np.linalg.cholesky(cov)
    rng = np.random.default_rng(seed)
    total = np.zeros(d)
    cross = np.zeros((d, d))
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        x = rng.standard_normal((k, d)) @ chol.T
        total += x.sum(axis=0)
        cross += x.T @ x
        done += k
    mean = total / n_samples
    scov = cross / n_samples - np.outer(mean, mean)
    p = np.linalg.inv(scov)
    p = 0.5 * (p + p.T)
    sampled = full_conditional_coefficients(p)
    # OLS of i on the rest: residual variance 1/P_ii (x N/(N-d)), and
    # [(X'X)^-1]_jj = (P_jj - P_ij^2 / P_ii) / N for the remaining regressors.
    diag = np.diag(p)
    resid = (1.0 / diag) * n_samples / (n_samples - d)
    inv_xx = (diag[None, :] - p * p / diag[:, None]) / n_samples
    with np.errstate(invalid="ignore"):
        se = np.sqrt(resid[:, None] * inv_xx)
    np.fill_diagonal(se, np.nan)

    bn = gblup_bn(m)
    back = to_joint(bn).marginal(joint.order).covariance
    err = float(np.linalg.norm(back - joint.covariance) / np.linalg.norm(joint.covariance))
    return EquivalenceReport(joint.order, omega, zero, coef, sampled, se, n_samples, jitter, err)
