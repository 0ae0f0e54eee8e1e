"""Closed-form efficiency bounds for covariance estimation with known mean.

For n i.i.d. Gaussian observations with known mean, the covariance of the
flattened sample covariance attains the constrained lower bound whose entry
for the pair of positions (i, j), (i', j') is

    sigma_ii' * sigma_jj' + sigma_ij' * sigma_ji'.

Under a block constraint the bound keeps that value only when all four
indices share a group and is zero elsewhere. These matrices serve as exact
targets for the Monte Carlo efficiency checks, alongside the asymptotic
variance of the log-determinant of a block-projected sample covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import project_block
from .errors import NotPositiveDefiniteError
from .partition import Partition

# Dense p^2 x p^2 storage: 40^4 entries is about 2.6M floats, the comfort
# ceiling for this fixed-dimension tooling.
MAX_CRB_DIM = 40

PATTERN_RTOL = 1e-12


@dataclass(frozen=True)
class CrbMatrix:
    """A p^2 x p^2 bound on the covariance of the flattened estimator.

    Positions use the row-major flattening: matrix entry (i, j) maps to
    i * p + j. The closed form is symmetric in i <-> j, so the row-major and
    column-major conventions produce the identical matrix.
    """

    p: int
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.shape != (self.p**2, self.p**2):
            raise ValueError(
                f"expected shape {(self.p**2, self.p**2)}, got {entries.shape}"
            )
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    def at(self, i: int, j: int, i2: int, j2: int) -> float:
        """Entry for the covariance of positions (i, j) and (i2, j2)."""
        return float(self.entries[i * self.p + j, i2 * self.p + j2])


def _check_input(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    p = sigma.shape[0]
    if sigma.shape != (p, p):
        raise ValueError(f"covariance must be square, got shape {sigma.shape}")
    if p > MAX_CRB_DIM:
        raise ValueError(f"dense p^2 x p^2 bound is capped at p = {MAX_CRB_DIM}")
    return sigma


def _pairwise_products(sigma: np.ndarray) -> np.ndarray:
    # entry at (i*p+j, i2*p+j2): sigma[i,i2]*sigma[j,j2] + sigma[i,j2]*sigma[j,i2]
    t1 = np.einsum("ik,jl->ijkl", sigma, sigma)
    t2 = np.einsum("il,jk->ijkl", sigma, sigma)
    p = sigma.shape[0]
    return (t1 + t2).reshape(p * p, p * p)


def crb_unconstrained(sigma) -> CrbMatrix:
    """Efficiency bound for the unconstrained (symmetric) covariance model."""
    sigma = _check_input(sigma)
    return CrbMatrix(sigma.shape[0], _pairwise_products(sigma))


def crb_block(sigma, b: Partition) -> CrbMatrix:
    """Efficiency bound under a block-diagonal constraint.

    Entries are the unconstrained closed form when all four indices lie in a
    single group of ``b`` and exactly zero otherwise. ``sigma`` must already
    be block diagonal with respect to ``b``.
    """
    sigma = _check_input(sigma)
    p = sigma.shape[0]
    if b.p != p:
        raise ValueError(f"dimension mismatch: matrix is {p}, partition is {b.p}")
    inside = np.zeros((p, p), dtype=bool)
    for g in b.groups:
        inside[np.ix_(g, g)] = True
    scale = max(np.abs(sigma).max(), 1.0)
    off = np.abs(np.where(inside, 0.0, sigma)).max()
    if off > PATTERN_RTOL * scale:
        raise ValueError(
            "matrix has entries outside the partition's block pattern "
            f"(max magnitude {off:.3e})"
        )
    entries = np.zeros((p * p, p * p))
    for g in b.groups:
        local = _pairwise_products(sigma[np.ix_(g, g)])
        pos = [i * p + j for i in g for j in g]
        entries[np.ix_(pos, pos)] = local
    return CrbMatrix(p, entries)


def logdet_clt_variance(sigma, b: Partition) -> float:
    """Per-coordinate asymptotic variance 2 trace((Sigma_B^{-1} Sigma)^2) / p.

    This is the normalized form, at most 2p, and equal to 2 whenever the
    projection leaves sigma unchanged. The raw asymptotic variance of
    sqrt(n) * (log det S_B - log det Sigma_B) is p times this value; Monte
    Carlo checks compare against that unnormalized form.
    """
    sigma = np.asarray(sigma, dtype=float)
    p = sigma.shape[0]
    if sigma.shape != (p, p):
        raise ValueError(f"covariance must be square, got shape {sigma.shape}")
    if b.p != p:
        raise ValueError(f"dimension mismatch: matrix is {p}, partition is {b.p}")
    sb = project_block(sigma, b).reconstruct()
    try:
        ratio = np.linalg.solve(sb, sigma)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("block projection of the covariance is singular") from None
    return 2.0 * float(np.trace(ratio @ ratio)) / p
