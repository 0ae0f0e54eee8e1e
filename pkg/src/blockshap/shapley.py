"""Exact Shapley effects for Gaussian linear models.

For Y = beta0 + beta @ X with X Gaussian, the variance share attributed to
input i averages, over subsets u not containing i, the drop in conditional
output variance when X_i joins the conditioning set:

    eta_i = 1 / (p * V(Y)) * sum_{u, i not in u} [ C(p-1, |u|)^{-1}
            * (V(Y | X_u) - V(Y | X_{u + i})) ]

Each conditional variance is a Schur-complement quadratic form, so all 2^p
values can be tabulated once. When the covariance is block diagonal the
attribution decomposes: inputs in different blocks never interact, each block
is swept over its own 2^{m_k} subsets, and only the shared normalization
beta @ Sigma @ beta couples the blocks. That drops the cost from O(2^p) to
O(K * 2^m) for K blocks of size at most m.

The plug-in path estimates the block structure and covariance from an input
sample and the coefficients by least squares, then applies the blockwise
formula to the estimates.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .covariance import BlockCovariance, StructureConfig, estimate_covariance
from .errors import NumericalError
from .partition import Partition
from .regression import LinearFit, ols_fit

MAX_FULL_DIM = 20
MAX_BLOCK_DIM = 25

# Batch height for the stacked linear solves of the subset sweep.
_SOLVE_CHUNK = 1 << 16

SUM_TOL = 1e-10
RANGE_TOL = 1e-10


@dataclass(frozen=True)
class GaussianLinearModel:
    """Intercept, coefficients, and input covariance (dense or block form)."""

    beta0: float
    beta: np.ndarray
    cov: BlockCovariance | np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        beta.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        if isinstance(self.cov, BlockCovariance):
            p = self.cov.p
        else:
            cov = np.asarray(self.cov, dtype=float)
            if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
                raise ValueError(f"covariance must be square, got shape {cov.shape}")
            cov.flags.writeable = False
            object.__setattr__(self, "cov", cov)
            p = cov.shape[0]
        if beta.shape != (p,):
            raise ValueError(
                f"beta has shape {beta.shape}, expected ({p},) to match the covariance"
            )

    @property
    def p(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class ShapleyVector:
    """Per-input variance shares; non-negative and summing to one."""

    eta: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        eta.flags.writeable = False
        object.__setattr__(self, "eta", eta)
        total = float(eta.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise NumericalError(f"effects sum to {total!r}, expected 1 within {SUM_TOL}")
        if eta.min() < -RANGE_TOL or eta.max() > 1.0 + RANGE_TOL:
            raise NumericalError("effects leave [0, 1] beyond tolerance")


def conditional_variance(cov, beta, u) -> float:
    """Variance of beta @ X given the coordinates in ``u``.

    Empty ``u`` returns the total variance beta @ cov @ beta; the full index
    set returns exactly 0. Otherwise, with w the complement of u,

        V = beta_w @ (cov_ww - cov_wu cov_uu^{-1} cov_uw) @ beta_w.
    """
    cov = np.asarray(cov, dtype=float)
    beta = np.asarray(beta, dtype=float)
    p = cov.shape[0]
    if cov.shape != (p, p) or beta.shape != (p,):
        raise ValueError("covariance and coefficient shapes are inconsistent")
    u = sorted(set(int(i) for i in u))
    if u and (u[0] < 0 or u[-1] >= p):
        raise ValueError(f"conditioning indices outside [0, {p})")
    if not u:
        return float(beta @ cov @ beta)
    if len(u) == p:
        return 0.0
    w = sorted(set(range(p)) - set(u))
    try:
        x = np.linalg.solve(cov[np.ix_(u, u)], cov[np.ix_(u, w)])
    except np.linalg.LinAlgError:
        raise NumericalError("conditioning sub-matrix is singular") from None
    schur = cov[np.ix_(w, w)] - cov[np.ix_(w, u)] @ x
    bw = beta[w]
    return max(float(bw @ schur @ bw), 0.0)


def _popcounts(m: int) -> np.ndarray:
    """Bit counts of 0 .. 2^m - 1."""
    pc = np.zeros(1, dtype=np.int64)
    for _ in range(m):
        pc = np.concatenate([pc, pc + 1])
    return pc


def _subset_variances(sigma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Tabulate V(beta @ X | X_v) for every v, indexed by bitmask.

    Uses the identity V(Y|X_v) = V(Y) - g_v @ Sigma_vv^{-1} @ g_v with
    g = Sigma @ beta, an algebraic rewrite of the Schur-complement quadratic
    form that needs only the conditioning sub-matrix. Subsets of equal size
    are solved as one stacked batch.
    """
    m = beta.shape[0]
    g = sigma @ beta
    total = float(beta @ g)
    values = np.empty(1 << m)
    values[0] = total
    for size in range(1, m):
        combos = np.fromiter(
            itertools.chain.from_iterable(itertools.combinations(range(m), size)),
            dtype=np.intp,
        ).reshape(-1, size)
        masks = (1 << combos).sum(axis=1)
        for lo in range(0, combos.shape[0], _SOLVE_CHUNK):
            part = combos[lo : lo + _SOLVE_CHUNK]
            sub = sigma[part[:, :, None], part[:, None, :]]
            gv = g[part]
            try:
                sol = np.linalg.solve(sub, gv[..., None])[..., 0]
            except np.linalg.LinAlgError:
                raise NumericalError(
                    "a conditioning sub-matrix is singular; covariance must be "
                    "positive definite"
                ) from None
            quad = np.einsum("cs,cs->c", gv, sol)
            values[masks[lo : lo + _SOLVE_CHUNK]] = total - quad
    values[(1 << m) - 1] = 0.0
    np.maximum(values, 0.0, out=values)
    return values


def _unnormalized_effects(values: np.ndarray, m: int) -> np.ndarray:
    """Per-index sums (1/m) * sum_u C(m-1,|u|)^{-1} (V_u - V_{u+i}).

    The caller divides by the total output variance.
    """
    weights = np.array([1.0 / comb(m - 1, s) for s in range(m)])
    pc = _popcounts(m)
    masks = np.arange(1 << m)
    out = np.empty(m)
    for j in range(m):
        bit = 1 << j
        without = masks[(masks & bit) == 0]
        diffs = values[without] - values[without | bit]
        out[j] = float(weights[pc[without]] @ diffs)
    return out / m


def shapley_full(model: GaussianLinearModel) -> ShapleyVector:
    """Shapley effects by the full 2^p subset sweep (p <= 20).

    Block covariances are densified first; the blockwise routine is the
    scalable alternative for larger p.
    """
    p = model.p
    if p > MAX_FULL_DIM:
        raise ValueError(
            f"the full subset sweep is capped at p = {MAX_FULL_DIM}; "
            f"use shapley_block for p = {p}"
        )
    cov = model.cov.reconstruct() if isinstance(model.cov, BlockCovariance) else model.cov
    values = _subset_variances(np.asarray(cov, dtype=float), model.beta)
    total = values[0]
    if total <= 0.0:
        raise NumericalError("output variance beta @ cov @ beta must be positive")
    return ShapleyVector(_unnormalized_effects(values, p) / total)


def shapley_block(model: GaussianLinearModel) -> ShapleyVector:
    """Shapley effects using the blockwise decomposition, O(K * 2^m).

    The covariance must be in block form. Each block of size m_k is swept over
    its 2^{m_k} subsets independently; effects share the global normalization
    beta @ Sigma @ beta accumulated over blocks.
    """
    if not isinstance(model.cov, BlockCovariance):
        raise ValueError("shapley_block requires a block-form covariance")
    cov = model.cov
    oversized = [g for g in cov.partition.groups if len(g) > MAX_BLOCK_DIM]
    if oversized:
        raise ValueError(
            f"block of size {len(oversized[0])} exceeds the 2^m sweep cap "
            f"({MAX_BLOCK_DIM})"
        )
    beta = model.beta
    per_block = []
    total = 0.0
    for g, blk in zip(cov.partition.groups, cov.blocks):
        bg = beta[list(g)]
        values = _subset_variances(blk, bg)
        total += values[0]
        per_block.append((g, _unnormalized_effects(values, len(g))))
    if total <= 0.0:
        raise NumericalError("output variance beta @ cov @ beta must be positive")
    eta = np.empty(model.p)
    for g, raw in per_block:
        eta[list(g)] = raw / total
    return ShapleyVector(eta)


def shapley_plugin(
    data, y, cfg: StructureConfig
) -> tuple[Partition, ShapleyVector, GaussianLinearModel]:
    """Estimate Shapley effects from an (X, y) sample.

    Pipeline: select a block structure and project the sample covariance onto
    it, fit the coefficients by least squares, then run the blockwise formula
    on the estimates. The effects still sum to one because the normalization
    is the fitted quadratic form itself.

    Returns the selected partition, the effects, and the fitted model.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    if n <= p:
        raise ValueError(f"plug-in estimation needs n > p, got n = {n}, p = {p}")
    b, cov = estimate_covariance(x, cfg)
    fit: LinearFit = ols_fit(x, y)
    model = GaussianLinearModel(beta0=fit.beta0_hat, beta=fit.beta_hat, cov=cov)
    return b, shapley_block(model), model
