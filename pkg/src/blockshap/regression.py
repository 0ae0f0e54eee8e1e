"""Ordinary least squares with an intercept column."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

# Condition estimate (ratio of extreme R-factor pivots) above which the
# design is treated as rank deficient.
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class LinearFit:
    """Fitted intercept, coefficients, and residual variance (divisor n-p-1)."""

    beta0_hat: float
    beta_hat: np.ndarray
    residual_variance: float

    def __post_init__(self):
        beta = np.asarray(self.beta_hat, dtype=float)
        beta.flags.writeable = False
        object.__setattr__(self, "beta_hat", beta)


def ols_fit(x, y) -> LinearFit:
    """Least-squares fit of y = beta0 + x @ beta.

    Solves the normal equations through a QR factorization of the design
    matrix [1 X] rather than forming (A^T A)^{-1}, which is equivalent in
    exact arithmetic and much better conditioned. Requires n > p; raises
    NumericalError when the R-factor condition estimate exceeds 1e12.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    if y.shape[0] != n:
        raise ValueError(f"response length {y.shape[0]} does not match {n} rows")
    if n <= p:
        raise ValueError(f"need n > p for least squares, got n = {n}, p = {p}")
    design = np.empty((n, p + 1))
    design[:, 0] = 1.0
    design[:, 1:] = x
    q, r = np.linalg.qr(design, mode="reduced")
    pivots = np.abs(np.diag(r))
    if pivots.min() == 0.0 or pivots.max() / pivots.min() > MAX_CONDITION:
        raise NumericalError(
            "design matrix is numerically rank deficient "
            f"(condition estimate above {MAX_CONDITION:.0e})"
        )
    coef = np.linalg.solve(r, q.T @ y)
    resid = y - design @ coef
    dof = n - p - 1
    residual_variance = float(resid @ resid) / dof if dof > 0 else 0.0
    return LinearFit(
        beta0_hat=float(coef[0]),
        beta_hat=coef[1:],
        residual_variance=residual_variance,
    )
