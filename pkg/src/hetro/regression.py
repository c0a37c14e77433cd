"""Ordinary least squares by QR, and residual summaries.

The fit never forms normal equations: the design is factored once by
a reduced QR decomposition and everything else (coefficients, fitted
values, residuals) is derived from the factors. No intercept is ever
added implicitly; the design matrix is used exactly as given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateResidual, DimensionMismatch, RankDeficient

__all__ = ["Dataset", "RegressionFit", "fit_ols", "residual_moments"]

# Residuals smaller than this multiple of the residual RMS scale make
# log/ratio statistics meaningless.
_DEGENERATE_REL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Dataset:
    """A regression problem: an n-by-p design and an n-vector response.

    Parameters
    ----------
    x : array_like
        Design matrix of shape (n, p) with n > p >= 1. Used as given;
        add an intercept column yourself if you want one.
    y : array_like
        Response vector of length n.

    Raises
    ------
    DimensionMismatch
        If ``x`` is not 2-d, ``y`` is not 1-d, or their lengths differ.
    ValueError
        If n <= p, p < 1, or any entry is not finite.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionMismatch(f"design must be 2-d, got ndim={x.ndim}")
        if y.ndim != 1:
            raise DimensionMismatch(f"response must be 1-d, got ndim={y.ndim}")
        if y.shape[0] != x.shape[0]:
            raise DimensionMismatch(
                f"design has {x.shape[0]} rows but response has {y.shape[0]}"
            )
        n, p = x.shape
        if p < 1:
            raise ValueError(f"design needs at least one column, got p={p}")
        if n <= p:
            raise ValueError(f"requires n > p, got n={n}, p={p}")
        if not np.isfinite(x).all() or not np.isfinite(y).all():
            raise ValueError("design and response must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True, eq=False)
class RegressionFit:
    """Result of an OLS fit.

    Attributes
    ----------
    beta_hat : numpy.ndarray
        Coefficient vector of length p.
    residuals : numpy.ndarray
        Residual vector of length n, orthogonal to the design columns.
    k : int
        Residual degrees of freedom, n - p.
    rss : float
        Residual sum of squares.
    """

    beta_hat: np.ndarray
    residuals: np.ndarray
    k: int
    rss: float

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    @property
    def p(self) -> int:
        return self.beta_hat.shape[0]


def fit_ols(data: Dataset) -> RegressionFit:
    """Fit ordinary least squares by reduced QR.

    Parameters
    ----------
    data : Dataset
        The regression problem.

    Returns
    -------
    RegressionFit

    Raises
    ------
    RankDeficient
        If any diagonal entry of R falls at or below
        ``n * eps * max|diag R|``, the usual scaled tolerance for a
        numerically rank-deficient design.
    """
    q, r = np.linalg.qr(data.x)
    diag = np.abs(np.diagonal(r))
    tol = data.n * np.finfo(np.float64).eps * float(diag.max())
    if float(diag.min()) <= tol:
        raise RankDeficient(
            f"design is numerically rank deficient (min |R_jj| = "
            f"{float(diag.min()):.3e}, tolerance = {tol:.3e})"
        )
    qty = q.T @ data.y
    beta_hat = np.linalg.solve(r, qty)
    residuals = data.y - q @ qty
    rss = float(residuals @ residuals)
    return RegressionFit(
        beta_hat=beta_hat, residuals=residuals, k=data.n - data.p, rss=rss
    )


def residual_moments(fit: RegressionFit) -> tuple[float, float, float]:
    """Sum of squared, log-squared, and fourth-power residuals.

    Returns
    -------
    tuple of float
        ``(sum_sq, sum_log_sq, sum_fourth)`` where ``sum_sq`` is
        sum of residual^2, ``sum_log_sq`` is sum of log(residual^2),
        and ``sum_fourth`` is sum of residual^4.

    Raises
    ------
    DegenerateResidual
        If any |residual| falls below 1e-12 times the residual RMS
        scale, where the log term is numerically meaningless.
    """
    res = fit.residuals
    n = res.shape[0]
    sq = res * res
    sum_sq = float(sq.sum())
    scale = math.sqrt(sum_sq / n + np.finfo(np.float64).eps)
    threshold = _DEGENERATE_REL_TOL * scale
    smallest = float(np.abs(res).min())
    if smallest < threshold:
        raise DegenerateResidual(
            f"smallest |residual| {smallest:.3e} is below the degeneracy "
            f"threshold {threshold:.3e}"
        )
    sum_log_sq = float(np.log(sq).sum())
    sum_fourth = float((sq * sq).sum())
    return sum_sq, sum_log_sq, sum_fourth
