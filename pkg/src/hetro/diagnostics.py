"""Heteroscedasticity diagnostics for linear regression.

Four tests of the null hypothesis that the regression errors share a
single variance:

- ALRT: a likelihood-ratio style statistic comparing the log of the
  mean squared residual to the mean log squared residual. Its null
  distribution is a fixed normal law whatever the ratio p/n, so the
  test survives designs with dimension growing with the sample size.
- CVT: the squared coefficient of variation of the squared residuals,
  again with a dimension-free normal null law.
- BP: the classic score test regressing squared residuals on the
  covariates (studentized form: n R-squared against chi-square(p)).
- WHITE: the same idea on all squares and cross products of the
  covariates, chi-square with p(p+1)/2 degrees of freedom.

ALRT and CVT are one-sided upper-tail tests; both auxiliary-regression
tests are upper-tail chi-square tests.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .distributions import chisq_sf, normal_sf
from .errors import NotApplicable
from .regression import Dataset, RegressionFit, fit_ols, residual_moments

__all__ = [
    "Method",
    "TestResult",
    "NullConstants",
    "NULL_CONSTANTS",
    "alrt_statistic",
    "alrt_test",
    "cvt_statistic",
    "cvt_test",
    "bp_test",
    "white_test",
]


class Method(enum.Enum):
    """Identifies which diagnostic produced a result."""

    ALRT = "alrt"
    CVT = "cvt"
    BP = "bp"
    WHITE = "white"


@dataclass(frozen=True)
class NullConstants:
    """Centering and variance constants for the normal null laws.

    ``sqrt(n) * (T - center) / sqrt(var)`` is asymptotically standard
    normal under the null for the matching statistic.
    """

    euler_gamma: float = float(np.euler_gamma)
    alrt_center: float = math.log(2.0) + float(np.euler_gamma)
    alrt_var: float = math.pi**2 / 2.0 - 2.0
    cvt_center: float = 2.0
    cvt_var: float = 24.0


NULL_CONSTANTS = NullConstants()


@dataclass(frozen=True)
class TestResult:
    """Outcome of one diagnostic on one dataset.

    Attributes
    ----------
    method : Method
        Which test ran.
    statistic : float
        The raw test statistic.
    standardized : float
        The z-value (ALRT, CVT) or chi-square value (BP, WHITE) the
        p-value was computed from.
    p_value : float
        One-sided upper-tail p-value.
    reject : bool
        True when ``p_value < alpha`` (a tie at alpha does not reject).
    n, p, k : int
        Sample size, design columns, and residual degrees of freedom.
    """

    method: Method
    statistic: float
    standardized: float
    p_value: float
    reject: bool
    n: int
    p: int
    k: int


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")


def alrt_statistic(fit: RegressionFit) -> float:
    """Log of the mean squared residual minus the mean log squared residual.

    Nonnegative by Jensen's inequality; tiny negative rounding results
    are clamped to zero.
    """
    sum_sq, sum_log_sq, _ = residual_moments(fit)
    n = fit.n
    value = math.log(sum_sq / n) - sum_log_sq / n
    return max(value, 0.0)


def alrt_test(fit: RegressionFit, alpha: float = 0.05) -> TestResult:
    """One-sided ALRT at level ``alpha``.

    Under homoscedastic Gaussian errors,
    ``sqrt(n) * (T - (log 2 + euler_gamma))`` is asymptotically
    N(0, pi^2/2 - 2) regardless of p/n, and heteroscedasticity
    inflates T, so the test rejects in the upper tail.
    """
    _check_alpha(alpha)
    statistic = alrt_statistic(fit)
    c = NULL_CONSTANTS
    z = math.sqrt(fit.n) * (statistic - c.alrt_center) / math.sqrt(c.alrt_var)
    p_value = normal_sf(z)
    return TestResult(
        method=Method.ALRT,
        statistic=statistic,
        standardized=z,
        p_value=p_value,
        reject=p_value < alpha,
        n=fit.n,
        p=fit.p,
        k=fit.k,
    )


def cvt_statistic(fit: RegressionFit) -> float:
    """Squared coefficient of variation of the squared residuals.

    Computed in the ratio form ``mean(r^4) / mean(r^2)^2 - 1``, which
    equals the mean squared deviation of r^2 around its mean divided
    by that mean squared. Nonnegative by Cauchy-Schwarz; tiny negative
    rounding results are clamped to zero.
    """
    sum_sq, _, sum_fourth = residual_moments(fit)
    n = fit.n
    mean_sq = sum_sq / n
    value = (sum_fourth / n) / (mean_sq * mean_sq) - 1.0
    return max(value, 0.0)


def cvt_test(fit: RegressionFit, alpha: float = 0.05) -> TestResult:
    """One-sided CVT at level ``alpha``.

    Under homoscedastic Gaussian errors, ``sqrt(n) * (T - 2)`` is
    asymptotically N(0, 24) regardless of p/n, and heteroscedasticity
    inflates T, so the test rejects in the upper tail.
    """
    _check_alpha(alpha)
    statistic = cvt_statistic(fit)
    c = NULL_CONSTANTS
    z = math.sqrt(fit.n) * (statistic - c.cvt_center) / math.sqrt(c.cvt_var)
    p_value = normal_sf(z)
    return TestResult(
        method=Method.CVT,
        statistic=statistic,
        standardized=z,
        p_value=p_value,
        reject=p_value < alpha,
        n=fit.n,
        p=fit.p,
        k=fit.k,
    )


def _aux_nr2(aux_x: np.ndarray, response: np.ndarray) -> float:
    """n R-squared from regressing ``response`` on ``aux_x``.

    A constant response (zero total sum of squares) gives R-squared 0.
    """
    n = response.shape[0]
    aux_fit = fit_ols(Dataset(aux_x, response))
    centered = response - response.mean()
    tss = float(centered @ centered)
    if tss == 0.0:
        return 0.0
    r2 = 1.0 - aux_fit.rss / tss
    r2 = min(max(r2, 0.0), 1.0)
    return n * r2


def bp_test(data: Dataset, fit: RegressionFit, alpha: float = 0.05) -> TestResult:
    """Score test of squared residuals on the covariates.

    Regresses the squared residuals on an intercept plus the original
    design and refers n R-squared to chi-square(p). This is the
    studentized (kurtosis-robust) form of the classic variance-score
    diagnostic.

    Raises
    ------
    NotApplicable
        If n <= p + 1, where the auxiliary regression has no residual
        degrees of freedom.
    RankDeficient
        If the auxiliary design is rank deficient, which happens in
        particular when ``data.x`` already contains a constant column.
    """
    _check_alpha(alpha)
    n, p = data.n, data.p
    if n <= p + 1:
        raise NotApplicable(
            f"auxiliary regression needs n > p + 1, got n={n}, p={p}"
        )
    sq = fit.residuals**2
    aux_x = np.column_stack([np.ones(n), data.x])
    statistic = _aux_nr2(aux_x, sq)
    p_value = chisq_sf(statistic, p)
    return TestResult(
        method=Method.BP,
        statistic=statistic,
        standardized=statistic,
        p_value=p_value,
        reject=p_value < alpha,
        n=n,
        p=p,
        k=fit.k,
    )


def white_test(data: Dataset, fit: RegressionFit, alpha: float = 0.05) -> TestResult:
    """Score test of squared residuals on covariate squares and products.

    The auxiliary design holds an intercept plus every product
    ``x_j * x_k`` with j <= k, and n R-squared is referred to
    chi-square with p(p+1)/2 degrees of freedom.

    Raises
    ------
    NotApplicable
        When p(p+1)/2 >= n - 1, where the auxiliary design has at
        least as many columns as rows.
    RankDeficient
        If the auxiliary design is rank deficient (for example when
        covariate products are collinear).
    """
    _check_alpha(alpha)
    n, p = data.n, data.p
    dof = p * (p + 1) // 2
    if dof >= n - 1:
        raise NotApplicable(
            f"auxiliary design would have 1 + p(p+1)/2 = {1 + dof} columns "
            f"for n = {n} rows"
        )
    sq = fit.residuals**2
    j_idx, k_idx = np.triu_indices(p)
    products = data.x[:, j_idx] * data.x[:, k_idx]
    aux_x = np.column_stack([np.ones(n), products])
    statistic = _aux_nr2(aux_x, sq)
    p_value = chisq_sf(statistic, dof)
    return TestResult(
        method=Method.WHITE,
        statistic=statistic,
        standardized=statistic,
        p_value=p_value,
        reject=p_value < alpha,
        n=n,
        p=p,
        k=fit.k,
    )
