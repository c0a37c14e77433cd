"""Dimension-proof heteroscedasticity tests for linear regression.

The package provides two diagnostics (ALRT and CVT) whose null laws do
not depend on the ratio of regression dimension to sample size, the
classic auxiliary-regression tests (BP and White) for comparison, an
exactly-solvable moment oracle for the Haar-frame geometry behind the
null laws, and a Monte Carlo harness for sizing and powering all four
tests.
"""

from .diagnostics import (
    NULL_CONSTANTS,
    Method,
    NullConstants,
    TestResult,
    alrt_statistic,
    alrt_test,
    bp_test,
    cvt_statistic,
    cvt_test,
    white_test,
)
from .distributions import (
    ChiSquare,
    chisq_cdf,
    chisq_sf,
    normal_cdf,
    normal_quantile,
    normal_sf,
)
from .errors import (
    DegenerateResidual,
    DimensionMismatch,
    HetroError,
    InfeasibleScenario,
    InvalidDof,
    InvalidShape,
    NotApplicable,
    ParseError,
    RankDeficient,
    UnknownTable,
)
from .haar import (
    HaarFrame,
    MomentIdentity,
    VerificationReport,
    alrt_null_moments,
    beta_norm_moments,
    cvt_null_moments,
    exact_moment_table,
    log_norm_expansions,
    sample_haar_frame,
    verify_identities,
)
from .regression import Dataset, RegressionFit, fit_ols, residual_moments
from .simulate import (
    Design,
    HeteroFrac,
    Model,
    SimReport,
    SimScenario,
    TableSpec,
    TestOutcome,
    builtin_table,
    generate_instance,
    parse_grid,
    run_scenario,
    run_table,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "HetroError",
    "DimensionMismatch",
    "RankDeficient",
    "DegenerateResidual",
    "NotApplicable",
    "InvalidDof",
    "InvalidShape",
    "InfeasibleScenario",
    "UnknownTable",
    "ParseError",
    # distributions
    "normal_cdf",
    "normal_sf",
    "normal_quantile",
    "chisq_cdf",
    "chisq_sf",
    "ChiSquare",
    # regression
    "Dataset",
    "RegressionFit",
    "fit_ols",
    "residual_moments",
    # diagnostics
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
    # haar oracle
    "HaarFrame",
    "MomentIdentity",
    "VerificationReport",
    "sample_haar_frame",
    "exact_moment_table",
    "beta_norm_moments",
    "alrt_null_moments",
    "cvt_null_moments",
    "log_norm_expansions",
    "verify_identities",
    # simulation
    "Design",
    "Model",
    "HeteroFrac",
    "SimScenario",
    "TestOutcome",
    "SimReport",
    "TableSpec",
    "generate_instance",
    "run_scenario",
    "run_table",
    "builtin_table",
    "parse_grid",
]
