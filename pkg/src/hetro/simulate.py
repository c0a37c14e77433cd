"""Monte Carlo harness for size and power of the diagnostics.

A scenario fixes a design distribution, an error-variance model, and
problem sizes; the harness replays it over independent replications
and tallies rejection rates for every applicable test. Replication
streams are counter-based (seed plus replication index), so results
are bit-identical for a given scenario whatever the thread count, and
any single replication can be regenerated in isolation.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ._util import derive_seed, philox_stream, resolve_threads
from .diagnostics import alrt_test, bp_test, cvt_test, white_test
from .errors import InfeasibleScenario, ParseError, UnknownTable
from .regression import Dataset, fit_ols

__all__ = [
    "Design",
    "Model",
    "HeteroFrac",
    "SimScenario",
    "TestOutcome",
    "SimReport",
    "TableSpec",
    "round_half_down",
    "generate_instance",
    "run_scenario",
    "run_table",
    "builtin_table",
    "parse_grid",
    "BUILTIN_TABLES",
]

TEST_NAMES = ("alrt", "cvt", "bp", "white")

RATIOS = (0.05, 0.1, 0.3, 0.5, 0.7, 0.9)


class Design(str, enum.Enum):
    """Distribution of the design-matrix entries."""

    GAUSSIAN = "gaussian"
    GAMMA = "gamma"  # shape 2, rate 2 (mean 1)
    UNIFORM = "uniform"  # U(0, 1)
    GRID = "grid"  # intercept plus equispaced points on [0, 1]


class Model(str, enum.Enum):
    """Error-variance model.

    ``NULL`` is homoscedastic. ``MODEL1``-``MODEL3`` multiply the
    error by exp(c.x), (1 + c.sin(10 x))^2, and (1 + c.x)^2, where c
    puts weight ``c0`` on the first ``p0`` covariates. ``S1``-``S3``
    are fixed-design curves on the grid: y = g(x) + 0.25 s(x) e with
    (g, s) = (1 + sin x, exp(c0 x)), (1 + x, (1 + c0 sin(10 x))^2),
    and (1 + x, (1 + c0 x)^2).
    """

    NULL = "null"
    MODEL1 = "model1"
    MODEL2 = "model2"
    MODEL3 = "model3"
    S1 = "s1"
    S2 = "s2"
    S3 = "s3"


_S_MODELS = (Model.S1, Model.S2, Model.S3)
_C_MODELS = (Model.MODEL1, Model.MODEL2, Model.MODEL3)


class HeteroFrac(str, enum.Enum):
    """How many leading covariates carry heteroscedasticity weight."""

    ONE = "one"  # p0 = 1
    TENTH = "tenth"  # p0 = ceil(0.1 p)


def round_half_down(x: float) -> int:
    """Round to the nearest integer, ties toward zero (for x >= 0)."""
    return math.ceil(x - 0.5)


@dataclass(frozen=True)
class SimScenario:
    """One simulation cell.

    Attributes
    ----------
    n : int
        Sample size.
    ratio : float
        Target p/n in (0, 1); the dimension is
        ``round_half_down(ratio * n)``. Grid-design scenarios always
        use p = 2 (intercept plus the grid column).
    design : Design
    model : Model
    hetero_frac : HeteroFrac
        Ignored by NULL and the S models.
    c0 : float
        Heteroscedasticity strength.
    beta0 : float
        First regression coefficient (the rest are zero). All four
        statistics are exactly invariant to it.
    replications, alpha, seed
        Monte Carlo size, test level, and stream seed.
    """

    n: int
    ratio: float
    design: Design = Design.GAUSSIAN
    model: Model = Model.NULL
    hetero_frac: HeteroFrac = HeteroFrac.ONE
    c0: float = 0.5
    beta0: float = 0.0
    replications: int = 2000
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 3:
            raise ValueError(f"n must be at least 3, got {self.n}")
        if not 0.0 < self.ratio < 1.0:
            raise ValueError(f"ratio must be in (0, 1), got {self.ratio}")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.model in _S_MODELS and self.design is not Design.GRID:
            raise ValueError(f"{self.model.value} requires the grid design")
        p = self.p
        if p < 1:
            raise ValueError(
                f"ratio {self.ratio} at n={self.n} resolves to p=0 covariates"
            )
        if p >= self.n:
            raise ValueError(
                f"ratio {self.ratio} at n={self.n} resolves to p={p} >= n"
            )

    @property
    def p(self) -> int:
        if self.design is Design.GRID:
            return 2
        return round_half_down(self.ratio * self.n)

    @property
    def p0(self) -> int:
        if self.hetero_frac is HeteroFrac.ONE:
            return 1
        return math.ceil(0.1 * self.p)

    @property
    def k(self) -> int:
        return self.n - self.p

    def require_feasible(self) -> None:
        """Raise InfeasibleScenario for unusable derived parameters.

        A TENTH cell whose 10% share rounds up to fewer than two
        covariates would duplicate the corresponding ONE cell, so it
        is ruled out rather than silently re-run.
        """
        if self.model in _C_MODELS and self.hetero_frac is HeteroFrac.TENTH:
            if self.p0 < 2:
                raise InfeasibleScenario(
                    f"10% heteroscedastic share needs ceil(0.1 p) >= 2, "
                    f"got p={self.p}"
                )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "ratio": self.ratio,
            "design": self.design.value,
            "model": self.model.value,
            "hetero_frac": self.hetero_frac.value,
            "c0": self.c0,
            "beta0": self.beta0,
            "replications": self.replications,
            "alpha": self.alpha,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(payload: dict) -> "SimScenario":
        return SimScenario(
            n=int(payload["n"]),
            ratio=float(payload["ratio"]),
            design=Design(payload["design"]),
            model=Model(payload["model"]),
            hetero_frac=HeteroFrac(payload["hetero_frac"]),
            c0=float(payload["c0"]),
            beta0=float(payload["beta0"]),
            replications=int(payload["replications"]),
            alpha=float(payload["alpha"]),
            seed=int(payload["seed"]),
        )


def generate_instance(scenario: SimScenario, rep_index: int) -> Dataset:
    """Generate the dataset for one replication.

    The stream is keyed by (scenario.seed, rep_index): the design is
    drawn first, then the error vector, so scenarios differing only in
    the variance model share designs and errors replication by
    replication.
    """
    scenario.require_feasible()
    if rep_index < 0:
        raise ValueError(f"rep_index must be >= 0, got {rep_index}")
    rng = philox_stream(scenario.seed, rep_index)
    n, p = scenario.n, scenario.p

    if scenario.design is Design.GAUSSIAN:
        x = rng.standard_normal((n, p))
    elif scenario.design is Design.GAMMA:
        x = rng.gamma(2.0, 0.5, size=(n, p))
    elif scenario.design is Design.UNIFORM:
        x = rng.random((n, p))
    else:
        t = np.arange(n, dtype=np.float64) / (n - 1)
        x = np.column_stack([np.ones(n), t])
    eps = rng.standard_normal(n)

    model = scenario.model
    if model in _S_MODELS:
        t = x[:, 1]
        c0 = scenario.c0
        if model is Model.S1:
            mean = 1.0 + np.sin(t)
            scale = np.exp(c0 * t)
        elif model is Model.S2:
            mean = 1.0 + t
            scale = (1.0 + c0 * np.sin(10.0 * t)) ** 2
        else:
            mean = 1.0 + t
            scale = (1.0 + c0 * t) ** 2
        y = mean + 0.25 * scale * eps
        return Dataset(x, y)

    beta = np.zeros(p)
    beta[0] = scenario.beta0
    mean = x @ beta
    if model is Model.NULL:
        return Dataset(x, mean + eps)
    c = np.zeros(p)
    c[: scenario.p0] = scenario.c0
    drive = x @ c if model is not Model.MODEL2 else np.sin(10.0 * x) @ c
    if model is Model.MODEL1:
        mult = np.exp(drive)
    else:
        mult = (1.0 + drive) ** 2
    return Dataset(x, mean + mult * eps)


@dataclass(frozen=True)
class TestOutcome:
    """Tally for one diagnostic in one scenario."""

    applicable: bool
    rejections: int = 0
    rate: float | None = None
    mc_se: float | None = None


@dataclass(frozen=True)
class SimReport:
    """Results of one scenario (or an infeasible-cell marker).

    ``stats`` holds per-replication standardized statistics when the
    scenario ran with ``collect_stats=True``; it is not serialized.
    """

    scenario: SimScenario
    feasible: bool
    outcomes: dict[str, TestOutcome] = field(default_factory=dict)
    stats: dict[str, np.ndarray] | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "scenario": self.scenario.to_dict(),
            "feasible": self.feasible,
            "outcomes": {
                name: {
                    "applicable": out.applicable,
                    "rejections": out.rejections,
                    "rate": out.rate,
                    "mc_se": out.mc_se,
                }
                for name, out in self.outcomes.items()
            },
        }

    @staticmethod
    def from_dict(payload: dict) -> "SimReport":
        outcomes = {
            name: TestOutcome(
                applicable=entry["applicable"],
                rejections=entry["rejections"],
                rate=entry["rate"],
                mc_se=entry["mc_se"],
            )
            for name, entry in payload["outcomes"].items()
        }
        return SimReport(
            scenario=SimScenario.from_dict(payload["scenario"]),
            feasible=payload["feasible"],
            outcomes=outcomes,
        )


def _applicability(scenario: SimScenario) -> dict[str, bool]:
    n, p = scenario.n, scenario.p
    aux_ok = scenario.design is not Design.GRID  # grid includes an intercept
    return {
        "alrt": True,
        "cvt": True,
        "bp": aux_ok and n > p + 1,
        "white": aux_ok and p * (p + 1) // 2 < n - 1,
    }


def run_scenario(
    scenario: SimScenario,
    *,
    threads: int | None = None,
    collect_stats: bool = False,
) -> SimReport:
    """Run every replication of one scenario and tally rejections.

    Parameters
    ----------
    scenario : SimScenario
    threads : int, optional
        Worker threads (default: CPU count, capped by HETRO_THREADS).
        The tallies do not depend on this value.
    collect_stats : bool
        Also collect each applicable test's per-replication
        standardized statistic, for distributional diagnostics.

    Raises
    ------
    InfeasibleScenario
        If the scenario's derived parameters are unusable.
    """
    scenario.require_feasible()
    applicable = _applicability(scenario)
    alpha = scenario.alpha
    reps = scenario.replications

    def run_rep(rep: int) -> dict[str, tuple[bool, float]]:
        data = generate_instance(scenario, rep)
        fit = fit_ols(data)
        out = {}
        res = alrt_test(fit, alpha)
        out["alrt"] = (res.reject, res.standardized)
        res = cvt_test(fit, alpha)
        out["cvt"] = (res.reject, res.standardized)
        if applicable["bp"]:
            res = bp_test(data, fit, alpha)
            out["bp"] = (res.reject, res.standardized)
        if applicable["white"]:
            res = white_test(data, fit, alpha)
            out["white"] = (res.reject, res.standardized)
        return out

    workers = resolve_threads(threads)
    if workers > 1 and reps > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rep_results = list(pool.map(run_rep, range(reps)))
    else:
        rep_results = [run_rep(rep) for rep in range(reps)]

    outcomes: dict[str, TestOutcome] = {}
    stats: dict[str, np.ndarray] = {}
    for name in TEST_NAMES:
        if not applicable[name]:
            outcomes[name] = TestOutcome(applicable=False)
            continue
        rejections = sum(1 for r in rep_results if r[name][0])
        rate = rejections / reps
        mc_se = math.sqrt(rate * (1.0 - rate) / reps)
        outcomes[name] = TestOutcome(
            applicable=True, rejections=rejections, rate=rate, mc_se=mc_se
        )
        if collect_stats:
            stats[name] = np.array([r[name][1] for r in rep_results])
    return SimReport(
        scenario=scenario,
        feasible=True,
        outcomes=outcomes,
        stats=stats if collect_stats else None,
    )


@dataclass(frozen=True)
class TableSpec:
    """A named, ordered collection of scenarios."""

    name: str
    scenarios: tuple[SimScenario, ...]


BUILTIN_TABLES = (
    "table1",
    "table2",
    "table3",
    "table4",
    "table5",
    "table6",
    "table7",
)


def builtin_table(
    name: str,
    *,
    replications: int = 2000,
    seed: int = 0,
    alpha: float = 0.05,
) -> TableSpec:
    """One of the built-in scenario grids.

    - table1: null rejection rates, Gaussian design,
      n in {100, 500, 1000} by six p/n ratios.
    - table2/3/4: power under models 1/2/3 with c0 = 0.5, for the
      single-covariate and 10%-of-covariates heteroscedastic shares
      (cells whose 10% share collapses below two covariates are kept
      and marked infeasible).
    - table5: the fixed grid design, settings S1/S2/S3 with
      c0 in {0, 0.5, 1} and n in {50, 25}.
    - table6: null rejection rates at n = 500 under gamma and uniform
      designs.
    - table7: power at n = 500, 10% share, models 1-3 under gamma and
      uniform designs.

    Each cell gets its own stream seed derived from ``seed`` and the
    cell's position, so cells can be re-run or resumed independently.

    Raises
    ------
    UnknownTable
        If ``name`` is not one of the built-ins.
    """
    cells: list[dict] = []
    if name == "table1":
        for n in (100, 500, 1000):
            for ratio in RATIOS:
                cells.append({"n": n, "ratio": ratio})
    elif name in ("table2", "table3", "table4"):
        model = {
            "table2": Model.MODEL1,
            "table3": Model.MODEL2,
            "table4": Model.MODEL3,
        }[name]
        for frac in (HeteroFrac.ONE, HeteroFrac.TENTH):
            for n in (100, 500, 1000):
                for ratio in RATIOS:
                    cells.append(
                        {
                            "n": n,
                            "ratio": ratio,
                            "model": model,
                            "hetero_frac": frac,
                            "c0": 0.5,
                        }
                    )
    elif name == "table5":
        for model in _S_MODELS:
            for c0 in (0.0, 0.5, 1.0):
                for n in (50, 25):
                    cells.append(
                        {
                            "n": n,
                            "ratio": 2.0 / n,
                            "design": Design.GRID,
                            "model": model,
                            "c0": c0,
                        }
                    )
    elif name == "table6":
        for design in (Design.GAMMA, Design.UNIFORM):
            for ratio in RATIOS:
                cells.append({"n": 500, "ratio": ratio, "design": design})
    elif name == "table7":
        for design in (Design.GAMMA, Design.UNIFORM):
            for model in _C_MODELS:
                for ratio in RATIOS:
                    cells.append(
                        {
                            "n": 500,
                            "ratio": ratio,
                            "design": design,
                            "model": model,
                            "hetero_frac": HeteroFrac.TENTH,
                            "c0": 0.5,
                        }
                    )
    else:
        raise UnknownTable(
            f"unknown table {name!r}; built-ins are {', '.join(BUILTIN_TABLES)}"
        )
    scenarios = tuple(
        SimScenario(
            replications=replications,
            alpha=alpha,
            seed=derive_seed(seed, idx),
            **cell,
        )
        for idx, cell in enumerate(cells)
    )
    return TableSpec(name=name, scenarios=scenarios)


_GRID_KEYS = {
    "n": int,
    "ratio": float,
    "design": Design,
    "model": Model,
    "hetero_frac": HeteroFrac,
    "c0": float,
    "beta0": float,
    "replications": int,
    "alpha": float,
    "seed": int,
}


def parse_grid(
    text: str,
    *,
    name: str = "custom",
    replications: int = 2000,
    seed: int = 0,
    alpha: float = 0.05,
) -> TableSpec:
    """Parse a custom scenario grid from declarative text.

    One scenario per block, blocks separated by blank lines, each line
    a ``key = value`` pair; ``#`` starts a comment. Keys are the
    SimScenario fields (``n``, ``ratio``, ``design``, ``model``,
    ``hetero_frac``, ``c0``, ``beta0``, ``replications``, ``alpha``,
    ``seed``). ``n`` and ``ratio`` are required per block; the rest
    default as in SimScenario, with replications/alpha defaults taken
    from the keyword arguments and per-cell seeds derived from
    ``seed`` unless given explicitly.

    Raises
    ------
    ParseError
        On unknown keys, malformed lines, or invalid values.
    """
    blocks: list[dict] = []
    current: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if current:
                blocks.append(current)
                current = {}
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in _GRID_KEYS:
            raise ParseError(f"line {lineno}: unknown scenario field {key!r}")
        converter = _GRID_KEYS[key]
        try:
            current[key] = converter(value)
        except (ValueError, KeyError) as exc:
            raise ParseError(
                f"line {lineno}: bad value {value!r} for {key!r}: {exc}"
            ) from exc
    if current:
        blocks.append(current)

    scenarios = []
    for idx, block in enumerate(blocks):
        if "n" not in block or "ratio" not in block:
            raise ParseError(f"scenario block {idx + 1}: 'n' and 'ratio' are required")
        block.setdefault("replications", replications)
        block.setdefault("alpha", alpha)
        block.setdefault("seed", derive_seed(seed, idx))
        try:
            scenarios.append(SimScenario(**block))
        except ValueError as exc:
            raise ParseError(f"scenario block {idx + 1}: {exc}") from exc
    return TableSpec(name=name, scenarios=tuple(scenarios))


def run_table(
    table: TableSpec,
    *,
    threads: int | None = None,
    out_dir: str | Path | None = None,
    resume: bool = False,
    progress: Callable[[int, int, SimReport], None] | None = None,
) -> list[SimReport]:
    """Run every cell of a table, optionally checkpointing per cell.

    With ``out_dir`` set, each finished cell is written to
    ``<out_dir>/cells/<table>_cell<idx>.json``; with ``resume`` also
    set, cells whose file already exists are loaded instead of re-run,
    so an interrupted table run picks up where it stopped.

    Infeasible cells produce reports with ``feasible=False`` rather
    than raising.
    """
    cell_dir = None
    if out_dir is not None:
        cell_dir = Path(out_dir) / "cells"
        cell_dir.mkdir(parents=True, exist_ok=True)
    reports: list[SimReport] = []
    total = len(table.scenarios)
    for idx, scenario in enumerate(table.scenarios):
        cell_path = (
            cell_dir / f"{table.name}_cell{idx:03d}.json" if cell_dir else None
        )
        if resume and cell_path is not None and cell_path.exists():
            report = SimReport.from_dict(json.loads(cell_path.read_text()))
        else:
            try:
                report = run_scenario(scenario, threads=threads)
            except InfeasibleScenario:
                report = SimReport(scenario=scenario, feasible=False)
            if cell_path is not None:
                cell_path.write_text(json.dumps(report.to_dict(), indent=2))
        reports.append(report)
        if progress is not None:
            progress(idx, total, report)
    return reports
