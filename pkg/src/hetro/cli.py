"""Command-line interface.

Three subcommands:

- ``hetro test``: run heteroscedasticity diagnostics on a CSV dataset.
- ``hetro simulate``: run a built-in or custom scenario table and
  write summary CSV/JSON plus an SVG plot.
- ``hetro verify-moments``: Monte Carlo check of the closed-form
  moment table for a given frame size.

Exit codes: 0 success; 2 data or shape problems (unreadable or
malformed input, rank-deficient designs, degenerate residuals,
k > n); 3 the only requested diagnostic is not applicable; 4 usage
errors (bad flags, unknown tables); 5 internal errors, including
moment identities failing their verification bands.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fixtures
from .diagnostics import TestResult, alrt_test, bp_test, cvt_test, white_test
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
from .haar import verify_identities
from .regression import Dataset, fit_ols
from .simulate import (
    BUILTIN_TABLES,
    Design,
    Model,
    SimReport,
    TableSpec,
    builtin_table,
    parse_grid,
    run_table,
)

__all__ = ["RunConfig", "main", "cmd_test", "cmd_simulate", "cmd_verify_moments"]

EXIT_OK = 0
EXIT_DATA = 2
EXIT_NOT_APPLICABLE = 3
EXIT_USAGE = 4
EXIT_INTERNAL = 5

_TEST_FUNCS = {
    "alrt": lambda data, fit, alpha: alrt_test(fit, alpha),
    "cvt": lambda data, fit, alpha: cvt_test(fit, alpha),
    "bp": bp_test,
    "white": white_test,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures routed to exit code 4."""

    def error(self, message):
        raise _UsageError(message)


@dataclass
class RunConfig:
    """Parsed command-line options for one invocation."""

    command: str
    # test
    input: str | None = None
    response: str | None = None
    covariates: str | None = None
    tests: str = "alrt,cvt,bp,white"
    alpha: float = 0.05
    intercept: bool = False
    # simulate
    table: str | None = None
    replications: int = 2000
    out_dir: str = "hetro-results"
    resume: bool = False
    no_plot: bool = False
    # verify-moments
    n: int | None = None
    k: int | None = None
    samples: int = 1_000_000
    # shared
    seed: int = 0
    threads: int | None = None
    format: str = "table"
    output: str | None = None


def _build_parser() -> _Parser:
    parser = _Parser(prog="hetro", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run diagnostics on a CSV dataset")
    p_test.add_argument(
        "--input",
        required=True,
        help="CSV file; numeric columns, optional header row "
        "(bundled fixtures: fixture:homoscedastic, fixture:model1)",
    )
    p_test.add_argument(
        "--response",
        default=None,
        help="response column name or 0-based index (default: last column)",
    )
    p_test.add_argument(
        "--covariates",
        default=None,
        help="comma-separated covariate names or 0-based indices "
        "(default: all columns except the response)",
    )
    p_test.add_argument(
        "--tests",
        default="alrt,cvt,bp,white",
        help="comma-separated subset of alrt,cvt,bp,white",
    )
    p_test.add_argument("--alpha", type=float, default=0.05, help="test level")
    p_test.add_argument(
        "--intercept",
        action="store_true",
        help="append a constant column to the design (counts toward p; "
        "bp/white auxiliary designs then become rank deficient)",
    )
    p_test.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p_test.add_argument("--output", default=None, help="write results here instead of stdout")

    p_sim = sub.add_parser("simulate", help="run a scenario table")
    p_sim.add_argument(
        "table",
        help=f"built-in table ({', '.join(BUILTIN_TABLES)}) or a grid file path",
    )
    p_sim.add_argument("--reps", type=int, default=2000, dest="replications")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--alpha", type=float, default=0.05)
    p_sim.add_argument("--out-dir", default="hetro-results")
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.add_argument(
        "--resume",
        action="store_true",
        help="reuse finished per-cell checkpoints in --out-dir",
    )
    p_sim.add_argument("--no-plot", action="store_true")

    p_ver = sub.add_parser(
        "verify-moments", help="Monte Carlo check of the exact moment table"
    )
    p_ver.add_argument("--n", type=int, required=True, help="frame rows")
    p_ver.add_argument("--k", type=int, required=True, help="frame columns")
    p_ver.add_argument("--samples", type=int, default=1_000_000)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--threads", type=int, default=None)
    p_ver.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p_ver.add_argument("--output", default=None)
    return parser


def _read_csv(path: str) -> tuple[list[str] | None, np.ndarray]:
    """Read a numeric CSV, sniffing an optional header row.

    Returns the header (or None) and the data as a 2-d float array.
    Decimal separator is the dot; delimiter is the comma.
    """
    if path.startswith("fixture:"):
        path = str(fixtures.fixture_path(path.removeprefix("fixture:")))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    if not rows:
        raise ParseError(f"{path}: no data rows")
    header: list[str] | None = None
    first = rows[0]
    try:
        [float(cell) for cell in first]
    except ValueError:
        header = [cell.strip() for cell in first]
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path}: header but no data rows")
    width = len(rows[0])
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(
                f"{path}: row {i + 1} has {len(row)} fields, expected {width}"
            )
        try:
            data[i] = [float(cell) for cell in row]
        except ValueError as exc:
            raise ParseError(f"{path}: row {i + 1}: {exc}") from exc
    if header is not None and len(header) != width:
        raise ParseError(f"{path}: header has {len(header)} fields, rows have {width}")
    return header, data


def _column_index(spec: str, header: list[str] | None, width: int) -> int:
    spec = spec.strip()
    if header is not None and spec in header:
        return header.index(spec)
    try:
        idx = int(spec)
    except ValueError:
        raise _UsageError(f"unknown column {spec!r}") from None
    if not 0 <= idx < width:
        raise _UsageError(f"column index {idx} out of range (width {width})")
    return idx


def _select_columns(
    config: RunConfig, header: list[str] | None, data: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    width = data.shape[1]
    if width < 2:
        raise ParseError("need at least two columns (covariates and response)")
    if config.response is None:
        y_idx = width - 1
    else:
        y_idx = _column_index(config.response, header, width)
    if config.covariates is None:
        x_idx = [i for i in range(width) if i != y_idx]
    else:
        x_idx = [
            _column_index(spec, header, width)
            for spec in config.covariates.split(",")
            if spec.strip()
        ]
        if not x_idx:
            raise _UsageError("--covariates selected no columns")
        if y_idx in x_idx:
            raise _UsageError("response column also selected as covariate")
    x = data[:, x_idx]
    if config.intercept:
        x = np.column_stack([x, np.ones(data.shape[0])])
    return x, data[:, y_idx]


def _parse_test_names(raw: str) -> list[str]:
    names = [name.strip().lower() for name in raw.split(",") if name.strip()]
    if not names:
        raise _UsageError("--tests selected no tests")
    for name in names:
        if name not in _TEST_FUNCS:
            raise _UsageError(f"unknown test {name!r} (choose from alrt,cvt,bp,white)")
    return names


def _format_float(x: float | None) -> str:
    return "" if x is None else f"{x:.6g}"


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(output).write_text(text)


def cmd_test(config: RunConfig) -> int:
    """Run the requested diagnostics on a CSV dataset."""
    if not 0.0 < config.alpha < 1.0:
        raise _UsageError(f"--alpha must be in (0, 1), got {config.alpha}")
    names = _parse_test_names(config.tests)
    header, raw = _read_csv(config.input)
    x, y = _select_columns(config, header, raw)
    data = Dataset(x, y)
    fit = fit_ols(data)

    results: list[tuple[str, TestResult | None, str | None]] = []
    for name in names:
        try:
            res = _TEST_FUNCS[name](data, fit, config.alpha)
            results.append((name, res, None))
        except NotApplicable as exc:
            results.append((name, None, str(exc)))

    ran = [entry for entry in results if entry[1] is not None]
    if config.format == "json":
        payload = {
            "schema_version": 1,
            "n": data.n,
            "p": data.p,
            "k": fit.k,
            "alpha": config.alpha,
            "results": [
                {
                    "method": name,
                    "applicable": res is not None,
                    "statistic": res.statistic if res else None,
                    "standardized": res.standardized if res else None,
                    "p_value": res.p_value if res else None,
                    "reject": res.reject if res else None,
                    "reason": reason,
                }
                for name, res, reason in results
            ],
        }
        _emit(json.dumps(payload, indent=2), config.output)
    elif config.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["method", "statistic", "standardized", "p_value", "reject", "applicable"]
        )
        for name, res, _ in results:
            if res is None:
                writer.writerow([name, "", "", "", "", "false"])
            else:
                writer.writerow(
                    [
                        name,
                        repr(res.statistic),
                        repr(res.standardized),
                        repr(res.p_value),
                        "true" if res.reject else "false",
                        "true",
                    ]
                )
        _emit(buf.getvalue(), config.output)
    else:
        lines = [
            f"n={data.n}  p={data.p}  k={fit.k}  alpha={config.alpha:g}",
            f"{'method':<7} {'statistic':>12} {'standardized':>13} "
            f"{'p_value':>10}  decision",
        ]
        for name, res, reason in results:
            if res is None:
                lines.append(f"{name:<7} {'':>12} {'':>13} {'':>10}  not applicable: {reason}")
            else:
                decision = "reject" if res.reject else "no rejection"
                lines.append(
                    f"{name:<7} {res.statistic:>12.6g} {res.standardized:>13.6g} "
                    f"{res.p_value:>10.4g}  {decision}"
                )
        _emit("\n".join(lines) + "\n", config.output)

    if not ran:
        sys.stderr.write("no requested test was applicable to this dataset\n")
        return EXIT_NOT_APPLICABLE
    return EXIT_OK


def _resolve_table(config: RunConfig) -> TableSpec:
    name = config.table
    if name in BUILTIN_TABLES:
        return builtin_table(
            name,
            replications=config.replications,
            seed=config.seed,
            alpha=config.alpha,
        )
    path = Path(name)
    if path.exists():
        return parse_grid(
            path.read_text(),
            name=path.stem,
            replications=config.replications,
            seed=config.seed,
            alpha=config.alpha,
        )
    raise UnknownTable(
        f"{name!r} is neither a built-in table ({', '.join(BUILTIN_TABLES)}) "
        f"nor an existing grid file"
    )


def _scenario_fields(report: SimReport) -> dict:
    s = report.scenario
    return {
        "n": s.n,
        "ratio": s.ratio,
        "p": s.p,
        "p0": s.p0 if s.model.value.startswith("model") else "",
        "k": s.k,
        "design": s.design.value,
        "model": s.model.value,
        "hetero_frac": s.hetero_frac.value,
        "c0": s.c0,
        "replications": s.replications,
        "seed": s.seed,
        "feasible": "true" if report.feasible else "false",
    }


def _summary_csv(reports: list[SimReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    head = [
        "cell",
        "n",
        "ratio",
        "p",
        "p0",
        "k",
        "design",
        "model",
        "hetero_frac",
        "c0",
        "replications",
        "seed",
        "feasible",
        "test",
        "applicable",
        "rejections",
        "rate",
        "mc_se",
    ]
    writer.writerow(head)
    for idx, report in enumerate(reports):
        meta = _scenario_fields(report)
        for test in ("alrt", "cvt", "bp", "white"):
            out = report.outcomes.get(test)
            if not report.feasible or out is None:
                writer.writerow(
                    [idx, *meta.values(), test, "", "", "", ""]
                )
            elif not out.applicable:
                writer.writerow(
                    [idx, *meta.values(), test, "false", "", "", ""]
                )
            else:
                writer.writerow(
                    [
                        idx,
                        *meta.values(),
                        test,
                        "true",
                        out.rejections,
                        repr(out.rate),
                        repr(out.mc_se),
                    ]
                )
    return buf.getvalue()


def _plot_groups(reports: list[SimReport]):
    """Group reports into (label, x_label, points) for plotting.

    Cells are grouped by everything except the ratio; if no group then
    has two or more points, grouping falls back to varying c0 (the
    fixed-design tables).
    """
    def by_ratio(r):
        s = r.scenario
        return (s.design.value, s.model.value, s.hetero_frac.value, s.n, s.c0)

    def by_c0(r):
        s = r.scenario
        return (s.design.value, s.model.value, s.hetero_frac.value, s.n, s.ratio)

    for keyfn, x_label, x_of in (
        (by_ratio, "p/n", lambda s: s.ratio),
        (by_c0, "c0", lambda s: s.c0),
    ):
        groups: dict[tuple, list[SimReport]] = {}
        for report in reports:
            groups.setdefault(keyfn(report), []).append(report)
        if any(len(cells) > 1 for cells in groups.values()):
            out = []
            for key, cells in groups.items():
                s = cells[0].scenario
                label = f"{s.design.value}, {s.model.value}, n={s.n}"
                if s.model.value.startswith("model"):
                    share = "p0=1" if s.hetero_frac.value == "one" else "p0=10%"
                    label += f", {share}"
                if x_label != "c0":
                    label += f", c0={s.c0:g}"
                points = sorted(
                    ((x_of(c.scenario), c) for c in cells), key=lambda t: t[0]
                )
                out.append((label, x_label, points))
            return out
    return []


def _write_plot(path: Path, reports: list[SimReport], alpha: float) -> bool:
    groups = _plot_groups(reports)
    if not groups:
        return False
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ncols = min(3, len(groups))
    nrows = math.ceil(len(groups) / ncols)
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(4.4 * ncols, 3.4 * nrows), squeeze=False
    )
    for ax in axes.flat[len(groups):]:
        ax.set_visible(False)
    for ax, (label, x_label, points) in zip(axes.flat, groups):
        xs = [x for x, _ in points]
        for test in ("alrt", "cvt", "bp", "white"):
            ys = []
            for _, report in points:
                out = report.outcomes.get(test)
                if report.feasible and out is not None and out.rate is not None:
                    ys.append(out.rate)
                else:
                    ys.append(math.nan)
            if all(math.isnan(v) for v in ys):
                continue
            ax.plot(xs, ys, marker="o", markersize=3, label=test)
        ax.axhline(alpha, color="gray", linestyle=":", linewidth=1)
        ax.set_title(label, fontsize=9)
        ax.set_xlabel(x_label)
        ax.set_ylabel("rejection rate")
        ax.set_ylim(-0.02, 1.02)
    handles, labels = axes.flat[0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="lower right", ncol=4, fontsize=9)
    fig.tight_layout(rect=(0, 0.04, 1, 1))
    fig.savefig(path, format="svg")
    plt.close(fig)
    return True


def cmd_simulate(config: RunConfig) -> int:
    """Run a scenario table and write summaries under --out-dir."""
    if config.replications < 1:
        raise _UsageError(f"--reps must be >= 1, got {config.replications}")
    if not 0.0 < config.alpha < 1.0:
        raise _UsageError(f"--alpha must be in (0, 1), got {config.alpha}")
    table = _resolve_table(config)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(idx: int, total: int, report: SimReport) -> None:
        s = report.scenario
        if not report.feasible:
            detail = "infeasible"
        else:
            parts = []
            for test, out in report.outcomes.items():
                if out.applicable:
                    parts.append(f"{test}={out.rate:.4f}")
            detail = "  ".join(parts)
        sys.stderr.write(
            f"[{idx + 1}/{total}] n={s.n} ratio={s.ratio:g} "
            f"design={s.design.value} model={s.model.value}  {detail}\n"
        )

    reports = run_table(
        table,
        threads=config.threads,
        out_dir=out_dir,
        resume=config.resume,
        progress=progress,
    )
    summary = {
        "schema_version": 1,
        "table": table.name,
        "alpha": config.alpha,
        "replications": config.replications,
        "reports": [report.to_dict() for report in reports],
    }
    (out_dir / f"{table.name}_summary.json").write_text(
        json.dumps(summary, indent=2)
    )
    (out_dir / f"{table.name}_summary.csv").write_text(_summary_csv(reports))
    if not config.no_plot:
        wrote = _write_plot(out_dir / f"{table.name}.svg", reports, config.alpha)
        if not wrote:
            sys.stderr.write("no multi-point cells to plot; skipping SVG\n")
    sys.stderr.write(f"wrote {table.name} summaries to {out_dir}\n")
    return EXIT_OK


def cmd_verify_moments(config: RunConfig) -> int:
    """Verify the closed-form moment table by Monte Carlo."""
    if config.samples < 1:
        raise _UsageError(f"--samples must be >= 1, got {config.samples}")
    if config.samples < 10_000:
        sys.stderr.write(
            f"warning: {config.samples} samples give wide standard errors; "
            f"bands are designed for >= 10000\n"
        )
    report = verify_identities(
        config.n,
        config.k,
        samples=config.samples,
        rng_seed=config.seed,
        threads=config.threads,
    )
    if config.format == "json":
        _emit(report.to_json(), config.output)
    elif config.format == "csv":
        _emit(report.to_csv(), config.output)
    else:
        lines = [
            f"n={report.n}  k={report.k}  samples={report.samples}  "
            f"seed={report.rng_seed}",
            f"{'identity':<34} {'exact':>12} {'estimate':>12} {'se':>10} "
            f"{'z':>8}  status",
        ]
        for row in report.rows:
            if row.skipped:
                lines.append(
                    f"{row.name:<34} {'':>12} {'':>12} {'':>10} {'':>8}  "
                    f"skipped: {row.skip_reason}"
                )
                continue
            status = "ok" if row.passed else f"FAIL (band {row.band:g} SE)"
            lines.append(
                f"{row.name:<34} {row.exact:>12.5e} {row.estimate:>12.5e} "
                f"{row.se:>10.3e} {row.z:>8.2f}  {status}"
            )
        lines.append(
            f"{report.checked} identities checked, "
            f"{len(report.rows) - report.checked} skipped"
        )
        _emit("\n".join(lines) + "\n", config.output)
    if not report.all_passed:
        sys.stderr.write("moment verification FAILED: estimates left their bands\n")
        return EXIT_INTERNAL
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        config = RunConfig(**vars(ns))
        if config.command == "test":
            return cmd_test(config)
        if config.command == "simulate":
            return cmd_simulate(config)
        return cmd_verify_moments(config)
    except _UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except UnknownTable as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (
        ParseError,
        DimensionMismatch,
        RankDeficient,
        DegenerateResidual,
        InvalidShape,
        InvalidDof,
        InfeasibleScenario,
        ValueError,
    ) as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return EXIT_DATA
    except HetroError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        sys.stderr.write(f"internal error: {exc!r}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
