"""Bundled example datasets and their regeneration recipe.

Two CSV files ship with the package, both n = 400 by p = 40 with a
Gaussian design and documented seeds, so every number in them can be
regenerated exactly:

- ``homoscedastic.csv``: unit-variance errors (the null).
- ``model1_hetero.csv``: errors scaled by exp(c.x) with weight 0.5 on
  the first four covariates.
"""

from __future__ import annotations

import csv
import io
from importlib import resources
from pathlib import Path

from .errors import ParseError
from .simulate import Design, HeteroFrac, Model, SimScenario, generate_instance

__all__ = [
    "HOMOSCEDASTIC_SCENARIO",
    "MODEL1_SCENARIO",
    "FIXTURES",
    "fixture_path",
    "render_fixture",
    "regenerate",
]

HOMOSCEDASTIC_SCENARIO = SimScenario(
    n=400,
    ratio=0.1,
    design=Design.GAUSSIAN,
    model=Model.NULL,
    replications=1,
    seed=20260815,
)

MODEL1_SCENARIO = SimScenario(
    n=400,
    ratio=0.1,
    design=Design.GAUSSIAN,
    model=Model.MODEL1,
    hetero_frac=HeteroFrac.TENTH,
    c0=0.5,
    replications=1,
    seed=20260816,
)

FIXTURES = {
    "homoscedastic": ("homoscedastic.csv", HOMOSCEDASTIC_SCENARIO),
    "model1": ("model1_hetero.csv", MODEL1_SCENARIO),
}


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled fixture (by short name or filename)."""
    for short, (filename, _) in FIXTURES.items():
        if name in (short, filename):
            return Path(str(resources.files("hetro") / "data" / filename))
    raise ParseError(
        f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}"
    )


def render_fixture(name: str) -> str:
    """CSV text of a fixture, regenerated from its scenario and seed."""
    if name not in FIXTURES:
        raise ParseError(
            f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}"
        )
    _, scenario = FIXTURES[name]
    data = generate_instance(scenario, 0)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{j + 1}" for j in range(data.p)] + ["y"])
    for i in range(data.n):
        writer.writerow(
            [repr(float(v)) for v in data.x[i]] + [repr(float(data.y[i]))]
        )
    return buf.getvalue()


def regenerate(target_dir: str | Path | None = None) -> list[Path]:
    """Rewrite the bundled CSVs from their scenarios; returns the paths."""
    if target_dir is None:
        target_dir = Path(str(resources.files("hetro") / "data"))
    target_dir = Path(target_dir)
    target_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (filename, _) in FIXTURES.items():
        path = target_dir / filename
        path.write_text(render_fixture(name))
        written.append(path)
    return written
