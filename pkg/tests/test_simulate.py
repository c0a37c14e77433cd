"""Scenario resolution, instance generation, and the table harness."""

import json
import math

import numpy as np
import pytest

from hetro._util import derive_seed, philox_stream
from hetro.distributions import chisq_sf, normal_sf
from hetro.errors import InfeasibleScenario, ParseError, UnknownTable
from hetro.simulate import (
    BUILTIN_TABLES,
    Design,
    HeteroFrac,
    Model,
    SimReport,
    SimScenario,
    builtin_table,
    generate_instance,
    parse_grid,
    round_half_down,
    run_scenario,
    run_table,
)
from hetro.simulate import TestOutcome as Outcome  # avoid test collection


class TestRounding:
    @pytest.mark.parametrize(
        "x,expected",
        [(2.5, 2), (3.5, 3), (2.51, 3), (0.5, 0), (5.0, 5), (4.49, 4), (4.51, 5)],
    )
    def test_round_half_down(self, x, expected):
        assert round_half_down(x) == expected

    @pytest.mark.parametrize(
        "n,ratio,p",
        [
            (100, 0.05, 5),
            (500, 0.05, 25),
            (1000, 0.05, 50),
            (100, 0.9, 90),
            (100, 0.1, 10),
            (25, 0.3, 7),
        ],
    )
    def test_dimension_resolution(self, n, ratio, p):
        scenario = SimScenario(n=n, ratio=ratio)
        assert scenario.p == p
        assert scenario.k == n - p

    def test_grid_dimension_is_fixed(self):
        scenario = SimScenario(n=50, ratio=0.5, design=Design.GRID)
        assert scenario.p == 2

    @pytest.mark.parametrize(
        "p,p0", [(5, 1), (10, 1), (11, 2), (25, 3), (50, 5), (90, 9)]
    )
    def test_tenth_share(self, p, p0):
        scenario = SimScenario(
            n=200, ratio=p / 200.0, hetero_frac=HeteroFrac.TENTH
        )
        assert scenario.p == p
        assert scenario.p0 == p0

    def test_one_share(self):
        scenario = SimScenario(n=200, ratio=0.5, hetero_frac=HeteroFrac.ONE)
        assert scenario.p0 == 1


class TestScenarioValidation:
    def test_bounds(self):
        with pytest.raises(ValueError):
            SimScenario(n=2, ratio=0.5)
        for ratio in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError):
                SimScenario(n=100, ratio=ratio)
        with pytest.raises(ValueError):
            SimScenario(n=100, ratio=0.5, replications=0)
        with pytest.raises(ValueError):
            SimScenario(n=100, ratio=0.5, alpha=1.0)

    def test_dimension_must_stay_positive_and_below_n(self):
        with pytest.raises(ValueError):
            SimScenario(n=100, ratio=0.004)  # p = 0
        with pytest.raises(ValueError):
            SimScenario(n=3, ratio=0.9)  # p = 3 = n

    def test_s_models_require_grid(self):
        with pytest.raises(ValueError):
            SimScenario(n=50, ratio=0.1, model=Model.S1)
        SimScenario(n=50, ratio=0.1, model=Model.S1, design=Design.GRID)

    def test_tenth_share_feasibility(self):
        bad = SimScenario(
            n=100, ratio=0.05, model=Model.MODEL1, hetero_frac=HeteroFrac.TENTH
        )
        with pytest.raises(InfeasibleScenario):
            bad.require_feasible()
        ok = SimScenario(
            n=100, ratio=0.3, model=Model.MODEL1, hetero_frac=HeteroFrac.TENTH
        )
        ok.require_feasible()
        # The share rule only bites for the multiplicative-power models.
        null_cell = SimScenario(n=100, ratio=0.05, hetero_frac=HeteroFrac.TENTH)
        null_cell.require_feasible()

    def test_round_trip(self):
        scenario = SimScenario(
            n=80,
            ratio=0.25,
            design=Design.GAMMA,
            model=Model.MODEL2,
            hetero_frac=HeteroFrac.TENTH,
            c0=0.7,
            beta0=1.5,
            replications=11,
            alpha=0.1,
            seed=99,
        )
        assert SimScenario.from_dict(scenario.to_dict()) == scenario


class TestGenerateInstance:
    def test_deterministic_per_replication(self):
        scenario = SimScenario(n=40, ratio=0.2, seed=13)
        a = generate_instance(scenario, 3)
        b = generate_instance(scenario, 3)
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.y, b.y)
        c = generate_instance(scenario, 4)
        assert not np.array_equal(a.y, c.y)

    def test_rep_index_validation(self):
        scenario = SimScenario(n=40, ratio=0.2)
        with pytest.raises(ValueError):
            generate_instance(scenario, -1)

    def test_null_equals_model3_at_zero_strength(self):
        # (1 + 0 x)^2 = 1, and the variance model must not consume any
        # random numbers, so the datasets agree bit for bit.
        base = dict(n=60, ratio=0.3, seed=21)
        null = generate_instance(SimScenario(**base), 0)
        off = generate_instance(SimScenario(model=Model.MODEL3, c0=0.0, **base), 0)
        assert np.array_equal(null.x, off.x)
        assert np.array_equal(null.y, off.y)

    def test_variance_models_share_designs(self):
        base = dict(n=60, ratio=0.3, seed=21)
        m1 = generate_instance(SimScenario(model=Model.MODEL1, **base), 5)
        m2 = generate_instance(SimScenario(model=Model.MODEL2, **base), 5)
        assert np.array_equal(m1.x, m2.x)

    @pytest.mark.parametrize(
        "model",
        [Model.NULL, Model.MODEL1, Model.MODEL2, Model.MODEL3],
    )
    def test_formula_replay(self, model):
        scenario = SimScenario(
            n=50,
            ratio=0.3,
            model=model,
            hetero_frac=HeteroFrac.TENTH,
            c0=0.4,
            beta0=2.0,
            seed=31,
        )
        data = generate_instance(scenario, 2)
        rng = philox_stream(31, 2)
        x = rng.standard_normal((50, 15))
        eps = rng.standard_normal(50)
        assert np.array_equal(data.x, x)
        beta = np.zeros(15)
        beta[0] = 2.0
        c = np.zeros(15)
        c[:2] = 0.4  # p = 15 gives p0 = 2
        if model is Model.NULL:
            mult = np.ones(50)
        elif model is Model.MODEL1:
            mult = np.exp(x @ c)
        elif model is Model.MODEL2:
            mult = (1.0 + np.sin(10.0 * x) @ c) ** 2
        else:
            mult = (1.0 + x @ c) ** 2
        assert np.array_equal(data.y, x @ beta + mult * eps)

    @pytest.mark.parametrize("model", [Model.S1, Model.S2, Model.S3])
    def test_fixed_design_replay(self, model):
        scenario = SimScenario(
            n=25, ratio=0.08, design=Design.GRID, model=model, c0=0.5, seed=8
        )
        data = generate_instance(scenario, 1)
        rng = philox_stream(8, 1)
        t = np.arange(25) / 24.0
        x = np.column_stack([np.ones(25), t])
        # The deterministic grid consumes no random draws, so the error
        # vector is the stream's first output.
        eps = rng.standard_normal(25)
        assert np.array_equal(data.x, x)
        if model is Model.S1:
            mean, scale = 1.0 + np.sin(t), np.exp(0.5 * t)
        elif model is Model.S2:
            mean, scale = 1.0 + t, (1.0 + 0.5 * np.sin(10.0 * t)) ** 2
        else:
            mean, scale = 1.0 + t, (1.0 + 0.5 * t) ** 2
        assert np.array_equal(data.y, mean + 0.25 * scale * eps)

    def test_design_families(self):
        gamma = generate_instance(
            SimScenario(n=4000, ratio=0.002, design=Design.GAMMA, seed=1), 0
        )
        assert gamma.x.min() > 0.0
        # Gamma(shape 2, rate 2) has mean 1 and variance 1/2.
        assert gamma.x.mean() == pytest.approx(1.0, abs=0.05)
        assert gamma.x.var() == pytest.approx(0.5, abs=0.05)
        uni = generate_instance(
            SimScenario(n=4000, ratio=0.002, design=Design.UNIFORM, seed=1), 0
        )
        assert uni.x.min() >= 0.0 and uni.x.max() < 1.0
        assert uni.x.mean() == pytest.approx(0.5, abs=0.05)
        grid = generate_instance(
            SimScenario(n=11, ratio=0.1, design=Design.GRID, seed=1), 0
        )
        assert np.array_equal(grid.x[:, 0], np.ones(11))
        assert np.array_equal(grid.x[:, 1], np.arange(11) / 10.0)

    def test_infeasible_scenario_raises(self):
        bad = SimScenario(
            n=100, ratio=0.05, model=Model.MODEL1, hetero_frac=HeteroFrac.TENTH
        )
        with pytest.raises(InfeasibleScenario):
            generate_instance(bad, 0)


class TestRunScenario:
    def test_tallies_match_collected_stats(self):
        scenario = SimScenario(n=40, ratio=0.1, replications=200, seed=3)
        report = run_scenario(scenario, collect_stats=True)
        p = scenario.p
        dofs = {"bp": p, "white": p * (p + 1) // 2}
        for name, out in report.outcomes.items():
            assert out.applicable
            stats = report.stats[name]
            assert stats.shape == (200,)
            if name in ("alrt", "cvt"):
                recount = int(sum(normal_sf(z) < 0.05 for z in stats))
            else:
                recount = int(sum(chisq_sf(s, dofs[name]) < 0.05 for s in stats))
            assert recount == out.rejections
            assert out.rate == pytest.approx(out.rejections / 200.0)
            assert out.mc_se == pytest.approx(
                math.sqrt(out.rate * (1.0 - out.rate) / 200.0)
            )

    def test_thread_count_does_not_change_results(self):
        scenario = SimScenario(n=30, ratio=0.2, replications=60, seed=17)
        one = run_scenario(scenario, threads=1, collect_stats=True)
        three = run_scenario(scenario, threads=3, collect_stats=True)
        assert one.to_dict() == three.to_dict()
        for name in one.stats:
            assert np.array_equal(one.stats[name], three.stats[name])

    def test_shift_invariance_of_all_tests(self):
        base = SimScenario(n=40, ratio=0.1, replications=50, seed=29, beta0=0.0)
        shifted = SimScenario(n=40, ratio=0.1, replications=50, seed=29, beta0=3.0)
        a = run_scenario(base, collect_stats=True)
        b = run_scenario(shifted, collect_stats=True)
        for name in a.stats:
            assert np.allclose(a.stats[name], b.stats[name], atol=1e-6)
            assert a.outcomes[name].rejections == b.outcomes[name].rejections

    def test_applicability_flags(self):
        grid = run_scenario(
            SimScenario(
                n=20, ratio=0.1, design=Design.GRID, replications=5, seed=1
            )
        )
        for name in ("bp", "white"):
            out = grid.outcomes[name]
            assert out.applicable is False
            assert out.rate is None and out.mc_se is None
        # p = 5 at n = 12: White needs 1 + 15 columns, BP still runs.
        tight = run_scenario(
            SimScenario(n=12, ratio=0.4, replications=5, seed=1)
        )
        assert tight.outcomes["bp"].applicable is True
        assert tight.outcomes["white"].applicable is False

    def test_infeasible_raises(self):
        bad = SimScenario(
            n=100, ratio=0.05, model=Model.MODEL1, hetero_frac=HeteroFrac.TENTH
        )
        with pytest.raises(InfeasibleScenario):
            run_scenario(bad)

    def test_null_size_in_proportional_regime(self):
        # Half the covariates of the sample size: the normal-law tests
        # hold their level while the score test collapses.
        report = run_scenario(
            SimScenario(n=120, ratio=0.5, replications=1500, seed=77)
        )
        assert 0.03 <= report.outcomes["alrt"].rate <= 0.07
        assert 0.03 <= report.outcomes["cvt"].rate <= 0.07
        assert report.outcomes["bp"].rate <= 0.02
        assert report.outcomes["white"].applicable is False

    def test_power_decreases_with_dimension(self):
        kwargs = dict(
            n=200,
            model=Model.MODEL3,
            hetero_frac=HeteroFrac.ONE,
            c0=0.5,
            replications=600,
            seed=5,
        )
        low = run_scenario(SimScenario(ratio=0.1, **kwargs))
        high = run_scenario(SimScenario(ratio=0.7, **kwargs))
        for name in ("alrt", "cvt"):
            assert low.outcomes[name].rate >= high.outcomes[name].rate + 0.2


class TestBuiltinTables:
    @pytest.mark.parametrize(
        "name,cells",
        [
            ("table1", 18),
            ("table2", 36),
            ("table3", 36),
            ("table4", 36),
            ("table5", 18),
            ("table6", 12),
            ("table7", 36),
        ],
    )
    def test_cell_counts(self, name, cells):
        table = builtin_table(name, replications=10, seed=1)
        assert len(table.scenarios) == cells
        assert table.name == name
        assert all(s.replications == 10 for s in table.scenarios)

    def test_builtin_names_constant(self):
        assert BUILTIN_TABLES == (
            "table1",
            "table2",
            "table3",
            "table4",
            "table5",
            "table6",
            "table7",
        )

    def test_unknown_table(self):
        with pytest.raises(UnknownTable):
            builtin_table("table8")

    def test_cell_seeds_distinct_and_derived(self):
        table = builtin_table("table1", replications=5, seed=42)
        seeds = [s.seed for s in table.scenarios]
        assert len(set(seeds)) == len(seeds)
        assert seeds[0] == derive_seed(42, 0)
        assert seeds[7] == derive_seed(42, 7)
        other = builtin_table("table1", replications=5, seed=43)
        assert seeds != [s.seed for s in other.scenarios]

    @pytest.mark.parametrize("name", ["table2", "table3", "table4"])
    def test_power_tables_keep_infeasible_cells(self, name):
        table = builtin_table(name, replications=5)
        infeasible = []
        for scenario in table.scenarios:
            try:
                scenario.require_feasible()
            except InfeasibleScenario:
                infeasible.append((scenario.n, scenario.ratio))
        assert infeasible == [(100, 0.05), (100, 0.1)]

    def test_table5_structure(self):
        table = builtin_table("table5", replications=5)
        assert all(s.design is Design.GRID for s in table.scenarios)
        assert all(s.p == 2 for s in table.scenarios)
        assert {s.model for s in table.scenarios} == {Model.S1, Model.S2, Model.S3}
        assert {s.c0 for s in table.scenarios} == {0.0, 0.5, 1.0}
        assert {s.n for s in table.scenarios} == {25, 50}

    def test_table7_structure(self):
        table = builtin_table("table7", replications=5)
        assert all(s.n == 500 for s in table.scenarios)
        assert all(s.hetero_frac is HeteroFrac.TENTH for s in table.scenarios)
        assert {s.design for s in table.scenarios} == {Design.GAMMA, Design.UNIFORM}
        assert {s.model for s in table.scenarios} == {
            Model.MODEL1,
            Model.MODEL2,
            Model.MODEL3,
        }


GRID_TEXT = """\
# a comment line
n = 40
ratio = 0.2          # inline comment
model = model1
hetero_frac = tenth
c0 = 0.7

n = 25
ratio = 0.3
design = uniform
replications = 7
seed = 123
"""


class TestParseGrid:
    def test_valid_grid(self):
        table = parse_grid(GRID_TEXT, name="demo", replications=9, seed=4)
        assert table.name == "demo"
        assert len(table.scenarios) == 2
        first, second = table.scenarios
        assert first.n == 40 and first.ratio == 0.2
        assert first.model is Model.MODEL1
        assert first.hetero_frac is HeteroFrac.TENTH
        assert first.c0 == 0.7
        assert first.replications == 9
        assert first.seed == derive_seed(4, 0)
        assert second.design is Design.UNIFORM
        assert second.replications == 7
        assert second.seed == 123

    def test_empty_text(self):
        assert parse_grid("") == parse_grid("# nothing\n\n")
        assert parse_grid("").scenarios == ()

    def test_unknown_key(self):
        with pytest.raises(ParseError, match="unknown scenario field"):
            parse_grid("n = 40\nratio = 0.2\nbogus = 1\n")

    def test_bad_value(self):
        with pytest.raises(ParseError, match="bad value"):
            parse_grid("n = 40\nratio = zero\n")
        with pytest.raises(ParseError, match="bad value"):
            parse_grid("n = 40\nratio = 0.2\ndesign = weibull\n")

    def test_missing_required_keys(self):
        with pytest.raises(ParseError, match="'n' and 'ratio' are required"):
            parse_grid("ratio = 0.2\n")
        with pytest.raises(ParseError, match="'n' and 'ratio' are required"):
            parse_grid("n = 40\n")

    def test_malformed_line(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_grid("n = 40\njust words\n")

    def test_invalid_scenario_wrapped(self):
        with pytest.raises(ParseError, match="block 1"):
            parse_grid("n = 3\nratio = 0.9\n")


class TestRunTable:
    @staticmethod
    def tiny_table():
        return parse_grid(
            "n = 20\nratio = 0.1\n\nn = 100\nratio = 0.05\nmodel = model1\n"
            "hetero_frac = tenth\n",
            name="tiny",
            replications=8,
            seed=6,
        )

    def test_checkpoints_written(self, tmp_path):
        reports = run_table(self.tiny_table(), out_dir=tmp_path)
        assert len(reports) == 2
        files = sorted(p.name for p in (tmp_path / "cells").iterdir())
        assert files == ["tiny_cell000.json", "tiny_cell001.json"]
        assert reports[0].feasible is True
        assert reports[1].feasible is False  # p0 < 2 at p = 5
        payload = json.loads((tmp_path / "cells" / "tiny_cell001.json").read_text())
        assert payload["feasible"] is False

    def test_resume_reuses_checkpoints(self, tmp_path):
        table = self.tiny_table()
        run_table(table, out_dir=tmp_path)
        cell = tmp_path / "cells" / "tiny_cell000.json"
        payload = json.loads(cell.read_text())
        payload["outcomes"]["alrt"]["rejections"] = 999
        cell.write_text(json.dumps(payload))
        resumed = run_table(table, out_dir=tmp_path, resume=True)
        assert resumed[0].outcomes["alrt"].rejections == 999
        recomputed = run_table(table, out_dir=tmp_path, resume=False)
        assert recomputed[0].outcomes["alrt"].rejections != 999

    def test_progress_callback(self, tmp_path):
        seen = []
        run_table(
            self.tiny_table(),
            out_dir=tmp_path,
            progress=lambda idx, total, report: seen.append((idx, total)),
        )
        assert seen == [(0, 2), (1, 2)]

    def test_runs_without_out_dir(self):
        reports = run_table(self.tiny_table())
        assert [r.feasible for r in reports] == [True, False]


class TestReportSerialization:
    def test_round_trip(self):
        scenario = SimScenario(n=30, ratio=0.2, replications=25, seed=11)
        report = run_scenario(scenario)
        back = SimReport.from_dict(report.to_dict())
        assert back.scenario == scenario
        assert back.feasible is True
        assert back.outcomes == report.outcomes

    def test_not_applicable_round_trip(self):
        out = Outcome(applicable=False)
        report = SimReport(
            scenario=SimScenario(n=30, ratio=0.2),
            feasible=True,
            outcomes={"white": out},
        )
        back = SimReport.from_dict(report.to_dict())
        assert back.outcomes["white"] == out

    def test_schema_version(self):
        report = SimReport(
            scenario=SimScenario(n=30, ratio=0.2), feasible=False
        )
        assert report.to_dict()["schema_version"] == 1
