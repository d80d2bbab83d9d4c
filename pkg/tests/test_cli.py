import csv
import io
import json

import numpy as np
import pytest

from coopsense.cli import (
    CSV_COLUMNS,
    EXIT_BUDGET,
    EXIT_CONFIG,
    EXIT_INFEASIBLE,
    EXIT_OK,
    ConfigError,
    ExperimentConfig,
    main,
    rows_to_csv,
    run_experiment,
    sample_instance,
    summarize,
)
from coopsense.model import SensorSet, SystemParams, save_instance


def parse(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestSampleInstance:
    def test_deterministic(self):
        assert sample_instance(10, 42) == sample_instance(10, 42)

    def test_range(self):
        s = sample_instance(10, 1, (0.05, 0.45))
        values = np.concatenate((s.p_f, s.p_m))
        assert values.size == 20
        assert ((values >= 0.05) & (values <= 0.45)).all()

    def test_distinct_seeds(self):
        assert sample_instance(10, 1) != sample_instance(10, 2)

    @pytest.mark.parametrize("bad", [(0.0, 0.5), (0.5, 0.4), (0.2, 1.0)])
    def test_invalid_range(self, bad):
        with pytest.raises(ConfigError):
            sample_instance(3, 0, bad)


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig("gamma", (2.0,))
        assert (c.t_c, c.pi0, c.gamma, c.alpha, c.n, c.r, c.groups) == (0.2, 0.4, 2.0, 0.8, 10, 2, 30)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(sweep_var="beta", grid=(1,)),
            dict(sweep_var="gamma", grid=()),
            dict(sweep_var="gamma", grid=(1,), groups=0),
            dict(sweep_var="gamma", grid=(1,), algorithms=("svm",)),
            dict(sweep_var="n", grid=(2.5,)),
            dict(sweep_var="alpha", grid=(1.5,)),
            dict(sweep_var="gamma", grid=(1,), profile_range=(0.5, 0.1)),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kwargs)


class TestRunExperiment:
    def test_bayes_dominates(self):
        config = ExperimentConfig("gamma", (1, 2, 3, 4), groups=3, algorithms=("bayes", "majority", "and", "or"))
        rows = run_experiment(config)
        assert len(rows) == 4 * 3 * 4
        by_key = {}
        for row in rows:
            by_key.setdefault((row.value, row.group), {})[row.algorithm] = row.total
        for totals in by_key.values():
            assert all(totals["bayes"] >= v - 1e-12 for v in totals.values())

    def test_greedy_ratio_over_n(self):
        config = ExperimentConfig("n", (5, 6, 7, 8, 9, 10), gamma=0.003, groups=2, algorithms=("greedy",))
        for row in run_experiment(config):
            assert row.ratio_to_opt > 0.5

    def test_single_group_row_count(self):
        config = ExperimentConfig("gamma", (2,), n=4, groups=1, algorithms=("bayes", "or", "greedy", "sfs"), k=2)
        assert len(run_experiment(config)) == 4

    def test_reproducible(self):
        config = ExperimentConfig("alpha", (0.5, 0.8), gamma=0.1, n=4, groups=4, seed=7,
                                  algorithms=("greedy", "random", "dp", "exact"), random_seeds=2)
        strip = lambda rows: [(r.value, r.group, r.algorithm, r.total, r.ratio_to_opt) for r in rows]
        a = run_experiment(config)
        assert strip(a) == strip(run_experiment(config))
        assert strip(a) == strip(run_experiment(config, workers=2))

    def test_sorted_rows(self):
        config = ExperimentConfig("k", (3, 1), n=5, groups=2, algorithms=("sfs", "exhaustive"))
        rows = run_experiment(config)
        assert [(r.value, r.group, r.algorithm) for r in rows] == [
            (v, g, a) for v in (3, 1) for g in range(2) for a in ("sfs", "exhaustive")
        ]
        assert all(r.ratio_to_opt <= 1.0 + 1e-12 for r in rows)

    def test_exclusion_bookkeeping(self):
        config = ExperimentConfig("gamma", (2.0, 0.05), n=4, groups=10, algorithms=("greedy", "random"))
        summary = {(s.value, s.algorithm): s for s in summarize(run_experiment(config))}
        # At gamma=2 the Bayesian rule is always feasible, so every group is excluded.
        assert summary[(2.0, "greedy")].excluded == 10
        assert summary[(2.0, "greedy")].scored == 0
        low = summary[(0.05, "greedy")]
        assert low.excluded < 10 and low.scored == 10 - low.excluded
        assert low.min_ratio > 0.5

    def test_csv(self):
        config = ExperimentConfig("r", (1, 2), gamma=0.003, n=6, groups=1, algorithms=("dp",))
        rows = parse(rows_to_csv(run_experiment(config)))
        assert list(rows[0]) == list(CSV_COLUMNS)
        assert [r["value"] for r in rows] == ["1", "2"]


class TestMain:
    @pytest.fixture
    def instance(self, tmp_path):
        path = tmp_path / "inst.json"
        s = SensorSet.from_arrays([0.1, 0.2, 0.3], [0.2, 0.15, 0.3])
        save_instance(path, s, SystemParams(0.2, 0.4, 0.1, 0.8))
        return str(path)

    def run(self, *argv):
        out = io.StringIO()
        code = main(list(argv), out=out)
        return code, out.getvalue()

    def test_solve(self, instance):
        code, text = self.run("solve", "--instance", instance, "--algorithm", "greedy")
        assert code == EXIT_OK
        doc = json.loads(text)
        assert doc["feasible"] and doc["rule"]["kind"] == "table"

    def test_solve_every_algorithm(self, instance):
        for alg in ("bayes", "majority", "and", "or", "random", "dp", "exact", "sfs", "exhaustive"):
            code, text = self.run("solve", "--instance", instance, "--algorithm", alg, "--k", "2", "--seed", "1")
            assert code == EXIT_OK, alg
            assert "total" in json.loads(text)

    def test_oracle(self, instance):
        for problem in ("unconstrained", "constrained", "selection"):
            code, text = self.run("oracle", "--instance", instance, "--problem", problem)
            assert code == EXIT_OK
            assert json.loads(text)["total"] > 0

    def test_simulate_with_trace(self, instance, tmp_path):
        trace = tmp_path / "trace.csv"
        code, text = self.run("simulate", "--instance", instance, "--algorithm", "greedy", "--slots", "2000", "--trace", str(trace))
        assert code == EXIT_OK
        doc = json.loads(text)
        assert abs(doc["empirical_total"] - doc["analytic_total"]) < 5 * doc["std_error"]
        lines = trace.read_text().splitlines()
        assert lines[0] == "slot,B,obs_hex,O,collision,throughput" and len(lines) == 2001

    def test_sweep(self, tmp_path):
        out_csv, summary = tmp_path / "rows.csv", tmp_path / "summary.csv"
        code, _ = self.run("sweep", "--sweep-var", "gamma", "--grid", "1,2", "--n", "4", "--groups", "2",
                           "--algorithms", "bayes,or", "--output", str(out_csv), "--summary", str(summary))
        assert code == EXIT_OK
        assert len(parse(out_csv.read_text())) == 8
        assert len(parse(summary.read_text())) == 4

    def test_sweep_stdout(self):
        code, text = self.run("sweep", "--sweep-var", "n", "--grid", "3", "--groups", "1", "--algorithms", "bayes")
        assert code == EXIT_OK
        assert text.splitlines()[0] == ",".join(CSV_COLUMNS)

    def test_gen(self, tmp_path):
        path = tmp_path / "g.json"
        assert self.run("gen", "random", "--n", "3", "--seed", "5", "-o", str(path))[0] == EXIT_OK
        assert json.loads(path.read_text())["n"] == 3
        code, text = self.run("gen", "hard", "--y", "1,2")
        assert code == EXIT_OK
        assert json.loads(text)["p_f"][0] == pytest.approx(1 / 11)

    def test_config_errors(self, tmp_path):
        assert self.run("sweep", "--sweep-var", "x", "--grid", "1")[0] == EXIT_CONFIG
        assert self.run("sweep", "--sweep-var", "gamma", "--grid", "1", "--groups", "0")[0] == EXIT_CONFIG
        assert self.run("solve", "--instance", str(tmp_path / "missing.json"))[0] == EXIT_CONFIG
        assert self.run("gen", "hard", "--y", "0")[0] == EXIT_CONFIG

    def test_budget_exit(self, tmp_path):
        path = tmp_path / "big.json"
        save_instance(path, sample_instance(6, 0), SystemParams(0.2, 0.4, 0.003, 0.8))
        assert self.run("oracle", "--instance", str(path), "--problem", "constrained")[0] == EXIT_BUDGET
        assert self.run("oracle", "--instance", str(path), "--problem", "unconstrained")[0] == EXIT_BUDGET

    def test_infeasible_exit(self, tmp_path):
        # At r=0 the rounded H-mass can fall short of the target.
        path = tmp_path / "inst.json"
        for seed in range(200):
            s = sample_instance(8, seed)
            save_instance(path, s, SystemParams(0.2, 0.4, 0.003, 0.8))
            code, _ = self.run("solve", "--instance", str(path), "--algorithm", "dp", "--r", "0")
            if code == EXIT_INFEASIBLE:
                assert self.run("simulate", "--instance", str(path), "--algorithm", "dp", "--r", "0")[0] == EXIT_INFEASIBLE
                return
        pytest.fail("no infeasible r=0 instance found")
