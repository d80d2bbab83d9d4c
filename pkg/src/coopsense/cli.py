"""Experiment harness and command-line entry point.

Subcommands::

    coopsense solve     one instance, one algorithm, JSON result on stdout
    coopsense sweep     parameter sweep over random groups, CSV rows
    coopsense simulate  Monte-Carlo run of a rule on an instance
    coopsense oracle    brute-force optimum of an instance
    coopsense gen       random or hard-instance generation

Exit codes: 0 success, 2 infeasible instance, 3 budget exceeded, 4 config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .constrained import (
    ORACLE_MAX_ITEMS,
    ConstrainedSolution,
    exact_constrained_bruteforce,
    exact_constrained_milp,
    greedy_constrained,
    hard_instance,
    is_boundary_case,
    random_selection_constrained,
)
from .dp import greedy_dp
from .fusion import (
    DecisionRule,
    and_rule,
    bayes_total,
    evaluate_rule,
    majority_rule,
    optimal_rule_bruteforce,
    or_rule,
    rule_from_bayes,
)
from .model import (
    BudgetExceededError,
    InfeasibleError,
    SensorSet,
    SystemParams,
    instance_to_dict,
    load_instance,
    save_instance,
)
from .selection import best_subset_exhaustive, sfs_select
from .sim import iter_slots, run_simulation, write_trace_csv

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_BUDGET = 3
EXIT_CONFIG = 4

SWEEP_VARS = ("gamma", "alpha", "n", "r", "k")
UNCONSTRAINED = ("bayes", "majority", "and", "or")
CONSTRAINED = ("greedy", "random", "dp", "exact")
SELECTION = ("sfs", "exhaustive")
ALGORITHMS = UNCONSTRAINED + CONSTRAINED + SELECTION
DEFAULT_RANGE = (0.05, 0.45)
CSV_COLUMNS = ("sweep_var", "value", "group", "algorithm", "total", "ratio_to_opt", "runtime_ms")


class ConfigError(ValueError):
    """Invalid experiment configuration or command-line input."""


# -- instance sampling --------------------------------------------------------


def sample_instance(n: int, seed, range: tuple[float, float] = DEFAULT_RANGE) -> SensorSet:
    """``n`` SUs with ``p_f`` and ``p_m`` drawn i.i.d. uniform from ``range``."""
    lo, hi = (float(v) for v in range)
    if not 0.0 < lo < hi < 1.0:
        raise ConfigError(f"sampling range must satisfy 0 < lo < hi < 1, got {range!r}")
    if n < 1:
        raise ConfigError(f"need at least one SU, got n={n}")
    rng = np.random.default_rng(seed)
    draws = rng.uniform(lo, hi, size=(2, n))
    return SensorSet.from_arrays(draws[0], draws[1])


# -- experiments --------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    sweep_var: str
    grid: tuple[float, ...]
    t_c: float = 0.2
    pi0: float = 0.4
    gamma: float = 2.0
    alpha: float = 0.8
    n: int = 10
    r: int = 2
    k: int = 5
    groups: int = 30
    seed: int = 0
    profile_range: tuple[float, float] = DEFAULT_RANGE
    algorithms: tuple[str, ...] = UNCONSTRAINED
    random_seeds: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "profile_range", tuple(self.profile_range))
        if self.sweep_var not in SWEEP_VARS:
            raise ConfigError(f"sweep_var must be one of {', '.join(SWEEP_VARS)}, got {self.sweep_var!r}")
        if not self.grid:
            raise ConfigError("the value grid is empty")
        if self.groups < 1:
            raise ConfigError(f"groups must be at least 1, got {self.groups}")
        if self.random_seeds < 1:
            raise ConfigError(f"random_seeds must be at least 1, got {self.random_seeds}")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown or not self.algorithms:
            raise ConfigError(f"unknown algorithms {unknown}; choose from {', '.join(ALGORITHMS)}")
        if self.sweep_var in ("n", "r", "k") and any(v != int(v) for v in self.grid):
            raise ConfigError(f"{self.sweep_var} grid values must be integers")
        lo, hi = self.profile_range
        if not 0.0 < lo < hi < 1.0:
            raise ConfigError(f"profile_range must satisfy 0 < lo < hi < 1, got {self.profile_range!r}")
        for v in self.grid:
            self.point(v)

    def point(self, value: float) -> tuple[int, SystemParams, int, int]:
        """``(n, params, r, k)`` at one grid value."""
        n, r, k = self.n, self.r, self.k
        base = dict(t_c=self.t_c, pi0=self.pi0, gamma=self.gamma, alpha=self.alpha)
        if self.sweep_var in ("gamma", "alpha"):
            base[self.sweep_var] = float(value)
        elif self.sweep_var == "n":
            n = int(value)
        elif self.sweep_var == "r":
            r = int(value)
        else:
            k = int(value)
        try:
            params = SystemParams(**base)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if n < 1 or r < 0 or not 0 <= min(k, n):
            raise ConfigError(f"invalid grid point n={n}, r={r}, k={k}")
        return n, params, r, min(k, n)

    def group_seed(self, group: int) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.seed, group])


@dataclass(frozen=True)
class ExperimentRow:
    sweep_var: str
    value: float
    group: int
    algorithm: str
    total: float
    ratio_to_opt: float | None
    runtime_ms: float
    feasible: bool = True
    excluded: bool = False

    def csv_fields(self) -> list:
        ratio = "" if self.ratio_to_opt is None else repr(self.ratio_to_opt)
        return [self.sweep_var, _fmt_value(self.value), self.group, self.algorithm,
                repr(self.total), ratio, f"{self.runtime_ms:.3f}"]


@dataclass(frozen=True)
class SummaryRow:
    value: float
    algorithm: str
    groups: int
    excluded: int
    scored: int
    feasible_rate: float
    mean_total: float
    mean_ratio: float
    min_ratio: float


def _fmt_value(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _timed(fn: Callable):
    start = time.perf_counter()
    out = fn()
    return out, 1000.0 * (time.perf_counter() - start)


def exact_constrained(sensors: SensorSet, params: SystemParams) -> ConstrainedSolution:
    """Exact constrained optimum: subset enumeration when small, MILP otherwise."""
    try:
        return exact_constrained_bruteforce(sensors, None, params)
    except BudgetExceededError:
        return exact_constrained_milp(sensors, None, params)


def _run_group(config: ExperimentConfig, value: float, group: int) -> list[ExperimentRow]:
    n, params, r, k = config.point(value)
    seq = config.group_seed(group)
    instance_seed, random_seed = seq.spawn(2)
    sensors = sample_instance(n, instance_seed, config.profile_range)
    algs = config.algorithms
    rows: list[ExperimentRow] = []

    def row(alg, total, ratio, ms, feasible=True, excluded=False):
        rows.append(ExperimentRow(config.sweep_var, value, group, alg, total, ratio, ms, feasible, excluded))

    if any(a in UNCONSTRAINED for a in algs):
        opt = bayes_total(sensors, None, params)
        rules: dict[str, Callable[[], DecisionRule]] = {
            "bayes": lambda: rule_from_bayes(sensors, None, params),
            "majority": lambda: majority_rule(n),
            "and": lambda: and_rule(n),
            "or": lambda: or_rule(n),
        }
        for alg in (a for a in algs if a in UNCONSTRAINED):
            ev, ms = _timed(lambda: evaluate_rule(rules[alg](), sensors, None, params))
            row(alg, ev.total, ev.total / opt, ms)

    if any(a in CONSTRAINED for a in algs):
        excluded = is_boundary_case(sensors, None, params)
        exact, exact_ms = _timed(lambda: exact_constrained(sensors, params))
        opt = exact.total if exact.feasible else None
        rand_seeds = random_seed.spawn(config.random_seeds)
        for alg in (a for a in algs if a in CONSTRAINED):
            if alg == "exact":
                sols, ms = [exact], exact_ms
            elif alg == "greedy":
                sol, ms = _timed(lambda: greedy_constrained(sensors, None, params))
                sols = [sol]
            elif alg == "dp":
                sol, ms = _timed(lambda: greedy_dp(sensors, params, r))
                sols = [sol]
            else:
                sols, ms = _timed(lambda: [random_selection_constrained(sensors, None, params, s) for s in rand_seeds])
                ms /= len(sols)
            for sol in sols:
                # An infeasible output scores zero against the optimum.
                ratio = None if opt is None else (sol.total / opt if sol.feasible else 0.0)
                row(alg, sol.total, ratio, ms, sol.feasible, excluded)

    if any(a in SELECTION for a in algs):
        try:
            best, best_ms = _timed(lambda: best_subset_exhaustive(sensors, params, k))
        except BudgetExceededError:
            best, best_ms = None, 0.0
        for alg in (a for a in algs if a in SELECTION):
            if alg == "exhaustive":
                if best is None:
                    raise BudgetExceededError(f"exhaustive selection over C({n}, {k}) subsets is over budget")
                res, ms = best, best_ms
            else:
                res, ms = _timed(lambda: sfs_select(sensors, params, k))
            row(alg, res.total, None if best is None else res.total / best.total, ms)
    return rows


def _order_key(config: ExperimentConfig):
    grid_pos = {v: i for i, v in enumerate(config.grid)}
    alg_pos = {a: i for i, a in enumerate(config.algorithms)}
    return lambda row: (grid_pos[row.value], row.group, alg_pos[row.algorithm])


def _run_task(args) -> list[ExperimentRow]:
    return _run_group(*args)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> list[ExperimentRow]:
    """One row per (grid point, group, algorithm), in grid/group/algorithm order.

    Random selection contributes ``random_seeds`` rows per group.  With
    ``workers > 1`` groups run in separate processes; the output order is
    unaffected.
    """
    tasks = [(config, v, g) for v in config.grid for g in range(config.groups)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    rows = [r for chunk in chunks for r in chunk]
    # Stable sort keeps the per-group order of repeated random-selection rows.
    rows.sort(key=_order_key(config))
    return rows


def summarize(rows: Sequence[ExperimentRow]) -> list[SummaryRow]:
    """Per (grid value, algorithm) statistics; boundary groups are left out
    of the ratio statistics and counted in ``excluded``."""
    keys: list[tuple[float, str]] = []
    buckets: dict[tuple[float, str], list[ExperimentRow]] = {}
    for row in rows:
        key = (row.value, row.algorithm)
        if key not in buckets:
            keys.append(key)
            buckets[key] = []
        buckets[key].append(row)
    out = []
    for key in keys:
        bucket = buckets[key]
        groups = {r.group for r in bucket}
        excluded = {r.group for r in bucket if r.excluded}
        scored = [r for r in bucket if not r.excluded]
        ratios = [r.ratio_to_opt for r in scored if r.ratio_to_opt is not None]
        totals = [r.total for r in scored if r.feasible]
        out.append(SummaryRow(
            value=key[0],
            algorithm=key[1],
            groups=len(groups),
            excluded=len(excluded),
            scored=len(scored),
            feasible_rate=(sum(r.feasible for r in scored) / len(scored)) if scored else math.nan,
            mean_total=float(np.mean(totals)) if totals else math.nan,
            mean_ratio=float(np.mean(ratios)) if ratios else math.nan,
            min_ratio=float(np.min(ratios)) if ratios else math.nan,
        ))
    return out


def rows_to_csv(rows: Sequence[ExperimentRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def summary_to_csv(summary: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = list(SummaryRow.__dataclass_fields__)
    writer.writerow(names)
    for s in summary:
        writer.writerow([_fmt_value(s.value) if n == "value" else getattr(s, n) for n in names])
    return buf.getvalue()


# -- single-instance commands --------------------------------------------------


def solve(sensors: SensorSet, params: SystemParams, algorithm: str, r: int = 2, k: int | None = None, seed=None) -> dict:
    """Run one algorithm on one instance; the result is JSON-serializable."""
    n = sensors.n
    if algorithm in UNCONSTRAINED:
        rule = build_rule(sensors, params, algorithm)
        ev = evaluate_rule(rule, sensors, None, params)
        return {"algorithm": algorithm, "feasible": True, "rule": rule.to_dict(), **asdict(ev), "total": ev.total}
    if algorithm in CONSTRAINED:
        sol = {
            "greedy": lambda: greedy_constrained(sensors, None, params),
            "random": lambda: random_selection_constrained(sensors, None, params, seed),
            "dp": lambda: greedy_dp(sensors, params, r),
            "exact": lambda: exact_constrained(sensors, params),
        }[algorithm]()
        return {"algorithm": algorithm, **sol.to_dict()}
    if algorithm in SELECTION:
        k = n if k is None else k
        res = sfs_select(sensors, params, k) if algorithm == "sfs" else best_subset_exhaustive(sensors, params, k)
        return {"algorithm": algorithm, "feasible": True, "subset": list(res.subset), "total": res.total,
                "per_step_gains": [list(g) for g in res.per_step_gains]}
    raise ConfigError(f"unknown algorithm {algorithm!r}")


def oracle(sensors: SensorSet, params: SystemParams, problem: str, k: int | None = None) -> dict:
    if problem == "unconstrained":
        rule, ev = optimal_rule_bruteforce(sensors, None, params)
        return {"problem": problem, "feasible": True, "rule": rule.to_dict(), "total": ev.total}
    if problem == "constrained":
        sol = exact_constrained_bruteforce(sensors, None, params, ORACLE_MAX_ITEMS)
        return {"problem": problem, **sol.to_dict()}
    if problem == "selection":
        res = best_subset_exhaustive(sensors, params, sensors.n if k is None else k)
        return {"problem": problem, "feasible": True, "subset": list(res.subset), "total": res.total}
    raise ConfigError(f"unknown oracle problem {problem!r}")


# -- argument parsing ------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t-c", dest="t_c", type=float, default=0.2)
    p.add_argument("--pi0", type=float, default=0.4)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=0.8)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coopsense", description="Cooperative spectrum sensing fusion rules and experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run one algorithm on one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="bayes")
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("sweep", help="parameter sweep over random instance groups")
    p.add_argument("--sweep-var", dest="sweep_var", choices=SWEEP_VARS, required=True)
    p.add_argument("--grid", type=_float_list, required=True)
    _add_params(p)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--groups", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile-range", dest="profile_range", type=float, nargs=2, default=DEFAULT_RANGE, metavar=("LO", "HI"))
    p.add_argument("--algorithms", type=_str_list, default=UNCONSTRAINED)
    p.add_argument("--random-seeds", dest="random_seeds", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", "-o", help="CSV file for rows (default stdout)")
    p.add_argument("--summary", help="CSV file for per-grid-point statistics")

    p = sub.add_parser("simulate", help="Monte-Carlo run of a rule on an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--algorithm", choices=UNCONSTRAINED + CONSTRAINED, default="bayes")
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--slots", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="write a per-slot CSV trace to this file")

    p = sub.add_parser("oracle", help="brute-force optimum")
    p.add_argument("--instance", required=True)
    p.add_argument("--problem", choices=("unconstrained", "constrained", "selection"), default="unconstrained")
    p.add_argument("--k", type=int)

    p = sub.add_parser("gen", help="generate an instance file")
    gen = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    g = gen.add_parser("random")
    g.add_argument("--n", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--profile-range", dest="profile_range", type=float, nargs=2, default=DEFAULT_RANGE, metavar=("LO", "HI"))
    _add_params(g)
    g.add_argument("--output", "-o")
    g = gen.add_parser("hard")
    g.add_argument("--y", type=lambda s: tuple(int(v) for v in s.split(",")), required=True)
    g.add_argument("--t-c", dest="t_c", type=float, default=0.2)
    g.add_argument("--pi0", type=float, default=0.5)
    g.add_argument("--output", "-o")
    return parser


def _emit(text: str, path: str | None, out) -> None:
    if path is None:
        out.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _emit_json(doc: dict, out) -> None:
    json.dump(doc, out, indent=2, default=float)
    out.write("\n")


def _cmd_sweep(args, out) -> int:
    config = ExperimentConfig(
        sweep_var=args.sweep_var, grid=args.grid, t_c=args.t_c, pi0=args.pi0, gamma=args.gamma,
        alpha=args.alpha, n=args.n, r=args.r, k=args.k, groups=args.groups, seed=args.seed,
        profile_range=tuple(args.profile_range), algorithms=args.algorithms, random_seeds=args.random_seeds,
    )
    rows = run_experiment(config, workers=args.workers)
    _emit(rows_to_csv(rows), args.output, out)
    if args.summary:
        _emit(summary_to_csv(summarize(rows)), args.summary, out)
    return EXIT_OK


def build_rule(sensors: SensorSet, params: SystemParams, algorithm: str, r: int = 2, seed=None) -> DecisionRule | None:
    """Decision rule produced by ``algorithm``, or None if it found no feasible rule."""
    n = sensors.n
    if algorithm == "bayes":
        return rule_from_bayes(sensors, None, params)
    if algorithm in ("majority", "and", "or"):
        return {"majority": majority_rule, "and": and_rule, "or": or_rule}[algorithm](n)
    sol = {
        "greedy": lambda: greedy_constrained(sensors, None, params),
        "random": lambda: random_selection_constrained(sensors, None, params, seed),
        "dp": lambda: greedy_dp(sensors, params, r),
        "exact": lambda: exact_constrained(sensors, params),
    }[algorithm]()
    return sol.rule if sol.feasible else None


def _cmd_simulate(args, out) -> int:
    sensors, params = load_instance(args.instance)
    rule = build_rule(sensors, params, args.algorithm, r=args.r, seed=args.seed)
    if rule is None:
        print(f"infeasible: {args.algorithm} found no rule meeting the PU target", file=sys.stderr)
        return EXIT_INFEASIBLE
    summary = run_simulation(sensors, None, rule, params, args.slots, args.seed)
    analytic = evaluate_rule(rule, sensors, None, params)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            write_trace_csv(fh, iter_slots(sensors, None, rule, params, args.slots, args.seed))
    _emit_json({"algorithm": args.algorithm, "analytic_total": analytic.total, **asdict(summary)}, out)
    return EXIT_OK


def _dispatch(args, out) -> int:
    if args.command == "sweep":
        return _cmd_sweep(args, out)
    if args.command == "simulate":
        return _cmd_simulate(args, out)
    if args.command == "gen":
        if args.kind == "random":
            sensors = sample_instance(args.n, args.seed, tuple(args.profile_range))
            params = SystemParams(args.t_c, args.pi0, args.gamma, args.alpha)
        else:
            sensors, params = hard_instance(args.y, t_c=args.t_c, pi0=args.pi0)
        if args.output:
            save_instance(args.output, sensors, params)
        else:
            _emit_json(instance_to_dict(sensors, params), out)
        return EXIT_OK
    sensors, params = load_instance(args.instance)
    if args.command == "solve":
        result = solve(sensors, params, args.algorithm, r=args.r, k=args.k, seed=args.seed)
    else:
        result = oracle(sensors, params, args.problem, k=args.k)
    _emit_json(result, out)
    return EXIT_OK if result["feasible"] else EXIT_INFEASIBLE


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _dispatch(args, out)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
