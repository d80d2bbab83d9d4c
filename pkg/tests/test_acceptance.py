"""Acceptance suite: one test per criterion, each reporting a pass/fail line.

Instances are drawn with ``sample_instance`` from fixed seed sequences, so
every number printed here is reproducible.

The PU constraint never binds at gamma=2 with alpha=0.8 (the Bayesian rule
is always feasible there), so the constrained criteria run at small gamma
where it does: 0.1 for N=4 and 0.003 for N up to 10.
"""

import time

import numpy as np
import pytest

from coopsense.cli import ExperimentConfig, exact_constrained, run_experiment, sample_instance
from coopsense.constrained import (
    exact_constrained_bruteforce,
    greedy_constrained,
    hard_instance,
    is_boundary_case,
    min_nonnegative_log_gap,
    min_nonnegative_scaled_gap,
    random_selection_constrained,
)
from coopsense.dp import build_joint_counts, greedy_dp
from coopsense.fusion import evaluate_rule, optimal_rule_bruteforce, rule_from_bayes
from coopsense.model import SystemParams
from coopsense.selection import best_subset_exhaustive, exact_subset_values, sfs_select, verify_monotonicity
from coopsense.sim import run_simulation

from conftest import DEFAULTS, report
from oracles import grouping_oracle, table_counter

CONSTRAINED_N4 = SystemParams(t_c=0.2, pi0=0.4, gamma=0.1, alpha=0.8)
CONSTRAINED_N10 = SystemParams(t_c=0.2, pi0=0.4, gamma=0.003, alpha=0.8)


CONSTRAINED_RUNTIME = {}


def seeds(root: int, count: int):
    return np.random.SeedSequence(root).spawn(count)


@pytest.fixture(scope="module")
def constrained_n4():
    """200 non-boundary N=4 instances with greedy, oracle and random-selection results."""
    start = time.perf_counter()
    out = []
    seq = np.random.SeedSequence(3)
    while len(out) < 200:
        (child,) = seq.spawn(1)
        s = sample_instance(4, child)
        if is_boundary_case(s, None, CONSTRAINED_N4):
            continue
        out.append(
            dict(
                sensors=s,
                greedy=greedy_constrained(s, None, CONSTRAINED_N4),
                exact=exact_constrained_bruteforce(s, None, CONSTRAINED_N4),
                random=[random_selection_constrained(s, None, CONSTRAINED_N4, seed) for seed in range(10)],
            )
        )
    CONSTRAINED_RUNTIME["n4"] = time.perf_counter() - start
    return out


@pytest.fixture(scope="module")
def dp_instances():
    return [sample_instance(6 + i % 5, child) for i, child in enumerate(seeds(6, 100))]


def test_criterion_01_bayes_optimality():
    start = time.perf_counter()
    worst = 0.0
    for i, child in enumerate(seeds(1, 200)):
        s = sample_instance(1 + i % 4, child)
        _, ev = optimal_rule_bruteforce(s, None, DEFAULTS)
        worst = max(worst, abs(evaluate_rule(rule_from_bayes(s, None, DEFAULTS), s, None, DEFAULTS).total - ev.total))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 10
    report(1, ok, f"max |bayes - bruteforce| = {worst:.2e} over 200 instances, {elapsed:.1f}s")
    assert ok


def test_criterion_02_rule_dominance():
    config = ExperimentConfig("gamma", (1, 2, 3, 4), groups=30, seed=2, algorithms=("bayes", "majority", "and", "or"))
    table = {}
    for row in run_experiment(config):
        table.setdefault((row.value, row.group), {})[row.algorithm] = row.total
    rows = list(table.values())
    weak = np.mean([all(t["bayes"] >= t[a] for a in ("majority", "and", "or")) for t in rows])
    strict = np.mean([all(t["bayes"] > t[a] for a in ("majority", "and", "or")) for t in rows])
    or_best = np.mean([t["or"] >= t["and"] and t["or"] >= t["majority"] for t in rows])
    ok = weak == 1.0 and strict >= 0.9 and or_best >= 0.8
    report(2, ok, f"bayes >= others {weak:.0%}, bayes > others {strict:.0%}, OR >= AND/majority {or_best:.0%} of {len(rows)} rows")
    assert ok


def test_criterion_03_greedy_bound(constrained_n4):
    ratios = np.array([c["greedy"].total / c["exact"].total for c in constrained_n4])
    elapsed = CONSTRAINED_RUNTIME["n4"]
    hard_ok = bool((ratios > 0.5).all()) and elapsed < 60
    soft = "" if ratios.mean() >= 0.9 else " (mean below 0.9, reported only)"
    report(3, hard_ok, f"greedy/opt min {ratios.min():.4f} mean {ratios.mean():.4f} over {ratios.size} non-boundary instances, {elapsed:.1f}s{soft}")
    assert hard_ok


def test_criterion_04_greedy_vs_random(constrained_n4):
    greedy = np.mean([c["greedy"].total / c["exact"].total for c in constrained_n4])
    rand = np.mean([r.total / c["exact"].total for c in constrained_n4 for r in c["random"]])
    ok = greedy >= rand
    report(4, ok, f"mean greedy ratio {greedy:.4f} vs random selection {rand:.4f} (10 seeds)")
    assert ok


def test_criterion_05_dp_counts():
    start = time.perf_counter()
    mismatches = 0
    for i, child in enumerate(seeds(5, 50)):
        s = sample_instance(1 + i % 15, child)
        t = build_joint_counts(s, DEFAULTS, 2)
        if table_counter(t) != grouping_oracle(s, DEFAULTS, 2) or t.total() != 2**s.n:
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 30
    report(5, ok, f"{50 - mismatches}/50 count tables equal enumeration grouping, {elapsed:.1f}s")
    assert ok


def test_criterion_06_dp_resolution(dp_instances):
    p = CONSTRAINED_N10
    agree = sum(abs(greedy_dp(s, p, 6).total - greedy_constrained(s, None, p).total) < 1e-6 for s in dp_instances)

    # An emitted rule's exact-arithmetic total, or 0 when no rule was emitted.
    def exact_total(sol, s):
        return 0.0 if sol.rule is None else evaluate_rule(sol.rule, s, None, p).total

    totals = {r: np.mean([exact_total(greedy_dp(s, p, r), s) for s in dp_instances]) for r in (2, 6)}
    # Approximation factors over non-boundary instances; infeasible output scores 0.
    scored = [s for s in dp_instances if not is_boundary_case(s, None, p)]
    opts = [exact_constrained(s, p).total for s in scored]
    means = []
    for r in (0, 1, 2, 3):
        sols = [greedy_dp(s, p, r) for s in scored]
        means.append(np.mean([sol.total / o if sol.feasible else 0.0 for sol, o in zip(sols, opts)]))
    monotone = all(b >= a for a, b in zip(means, means[1:]))
    close = abs(totals[2] - totals[6]) <= 0.05 * totals[6]
    ok = agree >= 95 and close and monotone
    report(
        6,
        ok,
        f"r=6 agrees on {agree}/100; mean exact total r=2 {totals[2]:.6f} vs r=6 {totals[6]:.6f}; "
        f"mean ratio r=0..3: {', '.join(f'{m:.3f}' for m in means)} ({len(scored)} non-boundary)",
    )
    assert ok


def test_criterion_07_monotonicity():
    failures = 0
    for i, child in enumerate(seeds(7, 100)):
        s = sample_instance(1 + i % 8, child)
        values = exact_subset_values(s, DEFAULTS)
        if not verify_monotonicity(s, DEFAULTS, exact=True) or max(values) != values[-1]:
            failures += 1
    ok = failures == 0
    report(7, ok, f"{100 - failures}/100 instances monotone in exact arithmetic (zero tolerance), full set maximal")
    assert ok


def test_criterion_08_sfs_quality():
    ratios = np.empty((30, 8))
    for g, child in enumerate(seeds(8, 30)):
        s = sample_instance(8, child)
        for k in range(1, 9):
            ratios[g, k - 1] = sfs_select(s, DEFAULTS, k).total / best_subset_exhaustive(s, DEFAULTS, k).total
    per_k = ratios.mean(axis=0)
    below_soft = int((ratios < 0.6).sum())
    ok = bool((ratios >= 0.5).all() and (per_k >= 0.8).all())
    note = f", {below_soft} below 0.6 (reported only)" if below_soft else ""
    report(8, ok, f"SFS/exhaustive min {ratios.min():.4f}, min per-k mean {per_k.min():.4f}{note}")
    assert ok


def test_criterion_09_simulator():
    s = sample_instance(10, np.random.SeedSequence(9))
    rule = rule_from_bayes(s, None, DEFAULTS)
    ev = evaluate_rule(rule, s, None, DEFAULTS)
    hits = pf_hits = pm_hits = 0
    for seed in range(30):
        out = run_simulation(s, None, rule, DEFAULTS, 100_000, seed=seed)
        hits += abs(out.empirical_total - ev.total) < 3 * out.std_error
        pf_hits += abs(out.empirical_pf_coop - ev.p_f_coop) < 3 * out.pf_std_error
        pm_hits += abs(out.empirical_pm_coop - ev.p_m_coop) < 3 * out.pm_std_error
    ok = hits >= 28 and pf_hits >= 28 and pm_hits >= 28
    report(9, ok, f"total within 3 SE in {hits}/30 runs, P_f^c {pf_hits}/30, P_m^c {pm_hits}/30")
    assert ok


def test_criterion_10_constraint_honoring(constrained_n4, dp_instances):
    cases = []
    for c in constrained_n4[:50]:
        for sol in (c["greedy"], c["exact"], c["random"][0]):
            cases.append((c["sensors"], sol, CONSTRAINED_N4))
    for s in dp_instances:
        sol = greedy_dp(s, CONSTRAINED_N10, 2)
        if sol.feasible:
            cases.append((s, sol, CONSTRAINED_N10))
    violations = 0
    for i, (s, sol, p) in enumerate(cases):
        assert sol.feasible
        out = run_simulation(s, None, sol.rule, p, 100_000, seed=i)
        violations += out.pu_success_rate < p.alpha - 3 * out.pu_success_std_error
    ok = violations == 0
    report(10, ok, f"{len(cases) - violations}/{len(cases)} feasible solutions meet alpha - 3 SE in simulation")
    assert ok


def test_criterion_11_hard_instances():
    balanced = hard_instance([1, 1])
    unbalanced = hard_instance([1, 2])
    gap_bal = min_nonnegative_scaled_gap(*balanced)
    gap_unbal = min_nonnegative_scaled_gap(*unbalanced)
    ok = gap_bal == 0 and gap_unbal > 0
    report(
        11,
        ok,
        f"scaled gap y=(1,1): {gap_bal}, y=(1,2): {gap_unbal}; "
        f"float log gaps {min_nonnegative_log_gap(*balanced):.2e}, {min_nonnegative_log_gap(*unbalanced):.2e}",
    )
    assert ok
