"""Throughput maximization under a minimum PU throughput.

Every observation with ``G(o) < H(o)`` is always decided 1 (PU active); only
the remaining "movable" observations are in play.  Keeping a movable
observation at 0 earns ``G - H`` more than moving it to 1 but spends ``H`` of
the slack ``U - alpha*gamma``, which turns the choice into a 0/1 knapsack.

All PU-side quantities here are in units of ``H``, so the constraint reads
``sum_{f(o)=1} H(o) >= alpha * gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .fusion import DecisionRule, TableRule, evaluate_rule
from .model import (
    BudgetExceededError,
    SensorSet,
    SystemParams,
    weight_tables,
)

FEASIBILITY_TOL = 1e-12
# Ratios closer than this (relative) are treated as ties in the greedy order.
RATIO_TIE_RTOL = 1e-12
ORACLE_MAX_ITEMS = 20


@dataclass(frozen=True)
class MovableItem:
    code: int
    g: float
    h: float

    @property
    def ratio(self) -> float:
        return self.g / self.h


@dataclass(frozen=True)
class ConstrainedSolution:
    rule: DecisionRule | None
    total: float
    pu_side_sum: float
    feasible: bool
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rule": None if self.rule is None else self.rule.to_dict(),
            "total": self.total,
            "pu_side_sum": self.pu_side_sum,
            "feasible": self.feasible,
            "diagnostics": dict(self.diagnostics),
        }


def infeasible_solution(**diagnostics: float) -> ConstrainedSolution:
    return ConstrainedSolution(None, float("nan"), float("nan"), False, dict(diagnostics))


def partition_sums(decisions: np.ndarray, g: np.ndarray, h: np.ndarray) -> dict[str, float]:
    """The aggregate sums used in the approximation argument.

    ``A`` is the H-mass of the fixed observations (G < H); ``B``/``B_prime``
    are the G- and H-mass of movable observations decided 1; ``C``/``C_prime``
    the same for movable observations decided 0.  ``U`` is the total H-mass
    and ``W = A + B + C`` the unconstrained optimum.
    """
    fixed = g < h
    ones = decisions.astype(bool)
    chi = ~fixed & ones
    psi = ~fixed & ~ones
    sums = {
        "A": float(h[fixed].sum()),
        "B": float(g[chi].sum()),
        "B_prime": float(h[chi].sum()),
        "C": float(g[psi].sum()),
        "C_prime": float(h[psi].sum()),
        "U": float(h.sum()),
    }
    sums["W"] = sums["A"] + sums["B"] + sums["C"]
    return sums


def _solution(decisions: np.ndarray, g, h, sensors, idx, params, **extra) -> ConstrainedSolution:
    rule = TableRule(decisions)
    ev = evaluate_rule(rule, sensors, idx, params)
    target = params.alpha * params.gamma
    diagnostics = partition_sums(decisions, g, h)
    diagnostics.update(extra)
    return ConstrainedSolution(
        rule=rule,
        total=ev.total,
        pu_side_sum=ev.pu_throughput,
        feasible=ev.pu_throughput >= target - FEASIBILITY_TOL,
        diagnostics=diagnostics,
    )


def ratio_order(g: np.ndarray, h: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Sort ``codes`` by non-increasing G/H; ties by smaller H, then smaller code.

    Ratios that agree to ``RATIO_TIE_RTOL`` count as ties, so observations that
    are mathematically tied but differ by rounding still follow the H rule.
    """
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size == 0:
        return codes
    gc, hc = g[codes], h[codes]
    ratio = gc / hc
    first = np.lexsort((codes, hc, -ratio))
    r = ratio[first]
    starts = np.ones(r.size, dtype=bool)
    starts[1:] = ~np.isclose(r[1:], r[:-1], rtol=RATIO_TIE_RTOL, atol=0.0)
    group = np.cumsum(starts)
    second = np.lexsort((codes[first], hc[first], group))
    return codes[first][second]


def greedy_constrained(sensors: SensorSet, subset, params: SystemParams) -> ConstrainedSolution:
    """Greedy approximation for the PU-constrained problem.

    Start with every observation decided 1.  If the fixed observations alone
    meet the PU target, return the Bayesian rule.  Otherwise walk the movable
    observations by non-increasing G/H and flip them to 0 while their
    cumulative H stays within ``U - alpha*gamma``; stop at the first that
    does not fit.
    """
    idx = sensors.resolve(subset)
    g, h = weight_tables(sensors, idx, params)
    target = params.alpha * params.gamma
    # sum_o P(o|B=1) = 1, so the total H-mass is gamma.
    total_h = params.gamma
    # Unreachable for alpha <= 1; kept so the greedy checks feasibility before it starts.
    if total_h < target:
        return infeasible_solution(U=total_h)

    decisions = np.ones(g.size, dtype=np.uint8)
    fixed = g < h
    sum1 = float(h[fixed].sum())
    if sum1 >= target:
        decisions[~fixed] = 0
        return _solution(decisions, g, h, sensors, idx, params, moved=0)

    order = ratio_order(g, h, np.flatnonzero(~fixed))
    budget = total_h - target
    sum2 = 0.0
    kept = 0
    for code in order:
        if sum2 + h[code] > budget:
            break
        sum2 += h[code]
        decisions[code] = 0
        kept += 1
    return _solution(decisions, g, h, sensors, idx, params, moved=int(order.size - kept))


def random_selection_constrained(
    sensors: SensorSet, subset, params: SystemParams, seed=None
) -> ConstrainedSolution:
    """Baseline: start from the Bayesian rule and move random movable
    observations to 1 until the PU target is met."""
    idx = sensors.resolve(subset)
    g, h = weight_tables(sensors, idx, params)
    target = params.alpha * params.gamma
    fixed = g < h
    decisions = fixed.astype(np.uint8)
    pu = float(h[fixed].sum())
    moved = 0
    if pu < target:
        rng = np.random.default_rng(seed)
        for code in rng.permutation(np.flatnonzero(~fixed)):
            decisions[code] = 1
            pu += h[code]
            moved += 1
            if pu >= target:
                break
    return _solution(decisions, g, h, sensors, idx, params, moved=moved)


def knapsack_view(sensors: SensorSet, subset, params: SystemParams) -> tuple[list[MovableItem], float]:
    """Movable observations as knapsack items, and the capacity ``U - alpha*gamma``.

    Selecting an item means keeping it at decision 0: it earns ``g - h`` and
    weighs ``h``.
    """
    idx = sensors.resolve(subset)
    g, h = weight_tables(sensors, idx, params)
    items = [MovableItem(int(c), float(g[c]), float(h[c])) for c in np.flatnonzero(g >= h)]
    return items, params.gamma - params.alpha * params.gamma


def _subset_sums(values: np.ndarray) -> np.ndarray:
    # Entry s holds the sum of values[i] over the set bits i of s.
    sums = np.zeros(1)
    for v in values:
        sums = np.concatenate((sums, sums + v))
    return sums


def exact_constrained_bruteforce(
    sensors: SensorSet, subset, params: SystemParams, max_items: int = ORACLE_MAX_ITEMS
) -> ConstrainedSolution:
    """Exact optimum by trying every split of the movable observations."""
    idx = sensors.resolve(subset)
    g, h = weight_tables(sensors, idx, params)
    target = params.alpha * params.gamma
    if params.gamma < target:
        return infeasible_solution(U=params.gamma)
    movable = np.flatnonzero(g >= h)
    if movable.size > max_items:
        raise BudgetExceededError(
            f"{movable.size} movable observations exceed the oracle limit of {max_items}"
        )
    weight = _subset_sums(h[movable])
    value = _subset_sums(g[movable] - h[movable])
    budget = params.gamma - target
    value[weight > budget + FEASIBILITY_TOL] = -np.inf
    best = int(np.argmax(value))
    decisions = (g < h).astype(np.uint8)
    for bit, code in enumerate(movable):
        if not (best >> bit) & 1:
            decisions[code] = 1
    return _solution(decisions, g, h, sensors, idx, params, moved=int(movable.size - bin(best).count("1")))


MILP_REL_GAP = 1e-9


def exact_constrained_milp(
    sensors: SensorSet, subset, params: SystemParams, time_limit: float = 60.0
) -> ConstrainedSolution:
    """Exact optimum of the knapsack over movable observations via HiGHS.

    Intended for movable sets too large for subset enumeration.  Item values
    are rescaled by their maximum so the solver tolerances stay meaningful.
    """
    idx = sensors.resolve(subset)
    g, h = weight_tables(sensors, idx, params)
    target = params.alpha * params.gamma
    if params.gamma < target:
        return infeasible_solution(U=params.gamma)
    movable = np.flatnonzero(g >= h)
    decisions = (g < h).astype(np.uint8)
    if movable.size == 0:
        return _solution(decisions, g, h, sensors, idx, params, moved=0)
    value = g[movable] - h[movable]
    weight = h[movable]
    budget = params.gamma - target
    vscale = float(value.max()) or 1.0
    wscale = float(weight.max())
    res = milp(
        c=-value / vscale,
        constraints=LinearConstraint((weight / wscale)[None, :], -np.inf, budget / wscale),
        integrality=np.ones(movable.size),
        bounds=Bounds(0, 1),
        options={"mip_rel_gap": MILP_REL_GAP, "time_limit": time_limit},
    )
    if res.x is None:
        raise BudgetExceededError(f"MILP oracle failed: {res.message}")
    keep = res.x > 0.5
    # Guard against solver tolerance admitting a marginally overweight set.
    while keep.any() and float(weight[keep].sum()) > budget + FEASIBILITY_TOL:
        kept = np.flatnonzero(keep)
        keep[kept[np.argmin(value[kept] / weight[kept])]] = False
    decisions[movable[~keep]] = 1
    return _solution(decisions, g, h, sensors, idx, params, moved=int((~keep).sum()))


def is_boundary_case(sensors: SensorSet, subset, params: SystemParams) -> bool:
    """True when the Bayesian rule is already feasible or no movable
    observation can stay at 0; both greedy and random selection are then
    optimal."""
    idx = sensors.resolve(subset)
    g, h = weight_tables(sensors, idx, params)
    target = params.alpha * params.gamma
    fixed = g < h
    if float(h[fixed].sum()) >= target:
        return True
    movable_h = h[~fixed]
    return movable_h.size == 0 or float(movable_h.min()) > params.gamma - target


# -- hard instances ----------------------------------------------------------

HARD_INSTANCE_MAX_Y = 300


def hard_instance(
    y: Sequence[int], t_c: float = 0.2, pi0: float = 0.5
) -> tuple[SensorSet, SystemParams]:
    """Instance whose closest-to-balanced movable observation solves PARTITION on ``y``.

    Each SU gets ``P_f = P_m = 1 / (1 + 10**y_i)`` so that
    ``log10((1-P_f)/P_m) = y_i`` and ``log10(P_f/(1-P_m)) = -y_i``.  The SU and
    PU prefactors are equal, and ``alpha`` is set so that the fixed
    observations plus the lightest movable one exactly meet the target.
    """
    ys = [int(v) for v in y]
    if not ys:
        raise ValueError("need at least one integer")
    if any(v <= 0 for v in ys):
        raise ValueError(f"partition values must be positive integers, got {ys}")
    if max(ys) > HARD_INSTANCE_MAX_Y:
        raise ValueError(f"values above {HARD_INSTANCE_MAX_Y} underflow the probabilities")
    probs = [1.0 / (1.0 + 10.0**v) for v in ys]
    sensors = SensorSet.from_arrays(probs, probs)
    base = SystemParams(t_c=t_c, pi0=pi0, gamma=(1.0 - t_c) * pi0)
    g, h = weight_tables(sensors, None, base)
    fixed = g < h
    epsilon = float(h[~fixed].min())
    alpha = min(1.0, (epsilon + float(h[fixed].sum())) / base.gamma)
    return sensors, base.replace(alpha=alpha)


def min_nonnegative_log_gap(sensors: SensorSet, params: SystemParams) -> float:
    """Smallest ``log10(G/H)`` over movable observations, in floating point."""
    g, h = weight_tables(sensors, None, params)
    movable = g >= h
    return float(np.min(np.log10(g[movable] / h[movable])))


def min_nonnegative_scaled_gap(sensors: SensorSet, params: SystemParams, r: int = 2) -> int:
    """Smallest nonnegative scaled log-ratio over all observations, in exact integers."""
    from .dp import scaled_ratio_and_active_logs, scale_logs

    scaled = scale_logs(sensors, params, r)
    j, _ = scaled_ratio_and_active_logs(scaled)
    nonneg = j[j >= 0]
    if nonneg.size == 0:
        raise ValueError("no observation has a nonnegative log-ratio")
    return int(nonneg.min())


__all__ = (
    "MovableItem",
    "ConstrainedSolution",
    "partition_sums",
    "ratio_order",
    "greedy_constrained",
    "random_selection_constrained",
    "knapsack_view",
    "exact_constrained_bruteforce",
    "exact_constrained_milp",
    "is_boundary_case",
    "hard_instance",
    "min_nonnegative_log_gap",
    "min_nonnegative_scaled_gap",
)
