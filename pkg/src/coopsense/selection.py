"""Choosing which SUs report when the control slot cannot fit all of them.

The value of a sensing set ``D`` is ``F*(D)``, the Bayesian (optimal) total on
``D``.  Adding an SU never lowers it, so the full set is best whenever it
fits; otherwise a size-``k`` subset is picked exhaustively or by sequential
forward selection.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Sequence

from .fusion import bayes_total
from .model import BudgetExceededError, SensorSet, SystemParams

# Upper bound on C(N, k) * 2**k observation evaluations for the exhaustive search.
EXHAUSTIVE_BUDGET = 50_000_000
MONOTONICITY_MAX_N = 12
MONOTONICITY_TOL = 1e-12


@dataclass(frozen=True)
class TimingParams:
    d: float
    d_tilde: float = 0.0

    def __post_init__(self) -> None:
        if not self.d > 0.0:
            raise ValueError(f"reporting delay d must be positive, got {self.d!r}")
        if not self.d_tilde >= 0.0:
            raise ValueError(f"processing delay must be nonnegative, got {self.d_tilde!r}")

    def capacity(self, t_c: float) -> int:
        """Most SUs whose reports fit in a control slot of length ``t_c``."""
        return max(0, math.floor((t_c - self.d_tilde) / self.d))


@dataclass(frozen=True)
class SelectionResult:
    subset: tuple[int, ...]
    total: float
    per_step_gains: tuple[tuple[int, float], ...] = field(default=())

    def trace_csv(self, base_total: float) -> str:
        """SFS trace as CSV; ``base_total`` is the value of the empty set."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "chosen_su", "marginal_gain", "cumulative_total"])
        total = base_total
        for step, (su, gain) in enumerate(self.per_step_gains, start=1):
            total += gain
            writer.writerow([step, su, repr(gain), repr(total)])
        return buf.getvalue()


def subset_value(sensors: SensorSet, subset: Sequence[int], params: SystemParams) -> float:
    return bayes_total(sensors, tuple(subset), params)


def best_subset_exhaustive(
    sensors: SensorSet, params: SystemParams, k: int, budget: int = EXHAUSTIVE_BUDGET
) -> SelectionResult:
    """Best size-``k`` sensing set by trying every one; ties go to the
    lexicographically first subset."""
    n = sensors.n
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside 0..{n}")
    work = math.comb(n, k) * (1 << k)
    if work > budget:
        raise BudgetExceededError(f"exhaustive selection needs {work} evaluations, budget is {budget}")
    best: tuple[int, ...] = ()
    best_value = -math.inf
    for cand in combinations(range(n), k):
        v = subset_value(sensors, cand, params)
        if v > best_value:
            best, best_value = cand, v
    return SelectionResult(best, best_value)


def sfs_select(sensors: SensorSet, params: SystemParams, k: int) -> SelectionResult:
    """Sequential forward selection: repeatedly add the SU with the largest
    marginal gain, smallest index on ties."""
    n = sensors.n
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside 0..{n}")
    chosen: list[int] = []
    current = subset_value(sensors, (), params)
    gains = []
    for _ in range(k):
        best_su, best_value = -1, -math.inf
        for su in range(n):
            if su in chosen:
                continue
            v = subset_value(sensors, sorted(chosen + [su]), params)
            if v > best_value:
                best_su, best_value = su, v
        chosen.append(best_su)
        gains.append((best_su, best_value - current))
        current = best_value
    return SelectionResult(tuple(sorted(chosen)), current, tuple(gains))


def all_subset_values(sensors: SensorSet, params: SystemParams) -> list[float]:
    """F* for every subset, indexed by bitmask over SU indices."""
    n = sensors.n
    if n > MONOTONICITY_MAX_N:
        raise BudgetExceededError(f"the subset lattice check is limited to N <= {MONOTONICITY_MAX_N}")
    return [
        subset_value(sensors, [i for i in range(n) if (mask >> i) & 1], params)
        for mask in range(1 << n)
    ]


def exact_subset_values(sensors: SensorSet, params: SystemParams) -> list[Fraction]:
    """F* for every subset in exact rational arithmetic, indexed by bitmask.

    Inputs are taken as the exact binary fractions they hold, so the result
    is free of rounding: any drop between nested subsets is a real violation.
    """
    n = sensors.n
    if n > MONOTONICITY_MAX_N:
        raise BudgetExceededError(f"the subset lattice check is limited to N <= {MONOTONICITY_MAX_N}")
    su = (1 - Fraction(params.t_c)) * Fraction(params.pi0)
    gamma = Fraction(params.gamma)
    p_f = [Fraction(x.p_f) for x in sensors.sensors]
    p_m = [Fraction(x.p_m) for x in sensors.sensors]
    tables: list[tuple[list[Fraction], list[Fraction]]] = [([su], [gamma])]
    values = [max(su, gamma)]
    for mask in range(1, 1 << n):
        top = mask.bit_length() - 1
        g, h = tables[mask ^ (1 << top)]
        f, m = p_f[top], p_m[top]
        g2 = [x * (1 - f) for x in g] + [x * f for x in g]
        h2 = [x * m for x in h] + [x * (1 - m) for x in h]
        tables.append((g2, h2))
        values.append(sum(max(a, b) for a, b in zip(g2, h2)))
    return values


def verify_monotonicity(
    sensors: SensorSet, params: SystemParams, tol: float = MONOTONICITY_TOL, exact: bool = False
) -> bool:
    """True iff adding any SU to any subset never lowers F* (beyond ``tol``).

    With ``exact=True`` the values are exact rationals and ``tol`` is ignored;
    floating-point F* can dip by an ulp where adding an SU changes no decision.
    """
    n = sensors.n
    if exact:
        values = exact_subset_values(sensors, params)
        tol = 0
    else:
        values = all_subset_values(sensors, params)
    for mask, v in enumerate(values):
        for i in range(n):
            if not (mask >> i) & 1 and values[mask | (1 << i)] < v - tol:
                return False
    return True


def choose_sensing_set(
    sensors: SensorSet,
    params: SystemParams,
    timing: TimingParams,
    method: str = "sfs",
) -> SelectionResult:
    """Full set when every report fits in the control slot, else a size-k search."""
    n = sensors.n
    if n * timing.d + timing.d_tilde <= params.t_c:
        full = tuple(range(n))
        return SelectionResult(full, subset_value(sensors, full, params))
    k = min(n, timing.capacity(params.t_c))
    if method == "sfs":
        return sfs_select(sensors, params, k)
    if method == "exhaustive":
        return best_subset_exhaustive(sensors, params, k)
    raise ValueError(f"unknown selection method {method!r}")
