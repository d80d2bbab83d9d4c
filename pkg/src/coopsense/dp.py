"""Pseudo-polynomial implementation of the constrained greedy.

Each SU contributes a fixed amount to ``log10(G/H)`` and to ``log10 P(o|B=1)``
depending on its report.  After rounding those contributions to ``r``
decimal places and scaling by ``10**r`` they are integers, and the number of
observation vectors landing on each integer pair can be counted with a 2-D
dynamic program instead of enumerating all ``2**N`` vectors.  The greedy then
runs over cells of equal (rounded) ratio and H instead of single vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from functools import lru_cache

import numpy as np

from .constrained import FEASIBILITY_TOL, ConstrainedSolution, infeasible_solution
from .fusion import DecisionRule, evaluate_rule
from .model import (
    ENUMERATION_CAP,
    BudgetExceededError,
    SensorSet,
    SystemParams,
    check_enumerable,
)

CLAMP = 1e-6
DEFAULT_MAX_CELLS = 50_000_000
MAX_COUNT_BITS = 62
# Below this occupancy bound the sparse representation is used.
SPARSE_DENSITY = 0.01


def round_scaled(value: float, r: int) -> int:
    """Round ``value`` to ``r`` decimals (ties away from zero) and scale by ``10**r``."""
    if r < 0:
        raise ValueError(f"r must be nonnegative, got {r}")
    if not math.isfinite(value):
        raise ValueError(f"cannot scale non-finite value {value!r}")
    return int(Decimal(repr(value)).scaleb(r).quantize(Decimal(1), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ScaledLogParams:
    """Integer per-SU contributions at resolution ``r``.

    A report of 0 from SU ``i`` adds ``y[i]`` to the scaled ``log10(G/H)`` and
    ``lam[i]`` to the scaled ``log10 P(o|B=1)``; a report of 1 adds ``z[i]``
    and ``mu[i]``.  ``offset`` is the scaled ``log10((1-T_c) pi0 / gamma)``,
    added once to every ratio (zero when the two prefactors are equal).
    """

    r: int
    y: tuple[int, ...]
    z: tuple[int, ...]
    lam: tuple[int, ...]
    mu: tuple[int, ...]
    offset: int = 0

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def scale(self) -> int:
        return 10**self.r

    def contribution(self, i: int, bit: int) -> tuple[int, int]:
        return (self.z[i], self.mu[i]) if bit else (self.y[i], self.lam[i])


def scale_logs(sensors: SensorSet, params: SystemParams, r: int, clamp: float = CLAMP) -> ScaledLogParams:
    if params.gamma <= 0.0:
        raise ValueError("the count-based path needs gamma > 0")
    p_f = np.clip(sensors.p_f, clamp, 1.0 - clamp)
    p_m = np.clip(sensors.p_m, clamp, 1.0 - clamp)
    y = tuple(round_scaled(math.log10((1.0 - f) / m), r) for f, m in zip(p_f, p_m))
    z = tuple(round_scaled(math.log10(f / (1.0 - m)), r) for f, m in zip(p_f, p_m))
    lam = tuple(round_scaled(math.log10(m), r) for m in p_m)
    mu = tuple(round_scaled(math.log10(1.0 - m), r) for m in p_m)
    offset = 0
    if params.su_scale != params.gamma:
        offset = round_scaled(math.log10(params.su_scale / params.gamma), r)
    return ScaledLogParams(r, y, z, lam, mu, offset)


def scaled_ratio_and_active_logs(scaled: ScaledLogParams) -> tuple[np.ndarray, np.ndarray]:
    """Scaled log-ratio (offset included) and scaled log P(o|B=1) for every code."""
    check_enumerable(scaled.n)
    j = np.zeros(1, dtype=np.int64)
    jp = np.zeros(1, dtype=np.int64)
    for i in range(scaled.n):
        j = np.concatenate((j + scaled.y[i], j + scaled.z[i]))
        jp = np.concatenate((jp + scaled.lam[i], jp + scaled.mu[i]))
    return j + scaled.offset, jp


@dataclass(frozen=True, eq=False)
class JointCountTable:
    """Counts of observation vectors per (scaled log-ratio, scaled log P(o|B=1)) cell.

    ``counts[j - m, j' - m_prime]`` is the count for raw ratio ``j`` (offset
    not included) and active log ``j'``.  Bounds follow the count
    recursion: ``m``/``M`` sum the per-SU minima/maxima of the ratio
    contributions, ``m_prime`` sums the minima of the active-log
    contributions and ``M_prime`` is the single largest one.  Since every
    active-log contribution is <= 0, no partial sum exceeds ``M_prime``.
    """

    scaled: ScaledLogParams
    m: int
    M: int
    m_prime: int
    M_prime: int
    counts: np.ndarray | None
    sparse: dict | None
    stage_totals: tuple[int, ...]
    cells_visited: int

    @property
    def n(self) -> int:
        return self.scaled.n

    @property
    def r(self) -> int:
        return self.scaled.r

    @property
    def offset(self) -> int:
        return self.scaled.offset

    @property
    def shape(self) -> tuple[int, int]:
        return (self.M - self.m + 1, self.M_prime - self.m_prime + 1)

    def cells(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nonzero cells as (ratio incl. offset, active log, count), sorted by (ratio, active)."""
        if self.counts is not None:
            a, b = np.nonzero(self.counts)
            ratio = a.astype(np.int64) + self.m
            active = b.astype(np.int64) + self.m_prime
            count = self.counts[a, b]
        else:
            keys = sorted(self.sparse)
            ratio = np.array([k[0] for k in keys], dtype=np.int64)
            active = np.array([k[1] for k in keys], dtype=np.int64)
            count = np.array([self.sparse[k] for k in keys], dtype=np.int64)
        order = np.lexsort((active, ratio))
        return ratio[order] + self.offset, active[order], count[order]

    def count(self, ratio: int, active: int) -> int:
        """Count for one cell; ``ratio`` includes the offset."""
        j = ratio - self.offset
        if self.counts is not None:
            if not (self.m <= j <= self.M and self.m_prime <= active <= self.M_prime):
                return 0
            return int(self.counts[j - self.m, active - self.m_prime])
        return int(self.sparse.get((j, active), 0))

    def total(self) -> int:
        if self.counts is not None:
            return int(self.counts.sum())
        return int(sum(self.sparse.values()))

    def to_rows(self) -> list[str]:
        """Dump as ``i j j' count`` lines for the final stage, sorted lexicographically."""
        ratio, active, count = self.cells()
        return [f"{self.n} {j} {jp} {c}" for j, jp, c in zip(ratio, active, count)]


def _shifted(cur: np.ndarray, dj: int, dk: int) -> np.ndarray:
    # out[a, b] = cur[a - dj, b - dk], zero where the source falls outside.
    out = np.zeros_like(cur)
    rows, cols = cur.shape
    if abs(dj) >= rows or abs(dk) >= cols:
        return out
    out[max(0, dj) : rows + min(0, dj), max(0, dk) : cols + min(0, dk)] = cur[
        max(0, -dj) : rows - max(0, dj), max(0, -dk) : cols - max(0, dk)
    ]
    return out


def build_joint_counts(
    sensors: SensorSet,
    params: SystemParams,
    r: int,
    max_cells: int = DEFAULT_MAX_CELLS,
    dense: bool | None = None,
) -> JointCountTable:
    """Run the counting recursion over all SUs of ``sensors``.

    By default a dense array is used unless it would exceed ``max_cells`` or
    be under 1% occupied (at most ``2**N`` cells can be nonzero); then a
    sparse map is used, which raises once its own cell count exceeds
    ``max_cells``.  ``dense`` forces either representation.
    """
    if sensors.n > MAX_COUNT_BITS:
        raise BudgetExceededError(f"counts of 2**{sensors.n} vectors overflow 64-bit integers")
    sc = scale_logs(sensors, params, r)
    n = sc.n
    m = sum(min(a, b) for a, b in zip(sc.y, sc.z))
    M = sum(max(a, b) for a, b in zip(sc.y, sc.z))
    m_prime = sum(min(a, b) for a, b in zip(sc.lam, sc.mu))
    M_prime = max(max(sc.lam), max(sc.mu))
    rows, cols = M - m + 1, M_prime - m_prime + 1

    if dense is None:
        dense = rows * cols <= max_cells and 2**n >= SPARSE_DENSITY * rows * cols
    if dense and rows * cols > max_cells:
        raise BudgetExceededError(f"dense count table needs {rows * cols} cells, budget is {max_cells}")
    if dense:
        cur = np.zeros((rows, cols), dtype=np.int64)
        cur[sc.y[0] - m, sc.lam[0] - m_prime] += 1
        cur[sc.z[0] - m, sc.mu[0] - m_prime] += 1
        totals = [int(cur.sum())]
        visited = 0
        for i in range(1, n):
            cur = _shifted(cur, sc.y[i], sc.lam[i]) + _shifted(cur, sc.z[i], sc.mu[i])
            visited += rows * cols
            totals.append(int(cur.sum()))
        return JointCountTable(sc, m, M, m_prime, M_prime, cur, None, tuple(totals), visited)

    cells: dict[tuple[int, int], int] = {}
    for key in ((sc.y[0], sc.lam[0]), (sc.z[0], sc.mu[0])):
        cells[key] = cells.get(key, 0) + 1
    totals = [sum(cells.values())]
    visited = 0
    for i in range(1, n):
        nxt: dict[tuple[int, int], int] = {}
        for (j, jp), c in cells.items():
            for dj, dk in ((sc.y[i], sc.lam[i]), (sc.z[i], sc.mu[i])):
                key = (j + dj, jp + dk)
                nxt[key] = nxt.get(key, 0) + c
        visited += len(cells)
        cells = nxt
        if len(cells) > max_cells:
            raise BudgetExceededError(f"sparse count table grew past {max_cells} cells")
        totals.append(sum(cells.values()))
    return JointCountTable(sc, m, M, m_prime, M_prime, None, cells, tuple(totals), visited)


class CountThresholdRule(DecisionRule):
    """Decision rule emitted by the count-based greedy.

    Cells are ordered by descending ratio, then ascending active log.
    Observations with negative ratio decide 1.  Cells strictly before the
    cutoff cell decide 0, cells after it decide 1, and inside the cutoff cell
    the first ``partial`` observations in code order decide 0.  With
    ``cutoff=None`` every nonnegative-ratio observation decides 0.
    """

    def __init__(self, scaled: ScaledLogParams, cutoff: tuple[int, int] | None, partial: int = 0):
        self.scaled = scaled
        self.cutoff = cutoff
        self.partial = int(partial)
        self._prefix_count = lru_cache(maxsize=None)(self._count_prefix)
        lo_j, hi_j, lo_k, hi_k = [0], [0], [0], [0]
        for i in range(scaled.n):
            lo_j.append(lo_j[-1] + min(scaled.y[i], scaled.z[i]))
            hi_j.append(hi_j[-1] + max(scaled.y[i], scaled.z[i]))
            lo_k.append(lo_k[-1] + min(scaled.lam[i], scaled.mu[i]))
            hi_k.append(hi_k[-1] + max(scaled.lam[i], scaled.mu[i]))
        self._bounds = (lo_j, hi_j, lo_k, hi_k)

    @property
    def k(self) -> int:
        return self.scaled.n

    def cell_of(self, code: int) -> tuple[int, int]:
        """(ratio incl. offset, active log) of one observation, in O(N)."""
        j = self.scaled.offset
        jp = 0
        for i in range(self.scaled.n):
            dj, dk = self.scaled.contribution(i, (code >> i) & 1)
            j += dj
            jp += dk
        return j, jp

    def _count_prefix(self, i: int, tj: int, tk: int) -> int:
        # Assignments of SUs 0..i-1 whose raw sums equal (tj, tk).
        lo_j, hi_j, lo_k, hi_k = self._bounds
        if not (lo_j[i] <= tj <= hi_j[i] and lo_k[i] <= tk <= hi_k[i]):
            return 0
        if i == 0:
            return 1
        sc = self.scaled
        return self._prefix_count(i - 1, tj - sc.y[i - 1], tk - sc.lam[i - 1]) + self._prefix_count(
            i - 1, tj - sc.z[i - 1], tk - sc.mu[i - 1]
        )

    def rank_in_cell(self, code: int) -> int:
        """Number of smaller codes that share ``code``'s cell."""
        j, jp = self.cell_of(code)
        tj = j - self.scaled.offset
        acc_j = acc_k = 0
        rank = 0
        sc = self.scaled
        for i in reversed(range(sc.n)):
            if (code >> i) & 1:
                rank += self._prefix_count(i, tj - acc_j - sc.y[i], jp - acc_k - sc.lam[i])
                acc_j += sc.z[i]
                acc_k += sc.mu[i]
            else:
                acc_j += sc.y[i]
                acc_k += sc.lam[i]
        return rank

    def decide(self, code: int) -> int:
        j, jp = self.cell_of(code)
        if j < 0:
            return 1
        if self.cutoff is None:
            return 0
        cj, ck = self.cutoff
        if (-j, jp) < (-cj, ck):
            return 0
        if (-j, jp) > (-cj, ck):
            return 1
        return 0 if self.rank_in_cell(code) < self.partial else 1

    def table(self) -> np.ndarray:
        j, jp = scaled_ratio_and_active_logs(self.scaled)
        decisions = (j < 0).astype(np.uint8)
        if self.cutoff is None:
            return decisions
        cj, ck = self.cutoff
        after = (j < cj) | ((j == cj) & (jp > ck))
        decisions[(j >= 0) & after] = 1
        in_cell = np.flatnonzero((j == cj) & (jp == ck))
        decisions[in_cell[self.partial :]] = 1
        return decisions

    @classmethod
    def from_dict(cls, doc: dict) -> "CountThresholdRule":
        scaled = ScaledLogParams(
            int(doc["r"]),
            tuple(doc["y"]),
            tuple(doc["z"]),
            tuple(doc["lambda"]),
            tuple(doc["mu"]),
            int(doc["offset"]),
        )
        cutoff = None if doc["cutoff"] is None else (int(doc["cutoff"][0]), int(doc["cutoff"][1]))
        return cls(scaled, cutoff, int(doc["partial"]))

    def to_dict(self) -> dict:
        sc = self.scaled
        return {
            "kind": "count_threshold",
            "k": self.k,
            "r": sc.r,
            "y": list(sc.y),
            "z": list(sc.z),
            "lambda": list(sc.lam),
            "mu": list(sc.mu),
            "offset": sc.offset,
            "cutoff": None if self.cutoff is None else list(self.cutoff),
            "partial": self.partial,
        }


def greedy_from_counts(
    table: JointCountTable, params: SystemParams, sensors: SensorSet
) -> ConstrainedSolution:
    """Run the constrained greedy over count-table cells.

    Each cell stands for ``count`` observations with H approximated as
    ``gamma * 10**(active / 10**r)``.  The returned ``total``,
    ``pu_side_sum`` and ``feasible`` come from exact re-evaluation of the
    emitted rule when ``N`` is enumerable; otherwise they are the count-based
    estimates.  The estimates are always in ``diagnostics``.
    """
    ratio, active, count = table.cells()
    s = float(table.scaled.scale)
    h_cell = params.gamma * np.power(10.0, active / s)
    g_cell = params.gamma * np.power(10.0, (active + ratio) / s)
    mass = count * h_cell
    target = params.alpha * params.gamma
    total_h = float(mass.sum())
    if total_h < target:
        return infeasible_solution(U=total_h)

    fixed = ratio < 0
    sum1 = float(mass[fixed].sum())
    cutoff: tuple[int, int] | None = None
    partial = 0
    consumed = np.zeros(ratio.size)
    if sum1 >= target:
        consumed[~fixed] = count[~fixed]
    else:
        movable = np.flatnonzero(~fixed)
        order = movable[np.lexsort((active[movable], -ratio[movable]))]
        budget = total_h - target
        sum2 = 0.0
        for c in order:
            if sum2 + mass[c] <= budget:
                sum2 += mass[c]
                consumed[c] = count[c]
                continue
            partial = min(int(count[c]), max(0, math.floor((budget - sum2) / h_cell[c])))
            consumed[c] = partial
            cutoff = (int(ratio[c]), int(active[c]))
            break

    rule = CountThresholdRule(table.scaled, cutoff, partial)
    est_pu = float(((count - consumed) * h_cell).sum())
    est_total = float((consumed * g_cell).sum()) + est_pu
    diagnostics = {
        "r": table.r,
        "estimated_U": total_h,
        "estimated_total": est_total,
        "estimated_pu_side_sum": est_pu,
        "exact": table.n <= ENUMERATION_CAP,
    }
    if table.n <= ENUMERATION_CAP:
        ev = evaluate_rule(rule, sensors, None, params)
        return ConstrainedSolution(
            rule, ev.total, ev.pu_throughput, ev.pu_throughput >= target - FEASIBILITY_TOL, diagnostics
        )
    return ConstrainedSolution(rule, est_total, est_pu, est_pu >= target - FEASIBILITY_TOL, diagnostics)


def greedy_dp(sensors: SensorSet, params: SystemParams, r: int = 2, max_cells: int = DEFAULT_MAX_CELLS) -> ConstrainedSolution:
    return greedy_from_counts(build_joint_counts(sensors, params, r, max_cells), params, sensors)
