"""Monte-Carlo simulation of the slotted sensing protocol.

Each slot the PU is idle with probability ``pi0`` (i.i.d. across slots).
Every sensing SU reports independently given the PU state, the fusion rule
decides, and the slot is credited:

* ``1 - T_c`` when the channel is declared idle and the PU really is idle,
* ``gamma / (1 - pi0)`` when the channel is declared busy and the PU is
  active, so that the PU earns ``gamma`` per slot on average when protected.

Random numbers come from numpy's PCG64 bit generator seeded with ``seed``;
a run is reproducible for a fixed (instance, rule, seed, chunk size).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator, TextIO

import numpy as np

from .fusion import DecisionRule
from .model import DimensionError, ObservationVector, SensorSet, SystemParams

DEFAULT_CHUNK = 1 << 16
MAX_SIM_K = 62


@dataclass(frozen=True)
class SlotTrace:
    pu_active: int
    observations: ObservationVector
    decision: int
    su_transmitted: bool
    collision: bool
    slot_throughput: float


@dataclass(frozen=True)
class SimSummary:
    slots: int
    empirical_total: float
    std_error: float
    empirical_pf_coop: float
    empirical_pm_coop: float
    pf_std_error: float
    pm_std_error: float
    collision_rate: float
    pu_success_rate: float
    pu_success_std_error: float
    su_throughput: float
    pu_throughput: float


@dataclass
class _Chunk:
    active: np.ndarray
    codes: np.ndarray
    decisions: np.ndarray
    throughput: np.ndarray


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n) if n > 0 else float("nan")


def _chunks(sensors, subset, rule: DecisionRule, params: SystemParams, slots: int, seed, chunk: int) -> Iterator[_Chunk]:
    idx = list(sensors.resolve(subset))
    k = len(idx)
    if rule.k != k:
        raise DimensionError(f"rule expects {rule.k} reports, subset has {k} SUs")
    if k > MAX_SIM_K:
        raise DimensionError(f"simulation supports at most {MAX_SIM_K} sensing SUs")
    if slots < 1:
        raise ValueError("need at least one slot")
    rng = np.random.Generator(np.random.PCG64(seed))
    p_f = sensors.p_f[idx]
    detect = 1.0 - sensors.p_m[idx]
    weights = np.left_shift(np.int64(1), np.arange(k, dtype=np.int64))
    pu_credit = params.gamma / (1.0 - params.pi0)
    done = 0
    while done < slots:
        n = min(chunk, slots - done)
        active = rng.random(n) >= params.pi0
        p_one = np.where(active[:, None], detect, p_f)
        bits = rng.random((n, k)) < p_one
        codes = bits.astype(np.int64) @ weights if k else np.zeros(n, dtype=np.int64)
        decisions = np.asarray(rule.decide_many(codes), dtype=np.uint8)
        busy = decisions.astype(bool)
        throughput = np.where(~busy & ~active, params.t_d, 0.0) + np.where(busy & active, pu_credit, 0.0)
        yield _Chunk(active, codes, decisions, throughput)
        done += n


def run_simulation(
    sensors: SensorSet,
    subset,
    rule: DecisionRule,
    params: SystemParams,
    slots: int,
    seed=None,
    chunk: int = DEFAULT_CHUNK,
) -> SimSummary:
    total = total_sq = su = pu = 0.0
    n_idle = n_active = false_alarms = misses = 0
    for c in _chunks(sensors, subset, rule, params, slots, seed, chunk):
        busy = c.decisions.astype(bool)
        total += float(c.throughput.sum())
        total_sq += float(np.square(c.throughput).sum())
        su += float(c.throughput[~busy].sum())
        pu += float(c.throughput[busy].sum())
        n_active += int(c.active.sum())
        n_idle += int((~c.active).sum())
        false_alarms += int((busy & ~c.active).sum())
        misses += int((~busy & c.active).sum())
    mean = total / slots
    var = max(0.0, (total_sq - slots * mean * mean) / (slots - 1)) if slots > 1 else 0.0
    pf = false_alarms / n_idle if n_idle else float("nan")
    pm = misses / n_active if n_active else float("nan")
    return SimSummary(
        slots=slots,
        empirical_total=mean,
        std_error=math.sqrt(var / slots),
        empirical_pf_coop=pf,
        empirical_pm_coop=pm,
        pf_std_error=_binomial_se(pf, n_idle),
        pm_std_error=_binomial_se(pm, n_active),
        collision_rate=misses / slots,
        pu_success_rate=1.0 - pm,
        pu_success_std_error=_binomial_se(pm, n_active),
        su_throughput=su / slots,
        pu_throughput=pu / slots,
    )


def iter_slots(
    sensors: SensorSet,
    subset,
    rule: DecisionRule,
    params: SystemParams,
    slots: int,
    seed=None,
    chunk: int = DEFAULT_CHUNK,
) -> Iterator[SlotTrace]:
    """Per-slot traces drawn from the same stream as :func:`run_simulation`."""
    k = rule.k
    for c in _chunks(sensors, subset, rule, params, slots, seed, chunk):
        for b, code, o, thr in zip(c.active, c.codes, c.decisions, c.throughput):
            o = int(o)
            b = int(b)
            yield SlotTrace(
                pu_active=b,
                observations=ObservationVector.from_code(int(code), k),
                decision=o,
                su_transmitted=o == 0,
                collision=bool(b and o == 0),
                slot_throughput=float(thr),
            )


def write_trace_csv(out: TextIO, traces) -> int:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["slot", "B", "obs_hex", "O", "collision", "throughput"])
    n = 0
    for n, t in enumerate(traces, start=1):
        writer.writerow([n - 1, t.pu_active, format(t.observations.code, "x"), t.decision, int(t.collision), repr(t.slot_throughput)])
    return n
