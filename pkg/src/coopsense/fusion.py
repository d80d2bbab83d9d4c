"""Fusion rules over hard (one-bit) SU reports and their exact evaluation.

Three rule representations share one small interface (``k``, ``decide``,
``decide_many``, ``table``, ``to_dict``):

* :class:`TableRule` -- an explicit decision per observation code,
* :class:`KofNRule` -- decide "active" when at least ``t`` of ``k`` SUs report it,
* :class:`BayesRule` -- the likelihood comparison evaluated on demand.

A decision of 0 means "PU idle, schedule an SU"; 1 means "PU active, stay off".
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (
    ENUMERATION_CAP,
    BudgetExceededError,
    DimensionError,
    SensorSet,
    SystemParams,
    _aligned,
    check_enumerable,
    likelihood_tables,
    popcounts,
    weight_tables,
)

# Beyond this many SUs the Bayes comparison switches to sums of logs.
LOG_DOMAIN_THRESHOLD = 30
BRUTEFORCE_MAX_K = 4


class DecisionRule:
    """Common surface of all rule representations."""

    k: int

    def decide(self, code: int) -> int:
        raise NotImplementedError

    def decide_many(self, codes: np.ndarray) -> np.ndarray:
        return np.fromiter((self.decide(int(c)) for c in codes), dtype=np.uint8, count=len(codes))

    def table(self) -> np.ndarray:
        """Decisions for every code ``0 .. 2**k - 1`` as a uint8 array."""
        check_enumerable(self.k)
        return self.decide_many(np.arange(1 << self.k, dtype=np.int64))

    def to_dict(self) -> dict:
        raise NotImplementedError


def _check_k(k: int) -> None:
    if k < 1:
        raise DimensionError(f"a decision rule needs at least one report, got k={k}")


@dataclass(frozen=True, eq=False)
class TableRule(DecisionRule):
    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.array(self.bits, dtype=np.uint8)
        n = bits.shape[0]
        k = n.bit_length() - 1
        if bits.ndim != 1 or n != (1 << k):
            raise DimensionError(f"rule table length must be a power of two, got {bits.shape}")
        _check_k(k)
        if np.any(bits > 1):
            raise ValueError("rule table entries must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def k(self) -> int:
        return self.bits.shape[0].bit_length() - 1

    @classmethod
    def constant(cls, value: int, k: int) -> "TableRule":
        return cls(np.full(1 << k, value, dtype=np.uint8))

    @classmethod
    def from_int(cls, encoding: int, k: int) -> "TableRule":
        """Rule whose decision for code ``c`` is bit ``c`` of ``encoding``."""
        n = 1 << k
        return cls(np.array([(encoding >> c) & 1 for c in range(n)], dtype=np.uint8))

    def to_int(self) -> int:
        return sum(1 << int(c) for c in np.flatnonzero(self.bits))

    def decide(self, code: int) -> int:
        return int(self.bits[code])

    def decide_many(self, codes: np.ndarray) -> np.ndarray:
        return self.bits[np.asarray(codes, dtype=np.int64)]

    def table(self) -> np.ndarray:
        return self.bits

    def to_dict(self) -> dict:
        width = max(1, (1 << self.k) // 4)
        return {"kind": "table", "k": self.k, "bits": format(self.to_int(), f"0{width}x")}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TableRule) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())


@dataclass(frozen=True)
class KofNRule(DecisionRule):
    t: int
    k: int

    def __post_init__(self) -> None:
        _check_k(self.k)
        if not 1 <= self.t <= self.k:
            raise ValueError(f"threshold t={self.t} outside 1..{self.k}")

    def decide(self, code: int) -> int:
        return int(bin(code).count("1") >= self.t)

    def decide_many(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        ones = np.zeros(codes.shape, dtype=np.int64)
        for i in range(self.k):
            ones += (codes >> i) & 1
        return (ones >= self.t).astype(np.uint8)

    def table(self) -> np.ndarray:
        check_enumerable(self.k)
        return (popcounts(self.k) >= self.t).astype(np.uint8)

    def to_dict(self) -> dict:
        return {"kind": "kofn", "k": self.k, "t": self.t}


@dataclass(frozen=True)
class BayesRule(DecisionRule):
    sensors: SensorSet
    subset: tuple[int, ...]
    params: SystemParams

    def __post_init__(self) -> None:
        object.__setattr__(self, "subset", self.sensors.resolve(self.subset))
        _check_k(len(self.subset))

    @property
    def k(self) -> int:
        return len(self.subset)

    def decide(self, code: int) -> int:
        bits = tuple((code >> i) & 1 for i in range(self.k))
        return bayes_decide(bits, self.sensors, self.subset, self.params)

    def decide_many(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        if self.k <= ENUMERATION_CAP:
            return self.table()[codes]
        if self.params.gamma == 0.0:
            return np.zeros(codes.shape, dtype=np.uint8)
        idx = list(self.subset)
        p_f, p_m = self.sensors.p_f[idx], self.sensors.p_m[idx]
        log_g = np.full(codes.shape, math.log(self.params.su_scale))
        log_h = np.full(codes.shape, math.log(self.params.gamma))
        for i in range(self.k):
            on = ((codes >> i) & 1).astype(bool)
            log_g += np.where(on, math.log(p_f[i]), math.log1p(-p_f[i]))
            log_h += np.where(on, math.log1p(-p_m[i]), math.log(p_m[i]))
        return (log_g < log_h).astype(np.uint8)

    def table(self) -> np.ndarray:
        check_enumerable(self.k)
        g, h = weight_tables(self.sensors, self.subset, self.params)
        return (g < h).astype(np.uint8)

    def to_dict(self) -> dict:
        return {
            "kind": "bayes",
            "k": self.k,
            "subset": list(self.subset),
            "p_f": [self.sensors[i].p_f for i in range(self.sensors.n)],
            "p_m": [self.sensors[i].p_m for i in range(self.sensors.n)],
            "t_c": self.params.t_c,
            "pi0": self.params.pi0,
            "gamma": self.params.gamma,
        }


def rule_from_dict(doc: dict) -> DecisionRule:
    kind = doc.get("kind")
    if kind == "table":
        return TableRule.from_int(int(doc["bits"], 16), int(doc["k"]))
    if kind == "kofn":
        return KofNRule(int(doc["t"]), int(doc["k"]))
    if kind == "bayes":
        sensors = SensorSet.from_arrays(doc["p_f"], doc["p_m"])
        params = SystemParams(doc["t_c"], doc["pi0"], doc["gamma"])
        return BayesRule(sensors, tuple(doc["subset"]), params)
    if kind == "count_threshold":
        from .dp import CountThresholdRule

        return CountThresholdRule.from_dict(doc)
    raise ValueError(f"unknown rule kind {kind!r}")


# -- the Bayesian rule ------------------------------------------------------


def bayes_decide(obs, sensors: SensorSet, subset, params: SystemParams) -> int:
    """Decide 0 iff G(o) >= H(o); ties go to 0."""
    bits, idx = _aligned(obs, sensors, subset)
    if len(idx) > LOG_DOMAIN_THRESHOLD:
        if params.gamma == 0.0:
            return 0
        log_g = math.log(params.su_scale)
        log_h = math.log(params.gamma)
        for b, i in zip(bits, idx):
            s = sensors[i]
            log_g += math.log(s.p_f) if b else math.log1p(-s.p_f)
            log_h += math.log1p(-s.p_m) if b else math.log(s.p_m)
        return 0 if log_g >= log_h else 1
    # Same multiplication order as likelihood_tables, so tables and pointwise
    # decisions agree bit for bit.
    p0 = 1.0
    p1 = 1.0
    for b, i in zip(bits, idx):
        s = sensors[i]
        p0 *= s.p_f if b else 1.0 - s.p_f
        p1 *= 1.0 - s.p_m if b else s.p_m
    return 0 if params.su_scale * p0 >= params.gamma * p1 else 1


def rule_from_bayes(sensors: SensorSet, subset, params: SystemParams) -> DecisionRule:
    """Materialize the Bayesian rule as a table, or a predicate past the enumeration cap."""
    rule = BayesRule(sensors, subset, params)
    if rule.k > ENUMERATION_CAP:
        return rule
    return TableRule(rule.table())


def majority_threshold(k: int) -> int:
    """Strict majority: more than half of the ``k`` reports."""
    return k // 2 + 1


def k_of_n_rule(t: int, k: int) -> KofNRule:
    return KofNRule(t, k)


def or_rule(k: int) -> KofNRule:
    return KofNRule(1, k)


def and_rule(k: int) -> KofNRule:
    return KofNRule(k, k)


def majority_rule(k: int) -> KofNRule:
    return KofNRule(majority_threshold(k), k)


# -- evaluation -------------------------------------------------------------


@dataclass(frozen=True)
class RuleEvaluation:
    p_f_coop: float
    p_m_coop: float
    su_throughput: float
    pu_throughput: float

    @property
    def total(self) -> float:
        return self.su_throughput + self.pu_throughput


def evaluate_rule(rule: DecisionRule, sensors: SensorSet, subset, params: SystemParams) -> RuleEvaluation:
    """Exact cooperative error rates and expected throughputs of ``rule``.

    The cooperative error probabilities are summed over the complementary
    decision region (``P_f^c = sum_{f=1} P(o|B=0)``), which equals
    ``1 - sum_{f=0} P(o|B=0)`` without the cancellation error.
    """
    idx = sensors.resolve(subset)
    if rule.k != len(idx):
        raise DimensionError(f"rule expects {rule.k} reports, subset has {len(idx)} SUs")
    check_enumerable(len(idx))
    idle, active = likelihood_tables(sensors, idx)
    active_mask = rule.table().astype(bool)
    idle_mask = ~active_mask
    return RuleEvaluation(
        p_f_coop=float(idle[active_mask].sum()),
        p_m_coop=float(active[idle_mask].sum()),
        su_throughput=params.su_scale * float(idle[idle_mask].sum()),
        pu_throughput=params.gamma * float(active[active_mask].sum()),
    )


def bayes_total(sensors: SensorSet, subset, params: SystemParams) -> float:
    """Optimal Problem-A objective on ``subset``: the sum of max(G, H) over all codes.

    An empty subset means deciding on the prior alone.
    """
    idx = sensors.resolve(subset)
    if not idx:
        return max(params.su_scale, params.gamma)
    return evaluate_rule(rule_from_bayes(sensors, idx, params), sensors, idx, params).total


def optimal_rule_bruteforce(
    sensors: SensorSet, subset, params: SystemParams
) -> tuple[TableRule, RuleEvaluation]:
    """Search every one of the 2**(2**k) decision tables; first maximum wins."""
    idx = sensors.resolve(subset)
    k = len(idx)
    _check_k(k)
    if k > BRUTEFORCE_MAX_K:
        raise BudgetExceededError(f"brute-force rule search is limited to k <= {BRUTEFORCE_MAX_K}")
    g, h = weight_tables(sensors, idx, params)
    n_obs = 1 << k
    encodings = np.arange(1 << n_obs, dtype=np.int64)
    bits = ((encodings[:, None] >> np.arange(n_obs)) & 1).astype(float)
    totals = (1.0 - bits) @ g + bits @ h
    best = TableRule.from_int(int(np.argmax(totals)), k)
    return best, evaluate_rule(best, sensors, idx, params)


def evaluate_baselines(
    sensors: SensorSet, subset, params: SystemParams
) -> dict[str, RuleEvaluation]:
    """Bayesian, majority, AND and OR rules evaluated on the same subset."""
    idx = sensors.resolve(subset)
    k = len(idx)
    rules: dict[str, DecisionRule] = {
        "bayes": rule_from_bayes(sensors, idx, params),
        "majority": majority_rule(k),
        "and": and_rule(k),
        "or": or_rule(k),
    }
    return {name: evaluate_rule(rule, sensors, idx, params) for name, rule in rules.items()}


def rule_agreement(a: DecisionRule, b: DecisionRule) -> bool:
    if a.k != b.k:
        return False
    return bool(np.array_equal(a.table(), b.table()))


__all__: Sequence[str] = (
    "DecisionRule",
    "TableRule",
    "KofNRule",
    "BayesRule",
    "RuleEvaluation",
    "bayes_decide",
    "rule_from_bayes",
    "k_of_n_rule",
    "majority_threshold",
    "majority_rule",
    "and_rule",
    "or_rule",
    "evaluate_rule",
    "bayes_total",
    "optimal_rule_bruteforce",
    "evaluate_baselines",
    "rule_from_dict",
    "rule_agreement",
)
