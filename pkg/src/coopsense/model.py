"""Domain types and exact likelihood arithmetic for cooperative sensing.

Observation vectors are encoded as integers ``0 .. 2**k - 1`` where bit ``i``
holds the report of the ``i``-th SU of the sensing subset.  This encoding is
the iteration order for every enumeration in the package and the index of
every rule table.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Explicit enumeration of all 2**k observation vectors is refused beyond this.
ENUMERATION_CAP = 20


class DimensionError(ValueError):
    """Observation length and sensing subset disagree, or the subset is invalid."""


class BudgetExceededError(RuntimeError):
    """A computation would exceed its enumeration or memory budget."""


class InfeasibleError(RuntimeError):
    """No decision rule satisfies the PU throughput constraint."""


def _check_open_unit(name: str, value: float) -> None:
    if not (0.0 < value < 1.0) or math.isnan(value):
        raise ValueError(f"{name} must lie strictly inside (0, 1), got {value!r}")


@dataclass(frozen=True)
class SensorProfile:
    """Sensing accuracy of one SU: false-alarm and mis-detection probabilities."""

    p_f: float
    p_m: float

    def __post_init__(self) -> None:
        _check_open_unit("p_f", self.p_f)
        _check_open_unit("p_m", self.p_m)

    @property
    def informative(self) -> bool:
        return self.p_f + self.p_m < 1.0


@dataclass(frozen=True)
class SensorSet:
    """Ordered set of interfering SUs.  Index order is the reporting order."""

    sensors: tuple[SensorProfile, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if len(self.sensors) < 1:
            raise ValueError("a sensor set needs at least one SU")

    @classmethod
    def from_arrays(cls, p_f: Sequence[float], p_m: Sequence[float]) -> "SensorSet":
        if len(p_f) != len(p_m):
            raise DimensionError(f"p_f has {len(p_f)} entries but p_m has {len(p_m)}")
        return cls(tuple(SensorProfile(float(f), float(m)) for f, m in zip(p_f, p_m)))

    @property
    def n(self) -> int:
        return len(self.sensors)

    def __len__(self) -> int:
        return len(self.sensors)

    def __getitem__(self, i: int) -> SensorProfile:
        return self.sensors[i]

    @property
    def p_f(self) -> np.ndarray:
        return np.array([s.p_f for s in self.sensors], dtype=float)

    @property
    def p_m(self) -> np.ndarray:
        return np.array([s.p_m for s in self.sensors], dtype=float)

    def resolve(self, subset: Iterable[int] | None) -> tuple[int, ...]:
        """Normalize a sensing subset to a tuple of valid, distinct indices.

        ``None`` means the full set in index order.
        """
        if subset is None:
            return tuple(range(self.n))
        idx = tuple(int(i) for i in subset)
        if len(set(idx)) != len(idx):
            raise DimensionError(f"duplicate SU index in subset {idx}")
        for i in idx:
            if not 0 <= i < self.n:
                raise DimensionError(f"SU index {i} outside 0..{self.n - 1}")
        return idx


@dataclass(frozen=True)
class SystemParams:
    """Slot timing, PU activity prior and PU throughput requirements."""

    t_c: float
    pi0: float
    gamma: float
    alpha: float = 0.0

    def __post_init__(self) -> None:
        _check_open_unit("t_c", self.t_c)
        _check_open_unit("pi0", self.pi0)
        if not self.gamma >= 0.0 or math.isinf(self.gamma):
            raise ValueError(f"gamma must be a finite nonnegative number, got {self.gamma!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha!r}")

    @property
    def t_d(self) -> float:
        return 1.0 - self.t_c

    @property
    def su_scale(self) -> float:
        """Prefactor of the SU side, (1 - T_c) * pi0."""
        return (1.0 - self.t_c) * self.pi0

    def replace(self, **changes: float) -> "SystemParams":
        fields = dict(t_c=self.t_c, pi0=self.pi0, gamma=self.gamma, alpha=self.alpha)
        fields.update(changes)
        return SystemParams(**fields)


@dataclass(frozen=True)
class ObservationVector:
    """Reports of the sensing SUs, one bit each, in reporting order."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"observation bits must be 0 or 1, got {bits}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_code(cls, code: int, k: int) -> "ObservationVector":
        if not 0 <= code < (1 << k):
            raise DimensionError(f"code {code} does not fit in {k} bits")
        return cls(tuple((code >> i) & 1 for i in range(k)))

    @property
    def code(self) -> int:
        return sum(b << i for i, b in enumerate(self.bits))

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class ObservationWeights:
    """SU-side weight ``g`` and PU-side weight ``h`` of one observation vector."""

    g: float
    h: float


def _as_bits(obs: ObservationVector | Sequence[int]) -> tuple[int, ...]:
    if isinstance(obs, ObservationVector):
        return obs.bits
    return ObservationVector(tuple(obs)).bits


def _aligned(obs, sensors: SensorSet, subset) -> tuple[tuple[int, ...], tuple[int, ...]]:
    bits = _as_bits(obs)
    idx = sensors.resolve(subset)
    if len(bits) != len(idx):
        raise DimensionError(
            f"observation has {len(bits)} bits but the sensing subset has {len(idx)} SUs"
        )
    return bits, idx


def likelihood_idle(obs, sensors: SensorSet, subset=None) -> float:
    """P(o | B=0): product of P_f over reporting-active SUs and 1-P_f over the rest."""
    bits, idx = _aligned(obs, sensors, subset)
    p = 1.0
    for b, i in zip(bits, idx):
        pf = sensors[i].p_f
        p *= pf if b else 1.0 - pf
    return p


def likelihood_active(obs, sensors: SensorSet, subset=None) -> float:
    """P(o | B=1): product of 1-P_m over reporting-active SUs and P_m over the rest."""
    bits, idx = _aligned(obs, sensors, subset)
    p = 1.0
    for b, i in zip(bits, idx):
        pm = sensors[i].p_m
        p *= 1.0 - pm if b else pm
    return p


def weights(obs, sensors: SensorSet, subset, params: SystemParams) -> ObservationWeights:
    return ObservationWeights(
        g=params.su_scale * likelihood_idle(obs, sensors, subset),
        h=params.gamma * likelihood_active(obs, sensors, subset),
    )


def check_enumerable(k: int, cap: int = ENUMERATION_CAP) -> None:
    if k > cap:
        raise BudgetExceededError(
            f"enumerating 2**{k} observation vectors exceeds the cap of 2**{cap}"
        )


def _product_table(when_zero: np.ndarray, when_one: np.ndarray) -> np.ndarray:
    # Bit i of the code selects factor when_one[i] (bit set) or when_zero[i].
    # Factors multiply in index order, matching the pointwise products.
    table = np.ones(1)
    for a, b in zip(when_zero, when_one):
        table = np.concatenate((table * a, table * b))
    return table


def likelihood_tables(sensors: SensorSet, subset=None) -> tuple[np.ndarray, np.ndarray]:
    """P(o|B=0) and P(o|B=1) for every code o, as two arrays of length 2**k."""
    idx = sensors.resolve(subset)
    check_enumerable(len(idx))
    p_f = sensors.p_f[list(idx)]
    p_m = sensors.p_m[list(idx)]
    return _product_table(1.0 - p_f, p_f), _product_table(p_m, 1.0 - p_m)


def weight_tables(sensors: SensorSet, subset, params: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    """G and H for every code: ``G = (1-T_c) pi0 P(o|B=0)``, ``H = gamma P(o|B=1)``."""
    idle, active = likelihood_tables(sensors, subset)
    return params.su_scale * idle, params.gamma * active


def popcounts(k: int) -> np.ndarray:
    """Number of set bits of every code ``0 .. 2**k - 1``."""
    counts = np.zeros(1, dtype=np.int64)
    for _ in range(k):
        counts = np.concatenate((counts, counts + 1))
    return counts


# -- instance files ---------------------------------------------------------

INSTANCE_FIELDS = ("n", "p_f", "p_m", "t_c", "pi0", "gamma", "alpha")


def instance_to_dict(sensors: SensorSet, params: SystemParams) -> dict:
    return {
        "n": sensors.n,
        "p_f": [s.p_f for s in sensors.sensors],
        "p_m": [s.p_m for s in sensors.sensors],
        "t_c": params.t_c,
        "pi0": params.pi0,
        "gamma": params.gamma,
        "alpha": params.alpha,
    }


def instance_from_dict(doc: dict) -> tuple[SensorSet, SystemParams]:
    missing = [f for f in INSTANCE_FIELDS if f not in doc]
    if missing:
        raise ValueError(f"instance is missing fields: {', '.join(missing)}")
    sensors = SensorSet.from_arrays(doc["p_f"], doc["p_m"])
    if sensors.n != int(doc["n"]):
        raise DimensionError(f"n={doc['n']} but {sensors.n} sensor profiles were given")
    params = SystemParams(
        t_c=float(doc["t_c"]),
        pi0=float(doc["pi0"]),
        gamma=float(doc["gamma"]),
        alpha=float(doc["alpha"]),
    )
    return sensors, params


def load_instance(path: str | Path) -> tuple[SensorSet, SystemParams]:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def save_instance(path: str | Path, sensors: SensorSet, params: SystemParams) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(sensors, params), fh, indent=2)
        fh.write("\n")
