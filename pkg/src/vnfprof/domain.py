"""Core value types: resource grids, KPI targets, state keys and the action algebra."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

RESOURCES = ("vcpu", "mem", "lc")

# one-step moves on a 3-resource grid, in tie-break order
INCREASE, DECREASE, HOLD = "increase", "decrease", "hold"

# output keeps up with the offered load when OR >= this fraction of IR
OUTPUT_KEEPUP = 0.95

N_FLAGS = 4


class GridError(ValueError):
    """A resource value does not sit on its grid."""


class ResourceRangeError(ValueError):
    """A resource value lies outside its bounds."""


@dataclass(frozen=True)
class ResourceBounds:
    min: float
    max: float
    step: float

    def __post_init__(self):
        if not self.min < self.max:
            raise ValueError(f"bounds need min < max, got {self.min}..{self.max}")
        if self.step <= 0:
            raise ValueError("step must be positive")
        n = (self.max - self.min) / self.step
        if abs(n - round(n)) > 1e-6:
            raise ValueError(f"range {self.min}..{self.max} is not a multiple of step {self.step}")

    @property
    def n_levels(self) -> int:
        return int(round((self.max - self.min) / self.step)) + 1

    @property
    def levels(self) -> tuple[float, ...]:
        return tuple(self.value_at(i) for i in range(self.n_levels))

    @property
    def median(self) -> float:
        return self.value_at((self.n_levels - 1) // 2)

    def value_at(self, idx: int) -> float:
        if not 0 <= idx < self.n_levels:
            raise GridError(f"level index {idx} outside 0..{self.n_levels - 1}")
        return round(self.min + idx * self.step, 9)

    def index_of(self, value: float) -> int:
        pos = (value - self.min) / self.step
        idx = int(round(pos))
        if abs(pos - idx) > 1e-6 or not 0 <= idx < self.n_levels:
            raise GridError(f"{value} is not on the grid {self.min}:{self.step}:{self.max}")
        return idx

    def clamp(self, value: float) -> float:
        return min(self.max, max(self.min, value))


@dataclass(frozen=True)
class ResourceVector:
    """Allocated vCPU cores, memory (MB) and output link capacity (Mbps)."""

    vcpu: float
    mem: float
    lc: float

    def __getitem__(self, key: str | int) -> float:
        if isinstance(key, str):
            return getattr(self, key)
        return self.as_tuple()[key]

    def __iter__(self):
        return iter(self.as_tuple())

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.vcpu, self.mem, self.lc)

    def replace(self, **kw) -> "ResourceVector":
        vals = {"vcpu": self.vcpu, "mem": self.mem, "lc": self.lc}
        vals.update(kw)
        return ResourceVector(**vals)


@dataclass(frozen=True)
class ResourceGrid:
    """Bounds and step for each of the three resources."""

    vcpu: ResourceBounds = ResourceBounds(0.6, 1.8, 0.2)
    mem: ResourceBounds = ResourceBounds(1000.0, 1600.0, 100.0)
    lc: ResourceBounds = ResourceBounds(400.0, 800.0, 50.0)

    def __getitem__(self, name: str) -> ResourceBounds:
        return getattr(self, name)

    @property
    def bounds(self) -> tuple[ResourceBounds, ResourceBounds, ResourceBounds]:
        return (self.vcpu, self.mem, self.lc)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(b.n_levels for b in self.bounds)

    @property
    def n_points(self) -> int:
        return math.prod(self.shape)

    @property
    def n_keys(self) -> int:
        return self.n_points * (1 << N_FLAGS)

    def indices(self, res: ResourceVector) -> tuple[int, int, int]:
        return (self.vcpu.index_of(res.vcpu), self.mem.index_of(res.mem), self.lc.index_of(res.lc))

    def vector(self, idx: Sequence[int]) -> ResourceVector:
        return ResourceVector(self.vcpu.value_at(idx[0]), self.mem.value_at(idx[1]), self.lc.value_at(idx[2]))

    def point_index(self, idx: Sequence[int]) -> int:
        _, nm, nl = self.shape
        return (idx[0] * nm + idx[1]) * nl + idx[2]

    def points(self):
        """All grid points in (vcpu, mem, lc) ascending order."""
        nv, nm, nl = self.shape
        for i in range(nv):
            for j in range(nm):
                for k in range(nl):
                    yield (i, j, k)

    def minimum(self) -> ResourceVector:
        return ResourceVector(self.vcpu.min, self.mem.min, self.lc.min)

    def maximum(self) -> ResourceVector:
        return ResourceVector(self.vcpu.max, self.mem.max, self.lc.max)

    def median(self) -> ResourceVector:
        return ResourceVector(self.vcpu.median, self.mem.median, self.lc.median)

    def snap(self, value: float, resource: str) -> float:
        b = self[resource]
        idx = int(round((b.clamp(value) - b.min) / b.step))
        return b.value_at(idx)

    def snap_vector(self, res: ResourceVector) -> ResourceVector:
        """Nearest grid point, clamping each coordinate into its bounds."""
        return ResourceVector(*(self.snap(res[r], r) for r in RESOURCES))


DEFAULT_GRID = ResourceGrid()


@dataclass(frozen=True)
class KpiMeasurement:
    cpu_util: float  # percent of allocated vCPU
    mem_util: float  # percent of allocated memory
    latency: float  # ms
    output_rate: float  # Mbps


@dataclass(frozen=True)
class KpiTargets:
    """Operating targets; latency "2.5 +/- 5 ms" only binds at its upper end."""

    cpu_util_band: tuple[float, float] = (90.0, 100.0)
    mem_util_max: float = 98.0
    latency_max: float = 7.5

    def __post_init__(self):
        lo, hi = self.cpu_util_band
        if not 0 <= lo < hi <= 100:
            raise ValueError(f"cpu utilisation band must satisfy 0 <= lo < hi <= 100, got {self.cpu_util_band}")
        if not 0 < self.mem_util_max <= 100:
            raise ValueError("mem_util_max must lie in (0, 100]")
        if self.latency_max <= 0:
            raise ValueError("latency_max must be positive")

    def checks(self, kpi: KpiMeasurement) -> tuple[bool, bool, bool]:
        lo, hi = self.cpu_util_band
        return (
            lo <= kpi.cpu_util <= hi,
            kpi.mem_util <= self.mem_util_max,
            kpi.latency <= self.latency_max,
        )

    def satisfied(self, kpi: KpiMeasurement) -> bool:
        return all(self.checks(kpi))

    def overload_free(self, kpi: KpiMeasurement) -> bool:
        """Upper-limit checks only: ignores under-utilisation of the vCPU."""
        return (
            kpi.cpu_util <= self.cpu_util_band[1]
            and kpi.mem_util <= self.mem_util_max
            and kpi.latency <= self.latency_max
        )


@dataclass(frozen=True)
class WeightVector:
    cpu: float
    mem: float
    lc: float

    def __post_init__(self):
        for w in self.as_tuple():
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"weights must lie in [0, 1], got {self.as_tuple()}")
        if abs(sum(self.as_tuple()) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(self.as_tuple())!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.cpu, self.mem, self.lc)

    def label(self) -> str:
        return "w(" + ",".join(f"{w:.4g}" for w in self.as_tuple()) + ")"


EQUAL_WEIGHTS = WeightVector(1 / 3, 1 / 3, 1 / 3)


@dataclass(frozen=True)
class ProfilerState:
    """Nine-element observation: 3 allocations, 4 KPI readings, input rate, scalarised Q."""

    resources: ResourceVector
    kpi: KpiMeasurement
    input_rate: float
    scalarised_q: float = 0.0

    def as_vector(self) -> tuple[float, ...]:
        k = self.kpi
        return (*self.resources.as_tuple(), k.cpu_util, k.mem_util, k.latency, k.output_rate,
                self.input_rate, self.scalarised_q)


class StateKey(NamedTuple):
    vcpu_idx: int
    mem_idx: int
    lc_idx: int
    kpi_flags: int  # bit0 cpu, bit1 mem, bit2 latency, bit3 output keeps up

    def encode(self, grid: ResourceGrid = DEFAULT_GRID) -> int:
        return (grid.point_index(self[:3]) << N_FLAGS) | self.kpi_flags

    @classmethod
    def decode(cls, code: int, grid: ResourceGrid = DEFAULT_GRID) -> "StateKey":
        flags = code & ((1 << N_FLAGS) - 1)
        p = code >> N_FLAGS
        _, nm, nl = grid.shape
        return cls(p // (nm * nl), (p // nl) % nm, p % nl, flags)


ALL_FLAGS = (1 << N_FLAGS) - 1


def kpi_flags(kpi: KpiMeasurement, input_rate: float, targets: KpiTargets) -> int:
    cpu_ok, mem_ok, lat_ok = targets.checks(kpi)
    keeps_up = kpi.output_rate >= OUTPUT_KEEPUP * input_rate
    return int(cpu_ok) | int(mem_ok) << 1 | int(lat_ok) << 2 | int(keeps_up) << 3


def discretize(state: ProfilerState, targets: KpiTargets, grid: ResourceGrid = DEFAULT_GRID) -> StateKey:
    i, j, k = grid.indices(state.resources)
    return StateKey(i, j, k, kpi_flags(state.kpi, state.input_rate, targets))


@dataclass(frozen=True)
class Action:
    target: str | None
    direction: str

    def __post_init__(self):
        if self.direction == HOLD:
            object.__setattr__(self, "target", None)
        elif self.target not in RESOURCES or self.direction not in (INCREASE, DECREASE):
            raise ValueError(f"bad action {self.target!r}/{self.direction!r}")

    def __str__(self):
        return HOLD if self.direction == HOLD else f"{self.direction}_{self.target}"

    @classmethod
    def parse(cls, text: str) -> "Action":
        if text == HOLD:
            return HOLD_ACTION
        direction, _, target = text.partition("_")
        return cls(target, direction)

    @property
    def delta(self) -> int:
        return {INCREASE: 1, DECREASE: -1, HOLD: 0}[self.direction]

    def reverse(self) -> "Action":
        if self.direction == HOLD:
            return self
        return Action(self.target, DECREASE if self.direction == INCREASE else INCREASE)


HOLD_ACTION = Action(None, HOLD)
ACTIONS: tuple[Action, ...] = (
    *(Action(r, INCREASE) for r in RESOURCES),
    *(Action(r, DECREASE) for r in RESOURCES),
    HOLD_ACTION,
)
ACTION_ID = {a: i for i, a in enumerate(ACTIONS)}
# per action id: (resource position or -1, index delta)
ACTION_MOVES = tuple((RESOURCES.index(a.target) if a.target else -1, a.delta) for a in ACTIONS)


def normalize_resource(value: float, bounds: ResourceBounds) -> float:
    if not bounds.min - 1e-9 <= value <= bounds.max + 1e-9:
        raise ResourceRangeError(f"{value} outside [{bounds.min}, {bounds.max}]")
    return min(1.0, max(0.0, (value - bounds.min) / (bounds.max - bounds.min)))


def apply_action(resources: ResourceVector, action: Action, grid: ResourceGrid = DEFAULT_GRID) -> ResourceVector:
    if action.direction == HOLD:
        return resources
    b = grid[action.target]
    idx = b.index_of(resources[action.target]) + action.delta
    idx = min(b.n_levels - 1, max(0, idx))
    return resources.replace(**{action.target: b.value_at(idx)})


def feasible_action_ids(idx: Sequence[int], shape: Sequence[int], frozen: Sequence[str] = ()) -> tuple[int, ...]:
    out = []
    for aid, (pos, delta) in enumerate(ACTION_MOVES):
        if pos < 0:
            out.append(aid)
            continue
        if RESOURCES[pos] in frozen:
            continue
        nxt = idx[pos] + delta
        if 0 <= nxt < shape[pos]:
            out.append(aid)
    return tuple(out)


def feasible_actions(resources: ResourceVector, grid: ResourceGrid = DEFAULT_GRID,
                     frozen: Sequence[str] = ()) -> list[Action]:
    """Actions that actually move the allocation, plus `hold`.

    Resources listed in `frozen` are never moved.
    """
    ids = feasible_action_ids(grid.indices(resources), grid.shape, frozen)
    return [ACTIONS[i] for i in ids]


@dataclass
class FeasibilityTable:
    """Per grid point feasible action ids, cached for the training loop."""

    grid: ResourceGrid
    frozen: tuple[str, ...] = ()
    _ids: dict = field(default_factory=dict, repr=False)

    def __call__(self, idx: tuple[int, int, int]) -> tuple[int, ...]:
        ids = self._ids.get(idx)
        if ids is None:
            ids = self._ids[idx] = feasible_action_ids(idx, self.grid.shape, self.frozen)
        return ids
