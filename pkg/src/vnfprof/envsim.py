"""Seeded surrogate VNF: maps (allocation, input rate) to KPI readings.

The response surface is the minimum of a link term, a CPU-capacity term and
(for the inline IDS) a memory-starvation factor, with queueing-style latency
growth as the VNF nears saturation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .domain import (
    ACTION_MOVES,
    ACTIONS,
    DEFAULT_GRID,
    Action,
    KpiMeasurement,
    KpiTargets,
    ProfilerState,
    ResourceGrid,
    ResourceVector,
    kpi_flags,
)

LATENCY_FLOOR = 0.02  # floor on (1 - rho) in the latency denominator


class VnfKind(str, enum.Enum):
    SNORT_INLINE = "inline"
    SNORT_PASSIVE = "passive"
    VFW = "vfw"

    @classmethod
    def parse(cls, text: str) -> "VnfKind":
        aliases = {"snortinline": "inline", "snort_inline": "inline", "snortpassive": "passive",
                   "snort_passive": "passive", "firewall": "vfw"}
        key = text.strip().lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            allowed = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown VNF kind {text!r}; expected one of: {allowed}") from None


@dataclass(frozen=True)
class VnfModel:
    """Surrogate constants for one VNF type.

    cpu_sat is the allocation (cores) at which throughput stops growing with
    vCPU; cpu_headroom > 1 means the utilisation reading pegs at 100% slightly
    before throughput saturates. mem_floor only applies to the inline IDS,
    which needs memory to buffer packets under inspection.
    """

    kind: VnfKind
    cpu_sat: float
    or_cap: float
    link_eff: float
    base_latency: float
    mem_base: float
    mem_per_mbps: float
    cpu_headroom: float = 1.5
    mem_floor: float | None = None
    noise_std: float = 0.03

    def __post_init__(self):
        if self.or_cap <= 0:
            raise ValueError("or_cap must be positive")
        if not 0 < self.link_eff <= 1:
            raise ValueError("link_eff must lie in (0, 1]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.cpu_sat <= 0 or self.base_latency <= 0:
            raise ValueError("cpu_sat and base_latency must be positive")

    @property
    def cpu_cost(self) -> float:
        """Cores consumed per Mbps served."""
        return self.cpu_headroom * self.cpu_sat / self.or_cap

    def with_noise(self, noise_std: float) -> "VnfModel":
        return replace(self, noise_std=noise_std)


DEFAULT_MODELS = {
    VnfKind.SNORT_INLINE: VnfModel(VnfKind.SNORT_INLINE, cpu_sat=1.05, or_cap=550.0, link_eff=0.9273,
                                   base_latency=0.375, mem_base=950.0, mem_per_mbps=0.2, mem_floor=1500.0,
                                   cpu_headroom=1.8),
    # working sets small enough that memory never binds at any probed input rate up to 900 Mbps
    VnfKind.SNORT_PASSIVE: VnfModel(VnfKind.SNORT_PASSIVE, cpu_sat=1.0, or_cap=525.0, link_eff=0.9246,
                                    base_latency=0.375, mem_base=800.0, mem_per_mbps=0.2),
    VnfKind.VFW: VnfModel(VnfKind.VFW, cpu_sat=0.9, or_cap=780.0, link_eff=0.9445,
                          base_latency=0.375, mem_base=800.0, mem_per_mbps=0.2, cpu_headroom=2.5),
}


def default_model(kind: VnfKind | str) -> VnfModel:
    if isinstance(kind, str):
        kind = VnfKind.parse(kind)
    return DEFAULT_MODELS[kind]


def capacity(model: VnfModel, resources: ResourceVector) -> float:
    """Maximum rate (Mbps) the VNF can process with this allocation."""
    mem_factor = 1.0
    if model.mem_floor is not None:
        mem_factor = min(1.0, resources.mem / model.mem_floor)
    return model.or_cap * min(1.0, resources.vcpu / model.cpu_sat) * mem_factor


def _served(model: VnfModel, resources: ResourceVector, input_rate: float) -> tuple[float, float]:
    cap = capacity(model, resources)
    return min(input_rate, model.link_eff * resources.lc, cap), cap


def _kpis(model: VnfModel, resources: ResourceVector, input_rate: float, out: float, cap: float) -> KpiMeasurement:
    rho = min(1.0, out / cap) if cap > 0 else 1.0
    cpu = 100.0 * min(1.0, model.cpu_cost * out / resources.vcpu)
    mem = 100.0 * min(1.0, (model.mem_base + model.mem_per_mbps * input_rate) / resources.mem)
    latency = model.base_latency / max(LATENCY_FLOOR, 1.0 - rho)
    return KpiMeasurement(cpu, mem, latency, out)


def measure(model: VnfModel, resources: ResourceVector, input_rate: float,
            rng: np.random.Generator | None = None) -> KpiMeasurement:
    """One KPI reading. Noise-free when `rng` is None or noise_std is 0."""
    if input_rate <= 0:
        raise ValueError("input_rate must be positive")
    served, cap = _served(model, resources, input_rate)
    out = served
    if rng is not None and model.noise_std > 0:
        out = served * (1.0 + model.noise_std * rng.standard_normal())
    out = min(max(out, 0.0), input_rate, resources.lc)
    return _kpis(model, resources, input_rate, out, cap)


def measure_runs(model: VnfModel, resources: ResourceVector, input_rate: float, runs: int,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """`runs` readings as an array of shape (runs, 4): cpu, mem, latency, output."""
    served, cap = _served(model, resources, input_rate)
    out = np.full(runs, served)
    if rng is not None and model.noise_std > 0:
        out = served * (1.0 + model.noise_std * rng.standard_normal(runs))
    out = np.minimum(np.maximum(out, 0.0), min(input_rate, resources.lc))
    rho = np.minimum(1.0, out / cap)
    cpu = 100.0 * np.minimum(1.0, model.cpu_cost * out / resources.vcpu)
    mem = np.full(runs, 100.0 * min(1.0, (model.mem_base + model.mem_per_mbps * input_rate) / resources.mem))
    latency = model.base_latency / np.maximum(LATENCY_FLOOR, 1.0 - rho)
    return np.column_stack([cpu, mem, latency, out])


@dataclass(frozen=True)
class InputSchedule:
    """Piecewise-constant input rate: ((first_episode, rate_mbps), ...)."""

    segments: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.segments or self.segments[0][0] != 0:
            raise ValueError("schedule must start at episode 0")
        starts = [s for s, _ in self.segments]
        if starts != sorted(starts):
            raise ValueError("schedule segments must be sorted by episode")

    @classmethod
    def constant(cls, rate: float) -> "InputSchedule":
        return cls(((0, float(rate)),))

    @classmethod
    def ramp(cls, start: float, stop: float, step: float, every: int) -> "InputSchedule":
        """Rates start, start+step, ... up to stop, each held for `every` episodes."""
        rates = np.arange(start, stop + 1e-9, step)
        return cls(tuple((i * every, float(r)) for i, r in enumerate(rates)))

    def rate_at(self, episode: int) -> float:
        rate = self.segments[0][1]
        for first, r in self.segments:
            if episode >= first:
                rate = r
            else:
                break
        return rate


@dataclass(frozen=True)
class EnvConfig:
    model: VnfModel
    targets: KpiTargets = KpiTargets()
    seed: int = 0
    initial_input_rate: float = 50.0
    grid: ResourceGrid = DEFAULT_GRID
    schedule: InputSchedule | None = None

    def __post_init__(self):
        if self.initial_input_rate <= 0:
            raise ValueError("initial_input_rate must be positive")

    def rate_at(self, episode: int) -> float:
        if self.schedule is None:
            return self.initial_input_rate
        return self.schedule.rate_at(episode)


@dataclass
class EnvPoint:
    """Cached noise-free quantities for one grid point at one input rate."""

    resources: ResourceVector
    served: float
    cap: float
    out_max: float
    cpu_per_out: float
    mem_util: float


class VnfEnv:
    """Stateful environment: holds the current allocation and its own RNG stream."""

    def __init__(self, config: EnvConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.model = config.model
        self.grid = config.grid
        self.targets = config.targets
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.input_rate = config.initial_input_rate
        self.episode = 0
        self.idx = self.grid.indices(self.grid.median())
        self.kpi: KpiMeasurement | None = None
        self._cache: dict = {}

    # -- noise-free probes used by offline profiling and the oracle
    def measure_noise_free(self, resources: ResourceVector, input_rate: float) -> KpiMeasurement:
        return measure(self.model, resources, input_rate, None)

    def kpi_ok(self, resources: ResourceVector, input_rate: float) -> bool:
        return self.targets.satisfied(self.measure_noise_free(resources, input_rate))

    def overload_free(self, resources: ResourceVector, input_rate: float) -> bool:
        return self.targets.overload_free(self.measure_noise_free(resources, input_rate))

    # -- episodic interface
    @property
    def resources(self) -> ResourceVector:
        return self.grid.vector(self.idx)

    def reset(self, resources: ResourceVector | None = None, episode: int | None = None) -> ProfilerState:
        if episode is not None:
            self.episode = episode
            self.input_rate = self.config.rate_at(episode)
        self.idx = self.grid.indices(resources if resources is not None else self.grid.median())
        self.kpi = self._observe()
        return self.state()

    def state(self, scalarised_q: float = 0.0) -> ProfilerState:
        return ProfilerState(self.resources, self.kpi, self.input_rate, scalarised_q)

    def step(self, action: Action | int) -> tuple[ProfilerState, KpiMeasurement]:
        aid = action if isinstance(action, int) else ACTIONS.index(action)
        self.step_fast(aid)
        return self.state(), self.kpi

    def step_fast(self, aid: int) -> tuple[int, int, int]:
        """Move one grid step (clamped) and draw exactly one new reading."""
        pos, delta = ACTION_MOVES[aid]
        if pos >= 0:
            idx = list(self.idx)
            idx[pos] = min(self.grid.shape[pos] - 1, max(0, idx[pos] + delta))
            self.idx = tuple(idx)
        self.kpi = self._observe()
        return self.idx

    def flags(self) -> int:
        return kpi_flags(self.kpi, self.input_rate, self.targets)

    def _point(self) -> EnvPoint:
        key = (self.idx, self.input_rate)
        pt = self._cache.get(key)
        if pt is None:
            res = self.grid.vector(self.idx)
            served, cap = _served(self.model, res, self.input_rate)
            mem = 100.0 * min(1.0, (self.model.mem_base + self.model.mem_per_mbps * self.input_rate) / res.mem)
            pt = self._cache[key] = EnvPoint(res, served, cap, min(self.input_rate, res.lc),
                                             100.0 * self.model.cpu_cost / res.vcpu, mem)
        return pt

    def _observe(self) -> KpiMeasurement:
        pt = self._point()
        # one normal draw per observation keeps seeded streams aligned
        z = self.rng.standard_normal()
        out = pt.served * (1.0 + self.model.noise_std * z)
        if out < 0.0:
            out = 0.0
        elif out > pt.out_max:
            out = pt.out_max
        rho = out / pt.cap if pt.cap > 0 else 1.0
        if rho > 1.0:
            rho = 1.0
        cpu = pt.cpu_per_out * out
        if cpu > 100.0:
            cpu = 100.0
        latency = self.model.base_latency / max(LATENCY_FLOOR, 1.0 - rho)
        return KpiMeasurement(cpu, pt.mem_util, latency, out)


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleAnchor:
    """Expected noise-free OR over a box of grid points at a given input rate."""

    name: str
    expected_or: float
    input_rate: float = 800.0
    vcpu: tuple[float, float] = (0.6, 1.8)
    mem: tuple[float, float] = (1000.0, 1600.0)
    lc: tuple[float, float] = (400.0, 800.0)
    reltol: float = 0.10

    def points(self, grid: ResourceGrid) -> list[ResourceVector]:
        out = []
        for idx in grid.points():
            r = grid.vector(idx)
            if (self.vcpu[0] - 1e-9 <= r.vcpu <= self.vcpu[1] + 1e-9
                    and self.mem[0] - 1e-9 <= r.mem <= self.mem[1] + 1e-9
                    and self.lc[0] - 1e-9 <= r.lc <= self.lc[1] + 1e-9):
                out.append(r)
        return out


DEFAULT_ANCHORS = {
    VnfKind.SNORT_INLINE: (
        OracleAnchor("inline OR plateau ~550 Mbps for vcpu>=1.4, mem>=1500 at lc 600", 550.0,
                     vcpu=(1.4, 1.8), mem=(1500.0, 1600.0), lc=(600.0, 600.0)),
    ),
    VnfKind.SNORT_PASSIVE: (
        OracleAnchor("passive OR plateau ~525 Mbps for vcpu in [1.0, 1.8] at lc 600", 525.0,
                     vcpu=(1.0, 1.8), lc=(600.0, 600.0)),
    ),
    VnfKind.VFW: (
        OracleAnchor("vfw OR/LC ~94.45% at full resources", 0.9445 * 800.0,
                     vcpu=(1.8, 1.8), mem=(1600.0, 1600.0), lc=(800.0, 800.0)),
    ),
}


def anchor_violations(model: VnfModel, anchors: Sequence[OracleAnchor],
                      grid: ResourceGrid = DEFAULT_GRID) -> list[str]:
    bad = []
    for a in anchors:
        for r in a.points(grid):
            got = measure(model, r, a.input_rate).output_rate
            if abs(got - a.expected_or) > a.reltol * a.expected_or:
                bad.append(f"{a.name}: OR {got:.1f} at {r.as_tuple()} vs expected {a.expected_or:.1f}")
                break
    return bad


_FIT_FIELDS = ("or_cap", "cpu_sat", "link_eff")


def calibrate(model: VnfModel, anchors: Sequence[OracleAnchor] | None = None,
              grid: ResourceGrid = DEFAULT_GRID) -> VnfModel:
    """Fit or_cap, cpu_sat and link_eff so every anchor holds within its tolerance.

    Raises CalibrationError listing the anchors still violated after fitting.
    """
    if anchors is None:
        anchors = DEFAULT_ANCHORS[model.kind]
    if not anchor_violations(model, anchors, grid):
        return model
    pts = [(a, r) for a in anchors for r in a.points(grid)]
    if not pts:
        raise CalibrationError("anchors select no grid points")

    def build(x):
        return replace(model, or_cap=float(x[0]), cpu_sat=float(x[1]), link_eff=float(x[2]))

    def residuals(x):
        m = build(x)
        return [(measure(m, r, a.input_rate).output_rate - a.expected_or) / a.expected_or for a, r in pts]

    x0 = np.array([getattr(model, f) for f in _FIT_FIELDS])
    lo = [1.0, grid.vcpu.min, 0.05]
    hi = [1e5, grid.vcpu.max, 1.0]
    x0 = np.clip(x0, lo, hi)
    fit = least_squares(residuals, x0, bounds=(lo, hi), method="trf")
    fitted = build(fit.x)
    bad = anchor_violations(fitted, anchors, grid)
    if bad:
        raise CalibrationError("calibration failed; violated anchors:\n  " + "\n  ".join(bad))
    return fitted


def make_env(kind: VnfKind | str, seed: int = 0, input_rate: float = 50.0, noise: bool = True,
             targets: KpiTargets = KpiTargets(), grid: ResourceGrid = DEFAULT_GRID,
             schedule: InputSchedule | None = None, model: VnfModel | None = None) -> VnfEnv:
    model = model or default_model(kind)
    if not noise:
        model = model.with_noise(0.0)
    cfg = EnvConfig(model, targets, seed, input_rate, grid, schedule)
    return VnfEnv(cfg)
