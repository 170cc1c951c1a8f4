"""Offline profiling: optimal input rate search, resource influence, weighted
dataset collection and the nearest-feasible baseline predictor."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .domain import (
    DEFAULT_GRID,
    RESOURCES,
    KpiMeasurement,
    KpiTargets,
    ResourceGrid,
    ResourceVector,
    normalize_resource,
)

LOSS_TOLERANCE = 1e-9  # relative; absorbs float rounding only

DATASET_HEADER = ["vcpu", "mem_mb", "lc_mbps", "input_mbps", "cpu_util", "mem_util", "latency_ms",
                  "output_mbps", "kpi_ok"]


class InfeasibleConfiguration(ValueError):
    """KPI targets cannot be met (at the lowest probed rate, or by any record)."""


@dataclass(frozen=True)
class ProfilingRecord:
    resources: ResourceVector
    input_rate: float
    kpi: KpiMeasurement
    kpi_ok: bool

    def row(self) -> list[str]:
        r, k = self.resources, self.kpi
        vals = [r.vcpu, r.mem, r.lc, self.input_rate, k.cpu_util, k.mem_util, k.latency, k.output_rate]
        return [repr(float(v)) for v in vals] + [str(int(self.kpi_ok))]

    @classmethod
    def from_row(cls, row: Sequence[str]) -> "ProfilingRecord":
        v = [float(x) for x in row[:8]]
        return cls(ResourceVector(*v[:3]), v[3], KpiMeasurement(*v[4:8]), row[8].strip() in ("1", "True", "true"))


@dataclass(frozen=True)
class InfluenceWeights:
    vcpu: float
    mem: float
    lc: float

    def __post_init__(self):
        vals = self.as_tuple()
        if min(vals) < 0 or abs(sum(vals) - 1.0) > 1e-9:
            raise ValueError(f"influence weights must be non-negative and sum to 1, got {vals}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.vcpu, self.mem, self.lc)

    def __getitem__(self, name: str) -> float:
        return getattr(self, name)


def overload_probe(env) -> Callable[[ResourceVector, float], bool]:
    """Pass/fail probe for rate search: no overload KPI breached and no traffic lost.

    The lower end of the vCPU-utilisation band is ignored here; it flags a
    lightly loaded VNF, which is exactly where the search starts. Loss is
    judged noise-free, so a zero-loss test is exact; any slack would let a
    link-capped allocation report a higher rate than a better-provisioned one.
    """

    def ok(resources: ResourceVector, rate: float) -> bool:
        kpi = env.measure_noise_free(resources, rate)
        return env.targets.overload_free(kpi) and kpi.output_rate >= rate * (1.0 - LOSS_TOLERANCE)

    return ok


def _probe(env):
    if callable(env) and not hasattr(env, "measure_noise_free"):
        return env
    return overload_probe(env)


def optimal_ir(env, resources: ResourceVector, ir_lo: float = 50.0, ir_hi: float = 1000.0,
               resolution: float = 5.0) -> float:
    """Largest input rate (Mbps, within `resolution`) at which `resources` still meets the targets.

    Exponential ramp-up from `ir_lo` brackets the first failure, then a binary
    search narrows the bracket. `env` is either an environment (probed
    noise-free) or a callable ``(resources, rate) -> bool``.
    """
    if not ir_lo < ir_hi:
        raise ValueError("need ir_lo < ir_hi")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    ok = _probe(env)
    if not ok(resources, ir_lo):
        raise InfeasibleConfiguration(f"KPI targets fail at the lowest rate {ir_lo} Mbps for {resources}")
    lo = ir_lo
    while True:
        nxt = min(2.0 * lo, ir_hi)
        if not ok(resources, nxt):
            hi = nxt
            break
        lo = nxt
        if lo >= ir_hi:
            return ir_hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(resources, mid):
            lo = mid
        else:
            hi = mid
    return lo


def _median_with(grid: ResourceGrid, resource: str, value: float) -> ResourceVector:
    return grid.median().replace(**{resource: value})


def level_rates(env, grid: ResourceGrid = DEFAULT_GRID, **search) -> dict[str, list[float]]:
    """Optimal IR at every level of each resource, the others held at their median."""
    out = {}
    for r in RESOURCES:
        rates = []
        for v in grid[r].levels:
            try:
                rates.append(optimal_ir(env, _median_with(grid, r, v), **search))
            except InfeasibleConfiguration:
                rates.append(0.0)
        out[r] = rates
    return out


def influence_weights(env, grid: ResourceGrid = DEFAULT_GRID, **search) -> InfluenceWeights:
    """Share of optimal-IR spread owed to each resource between its bounds."""
    spread = []
    for r in RESOURCES:
        b = grid[r]
        hi = optimal_ir(env, _median_with(grid, r, b.max), **search)
        try:
            lo = optimal_ir(env, _median_with(grid, r, b.min), **search)
        except InfeasibleConfiguration:
            lo = 0.0
        spread.append(max(0.0, hi - lo))
    total = sum(spread)
    if total <= 0:
        return InfluenceWeights(1 / 3, 1 / 3, 1 - 2 / 3)
    w = [s / total for s in spread]
    w[2] = 1.0 - w[0] - w[1]
    return InfluenceWeights(*w)


def level_probabilities(weights: InfluenceWeights, rates: dict[str, list[float]]) -> dict[str, np.ndarray]:
    """Per-resource level distribution: uniform mixed, by influence weight, with
    mass on the levels where the optimal IR changes most."""
    probs = {}
    for r in RESOURCES:
        ir = np.asarray(rates[r], dtype=float)
        n = len(ir)
        gain = np.abs(np.diff(ir, prepend=ir[0]))
        # spread each step's gain over the two levels it separates
        g = gain.copy()
        g[:-1] += gain[1:]
        uniform = np.full(n, 1.0 / n)
        informative = g / g.sum() if g.sum() > 0 else uniform
        w = weights[r]
        p = (1.0 - w) * uniform + w * informative
        probs[r] = p / p.sum()
    return probs


def collect_dataset(env, weights: InfluenceWeights, samples: int, rng: np.random.Generator,
                    grid: ResourceGrid = DEFAULT_GRID, rates: dict[str, list[float]] | None = None,
                    **search) -> list[ProfilingRecord]:
    """Weighted random configurations, each measured at its own optimal IR."""
    if samples < 0:
        raise ValueError("samples must be non-negative")
    if samples == 0:
        return []
    if rates is None:
        rates = level_rates(env, grid, **search)
    probs = level_probabilities(weights, rates)
    draws = np.column_stack([rng.choice(grid[r].n_levels, size=samples, p=probs[r]) for r in RESOURCES])
    records = []
    lo = search.get("ir_lo", 50.0)
    for i, j, k in draws:
        res = grid.vector((int(i), int(j), int(k)))
        try:
            ir = optimal_ir(env, res, **search)
        except InfeasibleConfiguration:
            ir = lo
        kpi = _noisy(env, res, ir, rng)
        records.append(ProfilingRecord(res, ir, kpi, env.targets.satisfied(kpi)))
    return records


def _noisy(env, res: ResourceVector, ir: float, rng: np.random.Generator) -> KpiMeasurement:
    from .envsim import measure

    return measure(env.model, res, ir, rng)


def write_dataset(path, records: Iterable[ProfilingRecord]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_HEADER)
        for rec in records:
            w.writerow(rec.row())


def read_dataset(path) -> list[ProfilingRecord]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != DATASET_HEADER:
            raise ValueError(f"dataset header mismatch: {header}")
        return [ProfilingRecord.from_row(row) for row in rd]


@dataclass(frozen=True)
class BaselineModel:
    """Feasible records sorted cheapest first (normalised resource sum, then vcpu, mem, lc)."""

    entries: tuple[tuple[ResourceVector, float], ...]
    grid: ResourceGrid = DEFAULT_GRID


def _cost(res: ResourceVector, grid: ResourceGrid) -> float:
    return sum(normalize_resource(res[r], grid[r]) for r in RESOURCES)


def fit_baseline(dataset: Sequence[ProfilingRecord], grid: ResourceGrid = DEFAULT_GRID) -> BaselineModel:
    if not dataset:
        raise ValueError("dataset is empty")
    best: dict[ResourceVector, float] = {}
    for rec in dataset:
        if rec.kpi_ok:
            best[rec.resources] = max(best.get(rec.resources, 0.0), rec.input_rate)
    if not best:
        raise InfeasibleConfiguration("dataset has no record meeting the KPI targets")
    ordered = sorted(best.items(), key=lambda kv: (round(_cost(kv[0], grid), 9), kv[0].as_tuple()))
    return BaselineModel(tuple(ordered), grid)


def predict_baseline(model: BaselineModel, ir: float, targets: KpiTargets | None = None) -> ResourceVector:
    """Cheapest recorded configuration whose optimal IR covers `ir`.

    Records were labelled against the targets when collected; `targets` is
    accepted for interface symmetry.
    """
    for res, rate in model.entries:
        if rate >= ir:
            return res
    raise InfeasibleConfiguration(f"no recorded configuration sustains {ir} Mbps")
