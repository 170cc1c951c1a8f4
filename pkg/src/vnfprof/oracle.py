"""Exhaustive grid search: ground-truth optimum and Pareto front per VNF."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .domain import RESOURCES, KpiMeasurement, ResourceGrid, ResourceVector, normalize_resource
from .envsim import VnfKind, measure_runs

Z95 = 1.96
MIN_NOISY_RUNS = 30
OR_TOLERANCE = 0.02
ORACLE_STREAM = 0x0AC1E

ORACLE_HEADER = ["vcpu", "mem_mb", "lc_mbps", "input_mbps", "cpu_util", "mem_util", "latency_ms", "output_mbps",
                 "ci_cpu_util", "ci_mem_util", "ci_latency_ms", "ci_output_mbps", "kpi_ok", "runs"]


class InfeasibleOracle(ValueError):
    """No table entry meets the KPI targets."""


@dataclass(frozen=True)
class OracleEntry:
    resources: ResourceVector
    mean_kpi: KpiMeasurement
    ci95: tuple[float, float, float, float]
    kpi_ok: bool
    runs: int

    @property
    def output_rate(self) -> float:
        return self.mean_kpi.output_rate


@dataclass(frozen=True)
class OracleTable:
    """One entry per grid point, in ascending (vcpu, mem, lc) order."""

    kind: VnfKind
    input_rate: float
    entries: tuple[OracleEntry, ...]
    grid: ResourceGrid

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def at(self, resources: ResourceVector) -> OracleEntry:
        return self.entries[self.grid.point_index(self.grid.indices(resources))]

    def select(self, **fixed: float) -> list[OracleEntry]:
        """Entries whose named resources equal the given values, e.g. ``select(lc=600)``."""
        for name in fixed:
            if name not in RESOURCES:
                raise KeyError(f"unknown resource {name!r}")
        return [e for e in self.entries
                if all(abs(e.resources[k] - v) < 1e-9 for k, v in fixed.items())]

    def feasible(self) -> list[OracleEntry]:
        return [e for e in self.entries if e.kpi_ok]


def exhaustive_search(env, input_rate: float, runs_per_point: int = MIN_NOISY_RUNS) -> OracleTable:
    """Measure every grid point `runs_per_point` times at a fixed input rate.

    Each point draws from its own seeded sub-stream, so the table does not
    depend on evaluation order.
    """
    if runs_per_point < 1:
        raise ValueError("runs_per_point must be at least 1")
    model, grid = env.model, env.grid
    noisy = model.noise_std > 0
    if noisy and runs_per_point < MIN_NOISY_RUNS:
        raise ValueError(f"noisy search needs at least {MIN_NOISY_RUNS} runs per point")
    seed = env.config.seed
    entries = []
    for i, idx in enumerate(grid.points()):
        res = grid.vector(idx)
        rng = np.random.default_rng([seed, ORACLE_STREAM, i]) if noisy else None
        obs = measure_runs(model, res, input_rate, runs_per_point, rng)
        mean = obs.mean(axis=0)
        if runs_per_point > 1 and noisy:
            half = Z95 * obs.std(axis=0, ddof=1) / np.sqrt(runs_per_point)
        else:
            half = np.zeros(4)
        kpi = KpiMeasurement(*(float(m) for m in mean))
        entries.append(OracleEntry(res, kpi, tuple(float(h) for h in half), env.targets.satisfied(kpi),
                                   runs_per_point))
    return OracleTable(model.kind, float(input_rate), tuple(entries), grid)


def resource_cost(res: ResourceVector, grid: ResourceGrid) -> float:
    """Sum of min-max normalised allocations."""
    return sum(normalize_resource(res[r], grid[r]) for r in RESOURCES)


def _entries(table: OracleTable | Sequence[OracleEntry]) -> Sequence[OracleEntry]:
    return table.entries if isinstance(table, OracleTable) else table


def optimal_config(table: OracleTable | Sequence[OracleEntry], grid: ResourceGrid | None = None,
                   delta: float = OR_TOLERANCE) -> OracleEntry:
    """Cheapest KPI-compliant entry whose mean OR is within `delta` of the best compliant OR.

    Ties on normalised resource sum go to the smallest (vcpu, mem, lc).
    """
    entries = _entries(table)
    if grid is None:
        if not isinstance(table, OracleTable):
            raise ValueError("grid is required when passing a plain entry list")
        grid = table.grid
    ok = [e for e in entries if e.kpi_ok]
    if not ok:
        raise InfeasibleOracle("no entry meets the KPI targets")
    best = max(e.output_rate for e in ok)
    near = [e for e in ok if e.output_rate >= (1.0 - delta) * best]
    return min(near, key=lambda e: (round(resource_cost(e.resources, grid), 9), e.resources.as_tuple()))


def _objectives(entries: Sequence[OracleEntry]) -> np.ndarray:
    return np.array([(-e.output_rate, *e.resources.as_tuple()) for e in entries], dtype=float)


def dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """a dominates b when it is no worse everywhere and strictly better somewhere (minimisation)."""
    return bool(np.all(a <= b) and np.any(a < b))


def pareto_front(table: OracleTable | Sequence[OracleEntry], feasible_only: bool = True) -> list[OracleEntry]:
    """Non-dominated entries over (-OR, vcpu, mem, lc), in table order.

    Sort-and-sweep: after a lexicographic sort only earlier entries can
    dominate a later one, and checking against the front kept so far is
    enough because domination is transitive.
    """
    entries = [e for e in _entries(table) if e.kpi_ok or not feasible_only]
    if not entries:
        return []
    obj = _objectives(entries)
    order = np.lexsort(obj.T[::-1])
    kept: list[int] = []
    for i in order:
        row = obj[i]
        if kept:
            f = obj[kept]
            if np.any(np.all(f <= row, axis=1) & np.any(f < row, axis=1)):
                continue
        kept.append(int(i))
    return [entries[i] for i in sorted(kept)]


def pareto_front_bruteforce(table: OracleTable | Sequence[OracleEntry], feasible_only: bool = True) -> list[OracleEntry]:
    """Quadratic pairwise check, kept as a reference for the sweep."""
    entries = [e for e in _entries(table) if e.kpi_ok or not feasible_only]
    obj = _objectives(entries)
    return [e for i, e in enumerate(entries)
            if not any(dominates(obj[j], obj[i]) for j in range(len(entries)) if j != i)]


def _entry_row(e: OracleEntry, input_rate: float) -> list[str]:
    k = e.mean_kpi
    vals = [*e.resources.as_tuple(), input_rate, k.cpu_util, k.mem_util, k.latency, k.output_rate, *e.ci95]
    return [repr(float(v)) for v in vals] + [str(int(e.kpi_ok)), str(e.runs)]


def write_entries(path, entries: Iterable[OracleEntry], input_rate: float):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ORACLE_HEADER)
        for e in entries:
            w.writerow(_entry_row(e, input_rate))


def write_table(path, table: OracleTable):
    write_entries(path, table.entries, table.input_rate)


def read_entries(path) -> list[OracleEntry]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        if next(rd) != ORACLE_HEADER:
            raise ValueError(f"{path}: not an oracle table")
        out = []
        for row in rd:
            v = [float(x) for x in row[:12]]
            out.append(OracleEntry(ResourceVector(*v[:3]), KpiMeasurement(*v[4:8]), tuple(v[8:12]),
                                   row[12] == "1", int(row[13])))
        return out
