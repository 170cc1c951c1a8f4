"""Scoring against the oracle optimum and steady-state scenario summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .agent import AllocationTrace
from .domain import EQUAL_WEIGHTS, RESOURCES, ResourceVector, WeightVector

VCPU_SCALE = 2.0  # cores shown as 100%
MEM_SCALE = 1600.0  # MB shown as 100%
STEADY_FRACTION = 0.10

# the 13 convex weightings of the scenario study, in table order
SCENARIO_WEIGHTS: tuple[WeightVector, ...] = tuple(WeightVector(*w) for w in (
    (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0),
    (0.5, 0.5, 0.0), (0.0, 0.5, 0.5), (0.5, 0.0, 0.5),
    (0.75, 0.125, 0.125), (0.5, 0.25, 0.25), (0.125, 0.75, 0.125),
    (0.25, 0.5, 0.25), (0.125, 0.125, 0.75), (0.25, 0.25, 0.5),
    (1 / 3, 1 / 3, 1 - 2 / 3),
))

SCENARIO_HEADER = ["vnf", "w_cpu", "w_mem", "w_lc", "vcpu_pct", "mem_pct", "or_lc_pct", "vcpu", "mem_mb", "lc_mbps",
                   "err_vcpu_pct", "ci_vcpu_pct", "err_mem_pct", "ci_mem_pct", "err_lc_pct", "ci_lc_pct"]
ERRORS_HEADER = ["episode", "model", "resource", "error_pct", "ci95"]


class BaselineError(ValueError):
    """Percentage error against a zero optimum."""


def percentage_error(allocated: float, optimal: float) -> float:
    """Signed error in percent; negative means under-provisioned."""
    if optimal == 0:
        raise BaselineError("optimal allocation is zero; percentage error undefined")
    if optimal < 0:
        raise ValueError("optimal allocation must be positive")
    return 100.0 * (allocated - optimal) / optimal


def ci95(samples: Sequence[float]) -> tuple[float, float]:
    """Mean and normal-approximation 95% half-width."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("ci95 needs at least two samples")
    return float(x.mean()), float(1.96 * x.std(ddof=1) / math.sqrt(x.size))


@dataclass(frozen=True)
class ScenarioResult:
    """Steady-state row: allocations as table percentages plus errors vs the optimum."""

    weights: WeightVector
    vcpu_pct: float
    mem_pct: float
    or_lc_pct: float
    errors: tuple[float, float, float] | None = None
    errors_ci95: tuple[float, float, float] | None = None
    vnf: str = ""
    lc: float = float("nan")  # mean absolute link capacity, Mbps

    @property
    def vcpu(self) -> float:
        return self.vcpu_pct * VCPU_SCALE / 100.0

    @property
    def mem(self) -> float:
        return self.mem_pct * MEM_SCALE / 100.0


def steady_window(n_episodes: int, fraction: float = STEADY_FRACTION) -> int:
    return max(1, int(round(n_episodes * fraction)))


def steady_state_summary(trace: AllocationTrace, window: int | None = None,
                         weights: WeightVector | None = None, optimum: ResourceVector | None = None,
                         vnf: str = "") -> ScenarioResult:
    """Average the last `window` episodes (all seeds) of a trace.

    With `optimum` given, per-resource percentage errors of the mean
    allocation are added, with a 95% half-width over the window samples.
    """
    E = trace.n_episodes
    if window is None:
        window = steady_window(E)
    if window <= 0:
        raise ValueError("window must be positive")
    if E < window:
        raise ValueError(f"trace has {E} episodes, fewer than the window {window}")
    alloc = trace.alloc[:, E - window:, :].reshape(-1, 3)
    ratio = trace.or_lc[:, E - window:].ravel()
    mean = alloc.mean(axis=0)
    errs = cis = None
    if optimum is not None:
        errs, cis = [], []
        for j, r in enumerate(RESOURCES):
            e = [percentage_error(a, optimum[r]) for a in alloc[:, j]]
            errs.append(percentage_error(mean[j], optimum[r]))
            cis.append(ci95(e)[1] if len(e) > 1 else 0.0)
        errs, cis = tuple(errs), tuple(cis)
    return ScenarioResult(weights if weights is not None else EQUAL_WEIGHTS,
                          100.0 * mean[0] / VCPU_SCALE, 100.0 * mean[1] / MEM_SCALE,
                          100.0 * float(ratio.mean()), errs, cis, vnf, float(mean[2]))


def _scenario_row(r: ScenarioResult) -> list[str]:
    vals = [*r.weights.as_tuple(), r.vcpu_pct, r.mem_pct, r.or_lc_pct, r.vcpu, r.mem, r.lc]
    out = [r.vnf] + [repr(float(v)) for v in vals]
    if r.errors is None:
        out += ["nan"] * 6
    else:
        for e, c in zip(r.errors, r.errors_ci95):
            out += [repr(float(e)), repr(float(c))]
    return out


def write_scenarios(path, results: Iterable[ScenarioResult]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCENARIO_HEADER)
        for r in results:
            w.writerow(_scenario_row(r))


def read_scenarios(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != SCENARIO_HEADER:
            raise ValueError(f"{path}: unexpected scenario header")
        return [dict(zip(header, row)) for row in rd]


@dataclass(frozen=True)
class ErrorRow:
    episode: int
    model: str
    resource: str
    error_pct: float
    ci95: float


def write_errors(path, rows: Iterable[ErrorRow]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ERRORS_HEADER)
        for r in rows:
            w.writerow([str(r.episode), r.model, r.resource, repr(float(r.error_pct)), repr(float(r.ci95))])


def read_errors(path) -> list[ErrorRow]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        if next(rd) != ERRORS_HEADER:
            raise ValueError(f"{path}: unexpected errors header")
        return [ErrorRow(int(a), b, c, float(d), float(e)) for a, b, c, d, e in rd]
