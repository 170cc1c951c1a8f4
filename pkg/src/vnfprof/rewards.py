"""Per-resource zedoid reward, gated by the KPI targets."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .domain import DEFAULT_GRID, RESOURCES, KpiMeasurement, KpiTargets, ResourceGrid, ResourceVector, normalize_resource
from .envsim import VnfKind


def zedoid(beta: float, x_hat: float) -> float:
    """Reverse sigmoid centred on 0.5: 1 / (1 + exp(beta * (x_hat - 0.5)))."""
    z = beta * (x_hat - 0.5)
    # split on sign so exp never overflows
    if z >= 0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


@dataclass(frozen=True)
class RewardConfig:
    beta_cpu: float = 8.0
    beta_mem: float = 7.0
    beta_lc: float = 7.0
    targets: KpiTargets = KpiTargets()

    def __post_init__(self):
        if min(self.betas) <= 0:
            raise ValueError(f"steepness coefficients must be positive, got {self.betas}")

    @property
    def betas(self) -> tuple[float, float, float]:
        return (self.beta_cpu, self.beta_mem, self.beta_lc)

    def beta(self, resource: str) -> float:
        return self.betas[RESOURCES.index(resource)]


# tuned steepness per VNF type; passive lc follows the tuning heading (8), not its body text (9)
DEFAULT_BETAS = {
    VnfKind.SNORT_INLINE: (8.0, 7.0, 7.0),
    VnfKind.SNORT_PASSIVE: (8.0, 7.0, 8.0),
    VnfKind.VFW: (7.0, 7.0, 9.0),
}


def default_reward_config(kind: VnfKind | str, targets: KpiTargets = KpiTargets()) -> RewardConfig:
    if isinstance(kind, str):
        kind = VnfKind.parse(kind)
    return RewardConfig(*DEFAULT_BETAS[kind], targets=targets)


def resource_reward(resource: str, allocation: float, config: RewardConfig, kpi: KpiMeasurement,
                    grid: ResourceGrid = DEFAULT_GRID) -> float:
    x = normalize_resource(allocation, grid[resource])
    if not config.targets.satisfied(kpi):
        return 0.0
    return zedoid(config.beta(resource), x)


def reward_vector(resources: ResourceVector, config: RewardConfig, kpi: KpiMeasurement,
                  grid: ResourceGrid = DEFAULT_GRID) -> tuple[float, float, float]:
    xs = [normalize_resource(resources[r], grid[r]) for r in RESOURCES]
    if not config.targets.satisfied(kpi):
        return (0.0, 0.0, 0.0)
    return tuple(zedoid(b, x) for b, x in zip(config.betas, xs))


def reward_levels(config: RewardConfig, grid: ResourceGrid = DEFAULT_GRID) -> tuple[tuple[float, ...], ...]:
    """Ungated reward at every grid level of each resource."""
    return tuple(
        tuple(zedoid(config.beta(r), normalize_resource(v, grid[r])) for v in grid[r].levels)
        for r in RESOURCES
    )
