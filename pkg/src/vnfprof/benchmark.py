"""Dynamic-environment comparison of the RL agent against MLP and RF baselines.

The input rate follows a ramp; the agent learns online while the profiling
dataset grows from its step records. At every landmark episode the two
supervised models are retrained on the data so far and all three are scored
against the oracle optimum for the current input rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .agent import AgentConfig, Exploration, QTableSet, StepRecord, _LoopCache, agent_rng, greedy_rollout, run_episode
from .domain import DEFAULT_GRID, EQUAL_WEIGHTS, RESOURCES, KpiTargets, ResourceGrid, ResourceVector, WeightVector
from .envsim import EnvConfig, InputSchedule, VnfEnv, VnfKind, default_model, measure
from .metrics import ErrorRow, ci95, percentage_error
from .oracle import InfeasibleOracle, OracleEntry, exhaustive_search, optimal_config
from .rewards import default_reward_config
from .slbench import MlpSpec, RfSpec, landmark_retrain, mlp_spec_for, rf_spec_for

ROLLOUT_STREAM = 0x90110
MODELS = ("rl", "mlp", "rf")

DEFAULT_LANDMARKS = tuple(range(25, 301, 25))
PEAK_FRACTION = 0.85


def peak_rate(kind: VnfKind | str, grid: ResourceGrid = DEFAULT_GRID) -> float:
    """Ramp ceiling: a fixed fraction of the best noise-free output on the grid, rounded to 5 Mbps."""
    model = default_model(kind)
    best = max(measure(model, grid.vector(idx), 1e4).output_rate for idx in grid.points())
    return 5.0 * round(PEAK_FRACTION * best / 5.0)


def default_ramp(kind: VnfKind | str, start: float = 50.0, steps: int = 4, every: int = 25,
                 grid: ResourceGrid = DEFAULT_GRID) -> InputSchedule:
    """Piecewise-constant growth from `start` to the peak rate in `steps` equal increments."""
    peak = peak_rate(kind, grid)
    rates = np.linspace(start, peak, steps + 1)
    return InputSchedule(tuple((i * every, float(round(r, 6))) for i, r in enumerate(rates)))


@dataclass(frozen=True)
class BenchConfig:
    kind: VnfKind
    episodes: int = 300
    landmarks: tuple[int, ...] = DEFAULT_LANDMARKS
    # errors from this landmark on count as post-convergence
    convergence_landmark: int = 150
    schedule: InputSchedule | None = None  # None: default_ramp(kind)
    agent: AgentConfig = AgentConfig()
    weights: WeightVector = EQUAL_WEIGHTS
    record_every: int = 500
    seeds: tuple[int, ...] = (0,)
    mlp: MlpSpec | None = None
    rf: RfSpec | None = None
    targets: KpiTargets = KpiTargets()
    # KPI values the supervised models are asked to hit: cpu, mem, latency
    query_kpis: tuple[float, float, float] = (95.0, 98.0, 2.5)
    rollout_steps: int = 100
    noise: bool = True
    grid: ResourceGrid = DEFAULT_GRID

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if list(self.landmarks) != sorted(self.landmarks) or not self.landmarks:
            raise ValueError("landmarks must be a non-empty ascending sequence")
        if self.landmarks[-1] > self.episodes:
            raise ValueError("landmarks cannot exceed the episode count")
        if self.schedule is None:
            object.__setattr__(self, "schedule", default_ramp(self.kind, grid=self.grid))

    def model_specs(self) -> dict[str, MlpSpec | RfSpec]:
        return {"mlp": self.mlp or mlp_spec_for(self.kind), "rf": self.rf or rf_spec_for(self.kind)}


@dataclass
class BenchResult:
    rows: list[ErrorRow]
    # per seed and landmark: model -> allocation
    allocations: list[dict[int, dict[str, ResourceVector | None]]] = field(default_factory=list)
    # None where no allocation meets the targets at that rate
    optima: dict[float, OracleEntry | None] = field(default_factory=dict)

    def mean_abs_error(self, model: str, resource: str, after: int) -> float:
        vals = [abs(r.error_pct) for r in self.rows
                if r.model == model and r.resource == resource and r.episode >= after and not np.isnan(r.error_pct)]
        return float(np.mean(vals)) if vals else float("nan")


def _features(rec: StepRecord) -> tuple[float, float, float, float]:
    k = rec.kpi
    return (k.cpu_util, k.mem_util, k.latency, k.output_rate)


def run_benchmark(cfg: BenchConfig) -> BenchResult:
    model = default_model(cfg.kind)
    if not cfg.noise:
        model = model.with_noise(0.0)
    rc = default_reward_config(cfg.kind, cfg.targets)
    agent_cfg = replace(cfg.agent, weights=cfg.weights, episodes=cfg.episodes)
    grid_env = VnfEnv(EnvConfig(model.with_noise(0.0), cfg.targets, 0, 50.0, cfg.grid, cfg.schedule))
    optima: dict[float, OracleEntry | None] = {}

    def optimum(rate: float) -> OracleEntry | None:
        if rate not in optima:
            try:
                optima[rate] = optimal_config(exhaustive_search(grid_env, rate, 1))
            except InfeasibleOracle:
                optima[rate] = None
        return optima[rate]

    specs = cfg.model_specs()
    per_seed_err: dict[tuple[int, str, str], list[float]] = {}
    allocations = []
    for seed in cfg.seeds:
        env = VnfEnv(EnvConfig(model, cfg.targets, seed, 50.0, cfg.grid, cfg.schedule))
        rng = agent_rng(seed)
        qset = QTableSet(env.grid)
        expl = Exploration.from_config(agent_cfg)
        cache = _LoopCache.build(env.grid, agent_cfg, rc)
        records: list[StepRecord] = []
        rl_alloc: dict[int, ResourceVector] = {}
        marks = set(cfg.landmarks)
        for t in range(cfg.episodes):
            st = run_episode(env, qset, agent_cfg, rng, rc, expl, episode=t, recorder=records.append,
                             record_every=cfg.record_every, _cache=cache)
            if t + 1 in marks:
                probe = VnfEnv(env.config, np.random.default_rng([seed, ROLLOUT_STREAM, t + 1]))
                probe.reset(st.final_state.resources, t)
                rl_alloc[t + 1] = greedy_rollout(probe, qset, cfg.weights, st.final_state.resources,
                                                 cfg.rollout_steps, agent_cfg.frozen)

        def query(L: int):
            rate = cfg.schedule.rate_at(L - 1)
            best = optimum(rate)
            return (*cfg.query_kpis, best.output_rate if best is not None else rate)

        stream = [(r.episode, _features(r), r.resources.as_tuple()) for r in records]
        preds = landmark_retrain(stream, cfg.landmarks, specs, query, split_seed=seed)
        seed_alloc: dict[int, dict[str, ResourceVector | None]] = {}
        for lp in preds:
            L = lp.landmark
            best = optimum(cfg.schedule.rate_at(L - 1))
            got: dict[str, ResourceVector | None] = {"rl": rl_alloc[L]}
            for name in ("mlp", "rf"):
                p = lp.predictions.get(name)
                got[name] = None if p is None else env.grid.snap_vector(ResourceVector(*map(float, p)))
            seed_alloc[L] = got
            for name, alloc in got.items():
                for r in RESOURCES:
                    if alloc is None or best is None:
                        err = float("nan")
                    else:
                        err = percentage_error(alloc[r], best.resources[r])
                    per_seed_err.setdefault((L, name, r), []).append(err)
        allocations.append(seed_alloc)

    rows = []
    for L in cfg.landmarks:
        for name in MODELS:
            for r in RESOURCES:
                errs = per_seed_err[(L, name, r)]
                mean = float(np.mean(errs))
                half = ci95(errs)[1] if len(errs) > 1 and not np.isnan(mean) else 0.0
                if np.isnan(mean):
                    half = float("nan")
                rows.append(ErrorRow(L, name, r, mean, half))
    return BenchResult(rows, allocations, optima)


def dominance_table(result: BenchResult, after: int) -> dict[str, dict[str, float]]:
    """Mean |error| per model and resource over landmarks >= `after`."""
    return {m: {r: result.mean_abs_error(m, r, after) for r in RESOURCES} for m in MODELS}


def rl_dominates(result: BenchResult, after: int, resources: Sequence[str] = ("vcpu", "mem")) -> bool:
    t = dominance_table(result, after)
    return all(t["rl"][r] < t["mlp"][r] and t["rl"][r] < t["rf"][r] for r in resources)
