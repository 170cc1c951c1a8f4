"""Multi-objective tabular Q-learning with linear scalarised greedy selection."""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .domain import (
    ACTION_ID,
    ACTIONS,
    DEFAULT_GRID,
    EQUAL_WEIGHTS,
    N_FLAGS,
    RESOURCES,
    Action,
    FeasibilityTable,
    ProfilerState,
    ResourceGrid,
    ResourceVector,
    StateKey,
    WeightVector,
    normalize_resource,
)
from .envsim import VnfEnv
from .rewards import RewardConfig, reward_levels

N_ACTIONS = len(ACTIONS)
OBJECTIVES = ("cpu", "mem", "lc")
Q_CSV_HEADER = ["vcpu_idx", "mem_idx", "lc_idx", "kpi_flags", "action", "q_cpu", "q_mem", "q_lc"]
GATE_MASK = 0b111  # cpu, mem and latency target bits


class QTableSet:
    """One Q-table per objective, grown lazily one state row at a time.

    ``rows[code]`` holds three lists of per-action values (cpu, mem, lc);
    a state that was never updated reads as all zeros.
    """

    def __init__(self, grid: ResourceGrid = DEFAULT_GRID):
        self.grid = grid
        self.rows: dict[int, list[list[float]]] = {}

    def __len__(self):
        return len(self.rows)

    def _code(self, key: StateKey | int) -> int:
        return key if isinstance(key, int) else key.encode(self.grid)

    def row(self, key: StateKey | int) -> list[list[float]]:
        code = self._code(key)
        r = self.rows.get(code)
        if r is None:
            r = self.rows[code] = [[0.0] * N_ACTIONS for _ in OBJECTIVES]
        return r

    def values(self, key: StateKey | int, action: Action | int) -> tuple[float, float, float]:
        a = action if isinstance(action, int) else ACTION_ID[action]
        r = self.rows.get(self._code(key))
        if r is None:
            return (0.0, 0.0, 0.0)
        return (r[0][a], r[1][a], r[2][a])

    def set(self, key: StateKey | int, action: Action | int, values: Sequence[float]):
        a = action if isinstance(action, int) else ACTION_ID[action]
        r = self.row(key)
        for o in range(3):
            r[o][a] = float(values[o])

    def scaled(self, factor: float) -> "QTableSet":
        out = QTableSet(self.grid)
        out.rows = {c: [[q * factor for q in t] for t in r] for c, r in self.rows.items()}
        return out

    def copy(self) -> "QTableSet":
        return self.scaled(1.0)

    def as_array(self) -> np.ndarray:
        """Dense (3, n_keys, 7) view; unvisited entries are zero."""
        arr = np.zeros((3, self.grid.n_keys, N_ACTIONS))
        for code, r in self.rows.items():
            arr[:, code, :] = r
        return arr

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(Q_CSV_HEADER)
            for code in sorted(self.rows):
                key = StateKey.decode(code, self.grid)
                r = self.rows[code]
                for a, act in enumerate(ACTIONS):
                    w.writerow([*key, str(act), repr(r[0][a]), repr(r[1][a]), repr(r[2][a])])

    @classmethod
    def from_csv(cls, path, grid: ResourceGrid = DEFAULT_GRID) -> "QTableSet":
        q = cls(grid)
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if header != Q_CSV_HEADER:
                raise ValueError(f"unexpected Q-table header {header}")
            for line in rd:
                key = StateKey(*(int(v) for v in line[:4]))
                q.set(key, Action.parse(line[4]), [float(v) for v in line[5:8]])
        return q


def scalarised_q(qset: QTableSet, key: StateKey | int, action: Action | int, weights: WeightVector) -> float:
    v = qset.values(key, action)
    return weights.cpu * v[0] + weights.mem * v[1] + weights.lc * v[2]


def _greedy_id(row, feasible: Sequence[int], w0: float, w1: float, w2: float) -> int:
    # strict > keeps the first action in ACTIONS order on ties
    if row is None:
        return feasible[0]
    q0, q1, q2 = row
    best = feasible[0]
    best_v = w0 * q0[best] + w1 * q1[best] + w2 * q2[best]
    for a in feasible[1:]:
        v = w0 * q0[a] + w1 * q1[a] + w2 * q2[a]
        if v > best_v:
            best, best_v = a, v
    return best


def greedy_action(qset: QTableSet, key: StateKey | int, weights: WeightVector,
                  feasible: Sequence[Action]) -> Action:
    if not feasible:
        raise ValueError("greedy_action needs a non-empty feasible action set")
    ids = sorted(ACTION_ID[a] for a in feasible)
    row = qset.rows.get(qset._code(key))
    return ACTIONS[_greedy_id(row, ids, *weights.as_tuple())]


def select_action(qset: QTableSet, key: StateKey | int, weights: WeightVector, feasible: Sequence[Action],
                  epsilon: float, rng: np.random.Generator) -> Action:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return feasible[int(rng.integers(len(feasible)))]
    return greedy_action(qset, key, weights, feasible)


def bellman_update(qset: QTableSet, s_key: StateKey | int, action: Action | int, rewards: Sequence[float],
                   next_key: StateKey | int, next_action: Action | int, alpha: float, gamma: float) -> QTableSet:
    """Q_o(s,a) += alpha * (R_o + gamma * Q_o(s',a') - Q_o(s,a)) for each objective."""
    a = action if isinstance(action, int) else ACTION_ID[action]
    a2 = next_action if isinstance(next_action, int) else ACTION_ID[next_action]
    nxt = qset.values(next_key, a2)
    r = qset.row(s_key)
    for o in range(3):
        r[o][a] += alpha * (rewards[o] + gamma * nxt[o] - r[o][a])
    return qset


@dataclass(frozen=True)
class AgentConfig:
    alpha: float = 0.1
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.9999
    epsilon_min: float = 0.1
    max_steps: int = 1500
    convergence_eps: float = 1e-3
    convergence_window: int = 50
    episodes: int = 2000
    weights: WeightVector = EQUAL_WEIGHTS
    # resources the agent may not move; they stay at `start`
    frozen: tuple[str, ...] = ()
    # None draws every non-frozen resource uniformly at each episode start
    start: ResourceVector | None = None
    # steady-state KPI breaches in a row that trigger an exploration reset; 0 disables
    reset_window: int = 20

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        for name in ("epsilon_start", "epsilon_decay", "epsilon_min"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.max_steps <= 0 or self.convergence_window <= 0:
            raise ValueError("max_steps and convergence_window must be positive")
        if self.episodes < 0:
            raise ValueError("episodes must be non-negative")
        if self.reset_window < 0:
            raise ValueError("reset_window must be non-negative")
        for r in self.frozen:
            if r not in RESOURCES:
                raise ValueError(f"unknown resource {r!r} in frozen")
        if self.frozen and self.start is None:
            raise ValueError("frozen resources need an explicit start allocation")


@dataclass
class Exploration:
    """Per-step multiplicative epsilon decay with a floor and breach-triggered reset."""

    epsilon: float = 1.0
    decay: float = 0.9999
    minimum: float = 0.1
    reset_window: int = 20
    breaches: int = 0
    resets: int = 0

    @classmethod
    def from_config(cls, config: AgentConfig) -> "Exploration":
        return cls(config.epsilon_start, config.epsilon_decay, config.epsilon_min, config.reset_window)

    def advance(self, kpi_ok: bool):
        if self.reset_window and self.epsilon <= self.minimum:
            self.breaches = 0 if kpi_ok else self.breaches + 1
            if self.breaches >= self.reset_window:
                self.epsilon = 1.0
                self.breaches = 0
                self.resets += 1
                return
        e = self.epsilon * self.decay
        self.epsilon = e if e > self.minimum else self.minimum


@dataclass
class StepRecord:
    episode: int
    step: int
    resources: ResourceVector
    input_rate: float
    kpi: object
    kpi_ok: bool
    seed: int = 0


@dataclass
class EpisodeStats:
    episode: int
    steps: int
    converged: bool
    final_state: ProfilerState
    cumulative_reward: float
    deltas: list[float] = field(repr=False, default_factory=list)
    epsilon: float = 0.0


@dataclass
class _LoopCache:
    """Tables shared by all episodes of one training run."""

    feasible: FeasibilityTable
    rewards: tuple
    norm: tuple

    @classmethod
    def build(cls, grid: ResourceGrid, config: AgentConfig, reward_config: RewardConfig) -> "_LoopCache":
        norm = tuple(tuple(normalize_resource(v, grid[r]) for v in grid[r].levels) for r in RESOURCES)
        return cls(FeasibilityTable(grid, tuple(config.frozen)), reward_levels(reward_config, grid), norm)


def start_allocation(config: AgentConfig, grid: ResourceGrid, rng: np.random.Generator) -> ResourceVector:
    """Episode start: fixed `start`, or uniform levels for every resource not frozen."""
    if config.start is not None and not config.frozen:
        return config.start
    base = config.start or grid.median()
    vals = {}
    for r in RESOURCES:
        if r in config.frozen:
            vals[r] = base[r]
        else:
            vals[r] = grid[r].value_at(int(rng.integers(grid[r].n_levels)))
    return ResourceVector(**vals)


def run_episode(env: VnfEnv, qset: QTableSet, config: AgentConfig, rng: np.random.Generator,
                reward_config: RewardConfig | None = None, exploration: Exploration | None = None,
                episode: int = 0, start: ResourceVector | None = None,
                recorder: Callable[[StepRecord], None] | None = None,
                record_every: int = 0, _cache: _LoopCache | None = None) -> EpisodeStats:
    """One episode of scalarised multi-objective Q-learning.

    The executed action is re-drawn epsilon-greedily at every loop head; the
    bootstrap target uses the scalarised-greedy action at the next state.
    The episode stops early once the last `convergence_window` state moves
    are all shorter than `convergence_eps` (normalised resource distance).
    """
    grid = env.grid
    if reward_config is None:
        reward_config = RewardConfig(targets=env.targets)
    if exploration is None:
        exploration = Exploration.from_config(config)
    cache = _cache or _LoopCache.build(grid, config, reward_config)
    feas, levels, norm = cache.feasible, cache.rewards, cache.norm
    w0, w1, w2 = config.weights.as_tuple()
    alpha, gamma = config.alpha, config.gamma
    lo, hi = env.targets.cpu_util_band
    mem_max, lat_max = env.targets.mem_util_max, env.targets.latency_max
    _, nm, nl = grid.shape
    rows = qset.rows
    window = config.convergence_window
    deltas: deque[float] = deque(maxlen=window)
    all_deltas: list[float] = []

    if start is None:
        start = start_allocation(config, grid, rng)
    env.reset(start, episode)
    ir = env.input_rate
    keepup = 0.95 * ir

    def flags_of(kpi):
        return ((lo <= kpi.cpu_util <= hi) | (kpi.mem_util <= mem_max) << 1
                | (kpi.latency <= lat_max) << 2 | (kpi.output_rate >= keepup) << 3)

    idx = env.idx
    code = (((idx[0] * nm + idx[1]) * nl + idx[2]) << N_FLAGS) | flags_of(env.kpi)
    total = 0.0
    converged = False
    steps = 0
    rand = rng.random
    for n in range(config.max_steps):
        fs = feas(idx)
        if rand() < exploration.epsilon:
            a = fs[int(rng.integers(len(fs)))]
        else:
            a = _greedy_id(rows.get(code), fs, w0, w1, w2)
        idx2 = env.step_fast(a)
        kpi = env.kpi
        f2 = flags_of(kpi)
        ok = (f2 & GATE_MASK) == GATE_MASK
        if ok:
            r0, r1, r2 = levels[0][idx2[0]], levels[1][idx2[1]], levels[2][idx2[2]]
        else:
            r0 = r1 = r2 = 0.0
        total += w0 * r0 + w1 * r1 + w2 * r2
        code2 = (((idx2[0] * nm + idx2[1]) * nl + idx2[2]) << N_FLAGS) | f2
        row2 = rows.get(code2)
        a2 = _greedy_id(row2, feas(idx2), w0, w1, w2)
        row = rows.get(code)
        if row is None:
            row = rows[code] = [[0.0] * N_ACTIONS, [0.0] * N_ACTIONS, [0.0] * N_ACTIONS]
            if code2 == code:
                row2 = row
        if row2 is None:
            t0 = t1 = t2 = 0.0
        else:
            t0, t1, t2 = row2[0][a2], row2[1][a2], row2[2][a2]
        q0, q1, q2 = row
        q0[a] += alpha * (r0 + gamma * t0 - q0[a])
        q1[a] += alpha * (r1 + gamma * t1 - q1[a])
        q2[a] += alpha * (r2 + gamma * t2 - q2[a])

        d = math.sqrt((norm[0][idx2[0]] - norm[0][idx[0]]) ** 2 + (norm[1][idx2[1]] - norm[1][idx[1]]) ** 2
                      + (norm[2][idx2[2]] - norm[2][idx[2]]) ** 2)
        deltas.append(d)
        all_deltas.append(d)
        if recorder is not None and record_every and (n + 1) % record_every == 0:
            recorder(StepRecord(episode, n + 1, grid.vector(idx2), ir, kpi, ok))
        idx, code = idx2, code2
        exploration.advance(ok)
        steps = n + 1
        if steps > window and max(deltas) < config.convergence_eps:
            converged = True
            break

    sq = _scalar_max(rows.get(code), feas(idx), w0, w1, w2)
    final = ProfilerState(grid.vector(idx), env.kpi, ir, sq)
    return EpisodeStats(episode, steps, converged, final, total, all_deltas, exploration.epsilon)


def _scalar_max(row, feasible, w0, w1, w2) -> float:
    if row is None:
        return 0.0
    a = _greedy_id(row, feasible, w0, w1, w2)
    return w0 * row[0][a] + w1 * row[1][a] + w2 * row[2][a]


@dataclass
class AllocationTrace:
    """Per-episode final allocation, measured OR and input rate for each seed."""

    alloc: np.ndarray  # (seeds, episodes, 3)
    output: np.ndarray  # (seeds, episodes)
    input_rate: np.ndarray  # (seeds, episodes)

    @property
    def n_episodes(self) -> int:
        return self.alloc.shape[1]

    @property
    def or_lc(self) -> np.ndarray:
        return self.output / self.alloc[:, :, 2]

    def mean(self) -> np.ndarray:
        return self.alloc.mean(axis=0)

    def ci95(self) -> np.ndarray:
        """Half-width of the 95% interval across seeds; zero for a single seed."""
        n = self.alloc.shape[0]
        if n < 2:
            return np.zeros(self.alloc.shape[1:])
        return 1.96 * self.alloc.std(axis=0, ddof=1) / math.sqrt(n)


@dataclass
class TrainResult:
    qsets: list[QTableSet]
    stats: list[list[EpisodeStats]]
    trace: AllocationTrace
    records: list[StepRecord] = field(default_factory=list, repr=False)

    @property
    def qset(self) -> QTableSet:
        return self.qsets[0]


def agent_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0xA6E7])


def train(env_factory: Callable[[int], VnfEnv], config: AgentConfig, reward_config: RewardConfig | None = None,
          seeds: Sequence[int] = (0,), record_every: int = 0,
          callback: Callable[[int, int, EpisodeStats, QTableSet], None] | None = None) -> TrainResult:
    """Run `config.episodes` episodes per seed, each seed with fresh tables.

    `env_factory(seed)` builds the environment for one seed; the agent draws
    from its own sub-stream of the same seed.
    """
    qsets, all_stats, records = [], [], []
    E = config.episodes
    alloc = np.zeros((len(seeds), E, 3))
    out = np.zeros((len(seeds), E))
    irs = np.zeros((len(seeds), E))
    for si, seed in enumerate(seeds):
        env = env_factory(seed)
        rc = reward_config or RewardConfig(targets=env.targets)
        rng = agent_rng(seed)
        qset = QTableSet(env.grid)
        expl = Exploration.from_config(config)
        cache = _LoopCache.build(env.grid, config, rc)
        stats = []

        def recorder(rec: StepRecord, seed=seed):
            rec.seed = seed
            records.append(rec)
        for t in range(E):
            st = run_episode(env, qset, config, rng, rc, expl, episode=t, recorder=recorder,
                             record_every=record_every, _cache=cache)
            stats.append(st)
            alloc[si, t] = st.final_state.resources.as_tuple()
            out[si, t] = st.final_state.kpi.output_rate
            irs[si, t] = st.final_state.input_rate
            if callback is not None:
                callback(si, t, st, qset)
        qsets.append(qset)
        all_stats.append(stats)
    return TrainResult(qsets, all_stats, AllocationTrace(alloc, out, irs), records)


def greedy_rollout(env: VnfEnv, qset: QTableSet, weights: WeightVector, start: ResourceVector,
                   steps: int = 100, frozen: Sequence[str] = ()) -> ResourceVector:
    """Allocation the learned policy settles on, with exploration and learning off.

    Follows scalarised-greedy actions from `start` for `steps` moves and
    returns the most visited allocation over the second half, which absorbs
    flag flicker caused by measurement noise. The table is not modified.
    """
    grid = env.grid
    feas = FeasibilityTable(grid, tuple(frozen))
    w0, w1, w2 = weights.as_tuple()
    env.reset(start)
    visits: dict[tuple[int, int, int], int] = {}
    for n in range(steps):
        key = StateKey(*env.idx, env.flags()).encode(grid)
        a = _greedy_id(qset.rows.get(key), feas(env.idx), w0, w1, w2)
        env.step_fast(a)
        if n >= steps // 2:
            visits[env.idx] = visits.get(env.idx, 0) + 1
    best = max(visits.items(), key=lambda kv: (kv[1], [-i for i in kv[0]]))[0]
    return grid.vector(best)
