"""INI experiment configuration with defaults for every omitted field."""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from .agent import AgentConfig
from .domain import KpiTargets, ResourceBounds, ResourceGrid, WeightVector
from .envsim import VnfKind
from .metrics import SCENARIO_WEIGHTS
from .rewards import DEFAULT_BETAS, RewardConfig


class ConfigError(ValueError):
    """Bad configuration; the message names the file location or the violated rule."""


@dataclass(frozen=True)
class OracleSettings:
    input_rate: float = 800.0
    runs: int = 30


@dataclass(frozen=True)
class OfflineSettings:
    samples: int = 500
    ir_lo: float = 50.0
    ir_hi: float = 1000.0
    resolution: float = 5.0


@dataclass(frozen=True)
class BenchSettings:
    episodes: int = 300
    landmarks: tuple[int, ...] = tuple(range(25, 301, 25))
    convergence_landmark: int = 150
    record_every: int = 500
    max_steps: int = 1500
    mlp_epochs: int = 500
    rf_trees: int | None = None  # None: per-VNF default


@dataclass(frozen=True)
class ExperimentConfig:
    vnfs: tuple[VnfKind, ...] = tuple(VnfKind)
    grid: ResourceGrid = ResourceGrid()
    targets: KpiTargets = KpiTargets()
    betas: Mapping[VnfKind, tuple[float, float, float]] = field(default_factory=lambda: dict(DEFAULT_BETAS))
    agent: AgentConfig = AgentConfig()
    seeds: tuple[int, ...] = (0,)
    scenario_weights: tuple[WeightVector, ...] = SCENARIO_WEIGHTS
    out_dir: str = "results"
    noise: bool = True
    input_rate: float = 380.0  # steady rate for train and scenarios
    record_every: int = 0  # step-record interval for `train`; 0 disables
    oracle: OracleSettings = OracleSettings()
    offline: OfflineSettings = OfflineSettings()
    bench: BenchSettings = BenchSettings()

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("experiment.seeds: seed list must be non-empty")
        if not self.vnfs:
            raise ConfigError("experiment.vnf: at least one VNF is required")
        if self.input_rate <= 0:
            raise ConfigError("experiment.input_rate must be positive")

    def reward_config(self, kind: VnfKind) -> RewardConfig:
        return RewardConfig(*self.betas[kind], targets=self.targets)


# ---------------------------------------------------------------- value parsers

def _floats(text: str, n: int | None = None) -> tuple[float, ...]:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    vals = tuple(_number(p) for p in parts)
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} numbers, got {len(vals)}")
    return vals


def _number(text: str) -> float:
    if "/" in text:
        a, b = text.split("/", 1)
        return float(a) / float(b)
    return float(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "on", "yes", "true"):
        return True
    if t in ("0", "off", "no", "false"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    m = re.fullmatch(r"(\d+)\s*:\s*(\d+)\s*:\s*(\d+)", text)
    if m:
        a, b, c = map(int, m.groups())
        return tuple(range(a, b + 1, c))
    return tuple(int(p) for p in re.split(r"[,\s]+", text) if p)


def _vnfs(text: str) -> tuple[VnfKind, ...]:
    if text.strip().lower() == "all":
        return tuple(VnfKind)
    return tuple(VnfKind.parse(p) for p in re.split(r"[,\s]+", text.strip()) if p)


def parse_weights(text: str) -> WeightVector:
    return WeightVector(*_floats(text, 3))


def _weight_list(text: str) -> tuple[WeightVector, ...]:
    if text.strip().lower() in ("all", "table"):
        return SCENARIO_WEIGHTS
    return tuple(parse_weights(p) for p in text.split(";") if p.strip())


def _optional_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "auto", "none") else int(text)


# section -> key -> value parser
_SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "experiment": {"vnf": _vnfs, "seeds": _ints, "out": str, "noise": _bool, "input_rate": float,
                   "record_every": int},
    "grid": {"vcpu": lambda t: _floats(t, 3), "mem": lambda t: _floats(t, 3), "lc": lambda t: _floats(t, 3)},
    "targets": {"cpu_util_lo": float, "cpu_util_hi": float, "mem_util_max": float, "latency_max": float},
    "rewards": {f"{k.value}": lambda t: _floats(t, 3) for k in VnfKind},
    "agent": {"alpha": float, "gamma": float, "epsilon_start": float, "epsilon_decay": float,
              "epsilon_min": float, "max_steps": int, "episodes": int, "convergence_eps": float,
              "convergence_window": int, "reset_window": int, "weights": parse_weights},
    "scenarios": {"weights": _weight_list},
    "oracle": {"input_rate": float, "runs": int},
    "offline": {"samples": int, "ir_lo": float, "ir_hi": float, "resolution": float},
    "bench": {"episodes": int, "landmarks": _ints, "convergence_landmark": int, "record_every": int,
              "max_steps": int, "mlp_epochs": int, "rf_trees": _optional_int},
}


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return n
    return None


def _where(source: str, text: str, section: str, key: str) -> str:
    line = _line_of(text, section, key) if text else None
    return f"{source}:{line}" if line else f"{source} [{section}] {key}"


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: parse error: {exc}") from None
    values: dict[str, dict[str, Any]] = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{_where(source, text, section, key)}: unknown key {key!r} in [{section}]")
            try:
                values[section][key] = _SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"{_where(source, text, section, key)}: bad value for {section}.{key}: {exc}") from None
    try:
        return _build(values)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: invalid configuration: {exc}") from None


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{p}: no such config file")
    return parse_config(p.read_text(), str(p))


def _build(v: dict[str, dict[str, Any]]) -> ExperimentConfig:
    ex, g, t = v.get("experiment", {}), v.get("grid", {}), v.get("targets", {})
    base = ExperimentConfig()
    grid = base.grid
    if g:
        grid = ResourceGrid(*(ResourceBounds(*g[r]) if r in g else getattr(base.grid, r) for r in ("vcpu", "mem", "lc")))
    dt = base.targets
    targets = KpiTargets((t.get("cpu_util_lo", dt.cpu_util_band[0]), t.get("cpu_util_hi", dt.cpu_util_band[1])),
                         t.get("mem_util_max", dt.mem_util_max), t.get("latency_max", dt.latency_max))
    betas = dict(DEFAULT_BETAS)
    for name, b in v.get("rewards", {}).items():
        betas[VnfKind.parse(name)] = b
    for k, b in betas.items():
        RewardConfig(*b)  # validates positivity
    a = dict(v.get("agent", {}))
    agent = AgentConfig(**a)
    sc = v.get("scenarios", {})
    return ExperimentConfig(
        vnfs=ex.get("vnf", base.vnfs), grid=grid, targets=targets, betas=betas, agent=agent,
        seeds=ex.get("seeds", base.seeds), scenario_weights=sc.get("weights", base.scenario_weights),
        out_dir=ex.get("out", base.out_dir), noise=ex.get("noise", base.noise),
        input_rate=ex.get("input_rate", base.input_rate), record_every=ex.get("record_every", base.record_every),
        oracle=OracleSettings(**v.get("oracle", {})), offline=OfflineSettings(**v.get("offline", {})),
        bench=BenchSettings(**v.get("bench", {})),
    )


# ---------------------------------------------------------------- flat round trip

def _fmt(x: Any) -> str:
    if isinstance(x, bool):
        return "on" if x else "off"
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, VnfKind):
        return x.value
    if isinstance(x, WeightVector):
        return ",".join(repr(w) for w in x.as_tuple())
    if isinstance(x, (tuple, list)):
        return ",".join(_fmt(i) for i in x)
    if x is None:
        return "auto"
    return str(x)


def to_flat(cfg: ExperimentConfig) -> dict[str, str]:
    """Every setting as ``section.key -> text``; `parse_config` of the INI form rebuilds `cfg`."""
    a = cfg.agent
    flat = {
        "experiment.vnf": _fmt(cfg.vnfs), "experiment.seeds": _fmt(cfg.seeds), "experiment.out": cfg.out_dir,
        "experiment.noise": _fmt(cfg.noise), "experiment.input_rate": _fmt(cfg.input_rate),
        "experiment.record_every": _fmt(cfg.record_every),
        "targets.cpu_util_lo": _fmt(cfg.targets.cpu_util_band[0]),
        "targets.cpu_util_hi": _fmt(cfg.targets.cpu_util_band[1]),
        "targets.mem_util_max": _fmt(cfg.targets.mem_util_max), "targets.latency_max": _fmt(cfg.targets.latency_max),
        "scenarios.weights": ";".join(_fmt(w) for w in cfg.scenario_weights),
    }
    for r in ("vcpu", "mem", "lc"):
        b = cfg.grid[r]
        flat[f"grid.{r}"] = _fmt((float(b.min), float(b.max), float(b.step)))
    for k in VnfKind:
        flat[f"rewards.{k.value}"] = _fmt(tuple(float(x) for x in cfg.betas[k]))
    for name in ("alpha", "gamma", "epsilon_start", "epsilon_decay", "epsilon_min", "max_steps", "episodes",
                 "convergence_eps", "convergence_window", "reset_window", "weights"):
        flat[f"agent.{name}"] = _fmt(getattr(a, name))
    for sec, obj in (("oracle", cfg.oracle), ("offline", cfg.offline), ("bench", cfg.bench)):
        for name in obj.__dataclass_fields__:
            flat[f"{sec}.{name}"] = _fmt(getattr(obj, name))
    return dict(sorted(flat.items()))


def flat_to_ini(flat: Mapping[str, str]) -> str:
    sections: dict[str, list[str]] = {}
    for k, val in flat.items():
        sec, key = k.split(".", 1)
        sections.setdefault(sec, []).append(f"{key} = {val}")
    return "\n".join(f"[{s}]\n" + "\n".join(lines) + "\n" for s, lines in sections.items())


def config_hash(cfg: ExperimentConfig) -> str:
    text = "\n".join(f"{k}={v}" for k, v in to_flat(cfg).items())
    return hashlib.sha256(text.encode()).hexdigest()
