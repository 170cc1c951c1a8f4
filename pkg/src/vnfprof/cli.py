"""Command-line entry point: ``vnfprof {oracle,offline,train,bench,scenarios,rerun}``.

Every command writes its CSVs plus ``manifest_<command>.txt`` into the output
directory. The manifest holds the full flattened config, so ``vnfprof rerun``
can rebuild the run and, with ``--check``, compare artifact digests.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .agent import StepRecord, train
from .benchmark import BenchConfig, dominance_table, run_benchmark
from .config import (ConfigError, ExperimentConfig, config_hash, flat_to_ini, load_config, parse_config,
                     parse_weights, to_flat)
from .domain import WeightVector
from .envsim import VnfKind, make_env
from .metrics import steady_state_summary, write_errors, write_scenarios
from .offline import collect_dataset, fit_baseline, influence_weights, predict_baseline, write_dataset
from .oracle import InfeasibleOracle, exhaustive_search, optimal_config, pareto_front, write_entries, write_table
from .slbench import mlp_spec_for, rf_spec_for

OFFLINE_STREAM = 0x0FF1
TRACE_HEADER = ["seed", "episode", "vcpu", "mem_mb", "lc_mbps", "input_mbps", "output_mbps", "steps", "converged",
                "epsilon", "cumulative_reward"]
STEPS_HEADER = ["seed", "episode", "step", "vcpu", "mem_mb", "lc_mbps", "input_mbps", "cpu_util", "mem_util",
                "latency_ms", "output_mbps", "kpi_ok"]


class Run:
    """Output directory plus the list of artifacts written so far."""

    def __init__(self, cfg: ExperimentConfig, command: str):
        self.cfg, self.command = cfg, command
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        self.artifacts.append(p)
        return p

    def log(self, msg: str):
        print(f"[{self.command}] {msg}")


def weight_slug(w: WeightVector) -> str:
    return "w" + "-".join(f"{x:.4g}" for x in w.as_tuple())


def _env_factory(cfg: ExperimentConfig, kind: VnfKind) -> Callable[[int], object]:
    def build(seed: int):
        return make_env(kind, seed, cfg.input_rate, cfg.noise, cfg.targets, cfg.grid)
    return build


def _noise_free_optimum(cfg: ExperimentConfig, kind: VnfKind, rate: float):
    env = make_env(kind, 0, rate, False, cfg.targets, cfg.grid)
    return optimal_config(exhaustive_search(env, rate, 1))


# ---------------------------------------------------------------- commands

def cmd_oracle(cfg: ExperimentConfig, run: Run) -> int:
    rate = cfg.oracle.input_rate
    for kind in cfg.vnfs:
        env = make_env(kind, cfg.seeds[0], rate, cfg.noise, cfg.targets, cfg.grid)
        table = exhaustive_search(env, rate, cfg.oracle.runs if cfg.noise else 1)
        write_table(run.path(f"oracle_{kind.value}.csv"), table)
        front = pareto_front(table)
        write_entries(run.path(f"pareto_{kind.value}.csv"), front, rate)
        try:
            best = optimal_config(table)
            run.log(f"{kind.value}: optimum {best.resources.as_tuple()} OR {best.output_rate:.1f}, "
                    f"front {len(front)} points")
        except InfeasibleOracle:
            run.log(f"{kind.value}: no configuration meets the targets at {rate} Mbps")
    return 0


def cmd_offline(cfg: ExperimentConfig, run: Run) -> int:
    o = cfg.offline
    search = dict(ir_lo=o.ir_lo, ir_hi=o.ir_hi, resolution=o.resolution)
    for kind in cfg.vnfs:
        env = make_env(kind, cfg.seeds[0], cfg.input_rate, cfg.noise, cfg.targets, cfg.grid)
        weights = influence_weights(env, cfg.grid, **search)
        rng = np.random.default_rng([cfg.seeds[0], OFFLINE_STREAM])
        records = collect_dataset(env, weights, o.samples, rng, cfg.grid, **search)
        write_dataset(run.path(f"dataset_{kind.value}.csv"), records)
        msg = f"{kind.value}: {len(records)} records, influence {tuple(round(w, 3) for w in weights.as_tuple())}"
        try:
            pick = predict_baseline(fit_baseline(records, cfg.grid), cfg.input_rate)
            msg += f", baseline for {cfg.input_rate:g} Mbps: {pick.as_tuple()}"
        except ValueError as exc:
            msg += f", no baseline: {exc}"
        run.log(msg)
    return 0


def _write_trace(path: Path, result, seeds: Sequence[int]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for si, seed in enumerate(seeds):
            for t, st in enumerate(result.stats[si]):
                res = st.final_state.resources
                vals = [*res.as_tuple(), st.final_state.input_rate, st.final_state.kpi.output_rate]
                w.writerow([seed, t, *(repr(float(v)) for v in vals), st.steps, int(st.converged),
                            repr(float(st.epsilon)), repr(float(st.cumulative_reward))])


def _write_steps(path: Path, records: Sequence[StepRecord]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEPS_HEADER)
        for r in records:
            k = r.kpi
            vals = [*r.resources.as_tuple(), r.input_rate, k.cpu_util, k.mem_util, k.latency, k.output_rate]
            w.writerow([r.seed, r.episode, r.step, *(repr(float(v)) for v in vals), int(r.kpi_ok)])


def cmd_train(cfg: ExperimentConfig, run: Run) -> int:
    w = cfg.agent.weights
    for kind in cfg.vnfs:
        result = train(_env_factory(cfg, kind), cfg.agent, cfg.reward_config(kind), cfg.seeds, cfg.record_every)
        stem = f"{kind.value}_{weight_slug(w)}"
        _write_trace(run.path(f"trace_{stem}.csv"), result, cfg.seeds)
        for seed, q in zip(cfg.seeds, result.qsets):
            q.to_csv(run.path(f"qtable_{stem}_s{seed}.csv"))
        if cfg.record_every:
            _write_steps(run.path(f"steps_{stem}.csv"), result.records)
        s = steady_state_summary(result.trace, weights=w, vnf=kind.value)
        run.log(f"{kind.value} {w.label()}: steady vcpu {s.vcpu_pct:.1f}% mem {s.mem_pct:.1f}% "
                f"OR/LC {s.or_lc_pct:.1f}%")
    return 0


def _bench_config(cfg: ExperimentConfig, kind: VnfKind) -> BenchConfig:
    b = cfg.bench
    rf_over = {} if b.rf_trees is None else {"n_trees": b.rf_trees}
    return BenchConfig(kind, episodes=b.episodes, landmarks=b.landmarks, convergence_landmark=b.convergence_landmark,
                       agent=replace(cfg.agent, max_steps=b.max_steps), weights=cfg.agent.weights,
                       record_every=b.record_every, seeds=cfg.seeds,
                       mlp=mlp_spec_for(kind, epochs=b.mlp_epochs, seed=cfg.seeds[0]),
                       rf=rf_spec_for(kind, seed=cfg.seeds[0], **rf_over), targets=cfg.targets,
                       noise=cfg.noise, grid=cfg.grid)


def cmd_bench(cfg: ExperimentConfig, run: Run) -> int:
    for kind in cfg.vnfs:
        bc = _bench_config(cfg, kind)
        result = run_benchmark(bc)
        write_errors(run.path(f"errors_{kind.value}.csv"), result.rows)
        table = dominance_table(result, bc.convergence_landmark)
        summary = "; ".join(f"{m} " + " ".join(f"{r}={v:.1f}%" for r, v in d.items()) for m, d in table.items())
        run.log(f"{kind.value}: mean |error| from episode {bc.convergence_landmark}: {summary}")
    return 0


def _scenario_task(args):
    cfg, kind, w = args
    agent = replace(cfg.agent, weights=w)
    result = train(_env_factory(cfg, kind), agent, cfg.reward_config(kind), cfg.seeds)
    try:
        best = _noise_free_optimum(cfg, kind, cfg.input_rate).resources
    except InfeasibleOracle:
        best = None
    return steady_state_summary(result.trace, weights=w, optimum=best, vnf=kind.value)


def cmd_scenarios(cfg: ExperimentConfig, run: Run, workers: int = 1) -> int:
    for kind in cfg.vnfs:
        tasks = [(cfg, kind, w) for w in cfg.scenario_weights]
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_scenario_task, tasks))
        else:
            results = [_scenario_task(t) for t in tasks]
        write_scenarios(run.path(f"scenarios_{kind.value}.csv"), results)
        for r in results:
            run.log(f"{kind.value} {r.weights.label()}: vcpu {r.vcpu_pct:.1f}% mem {r.mem_pct:.1f}% "
                    f"OR/LC {r.or_lc_pct:.1f}%")
    return 0


COMMANDS = {"oracle": cmd_oracle, "offline": cmd_offline, "train": cmd_train, "bench": cmd_bench,
            "scenarios": cmd_scenarios}


# ---------------------------------------------------------------- manifest

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict[str, str]:
    return {"version.vnfprof": __version__, "version.python": platform.python_version(),
            "version.numpy": np.__version__}


def write_manifest(run: Run) -> Path:
    cfg = run.cfg
    lines = {"command": run.command, "config_hash": config_hash(cfg), "seeds": ",".join(map(str, cfg.seeds)),
             **_versions()}
    names = sorted(p.name for p in run.artifacts)
    lines["artifacts"] = ",".join(names)
    for p in sorted(run.artifacts, key=lambda p: p.name):
        lines[f"sha256.{p.name}"] = _sha256(p)
    lines.update({f"config.{k}": v for k, v in to_flat(cfg).items()})
    path = run.out / f"manifest_{run.command}.txt"
    path.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()))
    return path


def read_manifest(path: str | Path) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{p}: no such manifest")
    out = {}
    for n, line in enumerate(p.read_text().splitlines(), 1):
        if not line.strip():
            continue
        if " = " not in line:
            raise ConfigError(f"{p}:{n}: expected 'key = value'")
        k, v = line.split(" = ", 1)
        out[k] = v
    for key in ("command", "config_hash"):
        if key not in out:
            raise ConfigError(f"{p}: manifest lacks {key!r}")
    return out


def manifest_config(manifest: dict[str, str], out_dir: str | None = None) -> ExperimentConfig:
    flat = {k[len("config."):]: v for k, v in manifest.items() if k.startswith("config.")}
    cfg = parse_config(flat_to_ini(flat), "<manifest>")
    if config_hash(cfg) != manifest["config_hash"]:
        raise ConfigError("manifest config does not match its recorded hash")
    return replace(cfg, out_dir=out_dir) if out_dir is not None else cfg


# ---------------------------------------------------------------- argument handling

def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    try:
        if args.vnf:
            kinds = tuple(VnfKind) if args.vnf == "all" else tuple(VnfKind.parse(v) for v in args.vnf.split(","))
            cfg = replace(cfg, vnfs=kinds)
        if args.seed:
            cfg = replace(cfg, seeds=tuple(int(s) for s in args.seed.split(",")))
    except ValueError as exc:
        raise ConfigError(f"--vnf/--seed: {exc}") from None
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if args.noise:
        cfg = replace(cfg, noise=args.noise == "on")
    if args.weights:
        try:
            w = parse_weights(args.weights)
        except ValueError as exc:
            raise ConfigError(f"--weights: {exc}") from None
        cfg = replace(cfg, agent=replace(cfg.agent, weights=w))
        if args.command == "scenarios":
            cfg = replace(cfg, scenario_weights=(w,))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vnfprof", description="Multi-objective Q-learning VNF resource profiler.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("oracle", "exhaustive grid search, optimum and Pareto front"),
                        ("offline", "offline profiling dataset and baseline model"),
                        ("train", "train the agent for one weight vector"),
                        ("bench", "RL vs MLP vs RF in a ramping environment"),
                        ("scenarios", "steady-state sweep over all weight vectors")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="INI config file; omitted fields take defaults")
        s.add_argument("--vnf", help="comma list of inline, passive, vfw, or 'all'")
        s.add_argument("--weights", help="w_cpu,w_mem,w_lc summing to 1")
        s.add_argument("--seed", help="comma list of seeds")
        s.add_argument("--out", help="output directory")
        s.add_argument("--noise", choices=("on", "off"))
        if name == "scenarios":
            s.add_argument("--workers", type=int, default=1, help="parallel scenario processes")
    r = sub.add_parser("rerun", help="repeat a run from its manifest")
    r.add_argument("manifest")
    r.add_argument("--out", help="output directory (defaults to the recorded one)")
    r.add_argument("--check", action="store_true", help="fail unless every artifact digest matches")
    return p


def execute(cfg: ExperimentConfig, command: str, workers: int = 1) -> Run:
    run = Run(cfg, command)
    if command == "scenarios":
        cmd_scenarios(cfg, run, workers)
    else:
        COMMANDS[command](cfg, run)
    manifest = write_manifest(run)
    run.log(f"wrote {len(run.artifacts)} artifacts and {manifest}")
    return run


def _rerun(args) -> int:
    manifest = read_manifest(args.manifest)
    cfg = manifest_config(manifest, args.out)
    command = manifest["command"]
    if command not in COMMANDS:
        raise ConfigError(f"manifest names unknown command {command!r}")
    run = execute(cfg, command)
    if not args.check:
        return 0
    bad = [p.name for p in run.artifacts if manifest.get(f"sha256.{p.name}") != _sha256(p)]
    missing = set(manifest.get("artifacts", "").split(",")) - {p.name for p in run.artifacts} - {""}
    if bad or missing:
        print(f"vnfprof rerun: mismatch: {', '.join(sorted(bad + list(missing)))}", file=sys.stderr)
        return 3
    run.log("all artifact digests match the manifest")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rerun":
            return _rerun(args)
        cfg = _apply_overrides(load_config(args.config), args)
        execute(cfg, args.command, getattr(args, "workers", 1))
        return 0
    except ConfigError as exc:
        print(f"vnfprof {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"vnfprof {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
