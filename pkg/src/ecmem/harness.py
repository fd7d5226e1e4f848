"""
Experiment orchestration: configs, multi-seed runs, CSV records, aggregation.

Config files are INI style::

    [experiment]
    env = cartpole
    strategy = lru
    memory_size = 10000
    total_steps = 15000
    eval_interval = 500
    eval_episodes = 10
    seeds = 5            ; a count, or an explicit list such as 0,3,7

    [agent]
    k = 11
    delta = 0.001
    discount = 0.99
    epsilon_initial = 1.0
    epsilon_final = 0.005
    epsilon_anneal_start = 5000
    epsilon_anneal_end = 25000
    projection = false
    key_size = 128
    backend = auto

Every key is optional; missing ones fall back to the defaults below.
"""

from __future__ import annotations

import configparser
import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ecmem.agent import AgentConfig, EpsilonSchedule, MFECAgent, run_training
from ecmem.envs import ENVIRONMENTS, make_env
from ecmem.memory import BACKENDS, STRATEGIES

CSV_HEADER = ("seed", "env", "strategy", "memory_size", "step", "mean_eval_reward")

DEFAULT_STEPS = {"cartpole": 15_000, "acrobot": 20_000, "openroom": 20_000, "fourroom": 20_000}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    env: str = "cartpole"
    strategy: str = "lru"
    memory_size: int = 10_000
    total_steps: Optional[int] = None
    eval_interval: int = 500
    eval_episodes: int = 10
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    k: int = 11
    delta: float = 1e-3
    discount: float = 0.99
    epsilon_initial: float = 1.0
    epsilon_final: float = 0.005
    epsilon_anneal_start: int = 5_000
    epsilon_anneal_end: int = 25_000
    projection: bool = False
    key_size: int = 128
    backend: str = "auto"

    def __post_init__(self):
        if self.total_steps is None:
            object.__setattr__(self, "total_steps", DEFAULT_STEPS.get(self.env, 20_000))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        self.validate()

    def validate(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigError("env", f"unknown env {self.env!r}; expected one of {sorted(ENVIRONMENTS)}")
        if self.strategy not in STRATEGIES:
            raise ConfigError("strategy", f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.backend not in BACKENDS:
            raise ConfigError("backend", f"unknown backend {self.backend!r}")
        for name in ("memory_size", "total_steps", "eval_episodes", "k", "key_size"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.eval_interval < 1:
            raise ConfigError("eval_interval", "must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed is required")
        if not self.delta > 0:
            raise ConfigError("delta", "must be > 0")
        if not 0 <= self.discount <= 1:
            raise ConfigError("discount", "must lie in [0, 1]")
        if not 0 <= self.epsilon_final <= self.epsilon_initial <= 1:
            raise ConfigError("epsilon_final", "need 0 <= epsilon_final <= epsilon_initial <= 1")
        if self.epsilon_anneal_start > self.epsilon_anneal_end:
            raise ConfigError("epsilon_anneal_start", "must not exceed epsilon_anneal_end")

    def agent_config(self, n_actions: int, obs_dim: int) -> AgentConfig:
        return AgentConfig(
            n_actions=n_actions,
            obs_dim=obs_dim,
            strategy=self.strategy,
            memory_size=self.memory_size,
            k=self.k,
            delta=self.delta,
            discount=self.discount,
            epsilon=EpsilonSchedule(
                self.epsilon_initial,
                self.epsilon_final,
                self.epsilon_anneal_start,
                self.epsilon_anneal_end,
            ),
            projection=self.projection,
            key_size=self.key_size,
            backend=self.backend,
        )


@dataclass(frozen=True)
class EvalRecord:
    seed: int
    env: str
    strategy: str
    memory_size: int
    step: int
    mean_eval_reward: float


# --------------------------------------------------------------------------
# config parsing
# --------------------------------------------------------------------------

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def parse_seeds(value) -> Tuple[int, ...]:
    if isinstance(value, int):
        return tuple(range(value))
    text = str(value).strip()
    if "," in text:
        return tuple(int(s) for s in text.split(",") if s.strip())
    return tuple(range(int(text)))


def _coerce(name: str, value):
    if name == "seeds":
        return parse_seeds(value)
    if name == "total_steps" and value is None:
        return None
    kind = _FIELD_TYPES[name]
    if kind == "bool":
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if kind in ("int", "Optional[int]"):
        return int(float(value)) if isinstance(value, str) and "e" in value.lower() else int(value)
    if kind == "float":
        return float(value)
    return str(value).strip()


def make_config(values: Dict[str, object], base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Build a config from ``values`` laid over ``base`` (or the defaults)."""
    merged = asdict(base) if base is not None else {}
    for name, value in values.items():
        if value is None:
            continue
        if name not in _FIELD_TYPES:
            raise ConfigError(name, "unknown configuration key")
        try:
            merged[name] = _coerce(name, value)
        except ValueError as exc:
            raise ConfigError(name, str(exc)) from None
    if base is not None and "env" in values and "total_steps" not in values:
        # a new env gets its own default budget unless one was given
        if base.total_steps == DEFAULT_STEPS.get(base.env):
            merged["total_steps"] = None
    return ExperimentConfig(**merged)


def load_config(path: str, overrides: Optional[Dict[str, object]] = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError("config", str(exc)) from None
    values: Dict[str, object] = {}
    for section in parser.sections():
        values.update(parser.items(section))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return make_config(values)


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------


def run_seed(config: ExperimentConfig, seed: int) -> List[EvalRecord]:
    """One independent training run; owns all of its state."""
    env = make_env(config.env)
    agent = MFECAgent(config.agent_config(env.n_actions, env.obs_dim), seed=seed)
    points = run_training(
        agent,
        lambda: make_env(config.env),
        config.total_steps,
        config.eval_interval,
        config.eval_episodes,
        seed=seed,
    )
    return [
        EvalRecord(seed, config.env, config.strategy, config.memory_size, p.step, p.mean_reward)
        for p in points
    ]


def _run_seed_args(args):
    return run_seed(*args)


def default_threads() -> int:
    env = os.environ.get("ECMEM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_many(jobs: Sequence[Tuple[ExperimentConfig, int]], threads: Optional[int] = None) -> List[List[EvalRecord]]:
    """Run (config, seed) jobs, in processes when more than one worker is allowed."""
    threads = default_threads() if threads is None else max(1, threads)
    if threads == 1 or len(jobs) <= 1:
        return [run_seed(c, s) for c, s in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(_run_seed_args, jobs))


def sort_records(records: Iterable[EvalRecord]) -> List[EvalRecord]:
    return sorted(records, key=lambda r: (r.env, r.strategy, r.memory_size, r.seed, r.step))


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> List[EvalRecord]:
    results = run_many([(config, s) for s in config.seeds], threads)
    return sort_records(r for rs in results for r in rs)


# --------------------------------------------------------------------------
# persistence and aggregation
# --------------------------------------------------------------------------


def write_csv(records: Iterable[EvalRecord], path: str):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in sort_records(records):
                w.writerow([r.seed, r.env, r.strategy, r.memory_size, r.step, repr(float(r.mean_eval_reward))])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def read_csv(path: str) -> List[EvalRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        EvalRecord(
            int(r["seed"]),
            r["env"],
            r["strategy"],
            int(r["memory_size"]),
            int(r["step"]),
            float(r["mean_eval_reward"]),
        )
        for r in rows
    ]


@dataclass(frozen=True)
class Aggregate:
    env: str
    strategy: str
    memory_size: int
    mean: float
    std: float
    n_seeds: int


def seed_finals(records: Iterable[EvalRecord], last_n: int = 10) -> Dict[tuple, Dict[int, float]]:
    """Per (env, strategy, memory_size): {seed: mean of its last ``last_n`` evals}."""
    series: Dict[tuple, Dict[int, List[EvalRecord]]] = {}
    for r in records:
        series.setdefault((r.env, r.strategy, r.memory_size), {}).setdefault(r.seed, []).append(r)
    out: Dict[tuple, Dict[int, float]] = {}
    for group, by_seed in series.items():
        out[group] = {}
        for seed, rs in sorted(by_seed.items()):
            if len(rs) < last_n:
                raise ValueError(f"seed {seed} of {group} has {len(rs)} evaluations, need {last_n}")
            rs.sort(key=lambda r: r.step)
            out[group][seed] = float(np.mean([r.mean_eval_reward for r in rs[-last_n:]]))
    return out


def aggregate_final(records: Iterable[EvalRecord], last_n: int = 10) -> List[Aggregate]:
    """Mean of each seed's last ``last_n`` evals, then mean and population std over seeds."""
    rows = []
    for (env, strategy, size), finals in sorted(seed_finals(records, last_n).items()):
        vals = np.array(list(finals.values()))
        rows.append(Aggregate(env, strategy, size, float(vals.mean()), float(vals.std()), len(vals)))
    return rows


def format_table(rows: Sequence[Aggregate]) -> str:
    lines = [f"{'env':<10} {'strategy':<8} {'memory':>7} {'mean':>9} {'std':>8} {'seeds':>5}"]
    for r in rows:
        lines.append(f"{r.env:<10} {r.strategy:<8} {r.memory_size:>7} {r.mean:>9.1f} {r.std:>8.1f} {r.n_seeds:>5}")
    return "\n".join(lines)
