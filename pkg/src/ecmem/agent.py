"""
Model-free episodic control agent.

The agent keeps one bounded memory per action, acts epsilon-greedily on the
kernel-weighted k-NN estimates, and writes Monte-Carlo discounted returns for
every visited (state, action) pair when an episode ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from ecmem.envs import Env
from ecmem.memory import ActionMemory, EmptyMemoryError, KernelParams, lookup_best_action


@dataclass(frozen=True)
class EpsilonSchedule:
    initial: float = 1.0
    final: float = 0.005
    anneal_start: int = 5_000
    anneal_end: int = 25_000

    def __post_init__(self):
        if not 0 <= self.final <= self.initial <= 1:
            raise ValueError("need 0 <= final <= initial <= 1")
        if self.anneal_start > self.anneal_end:
            raise ValueError("anneal_start must not exceed anneal_end")


def epsilon_at(schedule: EpsilonSchedule, t: int) -> float:
    """Constant, then linear decay, then constant."""
    if t <= schedule.anneal_start:
        return schedule.initial
    if t >= schedule.anneal_end:
        return schedule.final
    frac = (t - schedule.anneal_start) / (schedule.anneal_end - schedule.anneal_start)
    return schedule.initial + frac * (schedule.final - schedule.initial)


def make_projection(obs_dim: int, key_dim: int, seed: int) -> np.ndarray:
    """Gaussian random projection matrix of shape (key_dim, obs_dim).

    Entries are N(0, 1) / sqrt(key_dim), so squared distances are preserved
    in expectation.
    """
    if obs_dim < 1 or key_dim < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((key_dim, obs_dim)) / math.sqrt(key_dim)


def episode_returns(rewards, discount: float) -> List[float]:
    """Suffix returns R_t = r_{t+1} + discount * R_{t+1}, computed backwards."""
    if not 0 <= discount <= 1:
        raise ValueError("discount must lie in [0, 1]")
    out = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + discount * acc
        out[t] = acc
    return out


@dataclass
class AgentConfig:
    n_actions: int
    obs_dim: int
    strategy: str = "lru"
    memory_size: int = 10_000
    k: int = 11
    delta: float = 1e-3
    discount: float = 0.99
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    projection: bool = False
    key_size: int = 128
    backend: str = "auto"
    bootstrap_truncated: bool = False

    def __post_init__(self):
        if not 0 <= self.discount <= 1:
            raise ValueError("discount must lie in [0, 1]")
        if self.memory_size < 1:
            raise ValueError("memory_size must be >= 1")

    @property
    def key_dim(self) -> int:
        return self.key_size if self.projection else self.obs_dim


@dataclass
class EpisodeTrace:
    keys: List[np.ndarray] = field(default_factory=list)
    actions: List[int] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)

    def add(self, key, action: int, reward: float):
        self.keys.append(key)
        self.actions.append(action)
        self.rewards.append(reward)

    def __len__(self):
        return len(self.actions)


class MFECAgent:
    def __init__(self, config: AgentConfig, seed: int = 0):
        self.config = config
        self.params = KernelParams(config.k, config.delta)
        self.memories = [
            ActionMemory(config.memory_size, config.key_dim, config.strategy, backend=config.backend)
            for _ in range(config.n_actions)
        ]
        self.projection = (
            make_projection(config.obs_dim, config.key_size, seed) if config.projection else None
        )
        self.t = 0

    def key(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        if self.projection is None:
            return obs
        return self.projection @ obs

    def select_action(self, key, epsilon: float, rng: np.random.Generator, now: Optional[int] = None) -> int:
        """Epsilon-greedy; uniform random whenever every memory is empty.

        ``now`` stamps the neighbours used for LRU; ``None`` means read-only.
        """
        if epsilon > 0 and rng.random() < epsilon:
            return int(rng.integers(self.config.n_actions))
        try:
            action, _ = lookup_best_action(self.memories, key, self.params, now=now)
        except EmptyMemoryError:
            return int(rng.integers(self.config.n_actions))
        return action

    def value(self, key) -> float:
        """Read-only greedy value estimate; 0 when nothing is stored."""
        try:
            return lookup_best_action(self.memories, key, self.params, now=None)[1]
        except EmptyMemoryError:
            return 0.0

    def commit_episode(self, trace: EpisodeTrace, now: Optional[int] = None, tail_key=None) -> list:
        """Write every (key, action, return) of the trace, in time order.

        ``tail_key`` marks a trace cut off by the step cap; when
        bootstrapping is enabled its value estimate seeds the returns.
        """
        if len(trace) == 0:
            raise ValueError("cannot commit an empty trace")
        now = self.t if now is None else now
        rewards = list(trace.rewards)
        if tail_key is not None and self.config.bootstrap_truncated:
            tail = self.value(tail_key)
            if math.isfinite(tail):
                rewards[-1] += self.config.discount * tail
        returns = episode_returns(rewards, self.config.discount)
        effects = []
        for key, action, ret in zip(trace.keys, trace.actions, returns):
            effects.append(self.memories[action].insert(key, ret, now=now, params=self.params))
        return effects


@dataclass
class EvalPoint:
    step: int
    mean_reward: float


def run_episode_greedy(agent: MFECAgent, env: Env, rng: np.random.Generator) -> float:
    """One argmax rollout that leaves the memories untouched."""
    obs = env.reset(rng)
    total = 0.0
    while True:
        a = agent.select_action(agent.key(obs), 0.0, rng, now=None)
        res = env.step(a)
        total += res.reward
        if res.done or res.truncated:
            return total
        obs = res.observation


def evaluate(agent: MFECAgent, env_factory: Callable[[], Env], episodes: int, rng) -> float:
    env = env_factory()
    return float(np.mean([run_episode_greedy(agent, env, rng) for _ in range(episodes)]))


def run_training(
    agent: MFECAgent,
    env_factory: Callable[[], Env],
    total_steps: int,
    eval_interval: int,
    eval_episodes: int = 10,
    seed: int = 0,
) -> List[EvalPoint]:
    """Train for exactly ``total_steps`` environment steps.

    Every ``eval_interval`` steps the greedy policy is scored over
    ``eval_episodes`` episodes on a fresh environment. Evaluation has its own
    random stream and never writes to or touches the memories.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    train_ss, eval_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(train_ss)
    eval_seeds = eval_ss.spawn(total_steps // eval_interval) if eval_interval > 0 else []

    env = env_factory()
    schedule = agent.config.epsilon
    records = []
    trace = EpisodeTrace()
    obs = env.reset(rng)
    for _ in range(total_steps):
        t = agent.t
        key = agent.key(obs)
        a = agent.select_action(key, epsilon_at(schedule, t), rng, now=t)
        res = env.step(a)
        trace.add(key, a, res.reward)
        agent.t += 1
        if res.done or res.truncated:
            tail = None if res.done else agent.key(res.observation)
            agent.commit_episode(trace, tail_key=tail)
            trace = EpisodeTrace()
            obs = env.reset(rng)
        else:
            obs = res.observation
        if eval_interval > 0 and agent.t % eval_interval == 0:
            eval_rng = np.random.default_rng(eval_seeds[agent.t // eval_interval - 1])
            records.append(EvalPoint(agent.t, evaluate(agent, env_factory, eval_episodes, eval_rng)))
    if len(trace):
        agent.commit_episode(trace)
    return records
