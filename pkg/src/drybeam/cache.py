"""Longest-prefix rollout cache over serializable environments.

A rollout of (episode config, action sequence) looks up successively
shorter prefixes of the sequence in a key-value store, restores the
environment from the longest cached prefix (or resets it when none is
cached), simulates only the remaining actions, and stores each newly
reached state under its prefix key. In single-thread use this turns the
quadratic re-simulation cost of beam search, n_b * T(T-1)/2 steps, into
n_b * T fresh steps.

Step accounting distinguishes three quantities:
  * ``env_steps_simulated`` - every env.step() call made;
  * ``env_steps_replayed`` - calls that re-simulated a (config, prefix)
    transition already simulated earlier in the run (pure waste);
  * ``env_steps_saved``    - steps avoided by restoring cached states.
On a full beam-search run with horizon T and n_b beams, the cached engine
simulates exactly T*n_b steps, and the uncached engine replays exactly
T(T-1)/2 * n_b steps, matching the two theoretical counts.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from typing import Sequence

from .actions import EpisodeConfig
from .envs.base import EnvironmentContract

logger = logging.getLogger(__name__)


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace, 17-significant-digit
    floats. Identical inputs give identical bytes on any platform."""

    def render(value) -> str:
        if isinstance(value, dict):
            items = sorted(value.items())
            return "{" + ",".join(f"{json.dumps(str(k))}:{render(v)}" for k, v in items) + "}"
        if isinstance(value, (list, tuple)):
            return "[" + ",".join(render(v) for v in value) + "]"
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return format(value, ".17g")
        if isinstance(value, int):
            return str(value)
        if value is None:
            return "null"
        return json.dumps(str(value))

    return render(obj)


def key_encode(namespace: dict, config: EpisodeConfig | dict, prefix: Sequence[int]) -> bytes:
    """Canonical cache key for (environment identity, episode config, prefix)."""
    config_dict = config.to_dict() if isinstance(config, EpisodeConfig) else dict(config)
    doc = {"ns": namespace, "config": config_dict, "actions": [int(a) for a in prefix]}
    return canonical_json(doc).encode("ascii")


def step_savings(horizon: int, n_beams: int) -> tuple[int, int]:
    """(uncached, cached) single-thread step counts for a full search."""
    if horizon < 1 or n_beams < 1:
        raise ValueError("horizon and beam count must be >= 1")
    return horizon * (horizon - 1) * n_beams // 2, horizon * n_beams


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    env_steps_simulated: int = 0
    env_steps_saved: int = 0
    env_steps_replayed: int = 0

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def as_dict(self) -> dict:
        return {
            "hits": self.hits,
            "misses": self.misses,
            "env_steps_simulated": self.env_steps_simulated,
            "env_steps_saved": self.env_steps_saved,
            "env_steps_replayed": self.env_steps_replayed,
            "hit_rate": self.hit_rate,
        }


@dataclass
class RolloutResult:
    """Final status of a (config, actions) rollout."""

    observation: object
    reward: float
    done: bool
    terminated: bool
    truncated: bool
    cumulative_reward: float
    state: bytes
    steps_consumed: int
    metrics: dict = field(default_factory=dict)

    @property
    def status(self) -> tuple:
        """The (observation, reward, done) triple the engine's callers use."""
        return self.observation, self.reward, self.done


class RolloutEngine:
    """Runs cached rollouts against per-thread environment instances.

    ``env_factory`` must build independent, identically configured
    environments; each worker thread gets its own. The store (if any) and
    the step counters are shared and thread-safe. With ``store=None`` every
    rollout restarts from reset, which is the uncached reference behavior.
    """

    def __init__(self, env_factory, store=None, stats: CacheStats | None = None):
        self._env_factory = env_factory
        self.store = store
        self.stats = stats or CacheStats()
        self._lock = threading.Lock()
        self._local = threading.local()
        self._seen_keys: set[bytes] = set()
        self._store_failed = False
        probe = env_factory()
        self.namespace = probe.cache_namespace()
        self.n_actions = probe.n_actions
        self._local.env = probe

    @property
    def env(self) -> EnvironmentContract:
        env = getattr(self._local, "env", None)
        if env is None:
            env = self._env_factory()
            self._local.env = env
        return env

    def _store_get(self, key: bytes) -> bytes | None:
        if self.store is None or self._store_failed:
            return None
        try:
            return self.store.get(key)
        except Exception:
            logger.warning("cache store unavailable; falling back to uncached rollouts")
            self._store_failed = True
            return None

    def _store_set(self, key: bytes, value: bytes) -> None:
        if self.store is None or self._store_failed:
            return
        try:
            self.store.set(key, value)
        except Exception:
            logger.warning("cache store unavailable; falling back to uncached rollouts")
            self._store_failed = True

    def rollout(self, config: EpisodeConfig, actions: Sequence[int]) -> RolloutResult:
        """Simulate ``actions`` from the episode start, reusing cached prefixes.

        If the environment terminates or truncates before all actions are
        consumed, the rollout stops there; ``steps_consumed`` reports how
        many actions were actually applied.
        """
        env = self.env
        actions = [int(a) for a in actions]

        # Longest cached prefix, searched by descending length.
        restored = 0
        if self.store is not None and not self._store_failed:
            for length in range(len(actions), 0, -1):
                key = key_encode(self.namespace, config, actions[:length])
                value = self._store_get(key)
                if value is not None:
                    env.set_state(value)
                    restored = length
                    with self._lock:
                        self.stats.hits += 1
                        self.stats.env_steps_saved += length
                    break
                with self._lock:
                    self.stats.misses += 1
        if restored == 0:
            env.reset(config)

        consumed = restored
        for index in range(restored, len(actions)):
            if env.done:
                break
            env.step(actions[index])
            consumed = index + 1
            key = key_encode(self.namespace, config, actions[: index + 1])
            with self._lock:
                self.stats.env_steps_simulated += 1
                if key in self._seen_keys:
                    self.stats.env_steps_replayed += 1
                else:
                    self._seen_keys.add(key)
            self._store_set(key, env.get_state())

        observation, reward, done = env.status()
        return RolloutResult(
            observation=observation,
            reward=reward,
            done=done,
            terminated=env.terminated,
            truncated=env.truncated,
            cumulative_reward=env.cumulative_reward,
            state=env.get_state(),
            steps_consumed=consumed,
            metrics=env.metrics(),
        )

    def cached_rollout(self, config: EpisodeConfig, actions: Sequence[int]) -> tuple:
        """Algorithm interface: returns the (observation, reward, done) triple."""
        return self.rollout(config, actions).status

    def reset_stats(self) -> None:
        with self._lock:
            self.stats = CacheStats()
            self._seen_keys = set()
