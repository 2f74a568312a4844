"""Small enumerable environment and a brute-force oracle for exact testing.

The toy environment walks a seeded (step, context) table: each action moves
to a deterministic next context and banks a hidden per-(state, action)
reward. Like the drying task, the reward signal is sparse: step rewards are
zero until the horizon is reached, at which point the banked sum is paid
out. The state space is tiny, so optimal sequences can be found by
exhaustive enumeration and compared exactly against search output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..actions import EpisodeConfig
from ..constraints import apply_processors, check_sequence_satisfies
from .base import EnvironmentContract, pack_state, unpack_state

TOY_STATE_VERSION = 1
MAX_BRUTE_FORCE_SEQUENCES = 10**7
MAX_HORIZON = 16


@dataclass(frozen=True)
class ToyEnvSpec:
    """Seeded definition of a toy environment.

    ``rewards[t, ctx, a]`` is banked when taking ``a`` in context ``ctx`` at
    step ``t``; ``transitions[t, ctx, a]`` is the next context.
    """

    n_actions: int = 4
    horizon: int = 6
    n_contexts: int = 5
    seed: int = 0
    rewards: np.ndarray = field(init=False, repr=False, compare=False)
    transitions: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.n_actions <= 8:
            raise ValueError("toy action count must be in [1, 8]")
        if not 1 <= self.horizon <= MAX_HORIZON:
            raise ValueError(f"toy horizon must be in [1, {MAX_HORIZON}]")
        rng = np.random.default_rng(self.seed)
        shape = (self.horizon, self.n_contexts, self.n_actions)
        object.__setattr__(self, "rewards", np.round(rng.uniform(-1.0, 2.0, shape), 6))
        object.__setattr__(self, "transitions", rng.integers(0, self.n_contexts, shape))

    def to_dict(self) -> dict:
        return {
            "n_actions": self.n_actions,
            "horizon": self.horizon,
            "n_contexts": self.n_contexts,
            "seed": self.seed,
        }


class ToyEnv(EnvironmentContract):
    """Deterministic table-lookup environment with sparse terminal reward."""

    def __init__(self, spec: ToyEnvSpec):
        self.spec = spec
        self._t = 0
        self._ctx = 0
        self._banked = 0.0
        self._last_reward = 0.0
        self._terminated = False

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    def reset(self, config: EpisodeConfig | None = None):
        # Initial conditions are fixed by the spec; the episode config only
        # matters for physical environments.
        self._t = 0
        self._ctx = 0
        self._banked = 0.0
        self._last_reward = 0.0
        self._terminated = False
        return self._obs()

    def _obs(self) -> tuple[int, int]:
        return (self._t, self._ctx)

    def step(self, action: int):
        if self._terminated:
            raise RuntimeError("step() on a finished toy episode")
        if not 0 <= action < self.spec.n_actions:
            raise ValueError(f"action {action} outside toy action space")
        self._banked += float(self.spec.rewards[self._t, self._ctx, action])
        self._ctx = int(self.spec.transitions[self._t, self._ctx, action])
        self._t += 1
        if self._t >= self.spec.horizon:
            self._terminated = True
            self._last_reward = self._banked
        else:
            self._last_reward = 0.0
        return self._obs(), self._last_reward, self._terminated, False

    def status(self):
        return self._obs(), self._last_reward, self.done

    def get_state(self) -> bytes:
        return pack_state(
            TOY_STATE_VERSION,
            [self._t, self._ctx, self._banked, self._last_reward, float(self._terminated)],
        )

    def set_state(self, data: bytes) -> None:
        values = unpack_state(TOY_STATE_VERSION, data)
        self._t = int(values[0])
        self._ctx = int(values[1])
        self._banked = float(values[2])
        self._last_reward = float(values[3])
        self._terminated = bool(values[4])

    def cache_namespace(self) -> dict:
        return {"env": "toy", "state_version": TOY_STATE_VERSION, "spec": self.spec.to_dict()}

    @property
    def terminated(self) -> bool:
        return self._terminated

    @property
    def truncated(self) -> bool:
        return False

    @property
    def cumulative_reward(self) -> float:
        return self._last_reward if self._terminated else 0.0


def brute_force_optimum(
    spec: ToyEnvSpec, constraints=(), processors=()
) -> tuple[tuple[int, ...], float]:
    """Enumerate every action sequence and return the constrained optimum.

    Sequences violating a processor mask at any position, or leaving a
    positive constraint unfulfilled at termination, are discarded. Ties go
    to the lexicographically smallest sequence. Refuses problems with more
    than 10^7 sequences.
    """
    if spec.n_actions**spec.horizon > MAX_BRUTE_FORCE_SEQUENCES:
        raise ValueError("brute-force enumeration budget exceeded")

    best_seq: tuple[int, ...] | None = None
    best_reward = -np.inf
    probe = np.zeros(spec.n_actions)

    # Depth-first walk in lexicographic order; the first strict maximum seen
    # is therefore the lexicographically smallest optimal sequence.
    def recurse(t: int, ctx: int, banked: float, prefix: tuple[int, ...]):
        nonlocal best_seq, best_reward
        if t == spec.horizon:
            if check_sequence_satisfies(constraints, prefix) and banked > best_reward:
                best_reward = banked
                best_seq = prefix
            return
        masked = apply_processors(processors, prefix, probe)
        for action in range(spec.n_actions):
            if not np.isfinite(masked[action]):
                continue
            recurse(
                t + 1,
                int(spec.transitions[t, ctx, action]),
                banked + float(spec.rewards[t, ctx, action]),
                prefix + (action,),
            )

    recurse(0, 0, 0.0, ())
    if best_seq is None:
        return (), -np.inf
    return best_seq, float(best_reward)


def count_feasible(spec: ToyEnvSpec, constraints=(), processors=()) -> int:
    """Number of full-horizon sequences surviving masks and constraints."""
    if spec.n_actions**spec.horizon > MAX_BRUTE_FORCE_SEQUENCES:
        raise ValueError("enumeration budget exceeded")
    probe = np.zeros(spec.n_actions)
    count = 0

    def recurse(t: int, prefix: tuple[int, ...]):
        nonlocal count
        if t == spec.horizon:
            count += check_sequence_satisfies(constraints, prefix)
            return
        masked = apply_processors(processors, prefix, probe)
        for action in range(spec.n_actions):
            if np.isfinite(masked[action]):
                recurse(t + 1, prefix + (action,))

    recurse(0, ())
    return count


def random_toy_policy(spec: ToyEnvSpec, seed: int = 0):
    """Deterministic per-state pseudo-random logits with full support."""

    def policy(obs: tuple[int, int]) -> np.ndarray:
        t, ctx = obs
        rng = np.random.default_rng((seed * 1_000_003 + t * 1009 + ctx) % (2**63))
        logits = rng.normal(0.0, 1.0, spec.n_actions)
        peak = logits.max()
        return logits - (peak + np.log(np.exp(logits - peak).sum()))

    return policy
