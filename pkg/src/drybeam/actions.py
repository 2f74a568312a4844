"""Shared vocabulary for the 44-way discrete action space and episode setup.

An action selects one dryer module type (PP, SJR, DEP, SP) together with one
of 11 discrete hot-air temperature levels. Actions are dense integers
``a = module_index * 11 + temp_index`` so that ids 0-10 are PP, 11-21 SJR,
22-32 DEP, and 33-43 SP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

MODULE_TYPES: tuple[str, ...] = ("PP", "SJR", "DEP", "SP")
TEMP_LEVELS_C: tuple[int, ...] = (80, 91, 102, 113, 124, 135, 146, 157, 168, 179, 190)

N_MODULE_TYPES = len(MODULE_TYPES)
N_TEMP_LEVELS = len(TEMP_LEVELS_C)
N_ACTIONS = N_MODULE_TYPES * N_TEMP_LEVELS

PP, SJR, DEP, SP = range(N_MODULE_TYPES)

#: Action-id ranges per module type, e.g. SJR_ACTIONS == range(11, 22).
PP_ACTIONS = range(0, 11)
SJR_ACTIONS = range(11, 22)
DEP_ACTIONS = range(22, 33)
SP_ACTIONS = range(33, 44)

ACTION_SPACE_VERSION = "44v1"


class InvalidActionError(ValueError):
    """Raised for action ids or (module, temperature) pairs outside the space."""


@dataclass(frozen=True)
class ActionSpace:
    """The combined module-type x air-temperature action space."""

    module_types: tuple[str, ...] = MODULE_TYPES
    temp_levels: tuple[int, ...] = TEMP_LEVELS_C

    @property
    def size(self) -> int:
        return len(self.module_types) * len(self.temp_levels)


def decode_action(action: int) -> tuple[str, int]:
    """Return (module label, air temperature in Celsius) for an action id."""
    if not 0 <= action < N_ACTIONS:
        raise InvalidActionError(f"action id {action} outside [0, {N_ACTIONS - 1}]")
    module_index, temp_index = divmod(int(action), N_TEMP_LEVELS)
    return MODULE_TYPES[module_index], TEMP_LEVELS_C[temp_index]


def decode_indices(action: int) -> tuple[int, int]:
    """Return (module_index, temp_index) for an action id."""
    if not 0 <= action < N_ACTIONS:
        raise InvalidActionError(f"action id {action} outside [0, {N_ACTIONS - 1}]")
    return divmod(int(action), N_TEMP_LEVELS)


def encode_action(module_type: str | int, temp_index: int) -> int:
    """Inverse of :func:`decode_action`, taking a label or module index."""
    if isinstance(module_type, str):
        try:
            module_index = MODULE_TYPES.index(module_type)
        except ValueError:
            raise InvalidActionError(f"unknown module type {module_type!r}") from None
    else:
        module_index = int(module_type)
        if not 0 <= module_index < N_MODULE_TYPES:
            raise InvalidActionError(f"module index {module_index} outside [0, 3]")
    if not 0 <= temp_index < N_TEMP_LEVELS:
        raise InvalidActionError(f"temp index {temp_index} outside [0, 10]")
    return module_index * N_TEMP_LEVELS + temp_index


def action_label(action: int) -> str:
    """Canonical textual form of an action, e.g. ``"SJR@124"``."""
    module, temp = decode_action(action)
    return f"{module}@{temp}"


def parse_action_label(label: str) -> int:
    """Parse the canonical ``"SJR@124"`` form back to an action id."""
    try:
        module, temp_text = label.split("@")
        temp_index = TEMP_LEVELS_C.index(int(temp_text))
    except (ValueError, IndexError):
        raise InvalidActionError(f"malformed action label {label!r}") from None
    return encode_action(module, temp_index)


def accumulate_score(prefix_score: float, logp: float) -> float:
    """Extend a beam score by one action log-probability (product rule in logs)."""
    return prefix_score + logp


@dataclass(frozen=True)
class EpisodeConfig:
    """Initial conditions of one drying episode.

    ``speed_factor`` maps linearly to machine speed (1.0 = slowest). The
    defaults reproduce the standard run: sheet enters at 20 C with dry-basis
    moisture content 1.5 and must be dried to 0.2 within 12 modules.
    """

    speed_factor: float = 0.5
    initial_temp_c: float = 20.0
    initial_dbmc: float = 1.5
    target_dbmc: float = 0.2
    max_modules: int = 12
    ir_enabled: bool = False

    def __post_init__(self):
        if not 0.0 <= self.speed_factor <= 1.0:
            raise ValueError(f"speed_factor {self.speed_factor} outside [0, 1]")
        if self.max_modules < 1:
            raise ValueError("max_modules must be >= 1")

    def to_dict(self) -> dict:
        return {
            "speed_factor": self.speed_factor,
            "initial_temp_c": self.initial_temp_c,
            "initial_dbmc": self.initial_dbmc,
            "target_dbmc": self.target_dbmc,
            "max_modules": self.max_modules,
            "ir_enabled": self.ir_enabled,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EpisodeConfig":
        return cls(**data)


@dataclass
class BeamHypothesis:
    """A partial action sequence plus everything needed to extend or score it.

    ``score`` is the sum of renormalized action log-probabilities (0 for the
    empty sequence). ``cumulative_reward`` is the running sum of environment
    rewards and is only meaningful once ``done`` is set.
    """

    actions: tuple[int, ...] = ()
    score: float = 0.0
    constraint_state: object | None = None
    env_snapshot: bytes | None = None
    observation: object | None = None
    done: bool = False
    truncated: bool = False
    cumulative_reward: float = 0.0
    metrics: dict = field(default_factory=dict)

    def extended(self, action: int, logp: float) -> "BeamHypothesis":
        """New hypothesis with one more action; env fields are filled on step."""
        return BeamHypothesis(
            actions=self.actions + (int(action),),
            score=accumulate_score(self.score, logp),
            constraint_state=None,
            env_snapshot=None,
            observation=None,
        )

    @property
    def length(self) -> int:
        return len(self.actions)

    def labels(self) -> list[str]:
        return [action_label(a) for a in self.actions]


def format_sequence(actions: Sequence[int]) -> str:
    return " ".join(action_label(a) for a in actions)
