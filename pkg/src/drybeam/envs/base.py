"""Deterministic-environment contract with byte-exact serializable state.

Environments used by the search must be deterministic (identical state +
action give a bit-identical successor) and snapshot/restorable so rollouts
can resume from cached states. State bytes are platform-independent:
a magic tag, a format version, and a length-prefixed little-endian array of
IEEE-754 doubles. A version bump invalidates cached states from stale
builds instead of silently corrupting results.
"""

from __future__ import annotations

import struct
from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np

from ..actions import EpisodeConfig

_MAGIC = b"DBEV"
_HEADER = struct.Struct("<4sHI")  # magic, format version, scalar count


class StateFormatError(ValueError):
    """State bytes do not match this build's format tag or length."""


def pack_state(version: int, values: Sequence[float]) -> bytes:
    arr = np.asarray(values, dtype="<f8")
    return _HEADER.pack(_MAGIC, version, arr.size) + arr.tobytes()


def unpack_state(version: int, data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise StateFormatError("state bytes too short for header")
    magic, got_version, count = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise StateFormatError(f"bad state magic {magic!r}")
    if got_version != version:
        raise StateFormatError(f"state format version {got_version} != expected {version}")
    body = data[_HEADER.size :]
    if len(body) != 8 * count:
        raise StateFormatError("state byte length does not match scalar count")
    return np.frombuffer(body, dtype="<f8").copy()


class EnvironmentContract(ABC):
    """Abstract deterministic environment driven one action at a time.

    ``step`` returns (observation, reward, terminated, truncated);
    ``status`` re-reports the current (observation, last reward, done)
    without advancing. ``set_state(get_state())`` is an exact restore,
    including termination flags and the accumulated reward.
    """

    @property
    @abstractmethod
    def n_actions(self) -> int: ...

    @abstractmethod
    def reset(self, config: EpisodeConfig | None = None):
        """Start a fresh episode; returns the initial observation."""

    @abstractmethod
    def step(self, action: int):
        """Advance one action; returns (obs, reward, terminated, truncated)."""

    @abstractmethod
    def get_state(self) -> bytes: ...

    @abstractmethod
    def set_state(self, data: bytes) -> None: ...

    @abstractmethod
    def status(self):
        """Current (observation, last reward, done) without stepping."""

    @abstractmethod
    def cache_namespace(self) -> dict:
        """JSON-able identity of this environment build for cache keys."""

    def metrics(self) -> dict:
        """Small JSON-able summary of the current episode (optional)."""
        return {}

    @property
    @abstractmethod
    def terminated(self) -> bool: ...

    @property
    @abstractmethod
    def truncated(self) -> bool: ...

    @property
    @abstractmethod
    def cumulative_reward(self) -> float: ...

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated
