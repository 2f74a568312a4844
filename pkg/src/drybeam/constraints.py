"""Positive-constraint state machines and negative-constraint logits processors.

Positive constraints ("at least n DEP modules") are tracked per beam by small
state machines exposing ``advance`` / ``update`` / ``remaining``. Negative
constraints ("no more than 6 SJR", "DEP/SP must repeat the previous air
temperature") are logits processors that mask actions to -inf; masked logit
vectors are renormalized so the surviving probabilities sum to one.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Iterable, Sequence

import numpy as np

from .actions import DEP_ACTIONS, N_TEMP_LEVELS, SJR_ACTIONS, SP_ACTIONS, decode_indices

NEG_INF = -np.inf


class DeadEndError(RuntimeError):
    """All actions masked: the beam has no feasible continuation."""


class Constraint(ABC):
    """A positive constraint a finished sequence must have fulfilled.

    Subclasses implement the three-operation contract: ``advance`` lists
    tokens that make progress, ``update`` consumes a generated token and
    reports ``(stepped, completed, reset)``, and ``remaining`` counts the
    steps left (0 iff fulfilled).
    """

    @abstractmethod
    def advance(self) -> list[int]:
        """Token ids that would take this constraint one step forward."""

    @abstractmethod
    def does_advance(self, token: int) -> bool:
        """Whether ``token`` would create progress, without mutating state."""

    @abstractmethod
    def update(self, token: int) -> tuple[bool, bool, bool]:
        """Consume a generated token; returns (stepped, completed, reset)."""

    @abstractmethod
    def remaining(self) -> int:
        """Steps still needed; 0 iff completely fulfilled."""

    @abstractmethod
    def reset(self) -> None:
        """Drop all progress."""

    @abstractmethod
    def copy(self, stateful: bool = False) -> "Constraint":
        """Fresh instance; with ``stateful`` the progress is carried over."""

    @property
    def completed(self) -> bool:
        return self.remaining() == 0


class SequentialDisjunctiveConstraint(Constraint):
    """Require ``count`` tokens drawn from ``actions``, in any positions.

    Progress never resets: tokens outside the set simply do not advance the
    constraint, so fulfilment does not have to happen on adjacent steps.
    """

    def __init__(self, actions: Iterable[int], count: int):
        self.actions = frozenset(int(a) for a in actions)
        if not self.actions:
            raise ValueError("satisfying action set must be non-empty")
        if count < 1:
            raise ValueError("required count must be >= 1")
        self.count = int(count)
        self.consumed = 0

    def advance(self) -> list[int]:
        if self.consumed >= self.count:
            return []
        return sorted(self.actions)

    def does_advance(self, token: int) -> bool:
        return self.consumed < self.count and token in self.actions

    def update(self, token: int) -> tuple[bool, bool, bool]:
        if self.does_advance(token):
            self.consumed += 1
            return True, self.consumed == self.count, False
        return False, False, False

    def remaining(self) -> int:
        return self.count - self.consumed

    def reset(self) -> None:
        self.consumed = 0

    def copy(self, stateful: bool = False) -> "SequentialDisjunctiveConstraint":
        new = SequentialDisjunctiveConstraint(self.actions, self.count)
        if stateful:
            new.consumed = self.consumed
        return new

    def __repr__(self):
        return f"SequentialDisjunctiveConstraint(n={self.count}, consumed={self.consumed})"


class PhrasalConstraint(Constraint):
    """Require an exact ordered token sequence; mismatch resets progress."""

    def __init__(self, tokens: Sequence[int]):
        self.tokens = tuple(int(t) for t in tokens)
        if not self.tokens:
            raise ValueError("phrasal constraint needs at least one token")
        self.fulfilled = 0
        self._completed = False

    def advance(self) -> list[int]:
        if self._completed:
            return []
        return [self.tokens[self.fulfilled]]

    def does_advance(self, token: int) -> bool:
        return not self._completed and token == self.tokens[self.fulfilled]

    def update(self, token: int) -> tuple[bool, bool, bool]:
        if self._completed:
            return False, False, False
        if self.does_advance(token):
            self.fulfilled += 1
            if self.fulfilled == len(self.tokens):
                self._completed = True
                return True, True, False
            return True, False, False
        # A wrong token mid-phrase breaks the phrase; restart from scratch.
        had_progress = self.fulfilled > 0
        self.reset()
        return False, False, had_progress

    def remaining(self) -> int:
        return 0 if self._completed else len(self.tokens) - self.fulfilled

    def reset(self) -> None:
        self.fulfilled = 0
        self._completed = False

    def copy(self, stateful: bool = False) -> "PhrasalConstraint":
        new = PhrasalConstraint(self.tokens)
        if stateful:
            new.fulfilled = self.fulfilled
            new._completed = self._completed
        return new

    def __repr__(self):
        return f"PhrasalConstraint(tokens={self.tokens}, fulfilled={self.fulfilled})"


class ConstraintListState:
    """Per-beam progress tracker over a list of positive constraints.

    The bank index used by dynamic beam allocation equals the total number of
    completed constraint steps across all registered constraints.
    """

    def __init__(self, constraints: Sequence[Constraint]):
        self.constraints = [c.copy(stateful=True) for c in constraints]
        self.total_required = sum(c.copy(stateful=False).remaining() for c in constraints)

    @property
    def completed(self) -> bool:
        return all(c.completed for c in self.constraints)

    @property
    def completed_steps(self) -> int:
        return self.total_required - sum(c.remaining() for c in self.constraints)

    def bank(self) -> int:
        return self.completed_steps

    def advance(self) -> set[int]:
        """Union of advancing tokens over unfulfilled constraints."""
        tokens: set[int] = set()
        for constraint in self.constraints:
            if not constraint.completed:
                tokens.update(constraint.advance())
        return tokens

    def update(self, token: int) -> tuple[bool, bool, bool]:
        """Feed one generated token through the constraint list.

        At most one unfulfilled constraint is stepped by a token; constraints
        that do not match still get a chance to reset (phrasal semantics).
        Returns (stepped, completed, reset) for the constraint that reacted.
        """
        stepped = completed = reset = False
        advanced = False
        for constraint in self.constraints:
            if constraint.completed:
                continue
            if not advanced and constraint.does_advance(token):
                s, c, r = constraint.update(token)
                stepped, completed, reset = stepped or s, completed or c, reset or r
                advanced = True
            else:
                _, _, r = constraint.update(token)
                reset = reset or r
        return stepped, completed, reset

    def replay(self, tokens: Iterable[int]) -> "ConstraintListState":
        for token in tokens:
            self.update(int(token))
        return self

    def copy(self) -> "ConstraintListState":
        new = ConstraintListState.__new__(ConstraintListState)
        new.constraints = [c.copy(stateful=True) for c in self.constraints]
        new.total_required = self.total_required
        return new

    def __repr__(self):
        return f"ConstraintListState(bank={self.bank()}, of={self.total_required})"


def check_sequence_satisfies(constraints: Sequence[Constraint], tokens: Sequence[int]) -> bool:
    """Independent replay check: does ``tokens`` fulfil every constraint?"""
    if not constraints:
        return True
    return ConstraintListState(constraints).replay(tokens).completed


class LogitsProcessor(ABC):
    """Transforms an action log-probability vector before selection.

    Implementations may only lower entries to -inf (masking); they never
    invent probability mass on masked actions.
    """

    @abstractmethod
    def apply(self, prefix: Sequence[int], logits: np.ndarray) -> np.ndarray:
        """Return a processed copy of ``logits`` given the action prefix."""


class MaxCountProcessor(LogitsProcessor):
    """Mask every action in ``actions`` once the prefix holds ``limit`` of them."""

    def __init__(self, actions: Iterable[int], limit: int):
        self.actions = frozenset(int(a) for a in actions)
        if limit < 0:
            raise ValueError("limit must be >= 0")
        self.limit = int(limit)

    def apply(self, prefix: Sequence[int], logits: np.ndarray) -> np.ndarray:
        out = np.array(logits, dtype=float, copy=True)
        if sum(1 for a in prefix if a in self.actions) >= self.limit:
            out[list(self.actions)] = NEG_INF
        return out


class TemperatureContinuityProcessor(LogitsProcessor):
    """DEP/SP actions must repeat the previous action's temperature level.

    Disabled on the first step of an episode, where there is no predecessor.
    """

    def apply(self, prefix: Sequence[int], logits: np.ndarray) -> np.ndarray:
        out = np.array(logits, dtype=float, copy=True)
        if not len(prefix):
            return out
        prev_temp = decode_indices(int(prefix[-1]))[1]
        for base in (DEP_ACTIONS, SP_ACTIONS):
            for temp_index in range(N_TEMP_LEVELS):
                if temp_index != prev_temp:
                    out[base.start + temp_index] = NEG_INF
        return out


class MaskActionsProcessor(LogitsProcessor):
    """Unconditionally mask a fixed action set (generic building block)."""

    def __init__(self, actions: Iterable[int]):
        self.actions = sorted(int(a) for a in actions)

    def apply(self, prefix: Sequence[int], logits: np.ndarray) -> np.ndarray:
        out = np.array(logits, dtype=float, copy=True)
        out[self.actions] = NEG_INF
        return out


def apply_processors(
    processors: Sequence[LogitsProcessor], prefix: Sequence[int], logits: np.ndarray
) -> np.ndarray:
    """Run the masking stage of a processor chain (no renormalization)."""
    out = np.asarray(logits, dtype=float)
    for processor in processors:
        out = processor.apply(prefix, out)
    return out


def renormalize(logits: np.ndarray) -> np.ndarray:
    """Log-softmax that preserves -inf masks.

    Relative probabilities of unmasked actions are unchanged and their
    probabilities sum to one. Raises :class:`DeadEndError` if every entry is
    masked, which callers treat as "drop this beam".
    """
    logits = np.asarray(logits, dtype=float)
    finite = np.isfinite(logits)
    if not finite.any():
        raise DeadEndError("all actions masked")
    peak = logits[finite].max()
    lse = peak + np.log(np.exp(logits[finite] - peak).sum())
    out = np.full_like(logits, NEG_INF)
    out[finite] = logits[finite] - lse
    return out


def masked_renormalized(
    processors: Sequence[LogitsProcessor], prefix: Sequence[int], logits: np.ndarray
) -> np.ndarray:
    """Convenience: masking stage followed by renormalization."""
    return renormalize(apply_processors(processors, prefix, logits))


def from_config(specs: Sequence[dict]) -> tuple[list[Constraint], list[LogitsProcessor]]:
    """Build (positive constraints, logits processors) from JSON-style specs.

    Recognized entries:
      {"type": "min_count", "actions": [...], "n": int}
      {"type": "max_count", "actions": [...], "n": int}
      {"type": "temp_continuity"}
      {"type": "phrasal", "actions": [...]}

    An "exactly n" requirement is expressed by listing both a min_count and a
    max_count entry with the same n.
    """
    constraints: list[Constraint] = []
    processors: list[LogitsProcessor] = []
    for spec in specs:
        kind = spec.get("type")
        if kind == "min_count":
            constraints.append(SequentialDisjunctiveConstraint(spec["actions"], spec["n"]))
        elif kind == "max_count":
            processors.append(MaxCountProcessor(spec["actions"], spec["n"]))
        elif kind == "temp_continuity":
            processors.append(TemperatureContinuityProcessor())
        elif kind == "phrasal":
            constraints.append(PhrasalConstraint(spec["actions"]))
        else:
            raise ValueError(f"unknown constraint type {kind!r}")
    return constraints, processors


def dryer_constraint_set(
    max_sjr: int = 6, min_dep: int = 3, continuity: bool = True
) -> tuple[list[Constraint], list[LogitsProcessor]]:
    """The standard dryer constraint bundle (constraints 1-3)."""
    specs: list[dict] = [
        {"type": "max_count", "actions": list(SJR_ACTIONS), "n": max_sjr},
        {"type": "min_count", "actions": list(DEP_ACTIONS), "n": min_dep},
    ]
    if continuity:
        specs.append({"type": "temp_continuity"})
    return from_config(specs)
