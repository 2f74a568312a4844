"""Greedy, vanilla-beam, and constrained beam search over deterministic envs.

The constrained search keeps up to ``n_beams`` hypotheses. Each step it
proposes two candidate groups: the globally best extensions by cumulative
log-probability, plus, for every beam, the actions that advance unfulfilled
positive constraints. Candidates are grouped into banks by completed
constraint steps and beam slots are dealt round-robin from the most advanced
bank down, so hypotheses at every stage of constraint fulfilment survive.
Positive constraints are never force-scheduled: a hypothesis only finishes if
the environment terminates naturally with all constraints fulfilled, and the
returned answer is the finished hypothesis with the best true episodic
reward, optionally improved by swapping its last action.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .actions import BeamHypothesis, EpisodeConfig, N_ACTIONS, action_label
from .cache import RolloutEngine, RolloutResult
from .constraints import (
    Constraint,
    ConstraintListState,
    DeadEndError,
    LogitsProcessor,
    apply_processors,
    check_sequence_satisfies,
    masked_renormalized,
)

REFINE_BUDGET = 176  # 4 * 44 swap evaluations, the hard refinement cap


class SearchError(RuntimeError):
    pass


@dataclass
class SearchConfig:
    """Knobs of the constrained beam search."""

    n_beams: int = 4
    k_mult: int = 2
    include_greedy_seed: bool = True
    refine: bool = True
    max_length: int | None = None
    workers: int = 1
    debug_verify_constraints: bool = False

    def __post_init__(self):
        if self.n_beams < 1:
            raise ValueError("n_beams must be >= 1")
        if self.k_mult < 1:
            raise ValueError("k_mult must be >= 1")

    @property
    def refine_top_k(self) -> int:
        return 1 if self.n_beams <= 4 else 4


@dataclass
class GreedyResult:
    actions: tuple[int, ...]
    reward: float  # -inf when the episode failed or never terminated
    raw_reward: float  # environment's own cumulative reward, for reporting
    terminated: bool
    truncated: bool
    metrics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return bool(self.terminated and np.isfinite(self.reward))


@dataclass
class SolveResult:
    """Outcome of one search run, with the run's cache/step diagnostics."""

    actions: tuple[int, ...]
    reward: float
    energy: float | None
    n_modules: int
    n_beams: int
    feasible: bool
    env_steps_simulated: int
    cache_hit_rate: float
    wall_time_s: float
    bank_history: list[dict[int, int]] = field(default_factory=list)
    refine_evaluations: int = 0
    n_actions: int = N_ACTIONS

    def action_labels(self) -> list[str]:
        if self.n_actions == N_ACTIONS:
            return [action_label(a) for a in self.actions]
        return [str(a) for a in self.actions]

    def to_json_dict(self) -> dict:
        # Timing is isolated in its own sub-object so byte-level determinism
        # checks can drop it.
        return {
            "actions": self.action_labels(),
            "reward_kj_per_m2": self.reward if np.isfinite(self.reward) else None,
            "energy_kj_per_m2": self.energy,
            "n_modules": self.n_modules,
            "n_b": self.n_beams,
            "env_steps_simulated": self.env_steps_simulated,
            "cache_hit_rate": self.cache_hit_rate,
            "feasible": self.feasible,
            "refine_evaluations": self.refine_evaluations,
            "timing": {"wall_time_s": self.wall_time_s},
        }


@dataclass
class _Candidate:
    beam_index: int
    action: int
    actions: tuple[int, ...]
    score: float
    bank: int
    cstate: ConstraintListState


def _candidate_order(cand: _Candidate) -> tuple:
    # Highest score first; deterministic tie-break by action id then beam.
    return (-cand.score, cand.action, cand.beam_index)


def _hypothesis_order(hyp: BeamHypothesis) -> tuple:
    # Best reward first; prefer fewer modules, then lexicographic actions.
    return (-hyp.cumulative_reward, len(hyp.actions), hyp.actions)


def step_logps(
    policy: Callable,
    observation,
    prefix: Sequence[int],
    processors: Sequence[LogitsProcessor],
) -> np.ndarray:
    """Policy logits -> masked -> renormalized; raises DeadEndError if empty."""
    logits = np.asarray(policy(observation), dtype=float)
    return masked_renormalized(processors, prefix, logits)


def greedy_decode(
    engine: RolloutEngine,
    policy: Callable,
    config: EpisodeConfig,
    processors: Sequence[LogitsProcessor] = (),
    max_length: int | None = None,
) -> GreedyResult:
    """Follow the processor-masked argmax action until the episode ends."""
    actions: list[int] = []
    result = engine.rollout(config, actions)
    while not result.done:
        if max_length is not None and len(actions) >= max_length:
            break
        try:
            logps = step_logps(policy, result.observation, actions, processors)
        except DeadEndError:
            return GreedyResult(tuple(actions), -np.inf, -np.inf, False, True)
        actions.append(int(np.argmax(logps)))
        result = engine.rollout(config, actions)
    raw = result.cumulative_reward
    reward = raw if result.terminated else -np.inf
    return GreedyResult(
        tuple(actions), reward, raw, result.terminated, result.truncated, result.metrics
    )


def propose_candidates(
    beams: Sequence[BeamHypothesis],
    policy: Callable,
    processors: Sequence[LogitsProcessor],
    n_beams: int,
    k_mult: int = 2,
) -> list[_Candidate]:
    """Group-A (globally top-scored) plus group-B (constraint-advancing)
    extensions of the live beams, deduplicated."""
    group_a: list[tuple[float, int, int]] = []  # (score, beam_index, action)
    advancing: list[tuple[int, int, float]] = []  # (beam_index, action, score)
    for beam_index, beam in enumerate(beams):
        try:
            logps = step_logps(policy, beam.observation, beam.actions, processors)
        except DeadEndError:
            continue  # dead-end beam: contributes no candidates
        finite = np.isfinite(logps)
        for action in np.flatnonzero(finite):
            group_a.append((beam.score + float(logps[action]), beam_index, int(action)))
        advance_tokens = beam.constraint_state.advance() if beam.constraint_state else set()
        for action in sorted(advance_tokens):
            if finite[action]:
                advancing.append((beam_index, int(action), beam.score + float(logps[action])))

    group_a.sort(key=lambda entry: (-entry[0], entry[2], entry[1]))
    chosen: dict[tuple[int, int], float] = {}
    for score, beam_index, action in group_a[: k_mult * n_beams]:
        chosen[(beam_index, action)] = score
    for beam_index, action, score in advancing:
        chosen.setdefault((beam_index, action), score)

    candidates = []
    for (beam_index, action), score in chosen.items():
        beam = beams[beam_index]
        cstate = beam.constraint_state.copy() if beam.constraint_state else None
        if cstate is not None:
            cstate.update(action)
        candidates.append(
            _Candidate(
                beam_index=beam_index,
                action=action,
                actions=beam.actions + (action,),
                score=score,
                bank=cstate.bank() if cstate is not None else 0,
                cstate=cstate,
            )
        )
    candidates.sort(key=_candidate_order)
    return candidates


def allocate_banks(
    candidates: Sequence[_Candidate], n_beams: int
) -> tuple[list[_Candidate], dict[int, int]]:
    """Deal beam slots round-robin across constraint-progress banks.

    Banks are visited from the most advanced down; within a bank candidates
    rank by score (ties: lower action id, then lower beam index). Rounds
    keep cycling until all slots are used, so slots a sparse bank cannot
    fill flow to the remaining candidates by score.
    """
    if len(candidates) <= n_beams:
        selected = sorted(candidates, key=_candidate_order)
    else:
        banks: dict[int, list[_Candidate]] = {}
        for cand in candidates:
            banks.setdefault(cand.bank, []).append(cand)
        for bank_list in banks.values():
            bank_list.sort(key=_candidate_order)
        bank_order = sorted(banks, reverse=True)
        selected = []
        rank = 0
        while len(selected) < n_beams:
            took_any = False
            for bank in bank_order:
                if rank < len(banks[bank]):
                    selected.append(banks[bank][rank])
                    took_any = True
                    if len(selected) == n_beams:
                        break
            if not took_any:
                break
            rank += 1
    occupancy: dict[int, int] = {}
    for cand in selected:
        occupancy[cand.bank] = occupancy.get(cand.bank, 0) + 1
    return selected, occupancy


def _rollout_candidates(
    engine: RolloutEngine,
    config: EpisodeConfig,
    candidates: Sequence[_Candidate],
    workers: int,
    executor: ThreadPoolExecutor | None,
) -> list[RolloutResult]:
    if workers > 1 and executor is not None and len(candidates) > 1:
        return list(executor.map(lambda c: engine.rollout(config, c.actions), candidates))
    return [engine.rollout(config, cand.actions) for cand in candidates]


def _verify_constraint_state(cand: _Candidate, constraints) -> None:
    """Debug check: the copy-on-extend state must equal a fresh replay."""
    replayed = ConstraintListState(constraints).replay(cand.actions)
    if (replayed.completed_steps, replayed.completed) != (
        cand.cstate.completed_steps,
        cand.cstate.completed,
    ):
        raise SearchError(
            f"constraint state drift on prefix {cand.actions}: incremental "
            f"bank {cand.cstate.completed_steps} vs replay {replayed.completed_steps}"
        )


def step_beams(
    engine: RolloutEngine,
    config: EpisodeConfig,
    candidates: Sequence[_Candidate],
    workers: int = 1,
    executor: ThreadPoolExecutor | None = None,
) -> tuple[list[BeamHypothesis], list[BeamHypothesis]]:
    """Advance selected candidates one module each via cached rollouts.

    Returns (live, finished). Beams whose environment truncates are dropped;
    beams that terminate naturally move to the finished pool only if every
    positive constraint is fulfilled, and are discarded otherwise.
    """
    live: list[BeamHypothesis] = []
    finished: list[BeamHypothesis] = []
    results = _rollout_candidates(engine, config, candidates, workers, executor)
    for cand, result in zip(candidates, results):
        beam = BeamHypothesis(
            actions=cand.actions,
            score=cand.score,
            constraint_state=cand.cstate,
            env_snapshot=result.state,
            observation=result.observation,
            done=result.done,
            truncated=result.truncated,
            cumulative_reward=result.cumulative_reward,
            metrics=result.metrics,
        )
        if result.truncated:
            continue  # failed beam: not passed to the next timestep
        if result.terminated:
            if beam.constraint_state is None or beam.constraint_state.completed:
                finished.append(beam)
            continue  # terminated with unmet constraints: discarded
        live.append(beam)
    return live, finished


def finalize(hypotheses: Sequence[BeamHypothesis]) -> BeamHypothesis:
    """Best finished hypothesis by true cumulative episodic reward."""
    if not hypotheses:
        raise SearchError("no finished hypothesis to finalize")
    return min(hypotheses, key=_hypothesis_order)


def refine_last_action(
    hypotheses: Sequence[BeamHypothesis],
    engine: RolloutEngine,
    config: EpisodeConfig,
    processors: Sequence[LogitsProcessor] = (),
    constraints: Sequence[Constraint] = (),
    top_k: int = 4,
) -> tuple[BeamHypothesis, int]:
    """Swap the last action of the top hypotheses with every feasible action.

    Constraint-violating variants are dropped before simulation; surviving
    variants re-simulate only their final module thanks to the prefix cache.
    The incumbents stay in the pool, so refinement never returns a worse
    hypothesis. At most 4 * |A| = 176 new sequences are evaluated.
    """
    if not hypotheses:
        raise SearchError("refine_last_action needs at least one hypothesis")
    pool = sorted(hypotheses, key=_hypothesis_order)
    evaluations = 0
    extra: list[BeamHypothesis] = []
    for hyp in pool[:top_k]:
        if not hyp.actions:
            continue
        prefix = hyp.actions[:-1]
        masked = apply_processors(processors, prefix, np.zeros(engine.n_actions))
        for action in range(engine.n_actions):
            if action == hyp.actions[-1] or not np.isfinite(masked[action]):
                continue
            variant = prefix + (action,)
            if constraints and not check_sequence_satisfies(constraints, variant):
                continue
            if evaluations >= REFINE_BUDGET:
                break
            result = engine.rollout(config, variant)
            evaluations += 1
            if not result.terminated or result.steps_consumed != len(variant):
                continue
            extra.append(
                BeamHypothesis(
                    actions=variant,
                    score=hyp.score,
                    constraint_state=None,
                    env_snapshot=result.state,
                    observation=result.observation,
                    done=True,
                    cumulative_reward=result.cumulative_reward,
                    metrics=result.metrics,
                )
            )
    return finalize(list(pool) + extra), evaluations


def rlcbs_solve(
    engine: RolloutEngine,
    policy: Callable,
    config: EpisodeConfig,
    constraints: Sequence[Constraint] = (),
    processors: Sequence[LogitsProcessor] = (),
    search: SearchConfig | None = None,
) -> SolveResult:
    """Constrained beam search: propose -> allocate -> step until all beams
    finish or die, then finalize by true reward and refine the last action."""
    search = search or SearchConfig()
    t_start = time.perf_counter()
    steps_before = engine.stats.env_steps_simulated
    hits_before, misses_before = engine.stats.hits, engine.stats.misses

    executor = None
    if search.workers > 1:
        executor = ThreadPoolExecutor(max_workers=search.workers)

    try:
        root = engine.rollout(config, ())
        root_state = ConstraintListState(constraints) if constraints else None
        live = [
            BeamHypothesis(
                actions=(),
                score=0.0,
                constraint_state=root_state,
                env_snapshot=root.state,
                observation=root.observation,
            )
        ]
        finished: list[BeamHypothesis] = []
        bank_history: list[dict[int, int]] = []
        depth = 0
        while live:
            depth += 1
            if search.max_length is not None and depth > search.max_length:
                break
            candidates = propose_candidates(
                live, policy, processors, search.n_beams, search.k_mult
            )
            if not candidates:
                break
            selected, occupancy = allocate_banks(candidates, search.n_beams)
            if search.debug_verify_constraints and constraints:
                for cand in selected:
                    _verify_constraint_state(cand, constraints)
            bank_history.append(occupancy)
            live, newly_finished = step_beams(
                engine, config, selected, search.workers, executor
            )
            finished.extend(newly_finished)

        if search.include_greedy_seed:
            seed = greedy_decode(engine, policy, config, processors, search.max_length)
            if seed.feasible and check_sequence_satisfies(constraints, seed.actions):
                finished.append(
                    BeamHypothesis(
                        actions=seed.actions,
                        score=0.0,
                        done=True,
                        cumulative_reward=seed.reward,
                        metrics=seed.metrics,
                    )
                )

        refine_evals = 0
        if finished:
            best = finalize(finished)
            if search.refine:
                best, refine_evals = refine_last_action(
                    finished, engine, config, processors, constraints, search.refine_top_k
                )
            feasible = True
        else:
            best = BeamHypothesis(actions=(), cumulative_reward=-np.inf)
            feasible = False
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    hits = engine.stats.hits - hits_before
    misses = engine.stats.misses - misses_before
    lookups = hits + misses
    return SolveResult(
        actions=best.actions,
        reward=best.cumulative_reward,
        energy=best.metrics.get("energy_kj_per_m2") if feasible else None,
        n_modules=len(best.actions),
        n_beams=search.n_beams,
        feasible=feasible,
        env_steps_simulated=engine.stats.env_steps_simulated - steps_before,
        cache_hit_rate=hits / lookups if lookups else 0.0,
        wall_time_s=time.perf_counter() - t_start,
        bank_history=bank_history,
        refine_evaluations=refine_evals,
        n_actions=engine.n_actions,
    )


def beam_search_decode(
    engine: RolloutEngine,
    policy: Callable,
    config: EpisodeConfig,
    n_beams: int,
    processors: Sequence[LogitsProcessor] = (),
    max_length: int | None = None,
) -> SolveResult:
    """Vanilla beam search: top-n_b extensions by score, finalize by reward.

    This is the no-constraint reduction of the constrained search and is
    implemented independently of it (no candidate groups, no banks).
    """
    t_start = time.perf_counter()
    steps_before = engine.stats.env_steps_simulated
    root = engine.rollout(config, ())
    live = [BeamHypothesis(actions=(), score=0.0, observation=root.observation)]
    finished: list[BeamHypothesis] = []
    depth = 0
    while live:
        depth += 1
        if max_length is not None and depth > max_length:
            break
        extensions: list[tuple[float, int, int]] = []
        for beam_index, beam in enumerate(live):
            try:
                logps = step_logps(policy, beam.observation, beam.actions, processors)
            except DeadEndError:
                continue
            for action in np.flatnonzero(np.isfinite(logps)):
                extensions.append(
                    (beam.score + float(logps[action]), int(action), beam_index)
                )
        if not extensions:
            break
        extensions.sort(key=lambda entry: (-entry[0], entry[1], entry[2]))
        next_live: list[BeamHypothesis] = []
        for score, action, beam_index in extensions[:n_beams]:
            actions = live[beam_index].actions + (action,)
            result = engine.rollout(config, actions)
            beam = BeamHypothesis(
                actions=actions,
                score=score,
                observation=result.observation,
                done=result.done,
                truncated=result.truncated,
                cumulative_reward=result.cumulative_reward,
                metrics=result.metrics,
            )
            if result.truncated:
                continue
            if result.terminated:
                finished.append(beam)
            else:
                next_live.append(beam)
        live = next_live

    if finished:
        best = finalize(finished)
        feasible = True
    else:
        best = BeamHypothesis(actions=(), cumulative_reward=-np.inf)
        feasible = False
    return SolveResult(
        actions=best.actions,
        reward=best.cumulative_reward,
        energy=best.metrics.get("energy_kj_per_m2") if feasible else None,
        n_modules=len(best.actions),
        n_beams=n_beams,
        feasible=feasible,
        env_steps_simulated=engine.stats.env_steps_simulated - steps_before,
        cache_hit_rate=0.0,
        wall_time_s=time.perf_counter() - t_start,
        n_actions=engine.n_actions,
    )
