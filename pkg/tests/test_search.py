import numpy as np
import pytest

from drybeam.actions import BeamHypothesis, EpisodeConfig
from drybeam.cache import RolloutEngine, step_savings
from drybeam.constraints import (
    ConstraintListState,
    MaskActionsProcessor,
    SequentialDisjunctiveConstraint,
)
from drybeam.envs.toy import ToyEnv, ToyEnvSpec, brute_force_optimum, random_toy_policy
from drybeam.kvstore import InMemoryStore
from drybeam.policy import dp_oracle_policy
from drybeam.search import (
    SearchConfig,
    allocate_banks,
    beam_search_decode,
    finalize,
    greedy_decode,
    propose_candidates,
    refine_last_action,
    rlcbs_solve,
    _Candidate,
)

CFG = EpisodeConfig()


def engine_for(spec, store="memory"):
    return RolloutEngine(
        lambda: ToyEnv(spec), InMemoryStore() if store == "memory" else store
    )


def uniform_policy(n_actions):
    logp = np.full(n_actions, -np.log(n_actions))

    def policy(obs):
        return logp

    return policy


class TestGreedyDecode:
    def test_oracle_policy_recovers_optimum(self):
        spec = ToyEnvSpec(n_actions=4, horizon=5, seed=2)
        result = greedy_decode(engine_for(spec), dp_oracle_policy(spec), CFG)
        seq, reward = brute_force_optimum(spec)
        assert result.actions == seq
        assert result.reward == pytest.approx(reward, abs=1e-12)

    def test_one_hot_policy_reproduces_script(self):
        spec = ToyEnvSpec(n_actions=4, horizon=4, seed=0)
        script = [1, 3, 0, 2]

        def policy(obs):
            logp = np.full(4, -np.inf)
            logp[script[obs[0]]] = 0.0
            return logp

        result = greedy_decode(engine_for(spec), policy, CFG)
        assert result.actions == tuple(script)

    def test_masks_are_respected(self):
        spec = ToyEnvSpec(n_actions=4, horizon=6, seed=1)
        processors = [MaskActionsProcessor([2])]
        result = greedy_decode(engine_for(spec), random_toy_policy(spec, 0), CFG, processors)
        assert 2 not in result.actions

    def test_greedy_costs_horizon_steps(self):
        spec = ToyEnvSpec(n_actions=4, horizon=6, seed=1)
        engine = engine_for(spec)
        greedy_decode(engine, random_toy_policy(spec, 0), CFG)
        assert engine.stats.env_steps_simulated == spec.horizon


def make_beam(actions=(), score=0.0, constraints=(), obs=(0, 0)):
    cstate = ConstraintListState(constraints) if constraints else None
    if cstate is not None:
        cstate.replay(actions)
    return BeamHypothesis(
        actions=tuple(actions), score=score, constraint_state=cstate, observation=obs
    )


class TestProposeCandidates:
    def test_without_constraints_equals_topk(self):
        beams = [make_beam(score=0.0)]
        cands = propose_candidates(beams, uniform_policy(4), (), n_beams=2, k_mult=2)
        assert len(cands) == 4  # top 2*n_b capped by |A|
        assert all(c.bank == 0 for c in cands)

    def test_constraint_advancing_action_is_included(self):
        # Policy puts nearly all mass on action 0; advancing action is 3.
        def policy(obs):
            logits = np.array([0.0, -1.0, -2.0, -30.0])
            peak = logits.max()
            return logits - (peak + np.log(np.exp(logits - peak).sum()))

        constraint = SequentialDisjunctiveConstraint([3], 1)
        beams = [make_beam(constraints=[constraint])]
        cands = propose_candidates(beams, policy, (), n_beams=1, k_mult=2)
        assert any(c.action == 3 for c in cands)

    def test_dead_end_beam_contributes_nothing(self):
        beams = [make_beam()]
        processors = [MaskActionsProcessor([0, 1, 2, 3])]
        cands = propose_candidates(beams, uniform_policy(4), processors, 2)
        assert cands == []

    def test_masked_advance_tokens_are_not_proposed(self):
        constraint = SequentialDisjunctiveConstraint([3], 1)
        beams = [make_beam(constraints=[constraint])]
        processors = [MaskActionsProcessor([3])]
        cands = propose_candidates(beams, uniform_policy(4), processors, 1, 2)
        assert all(c.action != 3 for c in cands)


def cand(bank, score, action=0, beam=0):
    return _Candidate(beam, action, (action,), score, bank, None)


class TestAllocateBanks:
    def test_fewer_than_slots_keeps_all(self):
        cands = [cand(0, -1.0, 1), cand(0, -2.0, 2)]
        selected, _ = allocate_banks(cands, 4)
        assert len(selected) == 2

    def test_single_bank_reduces_to_top_k(self):
        cands = [cand(0, -float(i), action=i) for i in range(10)]
        selected, occupancy = allocate_banks(cands, 3)
        assert [c.score for c in selected] == [0.0, -1.0, -2.0]
        assert occupancy == {0: 3}

    def test_even_split_two_banks(self):
        cands = [cand(0, -float(i), action=i) for i in range(10)]
        cands += [cand(1, -float(i), action=i) for i in range(10)]
        selected, occupancy = allocate_banks(cands, 4)
        assert occupancy == {0: 2, 1: 2}

    def test_round_robin_starts_at_most_advanced(self):
        cands = [cand(0, 0.0, 1), cand(2, -5.0, 2), cand(1, -1.0, 3)]
        selected, _ = allocate_banks(cands + [cand(0, -9.0, 4)], 3)
        assert [c.bank for c in selected] == [2, 1, 0]

    def test_sparse_bank_slots_flow_by_score(self):
        cands = [cand(1, -10.0, 1)] + [cand(0, -float(i), action=i + 2) for i in range(5)]
        selected, occupancy = allocate_banks(cands, 4)
        assert occupancy == {1: 1, 0: 3}


class TestStepBeams:
    def test_terminated_with_unmet_constraints_is_discarded(self):
        from drybeam.search import step_beams

        spec = ToyEnvSpec(n_actions=3, horizon=1, seed=0)
        engine = engine_for(spec)
        constraint = SequentialDisjunctiveConstraint([2], 1)
        state = ConstraintListState([constraint])
        met = state.copy()
        met.update(2)
        unmet = state.copy()
        unmet.update(0)
        candidates = [
            _Candidate(0, 2, (2,), 0.0, met.bank(), met),
            _Candidate(0, 0, (0,), 0.0, unmet.bank(), unmet),
        ]
        live, finished = step_beams(engine, CFG, candidates)
        assert live == []
        assert [beam.actions for beam in finished] == [(2,)]


class TestFinalizeAndRefine:
    def test_pool_of_one(self):
        hyp = make_beam((1,))
        assert finalize([hyp]) is hyp

    def test_reward_overrides_score(self):
        low_score_high_reward = BeamHypothesis(actions=(1,), score=-10.0, cumulative_reward=12.0)
        high_score_low_reward = BeamHypothesis(actions=(2,), score=0.0, cumulative_reward=10.0)
        assert finalize([high_score_low_reward, low_score_high_reward]).cumulative_reward == 12.0

    def test_refinement_never_worsens(self):
        spec = ToyEnvSpec(n_actions=4, horizon=4, seed=6)
        engine = engine_for(spec)
        seq, reward = brute_force_optimum(spec)
        result = engine.rollout(CFG, seq)
        incumbent = BeamHypothesis(
            actions=seq, done=True, cumulative_reward=result.cumulative_reward
        )
        best, evals = refine_last_action([incumbent], engine, CFG, top_k=1)
        assert best.cumulative_reward == pytest.approx(reward, abs=1e-12)
        assert evals <= 3  # |A| - 1 swaps

    def test_refinement_closes_planted_suboptimality(self):
        spec = ToyEnvSpec(n_actions=4, horizon=4, seed=8)
        engine = engine_for(spec)
        best_seq, best_reward = brute_force_optimum(spec)
        # Plant a hypothesis that is optimal except for its final action.
        wrong_last = (best_seq[-1] + 1) % spec.n_actions
        planted_seq = best_seq[:-1] + (wrong_last,)
        planted = engine.rollout(CFG, planted_seq)
        hyp = BeamHypothesis(
            actions=planted_seq, done=True, cumulative_reward=planted.cumulative_reward
        )
        best, _ = refine_last_action([hyp], engine, CFG, top_k=1)
        assert best.cumulative_reward == pytest.approx(best_reward, abs=1e-12)

    def test_budget_cap(self):
        spec = ToyEnvSpec(n_actions=8, horizon=4, seed=0)
        engine = engine_for(spec)
        hyps = []
        for first in range(6):
            seq = (first, 0, 0, 0)
            res = engine.rollout(CFG, seq)
            hyps.append(
                BeamHypothesis(actions=seq, done=True, cumulative_reward=res.cumulative_reward)
            )
        _, evals = refine_last_action(hyps, engine, CFG, top_k=4)
        assert evals <= 176


class TestRlcbsSolve:
    def test_exhaustive_width_equals_brute_force(self):
        for seed in (1, 4):
            spec = ToyEnvSpec(n_actions=4, horizon=5, seed=seed)
            constraints = [SequentialDisjunctiveConstraint([2], 2)]
            processors = [MaskActionsProcessor([0])]
            _, want = brute_force_optimum(spec, constraints, processors)
            res = rlcbs_solve(
                engine_for(spec),
                random_toy_policy(spec, seed),
                CFG,
                constraints,
                processors,
                SearchConfig(n_beams=4**5, include_greedy_seed=False, refine=False),
            )
            assert res.reward == pytest.approx(want, abs=1e-12)

    def test_returned_sequence_satisfies_constraints(self):
        spec = ToyEnvSpec(n_actions=4, horizon=6, seed=3)
        constraints = [SequentialDisjunctiveConstraint([1], 2)]
        res = rlcbs_solve(
            engine_for(spec),
            random_toy_policy(spec, 0),
            CFG,
            constraints,
            (),
            SearchConfig(n_beams=4),
        )
        assert res.feasible
        assert sum(1 for a in res.actions if a == 1) >= 2

    def test_reduction_to_vanilla_beam_search(self):
        spec = ToyEnvSpec(n_actions=5, horizon=6, seed=9)
        policy = random_toy_policy(spec, 2)
        constrained = rlcbs_solve(
            engine_for(spec), policy, CFG, (), (),
            SearchConfig(n_beams=3, include_greedy_seed=False, refine=False),
        )
        vanilla = beam_search_decode(engine_for(spec), policy, CFG, 3)
        assert constrained.actions == vanilla.actions
        assert constrained.reward == pytest.approx(vanilla.reward, abs=1e-12)

    def test_beam_one_equals_greedy(self):
        spec = ToyEnvSpec(n_actions=4, horizon=6, seed=11)
        policy = random_toy_policy(spec, 5)
        greedy = greedy_decode(engine_for(spec), policy, CFG)
        res = rlcbs_solve(
            engine_for(spec), policy, CFG, (), (),
            SearchConfig(n_beams=1, include_greedy_seed=False, refine=False),
        )
        assert res.actions == greedy.actions

    def test_greedy_seed_guarantees_dominance(self):
        spec = ToyEnvSpec(n_actions=4, horizon=6, seed=13)
        policy = random_toy_policy(spec, 1)
        greedy = greedy_decode(engine_for(spec), policy, CFG)
        res = rlcbs_solve(
            engine_for(spec), policy, CFG, (), (),
            SearchConfig(n_beams=2, include_greedy_seed=True, refine=False),
        )
        assert res.reward >= greedy.reward

    def test_infeasible_is_explicit(self):
        spec = ToyEnvSpec(n_actions=3, horizon=4, seed=0)
        constraints = [SequentialDisjunctiveConstraint([2], 2)]
        processors = [MaskActionsProcessor([2])]  # advancing action never allowed
        res = rlcbs_solve(
            engine_for(spec), random_toy_policy(spec, 0), CFG, constraints, processors,
            SearchConfig(n_beams=4),
        )
        assert res.feasible is False
        assert res.actions == ()
        assert np.isneginf(res.reward)

    def test_bank_history_tracks_progress(self):
        spec = ToyEnvSpec(n_actions=4, horizon=6, seed=3)
        constraints = [SequentialDisjunctiveConstraint([1], 2)]
        res = rlcbs_solve(
            engine_for(spec), random_toy_policy(spec, 0), CFG, constraints, (),
            SearchConfig(n_beams=4, include_greedy_seed=False, refine=False),
        )
        assert len(res.bank_history) == spec.horizon
        assert max(max(occ) for occ in res.bank_history if occ) == 2

    def test_worker_count_does_not_change_results(self):
        spec = ToyEnvSpec(n_actions=6, horizon=8, seed=21)
        policy = random_toy_policy(spec, 3)
        constraints = [SequentialDisjunctiveConstraint([4], 2)]
        single = rlcbs_solve(
            engine_for(spec), policy, CFG, constraints, (),
            SearchConfig(n_beams=4, workers=1),
        )
        multi = rlcbs_solve(
            engine_for(spec), policy, CFG, constraints, (),
            SearchConfig(n_beams=4, workers=4),
        )
        assert single.actions == multi.actions
        assert single.reward == pytest.approx(multi.reward, abs=1e-12)

    def test_step_counter_matches_cached_formula(self):
        spec = ToyEnvSpec(n_actions=8, horizon=12, n_contexts=6, seed=1)
        engine = engine_for(spec)
        rlcbs_solve(
            engine, random_toy_policy(spec, 7), CFG, (), (),
            SearchConfig(n_beams=4, include_greedy_seed=False, refine=False),
        )
        _, cached = step_savings(12, 4)
        assert engine.stats.env_steps_simulated == cached


def test_debug_mode_verifies_constraint_state_by_replay():
    spec = ToyEnvSpec(n_actions=4, horizon=6, seed=3)
    constraints = [SequentialDisjunctiveConstraint([1], 2)]
    res = rlcbs_solve(
        engine_for(spec), random_toy_policy(spec, 0), CFG, constraints, (),
        SearchConfig(n_beams=4, debug_verify_constraints=True),
    )
    assert res.feasible
