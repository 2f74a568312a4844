#!/usr/bin/env python3
"""Greedy decoding vs. constrained beam search on the drying task.

Registers the standard constraint bundle (at most 6 SJR, at least 3 DEP,
DEP/SP air-temperature continuity) and compares what greedy decoding and
the bank-allocating beam search make of it. Greedy can honor the masks but
has no way to guarantee the minimum-DEP requirement; the search keeps
hypotheses at every stage of constraint progress alive.
"""

from drybeam import EpisodeConfig, HeuristicPolicy, SearchConfig
from drybeam.cache import RolloutEngine
from drybeam.constraints import dryer_constraint_set
from drybeam.envs.dryer import DryerParams, PaperDryerEnv
from drybeam.kvstore import InMemoryStore
from drybeam.search import greedy_decode, rlcbs_solve
from drybeam.actions import format_sequence

params = DryerParams.default()
policy = HeuristicPolicy()
constraints, processors = dryer_constraint_set(max_sjr=6, min_dep=3)
config = EpisodeConfig(speed_factor=0.7)

engine = RolloutEngine(lambda: PaperDryerEnv(params), InMemoryStore())

greedy = greedy_decode(engine, policy, config, processors)
print("greedy decoding (masks only):")
print(" ", format_sequence(greedy.actions) or "(empty)")
print(f"  feasible={greedy.feasible} reward={greedy.reward:+.2f}")
dep_count = sum(1 for a in greedy.actions if 22 <= a <= 32)
print(f"  DEP modules used: {dep_count} (nothing forces them)\n")

for n_beams in (2, 8):
    result = rlcbs_solve(
        engine, policy, config, constraints, processors, SearchConfig(n_beams=n_beams)
    )
    print(f"constrained beam search, n_b={n_beams}:")
    print(" ", format_sequence(result.actions) or "(infeasible)")
    print(
        f"  reward={result.reward:+.2f}  modules={result.n_modules}  "
        f"energy={result.energy and round(result.energy, 1)} kJ/m2"
    )
    print(f"  env steps this run: {result.env_steps_simulated}, "
          f"cache hit rate {result.cache_hit_rate:.0%}, "
          f"refinement rollouts {result.refine_evaluations}")
    print("  bank occupancy by depth (bank = completed constraint steps):")
    for depth, occupancy in enumerate(result.bank_history, 1):
        cells = " ".join(f"bank{b}:{c}" for b, c in sorted(occupancy.items()))
        print(f"    depth {depth:>2}: {cells}")
    print()
