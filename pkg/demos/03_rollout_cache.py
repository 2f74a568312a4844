#!/usr/bin/env python3
"""What the longest-prefix rollout cache buys during beam search.

A beam search with horizon T and n_b beams would re-simulate
T(T-1)/2 * n_b steps from scratch; with every visited prefix cached, only
T * n_b fresh steps remain. The counters below measure both, then the same
cache is served over the wire protocol so multiple processes could share it.
"""

from drybeam import EpisodeConfig, SearchConfig, step_savings
from drybeam.cache import RolloutEngine
from drybeam.envs.toy import ToyEnv, ToyEnvSpec, random_toy_policy
from drybeam.kvstore import InMemoryStore, KVServer, NetworkedStore
from drybeam.search import rlcbs_solve

spec = ToyEnvSpec(n_actions=8, horizon=12, n_contexts=6, seed=1)
policy = random_toy_policy(spec, 7)
config = EpisodeConfig()
search = SearchConfig(n_beams=4, include_greedy_seed=False, refine=False)

uncached_theory, cached_theory = step_savings(spec.horizon, search.n_beams)
print(f"horizon T={spec.horizon}, beams n_b={search.n_beams}")
print(f"theory: {uncached_theory} replayed steps uncached vs {cached_theory} fresh steps cached\n")

engine = RolloutEngine(lambda: ToyEnv(spec), InMemoryStore())
result = rlcbs_solve(engine, policy, config, search=search)
print(f"cached run:   simulated={engine.stats.env_steps_simulated:>4} "
      f"replayed={engine.stats.env_steps_replayed:>4} "
      f"saved={engine.stats.env_steps_saved:>4}")

engine_off = RolloutEngine(lambda: ToyEnv(spec), None)
result_off = rlcbs_solve(engine_off, policy, config, search=search)
print(f"uncached run: simulated={engine_off.stats.env_steps_simulated:>4} "
      f"replayed={engine_off.stats.env_steps_replayed:>4}")
print(f"identical answers: {result.actions == result_off.actions}\n")

# The same cache behind the minimal GET/SET text protocol.
server = KVServer().start()
host, port = server.address
client = NetworkedStore(host, port)
engine_net = RolloutEngine(lambda: ToyEnv(spec), client)
result_net = rlcbs_solve(engine_net, policy, config, search=search)
print(f"networked cache at {host}:{port}: "
      f"simulated={engine_net.stats.env_steps_simulated}, "
      f"same answer: {result_net.actions == result.actions}")
client.close()
server.stop()
