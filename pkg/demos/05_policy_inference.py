#!/usr/bin/env python3
"""Policy plumbing: the two-head network, the weights file, and the guides.

The action distribution is the outer product of a 4-way module-type head
and an 11-way air-temperature head (softmaxed separately), flattened to the
44 combined actions. Weights load from a validated JSON document together
with frozen observation-normalizer statistics.
"""

import numpy as np

from drybeam import (
    MlpWeights,
    NormalizerStats,
    Observation,
    action_label,
    combine_heads,
    load_weights,
    save_weights,
)
from drybeam.policy import HeuristicPolicy, mlp_forward, normalize

obs = Observation(
    speed_factor=0.5,
    temp_top_c=42.0,
    temp_bottom_c=38.0,
    dbmc_top=0.85,
    dbmc_bottom=1.05,
    position=4,
)
print("observation vector:", np.round(obs.to_vector(), 4))

# Inference with random weights (a fresh checkpoint would load the same way).
weights = MlpWeights.random(seed=7)
stats = NormalizerStats(np.array([0.5, 40.0, 40.0, 0.8, 0.8, 0.5]), np.ones(6))
save_weights("policy_weights.json", weights, stats)
policy = load_weights("policy_weights.json")
print("wrote and re-loaded policy_weights.json (shapes validated)\n")

x = normalize(obs, stats)
module_logits, temp_logits = mlp_forward(weights, x)
print("module-type logits:", np.round(module_logits, 3))
print("temperature logits:", np.round(temp_logits, 3))

logp = combine_heads(module_logits, temp_logits)
print(f"combined distribution: 44 entries, sum = {np.exp(logp).sum():.12f}")
top = np.argsort(logp)[::-1][:5]
print("top actions:", ", ".join(f"{action_label(a)} ({np.exp(logp[a]):.3f})" for a in top))

# The weight-free heuristic guide keys its temperature choice to the
# remaining drying load.
heuristic = HeuristicPolicy()
print("\nheuristic preferred temperature index vs. moisture:")
for dbmc in (1.5, 1.0, 0.6, 0.3, 0.2):
    probe = Observation(0.5, 40.0, 40.0, dbmc, dbmc, 4)
    print(f"  DBMC {dbmc:>4}: index {heuristic.preferred_temp_index(probe)}")
