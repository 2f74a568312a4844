"""Policy-guided constrained beam search over deterministic simulation
environments, with a reference 1-D paper-drying model, exact prefix caching
of rollouts, and greedy / genetic-algorithm baselines."""

from .actions import (
    ActionSpace,
    BeamHypothesis,
    EpisodeConfig,
    InvalidActionError,
    accumulate_score,
    action_label,
    decode_action,
    encode_action,
    parse_action_label,
)
from .cache import CacheStats, RolloutEngine, key_encode, step_savings
from .constraints import (
    Constraint,
    ConstraintListState,
    DeadEndError,
    LogitsProcessor,
    MaxCountProcessor,
    PhrasalConstraint,
    SequentialDisjunctiveConstraint,
    TemperatureContinuityProcessor,
    check_sequence_satisfies,
    dryer_constraint_set,
    renormalize,
)
from .envs import PaperDryerEnv, ToyEnv, ToyEnvSpec, brute_force_optimum, sf_to_vm
from .kvstore import InMemoryStore, KVServer, NetworkedStore
from .policy import (
    HeuristicPolicy,
    MlpPolicy,
    MlpWeights,
    NormalizerStats,
    Observation,
    combine_heads,
    dp_oracle_policy,
    load_weights,
    mlp_forward,
    normalize,
    save_weights,
)
from .search import (
    SearchConfig,
    SolveResult,
    beam_search_decode,
    greedy_decode,
    refine_last_action,
    rlcbs_solve,
)

__version__ = "0.1.0"
