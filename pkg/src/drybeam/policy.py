"""Policies mapping observations to log-probability vectors over the 44 actions.

The trained agent's network is a 6 -> 64 -> 64 -> 15 MLP with tanh hidden
layers whose 15 outputs split into 11 temperature logits and 4 module-type
logits; the combined 44-way distribution is the outer product of the two
softmaxed heads. Training is out of scope here: weights and frozen
normalizer statistics are loaded from a JSON file, and two weight-free guide
policies (a drying-load heuristic and an exact dynamic-programming oracle for
toy environments) are provided for search without a trained checkpoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .actions import ACTION_SPACE_VERSION, N_ACTIONS, N_MODULE_TYPES, N_TEMP_LEVELS

OBS_DIM = 6
HIDDEN_DIM = 64
HEAD_DIM = N_TEMP_LEVELS + N_MODULE_TYPES  # 11 + 4
NORMALIZER_EPS = 1e-8


class PolicyConfigError(ValueError):
    """Weight shapes or file contents do not match the expected network."""


@dataclass(frozen=True)
class Observation:
    """The 6-component state the policy sees.

    Temperatures in Celsius at the sheet's top/bottom surfaces, dry-basis
    moisture content at the same surfaces, the machine speed factor, and the
    current module position (0..12). The vector form scales position by 1/12.
    """

    speed_factor: float
    temp_top_c: float
    temp_bottom_c: float
    dbmc_top: float
    dbmc_bottom: float
    position: int

    def to_vector(self) -> np.ndarray:
        return np.array(
            [
                self.speed_factor,
                self.temp_top_c,
                self.temp_bottom_c,
                self.dbmc_top,
                self.dbmc_bottom,
                self.position / 12.0,
            ],
            dtype=float,
        )

    @property
    def dbmc_mean(self) -> float:
        return 0.5 * (self.dbmc_top + self.dbmc_bottom)


@dataclass(frozen=True)
class NormalizerStats:
    """Frozen running mean/variance used to whiten observations at inference."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "var", np.asarray(self.var, dtype=float))
        if self.mean.shape != (OBS_DIM,) or self.var.shape != (OBS_DIM,):
            raise PolicyConfigError("normalizer stats must have 6 components")
        if np.any(self.var <= 0):
            raise PolicyConfigError("normalizer variances must be positive")

    @classmethod
    def identity(cls) -> "NormalizerStats":
        return cls(np.zeros(OBS_DIM), np.ones(OBS_DIM))


def normalize(obs: Observation, stats: NormalizerStats) -> np.ndarray:
    """Whiten an observation: (x - mean) / sqrt(var + 1e-8)."""
    return (obs.to_vector() - stats.mean) / np.sqrt(stats.var + NORMALIZER_EPS)


class MlpWeights:
    """Weight matrices and biases for the 6->64->64->15 policy net.

    Layer convention: ``y = x @ W + b`` with ``W`` of shape (fan_in, fan_out).
    """

    SHAPES = ((OBS_DIM, HIDDEN_DIM), (HIDDEN_DIM, HIDDEN_DIM), (HIDDEN_DIM, HEAD_DIM))

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != 3 or len(biases) != 3:
            raise PolicyConfigError("expected exactly 3 layers")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        for (w, b), shape in zip(zip(self.weights, self.biases), self.SHAPES):
            if w.shape != shape:
                raise PolicyConfigError(f"weight shape {w.shape} != expected {shape}")
            if b.shape != (shape[1],):
                raise PolicyConfigError(f"bias shape {b.shape} != expected ({shape[1]},)")

    @classmethod
    def zeros(cls) -> "MlpWeights":
        return cls([np.zeros(s) for s in cls.SHAPES], [np.zeros(s[1]) for s in cls.SHAPES])

    @classmethod
    def random(cls, seed: int, scale: float = 0.5) -> "MlpWeights":
        rng = np.random.default_rng(seed)
        weights = [rng.normal(0.0, scale / np.sqrt(s[0]), size=s) for s in cls.SHAPES]
        biases = [rng.normal(0.0, 0.1, size=s[1]) for s in cls.SHAPES]
        return cls(weights, biases)


def mlp_forward(weights: MlpWeights, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic forward pass; returns (module_logits[4], temp_logits[11]).

    The 15-unit output layer is split as 11 temperature logits followed by
    4 module-type logits, matching the multi-discrete head layout.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (OBS_DIM,):
        raise PolicyConfigError(f"input shape {x.shape} != ({OBS_DIM},)")
    h = np.tanh(x @ weights.weights[0] + weights.biases[0])
    h = np.tanh(h @ weights.weights[1] + weights.biases[1])
    out = h @ weights.weights[2] + weights.biases[2]
    temp_logits = out[:N_TEMP_LEVELS]
    module_logits = out[N_TEMP_LEVELS:]
    return module_logits, temp_logits


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=float)
    peak = logits.max()
    return logits - (peak + np.log(np.exp(logits - peak).sum()))


def combine_heads(module_logits: np.ndarray, temp_logits: np.ndarray) -> np.ndarray:
    """Outer-product combination of the two softmaxed heads, in log space.

    prob(a) = p_module(a // 11) * p_temp(a % 11); the result is a proper
    44-way log-distribution.
    """
    log_pm = log_softmax(module_logits)
    log_pt = log_softmax(temp_logits)
    return (log_pm[:, None] + log_pt[None, :]).reshape(N_ACTIONS)


class MlpPolicy:
    """Inference-only policy: normalize, forward, combine heads."""

    def __init__(self, weights: MlpWeights, stats: NormalizerStats | None = None):
        self.weights = weights
        self.stats = stats or NormalizerStats.identity()

    def __call__(self, obs: Observation) -> np.ndarray:
        x = normalize(obs, self.stats)
        module_logits, temp_logits = mlp_forward(self.weights, x)
        return combine_heads(module_logits, temp_logits)


class HeuristicPolicy:
    """Weight-free guide policy favoring high-capacity modules and a
    temperature proportional to the remaining drying load.

    preferred temp index = clamp(round(10 * load * (0.5 + SF)), 0, 10) with
    load = (DBMC_mean - target) / (initial - target); temperature logits are
    Gaussian-shaped (sigma = 1.5 index units) around the preferred index and
    module logits are fixed at [PP: 1.0, SJR: 2.0, DEP: 0.0, SP: -1.0].
    """

    MODULE_LOGITS = np.array([1.0, 2.0, 0.0, -1.0])
    SIGMA = 1.5

    def __init__(self, initial_dbmc: float = 1.5, target_dbmc: float = 0.2):
        self.initial_dbmc = initial_dbmc
        self.target_dbmc = target_dbmc

    def preferred_temp_index(self, obs: Observation) -> int:
        load = (obs.dbmc_mean - self.target_dbmc) / (self.initial_dbmc - self.target_dbmc)
        raw = round(10.0 * load * (0.5 + obs.speed_factor))
        return int(min(max(raw, 0), 10))

    def __call__(self, obs: Observation) -> np.ndarray:
        preferred = self.preferred_temp_index(obs)
        idx = np.arange(N_TEMP_LEVELS, dtype=float)
        temp_logits = -((idx - preferred) ** 2) / (2.0 * self.SIGMA**2)
        return combine_heads(self.MODULE_LOGITS, temp_logits)


class DpOraclePolicy:
    """Exact policy for enumerable toy environments, via backward induction.

    For every reachable (step, context) state the policy puts mass 1 on an
    action of maximal optimal value; ties break to the lowest action id.
    """

    MAX_STATES = 10**6

    def __init__(self, values: np.ndarray, best_actions: np.ndarray, n_actions: int):
        self.values = values
        self.best_actions = best_actions
        self.n_actions = n_actions

    def __call__(self, obs: tuple[int, int]) -> np.ndarray:
        step, context = obs
        logp = np.full(self.n_actions, -np.inf)
        logp[self.best_actions[step, context]] = 0.0
        return logp

    def optimal_value(self, obs: tuple[int, int]) -> float:
        step, context = obs
        return float(self.values[step, context])


def dp_oracle_policy(env_spec) -> DpOraclePolicy:
    """Backward induction over a toy environment's (step, context) states.

    Refuses environments whose state space exceeds 10^6 entries.
    """
    horizon = env_spec.horizon
    n_ctx = env_spec.n_contexts
    n_actions = env_spec.n_actions
    if (horizon + 1) * n_ctx > DpOraclePolicy.MAX_STATES:
        raise ValueError("toy state space too large for exact backward induction")

    values = np.zeros((horizon + 1, n_ctx))
    best = np.zeros((horizon, n_ctx), dtype=int)
    for step in range(horizon - 1, -1, -1):
        for ctx in range(n_ctx):
            q = np.array(
                [
                    env_spec.rewards[step, ctx, a] + values[step + 1, env_spec.transitions[step, ctx, a]]
                    for a in range(n_actions)
                ]
            )
            best[step, ctx] = int(np.argmax(q))  # argmax returns the lowest index on ties
            values[step, ctx] = q[best[step, ctx]]
    return DpOraclePolicy(values, best, n_actions)


def save_weights(path, weights: MlpWeights, stats: NormalizerStats | None = None) -> None:
    """Write the weights-file JSON document."""
    stats = stats or NormalizerStats.identity()
    doc = {
        "layers": [
            {
                "rows": w.shape[0],
                "cols": w.shape[1],
                "weights_row_major": w.reshape(-1).tolist(),
                "bias": b.tolist(),
            }
            for w, b in zip(weights.weights, weights.biases)
        ],
        "normalizer": {"mean": stats.mean.tolist(), "var": stats.var.tolist()},
        "action_space_version": ACTION_SPACE_VERSION,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_weights(path) -> MlpPolicy:
    """Load and validate a weights file; returns a ready-to-call policy."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("action_space_version") != ACTION_SPACE_VERSION:
        raise PolicyConfigError(
            f"weights file targets action space {doc.get('action_space_version')!r}, "
            f"expected {ACTION_SPACE_VERSION!r}"
        )
    layers = doc.get("layers", [])
    if len(layers) != 3:
        raise PolicyConfigError(f"expected 3 layers, found {len(layers)}")
    weights, biases = [], []
    for layer, shape in zip(layers, MlpWeights.SHAPES):
        if (layer["rows"], layer["cols"]) != shape:
            raise PolicyConfigError(
                f"layer shape ({layer['rows']}, {layer['cols']}) != expected {shape}"
            )
        flat = np.asarray(layer["weights_row_major"], dtype=float)
        if flat.size != shape[0] * shape[1]:
            raise PolicyConfigError("weights_row_major length does not match rows*cols")
        weights.append(flat.reshape(shape))
        biases.append(np.asarray(layer["bias"], dtype=float))
    stats = NormalizerStats(doc["normalizer"]["mean"], doc["normalizer"]["var"])
    return MlpPolicy(MlpWeights(weights, biases), stats)
