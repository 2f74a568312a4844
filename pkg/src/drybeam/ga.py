"""Constrained genetic-algorithm baseline for the drying sequence problem.

The problem is single-objective (minimize energy) under the three module
constraints plus final-moisture feasibility, so selection uses Deb's
feasibility rules instead of full non-dominated sorting: a feasible
individual beats any infeasible one, infeasible individuals compare by total
violation, and feasible ones by energy. Genomes are integer pairs
(module type, temperature index) per module position; their length is fixed
per run, conventionally to the module count of the incumbent beam-search
solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .actions import (
    DEP,
    EpisodeConfig,
    N_MODULE_TYPES,
    N_TEMP_LEVELS,
    SJR,
    SP,
    encode_action,
)
from .cache import RolloutEngine

Genome = np.ndarray  # shape (n_genes, 2): [:, 0] module type, [:, 1] temp index
EvalFn = Callable[[Genome], tuple[float, np.ndarray]]


@dataclass
class Individual:
    genome: Genome
    fitness: float  # energy q, lower is better
    violations: np.ndarray  # >= 0 per constraint; all-zero means feasible

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.violations <= 0.0))

    @property
    def total_violation(self) -> float:
        return float(np.sum(self.violations))


@dataclass
class GaResult:
    best: Individual | None
    feasible: bool
    generations: int
    population: int
    seed: int
    evaluations: int
    best_fitness_history: list[float | None] = field(default_factory=list)

    def actions(self) -> tuple[int, ...]:
        if self.best is None:
            return ()
        return genome_to_actions(self.best.genome)


def genome_to_actions(genome: Genome) -> tuple[int, ...]:
    return tuple(encode_action(int(mt), int(ti)) for mt, ti in genome)


def sequence_violations(genome: Genome, final_dbmc: float, target_dbmc: float = 0.2,
                        max_sjr: int = 6, min_dep: int = 3) -> np.ndarray:
    """Constraint-violation vector: SJR excess, DEP shortfall, temperature
    discontinuity magnitudes at DEP/SP positions (position 1 exempt), and
    final-moisture excess."""
    module_types = genome[:, 0]
    temps = genome[:, 1]
    v1 = max(0, int(np.sum(module_types == SJR)) - max_sjr)
    v2 = max(0, min_dep - int(np.sum(module_types == DEP)))
    v3 = 0.0
    for d in range(1, len(genome)):
        if module_types[d] in (DEP, SP):
            v3 += abs(int(temps[d]) - int(temps[d - 1]))
    v4 = max(0.0, final_dbmc - target_dbmc)
    return np.array([v1, v2, v3, v4], dtype=float)


def dryer_evaluator(
    engine: RolloutEngine, config: EpisodeConfig, max_sjr: int = 6, min_dep: int = 3
) -> EvalFn:
    """Evaluate genomes on the drying environment through the rollout cache.

    An episode that terminates before using all genes is scored on the
    consumed prefix; a physics failure scores infinite violation.
    """

    def evaluate(genome: Genome) -> tuple[float, np.ndarray]:
        actions = genome_to_actions(genome)
        result = engine.rollout(config, actions)
        if result.metrics.get("physics_failed"):
            return np.inf, np.full(4, np.inf)
        consumed = genome[: result.steps_consumed]
        violations = sequence_violations(
            consumed, result.metrics["mean_dbmc"], config.target_dbmc, max_sjr, min_dep
        )
        return float(result.metrics["energy_kj_per_m2"]), violations

    return evaluate


def tournament_better(a: Individual, b: Individual) -> Individual:
    """Deb's rules: feasibility first, then violation, then fitness."""
    if a.feasible and not b.feasible:
        return a
    if b.feasible and not a.feasible:
        return b
    if not a.feasible:  # both infeasible
        return a if a.total_violation <= b.total_violation else b
    return a if a.fitness <= b.fitness else b


def random_genome(rng: np.random.Generator, n_genes: int) -> Genome:
    return np.column_stack(
        [
            rng.integers(0, N_MODULE_TYPES, n_genes),
            rng.integers(0, N_TEMP_LEVELS, n_genes),
        ]
    ).astype(np.int64)


def evolve(
    eval_fn: EvalFn,
    n_genes: int,
    seed: int,
    population: int = 32,
    generations: int = 100,
    crossover_p: float = 0.9,
    mutation_p: float | None = None,
) -> GaResult:
    """Generational GA with binary tournament (feasibility rules), uniform
    crossover, per-gene random-reset mutation and single-individual elitism.

    Returns the best feasible individual found, or an explicit infeasibility
    result when no generation produced one. Evaluation count is population x
    (generations + 1).
    """
    rng = np.random.default_rng(seed)
    if mutation_p is None:
        mutation_p = 1.0 / (2.0 * n_genes)

    def make(genome: Genome) -> Individual:
        fitness, violations = eval_fn(genome)
        return Individual(genome, fitness, violations)

    pop = [make(random_genome(rng, n_genes)) for _ in range(population)]
    evaluations = population
    best = pop[0]
    for ind in pop[1:]:
        best = tournament_better(best, ind)

    history: list[float | None] = [best.fitness if best.feasible else None]

    for _ in range(generations):
        offspring: list[Individual] = []
        while len(offspring) < population:
            i, j = rng.integers(0, population, 2)
            parent_a = tournament_better(pop[i], pop[j])
            i, j = rng.integers(0, population, 2)
            parent_b = tournament_better(pop[i], pop[j])
            child_a = parent_a.genome.copy()
            child_b = parent_b.genome.copy()
            if rng.random() < crossover_p:
                swap = rng.random(n_genes) < 0.5
                child_a[swap], child_b[swap] = parent_b.genome[swap], parent_a.genome[swap]
            for child in (child_a, child_b):
                mutate = rng.random(n_genes) < mutation_p
                if mutate.any():
                    idx = np.flatnonzero(mutate)
                    child[idx, 0] = rng.integers(0, N_MODULE_TYPES, idx.size)
                    child[idx, 1] = rng.integers(0, N_TEMP_LEVELS, idx.size)
                offspring.append(make(child))
        offspring = offspring[:population]
        evaluations += population

        # Elitism: the incumbent replaces the weakest offspring.
        worst_idx = 0
        for k in range(1, population):
            if tournament_better(offspring[worst_idx], offspring[k]) is offspring[worst_idx]:
                worst_idx = k
        offspring[worst_idx] = best

        pop = offspring
        for ind in pop:
            best = tournament_better(best, ind)
        history.append(best.fitness if best.feasible else None)

    return GaResult(
        best=best if best.feasible else None,
        feasible=best.feasible,
        generations=generations,
        population=population,
        seed=seed,
        evaluations=evaluations,
        best_fitness_history=history,
    )
