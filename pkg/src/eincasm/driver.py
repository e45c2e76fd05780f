"""The evolution loop: evaluate, log, reproduce.

Fitness evaluation is embarrassingly parallel — each (genome,
environment, seed) run is pure — so members fan out over a process pool
and results are merged back in member order, which makes the generational
outcome identical however the work was scheduled. The EINCASM_THREADS
environment variable caps the pool size (0 or unset = one worker per CPU,
1 = fully serial in-process).
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import neat
from .config import RunConfig
from .cppn import Genome
from .environments import EnvSpec
from .lifecycle import LifecycleConfig, run_lifecycle
from .physics import PhysicsParams


def evaluation_workers() -> int:
    raw = os.environ.get("EINCASM_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 0:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _evaluate_one(task) -> float:
    genome, envs, params, cfg, run_seed = task
    fitness = [run_lifecycle(genome, env, params, cfg, run_seed).fitness for env in envs]
    return float(np.mean(fitness))


def evaluate_population(
    members: list[Genome],
    envs: list[EnvSpec],
    params: PhysicsParams,
    cfg: LifecycleConfig,
    run_seed: int,
    workers: int | None = None,
) -> list[float]:
    """Fitness per member, joined in member order. Every member of one
    generation shares run_seed, so all face identical environments."""
    tasks = [(g, envs, params, cfg, run_seed) for g in members]
    workers = evaluation_workers() if workers is None else workers
    if workers <= 1 or len(members) <= 1:
        return [_evaluate_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(members))) as pool:
        return list(pool.map(_evaluate_one, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    n_species: int
    best_genome_nodes: int
    best_genome_connections: int
    best_index: int

    def to_row(self) -> dict:
        return {
            "generation": self.generation,
            "best_fitness": repr(self.best_fitness),
            "mean_fitness": repr(self.mean_fitness),
            "n_species": self.n_species,
            "best_genome_nodes": self.best_genome_nodes,
            "best_genome_connections": self.best_genome_connections,
        }


@dataclass
class EvolveResult:
    stats: list[GenerationStats] = field(default_factory=list)
    best_genome: Genome | None = None
    best_fitness: float = -np.inf
    final_population: neat.Population | None = None


def evolve_run(cfg: RunConfig, on_generation=None, workers: int | None = None) -> EvolveResult:
    """Run cfg.generations evaluation waves, reproducing between them.

    ``on_generation(stats, population)`` fires after each wave — the CLI
    hooks logging and checkpointing there. The best genome ever seen (ties
    broken toward the earlier generation and lower member index) is
    carried in the result.
    """
    pop = neat.init_population(cfg.evolution, cfg.k_hidden)
    result = EvolveResult()
    for gen in range(cfg.generations):
        run_seed = neat.evaluation_seed(cfg.evolution.seed, gen)
        fitnesses = evaluate_population(
            pop.members, cfg.environments, cfg.physics, cfg.lifecycle, run_seed, workers=workers
        )
        best_index = int(np.argmax(fitnesses))
        best = pop.members[best_index]
        stats = GenerationStats(
            generation=gen,
            best_fitness=float(fitnesses[best_index]),
            mean_fitness=float(np.mean(fitnesses)),
            n_species=len(pop.species),
            best_genome_nodes=len(best.nodes),
            best_genome_connections=len(best.connections),
            best_index=best_index,
        )
        result.stats.append(stats)
        if stats.best_fitness > result.best_fitness:
            result.best_fitness = stats.best_fitness
            result.best_genome = best.copy()
        if on_generation is not None:
            on_generation(stats, pop)
        if gen + 1 < cfg.generations:
            pop = neat.next_generation(pop, fitnesses, cfg.evolution)
    result.final_population = pop
    return result
