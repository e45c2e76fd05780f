"""Command-line surface: evolve | test | render | replay.

Batch commands over files — no live steering. Every command is
deterministic given (config, seed): rerunning produces byte-identical
logs, checkpoints, and frames. Exit codes: 0 success, 1 runtime failure
(including a failed replay hash check), 2 invalid configuration or input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import fileio, harness
from .config import ConfigError, RunConfig, load_config
from .cppn import GenomeError, genome_from_json, genome_to_dict
from .driver import evolve_run
from .environments import EnvSpec
from .fileio import SCHEMA_VERSION
from .harness import TestScore
from .lifecycle import LifecycleConfig, build_simulation
from .neat import InnovationRegistry, Population
from .physics import PhysicsParams
from .substrate import total_mass, total_nutrient

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

BUILTIN_ARENAS = {
    "corridor": harness.corridor_spec,
    "detour": harness.detour_spec,
    "coordination": harness.coordination_spec,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GenomeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eincasm", description=__doc__)
    sub = parser.add_subparsers(required=True)

    p_evolve = sub.add_parser("evolve", help="run the evolution loop from a config file")
    p_evolve.add_argument("--config", required=True)
    p_evolve.add_argument("--seed", type=int, default=None)
    p_evolve.add_argument("--generations", type=int, default=None)
    p_evolve.add_argument("--pop", type=int, default=None)
    p_evolve.add_argument("--out", default=None)
    p_evolve.set_defaults(func=cmd_evolve)

    p_test = sub.add_parser("test", help="score a genome on the intelligence-test battery")
    p_test.add_argument("genome")
    p_test.add_argument("--battery", default="standard")
    p_test.add_argument("--seed", type=int, default=0)
    p_test.add_argument("--out", default=None)
    p_test.set_defaults(func=cmd_test)

    p_render = sub.add_parser("render", help="run one lifecycle, writing PPM frames and a trajectory log")
    p_render.add_argument("genome")
    p_render.add_argument("--env", default="corridor", help="builtin arena name or an EnvSpec JSON path")
    p_render.add_argument("--seed", type=int, default=0)
    p_render.add_argument("--steps", type=int, default=None)
    p_render.add_argument("--out", default="render_out")
    p_render.add_argument("--frame-every", type=int, default=10)
    p_render.add_argument("--display-max", type=float, default=1.0)
    p_render.set_defaults(func=cmd_render)

    p_replay = sub.add_parser("replay", help="verify a trajectory log's embedded hash")
    p_replay.add_argument("log")
    p_replay.set_defaults(func=cmd_replay)
    return parser


# -- evolve -------------------------------------------------------------------


def cmd_evolve(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, evolution=replace(cfg.evolution, seed=args.seed))
    if args.pop is not None:
        cfg = replace(cfg, evolution=replace(cfg.evolution, population_size=args.pop))
    if args.generations is not None:
        cfg = replace(cfg, generations=args.generations)
    if args.out is not None:
        cfg = replace(cfg, io=replace(cfg.io, output_dir=args.out))

    out = cfg.io.output_dir
    os.makedirs(out, exist_ok=True)
    fileio.write_json(os.path.join(out, "resolved_config.json"), cfg.to_dict())

    rows: list[dict] = []

    def on_generation(stats, pop: Population):
        rows.append(stats.to_row())
        if cfg.io.log_level != "quiet":
            print(
                f"gen {stats.generation:4d}  best {stats.best_fitness:10.4f}  "
                f"mean {stats.mean_fitness:10.4f}  species {stats.n_species}"
            )
        if (stats.generation + 1) % cfg.checkpoint_every == 0:
            write_checkpoint(os.path.join(out, f"checkpoint_{stats.generation:04d}.json"), cfg, pop)

    try:
        result = evolve_run(cfg, on_generation=on_generation)
    except Exception as exc:  # runtime failure: log what we have, then report
        fileio.atomic_write_text(os.path.join(out, "log.csv"), fileio.log_rows_to_csv(rows))
        print(f"error: evolution failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    fileio.atomic_write_text(os.path.join(out, "log.csv"), fileio.log_rows_to_csv(rows))
    if result.best_genome is not None:
        fileio.write_json(os.path.join(out, "best_genome.json"), genome_to_dict(result.best_genome))
    write_checkpoint(os.path.join(out, "checkpoint_final.json"), cfg, result.final_population)
    print(f"done: best fitness {result.best_fitness:.6f} after {cfg.generations} generations -> {out}")
    return EXIT_OK


def write_checkpoint(path: str, cfg: RunConfig, pop: Population) -> None:
    fileio.write_json(
        path,
        {
            "schema_version": SCHEMA_VERSION,
            "config": cfg.to_dict(),
            "generation": pop.generation,
            "registry": pop.registry.counters(),
            "genomes": [genome_to_dict(g) for g in pop.members],
        },
    )


def load_checkpoint(path: str) -> tuple[RunConfig, Population]:
    """Rebuild the config and population from a checkpoint bundle."""
    from .config import parse_config
    from .cppn import genome_from_dict
    from .neat import SpeciesState

    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    cfg = parse_config(data["config"])
    members = [genome_from_dict(g) for g in data["genomes"]]
    n_in, n_out = members[0].n_inputs, members[0].n_outputs
    registry = InnovationRegistry.from_counters(data["registry"], n_in, n_out)
    pop = Population(members=members, species=[], generation=int(data["generation"]), registry=registry)
    from .neat import speciate

    return cfg, speciate(pop, cfg.evolution)


# -- test ---------------------------------------------------------------------


def load_genome_file(path: str):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return genome_from_json(handle.read())
    except OSError as exc:
        raise GenomeError(f"cannot read genome {path}: {exc}") from exc


def cmd_test(args) -> int:
    genome = load_genome_file(args.genome)
    seed = args.seed

    if args.battery == "standard":
        params = harness.harness_physics()
        cfg = harness.harness_lifecycle()
        k_expected = genome.k_hidden
        tests = [
            ("coordination", None),
            ("pathfinding", harness.corridor_spec()),
            ("pathfinding_detour", harness.detour_spec()),
        ]
    else:
        params, cfg, k_expected, tests = load_battery(args.battery)
    if genome.k_hidden != k_expected:
        print(
            f"error: genome has {genome.k_hidden} hidden channels, battery expects {k_expected}",
            file=sys.stderr,
        )
        return EXIT_USAGE

    scores: list[TestScore] = []
    for name, spec in tests:
        if name == "coordination":
            score = harness.coordination_test(genome, params, seed, cfg, spec=spec)
        else:
            score = harness.replace_name(
                harness.pathfinding_test(genome, params, spec, seed, cfg), name
            )
        scores.append(score)
    report = harness.iq_report(scores)

    payload = {
        "schema_version": SCHEMA_VERSION,
        "genome_id": os.path.basename(args.genome),
        "seed": seed,
        **report.to_dict(),
    }
    out_path = args.out or "test_report.json"
    fileio.write_json(out_path, payload)
    for score in report.tests:
        steps = score.steps_to_completion if score.completed else "-"
        print(f"{score.name:22s} completed={str(score.completed):5s} steps={steps} iq={score.iq_component:.3f}")
    print(f"IQ {report.iq:.4f} -> {out_path}")
    return EXIT_OK


def load_battery(path: str):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read battery {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        params = PhysicsParams(**data.get("physics", {})) if data.get("physics") else harness.harness_physics()
        cfg = (
            LifecycleConfig.from_dict(data["lifecycle"]) if data.get("lifecycle") else harness.harness_lifecycle()
        )
        k_expected = int(data.get("k_hidden", harness.DEFAULT_K_HIDDEN))
        tests = []
        for entry in data["tests"]:
            name = entry["name"]
            spec = EnvSpec.from_dict(entry["env"]) if entry.get("env") else None
            tests.append((name, spec))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed battery {path}: {exc}") from exc
    return params, cfg, k_expected, tests


# -- render -------------------------------------------------------------------


def resolve_arena(name_or_path: str) -> EnvSpec:
    if name_or_path in BUILTIN_ARENAS:
        return BUILTIN_ARENAS[name_or_path]()
    try:
        with open(name_or_path, "r", encoding="utf-8") as handle:
            return EnvSpec.from_dict(json.load(handle))
    except OSError as exc:
        raise ConfigError(f"unknown arena {name_or_path!r} and no such file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name_or_path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def cmd_render(args) -> int:
    genome = load_genome_file(args.genome)
    spec = resolve_arena(args.env)
    params = harness.harness_physics()
    cfg = harness.harness_lifecycle(t=args.steps or 400)
    bundle = harness.build_arena(spec)
    sim = build_simulation(genome, bundle, params, cfg, np.random.SeedSequence([args.seed, 1, 1]))

    out = args.out
    os.makedirs(out, exist_ok=True)
    frame_every = max(1, args.frame_every)
    steps = cfg.t_min
    written = 0

    def write_frame():
        nonlocal written
        fileio.atomic_write_bytes(
            os.path.join(out, fileio.frame_name(written)), fileio.render_frame(sim.world, args.display_max)
        )
        written += 1

    trajectory: list[dict] = []

    def record():
        entry = {
            "step": sim.step_index,
            "total_mass": repr(total_mass(sim.world)),
            "total_nutrient": repr(total_nutrient(sim.world)),
        }
        if sim.last_perturbations:
            entry["perturbation"] = [p.kind for p in sim.last_perturbations]
        trajectory.append(entry)

    write_frame()
    record()
    for step in range(1, steps + 1):
        try:
            sim.step()
        except Exception as exc:
            print(f"error: simulation failed at step {step}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        record()
        if step % frame_every == 0 or step == steps:
            write_frame()

    meta = {"genome": os.path.basename(args.genome), "env": args.env, "seed": args.seed, "steps": steps}
    fileio.write_json(os.path.join(out, "trajectory.json"), fileio.trajectory_payload(meta, trajectory))
    print(f"wrote {written} frames and trajectory.json -> {out}")
    return EXIT_OK


# -- replay -------------------------------------------------------------------


def cmd_replay(args) -> int:
    try:
        with open(args.log, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as exc:
        print(f"error: cannot read log: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"error: {args.log}:{exc.lineno}: {exc.msg}", file=sys.stderr)
        return EXIT_USAGE
    try:
        steps = payload["steps"]
        if not steps:
            print("error: trajectory log has no steps", file=sys.stderr)
            return EXIT_USAGE
        ok = fileio.verify_trajectory(payload)
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: malformed trajectory log: {exc}", file=sys.stderr)
        return EXIT_USAGE

    masses = [float(s["total_mass"]) for s in steps]
    print(
        f"steps={len(steps) - 1} initial_mass={masses[0]:.6f} final_mass={masses[-1]:.6f} "
        f"peak_mass={max(masses):.6f}"
    )
    if not ok:
        print("hash mismatch: trajectory was tampered with or is nondeterministic", file=sys.stderr)
        return EXIT_RUNTIME
    print("hash verified")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
