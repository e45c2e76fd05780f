"""One organism's life: perceive -> rule -> constrain -> fluid -> advect,
with scheduled perturbations, seeding, and fitness accounting.

The per-step pipeline (normative order):

1. the active set is every non-obstacle cell whose 3x3 neighborhood
   contains at least one cell with mass >= m_min;
2. each active cell is selected independently with probability p_update,
   one uniform draw per active cell in row-major order;
3. selected cells perceive the *pre-step* world, evaluate the compiled
   rule, and have their outputs squashed;
4. hidden outputs (clamped to [-1, 1]) are written and the physics
   constraint pipeline runs per selected cell; unselected cells are fully
   frozen this step apart from fluid transport;
5. the paid reservoir changes of selected cells become capped density
   sources for one fluid step;
6. nutrient is advected by the resulting velocity field;
7. any perturbation scheduled for this step index is applied (with the
   lattice and chemoattractant reconciled afterwards).

Determinism: (genome, environment spec, physics, lifecycle config,
run_seed) fully determine the trajectory. Random streams are derived from
named SeedSequence tuples — lifespan from (run_seed, 0); per-environment
evaluation e uses (run_seed, e, 1) for cell selection and (run_seed, e, 2)
for schedule randomization — so results are independent of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import environments, fluid, physics, substrate
from .cppn import Genome, Phenotype, compile_genome
from .environments import EnvBundle, EnvSpec, Rect, chemoattractant_field
from .physics import PhysicsParams
from .substrate import WorldState, create_world, dilate3x3, perceive_cells, total_mass, total_nutrient


class LifecycleError(ValueError):
    """Invalid seeding, schedule, or configuration."""


# -- perturbation events ------------------------------------------------------


@dataclass(frozen=True)
class RemoveFood:
    region: Rect
    kind: str = field(default="remove_food", init=False)


@dataclass(frozen=True)
class DegradeCells:
    region: Rect
    fraction: float
    kind: str = field(default="degrade_cells", init=False)


@dataclass(frozen=True)
class MoveObstacle:
    obstacle_id: int  # 1-based component index, row-major discovery order
    displacement: tuple[int, int]
    kind: str = field(default="move_obstacle", init=False)


PerturbationEvent = RemoveFood | DegradeCells | MoveObstacle


def event_to_dict(event: PerturbationEvent) -> dict:
    if isinstance(event, RemoveFood):
        return {"kind": event.kind, "region": event.region.to_list()}
    if isinstance(event, DegradeCells):
        return {"kind": event.kind, "region": event.region.to_list(), "fraction": event.fraction}
    return {"kind": event.kind, "obstacle_id": event.obstacle_id, "displacement": list(event.displacement)}


def event_from_dict(data: dict) -> PerturbationEvent:
    kind = data.get("kind")
    if kind == "remove_food":
        return RemoveFood(Rect.from_list(data["region"]))
    if kind == "degrade_cells":
        return DegradeCells(Rect.from_list(data["region"]), float(data["fraction"]))
    if kind == "move_obstacle":
        dx, dy = data["displacement"]
        return MoveObstacle(int(data["obstacle_id"]), (int(dx), int(dy)))
    raise LifecycleError(f"unknown perturbation kind {kind!r}")


@dataclass(frozen=True)
class LifecycleConfig:
    """Lifespan, update stochasticity, seeding, and perturbation schedule."""

    t_min: int = 300
    t_max: int = 600
    p_update: float = 0.5
    seed_cell: Optional[tuple[int, int]] = None  # None: use the arena's default
    seed_mass: float = 1.0
    seed_nutrient: float = 1.0
    n_env_evals: int = 1
    tau: float = 0.8  # fluid BGK relaxation time
    schedule: tuple = ()  # ((step, PerturbationEvent), ...)

    def __post_init__(self):
        if not 0 < self.t_min <= self.t_max:
            raise LifecycleError(f"need 0 < t_min <= t_max, got [{self.t_min}, {self.t_max}]")
        if not 0.0 < self.p_update <= 1.0:
            raise LifecycleError(f"p_update must lie in (0, 1], got {self.p_update}")
        if self.tau <= 0.5:
            raise LifecycleError(f"tau must exceed 0.5, got {self.tau}")
        if self.n_env_evals < 1:
            raise LifecycleError("n_env_evals must be >= 1")

    def to_dict(self) -> dict:
        return {
            "t_min": self.t_min,
            "t_max": self.t_max,
            "p_update": self.p_update,
            "seed_cell": list(self.seed_cell) if self.seed_cell else None,
            "seed_mass": self.seed_mass,
            "seed_nutrient": self.seed_nutrient,
            "n_env_evals": self.n_env_evals,
            "tau": self.tau,
            "schedule": [[step, event_to_dict(ev)] for step, ev in self.schedule],
        }

    @staticmethod
    def from_dict(data: dict) -> "LifecycleConfig":
        return LifecycleConfig(
            t_min=int(data.get("t_min", 300)),
            t_max=int(data.get("t_max", 600)),
            p_update=float(data.get("p_update", 0.5)),
            seed_cell=tuple(int(v) for v in data["seed_cell"]) if data.get("seed_cell") else None,
            seed_mass=float(data.get("seed_mass", 1.0)),
            seed_nutrient=float(data.get("seed_nutrient", 1.0)),
            n_env_evals=int(data.get("n_env_evals", 1)),
            tau=float(data.get("tau", 0.8)),
            schedule=tuple((int(s), event_from_dict(e)) for s, e in data.get("schedule", ())),
        )


@dataclass
class EnvOutcome:
    """Per-environment evaluation result."""

    env_seed: int
    fitness: float
    steps_run: int
    failed: bool
    mass_curve: list[float]


@dataclass
class FitnessRecord:
    """Outcome of one full fitness evaluation (possibly several environments).

    ``fitness`` is the final entry of ``mass_curve``; with several
    environments the curve is the elementwise mean (curves cut short by a
    fluid failure are padded by holding their final value).
    """

    fitness: float
    mass_curve: list[float]
    steps_run: int
    per_env: list[EnvOutcome]


# -- world-level operations ---------------------------------------------------


def seed_organism(world: WorldState, cfg: LifecycleConfig, seed_cell: tuple[int, int]) -> WorldState:
    """Endow one free cell with the initial mass and nutrient. In place."""
    x, y = seed_cell
    if not world.shape.contains(x, y):
        raise LifecycleError(f"seed cell ({x}, {y}) out of bounds")
    if world.obstacle[y, x] > 0.5:
        raise LifecycleError(f"seed cell ({x}, {y}) is an obstacle")
    if total_mass(world) > 0:
        raise LifecycleError("world is already inhabited")
    world.mass[y, x] = cfg.seed_mass
    world.nutrient[y, x] = cfg.seed_nutrient
    return world


def label_obstacles(obstacles: np.ndarray) -> np.ndarray:
    """4-connected components of the obstacle mask, labeled 1.. in
    row-major discovery order. Label 0 is free space."""
    solid = np.asarray(obstacles) > 0.5
    h, w = solid.shape
    labels = np.zeros((h, w), dtype=np.int32)
    current = 0
    for y in range(h):
        for x in range(w):
            if solid[y, x] and labels[y, x] == 0:
                current += 1
                stack = [(x, y)]
                labels[y, x] = current
                while stack:
                    cx, cy = stack.pop()
                    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        nx, ny = cx + dx, cy + dy
                        if 0 <= nx < w and 0 <= ny < h and solid[ny, nx] and labels[ny, nx] == 0:
                            labels[ny, nx] = current
                            stack.append((nx, ny))
    return labels


def validate_schedule(world: WorldState, schedule) -> None:
    """Reject malformed schedules up front, before any stepping happens.

    MoveObstacle displacements are simulated cumulatively against the
    initial obstacle layout so an out-of-bounds push fails here, not at
    run time.
    """
    labels = label_obstacles(world.obstacle)
    n_components = int(labels.max())
    offsets = {i: (0, 0) for i in range(1, n_components + 1)}
    for step, event in sorted(schedule, key=lambda se: se[0]):
        if step < 0:
            raise LifecycleError(f"schedule step {step} is negative")
        if isinstance(event, (RemoveFood, DegradeCells)):
            if not event.region.within(world.shape):
                raise LifecycleError(f"perturbation region {event.region} out of bounds")
            if isinstance(event, DegradeCells) and not 0.0 <= event.fraction <= 1.0:
                raise LifecycleError(f"degrade fraction must lie in [0, 1], got {event.fraction}")
        elif isinstance(event, MoveObstacle):
            if not 1 <= event.obstacle_id <= n_components:
                raise LifecycleError(f"obstacle id {event.obstacle_id} does not exist (have {n_components})")
            ox, oy = offsets[event.obstacle_id]
            ox += event.displacement[0]
            oy += event.displacement[1]
            ys, xs = np.nonzero(labels == event.obstacle_id)
            if (
                (xs + ox).min() < 0
                or (xs + ox).max() >= world.shape.width
                or (ys + oy).min() < 0
                or (ys + oy).max() >= world.shape.height
            ):
                raise LifecycleError(f"obstacle {event.obstacle_id} pushed out of bounds at step {step}")
            offsets[event.obstacle_id] = (ox, oy)
        else:
            raise LifecycleError(f"unknown perturbation event {event!r}")


def apply_perturbation(world: WorldState, event: PerturbationEvent) -> WorldState:
    """Apply one scheduled event to the world, in place.

    RemoveFood zeroes F in its region. DegradeCells scales M, R, and N by
    (1 - fraction) in its region (proportional scaling keeps R within its
    capacity bound). MoveObstacle translates one labeled obstacle
    component: vacated cells become free; newly covered cells lose their
    M, R, N and hidden state. The chemoattractant field is *not* touched
    here; the simulation recomputes it after food or obstacle changes.
    """
    if isinstance(event, RemoveFood):
        world.food[event.region.slices()] = 0.0
    elif isinstance(event, DegradeCells):
        keep = 1.0 - event.fraction
        sl = event.region.slices()
        world.mass[sl] *= keep
        world.reservoir[sl] *= keep
        world.nutrient[sl] *= keep
    elif isinstance(event, MoveObstacle):
        labels = label_obstacles(world.obstacle)
        cells = labels == event.obstacle_id
        if not cells.any():
            raise LifecycleError(f"obstacle id {event.obstacle_id} does not exist")
        dx, dy = event.displacement
        moved = np.zeros_like(cells)
        ys, xs = np.nonzero(cells)
        if (
            (xs + dx).min() < 0
            or (xs + dx).max() >= world.shape.width
            or (ys + dy).min() < 0
            or (ys + dy).max() >= world.shape.height
        ):
            raise LifecycleError(f"obstacle {event.obstacle_id} pushed out of bounds")
        moved[ys + dy, xs + dx] = True
        world.obstacle[cells] = 0.0
        world.obstacle[moved] = 1.0
        newly_covered = moved
        world.mass[newly_covered] = 0.0
        world.reservoir[newly_covered] = 0.0
        world.nutrient[newly_covered] = 0.0
        world.hidden[:, newly_covered] = 0.0
        world.food[newly_covered] = 0.0
        world.poison[newly_covered] = 0.0
    else:
        raise LifecycleError(f"unknown perturbation event {event!r}")
    return world


# -- the simulation -----------------------------------------------------------


class Simulation:
    """Owns one (world, lattice) pair and advances it step by step.

    Confined to one logical thread; ``run_lifecycle`` wraps it, and the
    test harness drives it directly when it needs mid-run measurements.
    """

    def __init__(
        self,
        world: WorldState,
        phenotype: Phenotype,
        params: PhysicsParams,
        cfg: LifecycleConfig,
        rng: np.random.Generator,
        schedule=(),
        chemo_params: tuple[int, float] | None = None,
        lattice: fluid.Lattice | None = None,
    ):
        self.world = world
        self.phenotype = phenotype
        self.params = params
        self.cfg = cfg
        self.rng = rng
        self.schedule: dict[int, list[PerturbationEvent]] = {}
        for step_index, event in schedule:
            self.schedule.setdefault(int(step_index), []).append(event)
        validate_schedule(world, schedule)
        self.chemo_params = chemo_params  # (n_iters, decay) or None: skip recompute
        self.lattice = lattice or fluid.uniform_lattice(
            world.shape.width, world.shape.height, world.obstacle, tau=cfg.tau
        )
        self.step_index = 0
        self.last_perturbations: list[PerturbationEvent] = []

    def step(self, selection_override: np.ndarray | None = None) -> None:
        """Advance one step. ``selection_override`` (a boolean cell mask)
        replaces the stochastic selection; tests use it to force or
        suppress updates."""
        world = self.world
        p = self.params
        solid = world.obstacle > 0.5

        footprint = world.mass >= p.m_min
        active = dilate3x3(footprint) & ~solid
        ys, xs = np.nonzero(active)
        if selection_override is not None:
            chosen = selection_override[ys, xs]
        else:
            # One draw per active cell, row-major, off one sequential stream.
            draws = self.rng.random(len(ys))
            chosen = draws < self.cfg.p_update
        sel_y, sel_x = ys[chosen], xs[chosen]

        rho_src = np.zeros(world.shape.yx)
        if len(sel_y):
            inputs = np.empty((len(sel_y), self.phenotype.n_inputs))
            inputs[:, :-1] = perceive_cells(world, sel_y, sel_x)
            inputs[:, -1] = 1.0  # constant bias input
            outputs = self.phenotype.evaluate_batch(inputs)
            k = world.k_hidden
            world.hidden[:, sel_y, sel_x] = np.clip(outputs[:, :k].T, -1.0, 1.0)
            dr_des, dm_des = physics.squash_outputs(outputs[:, k], outputs[:, k + 1], p)
            r_before = world.reservoir[sel_y, sel_x]
            applied, m_new, r_new, n_new = physics.constrain(
                world.mass[sel_y, sel_x],
                r_before,
                world.nutrient[sel_y, sel_x],
                world.food[sel_y, sel_x],
                world.poison[sel_y, sel_x],
                dr_des,
                dm_des,
                p,
            )
            world.mass[sel_y, sel_x] = m_new
            world.reservoir[sel_y, sel_x] = r_new
            world.nutrient[sel_y, sel_x] = n_new
            rho = physics.reservoir_pressure(r_before, applied.delta_r, p)
            rho_src[sel_y, sel_x] = np.clip(rho, -p.rho_cap, p.rho_cap)

        self.lattice = fluid.step(self.lattice, world.obstacle, rho_src, step_index=self.step_index)
        velocity = fluid.macroscopic(self.lattice).u
        world.nutrient = fluid.advect_scalar(world.nutrient, velocity, world.obstacle)

        self.last_perturbations = self.schedule.get(self.step_index, [])
        if self.last_perturbations:
            obstacles_before = world.obstacle.copy()
            statics_changed = False
            for event in self.last_perturbations:
                apply_perturbation(world, event)
                statics_changed |= isinstance(event, (RemoveFood, MoveObstacle))
            moved = world.obstacle != obstacles_before
            if moved.any():
                self._reconcile_lattice(obstacles_before)
            if statics_changed and self.chemo_params is not None:
                n_iters, decay = self.chemo_params
                world.chemo = chemoattractant_field(world.food, world.obstacle, n_iters, decay)
        self.step_index += 1

    def _reconcile_lattice(self, obstacles_before: np.ndarray) -> None:
        """Obstacle moves invalidate fluid state: covered cells lose their
        populations; vacated cells start again at rest at unit density."""
        now_solid = self.world.obstacle > 0.5
        was_solid = obstacles_before > 0.5
        f = self.lattice.f
        f[:, now_solid] = 0.0
        vacated = was_solid & ~now_solid
        f[:, vacated] = fluid.WEIGHTS[:, None]
        self.lattice = fluid.Lattice(f, self.lattice.tau)

    def run(self, steps: int, observer=None) -> list[float]:
        """Run ``steps`` steps, returning the mass curve (length steps+1).

        ``observer(sim)`` is called after every step. A FluidInstability
        cuts the run short; the curve returned covers the completed steps.
        """
        curve = [total_mass(self.world)]
        for _ in range(steps):
            try:
                self.step()
            except fluid.FluidInstability:
                break
            curve.append(total_mass(self.world))
            if observer is not None:
                observer(self)
        return curve


def build_simulation(
    genome_or_phenotype,
    bundle: EnvBundle,
    params: PhysicsParams,
    cfg: LifecycleConfig,
    step_seed,
    k_hidden: int | None = None,
    schedule=None,
) -> Simulation:
    """Assemble a seeded simulation from generated statics."""
    phen = genome_or_phenotype
    if isinstance(phen, Genome):
        k_hidden = phen.k_hidden
        phen = compile_genome(phen)
    if k_hidden is None:
        raise LifecycleError("k_hidden required when passing a compiled phenotype")
    world = create_world(bundle.spec.shape, bundle.statics, k_hidden)
    seed_cell = cfg.seed_cell or bundle.seed_cell
    seed_organism(world, cfg, seed_cell)
    rng = np.random.default_rng(step_seed)
    return Simulation(
        world,
        phen,
        params,
        cfg,
        rng,
        schedule=cfg.schedule if schedule is None else schedule,
        chemo_params=(bundle.spec.resolved_chemo_iters(), bundle.spec.chemo_decay),
    )


def run_lifecycle(
    genome: Genome,
    env: EnvSpec,
    params: PhysicsParams,
    cfg: LifecycleConfig,
    run_seed: int,
) -> FitnessRecord:
    """Evaluate one genome: lifespan drawn once from run_seed, then one
    simulation per environment evaluation, averaged.

    A fluid instability ends that environment's run early with fitness
    equal to the total mass at the failure step — penalizing, never
    crashing, the evolution driver. Environment evaluation e (1-based)
    varies the arena seed as spec.seed + (e - 1) when n_env_evals > 1.
    """
    lifespan_rng = np.random.default_rng(np.random.SeedSequence([run_seed, 0]))
    lifespan = int(lifespan_rng.integers(cfg.t_min, cfg.t_max + 1))
    phen = compile_genome(genome)

    outcomes = []
    for e in range(1, cfg.n_env_evals + 1):
        spec = env if cfg.n_env_evals == 1 else replace(env, seed=env.seed + e - 1)
        bundle = environments.generate_cached(spec)
        schedule = list(cfg.schedule)
        sim = build_simulation(
            phen,
            bundle,
            params,
            cfg,
            np.random.SeedSequence([run_seed, e, 1]),
            k_hidden=genome.k_hidden,
            schedule=schedule,
        )
        curve = sim.run(lifespan)
        outcomes.append(
            EnvOutcome(
                env_seed=spec.seed,
                fitness=curve[-1],
                steps_run=len(curve) - 1,
                failed=len(curve) - 1 < lifespan,
                mass_curve=curve,
            )
        )

    padded = np.full((len(outcomes), lifespan + 1), np.nan)
    for i, outcome in enumerate(outcomes):
        padded[i, : len(outcome.mass_curve)] = outcome.mass_curve
        padded[i, len(outcome.mass_curve) :] = outcome.mass_curve[-1]
    mean_curve = padded.mean(axis=0)
    return FitnessRecord(
        fitness=float(mean_curve[-1]),
        mass_curve=[float(v) for v in mean_curve],
        steps_run=lifespan,
        per_env=outcomes,
    )


def energy_total(world: WorldState, p: PhysicsParams) -> float:
    """The conserved-or-decreasing closed-system quantity N_total + beta * M_total."""
    return total_nutrient(world) + p.beta * total_mass(world)
