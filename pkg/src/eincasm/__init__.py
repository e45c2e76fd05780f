"""EINCASM: evolving neural cellular automata under a nutrient economy,
with lattice-Boltzmann fluid transport and an intelligence-test harness."""

__version__ = "0.1.0"

from .cppn import Genome, Phenotype, compile_genome, evaluate
from .environments import EnvSpec, Rect, generate
from .fluid import Lattice, advect_scalar, equilibrium, macroscopic
from .lifecycle import FitnessRecord, LifecycleConfig, Simulation, run_lifecycle
from .neat import EvolutionConfig, Population, init_population, next_generation
from .physics import PhysicsParams, constrain
from .substrate import GridShape, Statics, WorldState, create_world, perception_vector, total_mass

__all__ = [
    "Genome",
    "Phenotype",
    "compile_genome",
    "evaluate",
    "EnvSpec",
    "Rect",
    "generate",
    "Lattice",
    "advect_scalar",
    "equilibrium",
    "macroscopic",
    "FitnessRecord",
    "LifecycleConfig",
    "Simulation",
    "run_lifecycle",
    "EvolutionConfig",
    "Population",
    "init_population",
    "next_generation",
    "PhysicsParams",
    "constrain",
    "GridShape",
    "Statics",
    "WorldState",
    "create_world",
    "perception_vector",
    "total_mass",
    "__version__",
]
