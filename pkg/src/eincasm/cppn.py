"""CPPN genomes and their compiled feed-forward evaluators.

A genome encodes the organism's physiology: a small directed acyclic
network with heterogeneous activations that maps the 3x3 perception
vector (plus a trailing constant-1 bias input) to ``K`` hidden-channel
writes followed by the desired reservoir and mass changes.

Node ids are fixed by convention: inputs occupy ``0 .. n_inputs-1`` (the
last one is the bias input), outputs occupy the next ``n_outputs`` ids,
and hidden nodes take whatever ids the innovation registry hands out.
Evaluation is pure and deterministic; identical inputs give bit-identical
outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .substrate import N_BASE_CHANNELS


class GenomeError(ValueError):
    """Structurally invalid genome (cycles, bad ids, duplicate innovations)."""


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


#: The activation palette. Every function is total over finite reals and
#: returns finite outputs for finite inputs (sigmoid is computed in the
#: numerically stable split form).
ACTIVATIONS = {
    "identity": lambda x: x,
    "sigmoid": _sigmoid,
    "tanh": np.tanh,
    "sine": np.sin,
    "gaussian": lambda x: np.exp(-(x * x)),
    "absolute": np.abs,
    "relu": lambda x: np.maximum(x, 0.0),
}
ACTIVATION_NAMES = tuple(ACTIVATIONS)

INPUT, HIDDEN, OUTPUT = "input", "hidden", "output"


def io_sizes(k_hidden: int) -> tuple[int, int]:
    """(n_inputs, n_outputs) for a given hidden-channel count.

    Inputs: 9 neighborhood cells x (7 + K) channels, plus one constant-1
    bias input. Outputs: K hidden writes, desired dR, desired dM.
    """
    return 9 * (N_BASE_CHANNELS + k_hidden) + 1, k_hidden + 2


@dataclass
class NodeGene:
    id: int
    kind: str
    activation: str
    bias: float = 0.0


@dataclass
class ConnectionGene:
    innovation: int
    src: int
    dst: int
    weight: float
    enabled: bool = True


@dataclass
class Genome:
    """NEAT-encoded CPPN: node genes plus innovation-tagged connections.

    ``nodes`` is keyed by node id and ``connections`` by innovation number;
    both preserve insertion order, which downstream code relies on only via
    explicit sorts.
    """

    n_inputs: int
    n_outputs: int
    k_hidden: int
    nodes: dict[int, NodeGene] = field(default_factory=dict)
    connections: dict[int, ConnectionGene] = field(default_factory=dict)

    @property
    def bias_input_id(self) -> int:
        return self.n_inputs - 1

    def output_ids(self) -> range:
        return range(self.n_inputs, self.n_inputs + self.n_outputs)

    def copy(self) -> "Genome":
        return Genome(
            n_inputs=self.n_inputs,
            n_outputs=self.n_outputs,
            k_hidden=self.k_hidden,
            nodes={i: NodeGene(n.id, n.kind, n.activation, n.bias) for i, n in self.nodes.items()},
            connections={
                i: ConnectionGene(c.innovation, c.src, c.dst, c.weight, c.enabled)
                for i, c in self.connections.items()
            },
        )

    def sorted_connections(self) -> list[ConnectionGene]:
        return [self.connections[i] for i in sorted(self.connections)]


def empty_genome(k_hidden: int) -> Genome:
    """All input and output nodes, no connections. Outputs use identity."""
    n_in, n_out = io_sizes(k_hidden)
    g = Genome(n_inputs=n_in, n_outputs=n_out, k_hidden=k_hidden)
    for i in range(n_in):
        g.nodes[i] = NodeGene(i, INPUT, "identity", 0.0)
    for j in range(n_in, n_in + n_out):
        g.nodes[j] = NodeGene(j, OUTPUT, "identity", 0.0)
    return g


def validate_genome(genome: Genome):
    """Raise GenomeError unless every structural invariant holds."""
    n_in, n_out = genome.n_inputs, genome.n_outputs
    if (n_in, n_out) != io_sizes(genome.k_hidden):
        raise GenomeError("n_inputs/n_outputs inconsistent with k_hidden")
    for i in range(n_in):
        node = genome.nodes.get(i)
        if node is None or node.kind != INPUT:
            raise GenomeError(f"node {i} must be an input node")
        if node.activation != "identity" or node.bias != 0.0:
            raise GenomeError(f"input node {i} must be identity with zero bias")
    for j in range(n_in, n_in + n_out):
        node = genome.nodes.get(j)
        if node is None or node.kind != OUTPUT:
            raise GenomeError(f"node {j} must be an output node")
    for node in genome.nodes.values():
        if node.id >= n_in + n_out and node.kind != HIDDEN:
            raise GenomeError(f"node {node.id} outside io range must be hidden")
        if node.activation not in ACTIVATIONS:
            raise GenomeError(f"unknown activation {node.activation!r}")
    for innov, conn in genome.connections.items():
        if innov != conn.innovation:
            raise GenomeError("connection key does not match its innovation number")
        if conn.src == conn.dst:
            raise GenomeError(f"self-connection at innovation {innov}")
        if conn.src not in genome.nodes or conn.dst not in genome.nodes:
            raise GenomeError(f"connection {innov} references a missing node")
        if genome.nodes[conn.dst].kind == INPUT:
            raise GenomeError(f"connection {innov} targets an input node")
        if genome.nodes[conn.src].kind == OUTPUT:
            raise GenomeError(f"connection {innov} leaves an output node")
    topological_order(genome)  # raises on enabled cycles


def topological_order(genome: Genome) -> list[int]:
    """Kahn's algorithm over enabled connections, all nodes included.

    Ties broken by node id so the order (and therefore float accumulation)
    is reproducible. Raises GenomeError if the enabled subgraph has a cycle.
    """
    successors: dict[int, list[int]] = {i: [] for i in genome.nodes}
    indegree = {i: 0 for i in genome.nodes}
    for conn in genome.sorted_connections():
        if conn.enabled:
            successors[conn.src].append(conn.dst)
            indegree[conn.dst] += 1
    ready = sorted(i for i, d in indegree.items() if d == 0)
    order: list[int] = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        fresh = []
        for nxt in successors[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                fresh.append(nxt)
        if fresh:
            ready.extend(fresh)
            ready.sort()
    if len(order) != len(genome.nodes):
        raise GenomeError("enabled connections form a cycle")
    return order


def creates_cycle(genome: Genome, src: int, dst: int) -> bool:
    """Would an enabled src->dst edge close a cycle in the enabled subgraph?"""
    if src == dst:
        return True
    # Cycle iff dst already reaches src through enabled edges.
    successors: dict[int, list[int]] = {}
    for conn in genome.connections.values():
        if conn.enabled:
            successors.setdefault(conn.src, []).append(conn.dst)
    stack, seen = [dst], set()
    while stack:
        node = stack.pop()
        if node == src:
            return True
        if node in seen:
            continue
        seen.add(node)
        stack.extend(successors.get(node, ()))
    return False


@dataclass(frozen=True)
class _NodeStep:
    slot: int
    activation: str
    bias: float
    src_slots: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class Phenotype:
    """Topologically ordered evaluation plan for one genome.

    Immutable and sharable across threads; evaluation allocates its own
    scratch buffer per call.
    """

    n_inputs: int
    n_outputs: int
    n_slots: int
    steps: tuple[_NodeStep, ...]
    output_slots: np.ndarray

    def evaluate_batch(self, inputs: np.ndarray) -> np.ndarray:
        """Evaluate many input rows at once: (n, n_inputs) -> (n, n_outputs)."""
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.n_inputs:
            raise GenomeError(f"expected inputs of shape (n, {self.n_inputs}), got {inputs.shape}")
        values = np.empty((self.n_slots, inputs.shape[0]))
        values[: self.n_inputs] = inputs.T
        for step in self.steps:
            # explicit per-edge accumulation in innovation order: summation
            # order (and therefore rounding) is identical for any batch size
            acc = np.full(inputs.shape[0], step.bias)
            for src_slot, weight in zip(step.src_slots, step.weights):
                acc += weight * values[src_slot]
            values[step.slot] = ACTIVATIONS[step.activation](acc)
        return values[self.output_slots].T


def compile_genome(genome: Genome) -> Phenotype:
    """Flatten a genome into an evaluation plan.

    Node value = activation(bias + sum of weight * upstream value over
    enabled incoming edges); input nodes pass their input through. Nodes
    with no enabled incoming edges evaluate to activation(bias).
    """
    order = topological_order(genome)
    slot_of = {i: i for i in range(genome.n_inputs)}
    next_slot = genome.n_inputs
    for node_id in order:
        if node_id >= genome.n_inputs:
            slot_of[node_id] = next_slot
            next_slot += 1
    incoming: dict[int, list[ConnectionGene]] = {}
    for conn in genome.sorted_connections():
        if conn.enabled:
            incoming.setdefault(conn.dst, []).append(conn)
    steps = []
    for node_id in order:
        if node_id < genome.n_inputs:
            continue
        node = genome.nodes[node_id]
        conns = incoming.get(node_id, [])
        steps.append(
            _NodeStep(
                slot=slot_of[node_id],
                activation=node.activation,
                bias=node.bias,
                src_slots=np.array([slot_of[c.src] for c in conns], dtype=np.intp),
                weights=np.array([c.weight for c in conns]),
            )
        )
    output_slots = np.array([slot_of[i] for i in genome.output_ids()], dtype=np.intp)
    return Phenotype(
        n_inputs=genome.n_inputs,
        n_outputs=genome.n_outputs,
        n_slots=next_slot,
        steps=tuple(steps),
        output_slots=output_slots,
    )


def evaluate(phenotype: Phenotype, inputs) -> np.ndarray:
    """Evaluate one input vector; length must equal n_inputs."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.shape != (phenotype.n_inputs,):
        raise GenomeError(f"expected {phenotype.n_inputs} inputs, got shape {x.shape}")
    return phenotype.evaluate_batch(x[None, :])[0]


# -- serialization ----------------------------------------------------------
#
# JSON schema (round-trips exactly; floats use repr, i.e. shortest
# round-trip decimal form):
# {n_inputs, n_outputs, k_hidden,
#  nodes: [{id, kind, activation, bias}],
#  connections: [{innovation, from, to, weight, enabled}]}


def genome_to_dict(genome: Genome) -> dict:
    return {
        "n_inputs": genome.n_inputs,
        "n_outputs": genome.n_outputs,
        "k_hidden": genome.k_hidden,
        "nodes": [
            {"id": n.id, "kind": n.kind, "activation": n.activation, "bias": n.bias}
            for n in (genome.nodes[i] for i in sorted(genome.nodes))
        ],
        "connections": [
            {
                "innovation": c.innovation,
                "from": c.src,
                "to": c.dst,
                "weight": c.weight,
                "enabled": c.enabled,
            }
            for c in genome.sorted_connections()
        ],
    }


def genome_from_dict(data: dict) -> Genome:
    try:
        g = Genome(
            n_inputs=int(data["n_inputs"]),
            n_outputs=int(data["n_outputs"]),
            k_hidden=int(data["k_hidden"]),
        )
        for n in data["nodes"]:
            g.nodes[int(n["id"])] = NodeGene(int(n["id"]), n["kind"], n["activation"], float(n["bias"]))
        for c in data["connections"]:
            g.connections[int(c["innovation"])] = ConnectionGene(
                int(c["innovation"]), int(c["from"]), int(c["to"]), float(c["weight"]), bool(c["enabled"])
            )
    except (KeyError, TypeError) as exc:
        raise GenomeError(f"malformed genome data: {exc}") from exc
    validate_genome(g)
    return g


def genome_to_json(genome: Genome) -> str:
    return json.dumps(genome_to_dict(genome), indent=2)


def genome_from_json(text: str) -> Genome:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GenomeError(f"genome JSON does not parse: {exc}") from exc
    return genome_from_dict(data)
