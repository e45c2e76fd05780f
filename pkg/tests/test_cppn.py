"""Genome compilation and evaluation against a definitional oracle."""

import json
import math

import numpy as np
import pytest

from eincasm.cppn import (
    ACTIVATIONS,
    ACTIVATION_NAMES,
    ConnectionGene,
    GenomeError,
    NodeGene,
    compile_genome,
    empty_genome,
    evaluate,
    genome_from_json,
    genome_to_json,
    io_sizes,
    validate_genome,
)


def tiny_genome(k_hidden=1):
    """Minimal valid genome shell to wire by hand."""
    return empty_genome(k_hidden)


def recursive_oracle(genome, inputs):
    """Definition-level evaluator: value(n) = act(bias + sum w * value(src))."""
    incoming = {}
    for conn in genome.connections.values():
        if conn.enabled:
            incoming.setdefault(conn.dst, []).append(conn)
    memo = {}

    def value(node_id):
        if node_id in memo:
            return memo[node_id]
        if node_id < genome.n_inputs:
            memo[node_id] = float(inputs[node_id])
            return memo[node_id]
        node = genome.nodes[node_id]
        acc = node.bias
        for conn in sorted(incoming.get(node_id, ()), key=lambda c: c.innovation):
            acc += conn.weight * value(conn.src)
        memo[node_id] = float(ACTIVATIONS[node.activation](np.float64(acc)))
        return memo[node_id]

    return np.array([value(i) for i in genome.output_ids()])


def random_genome(rng, k_hidden=1, max_hidden=6, n_conns=12):
    g = empty_genome(k_hidden)
    n_hidden = int(rng.integers(0, max_hidden + 1))
    hidden_ids = []
    next_id = g.n_inputs + g.n_outputs
    for _ in range(n_hidden):
        g.nodes[next_id] = NodeGene(next_id, "hidden", str(rng.choice(ACTIVATION_NAMES)), float(rng.normal()))
        hidden_ids.append(next_id)
        next_id += 1
    for out_id in g.output_ids():
        g.nodes[out_id].activation = str(rng.choice(ACTIVATION_NAMES))
        g.nodes[out_id].bias = float(rng.normal())
    # layered wiring keeps the graph acyclic: inputs -> hidden(asc) -> outputs
    order = list(range(g.n_inputs)) + hidden_ids + list(g.output_ids())
    rank = {node: i for i, node in enumerate(order)}
    innov = 0
    attempts = 0
    while innov < n_conns and attempts < 200:
        attempts += 1
        src = order[int(rng.integers(0, g.n_inputs + len(hidden_ids)))]
        dst = order[int(rng.integers(g.n_inputs, len(order)))]
        if rank[src] >= rank[dst]:
            continue
        if any(c.src == src and c.dst == dst for c in g.connections.values()):
            continue
        g.connections[innov] = ConnectionGene(innov, src, dst, float(rng.normal()), bool(rng.random() < 0.9))
        innov += 1
    validate_genome(g)
    return g


class TestCompile:
    def test_single_passthrough_edge(self):
        g = tiny_genome()
        g.connections[0] = ConnectionGene(0, 0, g.n_inputs, 1.0, True)
        phen = compile_genome(g)
        x = np.zeros(g.n_inputs)
        x[0] = 0.7
        assert evaluate(phen, x)[0] == 0.7

    def test_disabled_edge_contributes_nothing(self):
        g = tiny_genome()
        g.nodes[g.n_inputs].bias = 0.25
        g.connections[0] = ConnectionGene(0, 0, g.n_inputs, 1.0, False)
        phen = compile_genome(g)
        x = np.full(g.n_inputs, 0.9)
        assert evaluate(phen, x)[0] == 0.25  # identity(bias)

    def test_cycle_detected(self):
        g = tiny_genome()
        a, b = 900, 901
        g.nodes[a] = NodeGene(a, "hidden", "identity", 0.0)
        g.nodes[b] = NodeGene(b, "hidden", "identity", 0.0)
        g.connections[0] = ConnectionGene(0, a, b, 1.0, True)
        g.connections[1] = ConnectionGene(1, b, a, 1.0, True)
        with pytest.raises(GenomeError):
            compile_genome(g)

    def test_cycle_of_disabled_edges_is_fine(self):
        g = tiny_genome()
        a, b = 900, 901
        g.nodes[a] = NodeGene(a, "hidden", "identity", 0.0)
        g.nodes[b] = NodeGene(b, "hidden", "identity", 0.0)
        g.connections[0] = ConnectionGene(0, a, b, 1.0, True)
        g.connections[1] = ConnectionGene(1, b, a, 1.0, False)
        compile_genome(g)


class TestEvaluate:
    def test_hand_computed_tanh_edge(self):
        g = tiny_genome()
        out = g.n_inputs
        g.nodes[out].activation = "tanh"
        g.connections[0] = ConnectionGene(0, 3, out, 2.0, True)
        phen = compile_genome(g)
        x = np.zeros(g.n_inputs)
        x[3] = 0.5
        assert evaluate(phen, x)[0] == pytest.approx(math.tanh(1.0), abs=1e-15)

    def test_wrong_input_length(self):
        g = tiny_genome()
        phen = compile_genome(g)
        with pytest.raises(GenomeError):
            evaluate(phen, np.zeros(phen.n_inputs - 1))

    def test_oracle_equivalence_100_random_genomes(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            g = random_genome(rng)
            phen = compile_genome(g)
            for _ in range(3):
                x = rng.normal(size=g.n_inputs)
                np.testing.assert_allclose(
                    evaluate(phen, x), recursive_oracle(g, x), rtol=0, atol=1e-12
                )

    def test_batch_matches_single(self):
        rng = np.random.default_rng(5)
        g = random_genome(rng)
        phen = compile_genome(g)
        batch = rng.normal(size=(17, g.n_inputs))
        out = phen.evaluate_batch(batch)
        for i in range(17):
            np.testing.assert_array_equal(out[i], evaluate(phen, batch[i]))

    def test_deterministic_bit_identical(self):
        rng = np.random.default_rng(9)
        g = random_genome(rng)
        phen = compile_genome(g)
        x = rng.normal(size=g.n_inputs)
        a, b = evaluate(phen, x), evaluate(phen, x)
        assert (a == b).all()


class TestActivations:
    @pytest.mark.parametrize("name", ACTIVATION_NAMES)
    def test_finite_on_extreme_inputs(self, name):
        xs = np.array([-1e6, -700.0, -1.0, 0.0, 1.0, 700.0, 1e6])
        out = ACTIVATIONS[name](xs)
        assert np.isfinite(out).all()

    def test_definitions(self):
        x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
        np.testing.assert_allclose(ACTIVATIONS["sigmoid"](x), 1 / (1 + np.exp(-x)), atol=1e-15)
        np.testing.assert_allclose(ACTIVATIONS["gaussian"](x), np.exp(-(x**2)), atol=1e-15)
        np.testing.assert_allclose(ACTIVATIONS["sine"](x), np.sin(x), atol=1e-15)
        np.testing.assert_allclose(ACTIVATIONS["relu"](x), np.maximum(x, 0), atol=0)
        np.testing.assert_allclose(ACTIVATIONS["absolute"](x), np.abs(x), atol=0)


class TestSerialization:
    def test_io_sizes(self):
        assert io_sizes(4) == (9 * 11 + 1, 6)
        assert io_sizes(1) == (73, 3)

    def test_round_trip_preserves_exact_doubles(self):
        rng = np.random.default_rng(13)
        g = random_genome(rng, k_hidden=2)
        # adversarial weights: tiny, huge, and full-precision doubles
        for i, conn in enumerate(g.connections.values()):
            conn.weight = float(rng.normal() * 10.0 ** int(rng.integers(-12, 12)))
        text = genome_to_json(g)
        g2 = genome_from_json(text)
        assert genome_to_json(g2) == text
        for innov, conn in g.connections.items():
            assert g2.connections[innov].weight == conn.weight  # bit-exact
        for node_id, node in g.nodes.items():
            assert g2.nodes[node_id].bias == node.bias

    def test_json_schema_keys(self):
        g = tiny_genome()
        g.connections[0] = ConnectionGene(0, 0, g.n_inputs, 0.5, True)
        data = json.loads(genome_to_json(g))
        assert set(data) == {"n_inputs", "n_outputs", "k_hidden", "nodes", "connections"}
        assert set(data["connections"][0]) == {"innovation", "from", "to", "weight", "enabled"}
        assert set(data["nodes"][0]) == {"id", "kind", "activation", "bias"}

    def test_malformed_json_rejected(self):
        with pytest.raises(GenomeError):
            genome_from_json("{nope")
        with pytest.raises(GenomeError):
            genome_from_json(json.dumps({"n_inputs": 3}))


class TestInvariantValidation:
    def test_connection_into_input_rejected(self):
        g = tiny_genome()
        g.connections[0] = ConnectionGene(0, 0, 1, 1.0, True)
        with pytest.raises(GenomeError):
            validate_genome(g)

    def test_connection_out_of_output_rejected(self):
        g = tiny_genome()
        out = g.n_inputs
        g.nodes[990] = NodeGene(990, "hidden", "tanh", 0.0)
        g.connections[0] = ConnectionGene(0, out, 990, 1.0, True)
        with pytest.raises(GenomeError):
            validate_genome(g)

    def test_self_loop_rejected(self):
        g = tiny_genome()
        g.nodes[990] = NodeGene(990, "hidden", "tanh", 0.0)
        g.connections[0] = ConnectionGene(0, 990, 990, 1.0, True)
        with pytest.raises(GenomeError):
            validate_genome(g)
