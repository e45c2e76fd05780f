"""Arena generation and the chemoattractant field."""

from collections import deque
from dataclasses import replace

import numpy as np
import pytest

from eincasm.environments import (
    EnvError,
    EnvSpec,
    Rect,
    chemoattractant_field,
    generate,
    reachable_from,
)
from eincasm.substrate import GridShape


def bfs_reachable(obstacles, start):
    """Independent 8-connected BFS oracle."""
    h, w = obstacles.shape
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h and (nx, ny) not in seen and obstacles[ny, nx] < 0.5:
                    seen.add((nx, ny))
                    queue.append((nx, ny))
    return seen


class TestGenerate:
    def test_open_arena(self):
        spec = EnvSpec(
            kind="open_arena",
            shape=GridShape(10, 8),
            food=((Rect(7, 4), 2.0),),
            seed_cell=(2, 2),
        )
        bundle = generate(spec)
        assert not bundle.statics.obstacle.any()
        assert bundle.statics.food[4, 7] == 2.0
        assert bundle.statics.food.sum() == 2.0

    def test_deterministic_in_spec_and_seed(self):
        spec = EnvSpec(
            kind="obstacle_field",
            shape=GridShape(16, 16),
            food=((Rect(13, 13), 3.0),),
            seed=42,
            params=(("density", 0.2),),
        )
        a, b = generate(spec), generate(spec)
        np.testing.assert_array_equal(a.statics.obstacle, b.statics.obstacle)
        c = generate(replace(spec, seed=43))
        assert (a.statics.obstacle != c.statics.obstacle).any()

    def test_obstacle_field_protects_food_and_seed(self):
        spec = EnvSpec(
            kind="obstacle_field",
            shape=GridShape(20, 20),
            food=((Rect(16, 16, 2, 2), 3.0),),
            seed=7,
            seed_cell=(2, 2),
            params=(("density", 0.25),),
        )
        bundle = generate(spec)
        assert bundle.statics.obstacle[2, 2] == 0.0
        assert not bundle.statics.obstacle[16:18, 16:18].any()

    def test_all_food_reachable_from_seed(self):
        for seed in range(5):
            spec = EnvSpec(
                kind="obstacle_field",
                shape=GridShape(18, 14),
                food=((Rect(15, 11, 2, 2), 3.0),),
                seed=seed,
                seed_cell=(1, 1),
                params=(("density", 0.3),),
            )
            bundle = generate(spec)
            reach = bfs_reachable(bundle.statics.obstacle, (1, 1))
            food_cells = np.argwhere(bundle.statics.food > 0)
            for y, x in food_cells:
                assert (x, y) in reach

    def test_maze_connectivity_bfs_oracle(self):
        for seed in range(4):
            spec = EnvSpec(kind="maze", shape=GridShape(21, 21), seed=seed, params=(("cell_size", 1),))
            bundle = generate(spec)
            assert bundle.start is not None and bundle.goal is not None
            reach = bfs_reachable(bundle.statics.obstacle, (bundle.start.x, bundle.start.y))
            assert (bundle.goal.x, bundle.goal.y) in reach
            # food auto-placed at the goal block
            assert bundle.statics.food[bundle.goal.slices()].max() > 0

    def test_maze_scaled_corridors(self):
        spec = EnvSpec(kind="maze", shape=GridShape(22, 22), seed=1, params=(("cell_size", 2),))
        bundle = generate(spec)
        free = bundle.statics.obstacle[bundle.start.slices()]
        assert free.shape == (2, 2) and not free.any()

    def test_coordination_layout(self):
        spec = EnvSpec(
            kind="coordination",
            shape=GridShape(24, 16),
            seed_cell=(12, 8),
            params=(("cluster_amount", 4.0), ("cluster_offset", 8), ("cluster_radius", 1)),
        )
        bundle = generate(spec)
        assert bundle.cluster_a is not None and bundle.cluster_b is not None
        assert bundle.cluster_a.x < 12 < bundle.cluster_b.x
        assert bundle.statics.food[bundle.cluster_a.slices()].min() == 4.0
        assert bundle.statics.food[bundle.cluster_b.slices()].min() == 4.0

    def test_deceptive_chemo_false_peak(self):
        spec = EnvSpec(
            kind="deceptive_chemo",
            shape=GridShape(20, 20),
            food=((Rect(16, 16), 4.0),),
            seed_cell=(10, 10),
            params=(("false_peak_amplitude", 3.0), ("false_peak", [4, 4])),
        )
        bundle = generate(spec)
        c = bundle.statics.chemo
        assert bundle.statics.food[4, 4] == 0.0
        neighborhood = c[3:6, 3:6]
        assert c[4, 4] == neighborhood.max()  # local maximum at a food-free cell
        assert c[4, 4] == 3.0

    def test_unsatisfiable_spec_errors(self):
        spec = EnvSpec(kind="open_arena", shape=GridShape(8, 8), food=((Rect(9, 1), 2.0),))
        with pytest.raises(EnvError):
            generate(spec)
        with pytest.raises(EnvError):
            generate(EnvSpec(kind="nope", shape=GridShape(8, 8)))
        with pytest.raises(EnvError):
            generate(EnvSpec(kind="open_arena", shape=GridShape(8, 8), food=((Rect(1, 1), -2.0),)))

    def test_seed_cell_on_obstacle_rejected(self):
        spec = EnvSpec(kind="maze", shape=GridShape(21, 21), seed=0, seed_cell=(0, 0), params=(("cell_size", 1),))
        with pytest.raises(EnvError):
            generate(spec)  # maze border is wall


class TestChemoattractant:
    def test_no_food_no_field(self):
        c = chemoattractant_field(np.zeros((6, 6)), np.zeros((6, 6)), 10, 0.9)
        assert not c.any()

    def test_ring_means_decrease_from_single_source(self):
        f = np.zeros((15, 15))
        f[7, 7] = 4.0
        c = chemoattractant_field(f, np.zeros((15, 15)), 60, 0.9)
        yy, xx = np.mgrid[0:15, 0:15]
        cheb = np.maximum(np.abs(xx - 7), np.abs(yy - 7))
        means = [c[cheb == k].mean() for k in range(8)]
        assert all(means[k] > means[k + 1] for k in range(7))

    def test_matches_direct_iteration_oracle(self):
        rng = np.random.default_rng(3)
        f = rng.random((7, 8)) * (rng.random((7, 8)) < 0.15)
        solid = (rng.random((7, 8)) < 0.12)
        f[solid] = 0.0

        def oracle(f, solid, iters, decay):
            h, w = f.shape
            c = f.copy()
            for _ in range(iters):
                new = np.zeros_like(c)
                for y in range(h):
                    for x in range(w):
                        if solid[y, x]:
                            continue
                        acc = 0.0
                        for dy in (-1, 0, 1):
                            for dx in (-1, 0, 1):
                                if (dx, dy) == (0, 0):
                                    continue
                                ny, nx = y + dy, x + dx
                                if 0 <= ny < h and 0 <= nx < w and not solid[ny, nx]:
                                    acc += c[ny, nx]
                                else:
                                    acc += c[y, x]  # zero-flux mirror
                        new[y, x] = max(f[y, x], decay * acc / 8.0)
                c = new
            return c

        got = chemoattractant_field(f, solid.astype(float), 9, 0.9)
        np.testing.assert_allclose(got, oracle(f, solid, 9, 0.9), atol=1e-12)

    def test_enclosed_food_leaks_nothing(self):
        f = np.zeros((9, 9))
        f[4, 4] = 5.0
        solid = np.zeros((9, 9))
        solid[3:6, 3] = solid[3:6, 5] = 1.0
        solid[3, 3:6] = solid[5, 3:6] = 1.0
        c = chemoattractant_field(f, solid, 40, 0.9)
        outside = np.ones((9, 9), dtype=bool)
        outside[3:6, 3:6] = False
        assert not c[outside].any()
        assert c[4, 4] == 5.0

    def test_parameter_validation(self):
        with pytest.raises(EnvError):
            chemoattractant_field(np.zeros((4, 4)), np.zeros((4, 4)), 0, 0.9)
        with pytest.raises(EnvError):
            chemoattractant_field(np.zeros((4, 4)), np.zeros((4, 4)), 5, 1.0)


def test_reachable_from_matches_bfs():
    rng = np.random.default_rng(5)
    solid = (rng.random((10, 12)) < 0.3).astype(float)
    solid[4, 6] = 0.0
    mask = reachable_from(solid, 6, 4)
    oracle = bfs_reachable(solid, (6, 4))
    got = {(x, y) for y, x in np.argwhere(mask)}
    assert got == oracle


def test_envspec_json_round_trip():
    spec = EnvSpec(
        kind="coordination",
        shape=GridShape(24, 16),
        food=((Rect(1, 2, 3, 4), 2.5),),
        poison=((Rect(5, 5), 1.0),),
        seed=9,
        seed_cell=(12, 8),
        chemo_decay=0.95,
        chemo_iters=64,
        params=(("cluster_amount", 4.0),),
    )
    again = EnvSpec.from_dict(spec.to_dict())
    assert again == spec
