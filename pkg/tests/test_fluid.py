"""Lattice-Boltzmann fluid and donor-cell scalar transport."""

import numpy as np
import pytest

from eincasm.fluid import (
    EX,
    EY,
    WEIGHTS,
    FluidInstability,
    Lattice,
    advect_scalar,
    equilibrium,
    macroscopic,
    step,
    uniform_lattice,
)


def closed_box(width, height, tau=0.8, rho0=1.0):
    return uniform_lattice(width, height, np.zeros((height, width)), rho0=rho0, tau=tau)


def stable_random_lattice(rng, width, height, tau=0.8):
    """Random but physically reasonable state: equilibrium of a noisy
    density field with small velocities."""
    rho = 1.0 + 0.1 * rng.random((height, width))
    u = 0.02 * rng.standard_normal((2, height, width))
    return Lattice(equilibrium(rho, u), tau)


class TestEquilibrium:
    def test_rest_state_is_weights(self):
        f = equilibrium(1.0, np.zeros(2))
        np.testing.assert_allclose(f, WEIGHTS, atol=1e-15)
        assert f.sum() == pytest.approx(1.0, abs=1e-15)

    def test_zeroth_moment_identity(self):
        rng = np.random.default_rng(1)
        rho = rng.uniform(0.5, 2.0, (5, 7))
        u = 0.1 * rng.standard_normal((2, 5, 7))
        f = equilibrium(rho, u)
        np.testing.assert_allclose(f.sum(axis=0), rho, rtol=1e-12)

    def test_first_moment_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            rho = rng.uniform(0.5, 2.0, (4, 4))
            u = rng.uniform(-0.1, 0.1, (2, 4, 4))
            f = equilibrium(rho, u)
            mom_x = np.tensordot(EX, f, axes=(0, 0))
            mom_y = np.tensordot(EY, f, axes=(0, 0))
            np.testing.assert_allclose(mom_x, rho * u[0], atol=1e-12)
            np.testing.assert_allclose(mom_y, rho * u[1], atol=1e-12)


class TestMacroscopic:
    def test_uniform_weights(self):
        lat = closed_box(6, 5)
        fields = macroscopic(lat)
        np.testing.assert_allclose(fields.rho, 1.0, atol=1e-15)
        np.testing.assert_allclose(fields.u, 0.0, atol=1e-15)

    def test_single_direction(self):
        f = np.zeros((9, 3, 3))
        f[1] = 1.0
        fields = macroscopic(Lattice(f))
        np.testing.assert_allclose(fields.rho, 1.0)
        np.testing.assert_allclose(fields.u[0], 1.0)
        np.testing.assert_allclose(fields.u[1], 0.0)

    def test_against_naive_loops(self):
        rng = np.random.default_rng(3)
        f = rng.random((9, 4, 5))
        fields = macroscopic(Lattice(f))
        for y in range(4):
            for x in range(5):
                rho = sum(f[i, y, x] for i in range(9))
                ux = sum(f[i, y, x] * EX[i] for i in range(9)) / rho
                uy = sum(f[i, y, x] * EY[i] for i in range(9)) / rho
                assert fields.rho[y, x] == pytest.approx(rho, rel=1e-12)
                assert fields.u[0, y, x] == pytest.approx(ux, rel=1e-12)
                assert fields.u[1, y, x] == pytest.approx(uy, rel=1e-12)

    def test_vacuum_velocity_is_zero(self):
        f = np.zeros((9, 3, 3))
        fields = macroscopic(Lattice(f))
        np.testing.assert_array_equal(fields.u, 0.0)


class TestStep:
    def test_equilibrium_fixed_point(self):
        lat = closed_box(8, 8)
        obstacles = np.zeros((8, 8))
        for _ in range(100):
            lat = step(lat, obstacles)
        np.testing.assert_allclose(lat.f, closed_box(8, 8).f, atol=1e-12)

    def test_mass_conserved_in_closed_box(self):
        rng = np.random.default_rng(4)
        lat = stable_random_lattice(rng, 16, 12)
        total0 = lat.total()
        obstacles = np.zeros((12, 16))
        for _ in range(200):
            lat = step(lat, obstacles)
        assert lat.total() == pytest.approx(total0, rel=1e-12)

    def test_injection_ledger(self):
        rng = np.random.default_rng(5)
        lat = closed_box(10, 10)
        obstacles = np.zeros((10, 10))
        for _ in range(20):
            src = 0.05 * rng.standard_normal((10, 10))
            before = lat.total()
            lat = step(lat, obstacles, src)
            assert lat.total() == pytest.approx(before + src.sum(), rel=1e-12, abs=1e-12)

    def test_source_pulse_pushes_outward(self):
        lat = closed_box(11, 11)
        obstacles = np.zeros((11, 11))
        src = np.zeros((11, 11))
        src[5, 5] = 0.1
        lat = step(lat, obstacles, src)
        for _ in range(2):
            lat = step(lat, obstacles)
        u = macroscopic(lat).u
        assert u[0, 5, 6] > 0 and u[0, 5, 4] < 0  # east/west neighbors
        assert u[1, 6, 5] > 0 and u[1, 4, 5] < 0  # south/north (y+) neighbors

    def test_obstacles_hold_no_fluid(self):
        obstacles = np.zeros((8, 8))
        obstacles[3:5, 3:5] = 1.0
        lat = uniform_lattice(8, 8, obstacles)
        for _ in range(50):
            lat = step(lat, obstacles)
            assert not lat.f[:, obstacles > 0.5].any()

    def test_bounce_back_conserves_mass_with_obstacles(self):
        rng = np.random.default_rng(6)
        obstacles = np.zeros((12, 12))
        obstacles[4:8, 6] = 1.0
        lat = stable_random_lattice(rng, 12, 12)
        lat.f[:, obstacles > 0.5] = 0.0
        total0 = lat.total()
        for _ in range(100):
            lat = step(lat, obstacles)
        assert lat.total() == pytest.approx(total0, rel=1e-12)

    def test_velocity_blowup_detected(self):
        f = equilibrium(1.0, np.zeros(2))[:, None, None] * np.ones((9, 5, 5))
        f[1, 2, 2] += 2.0  # violent momentum spike
        with pytest.raises(FluidInstability):
            step(Lattice(f), np.zeros((5, 5)), step_index=7)

    def test_source_on_obstacle_rejected(self):
        obstacles = np.zeros((5, 5))
        obstacles[2, 2] = 1.0
        lat = uniform_lattice(5, 5, obstacles)
        src = np.zeros((5, 5))
        src[2, 2] = 0.05
        with pytest.raises(ValueError):
            step(lat, obstacles, src)

    def test_tau_bound(self):
        with pytest.raises(ValueError):
            Lattice(np.zeros((9, 4, 4)), tau=0.5)


class TestAdvectScalar:
    def test_zero_velocity_is_identity(self):
        rng = np.random.default_rng(7)
        n = rng.random((6, 8))
        out = advect_scalar(n, np.zeros((2, 6, 8)), np.zeros((6, 8)))
        np.testing.assert_array_equal(out, n)

    def test_spike_translates_with_uniform_flow(self):
        n = np.zeros((5, 12))
        n[2, 3] = 1.0
        u = np.zeros((2, 5, 12))
        u[0] = 0.2
        for _ in range(5):
            n = advect_scalar(n, u, np.zeros((5, 12)))
        xs = np.arange(12)
        com = (n.sum(axis=0) * xs).sum() / n.sum()
        assert com == pytest.approx(4.0, abs=0.05)

    def test_matches_reference_donor_cell_script(self):
        rng = np.random.default_rng(8)
        h, w = 5, 7
        n = rng.random((h, w))
        obstacles = np.zeros((h, w))
        obstacles[2, 3] = 1.0
        n[2, 3] = 0.0
        u = 0.3 * rng.uniform(-1, 1, (2, h, w))

        def reference(n, u, solid):
            flux_into = np.zeros_like(n)
            flux_out = np.zeros_like(n)
            fx = np.zeros((h, w - 1))
            fy = np.zeros((h - 1, w))
            for y in range(h):
                for x in range(w - 1):
                    if solid[y, x] or solid[y, x + 1]:
                        continue
                    uf = 0.5 * (u[0, y, x] + u[0, y, x + 1])
                    fx[y, x] = uf * (n[y, x] if uf > 0 else n[y, x + 1])
            for y in range(h - 1):
                for x in range(w):
                    if solid[y, x] or solid[y + 1, x]:
                        continue
                    uf = 0.5 * (u[1, y, x] + u[1, y + 1, x])
                    fy[y, x] = uf * (n[y, x] if uf > 0 else n[y + 1, x])
            out = np.zeros_like(n)
            for y in range(h):
                for x in range(w - 1):
                    out[y, x] += max(fx[y, x], 0)
                    out[y, x + 1] += max(-fx[y, x], 0)
            for y in range(h - 1):
                for x in range(w):
                    out[y, x] += max(fy[y, x], 0)
                    out[y + 1, x] += max(-fy[y, x], 0)
            scale = np.where(out > n, n / np.maximum(out, 1e-300), 1.0)
            res = n.copy()
            for y in range(h):
                for x in range(w - 1):
                    f = fx[y, x] * (scale[y, x] if fx[y, x] > 0 else scale[y, x + 1])
                    res[y, x] -= f
                    res[y, x + 1] += f
            for y in range(h - 1):
                for x in range(w):
                    f = fy[y, x] * (scale[y, x] if fy[y, x] > 0 else scale[y + 1, x])
                    res[y, x] -= f
                    res[y + 1, x] += f
            return np.maximum(res, 0.0)

        got = advect_scalar(n, u, obstacles)
        np.testing.assert_allclose(got, reference(n, u, obstacles > 0.5), atol=1e-12)

    def test_conservation_and_positivity_fuzzed(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            h, w = int(rng.integers(3, 9)), int(rng.integers(3, 9))
            n = rng.random((h, w)) * (rng.random((h, w)) < 0.7)
            obstacles = (rng.random((h, w)) < 0.1).astype(float)
            n[obstacles > 0.5] = 0.0
            u = 0.5 * rng.uniform(-1, 1, (2, h, w))
            out = advect_scalar(n, u, obstacles)
            assert out.min() >= 0.0
            assert out.sum() == pytest.approx(n.sum(), rel=1e-12, abs=1e-12)

    def test_cfl_violation_raises(self):
        n = np.ones((4, 4))
        u = np.zeros((2, 4, 4))
        u[0] = 0.7
        with pytest.raises(ValueError):
            advect_scalar(n, u, np.zeros((4, 4)))

    def test_no_flux_into_obstacles(self):
        n = np.zeros((3, 5))
        n[1, 1] = 1.0
        obstacles = np.zeros((3, 5))
        obstacles[1, 2] = 1.0
        u = np.zeros((2, 3, 5))
        u[0] = 0.4
        out = advect_scalar(n, u, obstacles)
        assert out[1, 2] == 0.0
        assert out.sum() == pytest.approx(1.0, rel=1e-12)
