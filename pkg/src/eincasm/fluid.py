"""D2Q9 lattice-Boltzmann fluid and the passive nutrient transport it drives.

Single-relaxation-time (BGK) collision, bounce-back no-slip walls at
obstacle cells and the grid boundary, and pressure coupling by isotropic
density injection: each cell's reservoir change adds w_i * rho_src to its
distributions instead of moving any boundary. Obstacle cells hold no
fluid (f = 0 there, always).

Direction set (ex, ey), matching the (x, y)/[y, x] convention used by the
rest of the package:

    0:( 0, 0)  1:( 1, 0)  2:( 0, 1)  3:(-1, 0)  4:( 0,-1)
    5:( 1, 1)  6:(-1, 1)  7:(-1,-1)  8:( 1,-1)

Nutrient is not an LBM species: it is advected as a conservative,
positivity-preserving donor-cell scalar by the velocity field, which keeps
its total exactly fixed and its values nonnegative by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EX = np.array([0, 1, 0, -1, 0, 1, -1, -1, 1])
EY = np.array([0, 0, 1, 0, -1, 1, 1, -1, -1])
WEIGHTS = np.array([4 / 9] + [1 / 9] * 4 + [1 / 36] * 4)
OPPOSITE = np.array([0, 3, 4, 1, 2, 7, 8, 5, 6])

RHO_FLOOR = 1e-9  # below this density the velocity is defined as zero
U_MAX = 0.3  # beyond low-Mach validity; the step aborts
NEGATIVE_TOL = -1e-12


class FluidInstability(RuntimeError):
    """The lattice left its stable regime; identifies where and when."""

    def __init__(self, reason: str, x: int, y: int, step: int | None = None):
        at = f" at step {step}" if step is not None else ""
        super().__init__(f"{reason} at cell ({x}, {y}){at}")
        self.x, self.y, self.step = x, y, step


@dataclass
class Lattice:
    """Distribution functions f (9, H, W) plus the BGK relaxation time."""

    f: np.ndarray
    tau: float = 0.8

    def __post_init__(self):
        if self.tau <= 0.5:
            raise ValueError(f"tau must exceed 0.5 for BGK stability, got {self.tau}")
        if self.f.ndim != 3 or self.f.shape[0] != 9:
            raise ValueError(f"f must have shape (9, H, W), got {self.f.shape}")

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.f.shape[1:]

    def total(self) -> float:
        return float(self.f.sum())

    def copy(self) -> "Lattice":
        return Lattice(self.f.copy(), self.tau)


@dataclass
class MacroscopicFields:
    rho: np.ndarray
    u: np.ndarray  # (2, H, W): u[0] = ux, u[1] = uy


def equilibrium(rho, u) -> np.ndarray:
    """Second-order equilibrium distributions for density rho, velocity u.

    Accepts scalars or grids; returns (9, ...) stacked along a new axis.
    f_eq_i = w_i * rho * (1 + 3 e.u + 4.5 (e.u)^2 - 1.5 |u|^2).
    """
    rho = np.asarray(rho, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    ux, uy = u[0], u[1]
    usq = ux * ux + uy * uy
    shape = np.broadcast(rho, ux).shape
    eu = EX.reshape((9,) + (1,) * len(shape)) * ux + EY.reshape((9,) + (1,) * len(shape)) * uy
    return WEIGHTS.reshape((9,) + (1,) * len(shape)) * rho * (1.0 + 3.0 * eu + 4.5 * eu * eu - 1.5 * usq)


def uniform_lattice(width: int, height: int, obstacles: np.ndarray | None = None,
                    rho0: float = 1.0, tau: float = 0.8) -> Lattice:
    """Fluid at rest at density rho0 on free cells, empty on obstacles."""
    f = np.ones((9, height, width)) * (WEIGHTS[:, None, None] * rho0)
    if obstacles is not None:
        f[:, np.asarray(obstacles) > 0.5] = 0.0
    return Lattice(f, tau)


def _moments(f: np.ndarray) -> MacroscopicFields:
    rho = f.sum(axis=0)
    mom_x = np.tensordot(EX, f, axes=(0, 0))
    mom_y = np.tensordot(EY, f, axes=(0, 0))
    safe = np.maximum(rho, RHO_FLOOR)
    u = np.stack([mom_x, mom_y]) / safe
    u[:, rho < RHO_FLOOR] = 0.0
    return MacroscopicFields(rho=rho, u=u)


def macroscopic(lat: Lattice) -> MacroscopicFields:
    """Density and velocity moments; u = 0 wherever rho < 1e-9."""
    return _moments(lat.f)


def step(lat: Lattice, obstacles: np.ndarray, sources: np.ndarray | None = None,
         step_index: int | None = None) -> Lattice:
    """One inject -> collide -> stream -> bounce-back cycle.

    ``sources`` is a per-cell density source (already capped by the
    caller, zero on obstacle cells); it is distributed isotropically as
    f_i += w_i * rho_src. Populations streaming into an obstacle cell or
    off the grid reverse direction in place (no-slip). Raises
    FluidInstability on negative/non-finite populations or |u| > 0.3.
    """
    h, w = lat.grid_shape
    solid = np.asarray(obstacles) > 0.5
    f = lat.f.copy()

    if sources is not None:
        src = np.asarray(sources, dtype=np.float64)
        if src.shape != (h, w):
            raise ValueError(f"sources shape {src.shape} does not match grid {(h, w)}")
        if (np.abs(src[solid]) > 0).any():
            raise ValueError("sources must be zero on obstacle cells")
        f += WEIGHTS[:, None, None] * src

    fields = _moments(f)
    speed = np.sqrt(fields.u[0] ** 2 + fields.u[1] ** 2)
    if (speed > U_MAX).any():
        y, x = np.unravel_index(int(np.argmax(speed)), speed.shape)
        raise FluidInstability(f"velocity {speed[y, x]:.3f} exceeds {U_MAX}", int(x), int(y), step_index)

    feq = equilibrium(fields.rho, fields.u)
    f += (feq - f) / lat.tau
    f[:, solid] = 0.0

    new = np.zeros_like(f)
    new[0] = f[0]
    for i in range(1, 9):
        dx, dy = int(EX[i]), int(EY[i])
        # Source/destination windows for an in-grid shift by (dx, dy).
        sx = slice(max(0, -dx), w - max(0, dx))
        dxs = slice(max(0, dx), w - max(0, -dx))
        sy = slice(max(0, -dy), h - max(0, dy))
        dys = slice(max(0, dy), h - max(0, -dy))
        blocked = np.ones((h, w), dtype=bool)  # off-grid destinations stay blocked
        blocked[sy, sx] = solid[dys, dxs]
        moving = f[i]
        new[i][dys, dxs] += (moving * ~blocked)[sy, sx]
        new[OPPOSITE[i]] += moving * blocked

    if not np.isfinite(new).all():
        bad = ~np.isfinite(new)
        _, y, x = np.unravel_index(int(np.argmax(bad)), new.shape)
        raise FluidInstability("non-finite population", int(x), int(y), step_index)
    if new.min() < NEGATIVE_TOL:
        _, y, x = np.unravel_index(int(np.argmin(new)), new.shape)
        raise FluidInstability(f"negative population {new.min():.3e}", int(x), int(y), step_index)
    return Lattice(new, lat.tau)


def advect_scalar(n: np.ndarray, u: np.ndarray, obstacles: np.ndarray, dt: float = 1.0) -> np.ndarray:
    """Donor-cell upwind transport of a nonnegative scalar field.

    Face velocity is the mean of the two adjacent cell velocities; the
    upwind cell donates. Faces touching an obstacle or the grid edge carry
    no flux. Each cell's total outflow is limited to its content, which
    preserves nonnegativity without breaking conservation (the receiving
    fluxes are scaled identically).

    Requires the CFL bound max(|ux|, |uy|) * dt <= 0.5.
    """
    n = np.asarray(n, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    solid = np.asarray(obstacles) > 0.5
    if float(np.max(np.abs(u), initial=0.0)) * dt > 0.5 + 1e-12:
        raise ValueError(f"CFL violated: max|u|*dt = {np.max(np.abs(u)) * dt:.3f} > 0.5")

    ux, uy = u[0], u[1]
    # Face-normal velocities; zero where either side is solid.
    ufx = 0.5 * (ux[:, :-1] + ux[:, 1:])
    ufx[solid[:, :-1] | solid[:, 1:]] = 0.0
    ufy = 0.5 * (uy[:-1, :] + uy[1:, :])
    ufy[solid[:-1, :] | solid[1:, :]] = 0.0

    flux_x = dt * np.where(ufx > 0, ufx * n[:, :-1], ufx * n[:, 1:])
    flux_y = dt * np.where(ufy > 0, ufy * n[:-1, :], ufy * n[1:, :])

    # Limit each donor's total outflow to what it holds.
    out = np.zeros_like(n)
    out[:, :-1] += np.maximum(flux_x, 0.0)
    out[:, 1:] += np.maximum(-flux_x, 0.0)
    out[:-1, :] += np.maximum(flux_y, 0.0)
    out[1:, :] += np.maximum(-flux_y, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(out > n, n / np.maximum(out, 1e-300), 1.0)
    flux_x = np.where(flux_x > 0, flux_x * scale[:, :-1], flux_x * scale[:, 1:])
    flux_y = np.where(flux_y > 0, flux_y * scale[:-1, :], flux_y * scale[1:, :])

    result = n.copy()
    result[:, :-1] -= flux_x
    result[:, 1:] += flux_x
    result[:-1, :] -= flux_y
    result[1:, :] += flux_y
    return np.maximum(result, 0.0)
