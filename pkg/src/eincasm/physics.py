"""The per-cell economy: costs, uptake, pressure forcing, and the
constraint pipeline that turns desired changes into paid-for ones.

Every operation here is a pure elementwise function of a single cell's
state — no cross-cell reads — so cells may be processed in any order or
all at once as arrays. The functional forms:

* pressure forcing  rho = dR_applied / max(v, v_min), later capped to
  +-rho_cap before injection into the fluid;
* movement cost     alpha * |dR|, paid in cell mass;
* growth cost       beta * max(dM, 0), paid in nutrient;
* uptake            gamma * F while the cell has at least m_min mass
  (food is never depleted by uptake; only scheduled perturbations touch
  statics);
* mass-to-nutrient conversion is lossless at the growth exchange rate
  beta, so a grow-then-convert round trip moves no energy.

The energy ledger E = N + beta * M obeys, per constrain call,
dE = uptake - beta * poison_loss - beta * movement_mass_spent, exactly up
to float rounding. Cell death (M dropping below m_min) converts the
residual mass to nutrient at rate beta and zeroes the reservoir, which
keeps the ledger exact and leaves the nutrient in place for the flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PhysicsParams:
    """Economy constants and clamps.

    alpha, beta, gamma are the movement, growth, and uptake rates; kappa
    bounds the reservoir per unit mass. delta_r_max/delta_m_max cap the
    squashed per-step proposals, rho_cap bounds the fluid forcing, and
    m_min is the smallest mass at which a cell still acts.
    """

    alpha: float = 0.2
    beta: float = 1.0
    gamma: float = 0.1
    kappa: float = 4.0
    v_min: float = 1e-3
    rho_cap: float = 0.1
    delta_r_max: float = 0.5
    delta_m_max: float = 0.5
    poison_rate: float = 0.2
    m_min: float = 1e-4

    def __post_init__(self):
        if min(self.alpha, self.gamma, self.kappa, self.v_min, self.poison_rate) < 0:
            raise ValueError("alpha, gamma, kappa, v_min, poison_rate must be nonnegative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if min(self.delta_r_max, self.delta_m_max, self.rho_cap) <= 0:
            raise ValueError("caps must be positive")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "kappa": self.kappa,
            "v_min": self.v_min,
            "rho_cap": self.rho_cap,
            "delta_r_max": self.delta_r_max,
            "delta_m_max": self.delta_m_max,
            "poison_rate": self.poison_rate,
            "m_min": self.m_min,
        }


@dataclass(frozen=True)
class UpdateProposal:
    """Squashed desired changes, |values| bounded by the per-step caps."""

    delta_r_desired: float
    delta_m_desired: float


@dataclass
class AppliedUpdate:
    """What a constrain call actually did. Scalar or arrays, matching input."""

    delta_r: object
    delta_m: object
    nutrient_spent: object
    mass_spent: object
    nutrient_gained_conversion: object
    uptake: object


def squash_outputs(raw_dr, raw_dm, p: PhysicsParams):
    """Bound raw CPPN outputs: delta = cap * tanh(raw)."""
    return p.delta_r_max * np.tanh(raw_dr), p.delta_m_max * np.tanh(raw_dm)


def uptake(food, mass, p: PhysicsParams):
    """Nutrient gained this step: gamma * F where the cell is alive, else 0."""
    return np.where(np.asarray(mass) >= p.m_min, p.gamma * np.asarray(food), 0.0)


def growth_cost(delta_m, p: PhysicsParams):
    """Nutrient cost of growth; shrinkage costs nothing here."""
    return p.beta * np.maximum(np.asarray(delta_m, dtype=np.float64), 0.0)


def movement_cost(delta_r, p: PhysicsParams):
    """Mass cost of a reservoir change: alpha * |dR|."""
    return p.alpha * np.abs(np.asarray(delta_r, dtype=np.float64))


def reservoir_pressure(v, delta_r_applied, p: PhysicsParams):
    """Fluid density source from a reservoir change: dR / max(v, v_min).

    The sign convention is "added to local fluid density": growth of the
    reservoir injects density (outward push), contraction withdraws it.
    Callers cap the result to +-rho_cap before handing it to the fluid.
    """
    return np.asarray(delta_r_applied, dtype=np.float64) / np.maximum(np.asarray(v, dtype=np.float64), p.v_min)


def convert_mass(delta_m_negative, p: PhysicsParams):
    """Nutrient gained by converting mass away: beta * |dM|, dM <= 0 only."""
    dm = np.asarray(delta_m_negative, dtype=np.float64)
    if (dm > 0).any():
        raise ValueError("convert_mass takes nonpositive mass changes")
    return p.beta * np.abs(dm)


def constrain(mass, reservoir, nutrient, food, poison, dr_desired, dm_desired, p: PhysicsParams):
    """Run the fixed constraint pipeline on one cell or elementwise arrays.

    Stage order (normative; outcomes depend on it when budgets bind):
      1. uptake        N += gamma * F if M >= m_min
      2. poison        M -= min(M, poison_rate * P)
      3. conversion    dM < 0: remove up to M, credit beta per unit to N
      4. growth        dM > 0: apply up to N / beta, debit beta per unit
      5. reservoir     dR clamped so the mass budget alpha*|dR| <= M holds
                       and R stays in [0, kappa * M_after_payment]; the
                       mass cost is then paid and R updated
      6. spill + death residual R above kappa * M is released freely (no
                       pressure, no cost); if M < m_min the cell dies: its
                       mass converts to nutrient at rate beta, R drops to 0

    Returns ``(AppliedUpdate, new_mass, new_reservoir, new_nutrient)``.
    AppliedUpdate.delta_r is the *paid* reservoir change from stage 5 —
    the quantity that drives pressure forcing — not the net change after
    spill or death. Everything clamps; nothing raises.
    """
    m = np.asarray(mass, dtype=np.float64).copy()
    r = np.asarray(reservoir, dtype=np.float64).copy()
    n = np.asarray(nutrient, dtype=np.float64).copy()
    f = np.asarray(food, dtype=np.float64)
    pz = np.asarray(poison, dtype=np.float64)
    dr_des = np.asarray(dr_desired, dtype=np.float64)
    dm_des = np.asarray(dm_desired, dtype=np.float64)

    gained = uptake(f, m, p)
    n += gained

    poison_loss = np.minimum(m, p.poison_rate * pz)
    m -= poison_loss

    removed = np.minimum(np.maximum(-dm_des, 0.0), m)
    m -= removed
    conversion_gain = p.beta * removed
    n += conversion_gain

    grown = np.minimum(np.maximum(dm_des, 0.0), n / p.beta)
    m += grown
    nutrient_spent = p.beta * grown
    n -= nutrient_spent

    # Reservoir clamp. Upper bound accounts for the mass that paying for
    # the change will burn: R + dR <= kappa * (M - alpha*dR) for dR > 0.
    budget = m / p.alpha if p.alpha > 0 else np.full_like(m, np.inf)
    hi = np.minimum(budget, np.maximum(p.kappa * m - r, 0.0) / (1.0 + p.kappa * p.alpha))
    lo = -np.minimum(r, budget)
    dr_applied = np.clip(dr_des, lo, hi)
    mass_spent = p.alpha * np.abs(dr_applied)
    m -= mass_spent
    m = np.maximum(m, 0.0)  # exact-budget payments can leave -1e-17 dust
    r += dr_applied

    # Free spill: stages 2-4 may have shrunk M after R was sized for it.
    r = np.minimum(r, p.kappa * m)
    r = np.maximum(r, 0.0)

    dead = m < p.m_min
    death_gain = np.where(dead, p.beta * m, 0.0)
    n += death_gain
    n = np.maximum(n, 0.0)
    m = np.where(dead, 0.0, m)
    r = np.where(dead, 0.0, r)

    applied = AppliedUpdate(
        delta_r=dr_applied,
        delta_m=grown - removed,
        nutrient_spent=nutrient_spent,
        mass_spent=mass_spent,
        nutrient_gained_conversion=conversion_gain + death_gain,
        uptake=gained,
    )
    return applied, m, r, n
