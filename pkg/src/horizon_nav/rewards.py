"""Reward shaping for the horizon-selection policy.

The per-step reward decomposes into five parts: a terminal bonus/penalty,
potential-based progress shaping, a kinematic penalty on aggressive or
backward commands, a horizon term that favors long lookaheads, and a
visibility-social term that flips sign depending on whether the visible crowd
is mostly non-cooperative.  The decomposition always sums exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .sensing import PedestrianObservation
from .world import Control, WorldState


class Outcome(enum.Enum):
    NONE = "none"
    GOAL = "goal"
    COLLISION = "collision"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class RewardCoeffs:
    lambda_h: float = 0.01
    lambda_pot: float = 2.0
    lambda_r: float = 0.05
    lambda_v: float = 0.25
    # high branch discourages long horizons in mostly non-cooperative crowds,
    # low branch mildly encourages them otherwise
    lambda_high: float = -0.1
    lambda_low: float = 0.05
    eta_high: float = 1.0
    eta_low: float = 1.0
    h_max: int = 10
    goal_reward: float = 10.0
    failure_penalty: float = -20.0

    def __post_init__(self):
        if self.h_max < 1:
            raise ValueError("h_max must be >= 1")
        for name in ("lambda_h", "lambda_pot", "lambda_r", "lambda_v"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class RewardBreakdown:
    r_term: float
    r_pot: float
    r_kin: float
    r_horizon: float
    r_vis_social: float
    r_total: float


def noncoop_fraction(obs: list[PedestrianObservation]) -> float:
    """Fraction of visible pedestrians labeled non-cooperative; 0 if none."""
    if not obs:
        return 0.0
    return sum(1 for o in obs if o.coop_label == 0) / len(obs)


def compute_reward(prev_world: WorldState, world: WorldState, u: Control,
                   h: int, obs: list[PedestrianObservation],
                   outcome: Outcome, coeffs: RewardCoeffs) -> RewardBreakdown:
    """Per-step reward with its full decomposition.

    `obs` holds the currently visible pedestrians with their hard cooperation
    labels; the no-coop fraction of an empty view is 0, which routes the
    visibility-social term into the low branch.
    """
    if not 1 <= h <= coeffs.h_max:
        raise ValueError(f"horizon {h} outside [1, {coeffs.h_max}]")

    if outcome is Outcome.GOAL:
        r_term = coeffs.goal_reward
    elif outcome in (Outcome.COLLISION, Outcome.TIMEOUT):
        r_term = coeffs.failure_penalty
    else:
        r_term = 0.0

    phi_prev = float(np.linalg.norm(prev_world.robot.position - prev_world.robot.goal))
    phi = float(np.linalg.norm(world.robot.position - world.robot.goal))
    r_pot = -coeffs.lambda_pot * (phi - phi_prev)

    r_kin = -coeffs.lambda_r * u.w ** 2 - coeffs.lambda_v * max(0.0, -u.v)

    r_horizon = -coeffs.lambda_h * (coeffs.h_max - h)

    rho = noncoop_fraction(obs)
    if rho > 0.5:
        r_vis = coeffs.lambda_high * h ** coeffs.eta_high * rho
    else:
        r_vis = coeffs.lambda_low * h ** coeffs.eta_low * (1.0 - rho)

    total = r_term + r_pot + r_kin + r_horizon + r_vis
    return RewardBreakdown(r_term=r_term, r_pot=r_pot, r_kin=r_kin,
                           r_horizon=r_horizon, r_vis_social=r_vis,
                           r_total=total)
