"""Helbing-Molnar social force model (pedestrian controller and robot baseline)."""

from __future__ import annotations

import math

import numpy as np

from .config import SfParams
from .world import AgentState, _stream


def social_force_velocity(agent: AgentState, neighbors: list[AgentState],
                          params: SfParams, dt: float, seed: int = 0) -> np.ndarray:
    """One social-force integration step; result speed capped at pref_speed.

    Goal attraction relaxes the velocity toward the preferred velocity;
    each neighbor repels with an exponential force A*exp((r_i+r_j-d)/B).
    Coincident positions (d == 0) get a repulsion direction drawn from a
    deterministic seed-keyed stream, which signals a degenerate overlap
    without breaking reproducibility.
    """
    force = (agent.pref_velocity() - agent.velocity) / params.relaxation_time
    for other in neighbors:
        offset = agent.position - other.position
        d = float(np.linalg.norm(offset))
        if d < 1e-12:
            rng = _stream(seed, 2, agent.id, other.id)
            phi = rng.uniform(0.0, 2.0 * math.pi)
            away = np.array([math.cos(phi), math.sin(phi)])
        else:
            away = offset / d
        magnitude = params.A * math.exp((agent.radius + other.radius - d) / params.B)
        force = force + magnitude * away

    vel = agent.velocity + dt * force
    speed = float(np.linalg.norm(vel))
    if speed > agent.pref_speed:
        vel = vel / speed * agent.pref_speed
    return vel
