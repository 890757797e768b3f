"""Optimal Reciprocal Collision Avoidance for the simulated pedestrians.

Standard two-phase solver: each neighbor contributes a half-plane constraint
on velocity (reciprocal: the agent takes half the avoidance responsibility),
then the velocity closest to the preferred velocity is found by incremental
linear programming inside the max-speed disc.  If the half-planes are
infeasible, the 3D fallback picks the velocity that least violates them
(safest velocity), so the solver never fails.

Two local conventions beyond plain ORCA:
- curvature constraint: the returned velocity direction may turn at most
  heading_rate_cap * dt per step relative to the agent's current velocity;
- right-hand tie-break: when any constraint is present, the preferred
  velocity is rotated by a small fixed clockwise angle, which breaks perfect
  head-on symmetry deterministically (both agents pass on their right).
"""

from __future__ import annotations

import math

import numpy as np

from .config import OrcaParams
from .world import AgentState

_EPS = 1e-10
#: clockwise bias applied to the preferred velocity when constraints exist
_RIGHT_HAND_BIAS = 0.01


def _det(a, b) -> float:
    return a[0] * b[1] - a[1] * b[0]


def _abs_sq(v) -> float:
    return float(v[0] * v[0] + v[1] * v[1])


def _normalize(v: np.ndarray) -> np.ndarray:
    n = math.hypot(v[0], v[1])
    if n < _EPS:
        return np.zeros(2)
    return v / n


def _rotate(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


class _Line:
    __slots__ = ("point", "direction")

    def __init__(self, point, direction):
        self.point = point
        self.direction = direction


def _orca_lines(agent: AgentState, neighbors: list[AgentState],
                time_horizon: float, dt: float) -> list[_Line]:
    lines = []
    inv_tau = 1.0 / time_horizon
    for other in neighbors:
        rel_pos = other.position - agent.position
        rel_vel = agent.velocity - other.velocity
        dist_sq = _abs_sq(rel_pos)
        combined_r = agent.radius + other.radius
        combined_r_sq = combined_r * combined_r

        if dist_sq > combined_r_sq:
            w = rel_vel - inv_tau * rel_pos
            w_len_sq = _abs_sq(w)
            dot1 = w @ rel_pos
            if dot1 < 0.0 and dot1 * dot1 > combined_r_sq * w_len_sq:
                # project on cut-off circle
                w_len = math.sqrt(w_len_sq)
                unit_w = w / w_len
                direction = np.array([unit_w[1], -unit_w[0]])
                u = (combined_r * inv_tau - w_len) * unit_w
            else:
                # project on a leg of the velocity obstacle cone
                leg = math.sqrt(dist_sq - combined_r_sq)
                if _det(rel_pos, w) > 0.0:
                    direction = np.array([
                        rel_pos[0] * leg - rel_pos[1] * combined_r,
                        rel_pos[0] * combined_r + rel_pos[1] * leg]) / dist_sq
                else:
                    direction = -np.array([
                        rel_pos[0] * leg + rel_pos[1] * combined_r,
                        -rel_pos[0] * combined_r + rel_pos[1] * leg]) / dist_sq
                dot2 = rel_vel @ direction
                u = dot2 * direction - rel_vel
        else:
            # already overlapping: resolve within one time step
            inv_dt = 1.0 / dt
            w = rel_vel - inv_dt * rel_pos
            w_len = math.hypot(w[0], w[1])
            if w_len < _EPS:
                # coincident projection; push apart along relative position
                unit_w = -_normalize(rel_pos)
                if _abs_sq(unit_w) < _EPS:
                    unit_w = np.array([1.0, 0.0])
                w_len = 0.0
            else:
                unit_w = w / w_len
            direction = np.array([unit_w[1], -unit_w[0]])
            u = (combined_r * inv_dt - w_len) * unit_w

        lines.append(_Line(agent.velocity + 0.5 * u, direction))
    return lines


def _linear_program_1(lines, line_no, radius, opt_vel, direction_opt):
    line = lines[line_no]
    dot = line.point @ line.direction
    discriminant = dot * dot + radius * radius - _abs_sq(line.point)
    if discriminant < 0.0:
        return None
    sqrt_disc = math.sqrt(discriminant)
    t_left = -dot - sqrt_disc
    t_right = -dot + sqrt_disc

    for i in range(line_no):
        denominator = _det(line.direction, lines[i].direction)
        numerator = _det(lines[i].direction, line.point - lines[i].point)
        if abs(denominator) <= _EPS:
            if numerator < 0.0:
                return None
            continue
        t = numerator / denominator
        if denominator >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)

    if t_left > t_right:
        return None

    if direction_opt:
        t = t_right if opt_vel @ line.direction > 0.0 else t_left
    else:
        t = line.direction @ (opt_vel - line.point)
        t = min(max(t, t_left), t_right)
    return line.point + t * line.direction


def _linear_program_2(lines, radius, opt_vel, direction_opt):
    """Returns (index of failing line or len(lines), result velocity)."""
    if direction_opt:
        result = opt_vel * radius
    elif _abs_sq(opt_vel) > radius * radius:
        result = _normalize(opt_vel) * radius
    else:
        result = np.array(opt_vel, dtype=float)

    for i, line in enumerate(lines):
        if _det(line.direction, line.point - result) > 0.0:
            new_result = _linear_program_1(lines, i, radius, opt_vel, direction_opt)
            if new_result is None:
                return i, result
            result = new_result
    return len(lines), result


def _linear_program_3(lines, begin_line, radius, result):
    """Least-violating velocity when the half-planes are infeasible."""
    distance = 0.0
    for i in range(begin_line, len(lines)):
        if _det(lines[i].direction, lines[i].point - result) > distance:
            proj_lines = []
            for j in range(i):
                determinant = _det(lines[i].direction, lines[j].direction)
                if abs(determinant) <= _EPS:
                    if lines[i].direction @ lines[j].direction > 0.0:
                        continue
                    point = 0.5 * (lines[i].point + lines[j].point)
                else:
                    ratio = _det(lines[j].direction,
                                 lines[i].point - lines[j].point) / determinant
                    point = lines[i].point + ratio * lines[i].direction
                direction = _normalize(lines[j].direction - lines[i].direction)
                proj_lines.append(_Line(point, direction))

            opt_dir = np.array([-lines[i].direction[1], lines[i].direction[0]])
            fail, new_result = _linear_program_2(proj_lines, radius, opt_dir, True)
            if fail >= len(proj_lines):
                result = new_result
            distance = _det(lines[i].direction, lines[i].point - result)
    return result


def orca_velocity(agent: AgentState, neighbors: list[AgentState],
                  params: OrcaParams, dt: float,
                  heading_rate_cap: float | None = None) -> np.ndarray:
    """ORCA-optimal velocity for one agent against the given neighbor set.

    Neighbors beyond neighbor_dist are ignored; at most max_neighbors nearest
    ones (ties broken by id) constrain the velocity.  The result speed never
    exceeds the agent's preferred speed.
    """
    candidates = []
    for other in neighbors:
        d = float(np.linalg.norm(other.position - agent.position))
        if d <= params.neighbor_dist:
            candidates.append((d, other.id, other))
    candidates.sort(key=lambda item: (item[0], item[1]))
    near = [item[2] for item in candidates[:params.max_neighbors]]

    pref_vel = agent.pref_velocity()
    if not near:
        return pref_vel

    lines = _orca_lines(agent, near, params.time_horizon, dt)
    opt_vel = _rotate(pref_vel, -_RIGHT_HAND_BIAS)
    fail, result = _linear_program_2(lines, agent.pref_speed, opt_vel, False)
    if fail < len(lines):
        result = _linear_program_3(lines, fail, agent.pref_speed, result)

    if heading_rate_cap is not None:
        result = _cap_turn(agent.velocity, result, heading_rate_cap * dt)

    speed = math.hypot(result[0], result[1])
    if speed > agent.pref_speed:
        result = result / speed * agent.pref_speed
    return result


def _cap_turn(current_vel: np.ndarray, new_vel: np.ndarray, max_turn: float) -> np.ndarray:
    """Limit the direction change between consecutive velocities (curvature cap)."""
    cur_speed = math.hypot(current_vel[0], current_vel[1])
    new_speed = math.hypot(new_vel[0], new_vel[1])
    if cur_speed < 1e-6 or new_speed < 1e-6:
        return new_vel
    cur_angle = math.atan2(current_vel[1], current_vel[0])
    new_angle = math.atan2(new_vel[1], new_vel[0])
    delta = math.remainder(new_angle - cur_angle, 2.0 * math.pi)
    if abs(delta) <= max_turn:
        return new_vel
    capped = cur_angle + math.copysign(max_turn, delta)
    return new_speed * np.array([math.cos(capped), math.sin(capped)])
