"""Ground-truth 2D crowd world: agent types, spawning, dynamics, stepping.

All randomness goes through numpy's Philox counter-based generator so that
trajectories are bit-identical across runs and platforms for a fixed
(config, seed, control sequence).  Sub-streams (spawning, per-pedestrian goal
recycling, degenerate-overlap tie-breaks) are keyed explicitly so results do
not depend on call order or pedestrian iteration order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .config import SimConfig


class Behavior(enum.Enum):
    COOPERATIVE = "cooperative"
    NONCOOPERATIVE = "noncooperative"


class Controller(enum.Enum):
    ORCA = "orca"
    SOCIAL_FORCE = "social_force"


class ScenarioGenerationError(RuntimeError):
    """Raised when rejection sampling cannot place all agents (config too dense)."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class AgentState:
    position: np.ndarray          # (2,) m
    velocity: np.ndarray          # (2,) m/s
    radius: float
    goal: np.ndarray              # (2,) m
    pref_speed: float
    behavior: Behavior
    controller: Controller
    id: int

    def pref_velocity(self) -> np.ndarray:
        to_goal = self.goal - self.position
        dist = float(np.linalg.norm(to_goal))
        if dist < 1e-12:
            return np.zeros(2)
        return to_goal / dist * self.pref_speed


@dataclass(frozen=True)
class RobotState:
    position: np.ndarray          # (2,) m
    heading: float                # rad, in (-pi, pi]
    velocity: np.ndarray          # (2,) m/s
    goal: np.ndarray              # (2,) m
    ref_speed: float
    radius: float


@dataclass(frozen=True)
class Control:
    v: float                      # forward speed, m/s
    w: float                      # yaw rate, rad/s


@dataclass(frozen=True)
class WorldState:
    robot: RobotState
    pedestrians: tuple[AgentState, ...]
    time: float
    step_index: int
    rng_seed: int


@dataclass(frozen=True)
class CollisionReport:
    ped_id: int
    penetration_depth: float


def _stream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic Philox stream for a (seed, key...) tuple."""
    fold = 0
    for k in key:
        fold = (fold * 0x100000001B3 + (k & (2**64 - 1))) & (2**64 - 1)
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), fold]))


def spawn_scenario(config: SimConfig, seed: int) -> WorldState:
    """Sample a circle-crossing scenario, deterministic in (config, seed).

    The robot spawns on the spawn circle with its goal at the antipode.
    Pedestrians spawn on the circle with goals near their antipodes (both
    perturbed uniformly in a 0.5 m disc); overlapping placements are
    rejection-sampled with a minimum center distance of sum-of-radii + 0.2 m.
    """
    rng = _stream(seed, 0)
    R = config.arena_spawn_radius

    robot_angle = rng.uniform(0.0, 2.0 * math.pi)
    robot_pos = R * np.array([math.cos(robot_angle), math.sin(robot_angle)])
    robot_goal = -robot_pos
    heading = wrap_angle(math.atan2(*(robot_goal - robot_pos)[::-1]))
    robot = RobotState(position=robot_pos, heading=heading,
                       velocity=np.zeros(2), goal=robot_goal,
                       ref_speed=config.robot_ref_speed, radius=config.robot_radius)

    placed: list[AgentState] = []
    n_total = config.n_pedestrians
    attempts = 0
    for i in range(n_total):
        behavior = Behavior.COOPERATIVE if i < config.n_cooperative else Behavior.NONCOOPERATIVE
        while True:
            attempts += 1
            if attempts > 10_000:
                raise ScenarioGenerationError(
                    f"could not place pedestrian {i} after 10000 attempts; "
                    "config is over-dense for the spawn circle")
            angle = rng.uniform(0.0, 2.0 * math.pi)
            pos = R * np.array([math.cos(angle), math.sin(angle)]) + _disc_sample(rng, 0.5)
            min_dist_robot = config.ped_radius + config.robot_radius + 0.2
            if np.linalg.norm(pos - robot_pos) < min_dist_robot:
                continue
            min_dist_ped = 2.0 * config.ped_radius + 0.2
            if any(np.linalg.norm(pos - other.position) < min_dist_ped for other in placed):
                continue
            break
        goal = -R * np.array([math.cos(angle), math.sin(angle)]) + _disc_sample(rng, 0.5)
        placed.append(AgentState(
            position=pos, velocity=np.zeros(2), radius=config.ped_radius,
            goal=goal, pref_speed=config.ped_pref_speed,
            behavior=behavior, controller=Controller.ORCA, id=i))

    return WorldState(robot=robot, pedestrians=tuple(placed),
                      time=0.0, step_index=0, rng_seed=seed)


def _disc_sample(rng: np.random.Generator, radius: float) -> np.ndarray:
    """Uniform sample in a disc of the given radius."""
    r = radius * math.sqrt(rng.uniform(0.0, 1.0))
    phi = rng.uniform(0.0, 2.0 * math.pi)
    return r * np.array([math.cos(phi), math.sin(phi)])


def unicycle_step(state: RobotState, u: Control, dt: float) -> RobotState:
    """Integrate unicycle kinematics for one step (forward-Euler in position)."""
    c, s = math.cos(state.heading), math.sin(state.heading)
    new_pos = state.position + np.array([u.v * c, u.v * s]) * dt
    new_heading = wrap_angle(state.heading + u.w * dt)
    new_vel = np.array([u.v * math.cos(new_heading), u.v * math.sin(new_heading)])
    return replace(state, position=new_pos, heading=new_heading, velocity=new_vel)


def detect_collision(world: WorldState) -> CollisionReport | None:
    """Deepest robot-pedestrian overlap, or None; ties break to lowest ped id."""
    worst: CollisionReport | None = None
    for ped in world.pedestrians:
        dist = float(np.linalg.norm(world.robot.position - ped.position))
        depth = world.robot.radius + ped.radius - dist
        if depth > 0 and (worst is None or depth > worst.penetration_depth + 1e-15):
            worst = CollisionReport(ped_id=ped.id, penetration_depth=depth)
    return worst


def _robot_as_agent(robot: RobotState) -> AgentState:
    return AgentState(position=robot.position, velocity=robot.velocity,
                      radius=robot.radius, goal=robot.goal,
                      pref_speed=robot.ref_speed,
                      behavior=Behavior.NONCOOPERATIVE,
                      controller=Controller.ORCA, id=-1)


def step_world(world: WorldState, robot_control: Control, config: SimConfig) -> WorldState:
    """Advance the world one step.

    All pedestrian controllers read the pre-step snapshot (simultaneous
    update); cooperative pedestrians see the robot as a neighbor,
    non-cooperative ones ignore it.  Pedestrians that reach their goal are
    recycled to a fresh goal on the spawn circle so the crowd never empties.
    """
    from .orca import orca_velocity
    from .social_force import social_force_velocity

    robot_agent = _robot_as_agent(world.robot)
    v = min(max(robot_control.v, config.v_min), config.v_max)
    w = min(max(robot_control.w, -config.w_max), config.w_max)
    new_robot = unicycle_step(world.robot, Control(v, w), config.dt)

    new_peds = []
    for ped in world.pedestrians:
        neighbors = [other for other in world.pedestrians if other.id != ped.id]
        if ped.behavior is Behavior.COOPERATIVE:
            neighbors.append(robot_agent)
        if ped.controller is Controller.ORCA:
            vel = orca_velocity(ped, neighbors, config.orca_params, config.dt,
                                heading_rate_cap=config.w_max)
        else:
            vel = social_force_velocity(ped, neighbors, config.sf_params, config.dt,
                                        seed=world.rng_seed)
        pos = ped.position + vel * config.dt
        goal = ped.goal
        if np.linalg.norm(pos - goal) < 0.3:
            goal = _recycled_goal(world.rng_seed, ped.id, world.step_index, config)
        new_peds.append(replace(ped, position=pos, velocity=vel, goal=goal))

    return WorldState(robot=new_robot, pedestrians=tuple(new_peds),
                      time=(world.step_index + 1) * config.dt,
                      step_index=world.step_index + 1,
                      rng_seed=world.rng_seed)


def _recycled_goal(seed: int, ped_id: int, step_index: int, config: SimConfig) -> np.ndarray:
    """New goal on the spawn circle, keyed so it is order-independent."""
    rng = _stream(seed, 1, ped_id, step_index)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    R = config.arena_spawn_radius
    return R * np.array([math.cos(angle), math.sin(angle)])
