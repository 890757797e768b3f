"""Benchmark harness: episode execution, metrics, horizon sweeps, rendering.

An episode runs the full sense/infer/decide/plan loop per step: occlusion-
limited sensing, cooperation inference, horizon selection (learned policy or
fixed), barrier-constrained MPC, then a simultaneous world update.  Baselines
replace the planner with ORCA or social-force velocities mapped onto the
unicycle.  Metrics follow the usual crowd-navigation set: success, collision
and timeout rates, average navigation time and trajectory length over
successes, and the average intrusion ratio (fraction of steps spent inside a
pedestrian's social safety distance, judged with ground-truth labels).
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SCENARIO_PRESETS, SimConfig, scenario_config
from .coopnet import CoopNetParams, CoopPredictor
from .mpc import (
    MpcPedestrian, MpcStatus, MpcWeights, SafetyMargins, barrier_value,
    build_mpc, d_safety, solve_mpc,
)
from .orca import orca_velocity
from .rewards import Outcome, RewardBreakdown, RewardCoeffs, compute_reward
from .rl import PolicyParams, observation_features, policy_forward
from .sensing import (
    TrajectoryHistory, observe, robot_node_features, to_robot_frame,
)
from .social_force import social_force_velocity
from .world import (
    Behavior, Control, WorldState, _robot_as_agent, detect_collision,
    spawn_scenario, step_world, wrap_angle,
)

SUCCESS_RADIUS = 0.3


class StackVariant(enum.Enum):
    FULL = "full"
    FIXED_HORIZON = "fixed"
    NO_COOP = "nocoop"
    ORCA_BASELINE = "orca"
    SF_BASELINE = "sf"


@dataclass(frozen=True)
class PolicyStack:
    variant: StackVariant
    coop_params: CoopNetParams | None = None
    policy_params: PolicyParams | None = None
    fixed_h: int | None = None
    h_max: int = 10

    def __post_init__(self):
        if self.variant is StackVariant.FULL:
            if self.coop_params is None or self.policy_params is None:
                raise ValueError("Full stack needs coop and policy params")
        if self.variant is StackVariant.FIXED_HORIZON:
            if self.fixed_h is None or not 1 <= self.fixed_h <= self.h_max:
                raise ValueError("fixed_h must lie in [1, h_max]")
        if self.variant is StackVariant.NO_COOP and self.policy_params is None:
            raise ValueError("NoCoop stack needs policy params")


class EpisodeOutcome(enum.Enum):
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"


@dataclass
class StepRecord:
    step_index: int
    digest: str
    robot_position: np.ndarray
    ped_positions: np.ndarray
    visible: list[int]
    coop_probs: dict[int, float]
    h: int
    control: Control
    reward: RewardBreakdown
    min_barrier: float
    intrusion: bool
    degraded: bool


@dataclass
class EpisodeLog:
    scenario: str
    seed: int
    outcome: EpisodeOutcome
    duration: float               # s
    path_length: float            # m
    steps: list[StepRecord]
    ped_labels: list[int]         # ground truth, 1 = cooperative
    goal: np.ndarray
    sensing_range: float


def _world_digest(world: WorldState) -> str:
    payload = world.robot.position.tobytes() + bytes([world.step_index % 256])
    for ped in world.pedestrians:
        payload += ped.position.tobytes()
    return hashlib.sha1(payload).hexdigest()[:12]


def holonomic_to_control(robot, velocity: np.ndarray,
                         config: SimConfig) -> Control:
    """Map a desired planar velocity to the nearest feasible (v, w)."""
    speed = float(np.linalg.norm(velocity))
    if speed < 1e-9:
        return Control(0.0, 0.0)
    err = wrap_angle(math.atan2(velocity[1], velocity[0]) - robot.heading)
    w = float(np.clip(err / config.dt, -config.w_max, config.w_max))
    v = float(np.clip(speed * math.cos(err), 0.0, config.v_max))
    return Control(v, w)


def _true_label(behavior: Behavior) -> int:
    return 1 if behavior is Behavior.COOPERATIVE else 0


def _min_true_barrier(world: WorldState, margins: SafetyMargins) -> float:
    values = [barrier_value(world.robot.position, ped.position,
                            world.robot.radius, ped.radius,
                            _true_label(ped.behavior), margins)
              for ped in world.pedestrians]
    return min(values) if values else math.inf


def _mpc_pedestrians(world: WorldState, visible: list[int],
                     coop: dict[int, tuple[float, int]]) -> list[MpcPedestrian]:
    by_id = {p.id: p for p in world.pedestrians}
    peds = []
    for pid in visible:
        ped = by_id[pid]
        prob, label = coop.get(pid, (0.0, 0))
        peds.append(MpcPedestrian(position=ped.position.copy(),
                                  velocity=ped.velocity.copy(),
                                  radius=ped.radius, coop_prob=prob,
                                  coop_label=label))
    return peds


def run_episode(config: SimConfig, stack: PolicyStack, seed: int,
                margins: SafetyMargins | None = None,
                weights: MpcWeights | None = None,
                coeffs: RewardCoeffs | None = None,
                scenario: str = "custom") -> EpisodeLog:
    """Run one episode to termination; fully deterministic in (config, seed)."""
    margins = margins or SafetyMargins()
    weights = weights or MpcWeights()
    coeffs = coeffs or RewardCoeffs(h_max=stack.h_max)

    world = spawn_scenario(config, seed)
    ped_labels = [_true_label(p.behavior) for p in world.pedestrians]
    history = TrajectoryHistory()
    predictor = CoopPredictor(stack.coop_params) \
        if stack.coop_params is not None else None
    warm_start = None
    max_steps = int(round(config.timeout / config.dt))
    steps: list[StepRecord] = []
    path_length = 0.0
    outcome = EpisodeOutcome.TIMEOUT

    for step_index in range(max_steps):
        visible = observe(world, config)
        history.update(world, visible)

        if stack.variant is StackVariant.NO_COOP:
            coop = {pid: (0.0, 0) for pid in visible}
        elif predictor is not None:
            coop = predictor.infer(history, visible)
        else:
            coop = {pid: (0.5, 1) for pid in visible}

        obs = to_robot_frame(world, visible)
        for o in obs:
            o.coop_prob, o.coop_label = coop[o.ped_id]

        degraded = False
        if stack.variant in (StackVariant.ORCA_BASELINE, StackVariant.SF_BASELINE):
            h = 1
            agent = _robot_as_agent(world.robot)
            neighbors = list(world.pedestrians)
            if stack.variant is StackVariant.ORCA_BASELINE:
                vel = orca_velocity(agent, neighbors, config.orca_params,
                                    config.dt)
            else:
                vel = social_force_velocity(agent, neighbors, config.sf_params,
                                            config.dt, seed=seed)
            control = holonomic_to_control(world.robot, vel, config)
        else:
            if stack.variant is StackVariant.FIXED_HORIZON:
                h = stack.fixed_h
            else:
                feats = observation_features(obs,
                                             robot_node_features(world.robot))
                probs, _, _ = policy_forward(*feats, stack.policy_params)
                h = int(np.argmax(probs)) + 1
            problem = build_mpc(world.robot, _mpc_pedestrians(world, visible,
                                                              coop),
                                h, margins, weights, config)
            solution = solve_mpc(problem, warm_start)
            warm_start = solution
            control = solution.controls[0]
            degraded = solution.status is MpcStatus.DEGRADED

        prev_world = world
        world = step_world(world, control, config)
        path_length += float(np.linalg.norm(world.robot.position
                                            - prev_world.robot.position))

        at_goal = float(np.linalg.norm(world.robot.position
                                       - world.robot.goal)) < SUCCESS_RADIUS
        collided = detect_collision(world) is not None
        if collided:
            outcome_flag, done = Outcome.COLLISION, True
        elif at_goal:
            outcome_flag, done = Outcome.GOAL, True
        elif step_index == max_steps - 1:
            outcome_flag, done = Outcome.TIMEOUT, True
        else:
            outcome_flag, done = Outcome.NONE, False

        reward = compute_reward(prev_world, world, control, h, obs,
                                outcome_flag, coeffs)
        min_barrier = _min_true_barrier(world, margins)
        steps.append(StepRecord(
            step_index=step_index, digest=_world_digest(prev_world),
            robot_position=prev_world.robot.position.copy(),
            ped_positions=np.array([p.position for p in
                                    prev_world.pedestrians]).reshape(-1, 2),
            visible=visible, coop_probs={pid: coop[pid][0] for pid in visible},
            h=h, control=control, reward=reward, min_barrier=min_barrier,
            intrusion=min_barrier < 0.0, degraded=degraded))

        if done:
            if outcome_flag is Outcome.COLLISION:
                outcome = EpisodeOutcome.COLLISION
            elif outcome_flag is Outcome.GOAL:
                outcome = EpisodeOutcome.SUCCESS
            break

    return EpisodeLog(scenario=scenario, seed=seed, outcome=outcome,
                      duration=len(steps) * config.dt,
                      path_length=path_length, steps=steps,
                      ped_labels=ped_labels, goal=world.robot.goal.copy(),
                      sensing_range=config.sensing_range)


# ---------------------------------------------------------------------------
# metrics


@dataclass
class MetricsSummary:
    sr: float                     # success rate, percent
    cr: float                     # collision rate, percent
    otr: float                    # timeout rate, percent
    ant: float | None             # mean navigation time over successes (s)
    atl: float | None             # mean trajectory length over successes (m)
    air: float                    # mean intrusion ratio, percent
    n_episodes: int
    rows: list[dict] = field(default_factory=list)


def intrusion_ratio(log: EpisodeLog) -> float:
    if not log.steps:
        return 0.0
    return 100.0 * sum(1 for s in log.steps if s.intrusion) / len(log.steps)


def compute_metrics(logs: list[EpisodeLog]) -> MetricsSummary:
    n = len(logs)
    successes = [lg for lg in logs if lg.outcome is EpisodeOutcome.SUCCESS]
    collisions = sum(1 for lg in logs if lg.outcome is EpisodeOutcome.COLLISION)
    timeouts = sum(1 for lg in logs if lg.outcome is EpisodeOutcome.TIMEOUT)
    ant = float(np.mean([lg.duration for lg in successes])) if successes else None
    atl = float(np.mean([lg.path_length for lg in successes])) if successes else None
    air = float(np.mean([intrusion_ratio(lg) for lg in logs])) if logs else 0.0
    rows = [{"episode": i, "seed": lg.seed, "scenario": lg.scenario,
             "outcome": lg.outcome.value,
             "duration": round(lg.duration, 6),
             "path_length": round(lg.path_length, 6),
             "intrusion_ratio": round(intrusion_ratio(lg), 6),
             "mean_h": round(float(np.mean([s.h for s in lg.steps])), 6)
             if lg.steps else 0.0}
            for i, lg in enumerate(logs)]
    return MetricsSummary(sr=100.0 * len(successes) / n,
                          cr=100.0 * collisions / n,
                          otr=100.0 * timeouts / n,
                          ant=ant, atl=atl, air=air, n_episodes=n, rows=rows)


def _episode_worker(args):
    config, stack, seed, margins, weights, scenario = args
    return run_episode(config, stack, seed, margins, weights,
                       scenario=scenario)


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("HORIZON_NAV_THREADS", "1")))
    except ValueError:
        return 1


def run_episodes(config: SimConfig, stack: PolicyStack, n_episodes: int,
                 base_seed: int, margins: SafetyMargins | None = None,
                 weights: MpcWeights | None = None,
                 scenario: str = "custom") -> list[EpisodeLog]:
    """Episodes with seeds base_seed..base_seed+n-1, order-stable.

    HORIZON_NAV_THREADS > 1 fans episodes out to worker processes; results
    are collected by episode index so parallelism never changes the output.
    """
    jobs = [(config, stack, base_seed + i, margins, weights, scenario)
            for i in range(n_episodes)]
    workers = n_workers()
    if workers > 1 and n_episodes > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_episode_worker, jobs))
    return [_episode_worker(job) for job in jobs]


def evaluate(config: SimConfig, stack: PolicyStack, n_episodes: int = 250,
             base_seed: int = 0, out_dir=None,
             margins: SafetyMargins | None = None,
             weights: MpcWeights | None = None,
             scenario: str = "custom") -> MetricsSummary:
    """Run a batch of episodes and aggregate metrics.

    With out_dir set, writes episodes.csv (one row per episode) and
    summary.json.
    """
    logs = run_episodes(config, stack, n_episodes, base_seed, margins,
                        weights, scenario)
    summary = compute_metrics(logs)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_metrics(summary, out_dir)
    return summary


def write_metrics(summary: MetricsSummary, out_dir) -> None:
    csv_path = os.path.join(out_dir, "episodes.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["episode", "seed", "scenario",
                                               "outcome", "duration",
                                               "path_length",
                                               "intrusion_ratio", "mean_h"])
        writer.writeheader()
        writer.writerows(summary.rows)
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump({"SR": summary.sr, "CR": summary.cr, "OR": summary.otr,
                   "ANT": summary.ant, "ATL": summary.atl, "AIR": summary.air,
                   "n_episodes": summary.n_episodes}, f, indent=2)


# ---------------------------------------------------------------------------
# fixed-horizon sweep


def fixed_horizon_sweep(scenarios, horizons, n_episodes: int, base_seed: int,
                        out_dir, coop_params: CoopNetParams | None = None,
                        base_config: SimConfig | None = None) -> list[dict]:
    """Success rate of FixedHorizon(h) per scenario; writes CSV and SVG."""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for name in scenarios:
        config = scenario_config(name, base_config)
        for h in horizons:
            stack = PolicyStack(variant=StackVariant.FIXED_HORIZON,
                                coop_params=coop_params, fixed_h=h)
            summary = evaluate(config, stack, n_episodes, base_seed,
                               scenario=name)
            rows.append({"scenario": name, "h": h, "SR": summary.sr,
                         "CR": summary.cr, "OR": summary.otr,
                         "ANT": summary.ant})
    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["scenario", "h", "SR", "CR",
                                               "OR", "ANT"])
        writer.writeheader()
        writer.writerows(rows)
    svg = sweep_svg(rows)
    with open(os.path.join(out_dir, "sweep.svg"), "w") as f:
        f.write(svg)
    return rows


_SWEEP_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def sweep_svg(rows: list[dict], width=560, height=360) -> str:
    """Success rate vs horizon, one polyline per scenario."""
    scenarios = sorted({r["scenario"] for r in rows})
    horizons = sorted({r["h"] for r in rows})
    pad = 50
    span_h = max(max(horizons) - min(horizons), 1)

    def px(h):
        return pad + (h - min(horizons)) / span_h * (width - 2 * pad)

    def py(sr):
        return height - pad - sr / 100.0 * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
             f'y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
             f'stroke="black"/>']
    for h in horizons:
        parts.append(f'<text x="{px(h):.1f}" y="{height - pad + 18}" '
                     f'font-size="11" text-anchor="middle">{h}</text>')
    for sr in (0, 25, 50, 75, 100):
        parts.append(f'<text x="{pad - 8}" y="{py(sr) + 4:.1f}" font-size="11" '
                     f'text-anchor="end">{sr}</text>')
    parts.append(f'<text x="{width / 2}" y="{height - 12}" font-size="12" '
                 f'text-anchor="middle">fixed prediction horizon</text>')
    for idx, name in enumerate(scenarios):
        pts = [(px(r["h"]), py(r["SR"])) for r in rows
               if r["scenario"] == name]
        path = " ".join(f"{x:.1f},{y:.1f}" for x, y in sorted(pts))
        color = _SWEEP_COLORS[idx % len(_SWEEP_COLORS)]
        parts.append(f'<polyline points="{path}" fill="none" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{width - pad + 4}" y="{pad + 16 * idx + 10}" '
                     f'font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# trajectory rendering


ROBOT_COLOR = "#DAA520"
COOP_COLOR = "#2ca02c"
NONCOOP_COLOR = "#d62728"


def render_trajectory(log: EpisodeLog, width=640, height=640,
                      timestamp_every: int = 8) -> str:
    """Standalone SVG: golden timestamped robot path, green/red pedestrians,
    sensing circle at the final step, and a star on the goal."""
    if not log.steps:
        raise ValueError("cannot render an empty episode log")
    extent = max(7.0, float(np.abs([s.robot_position for s in log.steps]).max()) + 1.0)
    scale = (min(width, height) / 2 - 20) / extent

    def pt(p):
        return (width / 2 + p[0] * scale, height / 2 - p[1] * scale)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']

    for step in log.steps:
        for pid, pos in enumerate(step.ped_positions):
            color = COOP_COLOR if log.ped_labels[pid] == 1 else NONCOOP_COLOR
            x, y = pt(pos)
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2.5" '
                         f'fill="{color}" fill-opacity="0.35"/>')

    for step in log.steps:
        x, y = pt(step.robot_position)
        parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="4" '
                     f'fill="{ROBOT_COLOR}"/>')
        if step.step_index % timestamp_every == 0:
            t = step.step_index * 0.25
            parts.append(f'<text x="{x + 6:.1f}" y="{y - 6:.1f}" '
                         f'font-size="10">{t:.1f}s</text>')

    fx, fy = pt(log.steps[-1].robot_position)
    parts.append(f'<circle cx="{fx:.1f}" cy="{fy:.1f}" '
                 f'r="{log.sensing_range * scale:.1f}" fill="none" '
                 f'stroke="#888888" stroke-dasharray="6,4"/>')

    gx, gy = pt(log.goal)
    star = []
    for i in range(10):
        r = 10 if i % 2 == 0 else 4
        ang = -math.pi / 2 + i * math.pi / 5
        star.append(f"{gx + r * math.cos(ang):.1f},{gy + r * math.sin(ang):.1f}")
    parts.append(f'<polygon points="{" ".join(star)}" fill="#ffcc00" '
                 f'stroke="#aa8800"/>')
    parts.append("</svg>")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# episode log serialization (JSON lines: header object, then one step per line)


def save_episode_log(log: EpisodeLog, path) -> None:
    with open(path, "w") as f:
        header = {"scenario": log.scenario, "seed": log.seed,
                  "outcome": log.outcome.value, "duration": log.duration,
                  "path_length": log.path_length,
                  "ped_labels": log.ped_labels, "goal": log.goal.tolist(),
                  "sensing_range": log.sensing_range}
        f.write(json.dumps(header) + "\n")
        for s in log.steps:
            f.write(json.dumps({
                "step": s.step_index, "digest": s.digest,
                "robot": s.robot_position.tolist(),
                "peds": s.ped_positions.tolist(),
                "visible": s.visible,
                "coop_probs": {str(k): v for k, v in s.coop_probs.items()},
                "h": s.h, "control": [s.control.v, s.control.w],
                "reward": {"r_term": s.reward.r_term, "r_pot": s.reward.r_pot,
                           "r_kin": s.reward.r_kin,
                           "r_horizon": s.reward.r_horizon,
                           "r_vis_social": s.reward.r_vis_social,
                           "r_total": s.reward.r_total},
                "min_barrier": s.min_barrier, "intrusion": s.intrusion,
                "degraded": s.degraded}) + "\n")


def load_episode_log(path) -> EpisodeLog:
    with open(path) as f:
        lines = [line for line in f if line.strip()]
    header = json.loads(lines[0])
    steps = []
    for line in lines[1:]:
        d = json.loads(line)
        r = d["reward"]
        steps.append(StepRecord(
            step_index=d["step"], digest=d["digest"],
            robot_position=np.array(d["robot"]),
            ped_positions=np.array(d["peds"]).reshape(-1, 2),
            visible=d["visible"],
            coop_probs={int(k): v for k, v in d["coop_probs"].items()},
            h=d["h"], control=Control(*d["control"]),
            reward=RewardBreakdown(**r), min_barrier=d["min_barrier"],
            intrusion=d["intrusion"], degraded=d["degraded"]))
    return EpisodeLog(scenario=header["scenario"], seed=header["seed"],
                      outcome=EpisodeOutcome(header["outcome"]),
                      duration=header["duration"],
                      path_length=header["path_length"], steps=steps,
                      ped_labels=header["ped_labels"],
                      goal=np.array(header["goal"]),
                      sensing_range=header["sensing_range"])


# ---------------------------------------------------------------------------
# RL environment over the full simulator (for policy training)


class NavigationEnv:
    """Gym-like wrapper: actions are horizon indices, controls come from MPC.

    Observations are the (ped_feats, robot_feat) pair the policy consumes.
    Cooperation probabilities come from a frozen classifier when provided,
    and are forced to zero under no_coop.
    """

    def __init__(self, config: SimConfig, coop_params=None, no_coop=False,
                 margins: SafetyMargins | None = None,
                 weights: MpcWeights | None = None,
                 coeffs: RewardCoeffs | None = None):
        self.config = config
        self.coop_params = coop_params
        self.no_coop = no_coop
        self.margins = margins or SafetyMargins()
        self.weights = weights or MpcWeights()
        self.coeffs = coeffs or RewardCoeffs()
        self.world = None

    def _observe(self):
        visible = observe(self.world, self.config)
        self.history.update(self.world, visible)
        if self.no_coop:
            coop = {pid: (0.0, 0) for pid in visible}
        elif self.predictor is not None:
            coop = self.predictor.infer(self.history, visible)
        else:
            coop = {pid: (0.5, 1) for pid in visible}
        obs = to_robot_frame(self.world, visible)
        for o in obs:
            o.coop_prob, o.coop_label = coop[o.ped_id]
        self._visible, self._coop, self._obs = visible, coop, obs
        return observation_features(obs, robot_node_features(self.world.robot))

    def reset(self, seed: int):
        self.world = spawn_scenario(self.config, seed)
        self.history = TrajectoryHistory()
        self.predictor = CoopPredictor(self.coop_params) \
            if self.coop_params is not None else None
        self.warm_start = None
        self.t = 0
        self.max_steps = int(round(self.config.timeout / self.config.dt))
        return self._observe()

    def step(self, action: int):
        h = action + 1
        problem = build_mpc(self.world.robot,
                            _mpc_pedestrians(self.world, self._visible,
                                             self._coop),
                            h, self.margins, self.weights, self.config)
        solution = solve_mpc(problem, self.warm_start)
        self.warm_start = solution
        control = solution.controls[0]

        prev_world = self.world
        prev_obs = self._obs
        self.world = step_world(self.world, control, self.config)
        self.t += 1

        at_goal = float(np.linalg.norm(self.world.robot.position
                                       - self.world.robot.goal)) < SUCCESS_RADIUS
        collided = detect_collision(self.world) is not None
        if collided:
            outcome, done = Outcome.COLLISION, True
        elif at_goal:
            outcome, done = Outcome.GOAL, True
        elif self.t >= self.max_steps:
            outcome, done = Outcome.TIMEOUT, True
        else:
            outcome, done = Outcome.NONE, False

        reward = compute_reward(prev_world, self.world, control, h, prev_obs,
                                outcome, self.coeffs)
        obs = self._observe()
        return obs, reward.r_total, done, {"outcome": outcome,
                                           "status": solution.status}
