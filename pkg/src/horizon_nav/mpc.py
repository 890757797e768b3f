"""Variable-horizon MPC with socially conditioned costs and barrier constraints.

The planner tracks the goal with a quadratic stage/terminal cost, adds a
Gaussian social-proximity cost weighted by each pedestrian's cooperation
probability, and enforces discrete-time control-barrier rows

    h_i(x_{k+1}) - h_i(x_k) >= -gamma * h_i(x_k)

per pedestrian and step, where h_i is the clearance beyond a label-dependent
safety margin.  Pedestrians are propagated at constant velocity.  The
nonconvex problem is solved by sequential convexification: linearize the
unicycle dynamics and barriers around a nominal rollout, solve a slack-relaxed
QP over control perturbations inside a trust region, and accept steps that
reduce the exact penalized cost.  A deterministic constant-control lattice is
the fallback when the QP solver fails.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig
from .qp import QpError, solve_qp
from .world import Control

N_SQP = 5
TRUST_REGION_INIT = 0.5
TRUST_REGION_SHRINK = 0.5
STEP_CONVERGENCE = 1e-4
SLACK_TOL = 1e-6
CONSTRAINT_TOL = 1e-6


@dataclass(frozen=True)
class SafetyMargins:
    d_0: float = 0.1
    d_coop: float = 0.1
    d_noncoop: float = 0.4
    gamma: float = 0.3

    def __post_init__(self):
        if self.d_0 < 0 or self.d_coop < 0:
            raise ValueError("margins must be non-negative")
        if self.d_noncoop < self.d_coop:
            raise ValueError("d_noncoop must be >= d_coop")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")


def default_weights():
    return MpcWeights()


@dataclass(frozen=True)
class MpcWeights:
    Q: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 0.1]))
    Q_f: np.ndarray = field(default_factory=lambda: 5.0 * np.diag([1.0, 1.0, 0.1]))
    R: np.ndarray = field(default_factory=lambda: np.diag([0.1, 0.05]))
    eta: float = 1.0
    sigma_coop: float = 0.6
    sigma_noncoop: float = 1.2
    slack_penalty: float = 1e4
    # linear slack term makes the penalty exact: slacks vanish whenever the
    # constraint is enforceable, instead of settling at a small equilibrium
    slack_penalty_linear: float = 1e3

    def __post_init__(self):
        if self.sigma_noncoop <= self.sigma_coop:
            raise ValueError("sigma_noncoop must exceed sigma_coop")
        for M in (self.Q, self.Q_f):
            if np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError("Q weights must be positive semidefinite")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be positive definite")


@dataclass(frozen=True)
class MpcPedestrian:
    position: np.ndarray          # (2,) world frame
    velocity: np.ndarray          # (2,)
    radius: float
    coop_prob: float
    coop_label: int


@dataclass(frozen=True)
class MpcProblem:
    x0: np.ndarray                # (3,) px, py, theta
    x_goal: np.ndarray            # (3,)
    h: int
    pedestrians: tuple[MpcPedestrian, ...]
    margins: SafetyMargins
    weights: MpcWeights
    dt: float
    robot_radius: float
    v_min: float
    v_max: float
    w_max: float
    arena_bound: float            # state box half-width (m)


class MpcStatus(enum.Enum):
    OPTIMAL = "optimal"
    SLACK_ACTIVE = "slack_active"
    DEGRADED = "degraded"


@dataclass
class MpcSolution:
    controls: list[Control]
    states: np.ndarray            # (h, 3) predicted states x_1..x_h
    barrier_values: np.ndarray    # (n_peds, h + 1), k = 0..h
    slacks: np.ndarray            # (n_peds, h) constraint shortfalls
    cost: float
    sqp_iterations: int
    status: MpcStatus


def d_safety(label: int, margins: SafetyMargins) -> float:
    return margins.d_0 + label * margins.d_coop + (1 - label) * margins.d_noncoop


def barrier_value(p_r: np.ndarray, p_i: np.ndarray, r_r: float, r_i: float,
                  label: int, margins: SafetyMargins) -> float:
    return float(np.linalg.norm(p_r - p_i)) - (r_r + r_i + d_safety(label, margins))


def social_cost(p_r: np.ndarray, p_i: np.ndarray, coop_prob: float,
                weights: MpcWeights) -> float:
    """Expected Gaussian proximity cost over the cooperation attribute."""
    d2 = float((p_r - p_i) @ (p_r - p_i))
    return weights.eta * (
        coop_prob * math.exp(-d2 / weights.sigma_coop ** 2)
        + (1.0 - coop_prob) * math.exp(-d2 / weights.sigma_noncoop ** 2))


def _social_cost_grad(p_r, p_i, coop_prob, weights):
    """Gradient of social_cost with respect to the robot position."""
    diff = p_r - p_i
    d2 = float(diff @ diff)
    gc = coop_prob * math.exp(-d2 / weights.sigma_coop ** 2) / weights.sigma_coop ** 2
    gn = (1.0 - coop_prob) * math.exp(-d2 / weights.sigma_noncoop ** 2) \
        / weights.sigma_noncoop ** 2
    return -2.0 * weights.eta * (gc + gn) * diff


def project_pedestrians(peds: tuple[MpcPedestrian, ...], h: int,
                        dt: float) -> np.ndarray:
    """Constant-velocity forecasts, shape (n_peds, h + 1, 2) for k = 0..h."""
    n = len(peds)
    if n == 0:
        return np.zeros((0, h + 1, 2))
    pos = np.array([p.position for p in peds])
    vel = np.array([p.velocity for p in peds])
    ks = np.arange(h + 1).reshape(1, h + 1, 1)
    return pos[:, None, :] + ks * dt * vel[:, None, :]


def build_mpc(robot, obs_peds: list[MpcPedestrian], h: int,
              margins: SafetyMargins, weights: MpcWeights,
              config: SimConfig) -> MpcProblem:
    """Assemble an MPC problem from the robot state and visible pedestrians.

    The goal heading is the bearing from the robot to the goal (current
    heading if already there), so the heading penalty steers toward the goal.
    """
    to_goal = robot.goal - robot.position
    theta_goal = math.atan2(to_goal[1], to_goal[0]) \
        if np.linalg.norm(to_goal) > 1e-9 else robot.heading
    x0 = np.array([robot.position[0], robot.position[1], robot.heading])
    x_goal = np.array([robot.goal[0], robot.goal[1], theta_goal])
    return MpcProblem(
        x0=x0, x_goal=x_goal, h=h, pedestrians=tuple(obs_peds),
        margins=margins, weights=weights, dt=config.dt,
        robot_radius=config.robot_radius, v_min=config.v_min,
        v_max=config.v_max, w_max=config.w_max,
        arena_bound=config.arena_spawn_radius + 1.0)


def rollout(x0: np.ndarray, controls: np.ndarray, dt: float) -> np.ndarray:
    """Exact unicycle rollout; returns (h + 1, 3) states including x0."""
    h = controls.shape[0]
    states = np.zeros((h + 1, 3))
    states[0] = x0
    for k in range(h):
        px, py, th = states[k]
        v, w = controls[k]
        states[k + 1] = [px + v * dt * math.cos(th),
                         py + v * dt * math.sin(th),
                         th + w * dt]
    return states


def _angle_error(theta, theta_goal):
    return math.remainder(theta - theta_goal, math.tau)


def _state_errors(problem: MpcProblem, states: np.ndarray) -> np.ndarray:
    err = states - problem.x_goal
    err[:, 2] = np.mod(err[:, 2] + math.pi, math.tau) - math.pi
    return err


def true_cost(problem: MpcProblem, controls: np.ndarray,
              forecasts: np.ndarray) -> float:
    """Exact nonlinear objective along the rollout of `controls`."""
    states = rollout(problem.x0, controls, problem.dt)
    W = problem.weights
    err = _state_errors(problem, states)
    cost = float(np.einsum("ki,ij,kj->", err[:-1], W.Q, err[:-1]))
    cost += float(np.einsum("ki,ij,kj->", controls, W.R, controls))
    cost += float(err[-1] @ W.Q_f @ err[-1])
    if problem.pedestrians:
        # (n_peds, h) squared distances at stage steps 0..h-1
        diff = states[None, :-1, :2] - forecasts[:, :-1]
        d2 = (diff ** 2).sum(axis=2)
        probs = np.array([p.coop_prob for p in problem.pedestrians])[:, None]
        cost += float(W.eta * (
            probs * np.exp(-d2 / W.sigma_coop ** 2)
            + (1.0 - probs) * np.exp(-d2 / W.sigma_noncoop ** 2)).sum())
    return cost


def barrier_table(problem: MpcProblem, states: np.ndarray,
                  forecasts: np.ndarray) -> np.ndarray:
    """(n_peds, h + 1) barrier values along a state trajectory."""
    n = len(problem.pedestrians)
    if n == 0:
        return np.zeros((0, problem.h + 1))
    dists = np.linalg.norm(states[None, :, :2] - forecasts, axis=2)
    margin = np.array([problem.robot_radius + p.radius
                       + d_safety(p.coop_label, problem.margins)
                       for p in problem.pedestrians])
    return dists - margin[:, None]


def constraint_residuals(problem: MpcProblem, barriers: np.ndarray) -> np.ndarray:
    """(n_peds, h) values of h_{k+1} - (1 - gamma) h_k; feasible iff >= 0."""
    g = problem.margins.gamma
    return barriers[:, 1:] - (1.0 - g) * barriers[:, :-1]


def _penalized_cost(problem, controls, forecasts):
    """Exact cost plus the slack penalty on constraint shortfalls (merit)."""
    states = rollout(problem.x0, controls, problem.dt)
    residuals = constraint_residuals(problem, barrier_table(problem, states,
                                                           forecasts))
    shortfall = np.maximum(0.0, -residuals)
    W = problem.weights
    return true_cost(problem, controls, forecasts) \
        + W.slack_penalty * float((shortfall ** 2).sum()) \
        + W.slack_penalty_linear * float(shortfall.sum())


def _linearize(problem: MpcProblem, controls: np.ndarray):
    """Nominal states plus sensitivities S_k = d x_k / d(flattened controls)."""
    h, dt = problem.h, problem.dt
    states = rollout(problem.x0, controls, dt)
    n_u = 2 * h
    S = np.zeros((h + 1, 3, n_u))
    for k in range(h):
        _, _, th = states[k]
        v, _ = controls[k]
        A = np.array([[1.0, 0.0, -v * dt * math.sin(th)],
                      [0.0, 1.0, v * dt * math.cos(th)],
                      [0.0, 0.0, 1.0]])
        B = np.array([[dt * math.cos(th), 0.0],
                      [dt * math.sin(th), 0.0],
                      [0.0, dt]])
        S[k + 1] = A @ S[k]
        S[k + 1][:, 2 * k:2 * k + 2] += B
    return states, S


def _barrier_gradient(p_r, p_i):
    """d h / d p_r, the unit vector away from the pedestrian."""
    diff = p_r - p_i
    norm = float(np.linalg.norm(diff))
    if norm < 1e-12:
        return np.array([1.0, 0.0])
    return diff / norm


def _build_qp(problem: MpcProblem, controls, states, S, forecasts,
              trust_radius):
    """Quadratic model and linear constraints around the nominal rollout.

    Variables are z = [du (2h), slacks (kept barrier rows)].  Barrier rows
    provably inactive inside the trust region (nominal residual exceeding the
    largest possible linearized change) are dropped along with their slacks.
    Returns (H, g, A, b, z0, kept_rows) with z0 feasible by construction.
    """
    h, W = problem.h, problem.weights
    n_u = 2 * h
    n_peds = len(problem.pedestrians)
    g_cbf = problem.margins.gamma

    H = np.zeros((n_u, n_u))
    grad = np.zeros(n_u)
    for k in range(h):
        Pk = S[k][:2]                         # position sensitivity
        err = states[k] - problem.x_goal
        err[2] = _angle_error(states[k, 2], problem.x_goal[2])
        H += 2.0 * S[k].T @ W.Q @ S[k]
        grad += 2.0 * S[k].T @ (W.Q @ err)
        H[2 * k:2 * k + 2, 2 * k:2 * k + 2] += 2.0 * W.R
        grad[2 * k:2 * k + 2] += 2.0 * W.R @ controls[k]
        for i, ped in enumerate(problem.pedestrians):
            gs = _social_cost_grad(states[k, :2], forecasts[i, k],
                                   ped.coop_prob, W)
            grad += Pk.T @ gs
    H += 2.0 * S[h].T @ W.Q_f @ S[h]
    err = states[h] - problem.x_goal
    err[2] = _angle_error(states[h, 2], problem.x_goal[2])
    grad += 2.0 * S[h].T @ (W.Q_f @ err)
    # keep the Hessian safely positive definite
    H[np.diag_indices(n_u)] += 1e-8

    # barrier rows: a_row . du + s >= -c_nom, i.e. -a_row . du - s <= c_nom
    rows, kept = [], []
    barriers = barrier_table(problem, states, forecasts)
    for i, ped in enumerate(problem.pedestrians):
        for k in range(h):
            grad_next = _barrier_gradient(states[k + 1, :2], forecasts[i, k + 1])
            a_row = grad_next @ S[k + 1][:2]
            if k > 0:
                grad_cur = _barrier_gradient(states[k, :2], forecasts[i, k])
                a_row = a_row - (1.0 - g_cbf) * (grad_cur @ S[k][:2])
            c_nom = barriers[i, k + 1] - (1.0 - g_cbf) * barriers[i, k]
            if c_nom >= float(np.abs(a_row).sum()) * trust_radius + 1e-9:
                continue                      # cannot go active in this region
            rows.append((a_row, c_nom))
            kept.append((i, k))

    n_s = len(rows)
    n_z = n_u + n_s
    H_full = np.zeros((n_z, n_z))
    H_full[:n_u, :n_u] = H
    H_full[np.arange(n_u, n_z), np.arange(n_u, n_z)] = 2.0 * W.slack_penalty
    g_full = np.zeros(n_z)
    g_full[:n_u] = grad
    g_full[n_u:] = W.slack_penalty_linear

    A_rows, b_rows = [], []
    for j, (a_row, c_nom) in enumerate(rows):
        row = np.zeros(n_z)
        row[:n_u] = -a_row
        row[n_u + j] = -1.0
        A_rows.append(row)
        b_rows.append(c_nom)
    # slack non-negativity
    for j in range(n_s):
        row = np.zeros(n_z)
        row[n_u + j] = -1.0
        A_rows.append(row)
        b_rows.append(0.0)
    # control box and trust region on each component
    lo = np.array([problem.v_min, -problem.w_max])
    hi = np.array([problem.v_max, problem.w_max])
    for k in range(h):
        for j in range(2):
            upper = min(hi[j] - controls[k, j], trust_radius)
            lower = max(lo[j] - controls[k, j], -trust_radius)
            row = np.zeros(n_z)
            row[2 * k + j] = 1.0
            A_rows.append(row.copy())
            b_rows.append(upper)
            row[2 * k + j] = -1.0
            A_rows.append(row)
            b_rows.append(-lower)

    z0 = np.zeros(n_z)
    for j, (_, c_nom) in enumerate(rows):
        z0[n_u + j] = max(0.0, -c_nom)
    return H_full, g_full, np.array(A_rows), np.array(b_rows), z0, kept


def _lattice_fallback(problem: MpcProblem, forecasts: np.ndarray) -> np.ndarray:
    """Best constant control sequence from a fixed 9x9 (v, w) lattice.

    All candidates are scored in one vectorized pass over the penalized cost
    (constant controls admit closed-form rollouts); ties break toward the
    first lattice entry, keeping the choice deterministic.
    """
    h, dt, W = problem.h, problem.dt, problem.weights
    vs, ws = np.meshgrid(np.linspace(problem.v_min, problem.v_max, 9),
                         np.linspace(-problem.w_max, problem.w_max, 9),
                         indexing="ij")
    v = vs.ravel()[:, None]                     # (81, 1)
    w = ws.ravel()[:, None]
    ks = np.arange(h)[None, :]
    theta = problem.x0[2] + w * ks * dt         # heading entering step k
    dx = v * dt * np.cos(theta)
    dy = v * dt * np.sin(theta)
    px = problem.x0[0] + np.cumsum(dx, axis=1)  # (81, h) positions x_1..x_h
    py = problem.x0[1] + np.cumsum(dy, axis=1)
    th = problem.x0[2] + w * (ks + 1) * dt
    states = np.stack([np.concatenate([np.full((81, 1), problem.x0[0]), px], axis=1),
                       np.concatenate([np.full((81, 1), problem.x0[1]), py], axis=1),
                       np.concatenate([np.full((81, 1), problem.x0[2]), th], axis=1)],
                      axis=2)                   # (81, h+1, 3)

    err = states - problem.x_goal
    err[:, :, 2] = np.mod(err[:, :, 2] + math.pi, math.tau) - math.pi
    cost = np.einsum("cki,ij,ckj->c", err[:, :-1], W.Q, err[:, :-1])
    cost += np.einsum("ci,ij,cj->c", err[:, -1], W.Q_f, err[:, -1])
    u = np.concatenate([v, w], axis=1)
    cost += h * np.einsum("ci,ij,cj->c", u, W.R, u)

    if problem.pedestrians:
        diff = states[:, None, :, :2] - forecasts[None, :, :, :]
        dists = np.sqrt((diff ** 2).sum(axis=3))          # (81, n, h+1)
        d2 = dists[:, :, :-1] ** 2
        probs = np.array([p.coop_prob for p in problem.pedestrians])[None, :, None]
        cost += W.eta * (probs * np.exp(-d2 / W.sigma_coop ** 2)
                         + (1 - probs) * np.exp(-d2 / W.sigma_noncoop ** 2)
                         ).sum(axis=(1, 2))
        margin = np.array([problem.robot_radius + p.radius
                           + d_safety(p.coop_label, problem.margins)
                           for p in problem.pedestrians])[None, :, None]
        barriers = dists - margin
        g = problem.margins.gamma
        residuals = barriers[:, :, 1:] - (1.0 - g) * barriers[:, :, :-1]
        shortfall = np.maximum(0.0, -residuals)
        cost += W.slack_penalty * (shortfall ** 2).sum(axis=(1, 2))
        cost += W.slack_penalty_linear * shortfall.sum(axis=(1, 2))

    best = int(np.argmin(cost))
    return np.tile([v[best, 0], w[best, 0]], (h, 1))


def _warm_start_controls(problem: MpcProblem,
                         warm_start: MpcSolution | None) -> np.ndarray:
    controls = np.zeros((problem.h, 2))
    if warm_start is not None and warm_start.controls:
        prev = np.array([[c.v, c.w] for c in warm_start.controls])
        shifted = np.vstack([prev[1:], prev[-1:]])     # shift one step, pad
        n = min(problem.h, shifted.shape[0])
        controls[:n] = shifted[:n]
        controls[n:] = shifted[-1]
    controls[:, 0] = np.clip(controls[:, 0], problem.v_min, problem.v_max)
    controls[:, 1] = np.clip(controls[:, 1], -problem.w_max, problem.w_max)
    return controls


def solve_mpc(problem: MpcProblem, warm_start: MpcSolution | None = None,
              debug_path=None) -> MpcSolution:
    """Sequential convexification around a warm-started nominal rollout.

    Each iteration solves the linearized QP inside a trust region and accepts
    the step only if the exact penalized cost decreases, shrinking the region
    otherwise.  Status is judged on the exact nonlinear residuals of the
    returned controls.
    """
    forecasts = project_pedestrians(problem.pedestrians, problem.h, problem.dt)
    controls = _warm_start_controls(problem, warm_start)
    merit = _penalized_cost(problem, controls, forecasts)
    # seed from the control lattice when it beats the shifted warm start;
    # the SQP refines locally and is easily trapped by a poor nominal
    lattice = _lattice_fallback(problem, forecasts)
    lattice_merit = _penalized_cost(problem, lattice, forecasts)
    if lattice_merit < merit:
        controls, merit = lattice, lattice_merit
    nominal_controls = controls.copy()
    trust_radius = TRUST_REGION_INIT
    degraded = False
    iterations = 0

    for _ in range(N_SQP):
        iterations += 1
        states, S = _linearize(problem, controls)
        H, g, A, b, z0, _kept = _build_qp(problem, controls, states, S,
                                          forecasts, trust_radius)
        try:
            result = solve_qp(H, g, A, b, z0)
        except QpError:
            controls = _lattice_fallback(problem, forecasts)
            merit = _penalized_cost(problem, controls, forecasts)
            degraded = True
            break
        du = result.z[:2 * problem.h].reshape(problem.h, 2)
        candidate = controls + du
        candidate_merit = _penalized_cost(problem, candidate, forecasts)
        if candidate_merit <= merit + 1e-12:
            controls, merit = candidate, candidate_merit
            if np.linalg.norm(du, ord=np.inf) < STEP_CONVERGENCE:
                break
        else:
            trust_radius *= TRUST_REGION_SHRINK

    states = rollout(problem.x0, controls, problem.dt)
    barriers = barrier_table(problem, states, forecasts)
    residuals = constraint_residuals(problem, barriers)
    slacks = np.maximum(0.0, -residuals)
    cost = true_cost(problem, controls, forecasts)

    if degraded:
        status = MpcStatus.DEGRADED
    elif slacks.size == 0 or slacks.max() < SLACK_TOL:
        status = MpcStatus.OPTIMAL
    else:
        status = MpcStatus.SLACK_ACTIVE

    solution = MpcSolution(
        controls=[Control(float(v), float(w)) for v, w in controls],
        states=states[1:], barrier_values=barriers, slacks=slacks,
        cost=cost, sqp_iterations=iterations, status=status)

    if debug_path is not None:
        dump = {
            "status": status.value,
            "iterations": iterations,
            "cost": cost,
            "nominal_controls": nominal_controls.tolist(),
            "controls": controls.tolist(),
            "states": states.tolist(),
            "barrier_values": barriers.tolist(),
            "slacks": slacks.tolist(),
        }
        with open(debug_path, "w") as f:
            json.dump(dump, f, indent=2)
    return solution
