"""End-to-end acceptance gate.

Covers the full pipeline at desk scale: analytic gradients against finite
differences, Gumbel-Softmax sampling statistics, MPC optimality against a
dense control grid, discrete-time barrier forward invariance, classifier
learnability, PPO learnability, bit-exact reproducibility, directional
orderings of the full stack against baselines and ablations at 100 episodes
per cell, and exact metric goldens.

The quantitative tests need the trained artifacts in artifacts/ (shipped with
the repo; regenerate with scripts/train_artifacts.sh).
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from horizon_nav.bench import (
    EpisodeLog, EpisodeOutcome, PolicyStack, StackVariant, StepRecord,
    compute_metrics, intrusion_ratio,
)
from horizon_nav.bench import evaluate
from horizon_nav.cli import run_cli
from horizon_nav.config import SimConfig, scenario_config
from horizon_nav.coopnet import (
    CoopNetParams, CoopTrainConfig, gumbel_select, make_separable_dataset,
    sample_forward, train_coop,
)
from horizon_nav.mpc import (
    MpcPedestrian, MpcStatus, MpcWeights, SafetyMargins, build_mpc,
    constraint_residuals, project_pedestrians, solve_mpc, _penalized_cost,
)
from horizon_nav.nn import softmax
from horizon_nav.rewards import RewardBreakdown
from horizon_nav.rl import (
    PolicyParams, PpoConfig, policy_forward, train_policy,
)
from horizon_nav.world import Control, RobotState

ARTIFACT_DIR = Path(__file__).resolve().parent.parent / "artifacts"
N_EPISODES = 100
BASE_SEED = 0


# ---------------------------------------------------------------------------
# shared fixtures (trained artifacts and the 100-episode evaluation cells)


def _load(path, loader):
    if not path.exists():
        pytest.fail(f"missing trained artifact {path}; run "
                    "scripts/train_artifacts.sh first")
    return loader(str(path))


@pytest.fixture(scope="session")
def coop_params():
    return _load(ARTIFACT_DIR / "coop_net.bin", CoopNetParams.load)


@pytest.fixture(scope="session")
def policy_params():
    return _load(ARTIFACT_DIR / "policy.bin", PolicyParams.load)


@pytest.fixture(scope="session")
def full_mid(coop_params, policy_params):
    stack = PolicyStack(variant=StackVariant.FULL, coop_params=coop_params,
                        policy_params=policy_params)
    return evaluate(scenario_config("mid"), stack, N_EPISODES, BASE_SEED,
                    scenario="mid")


@pytest.fixture(scope="session")
def fixed_mid(coop_params):
    config = scenario_config("mid")
    out = {}
    for h in range(1, 11):
        stack = PolicyStack(variant=StackVariant.FIXED_HORIZON,
                            coop_params=coop_params, fixed_h=h)
        out[h] = evaluate(config, stack, N_EPISODES, BASE_SEED, scenario="mid")
    return out


@pytest.fixture(scope="session")
def orca_mid():
    return evaluate(scenario_config("mid"),
                    PolicyStack(variant=StackVariant.ORCA_BASELINE),
                    N_EPISODES, BASE_SEED, scenario="mid")


@pytest.fixture(scope="session")
def sf_mid():
    return evaluate(scenario_config("mid"),
                    PolicyStack(variant=StackVariant.SF_BASELINE),
                    N_EPISODES, BASE_SEED, scenario="mid")


@pytest.fixture(scope="session")
def full_high(coop_params, policy_params):
    stack = PolicyStack(variant=StackVariant.FULL, coop_params=coop_params,
                        policy_params=policy_params)
    return evaluate(scenario_config("high"), stack, N_EPISODES, BASE_SEED,
                    scenario="high")


@pytest.fixture(scope="session")
def nocoop_high(policy_params):
    stack = PolicyStack(variant=StackVariant.NO_COOP,
                        policy_params=policy_params)
    return evaluate(scenario_config("high"), stack, N_EPISODES, BASE_SEED,
                    scenario="high")


# ---------------------------------------------------------------------------
# 1. analytic gradients match central finite differences


def test_gradient_suites_match_finite_differences():
    start = time.time()
    assert run_cli(["gradcheck"]) == 0
    assert time.time() - start < 10.0


# ---------------------------------------------------------------------------
# 2. Gumbel-Softmax sampling statistics


def test_gumbel_softmax_statistics():
    start = time.time()
    A = np.array([[0.0, 0.55, 0.45], [0.55, 0.0, 0.5], [0.45, 0.5, 0.0]])
    eps = 1e-6
    rng = np.random.default_rng(3)
    n = 20_000
    total = np.zeros_like(A)
    for _ in range(n):
        total += gumbel_select(A, 1.0, eps, rng)
    assert np.max(np.abs(total / n - softmax(np.log(A + eps), axis=1))) < 0.02

    # deterministic limit: with the noise off, T -> 0 concentrates each row
    # on its largest adjacency entry
    cold = gumbel_select(A, 0.001, eps, rng=None)
    assert np.all(cold.max(axis=1) > 0.999)
    assert np.array_equal(cold.argmax(axis=1), np.log(A + eps).argmax(axis=1))
    # stochastic samples at low temperature are one-hot except for
    # vanishingly rare near-ties in the perturbed logits
    maxima = [gumbel_select(A, 1e-4, eps, rng).max(axis=1).min()
              for _ in range(50)]
    assert np.mean(np.array(maxima) > 0.999) >= 0.98
    assert time.time() - start < 5.0


# ---------------------------------------------------------------------------
# 3/4. MPC optimality and barrier forward invariance


def _random_problem(rng, h):
    config = SimConfig()
    robot = RobotState(position=np.zeros(2),
                       heading=rng.uniform(-math.pi, math.pi),
                       velocity=np.zeros(2), goal=rng.uniform(-4, 4, 2),
                       ref_speed=1.0, radius=0.3)
    ped = MpcPedestrian(position=rng.uniform(2.5, 4.0, 2) * rng.choice([-1, 1], 2),
                        velocity=rng.uniform(-0.5, 0.5, 2), radius=0.3,
                        coop_prob=float(rng.uniform()),
                        coop_label=int(rng.integers(2)))
    return build_mpc(robot, [ped], h, SafetyMargins(), MpcWeights(), config), config


def test_mpc_matches_dense_grid_oracle():
    start = time.time()
    rng = np.random.default_rng(8)
    config = SimConfig()
    for _ in range(50):
        problem, config = _random_problem(rng, 1)
        forecasts = project_pedestrians(problem.pedestrians, 1, config.dt)
        sol = solve_mpc(problem)
        grid_best = min(
            _penalized_cost(problem, np.array([[v, w]]), forecasts)
            for v in np.linspace(config.v_min, config.v_max, 41)
            for w in np.linspace(-config.w_max, config.w_max, 41))
        achieved = _penalized_cost(
            problem, np.array([[sol.controls[0].v, sol.controls[0].w]]),
            forecasts)
        assert achieved <= grid_best + 5e-3
    assert time.time() - start < 30.0


def test_dtcbf_forward_invariance():
    rng = np.random.default_rng(12)
    gamma = SafetyMargins().gamma
    checked = 0
    for _ in range(30):
        problem, _ = _random_problem(rng, int(rng.integers(2, 9)))
        sol = solve_mpc(problem)
        if sol.status is not MpcStatus.OPTIMAL:
            continue
        residuals = constraint_residuals(problem, sol.barrier_values)
        assert residuals.min() >= -1e-6
        for i in range(sol.barrier_values.shape[0]):
            h0 = sol.barrier_values[i, 0]
            if h0 < 0.0:
                continue
            for k in range(sol.barrier_values.shape[1]):
                assert sol.barrier_values[i, k] >= (1 - gamma) ** k * h0 - 1e-6
        checked += 1
    assert checked >= 10


# ---------------------------------------------------------------------------
# 5. classifier learnability on the separable dataset


def test_classifier_learns_separable_dataset():
    start = time.time()
    data = make_separable_dataset(5000, seed=0)
    rng = np.random.default_rng(1)
    order = rng.permutation(len(data))
    split = int(0.8 * len(data))
    train = [data[i] for i in order[:split]]
    test = [data[i] for i in order[split:]]
    params, _ = train_coop(train, CoopTrainConfig(seed=0))
    correct = total = 0
    for s in test:
        probs, _ = sample_forward(s, params, 0.5, 1e-6, rng=None)
        correct += int((probs.argmax(axis=1) == s.labels).sum())
        total += len(s.labels)
    accuracy = correct / total
    assert accuracy >= 0.95, f"held-out accuracy {accuracy:.3f}"
    assert time.time() - start < 300.0


# ---------------------------------------------------------------------------
# 6. PPO learnability on the horizon-reward-only environment


class HorizonRewardEnv:
    """Reward depends only on the chosen horizon; observations are constant."""

    def __init__(self, h_max=10, lam_h=0.05, episode_len=8):
        self.h_max = h_max
        self.lam_h = lam_h
        self.episode_len = episode_len
        self.t = 0

    def reset(self, seed):
        self.t = 0
        return np.zeros((0, 5)), np.zeros(9)

    def step(self, action):
        self.t += 1
        reward = -self.lam_h * (self.h_max - (action + 1))
        return (np.zeros((0, 5)), np.zeros(9)), reward, self.t >= self.episode_len, {}


def test_ppo_learns_max_horizon_preference():
    start = time.time()
    h_max = 10
    params = PolicyParams.initialize(30, d_p=16, h_max=h_max)
    params, _ = train_policy([HorizonRewardEnv(h_max=h_max)], params,
                             n_updates=200, rollout_steps=128,
                             config=PpoConfig(minibatch_size=64), seed=30)
    probs, _, _ = policy_forward(np.zeros((0, 5)), np.zeros(9), params)
    assert probs[h_max - 1] > 0.9
    assert time.time() - start < 600.0


# ---------------------------------------------------------------------------
# 7. bit-exact reproducibility of evaluation runs


def test_eval_reruns_are_byte_identical(tmp_path):
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        rc = run_cli(["eval", "--stack", "orca", "--scenario", "mid",
                      "--episodes", "10", "--seed", "3", "--out", str(out)])
        assert rc == 0
        outputs.append(((out / "episodes.csv").read_bytes(),
                        (out / "summary.json").read_bytes()))
    assert outputs[0] == outputs[1]


# ---------------------------------------------------------------------------
# 8-10. quantitative orderings, 100 episodes per cell


def test_full_stack_beats_social_force_and_matches_orca_timeouts(
        full_mid, sf_mid, orca_mid):
    print(f"\nfull/mid SR {full_mid.sr:.1f} OR {full_mid.otr:.1f} | "
          f"sf SR {sf_mid.sr:.1f} | orca OR {orca_mid.otr:.1f}")
    assert full_mid.sr > sf_mid.sr
    assert full_mid.otr <= orca_mid.otr


def test_full_stack_tracks_best_fixed_horizon(full_mid, fixed_mid):
    srs = {h: m.sr for h, m in fixed_mid.items()}
    print(f"\nfull/mid SR {full_mid.sr:.1f} | fixed " +
          " ".join(f"h{h}:{sr:.0f}" for h, sr in srs.items()))
    for h, sr in srs.items():
        assert full_mid.sr >= sr - 3.0, (
            f"full SR {full_mid.sr:.1f} trails FixedHorizon({h}) "
            f"SR {sr:.1f} by more than 3 points")
    assert full_mid.sr >= min(srs.values()) + 5.0


def test_cooperation_awareness_does_not_slow_the_robot(full_high, nocoop_high):
    print(f"\nfull/high ANT {full_high.ant} SR {full_high.sr:.1f} | "
          f"nocoop/high ANT {nocoop_high.ant} SR {nocoop_high.sr:.1f}")
    assert full_high.ant is not None and nocoop_high.ant is not None
    assert full_high.ant <= nocoop_high.ant


# ---------------------------------------------------------------------------
# 11. exact metric goldens


def _golden_log(outcome, duration, path_length, n_steps=4, n_intrusions=0):
    reward = RewardBreakdown(0, 0, 0, 0, 0, 0)
    steps = [StepRecord(step_index=k, digest="x",
                        robot_position=np.zeros(2),
                        ped_positions=np.zeros((1, 2)), visible=[0],
                        coop_probs={0: 0.5}, h=5, control=Control(1.0, 0.0),
                        reward=reward, min_barrier=1.0,
                        intrusion=k < n_intrusions, degraded=False)
             for k in range(n_steps)]
    return EpisodeLog(scenario="mid", seed=0, outcome=outcome,
                      duration=duration, path_length=path_length, steps=steps,
                      ped_labels=[1], goal=np.array([5.0, 0.0]),
                      sensing_range=5.0)


def test_metric_goldens():
    logs = [_golden_log(EpisodeOutcome.SUCCESS, 10.0, 12.0),
            _golden_log(EpisodeOutcome.COLLISION, 4.0, 3.0)]
    m = compute_metrics(logs)
    assert (m.sr, m.cr, m.otr) == (50.0, 50.0, 0.0)
    assert m.ant == 10.0
    assert m.atl == 12.0

    intrusive = _golden_log(EpisodeOutcome.SUCCESS, 10.0, 10.0, n_steps=40,
                            n_intrusions=3)
    assert intrusion_ratio(intrusive) == pytest.approx(7.5)
