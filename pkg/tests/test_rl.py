import math

import numpy as np
import pytest

from horizon_nav.nn import finite_difference_grad, max_relative_error
from horizon_nav.rl import (
    PolicyParams, PpoConfig, RolloutBuffer, collect_rollouts, encode_forward,
    policy_forward, ppo_loss_and_grads, ppo_update, sample_action,
    train_policy,
)


def random_obs(rng, n_peds, d_scale=1.0):
    ped = rng.normal(scale=d_scale, size=(n_peds, 5))
    robot = rng.normal(scale=d_scale, size=9)
    return ped, robot


class TestForward:
    def test_distribution_valid(self):
        rng = np.random.default_rng(0)
        params = PolicyParams.initialize(0, d_p=16, h_max=10)
        for n_peds in (0, 1, 4):
            probs, value, _ = policy_forward(*random_obs(rng, n_peds), params)
            assert probs.shape == (10,)
            assert (probs >= 0).all()
            assert probs.sum() == pytest.approx(1.0, abs=1e-9)
            assert math.isfinite(value)

    def test_zero_peds_zero_context(self):
        params = PolicyParams.initialize(1, d_p=8, h_max=4)
        joint, _ = encode_forward(np.zeros((0, 5)),
                                  np.random.default_rng(2).normal(size=9),
                                  params)
        assert np.all(joint[8:] == 0.0)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        params = PolicyParams.initialize(3, d_p=16, h_max=6)
        ped, robot = random_obs(rng, 5)
        probs_a, value_a, _ = policy_forward(ped, robot, params)
        perm = rng.permutation(5)
        probs_b, value_b, _ = policy_forward(ped[perm], robot, params)
        assert probs_a == pytest.approx(probs_b, abs=1e-12)
        assert value_a == pytest.approx(value_b, abs=1e-12)

    def test_duplicate_ped_changes_output(self):
        rng = np.random.default_rng(4)
        params = PolicyParams.initialize(4, d_p=16, h_max=6)
        ped, robot = random_obs(rng, 2)
        probs_single, _, _ = policy_forward(ped, robot, params)
        probs_dup, _, _ = policy_forward(np.vstack([ped, ped[:1]]), robot,
                                         params)
        assert np.abs(probs_single - probs_dup).max() > 1e-9

    def test_zero_policy_head_uniform(self):
        params = PolicyParams.initialize(5, d_p=8, h_max=5)
        params.tensors["pol_W"][:] = 0.0
        params.tensors["pol_b"][:] = 0.0
        params.tensors["val_W"][:] = 0.0
        params.tensors["val_b"][:] = 1.25
        probs, value, _ = policy_forward(*random_obs(np.random.default_rng(6), 3),
                                         params)
        assert probs == pytest.approx(np.full(5, 0.2))
        assert value == pytest.approx(1.25)

    def test_sampling_matches_probabilities(self):
        probs = np.array([0.5, 0.3, 0.15, 0.05])
        rng = np.random.default_rng(11)
        draws = np.array([sample_action(probs, rng) for _ in range(100_000)])
        freqs = np.bincount(draws, minlength=4) / len(draws)
        assert np.abs(freqs - probs).max() < 0.01


class TestSerialization:
    def test_round_trip(self, tmp_path):
        params = PolicyParams.initialize(9, d_p=12, h_max=7)
        path = tmp_path / "policy.bin"
        params.save(path)
        loaded = PolicyParams.load(path)
        assert loaded.d_p == 12 and loaded.h_max == 7
        for name in PolicyParams.param_names():
            assert np.array_equal(loaded.tensors[name], params.tensors[name])


class TestGae:
    def test_single_step_done(self):
        buf = RolloutBuffer()
        buf.add((np.zeros((0, 5)), np.zeros(9)), 0, -1.0, reward=-20.0,
                value=2.0, done=True)
        buf.compute_gae(0.99, 0.95)
        assert buf.advantages[0] == pytest.approx(-22.0)
        assert buf.returns[0] == pytest.approx(-20.0)

    def test_multi_step_oracle(self):
        rewards = [1.0, 0.5, -1.0]
        values = [0.3, 0.2, 0.1]
        gamma, lam = 0.9, 0.8
        buf = RolloutBuffer()
        for r, v in zip(rewards, values):
            buf.add((np.zeros((0, 5)), np.zeros(9)), 0, 0.0, r, v, False)
        buf.compute_gae(gamma, lam, last_value=0.4)
        # independent recursive evaluation
        deltas = [rewards[k] + gamma * (values + [0.4])[k + 1] - values[k]
                  for k in range(3)]
        expected = [0.0, 0.0, 0.0]
        acc = 0.0
        for k in (2, 1, 0):
            acc = deltas[k] + gamma * lam * acc
            expected[k] = acc
        assert buf.advantages == pytest.approx(expected)
        assert buf.returns == pytest.approx(np.array(expected) + values)

    def test_done_resets_accumulation(self):
        buf = RolloutBuffer()
        for done in (True, False):
            buf.add((np.zeros((0, 5)), np.zeros(9)), 0, 0.0, 1.0, 0.0, done)
        buf.compute_gae(0.99, 0.95, last_value=5.0)
        # step 0 ends an episode: its advantage ignores everything after
        assert buf.advantages[0] == pytest.approx(1.0)


class FixedRewardEnv:
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
        done = self.t >= self.episode_len
        return (np.zeros((0, 5)), np.zeros(9)), reward, done, {}


class TestRollouts:
    def test_zero_steps_empty(self):
        params = PolicyParams.initialize(0, d_p=8, h_max=4)
        buf = collect_rollouts([FixedRewardEnv(h_max=4)], params, 0,
                               np.random.default_rng(0))
        assert len(buf) == 0

    def test_deterministic(self):
        params = PolicyParams.initialize(1, d_p=8, h_max=4)
        bufs = [collect_rollouts([FixedRewardEnv(h_max=4)], params, 20,
                                 np.random.default_rng(5)) for _ in range(2)]
        assert bufs[0].actions == bufs[1].actions
        assert bufs[0].rewards == bufs[1].rewards
        assert bufs[0].log_probs == bufs[1].log_probs

    def test_interleaving_env_major(self):
        params = PolicyParams.initialize(2, d_p=8, h_max=4)
        envs = [FixedRewardEnv(h_max=4, episode_len=100),
                FixedRewardEnv(h_max=4, lam_h=0.5, episode_len=100)]
        buf = collect_rollouts(envs, params, 3, np.random.default_rng(7))
        assert len(buf) == 6
        # odd slots belong to env 1, whose per-step reward scale is 10x
        env1 = np.array(buf.rewards[1::2])
        assert (env1 <= 0).all()
        assert set(np.round(env1 / 0.5).astype(int)) <= {-3, -2, -1, 0}


class TestPpo:
    def make_buffer(self, params, rng, n=4):
        buf = RolloutBuffer()
        for k in range(n):
            obs = random_obs(rng, k % 3)
            probs, value, _ = policy_forward(*obs, params)
            action = int(rng.integers(params.h_max))
            # old log-probs offset from current so ratios are not exactly 1
            buf.add(obs, action, float(np.log(probs[action])) + 0.05 * (k - 1),
                    float(rng.normal()), value, k == n - 1)
        buf.compute_gae(0.99, 0.95)
        return buf

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(21)
        params = PolicyParams.initialize(21, d_p=6, h_max=4)
        buf = self.make_buffer(params, rng)
        config = PpoConfig(clip=0.2, entropy_coeff=0.01, value_coeff=0.5)
        adv = buf.advantages
        adv = (adv - adv.mean()) / max(float(adv.std()), 1e-8)
        args = (buf.observations, buf.actions, buf.log_probs, adv, buf.returns,
                config)
        _, grads, _ = ppo_loss_and_grads(params, *args)

        def loss_fn(tensors):
            return ppo_loss_and_grads(params, *args)[0]

        numeric = finite_difference_grad(loss_fn, params.tensors)
        assert max_relative_error(grads, numeric) < 1e-4

    def test_ratio_one_surrogate_is_mean_advantage(self):
        rng = np.random.default_rng(22)
        params = PolicyParams.initialize(22, d_p=6, h_max=4)
        buf = RolloutBuffer()
        for k in range(4):
            obs = random_obs(rng, 1)
            probs, value, _ = policy_forward(*obs, params)
            action = int(rng.integers(4))
            buf.add(obs, action, float(np.log(probs[action])),
                    float(rng.normal()), value, False)
        buf.compute_gae(0.99, 0.95)
        adv = buf.advantages
        config = PpoConfig()
        _, _, stats = ppo_loss_and_grads(
            params, buf.observations, buf.actions, buf.log_probs, adv,
            buf.returns, config)
        assert stats["policy_loss"] == pytest.approx(-float(np.mean(adv)))

    def test_zero_advantages_freeze_policy_term(self):
        rng = np.random.default_rng(23)
        params = PolicyParams.initialize(23, d_p=6, h_max=4)
        buf = self.make_buffer(params, rng)
        zeros = np.zeros(len(buf))
        config = PpoConfig(entropy_coeff=0.0, value_coeff=0.0)
        loss, grads, stats = ppo_loss_and_grads(
            params, buf.observations, buf.actions, buf.log_probs, zeros,
            buf.returns, config)
        assert stats["policy_loss"] == 0.0
        assert loss == 0.0
        for g in grads.values():
            assert np.abs(g).max() == pytest.approx(0.0, abs=1e-15)

    def test_update_moves_params_and_is_deterministic(self):
        results = []
        for _ in range(2):
            rng = np.random.default_rng(24)
            params = PolicyParams.initialize(24, d_p=6, h_max=4)
            buf = self.make_buffer(params, rng, n=8)
            ppo_update(buf, params, PpoConfig(minibatch_size=4), rng)
            results.append(params)
        a, b = results
        assert any(np.abs(a.tensors[n]).sum() > 0 for n in a.tensors)
        for name in a.tensors:
            assert np.array_equal(a.tensors[name], b.tensors[name])


class TestLearningSanity:
    def test_horizon_reward_drives_max_horizon(self):
        h_max = 10
        params = PolicyParams.initialize(30, d_p=16, h_max=h_max)
        env = FixedRewardEnv(h_max=h_max, lam_h=0.05)
        config = PpoConfig(minibatch_size=64)
        params, rows = train_policy([env], params, n_updates=150,
                                    rollout_steps=128, config=config, seed=30)
        probs, _, _ = policy_forward(np.zeros((0, 5)), np.zeros(9), params)
        assert probs[h_max - 1] > 0.9

    def test_learning_curve_csv(self, tmp_path):
        params = PolicyParams.initialize(31, d_p=8, h_max=4)
        path = tmp_path / "curve.csv"
        train_policy([FixedRewardEnv(h_max=4)], params, n_updates=3,
                     rollout_steps=16, config=PpoConfig(minibatch_size=16),
                     seed=31, csv_path=path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "update,mean_return,mean_horizon,policy_loss,value_loss,entropy"
        assert len(lines) == 4
