"""Horizon-selection policy: encoder, categorical policy/value heads, PPO.

The policy observes the current interaction graph (robot features plus
per-pedestrian relative state and inferred cooperation probability) and picks
a discrete MPC horizon in {1, ..., h_max}.  All forward/backward passes are
explicit numpy; gradients are verifiable by finite differences.

Environments used for rollout collection follow a tiny gym-like contract:
`reset(seed) -> obs` and `step(action_index) -> (obs, reward, done, info)`
where an observation is a `(ped_feats, robot_feat)` pair with ped_feats of
shape (M, 5) and robot_feat of shape (9,).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .nn import (
    Adam, affine, affine_backward, clip_grad_norm, init_affine, load_tensors,
    save_tensors, softmax, softmax_backward, tanh_backward,
)
from .sensing import PedestrianObservation, SpatioTemporalGraph

PED_FEATURE_DIM = 5
ROBOT_FEATURE_DIM = 9


@dataclass
class PolicyParams:
    """Weights for the shared encoders, attention pooling, and both heads."""

    d_p: int
    h_max: int
    tensors: dict[str, np.ndarray]

    @staticmethod
    def param_names() -> list[str]:
        return ["ped_W1", "ped_b1", "ped_W2", "ped_b2",
                "rob_W1", "rob_b1", "rob_W2", "rob_b2",
                "att_Wq", "att_Wk", "att_Wv",
                "pol_W", "pol_b", "val_W", "val_b"]

    @classmethod
    def initialize(cls, seed: int, d_p: int = 64, h_max: int = 10) -> "PolicyParams":
        rng = np.random.default_rng(seed)
        t: dict[str, np.ndarray] = {}
        t["ped_W1"], t["ped_b1"] = init_affine(rng, PED_FEATURE_DIM, d_p)
        t["ped_W2"], t["ped_b2"] = init_affine(rng, d_p, d_p)
        t["rob_W1"], t["rob_b1"] = init_affine(rng, ROBOT_FEATURE_DIM, d_p)
        t["rob_W2"], t["rob_b2"] = init_affine(rng, d_p, d_p)
        bound = 1.0 / math.sqrt(d_p)
        t["att_Wq"] = rng.uniform(-bound, bound, size=(d_p, d_p))
        t["att_Wk"] = rng.uniform(-bound, bound, size=(d_p, d_p))
        t["att_Wv"] = rng.uniform(-bound, bound, size=(d_p, d_p))
        t["pol_W"], t["pol_b"] = init_affine(rng, 2 * d_p, h_max)
        t["val_W"], t["val_b"] = init_affine(rng, 2 * d_p, 1)
        return cls(d_p=d_p, h_max=h_max, tensors=t)

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.d_p, self.h_max,
                            {k: v.copy() for k, v in self.tensors.items()})

    def save(self, path) -> None:
        save_tensors(path, [self.d_p, self.h_max],
                     [self.tensors[n] for n in self.param_names()])

    @classmethod
    def load(cls, path) -> "PolicyParams":
        metadata, tensors = load_tensors(path)
        d_p, h_max = metadata
        return cls(d_p=int(d_p), h_max=int(h_max),
                   tensors=dict(zip(cls.param_names(), tensors)))


def graph_features(graph: SpatioTemporalGraph) -> tuple[np.ndarray, np.ndarray]:
    """(M, 5) pedestrian features and (9,) robot features from a graph."""
    feats = np.array([[o.rel_position[0], o.rel_position[1],
                       o.rel_velocity[0], o.rel_velocity[1], o.coop_prob]
                      for o in graph.ped_nodes]).reshape(-1, PED_FEATURE_DIM)
    return feats, graph.robot_node.astype(float)


def observation_features(obs: list[PedestrianObservation],
                         robot_node: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    feats = np.array([[o.rel_position[0], o.rel_position[1],
                       o.rel_velocity[0], o.rel_velocity[1], o.coop_prob]
                      for o in obs]).reshape(-1, PED_FEATURE_DIM)
    return feats, robot_node.astype(float)


def _mlp_forward(x, W1, b1, W2, b2):
    h1 = np.tanh(affine(x, W1, b1))
    h2 = np.tanh(affine(h1, W2, b2))
    return h1, h2


def encode_forward(ped_feats: np.ndarray, robot_feat: np.ndarray,
                   params: PolicyParams):
    """Joint feature vector (2 d_p) and cache for the backward pass.

    The robot embedding is the attention query over pedestrian embeddings;
    with no pedestrians the pooled context is the zero vector.
    """
    t = params.tensors
    r1, r2 = _mlp_forward(robot_feat, t["rob_W1"], t["rob_b1"],
                          t["rob_W2"], t["rob_b2"])
    M = ped_feats.shape[0]
    if M > 0:
        p1, p2 = _mlp_forward(ped_feats, t["ped_W1"], t["ped_b1"],
                              t["ped_W2"], t["ped_b2"])
        q = r2 @ t["att_Wq"]
        K = p2 @ t["att_Wk"]
        V = p2 @ t["att_Wv"]
        scores = K @ q / math.sqrt(params.d_p)
        weights = softmax(scores)
        context = weights @ V
    else:
        p1 = p2 = K = V = weights = None
        q = context = np.zeros(params.d_p)
    joint = np.concatenate([r2, context])
    cache = (ped_feats, robot_feat, r1, r2, p1, p2, q, K, V, weights)
    return joint, cache


def heads_forward(joint: np.ndarray, params: PolicyParams):
    """Categorical probabilities over horizons and the value estimate."""
    t = params.tensors
    logits = affine(joint, t["pol_W"], t["pol_b"])
    probs = softmax(logits)
    value = float(affine(joint, t["val_W"], t["val_b"])[0])
    return probs, value


def policy_forward(ped_feats: np.ndarray, robot_feat: np.ndarray,
                   params: PolicyParams):
    joint, cache = encode_forward(ped_feats, robot_feat, params)
    probs, value = heads_forward(joint, params)
    return probs, value, (joint, cache)


def _zero_grads(params: PolicyParams) -> dict[str, np.ndarray]:
    return {n: np.zeros_like(v) for n, v in params.tensors.items()}


def policy_backward(dlogits: np.ndarray, dvalue: float, fwd_cache,
                    params: PolicyParams, grads: dict[str, np.ndarray]) -> None:
    """Accumulate gradients given dL/dlogits and dL/dvalue for one step."""
    t = params.tensors
    joint, (ped_feats, robot_feat, r1, r2, p1, p2, q, K, V, weights) = fwd_cache
    d_p = params.d_p

    djoint, dWp, dbp = affine_backward(joint, t["pol_W"], dlogits)
    grads["pol_W"] += dWp
    grads["pol_b"] += dbp
    djv, dWv_head, dbv = affine_backward(joint, t["val_W"], np.array([dvalue]))
    grads["val_W"] += dWv_head
    grads["val_b"] += dbv
    djoint = djoint + djv

    dr2 = djoint[:d_p].copy()
    dcontext = djoint[d_p:]

    if ped_feats.shape[0] > 0:
        dweights = V @ dcontext
        dV = np.outer(weights, dcontext)
        dscores = softmax_backward(weights, dweights)
        dK = np.outer(dscores, q) / math.sqrt(d_p)
        dq = K.T @ dscores / math.sqrt(d_p)
        grads["att_Wq"] += np.outer(r2, dq)
        dr2 += t["att_Wq"] @ dq
        grads["att_Wk"] += p2.T @ dK
        grads["att_Wv"] += p2.T @ dV
        dp2 = dK @ t["att_Wk"].T + dV @ t["att_Wv"].T
        dpre2 = tanh_backward(p2, dp2)
        dp1, dW2, db2 = affine_backward(p1, t["ped_W2"], dpre2)
        grads["ped_W2"] += dW2
        grads["ped_b2"] += db2
        dpre1 = tanh_backward(p1, dp1)
        _, dW1, db1 = affine_backward(ped_feats, t["ped_W1"], dpre1)
        grads["ped_W1"] += dW1
        grads["ped_b1"] += db1

    dpre2r = tanh_backward(r2, dr2)
    dr1, dW2r, db2r = affine_backward(r1, t["rob_W2"], dpre2r)
    grads["rob_W2"] += dW2r
    grads["rob_b2"] += db2r
    dpre1r = tanh_backward(r1, dr1)
    _, dW1r, db1r = affine_backward(robot_feat, t["rob_W1"], dpre1r)
    grads["rob_W1"] += dW1r
    grads["rob_b1"] += db1r


# ---------------------------------------------------------------------------
# rollouts and PPO


@dataclass
class RolloutBuffer:
    observations: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)          # 0-based indices
    log_probs: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    dones: list[bool] = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.actions)

    def add(self, obs, action: int, log_prob: float, reward: float,
            value: float, done: bool) -> None:
        self.observations.append(obs)
        self.actions.append(action)
        self.log_probs.append(log_prob)
        self.rewards.append(reward)
        self.values.append(value)
        self.dones.append(done)

    def compute_gae(self, gamma: float, lam: float,
                    last_value: float = 0.0) -> None:
        """Generalized advantage estimates and returns, newest to oldest."""
        n = len(self)
        adv = np.zeros(n)
        gae = 0.0
        next_value = last_value
        for k in reversed(range(n)):
            mask = 0.0 if self.dones[k] else 1.0
            delta = self.rewards[k] + gamma * next_value * mask - self.values[k]
            gae = delta + gamma * lam * mask * gae
            adv[k] = gae
            next_value = self.values[k]
        self.advantages = adv
        self.returns = adv + np.array(self.values)


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    epochs: int = 4
    minibatch_size: int = 64
    entropy_coeff: float = 0.01
    value_coeff: float = 0.5
    grad_clip: float = 5.0


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    return int(np.searchsorted(cdf, rng.uniform(), side="right").clip(0, len(probs) - 1))


def collect_rollouts(envs: list, params: PolicyParams, n_steps: int,
                     rng: np.random.Generator) -> RolloutBuffer:
    """Run the stochastic policy for n_steps per environment.

    Environments are stepped in index order inside each timestep so the
    buffer layout is deterministic for a fixed rng state.  Episodes that end
    are reset in place with a seed drawn from rng.
    """
    buffer = RolloutBuffer()
    observations = [env.reset(int(rng.integers(2 ** 31))) for env in envs]
    for _ in range(n_steps):
        for idx, env in enumerate(envs):
            ped_feats, robot_feat = observations[idx]
            probs, value, _ = policy_forward(ped_feats, robot_feat, params)
            action = sample_action(probs, rng)
            log_prob = float(np.log(max(probs[action], 1e-12)))
            obs_next, reward, done, _info = env.step(action)
            buffer.add((ped_feats, robot_feat), action, log_prob, reward,
                       value, done)
            if done:
                obs_next = env.reset(int(rng.integers(2 ** 31)))
            observations[idx] = obs_next
    return buffer


def ppo_loss_and_grads(params: PolicyParams, observations, actions,
                       old_log_probs, advantages, returns, config: PpoConfig):
    """Clipped-surrogate PPO loss over a minibatch, with analytic gradients.

    Loss = policy surrogate + value_coeff * value MSE - entropy_coeff * entropy,
    averaged over the minibatch.
    """
    n = len(actions)
    grads = _zero_grads(params)
    policy_loss = value_loss = entropy_sum = 0.0
    for k in range(n):
        ped_feats, robot_feat = observations[k]
        probs, value, fwd_cache = policy_forward(ped_feats, robot_feat, params)
        a = actions[k]
        adv = advantages[k]
        log_p = math.log(max(probs[a], 1e-12))
        ratio = math.exp(log_p - old_log_probs[k])
        clipped = min(max(ratio, 1.0 - config.clip), 1.0 + config.clip)
        surr1 = ratio * adv
        surr2 = clipped * adv
        policy_loss += -min(surr1, surr2)
        # gradient flows only through the unclipped ratio when it is active
        dlogp = -ratio * adv / n if surr1 <= surr2 else 0.0
        one_hot = np.zeros_like(probs)
        one_hot[a] = 1.0
        dlogits = dlogp * (one_hot - probs)

        log_probs = np.log(np.maximum(probs, 1e-12))
        entropy = -float(probs @ log_probs)
        entropy_sum += entropy
        dlogits += config.entropy_coeff / n * probs * (log_probs + entropy)

        err = value - returns[k]
        value_loss += err * err
        dvalue = config.value_coeff * 2.0 * err / n

        policy_backward(dlogits, dvalue, fwd_cache, params, grads)

    policy_loss /= n
    value_loss /= n
    entropy_mean = entropy_sum / n
    loss = policy_loss + config.value_coeff * value_loss \
        - config.entropy_coeff * entropy_mean
    return loss, grads, {"policy_loss": policy_loss, "value_loss": value_loss,
                         "entropy": entropy_mean}


def ppo_update(buffer: RolloutBuffer, params: PolicyParams, config: PpoConfig,
               rng: np.random.Generator, optimizer: Adam | None = None):
    """In-place PPO update from a buffer with computed advantages."""
    if buffer.advantages is None:
        raise ValueError("call compute_gae before ppo_update")
    adv = buffer.advantages
    adv = (adv - adv.mean()) / max(float(adv.std()), 1e-8)
    optimizer = optimizer or Adam(config.lr)
    stats = {}
    for _ in range(config.epochs):
        order = rng.permutation(len(buffer))
        for start in range(0, len(buffer), config.minibatch_size):
            idx = order[start:start + config.minibatch_size]
            loss, grads, stats = ppo_loss_and_grads(
                params,
                [buffer.observations[i] for i in idx],
                [buffer.actions[i] for i in idx],
                [buffer.log_probs[i] for i in idx],
                adv[idx], buffer.returns[idx], config)
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite PPO loss {loss}; stats {stats}")
            if config.grad_clip > 0:
                clip_grad_norm(grads, config.grad_clip)
            optimizer.step(params.tensors, grads)
    return params, stats


def train_policy(envs: list, params: PolicyParams, n_updates: int,
                 rollout_steps: int, config: PpoConfig, seed: int,
                 csv_path=None, log_every: int = 1):
    """PPO training loop; optionally logs a CSV learning curve.

    CSV columns: update, mean_return, mean_horizon, policy_loss, value_loss,
    entropy.
    """
    rng = np.random.default_rng(seed)
    optimizer = Adam(config.lr)
    rows = []
    for update in range(n_updates):
        buffer = collect_rollouts(envs, params, rollout_steps, rng)
        buffer.compute_gae(config.gamma, config.lam)
        params, stats = ppo_update(buffer, params, config, rng, optimizer)
        mean_return = float(np.mean(buffer.returns))
        mean_horizon = float(np.mean([a + 1 for a in buffer.actions]))
        if update % log_every == 0 or update == n_updates - 1:
            rows.append([update, mean_return, mean_horizon,
                         stats["policy_loss"], stats["value_loss"],
                         stats["entropy"]])
    if csv_path is not None:
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["update", "mean_return", "mean_horizon",
                             "policy_loss", "value_loss", "entropy"])
            writer.writerows(rows)
    return params, rows
