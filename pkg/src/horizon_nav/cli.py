"""Command-line entry points for training, evaluation, sweeps, and replay.

Subcommands:
  gen-data      generate a cooperation-classification dataset (pickle)
  train-coop    train the cooperation classifier, save binary params + curve
  train-policy  PPO-train the horizon policy on the simulator
  eval          run episodes with a chosen stack, write metrics
  sweep         fixed-horizon sweep over scenario presets (CSV + SVG)
  replay        render a saved episode log to SVG
  gradcheck     run the finite-difference gradient suites

Exit codes: 0 success, 1 usage error, 2 runtime failure.  All artifacts land
under the --out directory.  HORIZON_NAV_THREADS caps episode parallelism.
"""

from __future__ import annotations

import argparse
import csv
import os
import pickle
import sys

import numpy as np


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="horizon-nav", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("gen-data")
    p.add_argument("--samples", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--separable", action="store_true",
                   help="use the crafted head-on separable generator")
    p.add_argument("--scenario", default="mid")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-coop")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-policy")
    p.add_argument("--coop", help="trained classifier params (optional)")
    p.add_argument("--scenario", default="mid")
    p.add_argument("--updates", type=int, default=50)
    p.add_argument("--rollout-steps", type=int, default=128)
    p.add_argument("--envs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval")
    p.add_argument("--stack", required=True,
                   choices=["full", "fixed", "nocoop", "orca", "sf"])
    p.add_argument("--h", type=int, default=5, help="horizon for --stack fixed")
    p.add_argument("--coop", help="classifier params path")
    p.add_argument("--policy", help="policy params path")
    p.add_argument("--scenario", default="mid")
    p.add_argument("--episodes", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="INI config overriding sim defaults")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep")
    p.add_argument("--scenarios", default="low,mid,high")
    p.add_argument("--horizons", default="1-10")
    p.add_argument("--episodes", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coop", help="classifier params path")
    p.add_argument("--out", required=True)

    p = sub.add_parser("replay")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)

    sub.add_parser("gradcheck")
    return parser


def _parse_horizons(text: str) -> list[int]:
    if "-" in text:
        lo, hi = text.split("-", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in text.split(",") if tok]


def _cmd_gen_data(args) -> int:
    from . import coopnet
    from .config import scenario_config
    os.makedirs(args.out, exist_ok=True)
    if args.separable:
        samples = coopnet.make_separable_dataset(args.samples, args.seed)
    else:
        config = scenario_config(args.scenario)
        samples = coopnet.generate_dataset(config, args.samples, args.seed)
    path = os.path.join(args.out, "coop_dataset.pkl")
    with open(path, "wb") as f:
        pickle.dump(samples, f)
    print(f"wrote {len(samples)} samples to {path}")
    return 0


def _cmd_train_coop(args) -> int:
    from .coopnet import CoopTrainConfig, train_coop
    os.makedirs(args.out, exist_ok=True)
    with open(args.data, "rb") as f:
        samples = pickle.load(f)
    params, losses = train_coop(samples, CoopTrainConfig(epochs=args.epochs,
                                                         seed=args.seed))
    params_path = os.path.join(args.out, "coop_net.bin")
    params.save(params_path)
    with open(os.path.join(args.out, "coop_curve.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss"])
        writer.writerows(enumerate(losses))
    print(f"trained on {len(samples)} samples, final loss {losses[-1]:.4f}, "
          f"params at {params_path}")
    return 0


def _cmd_train_policy(args) -> int:
    from .bench import NavigationEnv
    from .config import scenario_config
    from .coopnet import CoopNetParams
    from .rl import PolicyParams, PpoConfig, train_policy
    os.makedirs(args.out, exist_ok=True)
    coop = CoopNetParams.load(args.coop) if args.coop else None
    config = scenario_config(args.scenario)
    envs = [NavigationEnv(config, coop_params=coop)
            for _ in range(args.envs)]
    params = PolicyParams.initialize(args.seed)
    params, _rows = train_policy(envs, params, args.updates,
                                 args.rollout_steps, PpoConfig(),
                                 seed=args.seed,
                                 csv_path=os.path.join(args.out,
                                                       "policy_curve.csv"))
    path = os.path.join(args.out, "policy.bin")
    params.save(path)
    print(f"trained policy for {args.updates} updates, params at {path}")
    return 0


def _build_stack(args):
    from .bench import PolicyStack, StackVariant
    from .coopnet import CoopNetParams
    from .rl import PolicyParams
    coop = CoopNetParams.load(args.coop) if args.coop else None
    policy = PolicyParams.load(args.policy) if args.policy else None
    variant = {"full": StackVariant.FULL, "fixed": StackVariant.FIXED_HORIZON,
               "nocoop": StackVariant.NO_COOP,
               "orca": StackVariant.ORCA_BASELINE,
               "sf": StackVariant.SF_BASELINE}[args.stack]
    return PolicyStack(variant=variant, coop_params=coop,
                       policy_params=policy,
                       fixed_h=args.h if args.stack == "fixed" else None)


def _cmd_eval(args) -> int:
    from .bench import evaluate
    from .config import load_config, scenario_config
    base = load_config(args.config) if args.config else None
    config = scenario_config(args.scenario, base)
    stack = _build_stack(args)
    summary = evaluate(config, stack, args.episodes, args.seed,
                       out_dir=args.out, scenario=args.scenario)
    print(f"SR {summary.sr:.1f}  CR {summary.cr:.1f}  OR {summary.otr:.1f}  "
          f"ANT {summary.ant}  ATL {summary.atl}  AIR {summary.air:.2f}")
    return 0


def _cmd_sweep(args) -> int:
    from .bench import fixed_horizon_sweep
    from .coopnet import CoopNetParams
    coop = CoopNetParams.load(args.coop) if args.coop else None
    scenarios = [s for s in args.scenarios.split(",") if s]
    horizons = _parse_horizons(args.horizons)
    rows = fixed_horizon_sweep(scenarios, horizons, args.episodes, args.seed,
                               args.out, coop_params=coop)
    print(f"swept {len(rows)} cells into {args.out}")
    return 0


def _cmd_replay(args) -> int:
    from .bench import load_episode_log, render_trajectory
    os.makedirs(args.out, exist_ok=True)
    log = load_episode_log(args.log)
    svg = render_trajectory(log)
    path = os.path.join(args.out, "trajectory.svg")
    with open(path, "w") as f:
        f.write(svg)
    print(f"rendered {len(log.steps)} steps to {path}")
    return 0


def _cmd_gradcheck(_args) -> int:
    from .coopnet import CoopNetParams, CoopSample, batch_loss_and_grads
    from .nn import finite_difference_grad, max_relative_error
    from .rl import PolicyParams, PpoConfig, policy_forward, ppo_loss_and_grads
    rng = np.random.default_rng(0)

    def random_sample(m=3, hist_len=8):
        deltas = rng.normal(scale=0.2, size=(m, hist_len, 2))
        A = rng.uniform(0.1, 0.9, size=(m, m))
        A = np.triu(A, 1)
        A = A + A.T
        labels = rng.integers(0, 2, size=m).astype(float)
        return CoopSample(deltas=deltas,
                          valid=np.ones((m, hist_len), dtype=bool),
                          adjacency=A, labels=labels)

    coop_params = CoopNetParams.initialize(0, d=8, d_ff=16, n_layers=2)
    samples = [random_sample() for _ in range(2)]
    _, grads = batch_loss_and_grads(samples, coop_params, 1.0, 1e-6, rng=None)
    numeric = finite_difference_grad(
        lambda t: batch_loss_and_grads(samples, coop_params, 1.0, 1e-6,
                                       rng=None)[0],
        coop_params.tensors)
    err_coop = max_relative_error(grads, numeric)

    policy = PolicyParams.initialize(1, d_p=6, h_max=4)
    obs, actions, old_lp, values = [], [], [], []
    for k in range(4):
        o = (rng.normal(size=(k % 3, 5)), rng.normal(size=9))
        probs, value, _ = policy_forward(*o, policy)
        a = int(rng.integers(4))
        obs.append(o)
        actions.append(a)
        old_lp.append(float(np.log(probs[a])) + 0.05 * (k - 1))
        values.append(value)
    adv = rng.normal(size=4)
    adv = (adv - adv.mean()) / adv.std()
    rets = rng.normal(size=4)
    config = PpoConfig()
    _, pgrads, _ = ppo_loss_and_grads(policy, obs, actions, old_lp, adv, rets,
                                      config)
    pnumeric = finite_difference_grad(
        lambda t: ppo_loss_and_grads(policy, obs, actions, old_lp, adv, rets,
                                     config)[0],
        policy.tensors)
    err_ppo = max_relative_error(pgrads, pnumeric)

    print(f"coop-net max relative gradient error: {err_coop:.2e}")
    print(f"ppo max relative gradient error: {err_ppo:.2e}")
    ok = err_coop < 1e-4 and err_ppo < 1e-4
    print("PASS" if ok else "FAIL")
    return 0 if ok else 2


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train-coop": _cmd_train_coop,
    "train-policy": _cmd_train_policy,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "replay": _cmd_replay,
    "gradcheck": _cmd_gradcheck,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError, pickle.PickleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
