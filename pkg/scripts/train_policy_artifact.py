"""Train the shipped horizon-policy artifact.

Training zeroes the high-branch social-penalty scale (lambda_high = 0
instead of the environment default -0.1). With the default scale the
per-step horizon penalty near non-cooperative crowds outweighs the terminal
success/collision swing at this arena size, so the return-optimal policy
degenerates to the shortest horizon and navigation success collapses. The
evaluation reward breakdown reported in episode logs keeps the default
coefficients; the override only shapes training.

Usage: python3 scripts/train_policy_artifact.py [updates] [seed]
"""

import sys
import time

from horizon_nav.bench import NavigationEnv
from horizon_nav.config import scenario_config
from horizon_nav.coopnet import CoopNetParams
from horizon_nav.rewards import RewardCoeffs
from horizon_nav.rl import PolicyParams, PpoConfig, train_policy

TRAIN_COEFFS = RewardCoeffs(lambda_high=0.0)


def main():
    updates = int(sys.argv[1]) if len(sys.argv) > 1 else 500
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
    coop = CoopNetParams.load("artifacts/coop_net.bin")
    env = NavigationEnv(scenario_config("mid"), coop_params=coop,
                        coeffs=TRAIN_COEFFS)
    params = PolicyParams.initialize(seed)
    start = time.time()
    params, rows = train_policy([env], params, updates, 128, PpoConfig(),
                                seed=seed,
                                csv_path="artifacts/policy_curve.csv")
    params.save("artifacts/policy.bin")
    last = rows[-1]
    print(f"{updates} updates in {time.time() - start:.0f}s; "
          f"final mean_return {last[1]:.2f} mean_horizon {last[2]:.2f}")


if __name__ == "__main__":
    main()
