"""Train the shipped cooperation-classifier artifact.

The dataset mixes high- and mid-interaction episodes so the label prior is
close to balanced (mid-only data is 75% non-cooperative and biases the
classifier toward labeling everyone non-cooperative, which inflates the MPC
safety margins for genuinely cooperative pedestrians), and restricts samples
to pedestrians within 2.5 m of the robot: cooperative avoidance of the robot
is only observable there, and far-field samples just teach the classifier
the label prior. Prints per-class held-out accuracy on fresh episodes.
"""

import csv
import time

import numpy as np

from horizon_nav.config import scenario_config
from horizon_nav.coopnet import (
    CoopTrainConfig, generate_dataset, sample_forward, train_coop,
)

MAX_RANGE = 2.5


def per_class_accuracy(samples, params):
    hits = np.zeros(2)
    counts = np.zeros(2)
    for s in samples:
        probs, _ = sample_forward(s, params, 0.5, 1e-6, rng=None)
        pred = probs.argmax(axis=1)
        for label in (0, 1):
            mask = s.labels == label
            hits[label] += int((pred[mask] == label).sum())
            counts[label] += int(mask.sum())
    return hits / np.maximum(counts, 1), counts


def main():
    start = time.time()
    train = (generate_dataset(scenario_config("high"), 20, seed=100,
                              max_range=MAX_RANGE)
             + generate_dataset(scenario_config("mid"), 10, seed=300,
                                max_range=MAX_RANGE))
    params, losses = train_coop(train, CoopTrainConfig(epochs=30, seed=0))
    params.save("artifacts/coop_net.bin")
    with open("artifacts/coop_curve.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss"])
        writer.writerows(enumerate(losses))

    for name, seed in (("mid", 900), ("high", 950)):
        test = generate_dataset(scenario_config(name), 4, seed=seed,
                                max_range=MAX_RANGE)
        acc, counts = per_class_accuracy(test, params)
        print(f"{name}: noncoop acc {acc[0]:.3f} (n={int(counts[0])}) "
              f"coop acc {acc[1]:.3f} (n={int(counts[1])})")
    print(f"{len(train)} samples, final loss {losses[-1]:.3f}, "
          f"{time.time() - start:.0f}s")


if __name__ == "__main__":
    main()
