"""Train the two motion models the tracker ships with.

Both models learn from ground-truth walks in 200 simulated scenes. Their
observed windows get a little Gaussian jitter so that they stay calm when fed
noisy detections at tracking time; futures stay clean.

    python demos/train_models.py            # writes models/short.json, models/long.json
    python demos/train_models.py --quick    # a two-epoch smoke run into /tmp
"""

import argparse
import os
import time

import numpy as np

from predtrack.predictor import (
    DESK_SCHEDULE, Dataset, Predictor, PredictorConfig, constant_position, constant_velocity, forward,
    mean_displacement_error, train_phases,
)
from predtrack.simulator import make_training_set, training_scenes

HERE = os.path.dirname(os.path.abspath(__file__))
HISTORY_NOISE = 0.003  # normalized units, about 6 cm in a 20 m arena


def held_out_ade(model, scenes):
    obs, pred = model.obs_len, model.pred_len
    test = Dataset.from_samples(make_training_set(scenes, obs, pred, stride=5))
    batch, fut = test.batch(np.arange(len(test)))
    pos, _ = forward(model.params, model.config, batch, pred)
    return (mean_displacement_error(pos, fut),
            mean_displacement_error(constant_velocity(test.histories, pred), fut),
            mean_displacement_error(constant_position(test.histories, pred), fut))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.path.join(HERE, "..", "models"))
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    schedule = [(1, 3e-3), (1, 5e-4)] if args.quick else list(DESK_SCHEDULE)
    out = "/tmp/predtrack-quick" if args.quick else args.out
    os.makedirs(out, exist_ok=True)

    scenes = training_scenes(20 if args.quick else 200, seed=1000)
    held_out = training_scenes(30, seed=5000)
    for horizon in ("short", "long"):
        model = Predictor(PredictorConfig(hidden_dim=32), horizon, seed=0)
        t0 = time.time()
        samples = make_training_set(scenes, model.obs_len, model.pred_len, stride=3,
                                    history_noise=HISTORY_NOISE, seed=1)
        curve = train_phases(model, samples, schedule, batch_size=64, seed=0)
        ade, cv, cp = held_out_ade(model, held_out)
        print(f"{horizon}: {len(samples)} windows, loss {curve[0]:.4f} -> {curve[-1]:.4f}, "
              f"{time.time() - t0:.0f}s")
        print(f"  held-out ADE {ade:.5f}  constant velocity {cv:.5f}  constant position {cp:.5f}")
        model.save(os.path.join(out, f"{horizon}.json"),
                   {"schedule": schedule, "history_noise": HISTORY_NOISE, "scenes": len(scenes)})


if __name__ == "__main__":
    main()
