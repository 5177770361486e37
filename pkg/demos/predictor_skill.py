"""Compare the long-term model with the two trivial forecasters on held-out scenes.

Displacement errors are in normalized units (the 20 m arena maps to the unit
square). ADE averages over the predicted steps, FDE is the last step.

The shipped ``models/long.json`` learned from jittered histories so that it
stays calm on noisy detections; on these clean windows it trails constant
velocity. A model trained on clean windows (as in the acceptance test) beats
both baselines. Pass a checkpoint path to compare another model.
"""

import os
import sys

import numpy as np

from predtrack.predictor import Dataset, Predictor, constant_position, constant_velocity, forward
from predtrack.simulator import make_training_set, training_scenes

MODELS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "models")

path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(MODELS, "long.json")
model = Predictor.load(path)
test = Dataset.from_samples(make_training_set(training_scenes(30, seed=5000), model.obs_len, model.pred_len,
                                              stride=5))
batch, fut = test.batch(np.arange(len(test)))
guesses = {
    "model": forward(model.params, model.config, batch, model.pred_len)[0],
    "constant velocity": constant_velocity(test.histories, model.pred_len),
    "constant position": constant_position(test.histories, model.pred_len),
}
print(f"{len(test)} held-out windows, {model.obs_len} observed -> {model.pred_len} predicted")
for name, g in guesses.items():
    per_step = np.linalg.norm(g - fut, axis=-1).mean(axis=0)
    print(f"{name:>18}: ADE {per_step.mean():.5f}  FDE {per_step[-1]:.5f}")
