"""Train the small activation->temperature regressor and track a run whose
temperature steps from 200 K to 400 K mid-way.

Run:  python demos/04_temperature_inference.py
"""

import numpy as np

from mtswarm import engine, render
from mtswarm.dictionary import SparseCodingConfig, learn_dictionary, decompose
from mtswarm.inference import (TrainConfig, frame_dataset,
                               normalize_temperature, track, train_repeats)

base = engine.SimConfig(n_filaments=40, box_side=45.0, n_frames=100, seed=5)


def run_at(schedule, seed):
    cfg = engine.SimConfig(
        n_filaments=base.n_filaments, box_side=base.box_side,
        n_frames=base.n_frames, seed=seed, temperature_schedule=schedule,
        dna=base.dna, mech=base.mech, friction=base.friction)
    return engine.run(cfg)


print("building the training set (3 fixed temperatures)...")
parts = []
for i, t in enumerate((200.0, 300.0, 400.0)):
    traj = run_at(((0, t),), engine.derive_seed(base.seed, i))
    traj.run_id = f"T{int(t)}"
    parts.append(render.featurize_trajectory(traj))
fm = render.concat_features(parts)

dic, _, _ = learn_dictionary(fm.features, 8,
                             SparseCodingConfig(mu=1.0, outer_rounds=25),
                             np.random.default_rng(1), feature_scale=10.0)
acts = decompose(fm, dic)

x, temps, _, _ = frame_dataset(acts, exclude_first=20)
models, mses, baseline = train_repeats(x, temps, TrainConfig(epochs=150),
                                       repeats=5)
print(f"held-out MSE {mses.mean():.4f} +/- {mses.std():.4f} over 5 repeats "
      f"(constant-mean baseline {baseline:.4f})")

print("\ntracking a step schedule 200 K -> 400 K at frame 50...")
step_traj = run_at(((0, 200.0), (50, 400.0)), 999)
step_traj.run_id = "step"
step_acts = decompose(render.featurize_trajectory(step_traj), dic)
tracking = track(models[0], step_acts)
for k in range(0, base.n_frames, 10):
    i = np.flatnonzero(tracking["frame"] == k)[0]
    true_t = tracking["true_norm"][i]
    pred = tracking["predicted_norm"][i]
    bar = "#" * max(0, int(round(pred * 20)))
    print(f"  frame {k:3d}  true {true_t:.2f}  pred {pred:+.2f}  {bar}")
