"""Learn a small semantic dictionary over a two-temperature mini sweep and
inspect which atoms discriminate the control temperature.

Run:  python demos/03_dictionary_pipeline.py
"""

import numpy as np

from mtswarm import analysis, engine, render
from mtswarm.dictionary import (SparseCodingConfig, learn_dictionary,
                                decompose, rank_atoms)

print("simulating a 200 K and a 400 K run (small desk setup)...")
base = engine.SimConfig(n_filaments=40, box_side=45.0, n_frames=100, seed=3)
parts = []
for i, temperature in enumerate((200.0, 400.0)):
    cfg = engine.SimConfig(
        n_filaments=base.n_filaments, box_side=base.box_side,
        n_frames=base.n_frames, seed=engine.derive_seed(base.seed, i),
        temperature_schedule=((0, temperature),),
        dna=base.dna, mech=base.mech, friction=base.friction)
    traj = engine.run(cfg)
    traj.run_id = f"T{int(temperature)}"
    parts.append(render.featurize_trajectory(traj))
fm = render.concat_features(parts)
print(f"feature matrix: {fm.dim} x {fm.n_columns}")

cfg = SparseCodingConfig(mu=1.0, outer_rounds=30)
dic, _, history = learn_dictionary(fm.features, 8, cfg,
                                   np.random.default_rng(0),
                                   feature_scale=10.0)
print(f"objective: {history[0]:.1f} -> {history[-1]:.1f} "
      f"over {len(history)} rounds")

acts = decompose(fm, dic)
dic.relevancy_order = rank_atoms(acts)
print("atoms by relevancy (between-temperature discrimination):",
      list(dic.relevancy_order))

rows = analysis.activation_boxplot_stats(acts, exclude_first=20)
print("\nper-atom median activation by temperature:")
for atom in dic.relevancy_order[:4]:
    meds = {int(r["temperature"]): r["median"] for r in rows
            if r["atom"] == atom}
    print(f"  atom {atom}: " + "  ".join(f"{t} K: {m:+.3f}"
                                         for t, m in sorted(meds.items())))

exemplars = analysis.atom_exemplars(dic, fm, k=3)
top = dic.relevancy_order[0]
print(f"\nclosest real tiles to atom {top}:")
for run, frame, tile, sim in exemplars[top]:
    print(f"  {run} frame {frame} tile {tile}  (cosine {sim:.3f})")
