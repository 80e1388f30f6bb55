"""Command-line pipeline: simulate -> featurize -> learn-dict -> decompose
-> analyze -> train-temp -> predict-temp.

Stages communicate through files only, so externally computed embeddings can
replace the built-in descriptor between featurize and learn-dict. Every
command is idempotent for fixed inputs and seeds.

Exit codes: 0 success, 2 configuration error, 3 numerical blow-up during
integration, 1 any other failure (I/O, schema mismatch, bad arguments).
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, dictionary, engine, inference, render
from .csvio import SchemaError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_BLOWUP = 3


def _temp_label(t):
    return f"T{int(t)}" if float(t).is_integer() else f"T{t}"


def cmd_simulate(args):
    cfg = engine.load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    try:
        traj = engine.run(cfg)
    except engine.NumericalBlowupError as exc:
        if exc.partial is not None:
            engine.write_trajectory(exc.partial, args.out)
            Path(str(args.out) + ".error").write_text(str(exc) + "\n",
                                                      encoding="utf-8")
        raise
    engine.write_trajectory(traj, args.out)
    print(f"simulate: wrote {traj.n_frames} frames to {args.out}")
    return EXIT_OK


def _sweep_worker(payload):
    text, path = payload
    cfg = engine.parse_config(text)
    traj = engine.run(cfg)
    engine.write_trajectory(traj, path)
    return path


def cmd_sweep(args):
    base = engine.load_config(args.config)
    if args.seed is not None:
        base = replace(base, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = engine.sweep_configs(base, args.t_min, args.t_max, args.t_step)
    jobs = []
    for cfg in configs:
        t = cfg.temperature_schedule[0][1]
        path = out_dir / f"{_temp_label(t)}.mtsw"
        jobs.append((cfg, engine.config_to_text(cfg), str(path)))

    failures = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [(cfg, path, pool.submit(_sweep_worker, (text, path)))
                       for cfg, text, path in jobs]
            for cfg, path, fut in futures:
                try:
                    fut.result()
                except Exception as exc:  # keep completed runs
                    failures.append((path, exc))
    else:
        for cfg, text, path in jobs:
            try:
                _sweep_worker((text, path))
            except Exception as exc:
                failures.append((path, exc))

    with open(out_dir / "manifest.csv", "w", encoding="utf-8") as fh:
        fh.write("file,temperature,seed\n")
        for cfg, _, path in jobs:
            if (Path(path).exists()
                    and path not in [p for p, _ in failures]):
                t = cfg.temperature_schedule[0][1]
                fh.write(f"{Path(path).name},{t!r},{cfg.seed}\n")
    if failures:
        for path, exc in failures:
            print(f"sweep: {path} failed: {exc}", file=sys.stderr)
        if any(isinstance(e, engine.NumericalBlowupError)
               for _, e in failures):
            return EXIT_BLOWUP
        return EXIT_ERROR
    print(f"sweep: wrote {len(jobs)} trajectories to {out_dir}")
    return EXIT_OK


def cmd_featurize(args):
    trajs = []
    for path in args.trajectories:
        traj = engine.read_trajectory(path)
        traj.run_id = Path(path).stem
        trajs.append(traj)

    if args.import_embeddings:
        expected = sum(t.n_frames * render.TILES_PER_FRAME for t in trajs)
        fm = render.import_embeddings(args.import_embeddings,
                                      expected_rows=expected)
        fm = _align_to_manifest(fm, trajs, args.import_embeddings)
    else:
        parts = []
        for traj in trajs:
            writer = None
            if args.frames_png:
                png_dir = Path(args.frames_png)
                png_dir.mkdir(parents=True, exist_ok=True)

                def writer(k, raster, run=traj.run_id, d=png_dir):
                    render.write_ppm(raster, d / f"{run}_f{k:04d}.ppm")
            parts.append(render.featurize_trajectory(
                traj, size=args.size, hue_mode=args.hue, png_writer=writer))
        fm = render.concat_features(parts)
    render.write_features_csv(fm, args.out)
    print(f"featurize: wrote {fm.n_columns} rows (dim {fm.dim}) to {args.out}")
    return EXIT_OK


def _align_to_manifest(fm, trajs, path):
    """Reorder imported embedding rows onto the trajectories' tile manifest."""
    index = {}
    for c in range(fm.n_columns):
        index[(str(fm.run[c]), int(fm.frame[c]), int(fm.tile[c]))] = c
    if len(index) != fm.n_columns:
        raise SchemaError(f"{path}: duplicate (run, frame, tile) rows")
    order = []
    for traj in trajs:
        for k in range(traj.n_frames):
            for t in range(render.TILES_PER_FRAME):
                key = (traj.run_id, k, t)
                if key not in index:
                    raise SchemaError(
                        f"{path}: missing embedding row for {key}")
                order.append(index[key])
    order = np.array(order, dtype=np.int64)
    return render.FeatureMatrix(
        fm.features[:, order], fm.run[order], fm.temperature[order],
        fm.frame[order], fm.tile[order])


def cmd_learn_dict(args):
    fm = render.read_features_csv(args.features)
    cfg = dictionary.SparseCodingConfig(mu=args.mu, max_iter=args.max_iter,
                                        outer_rounds=args.rounds)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    print(f"learn-dict: n_a={args.atoms} mu={args.mu} "
          f"feature_scale={args.feature_scale} rounds={args.rounds}")
    dic, _, history = dictionary.learn_dictionary(
        fm.features, args.atoms, cfg, rng, feature_scale=args.feature_scale)
    # emit the canonical cold-start decomposition so a later `decompose` of
    # the same features against the written dictionary reproduces the
    # activation file exactly
    acts = dictionary.decompose(fm, dic,
                                dictionary.SparseCodingConfig(
                                    mu=args.mu, max_iter=args.max_iter))
    dic.relevancy_order = dictionary.rank_atoms(acts)
    dictionary.write_dictionary_csv(dic, args.out_dict)
    dictionary.write_activations_csv(acts, args.out_activations)
    print(f"learn-dict: objective {history[0]:.6g} -> {history[-1]:.6g} "
          f"over {len(history)} rounds")
    return EXIT_OK


def cmd_decompose(args):
    fm = render.read_features_csv(args.features)
    dic = dictionary.read_dictionary_csv(args.dictionary)
    if fm.dim != dic.dim:
        raise SchemaError(f"feature dim {fm.dim} != dictionary dim {dic.dim}")
    cfg = dictionary.SparseCodingConfig(mu=dic.mu, max_iter=args.max_iter)
    acts = dictionary.decompose(fm, dic, cfg)
    dictionary.write_activations_csv(acts, args.out)
    print(f"decompose: wrote {acts.n_columns} activation rows to {args.out}")
    return EXIT_OK


def cmd_analyze(args):
    acts = dictionary.read_activations_csv(args.activations)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = analysis.activation_boxplot_stats(acts,
                                             exclude_first=args.exclude_first)
    analysis.write_boxplot_csv(rows, out_dir / "boxplot.csv")

    run_ids = np.unique(np.asarray(acts.run, dtype=str))
    for run_id in run_ids:
        frames, series = analysis.temporal_activation_map(acts, run=run_id)
        name = ("temporal.csv" if run_ids.size == 1
                else f"temporal_{run_id}.csv")
        analysis.write_temporal_csv(frames, series, out_dir / name)

    if args.trajectories:
        thresholds = analysis.BehaviorThresholds(
            strong_fraction=args.strong_fraction,
            disorder_fraction=args.disorder_fraction,
            disorder_order=args.disorder_order)
        per_run = []
        for path in args.trajectories:
            traj = engine.read_trajectory(path)
            series = analysis.behavior_series(
                traj, link_distance=args.link_distance,
                angle_tol=args.angle_tol, thresholds=thresholds)
            per_run.append((Path(path).stem, series))
        analysis.write_behavior_csv(per_run, out_dir / "behavior.csv")
    print(f"analyze: wrote statistics to {out_dir}")
    return EXIT_OK


def cmd_train_temp(args):
    acts = dictionary.read_activations_csv(args.activations)
    x, temps, _, _ = inference.frame_dataset(acts,
                                             exclude_first=args.exclude_first)
    cfg = inference.TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                                learning_rate=args.learning_rate,
                                seed=args.seed if args.seed is not None else 0,
                                validation_split=args.split,
                                hidden=args.hidden)
    models, mses, baseline = inference.train_repeats(x, temps, cfg,
                                                     repeats=args.repeats)
    inference.write_model_csv(models[0], args.out)
    print(f"train-temp: MSE {mses.mean():.4f} +/- {mses.std():.4f} over "
          f"{args.repeats} repeats (constant-mean baseline {baseline:.4f})")
    return EXIT_OK


def cmd_predict_temp(args):
    model = inference.read_model_csv(args.model)
    acts = dictionary.read_activations_csv(args.activations)
    tracking = inference.track(model, acts)
    inference.write_tracking_csv(tracking, args.out)
    print(f"predict-temp: wrote {tracking['frame'].size} frames to {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mtswarm",
        description="DNA-functionalized microtubule swarm simulator and "
                    "semantic-dictionary analysis pipeline.",
        epilog="Exit codes: 0 success, 2 configuration error, 3 numerical "
               "blow-up, 1 other failure.")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the seed from the config/defaults")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker processes for independent runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation to a trajectory")
    p.add_argument("config")
    p.add_argument("out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="fixed-temperature sweep of simulations")
    p.add_argument("config")
    p.add_argument("out_dir")
    p.add_argument("--t-min", type=float, default=200.0)
    p.add_argument("--t-max", type=float, default=400.0)
    p.add_argument("--t-step", type=float, default=25.0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("featurize",
                       help="rasterize, tile and embed trajectory frames")
    p.add_argument("trajectories", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--frames-png", default=None,
                   help="also dump frame images (PPM) into this directory")
    p.add_argument("--import", dest="import_embeddings", default=None,
                   help="use externally computed embeddings instead of the "
                        "built-in descriptor")
    p.add_argument("--size", type=int, default=render.DEFAULT_RASTER_SIZE)
    p.add_argument("--hue", choices=("nematic", "polar"), default="nematic")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("learn-dict", help="learn the semantic dictionary")
    p.add_argument("features")
    p.add_argument("--out-dict", required=True)
    p.add_argument("--out-activations", required=True)
    p.add_argument("--atoms", type=int, default=12)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--feature-scale", type=float,
                   default=dictionary.DEFAULT_FEATURE_SCALE)
    p.set_defaults(func=cmd_learn_dict)

    p = sub.add_parser("decompose",
                       help="decompose features over a learned dictionary")
    p.add_argument("features")
    p.add_argument("dictionary")
    p.add_argument("--out", required=True)
    p.add_argument("--max-iter", type=int, default=2000)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("analyze",
                       help="activation statistics and behavior metrics")
    p.add_argument("--activations", required=True)
    p.add_argument("--trajectories", nargs="*", default=[])
    p.add_argument("--out-dir", required=True)
    p.add_argument("--exclude-first", type=int,
                   default=analysis.EXCLUDE_FIRST_FRAMES)
    p.add_argument("--link-distance", type=float,
                   default=analysis.DEFAULT_LINK_DISTANCE)
    p.add_argument("--angle-tol", type=float,
                   default=analysis.DEFAULT_ANGLE_TOL)
    p.add_argument("--strong-fraction", type=float, default=0.5)
    p.add_argument("--disorder-fraction", type=float, default=0.1)
    p.add_argument("--disorder-order", type=float, default=0.3)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train-temp",
                       help="train the temperature regressor on activations")
    p.add_argument("activations")
    p.add_argument("--out", required=True)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--split", type=float, default=0.2)
    p.add_argument("--exclude-first", type=int,
                   default=analysis.EXCLUDE_FIRST_FRAMES)
    p.set_defaults(func=cmd_train_temp)

    p = sub.add_parser("predict-temp",
                       help="per-frame temperature tracking with a model")
    p.add_argument("model")
    p.add_argument("activations")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_temp)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except engine.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except engine.NumericalBlowupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (SchemaError, engine.TrajectoryFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
