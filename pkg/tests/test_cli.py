import numpy as np
import pytest

from conftest import tiny_config
from mtswarm import cli, dictionary, engine, inference, render

TINY_CONFIG = """\
# desk-lite setup for CLI tests
n_filaments = 12
sites_per_filament = 5
box_side = 20
n_frames = 20
steps_per_frame = 200
seed = 42
temperature = 300
dna_scale = 0.006
noise_amp = 12
f_drive = 1.5
k_tension = 300
"""


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "sim.cfg"
    path.write_text(TINY_CONFIG)
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One small end-to-end pipeline shared by the downstream CLI tests."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg = root / "sim.cfg"
    cfg.write_text(TINY_CONFIG)
    sweep_dir = root / "sweep"
    assert cli.main(["sweep", str(cfg), str(sweep_dir),
                     "--t-min", "200", "--t-max", "400",
                     "--t-step", "100"]) == 0
    trajs = sorted(str(p) for p in sweep_dir.glob("T*.mtsw"))
    features = root / "features.csv"
    assert cli.main(["featurize", *trajs, "--out", str(features)]) == 0
    dic = root / "dictionary.csv"
    acts = root / "activations.csv"
    assert cli.main(["learn-dict", str(features), "--out-dict", str(dic),
                     "--out-activations", str(acts), "--atoms", "6",
                     "--rounds", "15"]) == 0
    return {"root": root, "config": cfg, "sweep_dir": sweep_dir,
            "trajectories": trajs, "features": features,
            "dictionary": dic, "activations": acts}


class TestSimulate:
    def test_success_writes_trajectory(self, config_path, tmp_path, capsys):
        out = tmp_path / "run.mtsw"
        assert cli.main(["simulate", str(config_path), str(out)]) == 0
        assert out.read_bytes()[:4] == b"MTSW"
        assert "20 frames" in capsys.readouterr().out

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("not_a_key = 1\n")
        code = cli.main(["simulate", str(bad), str(tmp_path / "x.mtsw")])
        assert code == 2
        assert "not_a_key" in capsys.readouterr().err

    def test_blowup_exits_3_with_partial(self, tmp_path, capsys):
        bad = tmp_path / "explode.cfg"
        bad.write_text(TINY_CONFIG.replace("n_frames = 20", "n_frames = 5")
                       + "dt = 10\n")
        out = tmp_path / "explode.mtsw"
        assert cli.main(["simulate", str(bad), str(out)]) == 3
        assert out.exists()
        assert (tmp_path / "explode.mtsw.error").exists()
        traj = engine.read_trajectory(out)
        assert traj.n_frames >= 1

    def test_seed_override_changes_output(self, config_path, tmp_path):
        a, b = tmp_path / "a.mtsw", tmp_path / "b.mtsw"
        assert cli.main(["simulate", str(config_path), str(a)]) == 0
        assert cli.main(["--seed", "7", "simulate", str(config_path),
                         str(b)]) == 0
        assert a.read_bytes() != b.read_bytes()

    def test_missing_config_nonzero(self, tmp_path):
        assert cli.main(["simulate", str(tmp_path / "nope.cfg"),
                         str(tmp_path / "x.mtsw")]) != 0


class TestSweep:
    def test_single_temperature(self, config_path, tmp_path):
        out = tmp_path / "sweep1"
        assert cli.main(["sweep", str(config_path), str(out),
                         "--t-min", "200", "--t-max", "200"]) == 0
        assert sorted(p.name for p in out.glob("*.mtsw")) == ["T200.mtsw"]
        manifest = (out / "manifest.csv").read_text().splitlines()
        assert manifest[0] == "file,temperature,seed"
        assert len(manifest) == 2

    def test_rerun_byte_identical(self, config_path, tmp_path):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        for out in (out1, out2):
            assert cli.main(["sweep", str(config_path), str(out),
                             "--t-min", "200", "--t-max", "300",
                             "--t-step", "50"]) == 0
        for name in ("T200.mtsw", "T250.mtsw", "T300.mtsw", "manifest.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_full_default_count(self, pipeline):
        # the pipeline fixture swept 200..400 step 100 -> 3 files
        assert len(pipeline["trajectories"]) == 3


class TestFeaturize:
    def test_row_cardinality(self, pipeline):
        fm = render.read_features_csv(pipeline["features"])
        assert fm.n_columns == 3 * 20 * 9  # runs x frames x tiles

    def test_truncated_trajectory_reports_file(self, pipeline, tmp_path,
                                               capsys):
        src = pipeline["trajectories"][0]
        broken = tmp_path / "broken.mtsw"
        data = open(src, "rb").read()
        broken.write_bytes(data[:len(data) - 11])
        code = cli.main(["featurize", str(broken), "--out",
                         str(tmp_path / "f.csv")])
        assert code == 1
        err = capsys.readouterr().err
        assert "broken.mtsw" in err and "offset" in err

    def test_frames_png_dump(self, pipeline, tmp_path):
        out = tmp_path / "f.csv"
        png_dir = tmp_path / "frames"
        assert cli.main(["featurize", pipeline["trajectories"][0],
                         "--out", str(out), "--frames-png",
                         str(png_dir)]) == 0
        ppms = sorted(png_dir.glob("*.ppm"))
        assert len(ppms) == 20
        img = render.read_ppm(ppms[0])
        assert img.shape == (513, 513, 3)

    def test_import_embeddings_roundtrip(self, pipeline, tmp_path):
        # re-import the features produced by the descriptor path
        out = tmp_path / "imported.csv"
        assert cli.main(["featurize", *pipeline["trajectories"],
                         "--import", str(pipeline["features"]),
                         "--out", str(out)]) == 0
        a = render.read_features_csv(pipeline["features"])
        b = render.read_features_csv(out)
        assert np.array_equal(a.features, b.features)

    def test_import_count_mismatch(self, pipeline, tmp_path, capsys):
        code = cli.main(["featurize", pipeline["trajectories"][0],
                         "--import", str(pipeline["features"]),
                         "--out", str(tmp_path / "x.csv")])
        assert code == 1


class TestLearnDictAndDecompose:
    def test_defaults_echoed_in_log(self, pipeline, tmp_path, capsys):
        out_d = tmp_path / "d.csv"
        out_a = tmp_path / "a.csv"
        assert cli.main(["learn-dict", str(pipeline["features"]),
                         "--out-dict", str(out_d),
                         "--out-activations", str(out_a),
                         "--rounds", "3"]) == 0
        log = capsys.readouterr().out
        assert "n_a=12" in log and "mu=1.0" in log

    def test_activation_schema(self, pipeline):
        acts = dictionary.read_activations_csv(pipeline["activations"])
        assert acts.n_atoms == 6
        assert acts.n_columns == 3 * 20 * 9

    def test_decompose_reproduces_training_activations(self, pipeline,
                                                       tmp_path):
        out = tmp_path / "redo.csv"
        assert cli.main(["decompose", str(pipeline["features"]),
                         str(pipeline["dictionary"]),
                         "--out", str(out)]) == 0
        a = dictionary.read_activations_csv(pipeline["activations"])
        b = dictionary.read_activations_csv(out)
        assert np.abs(a.coefficients - b.coefficients).max() <= 1e-6

    def test_dimension_mismatch_exits_1(self, pipeline, tmp_path):
        dic = dictionary.Dictionary(np.eye(4))
        bad = tmp_path / "bad_dict.csv"
        dictionary.write_dictionary_csv(dic, bad)
        assert cli.main(["decompose", str(pipeline["features"]), str(bad),
                         "--out", str(tmp_path / "x.csv")]) == 1


class TestAnalyze:
    def test_outputs_and_schemas(self, pipeline, tmp_path):
        out = tmp_path / "stats"
        assert cli.main(["analyze", "--activations",
                         str(pipeline["activations"]),
                         "--trajectories", *pipeline["trajectories"],
                         "--out-dir", str(out),
                         "--exclude-first", "5"]) == 0
        box = (out / "boxplot.csv").read_text().splitlines()
        assert box[0] == "atom,temperature,q1,median,q3,lo,hi,n"
        assert len(box) == 1 + 6 * 3  # atoms x temperatures
        behavior = (out / "behavior.csv").read_text().splitlines()
        assert behavior[0] == "run,frame,label,largest_fraction,polar_order"
        assert len(behavior) == 1 + 3 * 20
        temporal = sorted(out.glob("temporal_*.csv"))
        assert len(temporal) == 3
        first = temporal[0].read_text().splitlines()
        assert first[0] == "frame,atom,mean_activation"
        assert len(first) == 1 + 20 * 6


class TestTempCommands:
    def test_train_and_predict(self, pipeline, tmp_path, capsys):
        model_path = tmp_path / "model.csv"
        assert cli.main(["train-temp", str(pipeline["activations"]),
                         "--out", str(model_path), "--repeats", "2",
                         "--epochs", "40", "--exclude-first", "5"]) == 0
        log = capsys.readouterr().out
        assert "MSE" in log and "+/-" in log and "2 repeats" in log
        model = inference.read_model_csv(model_path)
        assert model.n_params <= 500

        tracking_path = tmp_path / "tracking.csv"
        assert cli.main(["predict-temp", str(model_path),
                         str(pipeline["activations"]),
                         "--out", str(tracking_path)]) == 0
        tracking = inference.read_tracking_csv(tracking_path)
        assert tracking["frame"].size == 3 * 20  # one row per (run, frame)
