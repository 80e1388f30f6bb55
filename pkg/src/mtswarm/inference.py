"""Temperature inference from atom activations: a two-layer perceptron.

The model regresses the normalized control temperature (200K -> 0, 400K -> 1)
from a frame's activation vector (tile-averaged by default). The default
width keeps the parameter count at 12*32 + 32 + 32 + 1 = 449, under the
500-parameter budget. Training is plain momentum SGD on mean squared error,
fully deterministic for a fixed seed; the train/validation split is fixed
(independent of the model seed) so repeat statistics vary only the fit.
"""

from dataclasses import dataclass, replace

import numpy as np

from .csvio import SchemaError, fmt, split_comments

T_MIN = 200.0
T_MAX = 400.0
PARAM_BUDGET = 500
_SPLIT_SEED = 0x5EED5



def normalize_temperature(kelvin):
    """(T - 200)/200, linear and unclamped."""
    return (np.asarray(kelvin, dtype=float) - T_MIN) / (T_MAX - T_MIN)


def denormalize_temperature(value):
    return np.asarray(value, dtype=float) * (T_MAX - T_MIN) + T_MIN


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    validation_split: float = 0.2
    hidden: int = 32

    def validate(self):
        if min(self.epochs, self.batch_size, self.hidden) < 1:
            raise ValueError("epochs, batch_size and hidden must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.validation_split < 1.0:
            raise ValueError("validation_split must be in (0, 1)")


class MlpModel:
    """ReLU hidden layer, affine scalar output."""

    def __init__(self, w1, b1, w2, b2):
        self.w1 = np.asarray(w1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.b2 = np.asarray(b2, dtype=float)

    @property
    def n_inputs(self):
        return self.w1.shape[0]

    @property
    def hidden(self):
        return self.w1.shape[1]

    @property
    def n_params(self):
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def predict(self, x):
        """Forward pass; accepts a single activation vector or a batch."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        if batch.shape[1] != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} inputs, "
                             f"got {batch.shape[1]}")
        hidden = np.maximum(batch @ self.w1 + self.b1, 0.0)
        out = (hidden @ self.w2 + self.b2)[:, 0]
        return float(out[0]) if single else out


def init_model(n_inputs, hidden, rng):
    w1 = rng.normal(0.0, np.sqrt(2.0 / n_inputs), size=(n_inputs, hidden))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0.0, np.sqrt(1.0 / hidden), size=(hidden, 1))
    b2 = np.zeros(1)
    return MlpModel(w1, b1, w2, b2)


def loss_and_grads(model, x, y):
    """MSE loss and analytic parameter gradients for one batch."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    pre = x @ model.w1 + model.b1
    hidden = np.maximum(pre, 0.0)
    pred = (hidden @ model.w2 + model.b2)[:, 0]
    err = pred - y
    loss = float(np.mean(err ** 2))
    dpred = (2.0 / n) * err
    dw2 = hidden.T @ dpred[:, None]
    db2 = np.array([dpred.sum()])
    dhidden = dpred[:, None] * model.w2[:, 0][None, :]
    dhidden[pre <= 0.0] = 0.0
    dw1 = x.T @ dhidden
    db1 = dhidden.sum(axis=0)
    return loss, {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


def _fixed_split(n, fraction):
    order = np.random.default_rng(_SPLIT_SEED).permutation(n)
    n_val = max(1, int(round(n * fraction)))
    return order[n_val:], order[:n_val]


def train(activations, temperatures_kelvin, cfg=TrainConfig()):
    """Fit the regressor on (activation vector, temperature) samples.

    temperatures_kelvin are raw kelvins; targets are normalized internally.
    Returns (model, history) where history holds per-epoch train/validation
    MSE. Raises on single-temperature (degenerate) data.
    """
    cfg.validate()
    x = np.asarray(activations, dtype=float)
    t = np.asarray(temperatures_kelvin, dtype=float)
    if x.ndim != 2 or x.shape[0] != t.shape[0]:
        raise ValueError("activations must be (n_samples, n_atoms) matching "
                         "temperatures")
    if np.unique(t).size < 2:
        raise ValueError("degenerate training data: single temperature")
    y = normalize_temperature(t)
    train_idx, val_idx = _fixed_split(x.shape[0], cfg.validation_split)
    xt, yt = x[train_idx], y[train_idx]
    xv, yv = x[val_idx], y[val_idx]

    rng = np.random.default_rng(cfg.seed)
    model = init_model(x.shape[1], cfg.hidden, rng)
    vel = {"w1": np.zeros_like(model.w1), "b1": np.zeros_like(model.b1),
           "w2": np.zeros_like(model.w2), "b2": np.zeros_like(model.b2)}
    history = {"train_mse": [], "val_mse": []}
    for _ in range(cfg.epochs):
        order = rng.permutation(xt.shape[0])
        for start in range(0, xt.shape[0], cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            _, grads = loss_and_grads(model, xt[batch], yt[batch])
            for name, g in grads.items():
                vel[name] = cfg.momentum * vel[name] - cfg.learning_rate * g
                setattr(model, name, getattr(model, name) + vel[name])
        history["train_mse"].append(evaluate(model, xt, yt))
        history["val_mse"].append(evaluate(model, xv, yv))
    return model, history


def evaluate(model, activations, targets_norm):
    """MSE on normalized targets."""
    pred = model.predict(np.asarray(activations, dtype=float))
    return float(np.mean((pred - np.asarray(targets_norm, dtype=float)) ** 2))


def train_repeats(activations, temperatures_kelvin, cfg=TrainConfig(),
                  repeats=10):
    """Seeded repeats (model seed varies, split fixed).

    Returns (models, val_mses, baseline_mses): per-repeat validation MSE and
    the constant-mean-predictor baseline on the same validation set.
    """
    x = np.asarray(activations, dtype=float)
    t = np.asarray(temperatures_kelvin, dtype=float)
    y = normalize_temperature(t)
    train_idx, val_idx = _fixed_split(x.shape[0], cfg.validation_split)
    base_pred = y[train_idx].mean()
    baseline = float(np.mean((y[val_idx] - base_pred) ** 2))
    models, mses = [], []
    for r in range(repeats):
        model, _ = train(x, t, replace(cfg, seed=cfg.seed + r))
        models.append(model)
        mses.append(evaluate(model, x[val_idx], y[val_idx]))
    return models, np.array(mses), baseline


def frame_dataset(acts, exclude_first=0):
    """Tile-averaged per-frame samples from an ActivationSet.

    Returns (X, temps_kelvin, runs, frames) with one row per (run, frame),
    ordered by (run, frame); frames below exclude_first are dropped.
    """
    runs = np.asarray(acts.run, dtype=str)
    keep = acts.frame >= exclude_first
    if not np.any(keep):
        raise ValueError("no samples left after frame exclusion")
    coeff = acts.coefficients[:, keep]
    frames = acts.frame[keep]
    temps = acts.temperature[keep]
    runs = runs[keep]
    order = np.lexsort((frames, runs))
    xs, ts, rs, fs = [], [], [], []
    i = 0
    while i < order.size:
        j = i
        while (j < order.size and runs[order[j]] == runs[order[i]]
               and frames[order[j]] == frames[order[i]]):
            j += 1
        sel = order[i:j]
        xs.append(coeff[:, sel].mean(axis=1))
        ts.append(temps[sel[0]])
        rs.append(runs[sel[0]])
        fs.append(frames[sel[0]])
        i = j
    return (np.array(xs), np.array(ts), np.array(rs, dtype=object),
            np.array(fs, dtype=np.int64))


def track(model, acts):
    """Per-frame temperature predictions for one (time-varying) run.

    Returns dict arrays: frame, true_norm, predicted_norm.
    """
    x, t, _, frames = frame_dataset(acts, exclude_first=0)
    pred = model.predict(x)
    return {"frame": frames, "true_norm": normalize_temperature(t),
            "predicted_norm": pred}


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def write_model_csv(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n_inputs={model.n_inputs} hidden={model.hidden}\n")
        fh.write("tensor,index,value\n")
        for name in ("w1", "b1", "w2", "b2"):
            flat = getattr(model, name).ravel()
            for i, v in enumerate(flat):
                fh.write(f"{name},{i},{fmt(v, 17)}\n")
    return path


def read_model_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    comments, body = split_comments(lines)
    shape_meta = {}
    for c in comments:
        for tok in c.split():
            if "=" in tok:
                key, value = tok.split("=")
                shape_meta[key] = int(value)
    if "n_inputs" not in shape_meta or "hidden" not in shape_meta:
        raise SchemaError(f"{path}: missing shape header comment")
    if not body or body[0] != "tensor,index,value":
        raise SchemaError(f"{path}: expected header tensor,index,value")
    n_in, hid = shape_meta["n_inputs"], shape_meta["hidden"]
    shapes = {"w1": (n_in, hid), "b1": (hid,), "w2": (hid, 1), "b2": (1,)}
    buf = {name: np.zeros(np.prod(shape)) for name, shape in shapes.items()}
    for line in body[1:]:
        name, idx, value = line.split(",")
        if name not in buf:
            raise SchemaError(f"{path}: unknown tensor {name!r}")
        buf[name][int(idx)] = float(value)
    return MlpModel(buf["w1"].reshape(shapes["w1"]), buf["b1"],
                    buf["w2"].reshape(shapes["w2"]), buf["b2"])


def write_tracking_csv(tracking, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame,true_norm_temp,predicted_norm_temp\n")
        for i in range(tracking["frame"].size):
            fh.write(f"{int(tracking['frame'][i])},"
                     f"{fmt(tracking['true_norm'][i])},"
                     f"{fmt(tracking['predicted_norm'][i])}\n")
    return path


def read_tracking_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "frame,true_norm_temp,predicted_norm_temp":
        raise SchemaError(f"{path}: unexpected tracking header")
    frames, true, pred = [], [], []
    for line in lines[1:]:
        f, t, p = line.split(",")
        frames.append(int(f))
        true.append(float(t))
        pred.append(float(p))
    return {"frame": np.array(frames), "true_norm": np.array(true),
            "predicted_norm": np.array(pred)}
