"""Frame rasterization, 3x3 tiling, and per-tile feature descriptors.

Frames are drawn on black with one color per filament: hue encodes the
filament's mean orientation (nematic by default, so an angle and its
opposite share a hue), full saturation and value. Each frame is split into
9 equal tiles and every tile becomes one 64-dimensional descriptor column,
the built-in stand-in for an external semantic embedding. Externally
computed embeddings can be imported from the same CSV schema instead.
"""

from dataclasses import dataclass

import numpy as np

from .csvio import SchemaError, check_header, fmt, split_comments
from .physics import minimum_image

DEFAULT_RASTER_SIZE = 513      # divisible by 3 for exact tiling
DESCRIPTOR_DIM = 64
TILES_PER_FRAME = 9
_BLOCKS = 4                    # descriptor block grid per tile axis
_BINS = 16


@dataclass
class FeatureMatrix:
    """Column-wise tile features with (run, temperature, frame, tile) metadata."""

    features: np.ndarray      # (d, n) one column per tile-frame
    run: np.ndarray           # (n,) str
    temperature: np.ndarray   # (n,) float
    frame: np.ndarray         # (n,) int
    tile: np.ndarray          # (n,) int

    @property
    def dim(self):
        return self.features.shape[0]

    @property
    def n_columns(self):
        return self.features.shape[1]

    def validate(self):
        n = self.n_columns
        for name in ("run", "temperature", "frame", "tile"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"metadata '{name}' length != {n}")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite feature entries")


def concat_features(parts):
    return FeatureMatrix(
        features=np.concatenate([p.features for p in parts], axis=1),
        run=np.concatenate([p.run for p in parts]),
        temperature=np.concatenate([p.temperature for p in parts]),
        frame=np.concatenate([p.frame for p in parts]),
        tile=np.concatenate([p.tile for p in parts]))


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------

def _hsv_to_rgb(h):
    """Hue in [0, 1) at full saturation/value -> uint8 RGB triple."""
    x = h * 6.0
    k = int(x) % 6
    f = x - int(x)
    q = int(round(255 * (1.0 - f)))
    t = int(round(255 * f))
    table = ((255, t, 0), (q, 255, 0), (0, 255, t),
             (0, q, 255), (t, 0, 255), (255, 0, q))
    return table[k]


def filament_orientations(frame_positions, side, hue_mode="nematic"):
    """Mean segment orientation per filament: [0, pi) nematic, [0, 2pi) polar."""
    segs = minimum_image(frame_positions[:, :-1, :], frame_positions[:, 1:, :],
                         side)
    # segments point tail->head so the polar mode tracks the heading
    angles = np.arctan2(-segs[..., 1], -segs[..., 0])
    if hue_mode == "nematic":
        mean = 0.5 * np.arctan2(np.sin(2 * angles).sum(axis=1),
                                np.cos(2 * angles).sum(axis=1))
        return np.mod(mean, np.pi)
    if hue_mode == "polar":
        mean = np.arctan2(np.sin(angles).sum(axis=1),
                          np.cos(angles).sum(axis=1))
        return np.mod(mean, 2 * np.pi)
    raise ValueError(f"unknown hue_mode {hue_mode!r}")


def rasterize(frame_positions, side, size=DEFAULT_RASTER_SIZE,
              hue_mode="nematic"):
    """Draw one frame as (size, size, 3) uint8 RGB, 1-pixel-wide segments.

    frame_positions is (n_filaments, N, 2); hue maps the filament's mean
    orientation onto the full color circle. Pure function of its inputs.
    """
    if size % 3 != 0:
        raise ValueError("raster size must be divisible by 3")
    img = np.zeros((size, size, 3), dtype=np.uint8)
    frame_positions = np.asarray(frame_positions, dtype=float)
    if frame_positions.size == 0:
        return img
    span = np.pi if hue_mode == "nematic" else 2 * np.pi
    hues = filament_orientations(frame_positions, side, hue_mode) / span
    scale = size / side
    starts = frame_positions[:, :-1, :]
    deltas = minimum_image(starts, frame_positions[:, 1:, :], side)
    longest = np.abs(deltas).max() if deltas.size else 0.0
    npts = int(np.ceil(2 * scale * longest)) + 2
    ts = np.linspace(0.0, 1.0, npts)
    for f in range(frame_positions.shape[0]):
        color = _hsv_to_rgb(hues[f])
        xs = ((starts[f, :, 0, None] + ts * deltas[f, :, 0, None])
              * scale).astype(np.int64) % size
        ys = ((starts[f, :, 1, None] + ts * deltas[f, :, 1, None])
              * scale).astype(np.int64) % size
        img[ys, xs] = color
    return img


def tile3x3(raster):
    """Split a frame into 9 equal tiles, row-major order."""
    h, w = raster.shape[0], raster.shape[1]
    if h % 3 or w % 3:
        raise ValueError("raster dimensions must be divisible by 3")
    th, tw = h // 3, w // 3
    return [raster[r * th:(r + 1) * th, c * tw:(c + 1) * tw]
            for r in range(3) for c in range(3)]


# ---------------------------------------------------------------------------
# descriptor
# ---------------------------------------------------------------------------

def _pixel_hues(rgb):
    """Hue in [0, 1) per pixel from uint8 RGB (full-saturation palette)."""
    r = rgb[..., 0].astype(float) / 255.0
    g = rgb[..., 1].astype(float) / 255.0
    b = rgb[..., 2].astype(float) / 255.0
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    c = mx - mn
    h = np.zeros_like(mx)
    safe = c > 0
    rm, gm, bm = (mx == r) & safe, (mx == g) & safe & (mx != r), \
        (mx == b) & safe & (mx != r) & (mx != g)
    h[rm] = np.mod((g[rm] - b[rm]) / c[rm], 6.0)
    h[gm] = (b[gm] - r[gm]) / c[gm] + 2.0
    h[bm] = (r[bm] - g[bm]) / c[bm] + 4.0
    return h / 6.0


def _norm_hist(hist):
    total = hist.sum()
    return hist / total if total > 0 else hist


def descriptor(tile):
    """64-dim tile feature: hue histogram, per-block nematic coherence
    histogram, 4x4 density grid, and block lit-count distribution; each part
    sums to one and the concatenation is L2-normalized. All-black tiles map
    to the zero vector.
    """
    lit = tile.any(axis=2)
    n_lit = int(lit.sum())
    if n_lit == 0:
        return np.zeros(DESCRIPTOR_DIM)
    hues = _pixel_hues(tile[lit])

    hue_hist = _norm_hist(np.bincount(
        np.minimum((hues * _BINS).astype(np.int64), _BINS - 1),
        minlength=_BINS).astype(float))

    h, w = lit.shape
    rows = np.minimum(np.arange(h) * _BLOCKS // h, _BLOCKS - 1)
    cols = np.minimum(np.arange(w) * _BLOCKS // w, _BLOCKS - 1)
    block_of = rows[:, None] * _BLOCKS + cols[None, :]
    counts = np.bincount(block_of[lit], minlength=_BLOCKS * _BLOCKS).astype(float)

    density_grid = _norm_hist(counts.copy())

    # per-block nematic order of the lit pixels' decoded orientations
    theta2 = 2.0 * np.pi * hues  # hue ~ angle/pi, so 2*theta = 2*pi*hue
    blk = block_of[lit]
    cs = np.bincount(blk, weights=np.cos(theta2), minlength=_BLOCKS * _BLOCKS)
    sn = np.bincount(blk, weights=np.sin(theta2), minlength=_BLOCKS * _BLOCKS)
    occupied = counts > 0
    coherence = np.hypot(cs[occupied], sn[occupied]) / counts[occupied]
    coh_hist = _norm_hist(np.bincount(
        np.minimum((coherence * _BINS).astype(np.int64), _BINS - 1),
        minlength=_BINS).astype(float))

    # distribution of block occupancy fractions, sqrt-stretched bins
    block_pixels = np.bincount(block_of.ravel(),
                               minlength=_BLOCKS * _BLOCKS).astype(float)
    frac = counts / block_pixels
    count_hist = _norm_hist(np.bincount(
        np.minimum((np.sqrt(frac) * _BINS).astype(np.int64), _BINS - 1),
        minlength=_BINS).astype(float))

    vec = np.concatenate([hue_hist, coh_hist, density_grid, count_hist])
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def featurize_trajectory(traj, run_id=None, size=DEFAULT_RASTER_SIZE,
                         hue_mode="nematic", png_writer=None):
    """Descriptor columns for every (frame, tile) of one trajectory.

    png_writer, when given, is called with (frame_index, raster) for each
    frame (the CLI uses it to dump PPM images).
    """
    run_id = traj.run_id if run_id is None else run_id
    n_frames = traj.n_frames
    cols = np.empty((DESCRIPTOR_DIM, n_frames * TILES_PER_FRAME))
    runs, temps, frames, tiles = [], [], [], []
    for k in range(n_frames):
        raster = rasterize(traj.frame(k), traj.box_side, size, hue_mode)
        if png_writer is not None:
            png_writer(k, raster)
        for t, tile in enumerate(tile3x3(raster)):
            cols[:, k * TILES_PER_FRAME + t] = descriptor(tile)
            runs.append(run_id)
            temps.append(traj.temperatures[k])
            frames.append(k)
            tiles.append(t)
    return FeatureMatrix(cols, np.array(runs), np.array(temps, dtype=float),
                         np.array(frames, dtype=np.int64),
                         np.array(tiles, dtype=np.int64))


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def write_ppm(raster, path):
    """Binary PPM (P6), 8-bit RGB."""
    with open(path, "wb") as fh:
        fh.write(f"P6\n{raster.shape[1]} {raster.shape[0]}\n255\n".encode())
        fh.write(np.ascontiguousarray(raster, dtype=np.uint8).tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P6":
        raise ValueError(f"{path}: not a P6 PPM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pos += 1
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return pixels.reshape(h, w, 3).copy()


def _feature_header(dim):
    return ["run", "temperature", "frame", "tile"] + [f"f{i}" for i in range(dim)]


def write_features_csv(fm, path):
    """Feature CSV: run,temperature,frame,tile,f0..f{d-1}, 9 significant digits."""
    fm.validate()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(_feature_header(fm.dim)) + "\n")
        for c in range(fm.n_columns):
            row = [str(fm.run[c]), fmt(fm.temperature[c]),
                   str(int(fm.frame[c])), str(int(fm.tile[c]))]
            row += [fmt(v) for v in fm.features[:, c]]
            fh.write(",".join(row) + "\n")
    return path


def read_features_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    _, body = split_comments(lines)
    if not body:
        raise SchemaError(f"{path}: empty file")
    header = body[0].split(",")
    if len(header) < 5 or header[:4] != ["run", "temperature", "frame", "tile"]:
        raise SchemaError(
            f"{path}: expected header run,temperature,frame,tile,f0..; "
            f"found {body[0]!r}")
    dim = len(header) - 4
    check_header(header[4:], [f"f{i}" for i in range(dim)], path)
    n = len(body) - 1
    features = np.empty((dim, n))
    runs, temps, frames, tiles = [], np.empty(n), np.empty(n, np.int64), \
        np.empty(n, np.int64)
    for r, line in enumerate(body[1:]):
        parts = line.split(",")
        if len(parts) != len(header):
            raise SchemaError(f"{path}: row {r + 1} has {len(parts)} fields, "
                              f"expected {len(header)}")
        runs.append(parts[0])
        temps[r] = float(parts[1])
        frames[r] = int(parts[2])
        tiles[r] = int(parts[3])
        features[:, r] = [float(v) for v in parts[4:]]
    return FeatureMatrix(features, np.array(runs, dtype=object), temps,
                         frames, tiles)


def import_embeddings(path, expected_rows=None):
    """Load externally computed embedding vectors (same CSV schema).

    expected_rows, when given, is the tile-manifest count the file must
    match (e.g. n_frames * 9 per trajectory).
    """
    fm = read_features_csv(path)
    fm.validate()
    if expected_rows is not None and fm.n_columns != expected_rows:
        raise SchemaError(
            f"{path}: {fm.n_columns} embedding rows do not match the "
            f"{expected_rows}-tile manifest")
    return fm
