"""Swarm behavior metrics and activation statistics.

Ground truth side: polar/nematic order parameters, proximity-and-alignment
single-linkage clustering, and the three-regime frame classification
(disorder / partial swarming / strong swarming). Semantic side: box-plot
statistics of atom activations per control temperature and per-run temporal
activation maps, plus nearest-real-tile exemplars for inspecting atoms.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .csvio import fmt
from .physics import minimum_image

DISORDER = "disorder"
PARTIAL = "partial_swarming"
STRONG = "strong_swarming"
BEHAVIOR_LABELS = (DISORDER, PARTIAL, STRONG)

DEFAULT_LINK_DISTANCE = 2.0      # DNA interaction reach, in sigma
DEFAULT_ANGLE_TOL = 0.5          # nematic alignment tolerance, radians
EXCLUDE_FIRST_FRAMES = 50


@dataclass(frozen=True)
class BehaviorThresholds:
    strong_fraction: float = 0.5
    disorder_fraction: float = 0.1
    disorder_order: float = 0.3


def headings(frame_positions, side):
    """Unit heading per filament: the leading-end tangent."""
    frame_positions = np.asarray(frame_positions, dtype=float)
    d = minimum_image(frame_positions[:, 1, :], frame_positions[:, 0, :], side)
    norms = np.linalg.norm(d, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("degenerate filament: coincident leading sites")
    return d / norms[:, None]


def polar_order(frame_positions, side):
    """Magnitude of the mean unit heading, in [0, 1]."""
    frame_positions = np.asarray(frame_positions, dtype=float)
    if frame_positions.shape[0] == 0:
        raise ValueError("polar order of an empty frame is undefined")
    h = headings(frame_positions, side)
    return float(np.linalg.norm(h.mean(axis=0)))


def nematic_order(frame_positions, side):
    """|<exp(2 i theta)>| over filament headings, in [0, 1]."""
    frame_positions = np.asarray(frame_positions, dtype=float)
    if frame_positions.shape[0] == 0:
        raise ValueError("nematic order of an empty frame is undefined")
    h = headings(frame_positions, side)
    theta = np.arctan2(h[:, 1], h[:, 0])
    return float(np.hypot(np.cos(2 * theta).mean(), np.sin(2 * theta).mean()))


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def cluster_stats(frame_positions, side, link_distance=DEFAULT_LINK_DISTANCE,
                  angle_tol=DEFAULT_ANGLE_TOL):
    """Single-linkage clusters of filaments: linked when any inter-filament
    site pair is within link_distance AND the nematic heading difference is
    below angle_tol. Returns (n_clusters, largest_fraction, size histogram).
    """
    if link_distance <= 0:
        raise ValueError("link_distance must be positive")
    frame_positions = np.asarray(frame_positions, dtype=float)
    n_fil = frame_positions.shape[0]
    if n_fil == 0:
        return 0, 0.0, {}
    n_per = frame_positions.shape[1]
    h = headings(frame_positions, side)
    theta = np.arctan2(h[:, 1], h[:, 0])

    pos = np.ascontiguousarray(frame_positions.reshape(-1, 2))
    groups = np.repeat(np.arange(n_fil, dtype=np.int64), n_per)
    n_cells = int(side / link_distance) if side > 0 else 0
    pi, pj, _ = _kernels.collect_pairs(pos, groups, side, n_cells,
                                       float(link_distance))
    uf = _UnionFind(n_fil)
    if pi.size:
        fil_pairs = np.unique(np.stack([groups[pi], groups[pj]], axis=1),
                              axis=0)
        diff = np.abs(theta[fil_pairs[:, 0]] - theta[fil_pairs[:, 1]]) % np.pi
        aligned = np.minimum(diff, np.pi - diff) < angle_tol
        for a, b in fil_pairs[aligned]:
            uf.union(int(a), int(b))
    roots = np.array([uf.find(i) for i in range(n_fil)])
    _, sizes = np.unique(roots, return_counts=True)
    hist = {}
    for s in sizes:
        hist[int(s)] = hist.get(int(s), 0) + 1
    return int(sizes.size), float(sizes.max() / n_fil), hist


def classify_frame(largest_fraction, polar, nematic,
                   thresholds=BehaviorThresholds()):
    """Map one frame's cluster/order metrics onto the three-regime label."""
    if largest_fraction >= thresholds.strong_fraction:
        return STRONG
    if (largest_fraction <= thresholds.disorder_fraction
            and max(polar, nematic) < thresholds.disorder_order):
        return DISORDER
    return PARTIAL


def classify_behavior(largest_fractions, polar_orders, nematic_orders,
                      thresholds=BehaviorThresholds()):
    """Per-frame labels for a whole cluster time series."""
    return [classify_frame(lf, p, s, thresholds)
            for lf, p, s in zip(largest_fractions, polar_orders,
                                nematic_orders)]


def behavior_series(traj, link_distance=DEFAULT_LINK_DISTANCE,
                    angle_tol=DEFAULT_ANGLE_TOL,
                    thresholds=BehaviorThresholds()):
    """Cluster/order metrics and labels for every frame of a trajectory.

    Returns dict of arrays: frame, largest_fraction, polar_order,
    nematic_order, n_clusters, label.
    """
    n = traj.n_frames
    lf = np.empty(n)
    po = np.empty(n)
    no = np.empty(n)
    nc = np.empty(n, dtype=np.int64)
    for k in range(n):
        f = traj.frame(k)
        nc[k], lf[k], _ = cluster_stats(f, traj.box_side, link_distance,
                                        angle_tol)
        po[k] = polar_order(f, traj.box_side)
        no[k] = nematic_order(f, traj.box_side)
    labels = classify_behavior(lf, po, no, thresholds)
    return {"frame": np.arange(n), "largest_fraction": lf, "polar_order": po,
            "nematic_order": no, "n_clusters": nc, "label": labels}


# ---------------------------------------------------------------------------
# activation statistics
# ---------------------------------------------------------------------------

def activation_boxplot_stats(acts, exclude_first=EXCLUDE_FIRST_FRAMES):
    """Quartile/whisker/outlier stats per (atom, temperature).

    Frames below exclude_first are dropped (the initialization transient).
    Whiskers follow the Tukey 1.5*IQR convention. Returns a list of dict
    rows ordered by (atom, temperature).
    """
    keep = acts.frame >= exclude_first
    if not np.any(keep):
        raise ValueError(f"no activations left after excluding the first "
                         f"{exclude_first} frames")
    coeff = acts.coefficients[:, keep]
    temps = acts.temperature[keep]
    rows = []
    for atom in range(acts.n_atoms):
        for t in np.unique(temps):
            vals = coeff[atom, temps == t]
            q1, med, q3 = np.percentile(vals, [25.0, 50.0, 75.0])
            iqr = q3 - q1
            inside = vals[(vals >= q1 - 1.5 * iqr) & (vals <= q3 + 1.5 * iqr)]
            lo, hi = float(inside.min()), float(inside.max())
            outliers = vals[(vals < lo) | (vals > hi)]
            rows.append({"atom": atom, "temperature": float(t),
                         "q1": float(q1), "median": float(med),
                         "q3": float(q3), "lo": lo, "hi": hi,
                         "n": int(vals.size),
                         "outliers": np.sort(outliers)})
    return rows


def temporal_activation_map(acts, run=None):
    """Tile-averaged activation per frame for one run.

    Returns (frames, series) with series shaped (n_frames, n_atoms); entry
    [k, a] is the mean activation of atom a over frame k's tiles.
    """
    if run is not None:
        keep = acts.run == run
        if not np.any(keep):
            raise ValueError(f"run {run!r} not present")
        coeff = acts.coefficients[:, keep]
        frames = acts.frame[keep]
    else:
        if acts.run is not None and np.unique(np.asarray(acts.run)).size > 1:
            raise ValueError("multiple runs present; pass run=")
        coeff = acts.coefficients
        frames = acts.frame
    uniq = np.unique(frames)
    series = np.empty((uniq.size, coeff.shape[0]))
    for i, k in enumerate(uniq):
        series[i] = coeff[:, frames == k].mean(axis=1)
    return uniq, series


def atom_exemplars(dic, fm, k=5):
    """Per atom, the k tiles whose features are most cosine-similar.

    Ties break in ascending (run, frame, tile) order. Returns, per atom, a
    list of (run, frame, tile, similarity) tuples.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    feats = fm.features
    norms = np.linalg.norm(feats, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    sims = (dic.atoms.T @ feats) / safe
    meta_order = np.lexsort((fm.tile, fm.frame,
                             np.asarray(fm.run, dtype=str)))
    rank_of = np.empty(fm.n_columns, dtype=np.int64)
    rank_of[meta_order] = np.arange(fm.n_columns)
    out = []
    for a in range(dic.n_atoms):
        order = np.lexsort((rank_of, -sims[a]))
        chosen = order[:min(k, fm.n_columns)]
        out.append([(str(fm.run[c]), int(fm.frame[c]), int(fm.tile[c]),
                     float(sims[a, c])) for c in chosen])
    return out


# ---------------------------------------------------------------------------
# CSV outputs
# ---------------------------------------------------------------------------

def write_boxplot_csv(rows, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("atom,temperature,q1,median,q3,lo,hi,n\n")
        for r in rows:
            fh.write(f"{r['atom']},{fmt(r['temperature'])},{fmt(r['q1'])},"
                     f"{fmt(r['median'])},{fmt(r['q3'])},{fmt(r['lo'])},"
                     f"{fmt(r['hi'])},{r['n']}\n")
    return path


def write_temporal_csv(frames, series, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame,atom,mean_activation\n")
        for i, k in enumerate(frames):
            for a in range(series.shape[1]):
                fh.write(f"{int(k)},{a},{fmt(series[i, a])}\n")
    return path


def write_behavior_csv(per_run_series, path):
    """per_run_series: list of (run_id, series-dict from behavior_series)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("run,frame,label,largest_fraction,polar_order\n")
        for run_id, series in per_run_series:
            for i in range(series["frame"].size):
                fh.write(f"{run_id},{int(series['frame'][i])},"
                         f"{series['label'][i]},"
                         f"{fmt(series['largest_fraction'][i])},"
                         f"{fmt(series['polar_order'][i])}\n")
    return path
