"""Sparse semantic dictionary: coding, learning, and atom ranking.

The joint objective is

    min_{T, C}  1/2 ||Z - T C||_F^2 + mu ||C||_1

with unit-norm atom columns. Coding solves the per-column LASSO with an
accelerated proximal gradient (soft-thresholding) iteration, warm-started
and safeguarded so the objective never increases; convergence is certified
by the L1 subgradient (KKT) residual. The dictionary step is the
method-of-optimal-directions least-squares solve, with atoms re-normalized
(coefficients rescaled inversely, preserving T C) and dead atoms re-seeded
from the worst-reconstructed data column.

Feature columns built by the built-in descriptor are unit norm, which makes
mu = 1 degenerate (|t.z| <= 1 means c = 0 exactly); external semantic
embeddings are not unit norm. The learn/decompose pipeline therefore scales
features by a stored `feature_scale` (default 10, recorded in the dictionary
file) before solving; the solvers themselves are scale-agnostic.
"""

from dataclasses import dataclass, field

import numpy as np

from .csvio import SchemaError, check_header, fmt, split_comments

DEFAULT_FEATURE_SCALE = 10.0

# documented optimality bound on returned activations; iterations aim for
# the tighter SparseCodingConfig.kkt_tol so independent re-solves agree
KKT_BOUND = 1e-6


@dataclass
class SparseCodingConfig:
    mu: float = 1.0
    max_iter: int = 3000
    tol: float = 1e-7            # outer objective relative-change stop
    outer_rounds: int = 50
    kkt_tol: float = 1e-8        # inner subgradient residual target

    def validate(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class Dictionary:
    atoms: np.ndarray                 # (d, n_a), unit-norm columns
    relevancy_order: np.ndarray = None
    feature_scale: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float)
        if self.relevancy_order is None:
            self.relevancy_order = np.arange(self.n_atoms)
        self.relevancy_order = np.asarray(self.relevancy_order, dtype=np.int64)

    @property
    def n_atoms(self):
        return self.atoms.shape[1]

    @property
    def dim(self):
        return self.atoms.shape[0]

    def validate(self):
        norms = np.linalg.norm(self.atoms, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("atom columns must be unit norm")
        gram = np.abs(self.atoms.T @ self.atoms)
        np.fill_diagonal(gram, 0.0)
        if np.any(gram >= 0.999):
            raise ValueError("near-duplicate atoms (|cosine| >= 0.999)")
        if sorted(self.relevancy_order) != list(range(self.n_atoms)):
            raise ValueError("relevancy_order must be a permutation")


@dataclass
class ActivationSet:
    """Per-column coefficients with tile metadata and achieved objectives."""

    coefficients: np.ndarray   # (n_a, n)
    objective: np.ndarray      # (n,)
    converged: np.ndarray      # (n,) bool
    run: np.ndarray = None
    temperature: np.ndarray = None
    frame: np.ndarray = None
    tile: np.ndarray = None

    @property
    def n_atoms(self):
        return self.coefficients.shape[0]

    @property
    def n_columns(self):
        return self.coefficients.shape[1]

    def with_metadata(self, fm):
        return ActivationSet(self.coefficients, self.objective, self.converged,
                             run=np.asarray(fm.run), temperature=fm.temperature,
                             frame=fm.frame, tile=fm.tile)


def objective_value(Z, T, C, mu):
    """Full-space evaluation of 1/2||Z - TC||^2 + mu*||C||_1, per column."""
    resid = Z - T @ C
    return 0.5 * np.einsum("ij,ij->j", resid, resid) \
        + mu * np.abs(C).sum(axis=0)


def kkt_residual(Z, T, C, mu):
    """Max violation of the LASSO optimality conditions, per column.

    For each coordinate the smooth gradient g = T^T(TC - Z) must satisfy
    |g| <= mu where c = 0 and g = -mu*sign(c) where c != 0.
    """
    g = T.T @ (T @ C - Z)
    zero = C == 0.0
    viol = np.where(zero, np.maximum(np.abs(g) - mu, 0.0),
                    np.abs(g + mu * np.sign(C)))
    return viol.max(axis=0) if C.size else np.zeros(C.shape[1])


def _soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def sparse_code_batch(Z, T, cfg, warm=None):
    """Solve the LASSO for every column of Z against dictionary T.

    Accelerated proximal gradient with per-column adaptive restart and a
    monotone safeguard: a column's accepted iterate never has a larger
    objective than its warm start. Returns (C, objective, converged).
    """
    cfg.validate()
    Z = np.asarray(Z, dtype=float)
    T = np.asarray(T, dtype=float)
    d, n = Z.shape
    n_a = T.shape[1]
    if T.shape[0] != d:
        raise ValueError("dictionary/feature dimension mismatch")
    G = T.T @ T
    B = T.T @ Z
    z2 = np.einsum("ij,ij->j", Z, Z)
    L = float(np.linalg.eigvalsh(G)[-1])
    step = 1.0 / max(L, 1e-300)

    def obj_of(C):
        # evaluated in coefficient space: 1/2(z'z - 2<C,B> + <C,GC>) + mu|C|
        q = z2 - 2.0 * np.einsum("ij,ij->j", C, B) \
            + np.einsum("ij,ij->j", C, G @ C)
        return 0.5 * q + cfg.mu * np.abs(C).sum(axis=0)

    def kkt_of(C):
        g = G @ C - B
        viol = np.where(C == 0.0, np.maximum(np.abs(g) - cfg.mu, 0.0),
                        np.abs(g + cfg.mu * np.sign(C)))
        return viol.max(axis=0)

    C = np.zeros((n_a, n)) if warm is None else np.array(warm, dtype=float)
    obj = obj_of(C)
    Y = C.copy()
    tk = np.ones(n)
    converged = kkt_of(C) <= cfg.kkt_tol
    stalled = np.zeros(n, dtype=bool)
    for _ in range(cfg.max_iter):
        done = converged | stalled
        if done.all():
            break
        cand = _soft(Y - step * (G @ Y - B), step * cfg.mu)
        # freeze finished columns so each column's trajectory is independent
        # of the rest of the batch (permutation equivariance)
        cand[:, done] = C[:, done]
        cand_obj = obj_of(cand)
        cand_obj[done] = obj[done]
        worse = cand_obj > obj
        if np.any(worse):
            # momentum overshoot: restart those columns with a plain
            # proximal step from the current iterate (guaranteed descent)
            redo = _soft(C[:, worse] - step * (G @ C[:, worse] - B[:, worse]),
                         step * cfg.mu)
            cand[:, worse] = redo
            cand_obj[worse] = obj_of(cand)[worse]
            tk[worse] = 1.0
            # even the plain step cannot improve within float rounding:
            # the column sits at its numerical fixed point, keep it as is
            still = cand_obj > obj
            cand[:, still] = C[:, still]
            cand_obj[still] = obj[still]
            stalled |= still
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        beta = (tk - 1.0) / t_next
        Y = cand + beta * (cand - C)
        C, obj, tk = cand, cand_obj, t_next
        converged |= kkt_of(C) <= cfg.kkt_tol
    # a column stalled at its float64 fixed point has converged as far as
    # the arithmetic allows; accept it if it meets the documented bound
    final = kkt_of(C)
    converged |= final <= cfg.kkt_tol
    converged |= stalled & (final <= KKT_BOUND)
    return C, objective_value(Z, T, C, cfg.mu), converged


def sparse_code(z, T, cfg, warm=None):
    """Single-column coding; returns (coefficients, objective, converged)."""
    z = np.asarray(z, dtype=float).reshape(-1, 1)
    warm = None if warm is None else np.asarray(warm, dtype=float).reshape(-1, 1)
    C, obj, conv = sparse_code_batch(z, T, cfg, warm=warm)
    return C[:, 0], float(obj[0]), bool(conv[0])


def _reseed_dead_atoms(Z, T, C, dead):
    """Replace unused atoms with the worst-reconstructed data columns."""
    if not np.any(dead):
        return T
    resid = np.einsum("ij,ij->j", Z - T @ C, Z - T @ C)
    worst = np.argsort(-resid)
    used = 0
    for a in np.flatnonzero(dead):
        while used < worst.size:
            col = Z[:, worst[used]]
            used += 1
            norm = np.linalg.norm(col)
            if norm > 1e-12:
                T[:, a] = col / norm
                break
        else:
            fallback = np.zeros(T.shape[0])
            fallback[a % T.shape[0]] = 1.0
            T[:, a] = fallback
    return T


def _atom_coordinate_pass(Z, C, T):
    """One Gauss-Seidel sweep over unit-norm atoms with C fixed.

    Each atom moves to argmin of the fit under its unit-norm constraint:
    t_i = normalize(R_i c_i^T) with R_i the residual excluding atom i. The
    fit never increases and ||C||_1 is untouched.
    """
    A = C @ C.T
    B = Z @ C.T
    T = T.copy()
    for i in range(T.shape[1]):
        if A[i, i] == 0.0:
            continue
        v = B[:, i] - T @ A[:, i] + T[:, i] * A[i, i]
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            T[:, i] = v / norm
    return T


def dictionary_update(Z, C, T_prev, ridge=1e-8, mu=0.0):
    """Least-squares dictionary step (method of optimal directions) for fixed C.

    Atoms are re-normalized with coefficients rescaled inversely (TC is
    preserved); atoms with all-zero usage are re-seeded from the worst
    reconstructed column. Returns (T, C) with C rescaled.

    With mu > 0 the step is additionally held to the full objective: the
    inverse rescale changes ||C||_1, so near a stationary point the raw
    least-squares move can lose more on the L1 term than it gains on the
    fit. When that happens the update falls back to a unit-norm-constrained
    coordinate pass over atoms (C untouched), which cannot increase either
    term. learn_dictionary relies on this for its monotone alternation.
    """
    Z = np.asarray(Z, dtype=float)
    C_prev = np.asarray(C, dtype=float)
    C = C_prev.copy()
    T_prev = np.asarray(T_prev, dtype=float)
    A = C @ C.T
    B = Z @ C.T
    try:
        T = np.linalg.solve(A.T, B.T).T
        if not np.all(np.isfinite(T)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        A = A + ridge * np.eye(A.shape[0])
        T = np.linalg.solve(A.T, B.T).T
    if np.linalg.norm(Z - T @ C) > np.linalg.norm(Z - T_prev @ C):
        T = T_prev.copy()  # ridge/conditioning fallback lost ground
    dead = ~np.any(C != 0.0, axis=1)
    norms = np.linalg.norm(T, axis=0)
    dead |= norms < 1e-12
    live = ~dead
    T[:, live] /= norms[live]
    C[live, :] *= norms[live][:, None]
    if mu > 0.0:
        before = objective_value(Z, T_prev, C_prev, mu).sum()
        after = objective_value(Z, T, C, mu).sum()
        if after > before:
            T = _atom_coordinate_pass(Z, C_prev, T_prev)
            C = C_prev.copy()
            dead = ~np.any(C != 0.0, axis=1)
            dead |= np.linalg.norm(T, axis=0) < 1e-12
    T = _reseed_dead_atoms(Z, T, C, dead)
    return T, C


def learn_dictionary(Z, n_atoms, cfg, rng, feature_scale=1.0):
    """Alternate coding and dictionary updates until the objective settles.

    Z is (d, n) feature columns; atoms are initialized from n_atoms distinct
    (seeded) nonzero data columns. Returns (Dictionary, ActivationSet,
    objective history), the history being the objective after each coding
    pass — non-increasing across rounds up to float rounding.
    """
    cfg.validate()
    Z = np.asarray(Z, dtype=float) * feature_scale
    d, n = Z.shape
    if n_atoms > n:
        raise ValueError(f"n_atoms = {n_atoms} exceeds {n} data columns")
    norms = np.linalg.norm(Z, axis=0)
    candidates = np.flatnonzero(norms > 1e-12)
    if candidates.size < n_atoms:
        raise ValueError("not enough nonzero feature columns to seed atoms")

    # seeded draw of distinct, pairwise non-duplicate columns
    picked = []
    order = rng.permutation(candidates)
    for idx in order:
        col = Z[:, idx] / norms[idx]
        if all(abs(col @ Z[:, p] / norms[p]) < 0.999 for p in picked):
            picked.append(idx)
        if len(picked) == n_atoms:
            break
    if len(picked) < n_atoms:  # heavily duplicated data: fill with repeats
        for idx in order:
            if idx not in picked:
                picked.append(idx)
            if len(picked) == n_atoms:
                break
    T = Z[:, picked] / norms[picked]

    C = None
    history = []
    for _ in range(cfg.outer_rounds):
        C, obj_cols, conv = sparse_code_batch(Z, T, cfg, warm=C)
        history.append(float(obj_cols.sum()))
        if len(history) >= 2:
            prev, cur = history[-2], history[-1]
            if abs(prev - cur) <= cfg.tol * max(1.0, abs(prev)):
                break
        T, C = dictionary_update(Z, C, T, mu=cfg.mu)
    C, obj_cols, conv = sparse_code_batch(Z, T, cfg, warm=C)

    acts = ActivationSet(C, obj_cols, conv)
    dic = Dictionary(T, feature_scale=feature_scale, mu=cfg.mu)
    return dic, acts, np.array(history)


def rank_atoms(acts):
    """Order atoms by discriminant capacity: descending between-temperature
    variance of the mean |activation|, ties broken by total |activation|."""
    if acts.n_columns == 0:
        raise ValueError("empty activation set")
    mags = np.abs(acts.coefficients)
    mass = mags.sum(axis=1)
    if acts.temperature is None:
        variance = np.zeros(acts.n_atoms)
    else:
        temps = np.unique(acts.temperature)
        per_temp = np.stack([
            mags[:, acts.temperature == t].mean(axis=1) for t in temps])
        variance = per_temp.var(axis=0)
    idx = np.arange(acts.n_atoms)
    return np.lexsort((idx, -mass, -variance))


def decompose(fm, dic, cfg=None, warm=None):
    """Decompose a FeatureMatrix over a learned dictionary (Eq.-9 re-solve).

    Applies the dictionary's stored feature scale and mu so decomposition is
    consistent with how the dictionary was learned.
    """
    if cfg is None:
        cfg = SparseCodingConfig(mu=dic.mu)
    Z = fm.features * dic.feature_scale
    C, obj, conv = sparse_code_batch(Z, dic.atoms, cfg, warm=warm)
    return ActivationSet(C, obj, conv).with_metadata(fm)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def write_dictionary_csv(dic, path):
    """Dictionary CSV: atom rows plus relevancy/scale/mu comment lines."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# relevancy_order=" +
                 ",".join(str(i) for i in dic.relevancy_order) + "\n")
        fh.write(f"# feature_scale={dic.feature_scale!r}\n")
        fh.write(f"# mu={dic.mu!r}\n")
        fh.write(",".join(["atom"] + [f"f{i}" for i in range(dic.dim)]) + "\n")
        for a in range(dic.n_atoms):
            row = [str(a)] + [fmt(v, 17) for v in dic.atoms[:, a]]
            fh.write(",".join(row) + "\n")
    return path


def read_dictionary_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    comments, body = split_comments(lines)
    meta = {}
    for c in comments:
        if "=" in c:
            key, value = c.split("=", 1)
            meta[key.strip()] = value.strip()
    if not body:
        raise SchemaError(f"{path}: missing header")
    header = body[0].split(",")
    if header[0] != "atom":
        raise SchemaError(f"{path}: expected 'atom,f0..' header, "
                          f"found {body[0]!r}")
    dim = len(header) - 1
    check_header(header[1:], [f"f{i}" for i in range(dim)], path)
    rows = body[1:]
    atoms = np.empty((dim, len(rows)))
    for r, line in enumerate(rows):
        parts = line.split(",")
        if len(parts) != dim + 1:
            raise SchemaError(f"{path}: atom row {r} has {len(parts)} fields")
        atoms[:, int(parts[0])] = [float(v) for v in parts[1:]]
    order = None
    if "relevancy_order" in meta:
        order = np.array([int(v) for v in meta["relevancy_order"].split(",")])
    return Dictionary(atoms, relevancy_order=order,
                      feature_scale=float(meta.get("feature_scale", 1.0)),
                      mu=float(meta.get("mu", 1.0)))


def write_activations_csv(acts, path):
    """Activation CSV: run,temperature,frame,tile,c0..c{n_a-1},objective."""
    n_a = acts.n_atoms
    header = ["run", "temperature", "frame", "tile"] \
        + [f"c{i}" for i in range(n_a)] + ["objective"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for c in range(acts.n_columns):
            row = [str(acts.run[c]), fmt(acts.temperature[c]),
                   str(int(acts.frame[c])), str(int(acts.tile[c]))]
            row += [fmt(v) for v in acts.coefficients[:, c]]
            row.append(fmt(acts.objective[c]))
            fh.write(",".join(row) + "\n")
    return path


def read_activations_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    _, body = split_comments(lines)
    if not body:
        raise SchemaError(f"{path}: empty file")
    header = body[0].split(",")
    if (len(header) < 6 or header[:4] != ["run", "temperature", "frame", "tile"]
            or header[-1] != "objective"):
        raise SchemaError(f"{path}: expected header "
                          "run,temperature,frame,tile,c0..,objective; "
                          f"found {body[0]!r}")
    n_a = len(header) - 5
    check_header(header[4:-1], [f"c{i}" for i in range(n_a)], path)
    rows = body[1:]
    n = len(rows)
    C = np.empty((n_a, n))
    obj = np.empty(n)
    runs, temps = [], np.empty(n)
    frames, tiles = np.empty(n, np.int64), np.empty(n, np.int64)
    for r, line in enumerate(rows):
        parts = line.split(",")
        if len(parts) != len(header):
            raise SchemaError(f"{path}: row {r + 1} has {len(parts)} fields")
        runs.append(parts[0])
        temps[r] = float(parts[1])
        frames[r] = int(parts[2])
        tiles[r] = int(parts[3])
        C[:, r] = [float(v) for v in parts[4:-1]]
        obj[r] = float(parts[-1])
    return ActivationSet(C, obj, np.ones(n, dtype=bool),
                         run=np.array(runs, dtype=object), temperature=temps,
                         frame=frames, tile=tiles)
