import numpy as np
import pytest

from mtswarm.engine import SimConfig
from mtswarm.physics import FrictionParams
from mtswarm.potentials import DnaPotentialParams, MechanicalParams


def tiny_config(**overrides):
    """Small, fast simulation setup for unit tests."""
    defaults = dict(
        n_filaments=12,
        sites_per_filament=5,
        box_side=20.0,
        n_frames=20,
        seed=42,
        temperature_schedule=((0, 300.0),),
        dna=DnaPotentialParams(scale=0.006),
        mech=MechanicalParams(noise_amp=12.0, f_drive=1.5, k_tension=300.0),
        friction=FrictionParams(),
    )
    defaults.update(overrides)
    return SimConfig(**defaults)


def numeric_gradient(energy, pos, h=1e-6):
    """Central-difference gradient of a scalar energy over site coordinates."""
    pos = np.array(pos, dtype=float)
    grad = np.zeros_like(pos)
    for i in range(pos.shape[0]):
        for k in range(pos.shape[1]):
            up = pos.copy()
            up[i, k] += h
            dn = pos.copy()
            dn[i, k] -= h
            grad[i, k] = (energy(up) - energy(dn)) / (2 * h)
    return grad


def brute_force_pairs(pos, side, cutoff, groups):
    """Independent O(n^2) reference for the cell-list pair enumeration."""
    pos = np.asarray(pos, dtype=float)
    groups = np.asarray(groups)
    d = pos[:, None, :] - pos[None, :, :]
    if side > 0:
        d -= side * np.round(d / side)
    dist = np.hypot(d[..., 0], d[..., 1])
    n = pos.shape[0]
    iu = np.triu_indices(n, k=1)
    keep = (dist[iu] <= cutoff) & (groups[iu[0]] != groups[iu[1]])
    return iu[0][keep], iu[1][keep], dist[iu][keep]


def lasso_coordinate_descent(z, T, mu, sweeps=20000, tol=1e-14):
    """Independent coordinate-descent LASSO oracle (objective comparisons)."""
    z = np.asarray(z, dtype=float)
    T = np.asarray(T, dtype=float)
    n_a = T.shape[1]
    c = np.zeros(n_a)
    col_sq = np.einsum("ij,ij->j", T, T)
    r = z.copy()
    for _ in range(sweeps):
        delta = 0.0
        for j in range(n_a):
            if col_sq[j] == 0:
                continue
            old = c[j]
            rho = T[:, j] @ r + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - mu, 0.0) / col_sq[j]
            if new != old:
                r += T[:, j] * (old - new)
                c[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    obj = 0.5 * float(r @ r) + mu * float(np.abs(c).sum())
    return c, obj


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
