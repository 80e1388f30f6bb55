"""Force laws: bending, tension, kinesin drive, Lennard-Jones, DNA duplex, noise.

The DNA duplex term is a temperature-gated harmonic well between sites of
different filaments:

    U_dna(r) = eps/(cutoff - m)^2 * (r - m)^2 - eps,   eps = scale*(dH - T*dS)

active only while the duplex free energy eps is positive (below melting).
The LJ term is truncated and shifted; with the default cutoff 2^(1/6)*sigma
it is the purely repulsive WCA form. To survive overlapping configurations,
the LJ force magnitude is capped at FORCE_CAP with the potential continued
linearly below the cap radius, so force == -grad(U) holds everywhere.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .physics import minimum_image

# LJ force-magnitude cap; the potential is linear below the matching radius
FORCE_CAP = 100.0

WCA_CUTOFF_FACTOR = 2.0 ** (1.0 / 6.0)


@dataclass(frozen=True)
class DnaPotentialParams:
    """DNA duplexing well constants; lengths in units of the filament diameter."""

    sigma: float = 1.0
    m: float = 1.5
    delta_h: float = 400.0
    delta_s: float = 1.0
    cutoff: float = 2.0
    scale: float = 1.0

    def validate(self):
        if not (0 < self.m < self.cutoff):
            raise ValueError("need 0 < m < cutoff for the DNA well")
        if self.delta_s <= 0:
            raise ValueError("delta_s must be positive")


@dataclass(frozen=True)
class MechanicalParams:
    kappa_bend: float = 5.0
    k_tension: float = 200.0
    l0: float = 1.0
    f_drive: float = 1.0
    noise_amp: float = 15.0
    lj_epsilon: float = 1.0
    lj_sigma: float = 1.0
    lj_cutoff: float = WCA_CUTOFF_FACTOR

    def validate(self):
        for name in ("kappa_bend", "k_tension", "l0", "f_drive",
                     "lj_epsilon", "lj_sigma", "lj_cutoff"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.noise_amp < 0:
            raise ValueError("noise_amp must be non-negative")
        if self.lj_cutoff < self.lj_sigma:
            raise ValueError("lj_cutoff must be >= lj_sigma")


def lj_constants(p):
    """Precompute (r_cap, f_cap, u_shift, u_cap) for the capped LJ form."""
    eps, sig, rc = p.lj_epsilon, p.lj_sigma, p.lj_cutoff
    s6c = (sig / rc) ** 6
    u_shift = 4.0 * eps * (s6c * s6c - s6c)

    def fmag(r):
        s6 = (sig / r) ** 6
        return 24.0 * eps * (2.0 * s6 * s6 - s6) / r

    r_min = sig * WCA_CUTOFF_FACTOR
    lo = min(rc, r_min)
    a, b = 1e-3 * sig, lo
    if fmag(a) <= FORCE_CAP:  # force never reaches the cap (tiny eps)
        return 0.0, FORCE_CAP, u_shift, 0.0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if fmag(mid) > FORCE_CAP:
            a = mid
        else:
            b = mid
    r_cap = b
    s6 = (sig / r_cap) ** 6
    u_cap = 4.0 * eps * (s6 * s6 - s6) - u_shift
    return r_cap, FORCE_CAP, u_shift, u_cap


def duplex_free_energy(temperature, p):
    """eps(T) = scale * (dH - T*dS); non-positive above the melting point."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return p.scale * (p.delta_h - temperature * p.delta_s)


def dna_pair_potential(r, eps, p):
    """DNA well energy at separation r; callers skip the term when eps <= 0."""
    if eps <= 0:
        raise ValueError("dna potential is only defined for eps > 0")
    if not (0 < r <= p.cutoff):
        raise ValueError(f"r = {r} outside (0, cutoff = {p.cutoff}]")
    return _kernels.dna_potential_scalar(r, eps, p.m, p.cutoff)


def dna_pair_force(r_vec, eps, p):
    """Force on the site at the origin from a partner at r_vec."""
    if eps <= 0:
        raise ValueError("dna force is only defined for eps > 0")
    r_vec = np.asarray(r_vec, dtype=float)
    r = np.hypot(r_vec[0], r_vec[1])
    if r < 1e-12:
        raise ValueError("coincident sites have no defined pair direction")
    if r > p.cutoff:
        raise ValueError(f"|r_vec| = {r} beyond cutoff = {p.cutoff}")
    f = _kernels.dna_force_scalar(r, eps, p.m, p.cutoff)
    return -f * r_vec / r


def lj_pair_potential(r, p):
    if r <= 0:
        raise ValueError("separation must be positive")
    r_cap, f_cap, u_shift, u_cap = lj_constants(p)
    return _kernels.lj_potential_scalar(r, p.lj_epsilon, p.lj_sigma,
                                        p.lj_cutoff, r_cap, f_cap,
                                        u_shift, u_cap)


def lj_pair_force(r_vec, p):
    """Capped truncated-shifted LJ force on the origin site; zero beyond cutoff."""
    r_vec = np.asarray(r_vec, dtype=float)
    r = np.hypot(r_vec[0], r_vec[1])
    if r < 1e-12:
        raise ValueError("coincident sites have no defined pair direction")
    r_cap, f_cap, _, _ = lj_constants(p)
    f = _kernels.lj_force_scalar(r, p.lj_epsilon, p.lj_sigma, p.lj_cutoff,
                                 r_cap, f_cap)
    return -f * r_vec / r


def _as_state(filament):
    pos = np.ascontiguousarray(filament, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 2:
        raise ValueError("filament must be an (N, 2) array")
    return pos


def bend_forces(filament, p, side=-1.0):
    """Per-site forces from the cosine bending potential of one filament."""
    pos = _as_state(filament)
    out = np.zeros_like(pos)
    _kernels.add_bend_forces(pos, pos.shape[0], side, p.kappa_bend, p.l0, out)
    return out


def bend_energy(filament, p, side=-1.0):
    pos = _as_state(filament)
    return _kernels.bend_energy(pos, pos.shape[0], side, p.kappa_bend, p.l0)


def tension_forces(filament, p, side=-1.0):
    """Harmonic bond forces along each segment; Newton's third law per bond."""
    pos = _as_state(filament)
    out = np.zeros_like(pos)
    _kernels.add_tension_forces(pos, pos.shape[0], side, p.k_tension, p.l0, out)
    return out


def tension_energy(filament, p, side=-1.0):
    pos = _as_state(filament)
    return _kernels.tension_energy(pos, pos.shape[0], side, p.k_tension, p.l0)


def drive_forces(filament, p, side=-1.0):
    """Kinesin propulsion: magnitude f_drive along the tangent, head first."""
    pos = _as_state(filament)
    out = np.zeros_like(pos)
    _kernels.add_drive_forces(pos, pos.shape[0], side, p.f_drive, out)
    return out


def random_forces(n_sites, noise_amp, rng):
    """i.i.d. Gaussian force components, std noise_amp each."""
    if noise_amp < 0:
        raise ValueError("noise_amp must be non-negative")
    if noise_amp == 0:
        return np.zeros((n_sites, 2))
    return rng.normal(0.0, noise_amp, size=(n_sites, 2))


def total_forces(pos, n_per_fil, mech, dna, temperature, pairs,
                 rng=None, noise=None, side=-1.0):
    """Sum of the six force terms for a full state.

    pairs is an (i, j) index pair of arrays covering every inter-filament
    site pair within max(lj_cutoff, dna cutoff); extra candidates are
    harmless (both pair terms apply their own cutoff). Pass either a frozen
    noise array or an rng to draw one (the engine freezes a step's draw and
    reuses it across the midstep halves).
    """
    pos = np.ascontiguousarray(pos, dtype=float)
    mech.validate()
    dna.validate()
    if noise is None:
        noise = (random_forces(pos.shape[0], mech.noise_amp, rng)
                 if rng is not None else np.zeros_like(pos))
    out = np.empty_like(pos)
    pi = np.ascontiguousarray(pairs[0], dtype=np.int64)
    pj = np.ascontiguousarray(pairs[1], dtype=np.int64)
    eps = duplex_free_energy(temperature, dna)
    r_cap, f_cap, _, _ = lj_constants(mech)
    _kernels._total_force(pos, n_per_fil, side, mech.kappa_bend,
                          mech.k_tension, mech.l0, mech.f_drive,
                          pi, pj, mech.lj_epsilon, mech.lj_sigma,
                          mech.lj_cutoff, r_cap, f_cap,
                          eps, dna.m, dna.cutoff,
                          np.ascontiguousarray(noise, dtype=float), out)
    return out


def internal_energy(pos, n_per_fil, mech, dna, temperature, pairs, side=-1.0):
    """Bend + tension + LJ + DNA energy (the conservative terms)."""
    pos = np.ascontiguousarray(pos, dtype=float)
    pi = np.ascontiguousarray(pairs[0], dtype=np.int64)
    pj = np.ascontiguousarray(pairs[1], dtype=np.int64)
    eps = duplex_free_energy(temperature, dna)
    r_cap, f_cap, u_shift, u_cap = lj_constants(mech)
    e = _kernels.bend_energy(pos, n_per_fil, side, mech.kappa_bend, mech.l0)
    e += _kernels.tension_energy(pos, n_per_fil, side, mech.k_tension, mech.l0)
    e += _kernels.pair_energy(pos, side, pi, pj, mech.lj_epsilon,
                              mech.lj_sigma, mech.lj_cutoff, r_cap, f_cap,
                              u_shift, u_cap, eps, dna.m, dna.cutoff)
    return e
