"""Geometric primitives, friction model, and the midstep integrator.

Positions are plain float64 arrays: a filament is an (N, 2) array whose row 0
is the leading end; a simulation state stacks filaments into (n_sites, 2)
with each filament's sites contiguous. The box is square and periodic.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class FrictionParams:
    """Anisotropic per-site rod drag: parallel/transverse to the local tangent."""

    gamma_par: float = 1.0
    gamma_perp: float = 2.0

    def validate(self):
        if self.gamma_par <= 0 or self.gamma_perp <= 0:
            raise ValueError("friction coefficients must be positive")


def wrap_into_box(pos, side):
    """Map coordinates into [0, side). Returns a new array; side<=0 is a no-op."""
    pos = np.asarray(pos, dtype=float)
    if side <= 0:
        return pos.copy()
    out = pos - side * np.floor(pos / side)
    out[out >= side] -= side
    return out


def minimum_image(a, b, side):
    """Shortest displacement b - a under periodic wrapping.

    Each component of the result lies in (-side/2, side/2]. Works on single
    points or broadcastable arrays of points; side <= 0 disables wrapping.
    """
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    if side <= 0:
        return d
    d = d - side * np.floor(d / side)
    d = np.where(d > 0.5 * side, d - side, d)
    return d


def site_friction_inverse(tangent, friction):
    """Inverse friction tensor (1/g_par) u u^T + (1/g_perp) (I - u u^T).

    tangent must be a unit vector; a zero tangent means a degenerate
    filament and raises.
    """
    friction.validate()
    t = np.asarray(tangent, dtype=float)
    norm = np.hypot(t[0], t[1])
    if norm < 1e-12:
        raise ValueError("zero tangent: degenerate filament geometry")
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"tangent is not unit length (|t| = {norm})")
    u = t / norm
    outer = np.outer(u, u)
    return outer / friction.gamma_par + (np.eye(2) - outer) / friction.gamma_perp


def site_tangents(pos, n_per_fil, side):
    """Unit tangent per site, oriented toward each filament's leading end.

    Interior sites use the central difference of their neighbors; end sites
    use their single bond.
    """
    pos = np.ascontiguousarray(pos, dtype=float)
    n = pos.shape[0]
    out = np.empty((n, 2))
    for f0 in range(0, n, n_per_fil):
        for i in range(f0, f0 + n_per_fil):
            out[i] = _kernels._site_tangent(pos, f0, n_per_fil, i, side)
    return out


def midstep_advance(pos, force_eval, dt, n_per_fil, friction, side=-1.0):
    """One midstep update of all sites.

    Half step with v(t) = zeta^-1 F(r(t)), then a full step from r(t) with
    velocities recomputed at the half-step positions. force_eval(pos) must be
    deterministic for the duration of the step (the engine freezes each
    step's random draws before calling this). Returns wrapped new positions.

    Raises FloatingPointError if the force evaluation goes non-finite.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    friction.validate()
    pos = np.ascontiguousarray(pos, dtype=float)
    n = pos.shape[0]

    def _vel(p):
        f = np.asarray(force_eval(p), dtype=float)
        if not np.all(np.isfinite(f)):
            raise FloatingPointError("non-finite force in midstep advance")
        v = np.empty((n, 2))
        _kernels.velocities(p, n_per_fil, side,
                            friction.gamma_par, friction.gamma_perp, f, v)
        return v

    half = wrap_into_box(pos + 0.5 * dt * _vel(pos), side)
    new = wrap_into_box(pos + dt * _vel(np.ascontiguousarray(half)), side)
    return new
