"""Numba kernels for the simulation hot path.

Everything here operates on flat float64 arrays; the public modules
(`physics`, `potentials`, `neighbors`, `engine`) wrap these kernels behind
their documented interfaces. All kernels are single-threaded and
deterministic: accumulation order is a pure function of the input arrays.

Conventions:
  - positions are (n_sites, 2) with sites of one filament contiguous,
    ``n_per_fil`` sites each; site 0 of a filament is its leading end
  - ``side`` is the periodic box side; ``side <= 0`` means open boundaries
  - pair force scalars are positive for repulsion
"""

import numpy as np
from numba import njit


# ---------------------------------------------------------------------------
# periodic geometry
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def wrap_coord(x, side):
    """Map a coordinate into [0, side); identity for side <= 0."""
    if side <= 0.0:
        return x
    w = x - side * np.floor(x / side)
    if w >= side:  # guard the x == -tiny rounding case
        w -= side
    return w


@njit(cache=True, inline="always")
def min_image(d, side):
    """Map a displacement component into (-side/2, side/2]."""
    if side <= 0.0:
        return d
    d = d - side * np.floor(d / side)
    if d > 0.5 * side:
        d -= side
    return d


@njit(cache=True)
def wrap_positions(pos, side):
    for s in range(pos.shape[0]):
        pos[s, 0] = wrap_coord(pos[s, 0], side)
        pos[s, 1] = wrap_coord(pos[s, 1], side)


# ---------------------------------------------------------------------------
# cell list
# ---------------------------------------------------------------------------

@njit(cache=True)
def cell_sort(pos, side, n_cells):
    """Counting sort of sites into an n_cells x n_cells periodic grid.

    Returns (cell_of_site, order, start, count): sites of cell c occupy
    order[start[c]:start[c]+count[c]], in ascending site index (stable).
    """
    n = pos.shape[0]
    cell_len = side / n_cells
    cell_of = np.empty(n, np.int64)
    for s in range(n):
        cx = int(wrap_coord(pos[s, 0], side) / cell_len)
        cy = int(wrap_coord(pos[s, 1], side) / cell_len)
        if cx >= n_cells:
            cx = n_cells - 1
        if cy >= n_cells:
            cy = n_cells - 1
        if cx < 0:
            cx = 0
        if cy < 0:
            cy = 0
        cell_of[s] = cx * n_cells + cy
    total = n_cells * n_cells
    count = np.zeros(total, np.int64)
    for s in range(n):
        count[cell_of[s]] += 1
    start = np.zeros(total, np.int64)
    acc = 0
    for c in range(total):
        start[c] = acc
        acc += count[c]
    fill = np.zeros(total, np.int64)
    order = np.empty(n, np.int64)
    for s in range(n):
        c = cell_of[s]
        order[start[c] + fill[c]] = s
        fill[c] += 1
    return cell_of, order, start, count


@njit(cache=True)
def _pair_pass(pos, group_of, side, n_cells, cutoff,
               order, start, count, out_i, out_j, out_d, fill):
    """Single enumeration pass over the half neighbor stencil.

    With fill=False only counts accepted pairs; with fill=True writes them.
    Returns the number of accepted pairs.
    """
    c2 = cutoff * cutoff
    m = 0
    for cx in range(n_cells):
        for cy in range(n_cells):
            c = cx * n_cells + cy
            na = count[c]
            if na == 0:
                continue
            a0 = start[c]
            # within-cell pairs
            for p in range(na):
                i = order[a0 + p]
                for q in range(p + 1, na):
                    j = order[a0 + q]
                    if group_of[i] == group_of[j]:
                        continue
                    dx = min_image(pos[j, 0] - pos[i, 0], side)
                    dy = min_image(pos[j, 1] - pos[i, 1], side)
                    r2 = dx * dx + dy * dy
                    if r2 <= c2:
                        if fill:
                            out_i[m] = i
                            out_j[m] = j
                            out_d[m] = np.sqrt(r2)
                        m += 1
            # half stencil: (+1,0), (0,+1), (+1,+1), (+1,-1)
            for k in range(4):
                if k == 0:
                    ox, oy = 1, 0
                elif k == 1:
                    ox, oy = 0, 1
                elif k == 2:
                    ox, oy = 1, 1
                else:
                    ox, oy = 1, -1
                bx = (cx + ox) % n_cells
                by = (cy + oy) % n_cells
                b = bx * n_cells + by
                nb = count[b]
                if nb == 0:
                    continue
                b0 = start[b]
                for p in range(na):
                    i = order[a0 + p]
                    for q in range(nb):
                        j = order[b0 + q]
                        if group_of[i] == group_of[j]:
                            continue
                        dx = min_image(pos[j, 0] - pos[i, 0], side)
                        dy = min_image(pos[j, 1] - pos[i, 1], side)
                        r2 = dx * dx + dy * dy
                        if r2 <= c2:
                            if fill:
                                out_i[m] = i
                                out_j[m] = j
                                out_d[m] = np.sqrt(r2)
                            m += 1
    return m


@njit(cache=True)
def _pair_brute(pos, group_of, side, cutoff, out_i, out_j, out_d, fill):
    c2 = cutoff * cutoff
    n = pos.shape[0]
    m = 0
    for i in range(n):
        for j in range(i + 1, n):
            if group_of[i] == group_of[j]:
                continue
            dx = min_image(pos[j, 0] - pos[i, 0], side)
            dy = min_image(pos[j, 1] - pos[i, 1], side)
            r2 = dx * dx + dy * dy
            if r2 <= c2:
                if fill:
                    out_i[m] = i
                    out_j[m] = j
                    out_d[m] = np.sqrt(r2)
                m += 1
    return m


@njit(cache=True)
def collect_pairs(pos, group_of, side, n_cells, cutoff):
    """All inter-group pairs with min-image distance <= cutoff.

    Uses the cell grid when n_cells >= 3, otherwise an exact brute-force
    sweep (small boxes). Returns (i, j, dist) with i < j per pair; order is
    deterministic but not sorted.
    """
    empty_i = np.empty(0, np.int64)
    empty_d = np.empty(0, np.float64)
    if n_cells >= 3:
        cell_of, order, start, count = cell_sort(pos, side, n_cells)
        m = _pair_pass(pos, group_of, side, n_cells, cutoff,
                       order, start, count, empty_i, empty_i, empty_d, False)
        out_i = np.empty(m, np.int64)
        out_j = np.empty(m, np.int64)
        out_d = np.empty(m, np.float64)
        _pair_pass(pos, group_of, side, n_cells, cutoff,
                   order, start, count, out_i, out_j, out_d, True)
    else:
        m = _pair_brute(pos, group_of, side, cutoff,
                        empty_i, empty_i, empty_d, False)
        out_i = np.empty(m, np.int64)
        out_j = np.empty(m, np.int64)
        out_d = np.empty(m, np.float64)
        _pair_brute(pos, group_of, side, cutoff, out_i, out_j, out_d, True)
    # enforce i < j (cell traversal can emit either orientation)
    for p in range(out_i.shape[0]):
        if out_i[p] > out_j[p]:
            t = out_i[p]
            out_i[p] = out_j[p]
            out_j[p] = t
    return out_i, out_j, out_d


# ---------------------------------------------------------------------------
# force terms
# ---------------------------------------------------------------------------

@njit(cache=True)
def add_bend_forces(pos, n_per_fil, side, kappa, l0, out):
    """Gradient of U = (kappa/l0) * sum(1 - cos(theta_j)) over interior angles."""
    if n_per_fil < 3 or kappa == 0.0:
        return
    n = pos.shape[0]
    pref = kappa / l0
    for f0 in range(0, n, n_per_fil):
        for j in range(f0 + 1, f0 + n_per_fil - 1):
            ux = min_image(pos[j, 0] - pos[j - 1, 0], side)
            uy = min_image(pos[j, 1] - pos[j - 1, 1], side)
            wx = min_image(pos[j + 1, 0] - pos[j, 0], side)
            wy = min_image(pos[j + 1, 1] - pos[j, 1], side)
            bu = np.sqrt(ux * ux + uy * uy)
            bw = np.sqrt(wx * wx + wy * wy)
            if bu < 1e-12 or bw < 1e-12:
                continue
            inv = 1.0 / (bu * bw)
            c = (ux * wx + uy * wy) * inv
            dcdux = wx * inv - c * ux / (bu * bu)
            dcduy = wy * inv - c * uy / (bu * bu)
            dcdwx = ux * inv - c * wx / (bw * bw)
            dcdwy = uy * inv - c * wy / (bw * bw)
            out[j - 1, 0] -= pref * dcdux
            out[j - 1, 1] -= pref * dcduy
            out[j, 0] += pref * (dcdux - dcdwx)
            out[j, 1] += pref * (dcduy - dcdwy)
            out[j + 1, 0] += pref * dcdwx
            out[j + 1, 1] += pref * dcdwy


@njit(cache=True)
def bend_energy(pos, n_per_fil, side, kappa, l0):
    e = 0.0
    if n_per_fil < 3:
        return e
    n = pos.shape[0]
    for f0 in range(0, n, n_per_fil):
        for j in range(f0 + 1, f0 + n_per_fil - 1):
            ux = min_image(pos[j, 0] - pos[j - 1, 0], side)
            uy = min_image(pos[j, 1] - pos[j - 1, 1], side)
            wx = min_image(pos[j + 1, 0] - pos[j, 0], side)
            wy = min_image(pos[j + 1, 1] - pos[j, 1], side)
            bu = np.sqrt(ux * ux + uy * uy)
            bw = np.sqrt(wx * wx + wy * wy)
            if bu < 1e-12 or bw < 1e-12:
                continue
            c = (ux * wx + uy * wy) / (bu * bw)
            e += (kappa / l0) * (1.0 - c)
    return e


@njit(cache=True)
def add_tension_forces(pos, n_per_fil, side, k_tension, l0, out):
    """Harmonic bond forces k*(|d| - l0) along each intra-filament segment."""
    n = pos.shape[0]
    for f0 in range(0, n, n_per_fil):
        for i in range(f0, f0 + n_per_fil - 1):
            dx = min_image(pos[i + 1, 0] - pos[i, 0], side)
            dy = min_image(pos[i + 1, 1] - pos[i, 1], side)
            bd = np.sqrt(dx * dx + dy * dy)
            if bd < 1e-12:
                continue
            f = k_tension * (bd - l0) / bd
            out[i, 0] += f * dx
            out[i, 1] += f * dy
            out[i + 1, 0] -= f * dx
            out[i + 1, 1] -= f * dy


@njit(cache=True)
def tension_energy(pos, n_per_fil, side, k_tension, l0):
    e = 0.0
    n = pos.shape[0]
    for f0 in range(0, n, n_per_fil):
        for i in range(f0, f0 + n_per_fil - 1):
            dx = min_image(pos[i + 1, 0] - pos[i, 0], side)
            dy = min_image(pos[i + 1, 1] - pos[i, 1], side)
            bd = np.sqrt(dx * dx + dy * dy)
            e += 0.5 * k_tension * (bd - l0) * (bd - l0)
    return e


@njit(cache=True, inline="always")
def _site_tangent(pos, f0, n_per_fil, i, side):
    """Unit tangent at site i, oriented toward the leading end (site f0)."""
    if i == f0:
        tx = min_image(pos[f0, 0] - pos[f0 + 1, 0], side)
        ty = min_image(pos[f0, 1] - pos[f0 + 1, 1], side)
    elif i == f0 + n_per_fil - 1:
        tx = min_image(pos[i - 1, 0] - pos[i, 0], side)
        ty = min_image(pos[i - 1, 1] - pos[i, 1], side)
    else:
        tx = min_image(pos[i - 1, 0] - pos[i + 1, 0], side)
        ty = min_image(pos[i - 1, 1] - pos[i + 1, 1], side)
    norm = np.sqrt(tx * tx + ty * ty)
    if norm < 1e-12:
        return 0.0, 0.0
    return tx / norm, ty / norm


@njit(cache=True)
def add_drive_forces(pos, n_per_fil, side, f_drive, out):
    """Constant-magnitude propulsion along the local tangent, head first."""
    n = pos.shape[0]
    for f0 in range(0, n, n_per_fil):
        for i in range(f0, f0 + n_per_fil):
            tx, ty = _site_tangent(pos, f0, n_per_fil, i, side)
            out[i, 0] += f_drive * tx
            out[i, 1] += f_drive * ty


@njit(cache=True, inline="always")
def lj_force_scalar(r, eps, sigma, cutoff, r_cap, f_cap):
    """Truncated-and-shifted LJ force magnitude (positive = repulsive)."""
    if r > cutoff or eps == 0.0:
        return 0.0
    if r < r_cap:
        return f_cap
    s2 = (sigma / r) * (sigma / r)
    s6 = s2 * s2 * s2
    return 24.0 * eps * (2.0 * s6 * s6 - s6) / r


@njit(cache=True, inline="always")
def lj_potential_scalar(r, eps, sigma, cutoff, r_cap, f_cap, u_shift, u_cap):
    """Truncated-and-shifted LJ energy; linear continuation below r_cap."""
    if r > cutoff or eps == 0.0:
        return 0.0
    if r < r_cap:
        return u_cap + f_cap * (r_cap - r)
    s2 = (sigma / r) * (sigma / r)
    s6 = s2 * s2 * s2
    return 4.0 * eps * (s6 * s6 - s6) - u_shift


@njit(cache=True, inline="always")
def dna_force_scalar(r, eps, m, cutoff):
    """DNA duplex spring force (positive = repulsive); zero for eps <= 0."""
    if eps <= 0.0 or r > cutoff:
        return 0.0
    span = cutoff - m
    return -2.0 * eps * (r - m) / (span * span)


@njit(cache=True, inline="always")
def dna_potential_scalar(r, eps, m, cutoff):
    if eps <= 0.0 or r > cutoff:
        return 0.0
    span = cutoff - m
    return eps * (r - m) * (r - m) / (span * span) - eps


@njit(cache=True)
def add_pair_forces(pos, side, pi, pj,
                    lj_eps, lj_sigma, lj_cutoff, lj_rcap, lj_fcap,
                    dna_eps, dna_m, dna_cutoff, out):
    """LJ + DNA forces over a candidate pair list; each term applies its own cutoff."""
    for p in range(pi.shape[0]):
        i = pi[p]
        j = pj[p]
        dx = min_image(pos[j, 0] - pos[i, 0], side)
        dy = min_image(pos[j, 1] - pos[i, 1], side)
        r = np.sqrt(dx * dx + dy * dy)
        if r < 1e-12:
            continue
        f = lj_force_scalar(r, lj_eps, lj_sigma, lj_cutoff, lj_rcap, lj_fcap)
        f += dna_force_scalar(r, dna_eps, dna_m, dna_cutoff)
        if f == 0.0:
            continue
        fx = f * dx / r
        fy = f * dy / r
        out[i, 0] -= fx
        out[i, 1] -= fy
        out[j, 0] += fx
        out[j, 1] += fy


@njit(cache=True)
def pair_energy(pos, side, pi, pj,
                lj_eps, lj_sigma, lj_cutoff, lj_rcap, lj_fcap,
                lj_ushift, lj_ucap, dna_eps, dna_m, dna_cutoff):
    e = 0.0
    for p in range(pi.shape[0]):
        i = pi[p]
        j = pj[p]
        dx = min_image(pos[j, 0] - pos[i, 0], side)
        dy = min_image(pos[j, 1] - pos[i, 1], side)
        r = np.sqrt(dx * dx + dy * dy)
        e += lj_potential_scalar(r, lj_eps, lj_sigma, lj_cutoff,
                                 lj_rcap, lj_fcap, lj_ushift, lj_ucap)
        e += dna_potential_scalar(r, dna_eps, dna_m, dna_cutoff)
    return e


# ---------------------------------------------------------------------------
# mobility and midstep integration
# ---------------------------------------------------------------------------

@njit(cache=True)
def velocities(pos, n_per_fil, side, gam_par, gam_perp, force, out):
    """v = zeta^-1 F with per-site anisotropic rod drag along the local tangent."""
    n = pos.shape[0]
    inv_par = 1.0 / gam_par
    inv_perp = 1.0 / gam_perp
    for f0 in range(0, n, n_per_fil):
        for i in range(f0, f0 + n_per_fil):
            tx, ty = _site_tangent(pos, f0, n_per_fil, i, side)
            fx = force[i, 0]
            fy = force[i, 1]
            fpar = fx * tx + fy * ty
            out[i, 0] = inv_par * fpar * tx + inv_perp * (fx - fpar * tx)
            out[i, 1] = inv_par * fpar * ty + inv_perp * (fy - fpar * ty)


@njit(cache=True)
def _total_force(pos, n_per_fil, side, kappa, k_tension, l0, f_drive,
                 pi, pj, lj_eps, lj_sigma, lj_cutoff, lj_rcap, lj_fcap,
                 dna_eps, dna_m, dna_cutoff, noise, out):
    out[:] = noise
    add_bend_forces(pos, n_per_fil, side, kappa, l0, out)
    add_tension_forces(pos, n_per_fil, side, k_tension, l0, out)
    add_drive_forces(pos, n_per_fil, side, f_drive, out)
    add_pair_forces(pos, side, pi, pj, lj_eps, lj_sigma, lj_cutoff,
                    lj_rcap, lj_fcap, dna_eps, dna_m, dna_cutoff, out)


@njit(cache=True)
def advance_steps(pos, n_per_fil, side, dt, steps,
                  kappa, k_tension, l0, f_drive,
                  lj_eps, lj_sigma, lj_cutoff, lj_rcap, lj_fcap,
                  dna_eps, dna_m, dna_cutoff,
                  gam_par, gam_perp, noise,
                  pair_cutoff, skin, n_cells, blow_limit):
    """Run `steps` midstep updates in place.

    noise is (steps, n_sites, 2) pre-scaled random forces; each step's draw
    is used in both the half- and the full-step force evaluation. Candidate
    pairs carry a skin margin and are rebuilt whenever accumulated motion
    could bring an unseen pair inside pair_cutoff, so both evaluations of
    every step see every interacting pair. Returns (status, step): status
    0 = ok, 1 = displacement blow-up or non-finite at `step`.
    """
    n = pos.shape[0]
    group_of = np.empty(n, np.int64)
    for s in range(n):
        group_of[s] = s // n_per_fil
    force = np.empty((n, 2))
    vel = np.empty((n, 2))
    half = np.empty((n, 2))
    pi = np.empty(0, np.int64)
    pj = np.empty(0, np.int64)
    # worst-case pair approach since the last rebuild; 40% of the skin is
    # held in reserve for the current step's half-step displacement
    drift = skin
    for step in range(steps):
        if drift >= 0.6 * skin:
            pi, pj, _ = collect_pairs(pos, group_of, side, n_cells,
                                      pair_cutoff + skin)
            drift = 0.0
        _total_force(pos, n_per_fil, side, kappa, k_tension, l0, f_drive,
                     pi, pj, lj_eps, lj_sigma, lj_cutoff, lj_rcap, lj_fcap,
                     dna_eps, dna_m, dna_cutoff, noise[step], force)
        velocities(pos, n_per_fil, side, gam_par, gam_perp, force, vel)
        for s in range(n):
            half[s, 0] = wrap_coord(pos[s, 0] + 0.5 * dt * vel[s, 0], side)
            half[s, 1] = wrap_coord(pos[s, 1] + 0.5 * dt * vel[s, 1], side)
        _total_force(half, n_per_fil, side, kappa, k_tension, l0, f_drive,
                     pi, pj, lj_eps, lj_sigma, lj_cutoff, lj_rcap, lj_fcap,
                     dna_eps, dna_m, dna_cutoff, noise[step], force)
        velocities(half, n_per_fil, side, gam_par, gam_perp, force, vel)
        step_max = 0.0
        for s in range(n):
            dx = dt * vel[s, 0]
            dy = dt * vel[s, 1]
            ok = (np.abs(dx) <= blow_limit) and (np.abs(dy) <= blow_limit)
            if not ok:
                return 1, step
            m = max(np.abs(dx), np.abs(dy))
            if m > step_max:
                step_max = m
            pos[s, 0] = wrap_coord(pos[s, 0] + dx, side)
            pos[s, 1] = wrap_coord(pos[s, 1] + dy, side)
        drift += 2.0 * step_max  # two sites can close on each other
    return 0, steps
