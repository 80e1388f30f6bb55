"""Simulation driver: configuration, seeded setup, run loop, sweeps, file I/O.

A run advances (n_frames - 1) blocks of steps_per_frame midstep updates and
records the state at every frame boundary, frame 0 being the random initial
state common to every simulation. The control temperature is piecewise
constant per frame and enters the dynamics only through the DNA duplex free
energy.

Trajectory files are little-endian binary: magic "MTSW", u32 version=1,
u64 config hash, u32 n_filaments, u32 N, u32 n_frames, f64 box_side, then
per frame one f64 temperature followed by n_filaments*N (x, y) f64 pairs.
"""

import hashlib
import struct
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .physics import FrictionParams
from .potentials import (DnaPotentialParams, MechanicalParams,
                         duplex_free_energy, lj_constants)

TRAJECTORY_MAGIC = b"MTSW"
TRAJECTORY_VERSION = 1
_HEADER = struct.Struct("<4sIQIIId")

PAIR_SKIN = 0.5           # candidate-list margin over the interaction cutoff
BLOWUP_LIMIT = 10.0       # per-step displacement abort threshold, units of sigma
DENSITY_WARN = 0.4
DENSITY_ERROR = 0.7
_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Bad configuration file or inconsistent parameter set."""


class TrajectoryFormatError(ValueError):
    """Malformed or truncated trajectory file."""


class NumericalBlowupError(RuntimeError):
    """Integration produced a non-finite or runaway displacement."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class SimConfig:
    """Full run protocol. Defaults are the desk-scale reference setup."""

    n_filaments: int = 100
    sites_per_filament: int = 5
    box_side: float = 50.0
    dt: float = 1e-3
    steps_per_frame: int = 200
    n_frames: int = 500
    seed: int = 12345
    # piecewise-constant control temperature: ((frame, kelvin), ...)
    temperature_schedule: tuple = ((0, 300.0),)
    dna: DnaPotentialParams = field(
        default_factory=lambda: DnaPotentialParams(scale=0.004))
    mech: MechanicalParams = field(default_factory=MechanicalParams)
    friction: FrictionParams = field(default_factory=FrictionParams)

    def validate(self):
        if self.n_frames < 1:
            raise ConfigError("n_frames must be >= 1")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.steps_per_frame < 0:
            raise ConfigError("steps_per_frame must be >= 0")
        if self.n_filaments < 0:
            raise ConfigError("n_filaments must be >= 0")
        if self.sites_per_filament < 2:
            raise ConfigError("sites_per_filament must be >= 2")
        if self.box_side <= 4.0 * self.dna.sigma:
            raise ConfigError("box_side must exceed 4 sigma")
        sched = self.temperature_schedule
        if not sched or sched[0][0] != 0:
            raise ConfigError("temperature schedule must start at frame 0")
        frames = [f for f, _ in sched]
        if frames != sorted(frames) or len(set(frames)) != len(frames):
            raise ConfigError("schedule frames must be strictly increasing")
        for _, t in sched:
            if t <= 0:
                raise ConfigError("temperatures must be positive")
        try:
            self.dna.validate()
            self.mech.validate()
            self.friction.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def temperature_at(self, frame):
        t = self.temperature_schedule[0][1]
        for f, value in self.temperature_schedule:
            if f <= frame:
                t = value
            else:
                break
        return t


@dataclass
class Trajectory:
    config_hash: int
    n_filaments: int
    sites_per_filament: int
    box_side: float
    temperatures: np.ndarray          # (n_frames,)
    positions: np.ndarray             # (n_frames, n_sites, 2)
    run_id: str = ""

    @property
    def n_frames(self):
        return self.positions.shape[0]

    def frame(self, k):
        """Positions of frame k reshaped to (n_filaments, N, 2)."""
        return self.positions[k].reshape(
            self.n_filaments, self.sites_per_filament, 2)


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

_INT_KEYS = {"n_filaments", "sites_per_filament", "steps_per_frame",
             "n_frames", "seed"}
_FLOAT_KEYS = {"box_side", "dt", "temperature", "sigma", "m", "delta_h",
               "delta_s", "dna_scale", "dna_cutoff", "lj_epsilon", "lj_sigma",
               "lj_cutoff", "kappa_bend", "k_tension", "l0", "f_drive",
               "noise_amp", "gamma_par", "gamma_perp"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | {"temperature_schedule"}


def parse_config(text):
    """Parse `key = value` lines (with # comments) into a SimConfig."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown config key '{key}' (line {lineno})")
        if key in raw:
            raise ConfigError(f"duplicate config key '{key}' (line {lineno})")
        raw[key] = value

    if "temperature" in raw and "temperature_schedule" in raw:
        raise ConfigError("give either temperature or temperature_schedule")

    values = {}
    for key, text_value in raw.items():
        if key == "temperature_schedule":
            continue
        try:
            values[key] = (int(text_value) if key in _INT_KEYS
                           else float(text_value))
        except ValueError as exc:
            raise ConfigError(f"bad value for '{key}': {text_value!r}") from exc

    if "temperature_schedule" in raw:
        entries = []
        for item in raw["temperature_schedule"].split(","):
            item = item.strip()
            try:
                frame_s, temp_s = item.split(":")
                entries.append((int(frame_s), float(temp_s)))
            except ValueError as exc:
                raise ConfigError(
                    f"bad schedule entry {item!r} (want frame:value)") from exc
        schedule = tuple(entries)
    elif "temperature" in raw:
        schedule = ((0, values.pop("temperature")),)
    else:
        schedule = SimConfig().temperature_schedule

    base = SimConfig()
    dna = replace(
        base.dna,
        sigma=values.pop("sigma", base.dna.sigma),
        m=values.pop("m", base.dna.m),
        delta_h=values.pop("delta_h", base.dna.delta_h),
        delta_s=values.pop("delta_s", base.dna.delta_s),
        cutoff=values.pop("dna_cutoff", base.dna.cutoff),
        scale=values.pop("dna_scale", base.dna.scale))
    mech = replace(
        base.mech,
        kappa_bend=values.pop("kappa_bend", base.mech.kappa_bend),
        k_tension=values.pop("k_tension", base.mech.k_tension),
        l0=values.pop("l0", base.mech.l0),
        f_drive=values.pop("f_drive", base.mech.f_drive),
        noise_amp=values.pop("noise_amp", base.mech.noise_amp),
        lj_epsilon=values.pop("lj_epsilon", base.mech.lj_epsilon),
        lj_sigma=values.pop("lj_sigma", base.mech.lj_sigma),
        lj_cutoff=values.pop("lj_cutoff", base.mech.lj_cutoff))
    friction = FrictionParams(
        gamma_par=values.pop("gamma_par", base.friction.gamma_par),
        gamma_perp=values.pop("gamma_perp", base.friction.gamma_perp))
    cfg = SimConfig(
        n_filaments=values.pop("n_filaments", base.n_filaments),
        sites_per_filament=values.pop("sites_per_filament",
                                      base.sites_per_filament),
        box_side=values.pop("box_side", base.box_side),
        dt=values.pop("dt", base.dt),
        steps_per_frame=values.pop("steps_per_frame", base.steps_per_frame),
        n_frames=values.pop("n_frames", base.n_frames),
        seed=values.pop("seed", base.seed),
        temperature_schedule=schedule,
        dna=dna, mech=mech, friction=friction)
    cfg.validate()
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_to_text(cfg):
    """Canonical flat key=value rendering (also the hashing input)."""
    sched = ",".join(f"{f}:{t!r}" for f, t in cfg.temperature_schedule)
    lines = [
        f"n_filaments = {cfg.n_filaments}",
        f"sites_per_filament = {cfg.sites_per_filament}",
        f"box_side = {cfg.box_side!r}",
        f"dt = {cfg.dt!r}",
        f"steps_per_frame = {cfg.steps_per_frame}",
        f"n_frames = {cfg.n_frames}",
        f"seed = {cfg.seed}",
        f"temperature_schedule = {sched}",
        f"sigma = {cfg.dna.sigma!r}",
        f"m = {cfg.dna.m!r}",
        f"delta_h = {cfg.dna.delta_h!r}",
        f"delta_s = {cfg.dna.delta_s!r}",
        f"dna_scale = {cfg.dna.scale!r}",
        f"dna_cutoff = {cfg.dna.cutoff!r}",
        f"lj_epsilon = {cfg.mech.lj_epsilon!r}",
        f"lj_sigma = {cfg.mech.lj_sigma!r}",
        f"lj_cutoff = {cfg.mech.lj_cutoff!r}",
        f"kappa_bend = {cfg.mech.kappa_bend!r}",
        f"k_tension = {cfg.mech.k_tension!r}",
        f"l0 = {cfg.mech.l0!r}",
        f"f_drive = {cfg.mech.f_drive!r}",
        f"noise_amp = {cfg.mech.noise_amp!r}",
        f"gamma_par = {cfg.friction.gamma_par!r}",
        f"gamma_perp = {cfg.friction.gamma_perp!r}",
    ]
    return "\n".join(lines) + "\n"


def config_hash(cfg):
    digest = hashlib.sha256(config_to_text(cfg).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(base_seed, index):
    """Per-run seed for sweeps: reproducible, distinct across indices."""
    return (base_seed ^ splitmix64(index)) & _MASK64


# ---------------------------------------------------------------------------
# initialization and dynamics
# ---------------------------------------------------------------------------

def area_fraction(cfg):
    cover = cfg.n_filaments * cfg.sites_per_filament * cfg.mech.l0 * cfg.dna.sigma
    return cover / (cfg.box_side ** 2)


def initialize(cfg, rng):
    """Straight rods with uniform random centers and orientations.

    Seeded rejection placement keeps inter-filament sites at least 0.95 sigma
    apart so the initial LJ forces stay integrable.
    """
    cfg.validate()
    frac = area_fraction(cfg)
    if frac > DENSITY_ERROR:
        raise ConfigError(
            f"areal density {frac:.2f} infeasible (> {DENSITY_ERROR})")
    if frac > DENSITY_WARN:
        warnings.warn(f"areal density {frac:.2f} above {DENSITY_WARN}; "
                      "placement may jam", stacklevel=2)
    n, n_per = cfg.n_filaments, cfg.sites_per_filament
    side, l0 = cfg.box_side, cfg.mech.l0
    min_sep = 0.95 * cfg.dna.sigma
    offsets = ((n_per - 1) / 2.0 - np.arange(n_per)) * l0
    placed = np.empty((0, 2))
    pos = np.empty((n * n_per, 2))
    for f in range(n):
        for attempt in range(200):
            center = rng.uniform(0.0, side, size=2)
            angle = rng.uniform(0.0, 2.0 * np.pi)
            u = np.array([np.cos(angle), np.sin(angle)])
            sites = center + offsets[:, None] * u
            sites -= side * np.floor(sites / side)
            if placed.shape[0]:
                d = sites[:, None, :] - placed[None, :, :]
                d -= side * np.round(d / side)
                if np.min(np.einsum("ijk,ijk->ij", d, d)) < min_sep ** 2:
                    continue
            break
        else:
            warnings.warn(f"filament {f}: no overlap-free placement in 200 "
                          "attempts; accepting overlap", stacklevel=2)
        pos[f * n_per:(f + 1) * n_per] = sites
        placed = pos[:(f + 1) * n_per]
    return pos


def _grid_cells(cfg):
    reach = max(cfg.mech.lj_cutoff, cfg.dna.cutoff) + PAIR_SKIN
    return int(cfg.box_side / reach)


def run(cfg):
    """Execute the configured simulation; deterministic for a fixed seed.

    Raises NumericalBlowupError (with the completed frames attached) if any
    site moves more than BLOWUP_LIMIT*sigma in one step or goes non-finite.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    pos = np.ascontiguousarray(initialize(cfg, rng))
    n_sites = cfg.n_filaments * cfg.sites_per_filament
    frames = np.empty((cfg.n_frames, n_sites, 2))
    temps = np.empty(cfg.n_frames)
    frames[0] = pos
    temps[0] = cfg.temperature_at(0)

    mech, dna = cfg.mech, cfg.dna
    r_cap, f_cap, _, _ = lj_constants(mech)
    pair_cutoff = max(mech.lj_cutoff, dna.cutoff)
    n_cells = _grid_cells(cfg)
    blow = BLOWUP_LIMIT * dna.sigma

    for k in range(1, cfg.n_frames):
        temperature = cfg.temperature_at(k)
        eps = duplex_free_energy(temperature, dna)
        if mech.noise_amp > 0 and n_sites > 0:
            noise = rng.normal(0.0, mech.noise_amp,
                               size=(cfg.steps_per_frame, n_sites, 2))
        else:
            noise = np.zeros((cfg.steps_per_frame, n_sites, 2))
        status, step = _kernels.advance_steps(
            pos, cfg.sites_per_filament, cfg.box_side, cfg.dt,
            cfg.steps_per_frame, mech.kappa_bend, mech.k_tension, mech.l0,
            mech.f_drive, mech.lj_epsilon, mech.lj_sigma, mech.lj_cutoff,
            r_cap, f_cap, eps, dna.m, dna.cutoff,
            cfg.friction.gamma_par, cfg.friction.gamma_perp, noise,
            pair_cutoff, PAIR_SKIN, n_cells, blow)
        if status != 0:
            partial = Trajectory(config_hash(cfg), cfg.n_filaments,
                                 cfg.sites_per_filament, cfg.box_side,
                                 temps[:k].copy(), frames[:k].copy())
            raise NumericalBlowupError(
                f"integration blow-up at frame {k}, step {step} "
                f"(displacement > {blow} or non-finite)", partial=partial)
        frames[k] = pos
        temps[k] = temperature
    return Trajectory(config_hash(cfg), cfg.n_filaments,
                      cfg.sites_per_filament, cfg.box_side, temps, frames)


def sweep_temperatures(t_min=200.0, t_max=400.0, t_step=25.0):
    span = t_max - t_min
    n = int(round(span / t_step)) if t_step else 0
    if t_step <= 0 or abs(n * t_step - span) > 1e-9:
        raise ConfigError("t_step must evenly divide t_max - t_min")
    return [t_min + i * t_step for i in range(n + 1)]


def sweep_configs(base, t_min=200.0, t_max=400.0, t_step=25.0):
    """Per-temperature configs with derived seeds for the fixed-T sweep."""
    configs = []
    for i, t in enumerate(sweep_temperatures(t_min, t_max, t_step)):
        configs.append(replace(base,
                               temperature_schedule=((0, t),),
                               seed=derive_seed(base.seed, i)))
    return configs


def sweep(base, t_min=200.0, t_max=400.0, t_step=25.0):
    """Run the full fixed-temperature sweep; one Trajectory per temperature."""
    return [run(cfg) for cfg in sweep_configs(base, t_min, t_max, t_step)]


def sweep_feature_plan(base, t_min=200.0, t_max=400.0, t_step=25.0,
                       tiles_per_frame=9):
    """Metadata-only protocol cardinality: (runs, frames/run, total rows)."""
    n_runs = len(sweep_temperatures(t_min, t_max, t_step))
    return n_runs, base.n_frames, n_runs * base.n_frames * tiles_per_frame


# ---------------------------------------------------------------------------
# trajectory files
# ---------------------------------------------------------------------------

def write_trajectory(traj, path):
    n_sites = traj.n_filaments * traj.sites_per_filament
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TRAJECTORY_MAGIC, TRAJECTORY_VERSION,
                              traj.config_hash, traj.n_filaments,
                              traj.sites_per_filament, traj.n_frames,
                              traj.box_side))
        for k in range(traj.n_frames):
            fh.write(struct.pack("<d", traj.temperatures[k]))
            fh.write(np.ascontiguousarray(
                traj.positions[k], dtype="<f8").tobytes())
    return path


def read_trajectory(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise TrajectoryFormatError(
            f"{path}: truncated header ({len(data)} bytes)")
    magic, version, cfg_hash, n_fil, n_per, n_frames, side = \
        _HEADER.unpack_from(data, 0)
    if magic != TRAJECTORY_MAGIC:
        raise TrajectoryFormatError(f"{path}: bad magic {magic!r}")
    if version != TRAJECTORY_VERSION:
        raise TrajectoryFormatError(f"{path}: unsupported version {version}")
    n_sites = n_fil * n_per
    frame_bytes = 8 + n_sites * 16
    expected = _HEADER.size + n_frames * frame_bytes
    if len(data) != expected:
        raise TrajectoryFormatError(
            f"{path}: expected {expected} bytes, found {len(data)} "
            f"(truncated at offset {len(data)})")
    temps = np.empty(n_frames)
    positions = np.empty((n_frames, n_sites, 2))
    off = _HEADER.size
    for k in range(n_frames):
        temps[k] = struct.unpack_from("<d", data, off)[0]
        off += 8
        positions[k] = np.frombuffer(
            data, dtype="<f8", count=n_sites * 2, offset=off).reshape(-1, 2)
        off += n_sites * 16
    return Trajectory(cfg_hash, n_fil, n_per, side, temps, positions)
