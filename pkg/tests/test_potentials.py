import numpy as np
import pytest

from conftest import numeric_gradient
from mtswarm.potentials import (DnaPotentialParams, MechanicalParams,
                                bend_energy, bend_forces, dna_pair_force,
                                dna_pair_potential, drive_forces,
                                duplex_free_energy, lj_pair_force,
                                lj_pair_potential, random_forces,
                                tension_energy, tension_forces, total_forces,
                                WCA_CUTOFF_FACTOR)

DNA = DnaPotentialParams()  # sigma=1, m=1.5, dH=400, dS=1, cutoff=2, scale=1
MECH = MechanicalParams()


class TestDuplexFreeEnergy:
    def test_melting_point_is_zero(self):
        assert duplex_free_energy(400.0, DNA) == pytest.approx(0.0)

    def test_default_parameter_values(self):
        assert duplex_free_energy(200.0, DNA) == pytest.approx(200.0)
        assert duplex_free_energy(400.0, DNA) == pytest.approx(0.0)

    def test_zero_scale(self):
        p = DnaPotentialParams(scale=0.0)
        for t in (150.0, 300.0, 450.0):
            assert duplex_free_energy(t, p) == 0.0

    def test_strictly_decreasing_in_temperature(self):
        temps = np.linspace(150, 500, 30)
        eps = [duplex_free_energy(t, DNA) for t in temps]
        assert np.all(np.diff(eps) < 0)

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(ValueError):
            duplex_free_energy(0.0, DNA)


class TestDnaPotential:
    def test_well_minimum(self):
        assert dna_pair_potential(1.5, 3.0, DNA) == pytest.approx(-3.0)

    def test_zero_at_cutoff(self):
        assert dna_pair_potential(2.0, 5.0, DNA) == pytest.approx(0.0)

    def test_hand_computed_value(self):
        # eps/(0.5^2)*(1.75-1.5)^2 - eps = 0.25 - 1 = -0.75
        assert dna_pair_potential(1.75, 1.0, DNA) == pytest.approx(-0.75)

    def test_beyond_cutoff_rejected(self):
        with pytest.raises(ValueError):
            dna_pair_potential(2.1, 1.0, DNA)

    def test_nonpositive_eps_rejected(self):
        with pytest.raises(ValueError):
            dna_pair_potential(1.5, 0.0, DNA)


class TestDnaForce:
    def test_zero_at_minimum(self):
        f = dna_pair_force(np.array([1.5, 0.0]), 2.0, DNA)
        assert np.allclose(f, 0.0, atol=1e-12)

    def test_attractive_beyond_minimum(self):
        # partner on +x at r > m: force points toward the partner
        f = dna_pair_force(np.array([1.9, 0.0]), 2.0, DNA)
        assert f[0] > 0 and f[1] == pytest.approx(0.0)

    def test_repulsive_below_minimum(self):
        f = dna_pair_force(np.array([1.1, 0.0]), 2.0, DNA)
        assert f[0] < 0

    @pytest.mark.parametrize("r", [1.1, 1.5, 1.9])
    def test_matches_finite_differences(self, r):
        # moving the origin site toward its +x partner shrinks r, so the
        # x-force on it equals +dU/dr
        eps, h = 2.5, 1e-6
        dU = (dna_pair_potential(r + h, eps, DNA)
              - dna_pair_potential(r - h, eps, DNA)) / (2 * h)
        f = dna_pair_force(np.array([r, 0.0]), eps, DNA)
        assert f[0] == pytest.approx(dU, rel=1e-6, abs=1e-9)

    def test_coincident_sites_rejected(self):
        with pytest.raises(ValueError):
            dna_pair_force(np.zeros(2), 1.0, DNA)


class TestLjForce:
    def test_zero_at_wca_cutoff(self):
        r = WCA_CUTOFF_FACTOR * MECH.lj_sigma
        assert np.allclose(lj_pair_force(np.array([r, 0.0]), MECH), 0.0,
                           atol=1e-12)

    def test_zero_beyond_cutoff(self):
        assert np.allclose(lj_pair_force(np.array([1.5, 0.0]), MECH), 0.0)

    def test_matches_finite_differences_at_sigma(self):
        h = 1e-6
        dU = (lj_pair_potential(1.0 + h, MECH)
              - lj_pair_potential(1.0 - h, MECH)) / (2 * h)
        f = lj_pair_force(np.array([1.0, 0.0]), MECH)
        assert f[0] == pytest.approx(dU, rel=1e-6)

    def test_repulsive_inside_core(self):
        f = lj_pair_force(np.array([0.97, 0.0]), MECH)
        assert f[0] < 0  # pushes the origin site away from the partner

    def test_capped_core_is_finite_and_consistent(self):
        # deep overlap: force is capped, potential continues linearly
        f = lj_pair_force(np.array([0.2, 0.0]), MECH)
        assert np.isfinite(f).all() and abs(f[0]) == pytest.approx(100.0)
        h = 1e-6
        dU = (lj_pair_potential(0.2 + h, MECH)
              - lj_pair_potential(0.2 - h, MECH)) / (2 * h)
        assert f[0] == pytest.approx(dU, rel=1e-6)


class TestBendForces:
    def test_straight_filament_zero(self):
        fil = np.column_stack([np.arange(5.0), np.zeros(5)])
        assert np.allclose(bend_forces(fil, MECH), 0.0, atol=1e-14)

    def test_right_angle_matches_finite_differences(self):
        fil = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        analytic = bend_forces(fil, MECH)
        numeric = -numeric_gradient(lambda p: bend_energy(p, MECH), fil)
        assert np.allclose(analytic, numeric, rtol=1e-6, atol=1e-7)
        # forces oppose the bend: the corner site is pushed toward the
        # endpoint chord, straightening the angle
        assert analytic[1, 0] < 0 and analytic[1, 1] > 0

    def test_forces_sum_to_zero(self, rng):
        fil = np.cumsum(rng.normal(scale=0.4, size=(6, 2)) + [1.0, 0.0],
                        axis=0)
        f = bend_forces(fil, MECH)
        assert np.allclose(f.sum(axis=0), 0.0, atol=1e-12)

    def test_zero_net_torque(self, rng):
        fil = np.cumsum(rng.normal(scale=0.3, size=(5, 2)) + [1.0, 0.0],
                        axis=0)
        f = bend_forces(fil, MECH)
        r = fil - fil.mean(axis=0)
        torque = np.sum(r[:, 0] * f[:, 1] - r[:, 1] * f[:, 0])
        assert abs(torque) < 1e-12

    def test_short_filament_zero(self):
        assert np.allclose(bend_forces(np.array([[0.0, 0.0], [1.0, 0.0]]),
                                       MECH), 0.0)


class TestTensionForces:
    def test_rest_length_zero(self):
        fil = np.column_stack([np.arange(4.0), np.zeros(4)])
        assert np.allclose(tension_forces(fil, MECH), 0.0, atol=1e-14)

    def test_hooke_magnitude(self):
        mech = MechanicalParams(k_tension=100.0)
        fil = np.array([[0.0, 0.0], [1.1, 0.0]])
        f = tension_forces(fil, mech)
        assert np.linalg.norm(f[0]) == pytest.approx(10.0)
        assert f[0, 0] == pytest.approx(10.0)  # pulled toward the partner

    def test_newtons_third_law(self, rng):
        fil = np.cumsum(rng.normal(scale=0.2, size=(5, 2)) + [1.1, 0.0],
                        axis=0)
        f = tension_forces(fil, MECH)
        assert np.allclose(f.sum(axis=0), 0.0, atol=1e-12)

    def test_matches_finite_differences(self, rng):
        fil = np.cumsum(rng.normal(scale=0.2, size=(4, 2)) + [0.9, 0.0],
                        axis=0)
        analytic = tension_forces(fil, MECH)
        numeric = -numeric_gradient(lambda p: tension_energy(p, MECH), fil)
        assert np.allclose(analytic, numeric, rtol=1e-6, atol=1e-7)


class TestDriveForces:
    def test_straight_filament_along_x(self):
        # leading end (site 0) has the largest x: tangent points to +x
        fil = np.column_stack([np.arange(5.0)[::-1], np.zeros(5)])
        f = drive_forces(fil, MECH)
        assert np.allclose(f, np.tile([MECH.f_drive, 0.0], (5, 1)))

    def test_unit_magnitude_any_shape(self, rng):
        fil = np.cumsum(rng.normal(scale=0.5, size=(6, 2)) + [1.0, 0.2],
                        axis=0)
        f = drive_forces(fil, MECH)
        assert np.allclose(np.linalg.norm(f, axis=1), MECH.f_drive)

    def test_total_propulsion_bounded(self, rng):
        n = 6
        straight = np.column_stack([np.arange(float(n))[::-1], np.zeros(n)])
        f = drive_forces(straight, MECH)
        assert np.linalg.norm(f.sum(axis=0)) == pytest.approx(n * MECH.f_drive)
        for _ in range(5):
            bent = np.cumsum(rng.normal(scale=0.5, size=(n, 2)) + [1.0, 0.0],
                             axis=0)
            fb = drive_forces(bent, MECH)
            assert np.linalg.norm(fb.sum(axis=0)) <= n * MECH.f_drive + 1e-12


class TestRandomForces:
    def test_zero_amplitude(self):
        f = random_forces(10, 0.0, np.random.default_rng(0))
        assert np.array_equal(f, np.zeros((10, 2)))

    def test_sample_mean_bound(self):
        amp = 2.0
        f = random_forces(500_000, amp, np.random.default_rng(7))
        bound = 4 * amp / np.sqrt(f.size)
        assert abs(f.mean()) < bound

    def test_seed_determinism(self):
        a = random_forces(50, 1.5, np.random.default_rng(123))
        b = random_forces(50, 1.5, np.random.default_rng(123))
        assert np.array_equal(a, b)


def _random_two_filament_state(rng, n_per=4, spread=1.6):
    a = np.cumsum(rng.normal(scale=0.15, size=(n_per, 2)) + [1.0, 0.0], axis=0)
    b = np.cumsum(rng.normal(scale=0.15, size=(n_per, 2)) + [1.0, 0.0], axis=0)
    b += [rng.uniform(-0.4, 0.4), spread]
    return np.vstack([a, b])


class TestTotalForces:
    def test_single_straight_filament_only_drive(self):
        fil = np.column_stack([np.arange(5.0)[::-1], np.zeros(5)])
        empty = (np.empty(0, np.int64), np.empty(0, np.int64))
        f = total_forces(fil, 5, MECH, DNA, 300.0, empty,
                         noise=np.zeros_like(fil))
        assert np.allclose(f, drive_forces(fil, MECH))

    def test_pair_at_dna_minimum_no_pair_force(self):
        # two parallel filaments at spacing m: DNA force zero, LJ zero
        n = 4
        a = np.column_stack([np.arange(float(n))[::-1], np.zeros(n)])
        b = a + [0.0, DNA.m]
        pos = np.vstack([a, b])
        pairs = (np.arange(n, dtype=np.int64),
                 np.arange(n, dtype=np.int64) + n)
        f = total_forces(pos, n, MECH, DNA, 250.0, pairs,
                         noise=np.zeros_like(pos))
        assert np.allclose(f, drive_forces(a, MECH).tolist() * 2, atol=1e-12)

    def test_above_melting_equals_dna_disabled(self, rng):
        pos = _random_two_filament_state(rng)
        n = 4
        ii, jj = np.meshgrid(np.arange(n), np.arange(n, 2 * n))
        pairs = (ii.ravel().astype(np.int64), jj.ravel().astype(np.int64))
        noise = rng.normal(size=pos.shape)
        hot = total_forces(pos, n, MECH, DNA, 450.0, pairs, noise=noise)
        disabled = total_forces(pos, n, MECH,
                                DnaPotentialParams(scale=0.0), 450.0,
                                pairs, noise=noise)
        assert np.array_equal(hot, disabled)

    def test_conservative_terms_match_finite_differences(self, rng):
        # light version of the acceptance sweep: 5 random configurations
        from mtswarm.potentials import internal_energy
        n = 4
        mech = MechanicalParams(noise_amp=0.0)
        for _ in range(5):
            pos = _random_two_filament_state(rng)
            ii, jj = np.meshgrid(np.arange(n), np.arange(n, 2 * n))
            pairs = (ii.ravel().astype(np.int64), jj.ravel().astype(np.int64))
            f = total_forces(pos, n, mech, DNA, 260.0, pairs,
                             noise=np.zeros_like(pos))
            f -= np.vstack([drive_forces(pos[:n], mech),
                            drive_forces(pos[n:], mech)])
            numeric = -numeric_gradient(
                lambda p: internal_energy(p, n, mech, DNA, 260.0, pairs),
                pos)
            scale = np.abs(numeric).max()
            assert np.allclose(f, numeric, rtol=1e-6, atol=1e-6 * scale)
