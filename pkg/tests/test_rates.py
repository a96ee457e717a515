import numpy as np
import pytest
from numpy.testing import assert_allclose

from qtel import (
    angle_sweep,
    decoherence_generator,
    extract_rates,
    free_decay_rates,
    longitudinal_eigenvalues,
    longitudinal_rates,
    perturbative_rates,
    spectral_decomposition,
    telegraph_spectrum,
    transverse_eigenvalues,
)
from qtel.rates import channel_rates_from_modes

from conftest import make_system


def match_multisets(a, b):
    """Greedy nearest-match distance between two equal-size multisets."""
    b = list(b)
    worst = 0.0
    for x in a:
        j = int(np.argmin([abs(x - y) for y in b]))
        worst = max(worst, abs(x - b.pop(j)))
    return worst


class TestExtractRates:
    def test_aligned_noise_conserves_z(self):
        for gamma, g in [(0.1, 0.3), (0.5, 0.1), (0.2, 0.2)]:
            rates = free_decay_rates(make_system(theta=0.0, g=g, gamma=gamma))
            assert rates.rate_z == 0.0

    @pytest.mark.parametrize("gamma,g", [(0.5, 0.1), (0.1, 0.3)])
    def test_transverse_noise_t2_is_twice_t1(self, gamma, g):
        rates = free_decay_rates(make_system(theta=np.pi / 2, g=g, gamma=gamma))
        assert rates.rate_z > 0
        assert abs(rates.rate_xy - rates.rate_z / 2.0) / (rates.rate_z / 2.0) < 1e-6

    @pytest.mark.parametrize("sign", [1.0, -1.0])
    def test_frozen_fluctuator_does_not_decohere(self, sign):
        rates = free_decay_rates(make_system(theta=0.6, gamma=0.1, eta=sign * 0.1))
        assert abs(rates.rate_z) < 1e-10
        assert abs(rates.rate_xy) < 1e-10

    @pytest.mark.parametrize("gamma,g", [(0.5, 0.1), (0.1, 0.3)])
    @pytest.mark.parametrize("theta", [0.0, np.pi / 4, np.pi / 2])
    def test_x_and_y_channels_agree_at_reference_points(self, gamma, g, theta):
        rates = free_decay_rates(make_system(theta=theta, g=g, gamma=gamma))
        assert abs(rates.rate_x - rates.rate_y) < 1e-9
        assert "xy-rate-mismatch" not in rates.flags

    def test_xy_mismatch_is_flagged_not_hidden(self, rng):
        # At tilted working points the coupling vector singles out one
        # transverse direction; when the raw x and y selections differ
        # the result must carry the mismatch flag.
        for _ in range(15):
            gamma = rng.uniform(0.05, 0.6)
            rates = free_decay_rates(
                make_system(
                    theta=rng.uniform(0, np.pi / 2),
                    g=rng.uniform(0.05, 1.0),
                    gamma=gamma,
                    eta=rng.uniform(-gamma, gamma),
                )
            )
            mismatch = abs(rates.rate_x - rates.rate_y) > 1e-9
            assert mismatch == ("xy-rate-mismatch" in rates.flags)
            assert min(rates.rate_x, rates.rate_y) <= rates.rate_xy <= max(
                rates.rate_x, rates.rate_y
            )

    def test_rates_bounded_by_dissipative_strength(self, rng):
        # 0 <= 1/T1 and 0 <= 1/T2 <= 2 gamma for any working point.
        for _ in range(20):
            gamma = rng.uniform(0.05, 1.0)
            rates = free_decay_rates(
                make_system(
                    b0=rng.uniform(0.0, 2.0),
                    theta=rng.uniform(0, np.pi / 2),
                    g=rng.uniform(0.0, 2.0),
                    gamma=gamma,
                    eta=rng.uniform(-gamma, gamma),
                )
            )
            assert 0.0 <= rates.rate_z <= 2.0 * gamma + 1e-10
            assert 0.0 <= rates.rate_xy <= 2.0 * gamma + 1e-10

    def test_envelope_fit_agrees_with_spectral_weights(self):
        # Beat-free case (one dominant oscillation frequency per channel):
        # the windowed envelope fit must reproduce the spectral rates.
        sys = make_system(theta=np.pi / 2, g=0.1, gamma=0.5)
        sd = spectral_decomposition(decoherence_generator(sys))
        spectral = extract_rates(sd, method="spectral-weight")
        fitted = extract_rates(sd, method="envelope-fit")
        assert abs(fitted.rate_z - spectral.rate_z) / spectral.rate_z < 0.05
        assert abs(fitted.rate_xy - spectral.rate_xy) / spectral.rate_xy < 0.05

    def test_spectral_weight_method_requires_healthy_decomposition(self):
        sd = spectral_decomposition(decoherence_generator(make_system()))
        object.__setattr__(sd, "defective", True)
        with pytest.raises(ValueError, match="defective"):
            extract_rates(sd, method="spectral-weight")

    def test_accepts_raw_boundary_vectors(self):
        from qtel import boundary_vectors

        sys = make_system(theta=np.pi / 2, g=0.3, gamma=0.1)
        sd = spectral_decomposition(decoherence_generator(sys))
        readout, prepare = boundary_vectors(sys.distributions())
        explicit = extract_rates(sd, readout, prepare)
        implicit = extract_rates(sd)
        assert explicit.rate_z == implicit.rate_z
        assert explicit.rate_xy == implicit.rate_xy


class TestModeSelection:
    def test_min_rate_among_weighted_modes_wins(self):
        mode_rates = np.array([0.0, 0.05, 0.2, 0.5])
        weights = np.zeros((3, 4))
        weights[0] = [0.0, 0.5, 0.5, 0.0]  # x sees 0.05 and 0.2
        weights[1] = [0.0, 0.5, 0.5, 0.0]
        weights[2] = [0.9, 0.0, 0.0, 0.1]  # z sees only the zero mode + 0.5
        rates = channel_rates_from_modes(mode_rates, weights, method="spectral-weight")
        assert rates.rate_x == 0.05
        assert rates.rate_z == 0.5

    def test_leaked_micro_weights_ignored(self):
        # A numerically leaked weight far below the channel maximum must
        # not capture the channel rate.
        mode_rates = np.array([0.01, 0.1])
        weights = np.array([[1e-4, 0.5], [1e-4, 0.5], [0.9, 1e-12]])
        rates = channel_rates_from_modes(mode_rates, weights, method="spectral-weight")
        assert rates.rate_x == 0.1
        assert rates.rate_z == 0.01

    def test_all_conserved_channel_has_zero_rate(self):
        mode_rates = np.array([0.0, 0.3])
        weights = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        rates = channel_rates_from_modes(mode_rates, weights, method="spectral-weight")
        assert rates.rate_x == rates.rate_z == 0.0

    def test_comparable_weights_with_distinct_rates_flagged(self):
        mode_rates = np.array([0.1, 0.3])
        weights = np.array([[0.5, 0.4], [0.5, 0.4], [0.5, 0.4]])
        rates = channel_rates_from_modes(mode_rates, weights, method="spectral-weight")
        assert rates.rate_x == 0.1
        assert any(flag.endswith("rate-ambiguous") for flag in rates.flags)

    def test_conjugate_pair_weights_not_flagged(self):
        mode_rates = np.array([0.1, 0.1, 0.4])
        weights = np.array([[0.5, 0.5, 0.01], [0.5, 0.5, 0.01], [0.0, 0.0, 1.0]])
        rates = channel_rates_from_modes(mode_rates, weights, method="spectral-weight")
        assert rates.flags == ()


class TestLongitudinalClosedForm:
    def test_strong_coupling_saturates_at_switching_rate(self):
        rates = longitudinal_rates(1.0, 0.3, 0.1, 0.0)
        assert_allclose(rates.rate_xy, 0.1, atol=1e-15)
        assert rates.rate_z == 0.0

    def test_weak_coupling_motional_narrowing(self):
        rates = longitudinal_rates(1.0, 0.1, 0.5, 0.0)
        assert_allclose(rates.rate_xy, 0.5 - np.sqrt(0.24), rtol=1e-12)

    @pytest.mark.parametrize("sign", [1.0, -1.0])
    def test_frozen_limit_vanishes(self, sign):
        rates = longitudinal_rates(1.0, 0.3, 0.1, sign * 0.1)
        assert abs(rates.rate_xy) < 1e-12

    def test_matches_numerical_extraction_on_grid(self):
        # Grid avoids the exceptional point g = gamma (eta = 0), where the
        # generator is genuinely defective and eigenvalues split at the
        # square root of machine precision.
        for gamma in (0.05, 0.12, 0.5, 1.1):
            for g in (0.02, 0.1, 0.4):
                for eta in (0.0, 0.4 * gamma, -0.9 * gamma):
                    if abs(g - gamma) < 0.03 and eta == 0.0:
                        continue
                    closed = longitudinal_rates(1.0, g, gamma, eta)
                    numeric = free_decay_rates(
                        make_system(theta=0.0, g=g, gamma=gamma, eta=eta)
                    )
                    assert abs(closed.rate_xy - numeric.rate_xy) < 1e-9
                    assert abs(closed.rate_z - numeric.rate_z) < 1e-9

    def test_eigenvalues_match_spectrum_on_grid(self):
        for gamma in (0.1, 0.5):
            for g in (0.2, 0.3, 1.0):
                for eta in (0.0, 0.5 * gamma):
                    if abs(g - gamma) < 0.03 and eta == 0.0:
                        continue
                    sd = spectral_decomposition(
                        decoherence_generator(make_system(theta=0.0, g=g, gamma=gamma, eta=eta))
                    )
                    closed = longitudinal_eigenvalues(1.0, g, gamma, eta)
                    assert match_multisets(closed, sd.eigenvalues) < 1e-10

    def test_exceptional_point_is_flagged_near_defective(self):
        # g = gamma, eta = 0 is a genuine exceptional point of the
        # motional-narrowing transition; the decomposition must say so.
        sd = spectral_decomposition(
            decoherence_generator(make_system(theta=0.0, g=0.1, gamma=0.1))
        )
        assert sd.condition > 1e6


class TestTransverseClosedForm:
    def test_zero_switching_is_pure_precession(self):
        roots = transverse_eigenvalues(1.0, 0.3, 0.0)
        dressed = np.sqrt(1.0 + 0.09)
        expected = [0.0, 1j * dressed, -1j * dressed, 0.0, 1j * dressed, -1j * dressed]
        assert match_multisets(roots, expected) < 1e-12

    @pytest.mark.parametrize("gamma,g", [(0.5, 0.1), (0.1, 0.3), (0.2, 1.5)])
    def test_roots_reproduce_spectrum(self, gamma, g):
        sd = spectral_decomposition(
            decoherence_generator(make_system(theta=np.pi / 2, g=g, gamma=gamma))
        )
        assert match_multisets(transverse_eigenvalues(1.0, g, gamma), sd.eigenvalues) < 1e-9

    def test_first_cubic_root_sum(self):
        # Vieta on the decay-convention cubic: the three roots add to
        # twice the switching rate.
        gamma = 0.37
        roots = transverse_eigenvalues(1.2, 0.4, gamma)[:3]
        assert_allclose(roots.sum(), 2.0 * gamma, atol=1e-12)

    def test_spectrum_on_random_grid(self, rng):
        for _ in range(20):
            gamma = rng.uniform(0.02, 1.0)
            g = rng.uniform(0.02, 2.0)
            sd = spectral_decomposition(
                decoherence_generator(make_system(theta=np.pi / 2, g=g, gamma=gamma))
            )
            assert match_multisets(transverse_eigenvalues(1.0, g, gamma), sd.eigenvalues) < 1e-9

    def test_nonzero_imbalance_rejected(self):
        with pytest.raises(ValueError, match="imbalance"):
            transverse_eigenvalues(1.0, 0.3, 0.1, eta=0.05)


class TestPerturbativeRates:
    def test_aligned_weak_coupling_matches_exact(self):
        # S(0) / 2 = g**2 / (2 gamma) = 0.01, within 2% of the exact rate.
        pert = perturbative_rates(1.0, 0.1, 0.5, theta=0.0)
        assert_allclose(pert.rate_phi, 0.01, rtol=1e-12)
        exact = longitudinal_rates(1.0, 0.1, 0.5).rate_xy
        assert abs(pert.rate_2_star - exact) / exact < 0.02

    def test_transverse_has_no_dephasing_part(self):
        # cos(pi/2) squared underflows to ~1e-33 in floats.
        pert = perturbative_rates(1.0, 0.1, 0.5, theta=np.pi / 2)
        assert abs(pert.rate_phi) < 1e-30
        assert_allclose(pert.rate_2_star, pert.rate_1 / 2.0, rtol=1e-12)

    def test_strong_coupling_breakdown(self):
        # Aligned strong coupling: perturbative 0.45 vs exact 0.1.
        pert = perturbative_rates(1.0, 0.3, 0.1, theta=0.0)
        assert_allclose(pert.rate_2_star, 0.45, rtol=1e-12)
        exact = longitudinal_rates(1.0, 0.3, 0.1).rate_xy
        assert abs(pert.rate_2_star - exact) / exact > 1.0

    def test_nonzero_imbalance_rejected(self):
        with pytest.raises(ValueError, match="eta"):
            perturbative_rates(1.0, 0.1, 0.5, theta=0.3, eta=0.1)

    def test_weak_coupling_consistency_across_angles(self):
        # g / gamma <= 0.2: perturbative 1/T2* within 5% of exact.
        for gamma, g in [(0.5, 0.1), (0.5, 0.05), (1.0, 0.2)]:
            for theta in np.linspace(0.0, np.pi / 2, 9):
                exact = free_decay_rates(
                    make_system(theta=theta, g=g, gamma=gamma)
                ).rate_xy
                pert = perturbative_rates(1.0, g, gamma, theta).rate_2_star
                assert abs(exact - pert) / exact < 0.05

    def test_spectrum_normalization(self):
        # S(omega) = 4 gamma g^2 / (omega^2 + 4 gamma^2).
        assert_allclose(telegraph_spectrum(0.0, 0.5, 0.1), 0.02, rtol=1e-12)
        assert_allclose(telegraph_spectrum(1.0, 0.5, 0.1), 0.01, rtol=1e-12)


class TestAngleSweep:
    def test_weak_coupling_rate_crossing(self):
        sweep = angle_sweep(1.0, 0.1, 0.5, 0.0, np.linspace(0.01, np.pi / 2 - 0.01, 40))
        diff = sweep.rate_z - sweep.rate_xy
        assert diff[0] < 0 < diff[-1]
        crossings = np.sum(np.sign(diff[:-1]) != np.sign(diff[1:]))
        assert crossings == 1

    def test_strong_coupling_flat_then_downturn(self):
        sweep = angle_sweep(1.0, 0.3, 0.1, 0.0, np.array([0.0, 0.1, 1.45]))
        flat = abs(sweep.rate_xy[1] - sweep.rate_xy[0]) / sweep.rate_xy[0]
        assert flat < 0.05
        assert sweep.rate_xy[2] < sweep.rate_xy[0]

    def test_imbalance_lowers_rates_pointwise(self):
        thetas = np.linspace(0.05, np.pi / 2, 12)
        balanced = angle_sweep(1.0, 0.3, 0.1, 0.0, thetas)
        biased = angle_sweep(1.0, 0.3, 0.1, 0.05, thetas)
        assert np.all(biased.rate_xy <= balanced.rate_xy + 1e-12)
        assert np.all(biased.rate_z <= balanced.rate_z + 1e-12)
        assert np.all(np.isnan(biased.rate_2_star))
