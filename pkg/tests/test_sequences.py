import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qemitter.emitter import DriveSegment, EmitterParams, mhz_to_angular, uniform_bins
from qemitter.errors import DegenerateError, DomainError, UsageError
from qemitter.lindblad import steady_state
from qemitter.sequences import (build_hahn, build_ramsey, coherence_limit, contrast_curve,
                                contrast_from_sequence, dark_state_pumping_curve,
                                dominant_frequency, driven_populations, pi_pulse,
                                quality_factor, rabi_from_saturation, rabi_population,
                                saturation_from_rabi, sequence_readouts, simulate_detuned_rabi_map,
                                simulate_rabi, simulate_sequence)
from qemitter.spectral import gauss_hermite_ensemble

from conftest import NO_DECAY_T1, T1, T2_STAR


class TestSaturation:
    def test_examples(self):
        g0 = 1 / T1
        assert rabi_from_saturation(2, T1) == pytest.approx(g0, rel=1e-15)
        assert rabi_from_saturation(1, T1) == pytest.approx(g0 / math.sqrt(2), rel=1e-15)
        omega = rabi_from_saturation(102, T1)
        assert omega / (2 * math.pi) * 1e3 == pytest.approx(152.8, abs=0.05)
        assert rabi_from_saturation(0, T1) == 0.0

    def test_negative(self):
        with pytest.raises(DomainError):
            rabi_from_saturation(-1, T1)

    @given(st.floats(0, 1e4), st.floats(0.1, 100))
    def test_inverse(self, s, t1):
        assert saturation_from_rabi(rabi_from_saturation(s, t1), t1) == pytest.approx(s, rel=1e-12,
                                                                                      abs=1e-12)


class TestRabi:
    def test_pi_time_within_one_bin(self):
        em = EmitterParams(T1)
        tr = simulate_rabi(em, 367, 20.0, 200)
        t_pi, _ = pi_pulse(tr)
        omega = rabi_from_saturation(367, T1)
        assert abs(t_pi - math.pi / omega) <= tr.widths[0]

    def test_lossless_fidelity_is_one(self):
        em = EmitterParams(NO_DECAY_T1)
        omega = 2.0
        t = np.linspace(0, 3, 601)
        pop = rabi_population(t, omega, em)
        t_pi, peak = _peak(t, pop)
        assert t_pi == pytest.approx(math.pi / omega, abs=1e-3)
        assert peak == pytest.approx(1.0, abs=1e-6)

    def test_long_pulse_reaches_steady_state(self):
        em = EmitterParams(T1)
        tr = simulate_rabi(em, 367, 100.0, 400)
        assert tr.counts[-1] == pytest.approx(367 / (2 * 368), abs=1e-3)
        em = EmitterParams.from_mhz(T1, 6.39, 16.0)
        tr = simulate_rabi(em, 367, 100.0, 400, n_nodes=1)
        ss = steady_state(DriveSegment(1.0, rabi_from_saturation(367, T1)), em)
        assert tr.counts[-1] == pytest.approx(ss.excited_population, abs=1e-6)

    def test_nonuniform_times_match_uniform(self):
        em = EmitterParams.from_mhz(T1, 6.39, 16.0, T2_STAR)
        ens = gauss_hermite_ensemble(T2_STAR, 8)
        t = np.linspace(0.0, 5.0, 51)
        a = driven_populations(t, 1.5, em, ens)
        idx = [0, 3, 4, 10, 27, 50]
        b = driven_populations(t[idx], 1.5, em, ens)
        assert np.allclose(a[:, idx], b, atol=1e-12)
        with pytest.raises(UsageError):
            driven_populations([1.0, 0.5], 1.5, em, ens)

    def test_pulse_length_domain(self):
        with pytest.raises(DomainError):
            simulate_rabi(EmitterParams(T1), 10, 0.0)


def _peak(t, y):
    i = int(np.argmax(y))
    return t[i], y[i]


class TestQualityFactor:
    def test_radiative_limit(self):
        em = EmitterParams(T1)
        assert quality_factor(3.0, em) == pytest.approx(2 * 3.0 * T1)

    def test_unity(self):
        em = EmitterParams(T1)
        assert quality_factor(0.5 / T1, em) == pytest.approx(1.0)

    @given(st.floats(0.01, 2.0))
    def test_linear_laser_dephasing_limit(self, alpha):
        # Gamma_PD^laser = alpha * Omega: Q tends to 1/alpha as Omega grows
        omega = 1e9
        em = EmitterParams(T1, 0.0, alpha * omega)
        assert quality_factor(omega, em) == pytest.approx(1 / alpha, rel=1e-6)

    def test_domain(self):
        with pytest.raises(DomainError):
            quality_factor(0.0, EmitterParams(T1))


class TestDetunedMap:
    def test_zero_column_is_resonant_trace(self):
        em = EmitterParams.from_mhz(T1, 6.39, 16.0, T2_STAR)
        traces = simulate_detuned_rabi_map(em, 102, [0.0], 10.0, 100, n_nodes=16)
        ref = simulate_rabi(em, 102, 10.0, 100, n_nodes=16)
        assert np.array_equal(traces[0].counts, ref.counts)

    def test_symmetric_in_detuning(self):
        em = EmitterParams.from_mhz(T1, 6.39, 16.0, T2_STAR)
        d = mhz_to_angular(120.0)
        a, b = simulate_detuned_rabi_map(em, 102, [d, -d], 10.0, 100, n_nodes=16)
        assert np.max(np.abs(a.counts - b.counts)) < 1e-10

    def test_generalized_rabi_frequency(self):
        em = EmitterParams(T1)
        omega = rabi_from_saturation(102, T1)
        for d in (omega, -omega):
            tr = simulate_rabi(em, 102, 20.0, 800, detuning=d)
            w = dominant_frequency(tr.centers, tr.counts)
            assert w == pytest.approx(math.sqrt(2) * omega, rel=0.02)

    def test_empty_grid(self):
        with pytest.raises(UsageError):
            simulate_detuned_rabi_map(EmitterParams(T1), 102, [], 10.0)

    def test_dominant_frequency_needs_samples(self):
        with pytest.raises(UsageError):
            dominant_frequency([0, 1, 2], [0, 1, 0])


class TestDarkStatePumping:
    def test_values(self):
        edges = uniform_bins(10.0, 5)
        tr = dark_state_pumping_curve((1.0, 2.0, 0.5, 8.0, 0.1), edges)
        t = tr.centers
        assert np.allclose(tr.counts, np.exp(-t / 2) + 0.5 * np.exp(-t / 8) + 0.1)

    def test_constant_and_domain(self):
        tr = dark_state_pumping_curve((0.0, 1.0, 0.0, 1.0, 3.0), uniform_bins(1.0, 4))
        assert np.all(tr.counts == 3.0)
        with pytest.raises(DomainError):
            dark_state_pumping_curve((1.0, 0.0, 1.0, 1.0, 0.0), uniform_bins(1.0, 4))


class TestBuilders:
    def test_ramsey_layout(self):
        seq = build_ramsey(3.0, 0.0, 2.0)
        assert [s.duration for s in seq.segments] == pytest.approx(
            [math.pi / 4, 3.0, math.pi / 4, 10.0])
        assert seq.readout_window == pytest.approx((3.0 + math.pi / 2, 13.0 + math.pi / 2))

    def test_hahn_layout(self):
        seq = build_hahn(4.0, math.pi, 2.0)
        assert [s.duration for s in seq.segments] == pytest.approx(
            [math.pi / 4, 2.0, math.pi / 2, 2.0, math.pi / 4, 10.0])
        assert seq.segments[4].phase == math.pi

    def test_errors(self):
        with pytest.raises(DomainError):
            build_ramsey(-1.0, 0.0, 2.0)
        with pytest.raises(DomainError):
            build_hahn(1.0, 0.0, 0.0)
        with pytest.raises(UsageError):
            build_ramsey(10.0, 0.0, 2.0, shot_length=15.0)

    @pytest.mark.parametrize("ideal", [True, False])
    def test_ramsey_zero_delay_readouts(self, ideal):
        em = EmitterParams(NO_DECAY_T1)
        p0 = simulate_sequence(build_ramsey(0.0, 0.0, 2.0), em, ideal=ideal)
        pi = simulate_sequence(build_ramsey(0.0, math.pi, 2.0), em, ideal=ideal)
        assert p0 == pytest.approx(1.0, abs=1e-12)
        assert pi == pytest.approx(0.0, abs=1e-12)

    def test_unknown_readout(self):
        with pytest.raises(UsageError):
            simulate_sequence(build_ramsey(0.0, 0.0, 2.0), EmitterParams(T1), readout="x")


class TestContrast:
    OMEGA = rabi_from_saturation(367, T1)

    def test_hahn_ideal_pulses_ignore_t2_star(self):
        taus = np.linspace(0, 20, 21)
        a = contrast_curve("hahn", taus, EmitterParams.from_mhz(T1, 6.39, 16.0, T2_STAR),
                           self.OMEGA, ideal=True)
        b = contrast_curve("hahn", taus, EmitterParams.from_mhz(T1, 6.39, 16.0, 10 * T2_STAR),
                           self.OMEGA, ideal=True)
        assert np.max(np.abs(a.contrast - b.contrast)) < 1e-10

    def test_ramsey_ideal_envelope(self):
        em = EmitterParams.from_mhz(T1, 6.39, 16.0, T2_STAR)
        taus = np.linspace(0, 12, 49)
        c = contrast_curve("ramsey", taus, em, self.OMEGA, ideal=True, n_nodes=64).contrast
        expect = np.exp(-(taus / T2_STAR) ** 2) * np.exp(-(0.5 / T1 + em.gamma_pd(False)) * taus)
        assert np.max(np.abs(c - expect)) < 1e-6

    def test_no_decoherence_is_flat(self):
        em = EmitterParams(math.inf)
        for kind in ("ramsey", "hahn"):
            c = contrast_curve(kind, np.linspace(0, 30, 7), em, 2.0)
            assert np.allclose(c.contrast, 1.0, atol=1e-12)

    @pytest.mark.parametrize("kind", ["ramsey", "hahn"])
    def test_bounded_by_coherence_limit(self, kind, hahn_emitter):
        taus = np.linspace(0, 20, 41)
        c = contrast_curve(kind, taus, hahn_emitter, self.OMEGA).contrast
        assert np.all(c <= coherence_limit(taus, T1) + 1e-9)
        assert np.all(c >= -1e-9)

    @settings(max_examples=15)
    @given(st.floats(2.0, 30.0), st.floats(0.0, 0.3), st.floats(0.0, 0.3), st.floats(2.0, 20.0),
           st.floats(10.0, 30.0), st.sampled_from(["ramsey", "hahn"]))
    def test_range(self, t1, gi, gl, t2, omega, kind):
        # pulses short against T1; slow pulses depress the tau=0 normaliser
        # and the normalised contrast can then exceed 1
        em = EmitterParams(t1, gi, gl, t2)
        # stay where a 64-node rule resolves the detuning average
        taus = np.linspace(0, min(20.0, 3 * t2), 11)
        c = contrast_curve(kind, taus, em, omega, n_nodes=64).contrast
        assert np.all(c >= -1 - 1e-9) and np.all(c <= 1 + 1e-9)

    @pytest.mark.parametrize("kind", ["ramsey", "hahn"])
    def test_fast_path_matches_explicit_sequences(self, kind, hahn_emitter):
        taus = [0.5, 3.0, 9.0]
        fast = contrast_curve(kind, taus, hahn_emitter, self.OMEGA, n_nodes=16).contrast
        slow = [contrast_from_sequence(kind, t, hahn_emitter, self.OMEGA, n_nodes=16)
                for t in taus]
        assert np.allclose(fast, slow, atol=1e-12)

    @pytest.mark.parametrize("kind", ["ramsey", "hahn"])
    def test_shot_padding_invariance(self, kind, hahn_emitter):
        for tau in (1.0, 6.0):
            a = contrast_from_sequence(kind, tau, hahn_emitter, self.OMEGA, readout="window",
                                       n_nodes=16)
            b = contrast_from_sequence(kind, tau, hahn_emitter, self.OMEGA, readout="window",
                                       n_nodes=16, shot_length=50.0)
            c = contrast_from_sequence(kind, tau, hahn_emitter, self.OMEGA, n_nodes=16)
            assert a == pytest.approx(b, abs=1e-12)
            assert a == pytest.approx(c, abs=1e-10)

    def test_time_rescaling(self):
        # doubling every rate halves every time scale
        em = EmitterParams.from_mhz(T1, 6.39, 16.0, T2_STAR)
        fast = EmitterParams(T1 / 2, 2 * em.gamma_pd_intrinsic, 2 * em.gamma_pd_laser,
                             T2_STAR / 2)
        taus = np.linspace(0, 10, 11)
        a = contrast_curve("ramsey", taus, em, self.OMEGA, n_nodes=32).contrast
        b = contrast_curve("ramsey", taus / 2, fast, 2 * self.OMEGA, n_nodes=32).contrast
        assert np.max(np.abs(a - b)) < 1e-10

    def test_degenerate_normalisation(self, monkeypatch, hahn_emitter):
        import qemitter.sequences as seqmod
        monkeypatch.setattr(seqmod, "sequence_readouts",
                            lambda kind, grid, phases, *a, **k: np.zeros((2, len(grid))))
        with pytest.raises(DegenerateError):
            contrast_curve("ramsey", [1.0], hahn_emitter, 1.0)

    def test_readout_matrix_shape_and_errors(self, hahn_emitter):
        out = sequence_readouts("hahn", [0.0, 1.0, 2.0], (0.0, 1.0, math.pi), hahn_emitter, 2.0)
        assert out.shape == (3, 3)
        with pytest.raises(UsageError):
            sequence_readouts("cpmg", [0.0], (0.0,), hahn_emitter, 2.0)
        with pytest.raises(DomainError):
            sequence_readouts("hahn", [-1.0], (0.0,), hahn_emitter, 2.0)
