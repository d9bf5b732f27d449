"""Ekman pumping operators and the averaging that produces them."""

import math

import numpy as np
import pytest

from rotwind.forcing import FrequencyAtom, WindStress
from rotwind.geometry import SpectralField, TorusGeometry, mode_set, random_real_field
from rotwind.layers import LayerParams
from rotwind.sources import (
    H2ViolationError,
    S_B_apply,
    S_T_delta,
    S_T_limit,
    S_T_mean,
    pumping_coefficient_A,
    pumping_coefficients,
    quadratic_lift,
    sbar_field,
    sbar_from_limit_formula,
    sigma_filtered_lift,
    stheta_average,
)

G = TorusGeometry(1.0, 1.0, 1.0)
PARAMS = LayerParams(epsilon=1e-2, nu=1e-2, beta=10.0, delta=1e-2)


def eigen_wind(seed=0, include_mean=True):
    ms = mode_set(G, 2)
    lam = ms.lam[ms.index[(1, 0, 1)]]
    atoms = [FrequencyAtom(-lam, [0.2, 0.1j])]
    if include_mean:
        atoms.append(FrequencyAtom(0.0, [0.1, 0.0]))
    return WindStress(G, {(1, 0): atoms})


class TestPumpingCoefficient:
    def test_zero_for_vertical_modes(self):
        assert pumping_coefficient_A(G, (0, 0, 3)) == 0j

    def test_horizontal_value(self):
        for geom in (G, TorusGeometry(2.0, 0.7, 1.3)):
            val = pumping_coefficient_A(geom, (2, -1, 0))
            assert val == pytest.approx(1.0 / (math.sqrt(2) * geom.a), abs=1e-14)

    def test_independent_arithmetic_oracle(self):
        # k=(1,1,1): lambda=-1/3, |k_h'|^2 = 8 pi^2, |k'|^2 = 9 pi^2
        lam = -1.0 / 3.0
        expected = (8 * math.pi**2) / (2 * math.sqrt(2) * 9 * math.pi**2) * (
            (1 + lam) / math.sqrt(1 - lam) * (1 + 1j)
            + (1 - lam) / math.sqrt(1 + lam) * (1 - 1j)
        )
        assert pumping_coefficient_A(G, (1, 1, 1)) == pytest.approx(expected, abs=1e-14)

    def test_nonnegative_real_part_exhaustive(self):
        A = pumping_coefficients(G, 8)
        assert float(np.min(A.real)) >= 0.0

    def test_vectorized_matches_scalar(self):
        ms = mode_set(G, 3)
        A = pumping_coefficients(G, 3)
        for k in [(1, 2, -3), (0, 0, 1), (2, 0, 0), (-1, -1, 2)]:
            assert A[ms.index[k]] == pytest.approx(
                pumping_coefficient_A(G, k), abs=1e-14
            )

    def test_rejects_zero_mode(self):
        with pytest.raises(ValueError):
            pumping_coefficient_A(G, (0, 0, 0))


class TestSB:
    def test_zero_field(self):
        assert S_B_apply(G, SpectralField(G, 2)).norm() == 0.0

    def test_horizontal_field_scales_uniformly(self):
        w = SpectralField(G, 2)
        w[(1, 0, 0)] = 0.4
        w[(0, 2, 0)] = -0.3j
        out = S_B_apply(G, w)
        assert np.allclose(
            out.data, w.data / (math.sqrt(2) * G.a), atol=1e-15
        )

    def test_dissipative(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            w = random_real_field(G, 2, rng)
            val = np.real(np.vdot(w.data, S_B_apply(G, w).data))
            assert val >= -1e-12


class TestSTDelta:
    def test_empty_wind(self):
        ws = WindStress(G, {})
        assert S_T_delta(ws, G, 1e-3, 0.0, ws.zero_phase(), 2).norm() == 0.0

    def test_off_spectrum_wind_gives_zero(self):
        # no atom frequency matches any -lambda_k within the truncation
        ws = WindStress(G, {(1, 0): [FrequencyAtom(0.123456, [0.3, 0.0])]})
        om = ws.random_phase(np.random.default_rng(2))
        assert S_T_delta(ws, G, 1e-3, 0.0, om, 2).norm() == 0.0

    def test_single_mode_hand_expansion(self):
        # mu = 0 atom drives exactly the k3 = 0 column of the wind mode
        ws = WindStress(G, {(1, 0): [FrequencyAtom(0.0, [0.25, 0.0])]})
        om = ws.zero_phase()
        delta = 1e-2
        st = S_T_delta(ws, G, delta, 0.0, om, 2)
        ms = mode_set(G, 2)
        khp = np.array([2 * np.pi, 0.0])
        sig_hat = G.a1 * G.a2 * np.array([0.25, 0.0])
        expected = np.zeros(len(ms), dtype=complex)
        for kh, conj in (((1, 0), False), ((-1, 0), True)):
            i = ms.index[(kh[0], kh[1], 0)]
            kv = khp if not conj else -khp
            sh = sig_hat if not conj else np.conj(sig_hat)
            val = 0j
            for s in (+1, -1):
                e_pm = 1j * np.dot(kv, sh) + s * np.dot([-kv[1], kv[0]], sh)
                val += e_pm / (-delta + 1j * (0.0 + s))
            expected[i] = (
                0.5
                / math.sqrt(G.a * G.a1 * G.a2)
                * np.linalg.norm(kv)
                / np.dot(kv, kv)
                * val
            )
        assert np.max(np.abs(st.data - expected)) < 1e-12

    def test_real_valued_field(self):
        ws = eigen_wind()
        om = ws.random_phase(np.random.default_rng(3))
        st = S_T_delta(ws, G, 1e-2, 0.0, om, 2)
        assert st.is_real(tol=1e-10)


class TestSTLimit:
    def test_linear_in_delta(self):
        ws = eigen_wind()
        om = ws.random_phase(np.random.default_rng(4))
        lim = S_T_limit(ws, G, 0.0, om, 2)
        errs = [
            (S_T_delta(ws, G, d, 0.0, om, 2) - lim).norm() for d in (1e-3, 1e-4, 1e-5)
        ]
        assert errs[0] / errs[1] == pytest.approx(10.0, rel=0.05)
        assert errs[1] / errs[2] == pytest.approx(10.0, rel=0.05)

    def test_h2_violation_detected(self):
        # an atom at -lambda of a k_h != 0 mode with lambda within the gap
        geom = G
        ms = mode_set(geom, 3)
        lams = [
            (k, ms.lam[i])
            for i, k in enumerate(ms.modes)
            if (k[0], k[1]) != (0, 0) and abs(abs(ms.lam[i]) - 1) < 0.2
        ]
        k, lam = lams[0]
        ws = WindStress(geom, {(k[0], k[1]): [FrequencyAtom(float(-lam), [0.1, 0.0])]})
        om = ws.zero_phase()
        with pytest.raises(H2ViolationError):
            S_T_limit(ws, geom, 0.0, om, 3, eta_gap=0.2)

    def test_expectation_supported_on_horizontal_modes(self):
        ws = eigen_wind()
        st_mean = S_T_mean(ws, G, 0.0, 2)
        ms = mode_set(G, 2)
        assert np.all(st_mean.data[ms.k_int[:, 2] != 0] == 0)
        # third component of a horizontal-mode field vanishes identically
        vals = st_mean.evaluate(np.random.default_rng(5).uniform(0, 1, (4, 2)), 0.3)
        assert np.max(np.abs(vals[..., 2])) < 1e-14

    def test_mc_mean_vanishes_for_phased_atoms(self):
        ws = eigen_wind(include_mean=False)
        rng = np.random.default_rng(6)
        n = 200
        ms = mode_set(G, 2)
        i = ms.index[(1, 0, 1)]
        vals = np.array(
            [
                S_T_limit(ws, G, 0.0, ws.random_phase(rng), 2).data[i]
                for _ in range(n)
            ]
        )
        assert abs(np.mean(vals)) <= 3 * np.std(vals) / math.sqrt(n)

    def test_horizontal_part_deterministic_per_realization(self):
        # with ergodic phases, the k3=0 block of S_T equals its expectation
        ws = eigen_wind()
        rng = np.random.default_rng(7)
        st_mean = S_T_mean(ws, G, 0.0, 2)
        ms = mode_set(G, 2)
        sector = ms.k_int[:, 2] == 0
        for _ in range(5):
            st = S_T_limit(ws, G, 0.0, ws.random_phase(rng), 2)
            assert np.allclose(st.data[sector], st_mean.data[sector], atol=1e-13)


class TestSourceAveraging:
    def test_sbar_consistency_identity(self):
        # Sbar = sqrt(eps nu) S_B(w) + eps nu beta S_T^delta(sigma)
        rng = np.random.default_rng(8)
        w = random_real_field(G, 2, rng)
        ws = eigen_wind()
        om = ws.random_phase(rng)
        s1 = sbar_field(G, w, ws, PARAMS, 0.0, om, 2)
        s2 = sbar_from_limit_formula(G, w, ws, PARAMS, 0.0, om, 2)
        assert (s1 - s2).norm() < 1e-8 * max(1.0, s1.norm())

    def test_stheta_converges_with_rate_one(self):
        rng = np.random.default_rng(9)
        w = random_real_field(G, 2, rng)
        ws = eigen_wind()
        om = ws.random_phase(rng)
        sbar = sbar_field(G, w, ws, PARAMS, 0.0, om, 2)
        thetas = [1e2, 1e3, 1e4]
        errs = [
            (stheta_average(G, w, ws, PARAMS, 0.0, om, th, 2) - sbar).norm()
            for th in thetas
        ]
        slope = np.polyfit(np.log(thetas), np.log(errs), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.15)

    def test_lift_independence(self):
        # two admissible lifts give S_theta values merging at rate 1/theta
        rng = np.random.default_rng(10)
        w = random_real_field(G, 2, rng)
        ws = eigen_wind()
        om = ws.random_phase(rng)
        diffs = []
        for th in (1e2, 1e3, 1e4):
            s_lin = stheta_average(G, w, ws, PARAMS, 0.0, om, th, 2)
            s_quad = stheta_average(
                G, w, ws, PARAMS, 0.0, om, th, 2, lift=quadratic_lift(G.a)
            )
            diffs.append((s_lin - s_quad).norm())
        assert diffs[0] > diffs[1] > diffs[2]
        slope = np.polyfit(np.log([1e2, 1e3, 1e4]), np.log(diffs), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.2)

    def test_zero_boundary_data(self):
        ws = WindStress(G, {})
        om = ws.zero_phase()
        w = SpectralField(G, 2)
        s = stheta_average(G, w, ws, PARAMS, 0.0, om, 100.0, 2)
        assert s.norm() == 0.0

    def test_exact_and_trapezoid_methods_agree(self):
        rng = np.random.default_rng(11)
        w = random_real_field(G, 1, rng)
        ws = eigen_wind()
        om = ws.random_phase(rng)
        a = stheta_average(G, w, ws, PARAMS, 0.0, om, 500.0, 1, method="exact")
        b = stheta_average(G, w, ws, PARAMS, 0.0, om, 500.0, 1, method="trapezoid")
        assert (a - b).norm() < 1e-4 * max(1.0, a.norm())

    def test_closed_integrand_matches_generic_assembly(self):
        from rotwind.layers import cB3_terms, cT3_terms
        from rotwind.sources import _lift_term_amplitudes, linear_lift

        rng = np.random.default_rng(12)
        w = random_real_field(G, 2, rng)
        ws = eigen_wind()
        om = ws.random_phase(rng)
        ms, rows = _lift_term_amplitudes(
            G, 2, cB3_terms(w), cT3_terms(ws, PARAMS, 0.0, om), PARAMS, linear_lift(G.a)
        )
        for tau in (0.0, 2.2):
            generic = np.zeros(len(ms), dtype=complex)
            for i, f, amp in rows:
                generic[i] += amp * np.exp(1j * f * tau)
            closed = sigma_filtered_lift(G, w, ws, PARAMS, 0.0, tau, om, 2)
            assert np.max(np.abs(generic - closed.data)) < 1e-12
