"""Boundary-layer profiles, correctors, and their defining equations."""

import math

import numpy as np
import pytest
import scipy.integrate as si

from rotwind.forcing import FrequencyAtom, WindStress
from rotwind.geometry import SpectralField, TorusGeometry, mode_set, random_real_field
from rotwind.layers import (
    BottomLayerSpec,
    LayerParams,
    SigmaSources,
    _halfline_erfc_quad,
    _halfline_sqrt_quad,
    bottom_layer,
    classical_kh0_layer,
    compute_cB3,
    compute_cT3,
    compute_delta_uint,
    corrector_vint,
    dirichlet_coefficient,
    eta_pm,
    expected_E_cB3,
    kernel_G_delta,
    kh0_split,
    layer_residual_bottom,
    layer_residual_uT,
    psi,
    psi_ode_residual,
    resonant_layer,
    top_layer_u3,
    top_layer_uh,
)

G = TorusGeometry(1.0, 1.0, 1.0)
PARAMS = LayerParams(epsilon=1e-2, nu=1e-2, beta=10.0, delta=1e-2)


def single_atom_wind(mu=0.4, coeff=(0.3, 0.1j), kh=(1, 0)):
    return WindStress(G, {kh: [FrequencyAtom(mu, list(coeff))]})


class TestLayerParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            LayerParams(epsilon=-1, nu=1, beta=1)
        with pytest.raises(ValueError):
            LayerParams(epsilon=1, nu=1, beta=1, delta=0.0)

    def test_regime_flags(self):
        flags = LayerParams(epsilon=1e-2, nu=1e-1, beta=1.0).regime_flags(
            nu_over_eps_max=5.0
        )
        assert not flags["nu_over_eps_ok"]
        assert flags["beta_scaling_ok"]


class TestKernelGDelta:
    def test_zero_at_wall(self):
        assert kernel_G_delta(1.0, 0.0, 0.1) == 0.0

    def test_rejects_nonpositive_tau(self):
        with pytest.raises(ValueError):
            kernel_G_delta(0.0, 1.0, 0.1)

    def test_unit_flux_identity(self):
        # int_0^inf G(s, zeta) ds = 1 for delta = 0 (heat-kernel flux)
        for zeta in (0.5, 1.0, 2.0):
            val, _ = si.quad(
                lambda s: kernel_G_delta(s, zeta, 0.0), 0, np.inf, limit=400
            )
            assert val == pytest.approx(1.0, rel=1e-9)

    def test_dirac_boundary_property(self):
        # int phi(tau - s) G(s, zeta) ds -> phi(tau) as zeta -> 0+
        import warnings as _w
        from scipy.integrate import IntegrationWarning

        phi = lambda u: np.cos(0.7 * u) + 0.3
        tau = 2.0
        errs = []
        for zeta in (0.5, 0.1, 0.02):
            f = lambda s: phi(tau - s) * kernel_G_delta(s, zeta, 0.0)
            with _w.catch_warnings():
                _w.simplefilter("ignore", IntegrationWarning)
                val = (
                    si.quad(f, 0, 1, limit=400, points=[min(zeta**2, 0.9)])[0]
                    + si.quad(f, 1, np.inf, limit=400)[0]
                )
            errs.append(abs(val - phi(tau)))
        assert errs[0] > errs[1] > errs[2]
        assert errs[-1] < 5e-2


class TestTopLayer:
    def test_zero_wind(self):
        ws = WindStress(G, {})
        om = ws.zero_phase()
        val = top_layer_uh(ws, PARAMS, 0.0, 1.0, np.zeros(2), np.array([0.5]), om)
        assert np.allclose(val, 0.0)

    def test_closed_form_matches_quadrature(self):
        ws = single_atom_wind()
        om = ws.random_phase(np.random.default_rng(0))
        zeta = np.array([0.0, 0.7, 2.3])
        a = top_layer_uh(ws, PARAMS, 0.0, 1.1, np.array([0.2, 0.5]), zeta, om)
        b = top_layer_uh(
            ws, PARAMS, 0.0, 1.1, np.array([0.2, 0.5]), zeta, om, method="quad"
        )
        assert np.max(np.abs(a - b)) < 1e-8 * max(1.0, np.max(np.abs(a)))

    def test_laplace_identity_directly(self):
        # sqrt(pi/p) e^{-zeta sqrt p} against panel quadrature
        for p in (0.01 + 0.6j, 1e-3 - 1j * 0.4, 0.05 + 0j):
            for zeta in (0.0, 0.5, 2.0):
                closed = np.sqrt(np.pi / p) * np.exp(-zeta * np.sqrt(p))
                quad = _halfline_sqrt_quad(zeta, p)
                assert abs(closed - quad) < 1e-9 * max(1.0, abs(closed))

    def test_neumann_condition(self):
        ws = single_atom_wind()
        om = ws.random_phase(np.random.default_rng(1))
        x = np.array([0.3, 0.4])
        tau = 0.8
        h = 1e-5
        du = (
            top_layer_uh(ws, PARAMS, 0.0, tau, x, np.array([h]), om)
            - top_layer_uh(ws, PARAMS, 0.0, tau, x, np.array([0.0]), om)
        ) / h
        target = -PARAMS.eta * PARAMS.beta * ws.sample(0.0, tau, x, om)
        assert np.max(np.abs(du[0] - target)) < 2e-4 * max(1.0, np.max(np.abs(target)))

    def test_steady_wind_ekman_thickness(self):
        # mu = 0, delta -> 0: decay rate Re sqrt(-+ i) = 1/sqrt(2), the
        # classical spiral thickness, matching eta_pm at lambda = 0
        p_plus = 1e-12 + 1j * (0.0 - 1.0)
        rate = np.sqrt(p_plus)
        rate = rate if rate.real >= 0 else -rate
        assert rate.real == pytest.approx(1 / math.sqrt(2), abs=1e-6)
        assert eta_pm(0.0, +1).real == pytest.approx(1 / math.sqrt(2), abs=1e-15)

    def test_exponentially_small_at_bottom(self):
        ws = single_atom_wind()
        om = ws.zero_phase()
        p = LayerParams(epsilon=1e-2, nu=1e-2, beta=10.0, delta=1e-2)
        zeta_bottom = G.a / p.eta  # = 100
        val = top_layer_uh(ws, p, 0.0, 1.0, np.zeros(2), np.array([zeta_bottom]), om)
        assert np.max(np.abs(val)) < math.exp(-0.3 * zeta_bottom)


class TestTopLayerVertical:
    def test_vanishes_at_depth(self):
        ws = single_atom_wind()
        om = ws.zero_phase()
        val = top_layer_u3(ws, PARAMS, 0.0, 1.0, np.zeros(2), np.array([60.0]), om)
        assert np.max(np.abs(val)) < 1e-12

    def test_closed_form_matches_quadrature(self):
        ws = single_atom_wind()
        om = ws.random_phase(np.random.default_rng(2))
        zeta = np.array([0.0, 0.4, 1.7])
        a = top_layer_u3(ws, PARAMS, 0.0, 0.9, np.array([0.1, 0.2]), zeta, om)
        b = top_layer_u3(
            ws, PARAMS, 0.0, 0.9, np.array([0.1, 0.2]), zeta, om, method="quad"
        )
        assert np.max(np.abs(a - b)) < 1e-7 * max(1.0, np.max(np.abs(a)))

    def test_erfc_laplace_identity(self):
        from scipy.special import erfc

        for p in (0.01 + 0.6j, 1e-3 - 0.4j):
            for zeta in (0.3, 1.5):
                closed = np.exp(-zeta * np.sqrt(p)) / p
                quad = _halfline_erfc_quad(zeta, p)
                assert abs(closed - quad) < 1e-9 * max(1.0, abs(closed))

    def test_divergence_consistency(self):
        # u3(zeta) = -sqrt(nu eps) int_zeta^inf div_h u_h
        ws = single_atom_wind(mu=0.4, coeff=(0.3, 0.1j), kh=(1, 0))
        om = ws.random_phase(np.random.default_rng(3))
        x = np.array([0.25, 0.6])
        tau = 1.3
        zeta0 = 0.8
        h = 1e-5

        def div_h(zeta):
            up = top_layer_uh(ws, PARAMS, 0.0, tau, x + [h, 0], zeta, om)
            um = top_layer_uh(ws, PARAMS, 0.0, tau, x - [h, 0], zeta, om)
            vp = top_layer_uh(ws, PARAMS, 0.0, tau, x + [0, h], zeta, om)
            vm = top_layer_uh(ws, PARAMS, 0.0, tau, x - [0, h], zeta, om)
            return ((up - um)[..., 0] + (vp - vm)[..., 1]) / (2 * h)

        zs = np.linspace(zeta0, zeta0 + 40.0, 4001)
        integral = np.trapezoid(div_h(zs), zs)
        target = -PARAMS.eta * integral
        got = top_layer_u3(ws, PARAMS, 0.0, tau, x, np.array([zeta0]), om)[0]
        assert got == pytest.approx(target, rel=2e-5)


class TestBottomLayer:
    def _spec(self, seed=4):
        rng = np.random.default_rng(seed)
        w = random_real_field(G, 2, rng)
        return BottomLayerSpec.from_field(w), w

    def test_dirichlet_match(self):
        spec, w = self._spec()
        k = (1, 0, 1)
        x = np.array([0.3, 0.7])
        tau = 0.9
        val = bottom_layer(spec, k, 0.0, tau, x, np.array([0.0]))
        khp = np.array([2 * np.pi, 0.0])
        lam = mode_set(G, 2).lam[mode_set(G, 2).index[k]]
        target = (
            spec.c_bh[k]
            * np.exp(1j * (khp[0] * x[0] + khp[1] * x[1]))
            * np.exp(-1j * lam * tau)
        )
        assert np.allclose(val[0, :2], target, atol=1e-13)

    def test_rejects_kh_zero(self):
        spec, _ = self._spec()
        with pytest.raises(ValueError):
            bottom_layer(spec, (0, 0, 1), 0.0, 0.0, np.zeros(2), np.array([0.0]))

    def test_decay_bound(self):
        spec, _ = self._spec()
        k = (1, -1, 2)
        lam = mode_set(G, 2).lam[mode_set(G, 2).index[k]]
        rate = min(eta_pm(lam, +1).real, eta_pm(lam, -1).real)
        x = np.zeros(2)
        v0 = np.linalg.norm(bottom_layer(spec, k, 0.0, 0.3, x, np.array([0.0]))[0, :2])
        for zeta in (0.5, 1.5, 3.0):
            v = np.linalg.norm(
                bottom_layer(spec, k, 0.0, 0.3, x, np.array([zeta]))[0, :2]
            )
            assert v <= 2.0 * v0 * math.exp(-rate * zeta) + 1e-13

    def test_classical_spiral_at_lambda_zero(self):
        # lambda = 0: rates (1 +- i)/sqrt 2; hand-evaluated spiral
        spec, w = self._spec()
        k = (1, 1, 0)
        c = spec.c_bh[k]
        for zeta in (0.0, 1.0, 2.0):
            val = bottom_layer(spec, k, 0.0, 0.0, np.zeros(2), np.array([zeta]))[0, :2]
            hand = np.zeros(2, dtype=complex)
            for s in (+1, -1):
                amp = 0.5 * (c[0] + 1j * s * c[1])
                rate = (1 + 1j * s) / math.sqrt(2)
                hand += amp * np.exp(-rate * zeta) * np.array([1.0, -1j * s])
            assert np.allclose(val, hand, atol=1e-13)

    def test_eta_bounds(self):
        # Re eta in (0, 1]; Re eta >= |k_h'|/(2|k'|) (explicit bound)
        ms = mode_set(G, 3)
        for i, k in enumerate(ms.modes):
            lam = ms.lam[i]
            for s in (+1, -1):
                eta = eta_pm(lam, s)
                assert 0.0 <= eta.real <= 1.0 + 1e-15
                if (k[0], k[1]) != (0, 0):
                    assert eta.real >= ms.kh_norm[i] / (2 * ms.kp_norm[i]) - 1e-12

    def test_vertical_component_scaling(self):
        # u_B3 carries sqrt(eps nu) |k_h'| / eta relative to the horizontal
        spec, _ = self._spec()
        k = (2, 1, -1)
        ms = mode_set(G, 2)
        i = ms.index[k]
        rate = min(eta_pm(ms.lam[i], +1).real, eta_pm(ms.lam[i], -1).real)
        eps_nu = 1e-4
        v = bottom_layer(spec, k, 0.0, 0.2, np.zeros(2), np.array([0.3]), eps_nu=eps_nu)
        bound = 3 * math.sqrt(eps_nu) * ms.kh_norm[i] / rate
        assert abs(v[0, 2]) < bound * np.linalg.norm(v[0, :2])


class TestKh0Split:
    def test_reconstructs_boundary_data(self):
        rng = np.random.default_rng(5)
        w = random_real_field(G, 2, rng)
        spec = BottomLayerSpec.from_field(w)
        alpha, gamma = kh0_split(spec)
        for tau in (0.0, 0.7, 2.1):
            total = np.zeros(2, dtype=complex)
            for s in (+1, -1):
                total += alpha[s] * np.exp(1j * s * tau) * np.array([1.0, 1j * s])
                total += gamma[s] * np.exp(1j * s * tau) * np.array([1.0, -1j * s])
            direct = np.zeros(2, dtype=complex)
            ms = w.mode_set()
            for i, k in enumerate(ms.modes):
                if (k[0], k[1]) == (0, 0) and w.data[i] != 0:
                    direct += spec.c_bh[k] * np.exp(-1j * ms.lam[i] * tau)
            assert np.allclose(total, direct, atol=1e-12)

    def test_classical_part_decays_at_unit_rate(self):
        rng = np.random.default_rng(6)
        w = random_real_field(G, 1, rng)
        _, gamma = kh0_split(BottomLayerSpec.from_field(w))
        v0 = np.linalg.norm(classical_kh0_layer(gamma, 0.5, np.array([0.0])))
        v2 = np.linalg.norm(classical_kh0_layer(gamma, 0.5, np.array([2.0])))
        assert v2 <= v0 * math.exp(-2.0) * 1.5 + 1e-14


class TestPsiLayer:
    def test_endpoint_values(self):
        assert psi(0.0) == pytest.approx(1.0, abs=1e-15)
        assert psi(30.0) < 1e-12

    def test_quadrature_oracle_at_two(self):
        oracle, _ = si.quad(lambda u: math.exp(-(u**2) / 4) / math.sqrt(math.pi), 2, np.inf)
        assert psi(2.0) == pytest.approx(oracle, abs=1e-12)
        assert abs(psi(2.0) - 0.15730) < 1e-5

    def test_ode_residual(self):
        assert psi_ode_residual(np.linspace(0.1, 4.0, 40)) < 1e-6

    def test_resonant_layer_profile(self):
        alphas = {+1: 0.3 + 0.1j, -1: 0.2 - 0.4j}
        with pytest.raises(ValueError):
            resonant_layer(alphas, 0.0, 1.0, np.array([0.1]), 1e-2)
        val = resonant_layer(alphas, 2.0, 5.0, np.array([0.0]), 1e-2)
        hand = sum(
            alphas[s] * np.exp(1j * s * 5.0) * np.array([1.0, 1j * s]) for s in (1, -1)
        )
        assert np.allclose(val[0], hand, atol=1e-14)


class TestCorrectorVint:
    def test_zero_data(self):
        v = corrector_vint(G, {}, {}, PARAMS, np.zeros(2), np.array([0.4]))
        assert np.allclose(v, 0.0)

    def test_boundary_values(self):
        c_b = {(1, 0): 0.5 + 0.2j, (-1, 0): 0.5 - 0.2j}
        c_t = {(1, 0): -0.1j, (-1, 0): 0.1j}
        x = np.array([0.3, 0.9])
        v_bot = corrector_vint(G, c_b, c_t, PARAMS, x, np.array([0.0]))
        v_top = corrector_vint(G, c_b, c_t, PARAMS, x, np.array([G.a]))
        cb_x = sum(
            c * np.exp(2j * np.pi * (kh[0] * x[0] + kh[1] * x[1]))
            for kh, c in c_b.items()
        )
        ct_x = sum(
            c * np.exp(2j * np.pi * (kh[0] * x[0] + kh[1] * x[1]))
            for kh, c in c_t.items()
        )
        assert v_bot[0, 2] == pytest.approx(PARAMS.eta * cb_x, abs=1e-13)
        assert v_top[0, 2] == pytest.approx(
            PARAMS.epsilon * PARAMS.nu * PARAMS.beta * ct_x, abs=1e-13
        )

    def test_divergence_free_fd(self):
        rng = np.random.default_rng(7)
        c_b, c_t = {}, {}
        for kh in [(1, 0), (0, 1), (1, 1)]:
            zb = complex(rng.standard_normal(), rng.standard_normal())
            zt = complex(rng.standard_normal(), rng.standard_normal())
            c_b[kh] = zb
            c_b[(-kh[0], -kh[1])] = np.conj(zb)
            c_t[kh] = zt
            c_t[(-kh[0], -kh[1])] = np.conj(zt)
        x = np.array([0.21, 0.43])
        z = 0.37
        h = 1e-5

        def v(xx, zz):
            return corrector_vint(G, c_b, c_t, PARAMS, xx, np.array([zz]))[0]

        div = (
            (v(x + [h, 0], z)[0] - v(x - [h, 0], z)[0])
            + (v(x + [0, h], z)[1] - v(x - [0, h], z)[1])
            + (v(x, z + h)[2] - v(x, z - h)[2])
        ) / (2 * h)
        assert abs(div) < 1e-6

    def test_rejects_mean_flux(self):
        with pytest.raises(ValueError):
            corrector_vint(
                G, {(0, 0): 1.0}, {}, PARAMS, np.zeros(2), np.array([0.5])
            )


class TestFluxCoefficients:
    def test_zero_field_gives_zero_cB3(self):
        w = SpectralField(G, 2)
        assert compute_cB3(w, 0.0, 1.0) == {}

    def test_cT3_single_atom_closed_form_vs_quadrature(self):
        ws = single_atom_wind(mu=0.4, coeff=(0.3, 0.1j))
        om = ws.random_phase(np.random.default_rng(8))
        params = PARAMS
        tau = 0.6
        got = compute_cT3(ws, params, 0.0, tau, om)[(1, 0)]
        # oracle: направление integral of sigma_hat^pm history
        khp = np.array([2 * np.pi, 0.0])

        def sig_hat(tt):
            return ws.sigma_hat(0.0, tt, (1, 0), om)

        acc = 0j
        for s in (+1, -1):
            def integrand_re(u):
                sh = sig_hat(tau - u)
                val = (1j * np.dot(khp, sh) + s * np.dot([-khp[1], khp[0]], sh)) * np.exp(
                    -params.delta * u + 1j * s * u
                )
                return val

            re, _ = si.quad(lambda u: integrand_re(u).real, 0, np.inf, limit=600)
            im, _ = si.quad(lambda u: integrand_re(u).imag, 0, np.inf, limit=600)
            acc += 0.5 * (re + 1j * im)
        assert got == pytest.approx(acc, rel=1e-8)

    def test_E_cB3_matches_paper_closed_form(self):
        rng = np.random.default_rng(9)
        w = random_real_field(G, 2, rng)
        from rotwind.layers import cB3_terms

        terms = cB3_terms(w)
        ms = w.mode_set()
        for k in [(1, 0, 1), (1, 1, -2), (2, -1, 0)]:
            lam = ms.lam[ms.index[k]]
            picked = sum(
                a for f, a in terms.get((k[0], k[1]), []) if abs(f + lam) < 1e-12
            )
            assert picked == pytest.approx(expected_E_cB3(w, k), abs=1e-12)


class TestDeltaUint:
    def test_zero_at_tau_zero(self):
        rng = np.random.default_rng(10)
        w = random_real_field(G, 1, rng)
        ws = single_atom_wind()
        om = ws.zero_phase()
        sources = SigmaSources(ws, PARAMS, om)
        coeffs = compute_delta_uint(
            G, 1, 1, w, sources, PARAMS.epsilon, np.array([0.0, 1.0])
        )
        assert np.allclose(coeffs[0], 0.0)

    def test_single_nonresonant_pair_hand_value(self):
        # support the field on one pair; the output mode integral is
        # -eps alpha w_k w_l (e^{i D tau} - 1)/(i D) summed over the pair
        from rotwind.resonance import interaction_table

        w = SpectralField(G, 1)
        k, l = (1, 0, 1), (0, 1, 1)
        w[k] = 0.4
        w[l] = 0.25
        eps = 1e-2
        tau = 3.0
        coeffs = compute_delta_uint(G, 1, 2, w, None, eps, np.array([0.0, tau]))
        full = interaction_table(G, 1, 2)
        ms_out = mode_set(G, 2)
        expected = np.zeros(len(ms_out), dtype=complex)
        for t in range(len(full.alpha)):
            if full.resonant[t]:
                continue
            wk = w.data[full.ki[t]]
            wl = w.data[full.li[t]]
            if wk == 0 or wl == 0:
                continue
            d = full.dlam[t]
            expected[full.mi[t]] += (
                -eps * full.alpha[t] * wk * wl * (np.exp(1j * d * tau) - 1.0) / (1j * d)
            )
        assert np.allclose(coeffs[1], expected, atol=1e-13)

    def test_sublinear_growth(self):
        rng = np.random.default_rng(11)
        w = random_real_field(G, 1, rng)
        ms = mode_set(G, 1)
        lam_vals = sorted(set(np.round(ms.lam, 12)))
        ws = single_atom_wind(mu=float(-lam_vals[0]))
        om = ws.random_phase(rng)
        p = LayerParams(epsilon=1e-3, nu=1e-3, beta=30.0, delta=1e-2)
        sources = SigmaSources(ws, p, om)
        taus = np.linspace(0.0, 200.0, 2001)
        coeffs = compute_delta_uint(G, 1, 1, w, sources, p.epsilon, taus)
        sup = np.max(np.abs(coeffs), axis=1)
        # fitted growth: sup <= (eps + sqrt(eps nu)) (C + eta tau)
        scale = p.epsilon + p.eta
        fit = np.polyfit(taus, sup, 1)
        assert fit[0] < 0.05 * scale  # small linear coefficient
        assert np.max(sup) < scale * (50.0 + 0.05 * taus[-1])


class TestResiduals:
    def test_top_layer_pde_residual(self):
        ws = single_atom_wind()
        om = ws.random_phase(np.random.default_rng(12))
        res = layer_residual_uT(
            ws, PARAMS, om, np.linspace(0.5, 2.0, 3), np.linspace(0.4, 1.6, 3)
        )
        scale = PARAMS.eta * PARAMS.beta
        assert res < 1e-4 * max(1.0, scale)

    def test_bottom_layer_exactness(self):
        rng = np.random.default_rng(13)
        w = random_real_field(G, 1, rng)
        spec = BottomLayerSpec.from_field(w)
        res = layer_residual_bottom(
            spec, (1, 0, 1), np.linspace(0.3, 1.5, 3), np.linspace(0.3, 1.5, 3)
        )
        assert res < 1e-3  # second-order FD truncation level at h=1e-2
