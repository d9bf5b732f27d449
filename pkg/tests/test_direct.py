"""Direct finite-eps solver, filtering, and the comparison machinery."""

import math
import warnings

import numpy as np
import pytest

from rotwind.direct import (
    DirectTrajectory,
    GridConfig,
    UnresolvedLayerWarning,
    _field_on_grid,
    _MeanModeSystem,
    convergence_study,
    filter_project,
    layer_points,
    project_snapshot,
    solve_direct_linear,
    solve_direct_nonlinear,
    stretched_grid,
    trajectory_errors,
)
from rotwind.forcing import FrequencyAtom, WindStress
from rotwind.geometry import SpectralField, TorusGeometry, mode_set
from rotwind.layers import LayerParams, top_layer_uh

G = TorusGeometry(1.0, 1.0, 1.0)


def real_pair(f: SpectralField, k, value):
    neg = (-k[0], -k[1], -k[2])
    sign = 1.0 if (k[0], k[1]) != (0, 0) else -1.0
    f[k] = value
    f[neg] = sign * np.conj(value)


class TestGrid:
    def test_stretched_grid_clusters_walls(self):
        z = stretched_grid(1.0, 128, 3.0)
        assert z[0] == 0.0 and z[-1] == 1.0
        assert np.all(np.diff(z) > 0)
        assert z[1] < 1.0 / 128 / 4  # much finer than uniform near walls

    def test_layer_point_count(self):
        z = stretched_grid(1.0, 160, 3.5)
        assert layer_points(z, 1e-2) >= 8

    def test_unresolved_layer_warns(self):
        grid = GridConfig(Nz=16, stretch=0.5, Nh=1, dt=1e-3, T_final=2e-3)
        with pytest.warns(UnresolvedLayerWarning):
            solve_direct_linear(None, None, 1e-4, 1e-4, 1.0, grid, G)


class TestLinearSolver:
    def test_zero_data_zero_solution(self):
        grid = GridConfig(Nz=32, stretch=2.0, Nh=1, dt=1e-3, T_final=5e-3)
        traj = solve_direct_linear(None, None, 0.1, 0.1, 1.0, grid, G)
        assert np.max(np.abs(traj.uhat)) == 0.0

    def test_divergence_below_solver_tolerance(self):
        grid = GridConfig(Nz=48, stretch=2.0, Nh=1, dt=1e-3, T_final=0.02)
        u0 = SpectralField(G, 1)
        real_pair(u0, (1, 0, 1), 0.3)
        traj = solve_direct_linear(u0, None, 0.1, 0.05, 1.0, grid, G)
        assert np.max(traj.diagnostics["div_max"][1:]) < 1e-10

    def test_energy_nonincreasing_without_wind(self):
        grid = GridConfig(Nz=64, stretch=2.0, Nh=1, dt=5e-4, T_final=0.03)
        u0 = SpectralField(G, 1)
        real_pair(u0, (1, 0, 1), 0.3)
        real_pair(u0, (0, 1, 0), 0.2)
        traj = solve_direct_linear(u0, None, 0.05, 0.02, 1.0, grid, G)
        e = traj.diagnostics["energy"]
        assert np.all(np.diff(e) <= 1e-10 * e[0])

    def test_boundary_conditions_exact(self):
        ws = WindStress(G, {(1, 0): [FrequencyAtom(0.0, [0.2, 0.0])]})
        om = ws.zero_phase()
        grid = GridConfig(Nz=64, stretch=2.5, Nh=1, dt=1e-3, T_final=0.02)
        beta = 2.0
        u0 = SpectralField(G, 1)
        real_pair(u0, (1, 0, 1), 0.1)
        traj = solve_direct_linear(u0, ws, 0.05, 0.05, beta, grid, G, om)
        snap = traj.uhat[-1]
        t_end = traj.times[-1]
        z = traj.z
        for j, kh in enumerate(traj.khs):
            # no slip at the bottom, no flux at both walls
            assert np.max(np.abs(snap[j, :, 0])) < 1e-13
            assert abs(snap[j, 2, -1]) < 1e-13
            # wind stress at the surface via the one-sided stencil
            h1 = z[-1] - z[-2]
            h2 = z[-2] - z[-3]
            c0 = (2 * h1 + h2) / (h1 * (h1 + h2))
            c1 = -(h1 + h2) / (h1 * h2)
            c2 = h1 / (h2 * (h1 + h2))
            sig = beta * ws.fourier_coefficient(t_end, t_end / 0.05, kh, om)
            for comp in range(2):
                du = c0 * snap[j, comp, -1] + c1 * snap[j, comp, -2] + c2 * snap[j, comp, -3]
                assert abs(du - sig[comp]) < 1e-11 * max(1.0, abs(sig[comp]))

    def test_heat_oracle_for_mean_modes(self):
        # independent fine-grid solve of the 1D rotation-diffusion system
        eps, nu = 10.0, 0.05
        u0 = SpectralField(G, 2)
        real_pair(u0, (0, 0, 1), 0.5)
        grid = GridConfig(Nz=128, stretch=1.5, Nh=1, dt=5e-4, T_final=0.05)
        traj = solve_direct_linear(u0, None, eps, nu, 1.0, grid, G)
        j0 = traj.khs.index((0, 0))
        zf = np.linspace(0, 1, 4001)
        prof = _field_on_grid(u0, [(0, 0)], zf)
        sysm = _MeanModeSystem(eps, nu, 5e-4, zf)
        x = np.concatenate([prof[0, 0], prof[0, 1]])
        for _ in range(100):
            x = sysm.step(x, np.zeros(2, dtype=complex))
        fine = np.interp(traj.z, zf, x[: len(zf)].real) + 1j * np.interp(
            traj.z, zf, x[: len(zf)].imag
        )
        assert np.max(np.abs(traj.uhat[-1, j0, 0] - fine)) < 5e-4

    def test_surface_layer_matches_analytic_profile(self):
        # steady wind, several rotation periods: the near-surface velocity
        # approaches the stationary Ekman convolution profile
        eps = nu = 1e-3
        beta = 1.0 / math.sqrt(eps * nu)
        ws = WindStress(G, {(1, 0): [FrequencyAtom(0.0, [0.2, 0.1])]})
        om = ws.zero_phase()
        T = 60 * eps
        grid = GridConfig(Nz=192, stretch=4.0, Nh=1, dt=eps / 40, T_final=T)
        traj = solve_direct_linear(None, ws, eps, nu, beta, grid, G, om)
        params = LayerParams(epsilon=eps, nu=nu, beta=beta, delta=1e-6)
        j = traj.khs.index((1, 0))
        eta = math.sqrt(eps * nu)
        for zeta in (0.5, 1.0, 2.0):
            z_pt = G.a - zeta * eta
            iz = int(np.argmin(np.abs(traj.z - z_pt)))
            zeta_grid = (G.a - traj.z[iz]) / eta
            direct = traj.uhat[-1, j, :2, iz]
            # analytic profile: coefficient of e^{i k_h'.x} of the top layer
            analytic = np.zeros(2, dtype=complex)
            val = top_layer_uh(
                ws, params, 0.0, T / eps, np.zeros(2), np.array([zeta_grid]), om
            )[0]
            val_shift = top_layer_uh(
                ws, params, 0.0, T / eps, np.array([0.25, 0.0]), np.array([zeta_grid]), om
            )[0]
            # extract the (1,0) Fourier coefficient from two sample points
            analytic = 0.5 * (val + val_shift / np.exp(2j * np.pi * 0.25))
            assert np.linalg.norm(direct - analytic) < 0.2 * max(
                np.linalg.norm(analytic), 1e-12
            )


class TestFiltering:
    def test_filtered_rotating_mode_is_constant(self):
        eps = 0.05
        ms = mode_set(G, 2)
        lam = ms.lam[ms.index[(1, 0, 1)]]
        khs = [(k1, k2) for k1 in range(-1, 2) for k2 in range(-1, 2)]
        z = stretched_grid(1.0, 96, 2.0)
        times = np.linspace(0, 0.05, 6)
        snaps = []
        for t in times:
            ft = SpectralField(G, 2)
            ft[(1, 0, 1)] = 0.3 * np.exp(-1j * lam * t / eps)
            snaps.append(_field_on_grid(ft, khs, z))
        art = DirectTrajectory(G, khs, z, times, np.array(snaps), eps, eps, 1.0)
        filt = filter_project(art, G, 2, eps)
        # residual drift comes from quadrature cross-talk between +-k3
        # modes rotating at different phases; stays at projection accuracy
        assert np.max(np.abs(filt.coeffs - filt.coeffs[0])) < 1e-6

    def test_zero_field_projects_to_zero(self):
        khs = [(0, 0)]
        z = stretched_grid(1.0, 32, 2.0)
        snap = np.zeros((1, 3, 33), dtype=complex)
        f = project_snapshot(G, 1, khs, z, snap)
        assert f.norm() == 0.0

    def test_projection_roundtrip(self):
        rng = np.random.default_rng(0)
        khs = [(k1, k2) for k1 in range(-2, 3) for k2 in range(-2, 3)]
        z = stretched_grid(1.0, 128, 2.0)
        f = SpectralField(G, 2)
        real_pair(f, (1, 0, 1), 0.3 + 0.1j)
        real_pair(f, (0, 1, 2), -0.2j)
        real_pair(f, (1, 1, 0), 0.15)
        snap = _field_on_grid(f, khs, z)
        back = project_snapshot(G, 2, khs, z, snap)
        assert (back - f).norm() < 1e-6

    def test_filtered_trajectory_varies_slowly(self):
        # the filtered coefficients drift on the slow scale: their finite
        # differences stay bounded as eps decreases
        ws = WindStress(G, {(1, 0): [FrequencyAtom(0.0, [0.1, 0.0])]})
        om = ws.zero_phase()
        u0 = SpectralField(G, 1)
        real_pair(u0, (1, 0, 1), 0.2)
        rates = []
        for eps in (0.05, 0.0125):
            grid = GridConfig(
                Nz=96, stretch=3.0, Nh=1, dt=eps / 20, T_final=0.1,
                save_every=max(1, int(0.01 / (eps / 20))),
            )
            traj = solve_direct_linear(u0, ws, eps, eps, 1.0 / eps, grid, G, om)
            filt = filter_project(traj, G, 1, eps)
            d = np.diff(filt.coeffs, axis=0) / np.diff(filt.times)[:, None]
            rates.append(np.max(np.abs(d)))
        assert rates[1] < 3.0 * rates[0] + 1.0


class TestConvergenceStudy:
    def test_zero_data_zero_errors(self):
        grid = GridConfig(Nz=48, stretch=2.5, Nh=1, dt=1.0, T_final=0.05)
        u0 = SpectralField(G, 1)
        rows = convergence_study(u0, None, [0.1, 0.05], G, 1, grid)
        for r in rows:
            assert r.err_linf_l2 == 0.0 and r.err_l2_h10 == 0.0

    def test_errors_decrease_smoke(self):
        ms = mode_set(G, 1)
        lam = float(ms.lam[ms.index[(1, 0, 1)]])
        ws = WindStress(
            G,
            {(1, 0): [FrequencyAtom(-lam, [0.15, 0.05j]), FrequencyAtom(0.0, [0.1, 0.0])]},
        )
        om = ws.random_phase(np.random.default_rng(1))
        u0 = SpectralField(G, 1)
        real_pair(u0, (1, 0, 1), 0.2)
        real_pair(u0, (0, 1, 0), 0.15)
        grid = GridConfig(Nz=128, stretch=3.5, Nh=1, dt=1.0, T_final=0.2)
        rows = convergence_study(
            u0, ws, [1e-1, 3e-2], G, 1, grid, om, envelope_dt=1e-3
        )
        assert rows[1].err_linf_l2 < rows[0].err_linf_l2
        assert rows[1].err_l2_h10 < rows[0].err_l2_h10


class TestNonlinearVariant:
    def test_small_amplitude_matches_linear(self):
        u0 = SpectralField(G, 1)
        real_pair(u0, (1, 0, 1), 0.02)
        grid = GridConfig(Nz=48, stretch=2.0, Nh=1, dt=2e-3, T_final=0.02)
        lin = solve_direct_linear(u0, None, 0.5, 0.05, 1.0, grid, G)
        non = solve_direct_nonlinear(u0, None, 0.5, 0.05, 1.0, grid, G)
        scale = np.max(np.abs(lin.uhat[-1]))
        assert np.max(np.abs(lin.uhat[-1] - non.uhat[-1])) < 0.05 * scale

    def test_runs_with_wind(self):
        ws = WindStress(G, {(1, 0): [FrequencyAtom(0.0, [0.1, 0.0])]})
        om = ws.zero_phase()
        grid = GridConfig(Nz=40, stretch=2.0, Nh=1, dt=2e-3, T_final=0.01)
        traj = solve_direct_nonlinear(None, ws, 0.1, 0.05, 2.0, grid, G, om)
        assert np.isfinite(traj.diagnostics["energy"]).all()
