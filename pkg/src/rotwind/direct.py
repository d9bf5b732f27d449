"""Direct solver for the rotating system at finite eps, nu.

Fourier in the horizontal (the wind has finitely many modes, truncations
are small), second-order finite differences on a tanh-stretched vertical
grid resolving the sqrt(eps nu) layers.  Each horizontal mode evolves as
an independent saddle system (velocity nodes, pressure at midpoints)
advanced by the trapezoidal rule with the incompressibility constraint
and boundary conditions imposed exactly at the new time level:

    no slip at z = 0, wind stress d_z u_h = beta sigma^eps at z = a,
    no flux through either wall.

Filtering the solution through the rotation group and projecting on the
eigenbasis yields trajectories comparable with the envelope solution.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import simpson
from scipy.sparse.linalg import splu

from .envelope import EnvelopeConfig, TrajectoryRecord, solve_envelope
from .forcing import PhasePoint, WindStress
from .geometry import SpectralField, TorusGeometry, mode_set


@dataclass
class GridConfig:
    Nz: int
    stretch: float
    Nh: int
    dt: float
    T_final: float
    save_every: int = 1
    min_layer_points: int = 8

    def __post_init__(self):
        if self.Nz < 8:
            raise ValueError("Nz too small")
        if self.dt <= 0 or self.T_final <= 0:
            raise ValueError("dt and T_final must be positive")


def stretched_grid(a: float, Nz: int, stretch: float) -> np.ndarray:
    """tanh-clustered nodes on [0, a], symmetric about the midplane."""
    s = np.linspace(0.0, 1.0, Nz + 1)
    if stretch <= 0:
        return a * s
    return 0.5 * a * (1.0 + np.tanh(stretch * (2 * s - 1.0)) / math.tanh(stretch))


def layer_points(z: np.ndarray, thickness: float) -> int:
    """Grid points within `thickness` of the nearer wall (min of the two)."""
    a = z[-1]
    return int(min(np.sum(z <= thickness), np.sum(z >= a - thickness)))


class UnresolvedLayerWarning(UserWarning):
    pass


def _d2_rows(z: np.ndarray):
    """Nonuniform 3-point second-derivative coefficients at interior nodes."""
    hm = z[1:-1] - z[:-2]
    hp = z[2:] - z[1:-1]
    lo = 2.0 / (hm * (hm + hp))
    mid = -2.0 / (hm * hp)
    hi = 2.0 / (hp * (hm + hp))
    return lo, mid, hi


def _one_sided_first_derivative(z: np.ndarray):
    """Second-order 3-point backward first derivative at the last node."""
    h1 = z[-1] - z[-2]
    h2 = z[-2] - z[-3]
    c0 = (2 * h1 + h2) / (h1 * (h1 + h2))
    c1 = -(h1 + h2) / (h1 * h2)
    c2 = h1 / (h2 * (h1 + h2))
    return c0, c1, c2  # multiply u[-1], u[-2], u[-3]


class _ModeSystem:
    """Trapezoidal stepper for one horizontal mode (kh != 0)."""

    def __init__(self, khp, eps, nu, dt, z):
        M = len(z) - 1
        self.M = M
        self.z = z
        self.khp = khp
        zm = 0.5 * (z[:-1] + z[1:])
        kh2 = float(khp[0] ** 2 + khp[1] ** 2)
        n_u = 3 * (M + 1)
        n = n_u + M
        lo, mid, hi = _d2_rows(z)

        def idx(comp, i):
            return comp * (M + 1) + i

        L = sp.lil_matrix((n, n), dtype=complex)  # spatial operator on u rows
        for comp in range(3):
            for i in range(1, M):
                r = idx(comp, i)
                L[r, idx(comp, i - 1)] += -nu * lo[i - 1]
                L[r, idx(comp, i)] += kh2 - nu * mid[i - 1]
                L[r, idx(comp, i + 1)] += -nu * hi[i - 1]
        for i in range(1, M):
            L[idx(0, i), idx(1, i)] += -1.0 / eps
            L[idx(1, i), idx(0, i)] += 1.0 / eps

        G = sp.lil_matrix((n, n), dtype=complex)  # pressure gradient on u rows
        for i in range(1, M):
            dz = zm[i] - zm[i - 1]
            wl = (zm[i] - z[i]) / dz
            wr = (z[i] - zm[i - 1]) / dz
            p_l = n_u + (i - 1)
            p_r = n_u + i
            G[idx(0, i), p_l] += 1j * khp[0] * wl
            G[idx(0, i), p_r] += 1j * khp[0] * wr
            G[idx(1, i), p_l] += 1j * khp[1] * wl
            G[idx(1, i), p_r] += 1j * khp[1] * wr
            G[idx(2, i), p_l] += -1.0 / dz
            G[idx(2, i), p_r] += 1.0 / dz

        A = sp.lil_matrix((n, n), dtype=complex)
        B = sp.lil_matrix((n, n), dtype=complex)
        inv_dt = 1.0 / dt
        Lc = L.tocsr()
        Gc = G.tocsr()
        for comp in range(3):
            for i in range(1, M):
                r = idx(comp, i)
                A[r, r] += inv_dt
                B[r, r] += inv_dt
        A = (A + 0.5 * Lc + Gc).tolil()
        B = (B - 0.5 * Lc).tolil()
        # boundary rows
        for comp in range(3):
            r = idx(comp, 0)
            A.rows[r], A.data[r] = [r], [1.0]  # u(0) = 0
            B.rows[r], B.data[r] = [], []
        r = idx(2, M)
        A.rows[r], A.data[r] = [r], [1.0]  # u3(a) = 0
        B.rows[r], B.data[r] = [], []
        c0, c1, c2 = _one_sided_first_derivative(z)
        for comp in range(2):
            r = idx(comp, M)
            A.rows[r] = [idx(comp, M - 2), idx(comp, M - 1), idx(comp, M)]
            A.data[r] = [c2, c1, c0]
            B.rows[r], B.data[r] = [], []
        # continuity rows at midpoints
        for j in range(M):
            r = n_u + j
            h = z[j + 1] - z[j]
            A.rows[r] = sorted(
                {idx(0, j), idx(0, j + 1), idx(1, j), idx(1, j + 1), idx(2, j), idx(2, j + 1)}
            )
            row = {k: 0j for k in A.rows[r]}
            row[idx(0, j)] += 0.5j * khp[0]
            row[idx(0, j + 1)] += 0.5j * khp[0]
            row[idx(1, j)] += 0.5j * khp[1]
            row[idx(1, j + 1)] += 0.5j * khp[1]
            row[idx(2, j)] += -1.0 / h
            row[idx(2, j + 1)] += 1.0 / h
            A.data[r] = [row[k] for k in A.rows[r]]
            B.rows[r], B.data[r] = [], []
        self.n_u = n_u
        self.n = n
        self.lu = splu(A.tocsc())
        self.B = B.tocsr()
        self.neumann_rows = (idx(0, M), idx(1, M))

    def step(self, x: np.ndarray, bc_sigma: np.ndarray) -> np.ndarray:
        rhs = self.B @ x
        rhs[self.neumann_rows[0]] = bc_sigma[0]
        rhs[self.neumann_rows[1]] = bc_sigma[1]
        return self.lu.solve(rhs)


class _MeanModeSystem:
    """kh = 0: u3 = 0 by incompressibility; 2-component rotation-diffusion."""

    def __init__(self, eps, nu, dt, z):
        M = len(z) - 1
        self.M = M
        n = 2 * (M + 1)
        lo, mid, hi = _d2_rows(z)
        L = sp.lil_matrix((n, n), dtype=complex)
        for comp in range(2):
            for i in range(1, M):
                r = comp * (M + 1) + i
                L[r, comp * (M + 1) + i - 1] += -nu * lo[i - 1]
                L[r, comp * (M + 1) + i] += -nu * mid[i - 1]
                L[r, comp * (M + 1) + i + 1] += -nu * hi[i - 1]
        for i in range(1, M):
            L[i, (M + 1) + i] += -1.0 / eps
            L[(M + 1) + i, i] += 1.0 / eps
        A = sp.lil_matrix((n, n), dtype=complex)
        B = sp.lil_matrix((n, n), dtype=complex)
        for comp in range(2):
            for i in range(1, M):
                r = comp * (M + 1) + i
                A[r, r] += 1.0 / dt
                B[r, r] += 1.0 / dt
        Lc = L.tocsr()
        A = (A + 0.5 * Lc).tolil()
        B = (B - 0.5 * Lc).tolil()
        for comp in range(2):
            r = comp * (M + 1)
            A.rows[r], A.data[r] = [r], [1.0]
            B.rows[r], B.data[r] = [], []
        c0, c1, c2 = _one_sided_first_derivative(z)
        for comp in range(2):
            r = comp * (M + 1) + M
            A.rows[r] = [comp * (M + 1) + M - 2, comp * (M + 1) + M - 1, r]
            A.data[r] = [c2, c1, c0]
            B.rows[r], B.data[r] = [], []
        self.lu = splu(A.tocsc())
        self.B = B.tocsr()
        self.neumann_rows = (M, 2 * M + 1)

    def step(self, x: np.ndarray, bc_sigma: np.ndarray) -> np.ndarray:
        rhs = self.B @ x
        rhs[self.neumann_rows[0]] = bc_sigma[0]
        rhs[self.neumann_rows[1]] = bc_sigma[1]
        return self.lu.solve(rhs)


@dataclass
class DirectTrajectory:
    geometry: TorusGeometry
    khs: list
    z: np.ndarray
    times: np.ndarray
    uhat: np.ndarray  # (n_saves, n_kh, 3, Nz+1)
    epsilon: float
    nu: float
    beta: float
    diagnostics: dict = field(default_factory=dict)

    def energy(self, i: int) -> float:
        vol = self.geometry.a1 * self.geometry.a2
        dens = np.sum(np.abs(self.uhat[i]) ** 2, axis=(0, 1))
        return float(vol * simpson(dens, x=self.z))


def _kh_list(geom: TorusGeometry, Nh: int) -> list:
    return [
        (k1, k2)
        for k1 in range(-Nh, Nh + 1)
        for k2 in range(-Nh, Nh + 1)
    ]


def _field_on_grid(u0: SpectralField, khs, z) -> np.ndarray:
    """Per-mode vertical profiles of a spectral field on the grid nodes."""
    ms = u0.mode_set()
    out = np.zeros((len(khs), 3, len(z)), dtype=complex)
    kh_pos = {kh: j for j, kh in enumerate(khs)}
    for i, k in enumerate(ms.modes):
        c = u0.data[i]
        if c == 0:
            continue
        j = kh_pos.get((k[0], k[1]))
        if j is None:
            continue
        k3p = ms.kprime[i, 2]
        out[j, 0] += c * ms.n[i, 0] * np.cos(k3p * z)
        out[j, 1] += c * ms.n[i, 1] * np.cos(k3p * z)
        out[j, 2] += c * ms.n[i, 2] * np.sin(k3p * z)
    return out


def solve_direct_linear(
    u0: SpectralField | None,
    ws: WindStress | None,
    eps: float,
    nu: float,
    beta: float,
    grid: GridConfig,
    geom: TorusGeometry,
    omega: PhasePoint | None = None,
    warn_unresolved: bool = True,
) -> DirectTrajectory:
    """Advance the linearized rotating system; exact discrete BCs each step."""
    import warnings

    z = stretched_grid(geom.a, grid.Nz, grid.stretch)
    thick = math.sqrt(eps * nu)
    if layer_points(z, thick) < grid.min_layer_points and warn_unresolved:
        warnings.warn(
            f"only {layer_points(z, thick)} grid points inside the "
            f"sqrt(eps nu) = {thick:.2e} layer (want {grid.min_layer_points})",
            UnresolvedLayerWarning,
        )
    khs = _kh_list(geom, grid.Nh)
    if ws is not None:
        missing = [kh for kh in ws.all_kh() if kh not in khs]
        if missing:
            raise ValueError(f"wind modes outside the grid truncation: {missing}")
    M = grid.Nz
    systems = {}
    for kh in khs:
        khp = np.array([2 * np.pi * kh[0] / geom.a1, 2 * np.pi * kh[1] / geom.a2])
        if kh == (0, 0):
            systems[kh] = _MeanModeSystem(eps, nu, grid.dt, z)
        else:
            systems[kh] = _ModeSystem(khp, eps, nu, grid.dt, z)

    profiles = (
        _field_on_grid(u0, khs, z)
        if u0 is not None
        else np.zeros((len(khs), 3, M + 1), dtype=complex)
    )
    states = {}
    for j, kh in enumerate(khs):
        if kh == (0, 0):
            x = np.zeros(2 * (M + 1), dtype=complex)
            x[: M + 1] = profiles[j, 0]
            x[M + 1 :] = profiles[j, 1]
        else:
            x = np.zeros(3 * (M + 1) + M, dtype=complex)
            for comp in range(3):
                x[comp * (M + 1) : (comp + 1) * (M + 1)] = profiles[j, comp]
        states[kh] = x

    def snapshot():
        out = np.zeros((len(khs), 3, M + 1), dtype=complex)
        for j, kh in enumerate(khs):
            x = states[kh]
            if kh == (0, 0):
                out[j, 0] = x[: M + 1]
                out[j, 1] = x[M + 1 :]
            else:
                for comp in range(3):
                    out[j, comp] = x[comp * (M + 1) : (comp + 1) * (M + 1)]
        return out

    def div_max(snap):
        worst = 0.0
        for j, kh in enumerate(khs):
            if kh == (0, 0):
                continue
            khp = np.array([2 * np.pi * kh[0] / geom.a1, 2 * np.pi * kh[1] / geom.a2])
            mid_h = 0.5 * (snap[j, :2, :-1] + snap[j, :2, 1:])
            dz = np.diff(z)
            div = (
                1j * khp[0] * mid_h[0]
                + 1j * khp[1] * mid_h[1]
                + np.diff(snap[j, 2]) / dz
            )
            worst = max(worst, float(np.max(np.abs(div))))
        return worst

    n_steps = int(round(grid.T_final / grid.dt))
    times = [0.0]
    snaps = [snapshot()]
    divs = [div_max(snaps[0])]
    for n in range(n_steps):
        t_new = (n + 1) * grid.dt
        for kh in khs:
            if ws is not None:
                sig = beta * ws.fourier_coefficient(t_new, t_new / eps, kh, omega)
            else:
                sig = np.zeros(2, dtype=complex)
            states[kh] = systems[kh].step(states[kh], sig)
        if (n + 1) % grid.save_every == 0 or n == n_steps - 1:
            times.append(t_new)
            snaps.append(snapshot())
            divs.append(div_max(snaps[-1]))
    traj = DirectTrajectory(
        geom,
        khs,
        z,
        np.array(times),
        np.array(snaps),
        eps,
        nu,
        beta,
        {"div_max": np.array(divs)},
    )
    traj.diagnostics["energy"] = np.array([traj.energy(i) for i in range(len(times))])
    return traj


# ---------------------------------------------------------------------------
# filtering and comparison
# ---------------------------------------------------------------------------


def project_snapshot(
    geom: TorusGeometry, N: int, khs, z, snap: np.ndarray
) -> SpectralField:
    """Project grid profiles onto the eigenbasis (Simpson in z, exact in x_h)."""
    ms = mode_set(geom, N)
    out = SpectralField(geom, N)
    kh_pos = {kh: j for j, kh in enumerate(khs)}
    vol = geom.a1 * geom.a2
    for i, k in enumerate(ms.modes):
        j = kh_pos.get((k[0], k[1]))
        if j is None:
            continue
        k3p = ms.kprime[i, 2]
        integrand = (
            np.conj(ms.n[i, 0]) * np.cos(k3p * z) * snap[j, 0]
            + np.conj(ms.n[i, 1]) * np.cos(k3p * z) * snap[j, 1]
            + np.conj(ms.n[i, 2]) * np.sin(k3p * z) * snap[j, 2]
        )
        out.data[i] = vol * simpson(integrand, x=z)
    return out


def filter_project(
    traj: DirectTrajectory, geom: TorusGeometry, N: int, eps: float
) -> TrajectoryRecord:
    """Project every saved snapshot and undo the fast rotation phases."""
    ms = mode_set(geom, N)
    coeffs = np.zeros((len(traj.times), len(ms)), dtype=complex)
    for i, t in enumerate(traj.times):
        f = project_snapshot(geom, N, traj.khs, traj.z, traj.uhat[i])
        coeffs[i] = f.data * np.exp(1j * ms.lam * (t / eps))
    energy = np.sum(np.abs(coeffs) ** 2, axis=1)
    return TrajectoryRecord(
        geom, N, traj.times.copy(), coeffs, {"energy": energy}
    )


def trajectory_errors(
    filtered: TrajectoryRecord, envelope: TrajectoryRecord
) -> tuple[float, float]:
    """(sup-in-t L2, time-integrated H^{1,0}) distance of two trajectories.

    Envelope values are linearly interpolated onto the filtered times.
    """
    ms = mode_set(filtered.geometry, filtered.truncation)
    w_h = 1.0 + ms.kh_norm**2
    sup_l2 = 0.0
    h10_sq = []
    for i, t in enumerate(filtered.times):
        j = np.searchsorted(envelope.times, t)
        j = min(max(j, 1), len(envelope.times) - 1)
        t0, t1 = envelope.times[j - 1], envelope.times[j]
        lam = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        ref = (1 - lam) * envelope.coeffs[j - 1] + lam * envelope.coeffs[j]
        diff = filtered.coeffs[i] - ref
        sup_l2 = max(sup_l2, float(np.linalg.norm(diff)))
        h10_sq.append(float(np.sum(w_h * np.abs(diff) ** 2)))
    l2h10 = float(np.sqrt(np.trapezoid(h10_sq, filtered.times)))
    return sup_l2, l2h10


@dataclass
class ConvergenceRow:
    epsilon: float
    nu: float
    beta: float
    err_linf_l2: float
    err_l2_h10: float
    runtime_s: float


def convergence_study(
    u0: SpectralField,
    ws: WindStress | None,
    eps_list,
    geom: TorusGeometry,
    N: int,
    grid_template: GridConfig,
    omega: PhasePoint | None = None,
    beta_scale: float = 1.0,
    envelope_dt: float = 1e-3,
    delta: float = 1e-3,
    steps_per_eps: int = 20,
) -> list[ConvergenceRow]:
    """Compare filtered direct solutions against the envelope solution.

    Runs with nu = eps and beta = beta_scale/eps (so beta sqrt(eps nu) =
    beta_scale stays fixed); in that regime the envelope equation is the
    same for every eps and is solved once.
    """
    cfg = EnvelopeConfig(
        epsilon=eps_list[0],
        nu=eps_list[0],
        beta=beta_scale / eps_list[0],
        delta=delta,
        N=N,
        dt=envelope_dt,
        T_final=grid_template.T_final,
    )
    env = solve_envelope(u0, ws, cfg, omega)
    rows = []
    for eps in eps_list:
        nu = eps
        beta = beta_scale / eps
        t0 = _time.perf_counter()
        grid = GridConfig(
            Nz=grid_template.Nz,
            stretch=grid_template.stretch,
            Nh=grid_template.Nh,
            dt=eps / steps_per_eps,
            T_final=grid_template.T_final,
            save_every=max(1, int(round(0.01 / (eps / steps_per_eps)))),
            min_layer_points=grid_template.min_layer_points,
        )
        traj = solve_direct_linear(u0, ws, eps, nu, beta, grid, geom, omega)
        filt = filter_project(traj, geom, N, eps)
        e1, e2 = trajectory_errors(filt, env)
        rows.append(
            ConvergenceRow(eps, nu, beta, e1, e2, _time.perf_counter() - t0)
        )
    return rows


# ---------------------------------------------------------------------------
# optional low-resolution nonlinear variant
# ---------------------------------------------------------------------------


class _Collocation:
    """Horizontal collocation transforms for the convective term.

    Direct DFT matrices on a (3 Nh + 2)^2 grid: products of band-Nh fields
    are projected back without aliasing into the retained band.
    """

    def __init__(self, geom: TorusGeometry, khs):
        self.khs = khs
        n_c = 3 * max(max(abs(k1), abs(k2)) for k1, k2 in khs) + 2
        x1 = np.arange(n_c) * (geom.a1 / n_c)
        x2 = np.arange(n_c) * (geom.a2 / n_c)
        k1 = np.array([kh[0] for kh in khs])
        k2 = np.array([kh[1] for kh in khs])
        self.kp = np.stack(
            [2 * np.pi * k1 / geom.a1, 2 * np.pi * k2 / geom.a2], axis=1
        )
        ph1 = np.exp(2j * np.pi * np.outer(np.arange(n_c), k1) / n_c)
        ph2 = np.exp(2j * np.pi * np.outer(np.arange(n_c), k2) / n_c)
        self.fwd = (ph1[:, None, :] * ph2[None, :, :]).reshape(n_c * n_c, len(khs))
        self.inv = np.conj(self.fwd).T / (n_c * n_c)

    def to_phys(self, modal: np.ndarray) -> np.ndarray:
        # modal: (n_kh, ...) -> (n_pts, ...)
        return np.tensordot(self.fwd, modal, axes=(1, 0))

    def to_modal(self, phys: np.ndarray) -> np.ndarray:
        return np.tensordot(self.inv, phys, axes=(1, 0))


def _convective_term(colloc: _Collocation, snap: np.ndarray, z: np.ndarray):
    """(u . grad) u per mode and node: snap is (n_kh, 3, Nz+1)."""
    n_kh, _, nz = snap.shape
    dudx = 1j * colloc.kp[:, 0][:, None, None] * snap
    dudy = 1j * colloc.kp[:, 1][:, None, None] * snap
    dudz = np.empty_like(snap)
    dz = np.gradient(z)
    for c in range(3):
        dudz[:, c, :] = np.gradient(snap[:, c, :], z, axis=1)
    u_p = colloc.to_phys(snap)
    dx_p = colloc.to_phys(dudx)
    dy_p = colloc.to_phys(dudy)
    dz_p = colloc.to_phys(dudz)
    conv_p = (
        u_p[:, 0:1, :] * dx_p + u_p[:, 1:2, :] * dy_p + u_p[:, 2:3, :] * dz_p
    )
    return colloc.to_modal(conv_p)


def solve_direct_nonlinear(
    u0: SpectralField | None,
    ws: WindStress | None,
    eps: float,
    nu: float,
    beta: float,
    grid: GridConfig,
    geom: TorusGeometry,
    omega: PhasePoint | None = None,
) -> DirectTrajectory:
    """Direct solve with the explicit (AB2) convective term at collocation.

    Shares the implicit machinery of the linear solver; intended for small
    truncations as a qualitative cross-check of the linear study.
    """
    z = stretched_grid(geom.a, grid.Nz, grid.stretch)
    khs = _kh_list(geom, grid.Nh)
    M = grid.Nz
    systems = {}
    for kh in khs:
        khp = np.array([2 * np.pi * kh[0] / geom.a1, 2 * np.pi * kh[1] / geom.a2])
        systems[kh] = (
            _MeanModeSystem(eps, nu, grid.dt, z)
            if kh == (0, 0)
            else _ModeSystem(khp, eps, nu, grid.dt, z)
        )
    colloc = _Collocation(geom, khs)
    profiles = (
        _field_on_grid(u0, khs, z)
        if u0 is not None
        else np.zeros((len(khs), 3, M + 1), dtype=complex)
    )
    states = {}
    for j, kh in enumerate(khs):
        if kh == (0, 0):
            x = np.zeros(2 * (M + 1), dtype=complex)
            x[: M + 1] = profiles[j, 0]
            x[M + 1 :] = profiles[j, 1]
        else:
            x = np.zeros(3 * (M + 1) + M, dtype=complex)
            for comp in range(3):
                x[comp * (M + 1) : (comp + 1) * (M + 1)] = profiles[j, comp]
        states[kh] = x

    def snapshot():
        out = np.zeros((len(khs), 3, M + 1), dtype=complex)
        for j, kh in enumerate(khs):
            x = states[kh]
            if kh == (0, 0):
                out[j, 0] = x[: M + 1]
                out[j, 1] = x[M + 1 :]
            else:
                for comp in range(3):
                    out[j, comp] = x[comp * (M + 1) : (comp + 1) * (M + 1)]
        return out

    n_steps = int(round(grid.T_final / grid.dt))
    times = [0.0]
    snaps = [snapshot()]
    conv_prev = None
    for n in range(n_steps):
        t_new = (n + 1) * grid.dt
        snap = snapshot()
        conv = _convective_term(colloc, snap, z)
        ab2 = conv if conv_prev is None else 1.5 * conv - 0.5 * conv_prev
        conv_prev = conv
        for j, kh in enumerate(khs):
            if ws is not None:
                sig = beta * ws.fourier_coefficient(t_new, t_new / eps, kh, omega)
            else:
                sig = np.zeros(2, dtype=complex)
            sysk = systems[kh]
            rhs_extra = np.zeros_like(states[kh])
            if kh == (0, 0):
                rhs_extra[1:M] = -ab2[j, 0, 1:M]
                rhs_extra[M + 2 : 2 * M + 1] = -ab2[j, 1, 1:M]
            else:
                for comp in range(3):
                    sl = slice(comp * (M + 1) + 1, comp * (M + 1) + M)
                    rhs_extra[sl] = -ab2[j, comp, 1:M]
            rhs = sysk.B @ states[kh] + rhs_extra
            rhs[sysk.neumann_rows[0]] = sig[0]
            rhs[sysk.neumann_rows[1]] = sig[1]
            states[kh] = sysk.lu.solve(rhs)
        if (n + 1) % grid.save_every == 0 or n == n_steps - 1:
            times.append(t_new)
            snaps.append(snapshot())
    traj = DirectTrajectory(
        geom, khs, z, np.array(times), np.array(snaps), eps, nu, beta, {}
    )
    traj.diagnostics["energy"] = np.array([traj.energy(i) for i in range(len(times))])
    return traj
