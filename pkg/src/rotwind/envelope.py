"""Slow-time envelope equation and the decoupled mean-limit system.

The filtered profile w obeys

    dw/dt + Qbar(w,w) - lap_h w + sqrt(nu/eps) S_B(w) + nu beta S_T = 0.

All stiff terms are diagonal in the eigenbasis, so the integrator treats
them with the implicit trapezoidal rule; the quadratic form and the wind
source are advanced with two-step Adams-Bashforth (Heun bootstrap).  On a
non-resonant box the system splits into a 2D Navier-Stokes equation for
the vertical average and linear equations for the fluctuations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forcing import PhasePoint, WindStress
from .geometry import SpectralField, TorusGeometry, mode_set
from .resonance import (
    TriadTable,
    build_triad_table,
    check_nonresonant_torus,
    qbar_apply,
)
from .sources import S_B_apply, S_T_delta, S_T_limit, S_T_mean, _A_vector


class EnvelopeBlowupError(Exception):
    pass


class ResonantTorusError(Exception):
    def __init__(self, report):
        self.report = report
        super().__init__(
            f"torus is resonant at cutoff {report.cutoff}: "
            f"{len(report.violations)} violating pairs"
        )


@dataclass
class EnvelopeConfig:
    epsilon: float
    nu: float
    beta: float
    delta: float  # 0.0 selects the analytic delta -> 0 source
    N: int
    dt: float
    T_final: float
    scheme: str = "imex-cn-ab2"
    seed: int = 0
    output_every: int = 1
    blowup_factor: float = 1e6
    resonance_tol: float = 1e-12
    h2_gap: float = 1e-6

    def __post_init__(self):
        if self.dt <= 0 or self.T_final <= 0:
            raise ValueError("dt and T_final must be positive")
        if self.epsilon <= 0 or self.nu <= 0:
            raise ValueError("epsilon and nu must be positive")


@dataclass
class TrajectoryRecord:
    geometry: TorusGeometry
    truncation: int
    times: np.ndarray
    coeffs: np.ndarray  # (n_saves, n_modes)
    diagnostics: dict = field(default_factory=dict)

    def field(self, i: int) -> SpectralField:
        return SpectralField(self.geometry, self.truncation, self.coeffs[i].copy())

    def __len__(self) -> int:
        return len(self.times)


def _linear_diagonal(geom, N, config) -> np.ndarray:
    ms = mode_set(geom, N)
    damping = math.sqrt(config.nu / config.epsilon) * _A_vector(geom, N)
    return ms.kh_norm**2 + damping


class EnvelopeIntegrator:
    """IMEX stepper: trapezoidal diagonal linear part, AB2 explicit part."""

    def __init__(
        self,
        geom: TorusGeometry,
        config: EnvelopeConfig,
        table: TriadTable | None = None,
        source_fn=None,
        qbar_fn=None,
    ):
        self.geom = geom
        self.config = config
        self.table = table if table is not None else build_triad_table(
            geom, config.N, config.resonance_tol
        )
        self.D = _linear_diagonal(geom, config.N, config)
        dt = config.dt
        self.impl = 1.0 / (1.0 + 0.5 * dt * self.D)
        self.expl = 1.0 - 0.5 * dt * self.D
        self.source_fn = source_fn  # t -> SpectralField (already scaled)
        self.qbar_fn = qbar_fn  # overrides the quadratic term if given
        self._g_prev = None

    def explicit_rhs(self, w: SpectralField, t: float) -> np.ndarray:
        if self.qbar_fn is not None:
            g = -self.qbar_fn(w).data
        else:
            g = -qbar_apply(self.table, w, w).data
        if self.source_fn is not None:
            g = g - self.source_fn(t).data
        return g

    def step(self, w: SpectralField, t: float) -> SpectralField:
        dt = self.config.dt
        g_now = self.explicit_rhs(w, t)
        if self._g_prev is None:
            # Heun bootstrap: predict with Euler-type explicit part, correct
            pred = SpectralField(
                self.geom, self.config.N, self.impl * (self.expl * w.data + dt * g_now)
            )
            g_pred = self.explicit_rhs(pred, t + dt)
            g_eff = 0.5 * (g_now + g_pred)
        else:
            g_eff = 1.5 * g_now - 0.5 * self._g_prev
        self._g_prev = g_now
        return SpectralField(
            self.geom, self.config.N, self.impl * (self.expl * w.data + dt * g_eff)
        )


def _diagnostics(geom, N, config, w: SpectralField, st_scaled: SpectralField | None):
    """(energy, dissipation, pumping, source_work, h01); pumping and source
    work are recorded without their nu/eps prefactors."""
    ms = mode_set(geom, N)
    energy = float(np.sum(np.abs(w.data) ** 2))
    dissipation = float(np.sum(ms.kh_norm**2 * np.abs(w.data) ** 2))
    pumping = float(np.real(np.vdot(w.data, _A_vector(geom, N) * w.data)))
    if st_scaled is not None:
        source_work = float(
            np.real(np.vdot(w.data, st_scaled.data)) / (config.nu * config.beta)
        )
    else:
        source_work = 0.0
    h01 = float(np.sum((1.0 + ms.kprime[:, 2] ** 2) * np.abs(w.data) ** 2))
    return energy, dissipation, pumping, source_work, h01


def make_source_fn(ws, geom, config, omega):
    """Wind source t -> nu*beta*S_T (delta-damped or the analytic limit)."""
    if ws is None:
        return None
    scale = config.nu * config.beta
    if config.delta == 0.0:
        def fn(t):
            return scale * S_T_limit(
                ws, geom, t, omega, config.N, eta_gap=config.h2_gap
            )
    else:
        def fn(t):
            return scale * S_T_delta(ws, geom, config.delta, t, omega, config.N)
    return fn


def solve_envelope(
    u0: SpectralField,
    ws: WindStress | None,
    config: EnvelopeConfig,
    omega: PhasePoint | None = None,
    table: TriadTable | None = None,
    source_fn=None,
    qbar_fn=None,
) -> TrajectoryRecord:
    """Integrate the envelope equation from u0; records diagnostics.

    When config.delta == 0 the analytic source limit is used (raises
    H2ViolationError through S_T_limit if the wind spectrum touches the
    inertial frequencies); otherwise the delta-damped source.
    """
    geom = u0.geometry
    if u0.truncation != config.N:
        u0 = u0.restricted(config.N)
    if source_fn is None:
        source_fn = make_source_fn(ws, geom, config, omega)
    stepper = EnvelopeIntegrator(geom, config, table, source_fn, qbar_fn)
    n_steps = int(round(config.T_final / config.dt))
    times, coeffs, diags = [], [], []
    w = u0.copy()
    # blow-up reference: initial energy plus the linear response scale of
    # the forcing (zero initial data with a wind source is regular)
    forced = (
        source_fn(0.0).norm() * config.T_final if source_fn is not None else 0.0
    )
    e0 = max(float(np.sum(np.abs(w.data) ** 2)), forced**2, 1e-30)

    def record(t, w):
        st = source_fn(t) if source_fn is not None else None
        times.append(t)
        coeffs.append(w.data.copy())
        diags.append(_diagnostics(geom, config.N, config, w, st))

    record(0.0, w)
    for n in range(n_steps):
        t = n * config.dt
        w = stepper.step(w, t)
        if float(np.sum(np.abs(w.data) ** 2)) > config.blowup_factor * e0:
            raise EnvelopeBlowupError(
                f"energy exceeded {config.blowup_factor} x initial at t={t + config.dt}"
            )
        if (n + 1) % config.output_every == 0 or n == n_steps - 1:
            record((n + 1) * config.dt, w)
    d = np.array(diags)
    return TrajectoryRecord(
        geom,
        config.N,
        np.array(times),
        np.array(coeffs),
        {
            "energy": d[:, 0],
            "dissipation": d[:, 1],
            "pumping": d[:, 2],
            "source_work": d[:, 3],
            "h01": d[:, 4],
        },
    )


def energy_budget_residual(traj: TrajectoryRecord, config: EnvelopeConfig) -> float:
    """Max centered-difference defect of
    d/dt(E/2) + dissipation + sqrt(nu/eps) pumping + nu beta source_work = 0."""
    t = traj.times
    e = traj.diagnostics["energy"]
    if len(t) < 3:
        return 0.0
    dt = t[1] - t[0]
    dedt = (e[2:] - e[:-2]) / (2 * dt)
    flux = (
        traj.diagnostics["dissipation"]
        + math.sqrt(config.nu / config.epsilon) * traj.diagnostics["pumping"]
        + config.nu * config.beta * traj.diagnostics["source_work"]
    )
    return float(np.max(np.abs(0.5 * dedt + flux[1:-1])))


# ---------------------------------------------------------------------------
# mean-limit system
# ---------------------------------------------------------------------------


@dataclass
class MeanLimitResult:
    wbar: TrajectoryRecord
    wtilde: TrajectoryRecord
    utilde: list  # one TrajectoryRecord per requested phase point
    nonresonance: object


def horizontal_projection(w: SpectralField) -> SpectralField:
    """Kill every mode with k3 != 0 (the vertical-average part of the field)."""
    ms = w.mode_set()
    out = w.copy()
    out.data[ms.k_int[:, 2] != 0] = 0.0
    return out


def solve_mean_limit(
    u0: SpectralField,
    ws: WindStress | None,
    config: EnvelopeConfig,
    omegas: list | None = None,
    skip_nonresonance_check: bool = False,
) -> MeanLimitResult:
    """Decoupled system: 2D Navier-Stokes for the vertical average, linear
    equations for the deterministic and zero-mean random fluctuations.

    Requires a non-resonant geometry at the working cutoff (checked unless
    skipped); E[w] is then wbar + wtilde, and each utilde solves the
    zero-mean-forced linear equation for its phase draw.
    """
    geom = u0.geometry
    report = None
    if not skip_nonresonance_check:
        report = check_nonresonant_torus(geom, config.N, config.resonance_tol)
        if not report.is_nonresonant:
            raise ResonantTorusError(report)
    table = build_triad_table(geom, config.N, config.resonance_tol)
    u0 = u0.restricted(config.N) if u0.truncation != config.N else u0
    u0_bar = horizontal_projection(u0)
    scale = config.nu * config.beta

    # deterministic 2D solve with the expected source
    if ws is not None:
        st_mean = S_T_mean(ws, geom, 0.0, config.N)
        mean_source = lambda t: scale * (
            S_T_mean(ws, geom, t, config.N) if len(ws.envelope) > 1 else st_mean
        )
    else:
        mean_source = None
    wbar_traj = solve_envelope(
        u0_bar, None, config, table=table, source_fn=mean_source
    )

    # linear solves share the wbar coefficients step by step
    wbar_path = _dense_path(u0_bar, None, config, table, mean_source)

    wtilde_traj = _solve_linear(
        u0 - u0_bar, None, config, table, wbar_path, extra_source=None
    )
    utilde = []
    if ws is not None and omegas:
        st_mean0 = S_T_mean(ws, geom, 0.0, config.N)
        for om in omegas:
            def fluct_source(t, om=om):
                return scale * (S_T_limit(ws, geom, t, om, config.N) - st_mean0)

            utilde.append(
                _solve_linear(
                    SpectralField(geom, config.N),
                    None,
                    config,
                    table,
                    wbar_path,
                    extra_source=fluct_source,
                )
            )
    return MeanLimitResult(wbar_traj, wtilde_traj, utilde, report)


def _dense_path(u0, ws, config, table, source_fn):
    """All per-step coefficient vectors of an envelope solve (for coupling)."""
    geom = u0.geometry
    stepper = EnvelopeIntegrator(geom, config, table, source_fn)
    n_steps = int(round(config.T_final / config.dt))
    path = [u0.data.copy()]
    w = u0.copy()
    for n in range(n_steps):
        w = stepper.step(w, n * config.dt)
        path.append(w.data.copy())
    return path


def _solve_linear(v0, ws, config, table, wbar_path, extra_source):
    """Integrate dv/dt + 2 Qbar(wbar, v) - lap_h v + sqrt(nu/eps) S_B v
    (+ extra_source) = 0 along the stored wbar path."""
    geom = v0.geometry
    counter = [0]

    def qfn(v: SpectralField) -> SpectralField:
        wb = SpectralField(
            geom, config.N, wbar_path[min(counter[0], len(wbar_path) - 1)]
        )
        return 2.0 * qbar_apply(table, wb, v)

    stepper = EnvelopeIntegrator(geom, config, table, extra_source, qfn)
    n_steps = int(round(config.T_final / config.dt))
    times, coeffs, diags = [0.0], [v0.data.copy()], []
    v = v0.copy()
    diags.append(_diagnostics(geom, config.N, config, v, None))
    for n in range(n_steps):
        counter[0] = n
        v = stepper.step(v, n * config.dt)
        if (n + 1) % config.output_every == 0 or n == n_steps - 1:
            times.append((n + 1) * config.dt)
            coeffs.append(v.data.copy())
            diags.append(_diagnostics(geom, config.N, config, v, None))
    d = np.array(diags)
    return TrajectoryRecord(
        geom,
        config.N,
        np.array(times),
        np.array(coeffs),
        {"energy": d[:, 0], "dissipation": d[:, 1], "pumping": d[:, 2],
         "source_work": d[:, 3], "h01": d[:, 4]},
    )


# ---------------------------------------------------------------------------
# structure checks
# ---------------------------------------------------------------------------


@dataclass
class DecouplingReport:
    geometry: TorusGeometry
    truncation: int
    qbar_norm: float
    field_scale: float
    mixed_triads: list  # resonant triads with k3, l3, m3 all nonzero

    @property
    def passed(self) -> bool:
        return self.qbar_norm <= 1e-10 * max(self.field_scale, 1.0)


def decoupling_check(
    geom: TorusGeometry, N: int, rng: np.random.Generator | None = None
) -> DecouplingReport:
    """On a non-resonant box, the quadratic form annihilates fields with
    zero vertical mean; reports the offending triads otherwise."""
    from .geometry import random_real_field

    rng = rng if rng is not None else np.random.default_rng(0)
    table = build_triad_table(geom, N)
    ms = mode_set(geom, N)
    u = random_real_field(geom, N, rng)
    u.data[ms.k_int[:, 2] == 0] = 0.0
    q = qbar_apply(table, u, u)
    msi, mso = table.mode_set_in, table.mode_set_out
    mixed = []
    for t in range(len(table)):
        k = msi.modes[table.ki[t]]
        l = msi.modes[table.li[t]]
        m = mso.modes[table.mi[t]]
        if k[2] != 0 and l[2] != 0:
            mixed.append((k, l, m, table.alpha[t]))
    return DecouplingReport(geom, N, q.norm(), u.norm() ** 2, mixed)


def vorticity_residual(
    wbar_traj: TrajectoryRecord,
    ws: WindStress | None,
    config: EnvelopeConfig,
) -> float:
    """Residual of the 2D vorticity equation along the mean trajectory.

    phi = rot_h wbar obeys d_t phi + wbar.grad phi - lap phi +
    (1/(a sqrt2)) sqrt(nu/eps) phi = -nu beta rot_h E[S_T]_h; transport is
    evaluated by direct Fourier convolution (independent of the triad
    machinery), so this cross-checks the 2D structure of the solver.
    """
    geom = wbar_traj.geometry
    N = wbar_traj.truncation
    ms = mode_set(geom, N)
    root_v = math.sqrt(geom.volume)
    sector = [i for i, k in enumerate(ms.modes) if k[2] == 0]
    khs = {ms.modes[i][:2]: i for i in sector}

    def vort(coeffs):
        return {kh: coeffs[i] * ms.kh_norm[i] / root_v for kh, i in khs.items()}

    def vel(coeffs):
        return {kh: coeffs[i] * ms.n[i, :2] for kh, i in khs.items()}

    if ws is not None:
        st = S_T_mean(ws, geom, 0.0, N)
        rot_source = {
            kh: config.nu * config.beta * st.data[i] * ms.kh_norm[i] / root_v
            for kh, i in khs.items()
        }
    else:
        rot_source = {kh: 0.0 for kh in khs}

    t = wbar_traj.times
    dt = t[1] - t[0]
    worst = 0.0
    damping = math.sqrt(config.nu / config.epsilon) / (geom.a * math.sqrt(2))
    for j in range(1, len(t) - 1):
        phi_m = vort(wbar_traj.coeffs[j - 1])
        phi_0 = vort(wbar_traj.coeffs[j])
        phi_p = vort(wbar_traj.coeffs[j + 1])
        u_0 = vel(wbar_traj.coeffs[j])
        for kh, i in khs.items():
            dphi = (phi_p[kh] - phi_m[kh]) / (2 * dt)
            transport = 0j
            for lh, ul in u_0.items():
                mh = (kh[0] - lh[0], kh[1] - lh[1])
                if mh in khs:
                    mhp = np.array(
                        [2 * np.pi * mh[0] / geom.a1, 2 * np.pi * mh[1] / geom.a2]
                    )
                    transport += np.dot(ul, 1j * mhp) * phi_0[mh]
            lap = -(ms.kh_norm[i] ** 2) * phi_0[kh]
            res = dphi + transport - lap + damping * phi_0[kh] + rot_source[kh]
            worst = max(worst, abs(res))
    return worst
