"""Ekman pumping operators and the time-averaging that produces them.

The boundary layers inject a small vertical flux into the interior; the
divergence-free lift of that flux, filtered by the rotation group and
averaged over the fast time, converges to a source

    Sbar = sqrt(eps nu) S_B(w) + eps nu beta S_T_delta(sigma)

with S_B a nonnegative diagonal damping and S_T the wind-driven pumping.
The delta -> 0 limit of S_T_delta is taken analytically; its prefactor
1/sqrt(a a1 a2) is the one consistent with the time averaging (verified
against the quadrature of S_theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .forcing import PhasePoint, WindStress
from .geometry import Mode, SpectralField, TorusGeometry, mode_set
from .layers import LayerParams, cB3_terms, cT3_terms


class H2ViolationError(Exception):
    """A contributing mode sits too close to the inertial frequencies."""


def pumping_coefficient_A(geom: TorusGeometry, k: Mode) -> complex:
    """Bottom pumping coefficient of mode k.

    A_k = |k_h'|^2 / (2 sqrt(2) a |k'|^2) sum_pm (1 +- lam)/sqrt(1 -+ lam)
    (1 +- i); zero for k_h = 0, and 1/(sqrt(2) a) for k3 = 0.
    """
    if k == (0, 0, 0):
        raise ValueError("zero mode not admitted")
    if (k[0], k[1]) == (0, 0):
        return 0j
    kp = np.array(
        [2 * np.pi * k[0] / geom.a1, 2 * np.pi * k[1] / geom.a2, np.pi * k[2] / geom.a]
    )
    kh2 = kp[0] ** 2 + kp[1] ** 2
    k2 = float(np.dot(kp, kp))
    lam = -kp[2] / math.sqrt(k2)
    if abs(abs(lam) - 1.0) < 1e-15:
        raise ValueError("|lambda| = 1 with k_h != 0 cannot occur")
    s = sum(
        (1 + sign * lam) / math.sqrt(1 - sign * lam) * (1 + 1j * sign)
        for sign in (+1, -1)
    )
    return kh2 / (2 * math.sqrt(2) * geom.a * k2) * s


def pumping_coefficients(geom: TorusGeometry, N: int) -> np.ndarray:
    """Vector of A_k over the mode set (vectorized, zero on k_h = 0)."""
    ms = mode_set(geom, N)
    lam = ms.lam
    kh2 = ms.kh_norm**2
    k2 = ms.kp_norm**2
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (1 + lam) / np.sqrt(1 - lam) * (1 + 1j) + (1 - lam) / np.sqrt(1 + lam) * (
            1 - 1j
        )
        out = kh2 / (2 * math.sqrt(2) * geom.a * k2) * s
    out[kh2 == 0] = 0.0
    return out


_A_CACHE: dict[tuple, np.ndarray] = {}


def _A_vector(geom: TorusGeometry, N: int) -> np.ndarray:
    key = (geom.key(), N)
    if key not in _A_CACHE:
        _A_CACHE[key] = pumping_coefficients(geom, N)
    return _A_CACHE[key]


def S_B_apply(geom: TorusGeometry, w: SpectralField) -> SpectralField:
    """Bottom Ekman pumping: diagonal multiplication by A_k."""
    A = _A_vector(geom, w.truncation)
    return SpectralField(geom, w.truncation, A * w.data)


# ---------------------------------------------------------------------------
# wind-driven pumping at the surface
# ---------------------------------------------------------------------------


def _E_sigma_hat(ws: WindStress, lam: float, kh, omega: PhasePoint, t: float,
                 match_tol: float = 1e-12) -> np.ndarray:
    """Infinite-time filter of sigma_hat(kh) at frequency lam (2-vector)."""
    acc = np.zeros(2, dtype=complex)
    for mu, v in ws.analytic_terms(kh, omega):
        if abs(mu - lam) <= match_tol:
            acc += ws.geometry.a1 * ws.geometry.a2 * v
    return ws.envelope_at(t) * acc


def _perp2(v):
    return np.array([-v[1], v[0]])


def S_T_delta(
    ws: WindStress,
    geom: TorusGeometry,
    delta: float,
    t: float,
    omega: PhasePoint,
    N: int,
) -> SpectralField:
    """Damped surface pumping term, exact for the finite-atom stress.

    S_T^delta = (1/2) (a a1 a2)^(-1/2) sum_k sum_pm (-1)^{k3} |k_h'|/|k'|^2
    E_{-lam_k}[sigma_hat^pm(k_h)] / (-delta + i(lam_k +- 1)) N_k.
    """
    ms = mode_set(geom, N)
    out = SpectralField(geom, N)
    pref = 0.5 / math.sqrt(geom.a * geom.a1 * geom.a2)
    wind_khs = set(ws.all_kh())
    for i, k in enumerate(ms.modes):
        kh = (k[0], k[1])
        if kh == (0, 0) or kh not in wind_khs:
            continue
        lam = float(ms.lam[i])
        E = _E_sigma_hat(ws, -lam, kh, omega, t)
        if not np.any(E):
            continue
        khp = ms.kprime[i, :2]
        val = 0j
        for sign in (+1, -1):
            e_pm = 1j * np.dot(khp, E) + sign * np.dot(_perp2(khp), E)
            val += e_pm / (-delta + 1j * (lam + sign))
        out.data[i] = (
            pref * (-1.0) ** k[2] * ms.kh_norm[i] / ms.kp_norm[i] ** 2 * val
        )
    return out


def S_T_limit(
    ws: WindStress,
    geom: TorusGeometry,
    t: float,
    omega: PhasePoint,
    N: int,
    eta_gap: float = 1e-6,
) -> SpectralField:
    """Analytic delta -> 0 limit of the surface pumping.

    Equals -(a a1 a2)^(-1/2) sum_{k_h != 0} (-1)^{k3}/|k_h'| (lam_k k_h' +
    i (k_h')^perp) . E_{-lam_k}[sigma_hat(k_h)] N_k.  Raises when a
    contributing mode has |lam_k -+ 1| below eta_gap.
    """
    ms = mode_set(geom, N)
    out = SpectralField(geom, N)
    pref = -1.0 / math.sqrt(geom.a * geom.a1 * geom.a2)
    wind_khs = set(ws.all_kh())
    for i, k in enumerate(ms.modes):
        kh = (k[0], k[1])
        if kh == (0, 0) or kh not in wind_khs:
            continue
        lam = float(ms.lam[i])
        E = _E_sigma_hat(ws, -lam, kh, omega, t)
        if not np.any(E):
            continue
        if min(abs(lam - 1.0), abs(lam + 1.0)) < eta_gap:
            raise H2ViolationError(
                f"contributing mode {k} has lambda within {eta_gap} of the "
                "inertial frequencies; use S_T_delta"
            )
        khp = ms.kprime[i, :2]
        contraction = lam * np.dot(khp, E) + 1j * np.dot(_perp2(khp), E)
        out.data[i] = pref * (-1.0) ** k[2] / ms.kh_norm[i] * contraction
    return out


def S_T_mean(ws: WindStress, geom: TorusGeometry, t: float, N: int) -> SpectralField:
    """Expectation of the limit pumping over the phase torus.

    Phased atoms average to zero; only the deterministic zero-frequency
    atoms survive, and they feed exactly the k3 = 0 modes.
    """
    det = WindStress(
        ws.geometry,
        {
            kh: [a for a in atoms if a.mu == 0.0]
            for kh, atoms in ws.modes.items()
            if any(a.mu == 0.0 for a in atoms)
        },
        envelope=ws.envelope,
    )
    return S_T_limit(det, geom, t, det.zero_phase(), N)


def sbar_field(
    geom: TorusGeometry,
    w: SpectralField,
    ws: WindStress,
    params: LayerParams,
    t: float,
    omega: PhasePoint,
    N: int,
) -> SpectralField:
    """Mean source sqrt(eps nu) S_B(w) + eps nu beta S_T_delta(sigma)."""
    root = params.eta
    top = params.epsilon * params.nu * params.beta
    sb = S_B_apply(geom, w.restricted(N) if w.truncation != N else w)
    st = S_T_delta(ws, geom, params.delta, t, omega, N)
    return root * sb + top * st


def sbar_from_limit_formula(
    geom: TorusGeometry,
    w: SpectralField,
    ws: WindStress,
    params: LayerParams,
    t: float,
    omega: PhasePoint,
    N: int,
    match_tol: float = 1e-12,
) -> SpectralField:
    """Mean source via the time-averaging formula (independent route).

    Sbar = (a a1 a2)^(-1/2) sum_k |k_h'|/|k'|^2 E_{-lam_k}[sqrt(eps nu)
    c_B3_hat - (-1)^{k3} beta eps nu c_T3_hat] N_k.
    """
    ms = mode_set(geom, N)
    out = SpectralField(geom, N)
    pref = 1.0 / math.sqrt(geom.a * geom.a1 * geom.a2)
    tb = cB3_terms(w)
    tt = cT3_terms(ws, params, t, omega)
    root = params.eta
    top = params.epsilon * params.nu * params.beta
    for i, k in enumerate(ms.modes):
        kh = (k[0], k[1])
        if kh == (0, 0):
            continue
        lam = float(ms.lam[i])
        e_b = sum(a for f, a in tb.get(kh, []) if abs(f + lam) <= match_tol)
        e_t = sum(a for f, a in tt.get(kh, []) if abs(f + lam) <= match_tol)
        val = root * e_b - (-1.0) ** k[2] * top * e_t
        out.data[i] = pref * ms.kh_norm[i] / ms.kp_norm[i] ** 2 * val
    return out


# ---------------------------------------------------------------------------
# the filtered lift and its time average
# ---------------------------------------------------------------------------


@dataclass
class LiftShape:
    """Vertical shape of the flux lift: v3 = flux * shape(z).

    shape_b carries the bottom flux (1 at z=0, 0 at z=a), shape_t the top
    flux (0 at z=0, 1 at z=a); any smooth choice satisfying the boundary
    values is admissible and must produce the same averaged source.
    """

    name: str
    shape_b: callable
    shape_t: callable
    dshape_b: callable
    dshape_t: callable


def linear_lift(a: float) -> LiftShape:
    return LiftShape(
        "linear",
        lambda z: (a - z) / a,
        lambda z: z / a,
        lambda z: -np.ones_like(z) / a,
        lambda z: np.ones_like(z) / a,
    )


def quadratic_lift(a: float) -> LiftShape:
    return LiftShape(
        "quadratic",
        lambda z: ((a - z) / a) ** 2,
        lambda z: (z / a) ** 2,
        lambda z: -2 * (a - z) / a**2,
        lambda z: 2 * z / a**2,
    )


def _lift_term_amplitudes(
    geom: TorusGeometry, N: int, terms_b: dict, terms_t: dict,
    params: LayerParams, lift: LiftShape, n_z: int = 48,
):
    """Flatten <N_k, d_tau v + e3 ^ v> into (mode index, frequency, amplitude).

    The filtered integrand is then sum amp * e^{i (lam_k + f) tau} on each
    mode; averaging reduces to per-frequency factors.
    """
    ms = mode_set(geom, N)
    nodes, wts = leggauss(n_z)
    z = 0.5 * geom.a * (nodes + 1.0)
    wz = 0.5 * geom.a * wts
    shapes = {
        "b": (lift.shape_b(z), lift.dshape_b(z)),
        "t": (lift.shape_t(z), lift.dshape_t(z)),
    }
    root = params.eta
    top = params.epsilon * params.nu * params.beta
    rows = []  # (mode_index, frequency incl. filter phase, amplitude)
    kh_groups: dict = {}
    for i, k in enumerate(ms.modes):
        kh_groups.setdefault((k[0], k[1]), []).append(i)
    for kh, idxs in kh_groups.items():
        if kh == (0, 0):
            continue
        entries = [("b", root, terms_b.get(kh, [])), ("t", top, terms_t.get(kh, []))]
        if not (entries[0][2] or entries[1][2]):
            continue
        khp = np.array([2 * np.pi * kh[0] / geom.a1, 2 * np.pi * kh[1] / geom.a2])
        kh2 = float(np.dot(khp, khp))
        for i in idxs:
            n = ms.n[i]
            k3p = ms.kprime[i, 2]
            lam = float(ms.lam[i])
            cz = np.cos(k3p * z)
            sz = np.sin(k3p * z)
            nh_dot_ik = np.conj(n[0]) * 1j * khp[0] + np.conj(n[1]) * 1j * khp[1]
            nh_dot_ikperp = np.conj(n[0]) * 1j * (-khp[1]) + np.conj(n[1]) * 1j * khp[0]
            for tag, scale, terms in entries:
                g, dg = shapes[tag]
                i1 = float(np.sum(wz * dg * cz))
                i2 = float(np.sum(wz * g * sz))
                for f, amp in terms:
                    val = (
                        (1j * f * nh_dot_ik + nh_dot_ikperp) / kh2 * i1
                        + 1j * f * np.conj(n[2]) * i2
                    )
                    rows.append((i, lam + f, scale * amp * val * geom.a1 * geom.a2))
    return ms, rows


def stheta_average(
    geom: TorusGeometry,
    w: SpectralField,
    ws: WindStress,
    params: LayerParams,
    t: float,
    omega: PhasePoint,
    theta: float,
    N: int,
    n_steps: int | None = None,
    lift: LiftShape | None = None,
    method: str = "trapezoid",
) -> SpectralField:
    """Average the filtered lift over [0, theta].

    S_theta = (1/theta) int_0^theta L(-tau) P [d_tau v + e3 ^ v] dtau, with
    v the divergence-free lift of the layer fluxes.  The integrand is a
    finite trigonometric sum per mode, so composite-trapezoid quadrature
    (default; n_steps ~ 8 per unit time) reduces to closed per-frequency
    factors; method="exact" integrates analytically instead.
    """
    if lift is None:
        lift = linear_lift(geom.a)
    terms_b = cB3_terms(w)
    terms_t = cT3_terms(ws, params, t, omega)
    ms, rows = _lift_term_amplitudes(geom, N, terms_b, terms_t, params, lift)
    if n_steps is None:
        n_steps = max(int(8 * theta), 64)
    h = theta / n_steps
    out = SpectralField(geom, N)
    for i, f, amp in rows:
        if method == "exact":
            if abs(f) < 1e-15:
                factor = 1.0 + 0j
            else:
                factor = (np.exp(1j * f * theta) - 1.0) / (1j * f * theta)
        else:
            # trapezoid weights summed in closed (geometric) form
            q = np.exp(1j * f * h)
            if abs(f * h) < 1e-12:
                factor = 1.0 + 0j
            else:
                geo = (q ** (n_steps + 1) - 1.0) / (q - 1.0)
                factor = (h / theta) * (geo - 0.5 * (1.0 + q**n_steps))
        out.data[i] += amp * factor
    return out


def sigma_filtered_lift(
    geom: TorusGeometry,
    w: SpectralField,
    ws: WindStress,
    params: LayerParams,
    t: float,
    tau: float,
    omega: PhasePoint,
    N: int,
) -> SpectralField:
    """Instantaneous filtered lift L(-tau) P [d_tau v + e3 ^ v] (linear lift).

    Closed per-mode formula: for k3 != 0 the flux derivative enters with
    weight -i |k_h'|/(k3' |k'|) e^{i lam_k tau}; for k3 = 0 the rotation
    term contributes 1/|k_h'| times the flux itself.
    """
    ms = mode_set(geom, N)
    out = SpectralField(geom, N)
    pref = 1.0 / math.sqrt(geom.a * geom.a1 * geom.a2)
    tb = cB3_terms(w)
    tt = cT3_terms(ws, params, t, omega)
    root = params.eta
    top = params.epsilon * params.nu * params.beta
    for i, k in enumerate(ms.modes):
        kh = (k[0], k[1])
        if kh == (0, 0):
            continue
        lam = float(ms.lam[i])
        cb = [(f, a) for f, a in tb.get(kh, [])]
        ct = [(f, a) for f, a in tt.get(kh, [])]
        if not cb and not ct:
            continue
        if k[2] != 0:
            dcb = sum(1j * f * a * np.exp(1j * f * tau) for f, a in cb)
            dct = sum(1j * f * a * np.exp(1j * f * tau) for f, a in ct)
            val = (
                -1j
                * pref
                * ms.kh_norm[i]
                / (ms.kprime[i, 2] * ms.kp_norm[i])
                * np.exp(1j * lam * tau)
                * (root * dcb - (-1.0) ** k[2] * top * dct)
            )
        else:
            vb = sum(a * np.exp(1j * f * tau) for f, a in cb)
            vt = sum(a * np.exp(1j * f * tau) for f, a in ct)
            val = pref / ms.kh_norm[i] * (root * vb - top * vt)
        out.data[i] = val
    return out
