"""Ekman boundary layers: top (Neumann, stationary), bottom (Dirichlet,
quasi-periodic), the slow resonant layer, and the interior correctors.

Every single-atom evaluation has a Laplace-transform closed form built on

    int_0^inf s^(-1/2) exp(-zeta^2/(4s) - p s) ds = sqrt(pi/p) e^{-zeta sqrt(p)}
    int_0^inf erfc(zeta/(2 sqrt(s))) e^{-p s} ds  = e^{-zeta sqrt(p)} / p

with Re sqrt(p) >= 0 (principal branch).  Panelled Gauss-Legendre
quadrature of the half-line integrals is kept as the independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import erfc

from .forcing import PhasePoint, WindStress
from .geometry import Mode, SpectralField, TorusGeometry, mode_set


@dataclass
class LayerParams:
    """Small parameters of the layer problem."""

    epsilon: float
    nu: float
    beta: float
    delta: float = 1e-3

    def __post_init__(self):
        if min(self.epsilon, self.nu, self.beta) <= 0 or self.delta <= 0:
            raise ValueError("epsilon, nu, beta, delta must all be positive")

    @property
    def eta(self) -> float:
        """Layer thickness sqrt(nu * epsilon)."""
        return math.sqrt(self.nu * self.epsilon)

    def regime_flags(self, nu_over_eps_max=10.0, beta_eta_max=10.0) -> dict:
        """Diagnostics for the fast-rotation regime nu = O(eps),
        beta*sqrt(eps*nu) = O(1)."""
        r1 = self.nu / self.epsilon
        r2 = self.beta * self.eta
        return {
            "nu_over_eps": r1,
            "beta_sqrt_eps_nu": r2,
            "nu_over_eps_ok": r1 <= nu_over_eps_max,
            "beta_scaling_ok": r2 <= beta_eta_max,
        }


def kernel_G_delta(tau, zeta, delta: float):
    """Damped heat-flux kernel zeta/(sqrt(4 pi) tau^(3/2)) e^{-zeta^2/4tau - delta tau}."""
    tau = np.asarray(tau, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be positive")
    if np.any(zeta < 0):
        raise ValueError("zeta must be nonnegative")
    return (
        zeta
        / (math.sqrt(4 * math.pi) * tau**1.5)
        * np.exp(-(zeta**2) / (4 * tau) - delta * tau)
    )


def _sqrt_principal(p):
    """Principal square root, Re >= 0 (decay rates)."""
    r = np.sqrt(np.asarray(p, dtype=complex))
    return np.where(r.real >= 0, r, -r)


def _halfline_sqrt_quad(zeta: float, p: complex, tol: float = 1e-12) -> complex:
    """int_0^inf s^(-1/2) e^{-zeta^2/(4 s) - p s} ds by panelled quadrature.

    A substitution s = r^2 removes the endpoint singularity on [0,1];
    unit panels with 24-node Gauss-Legendre afterwards, stopping when the
    e^{-Re(p) s} envelope is exhausted.
    """
    nodes, wts = leggauss(24)
    # [0,1] with s = r^2, subdivided: the factor e^{-zeta^2/(4 r^2)} has a
    # steep shoulder whose position depends on zeta
    total = 0.0 + 0j
    edges = [0.0, 0.125, 0.25, 0.5, 0.75, 1.0]
    for r_lo, r_hi in zip(edges[:-1], edges[1:]):
        r = r_lo + 0.5 * (r_hi - r_lo) * (nodes + 1.0)
        w = 0.5 * (r_hi - r_lo) * wts
        s = r * r
        with np.errstate(divide="ignore"):
            total += np.sum(w * 2.0 * np.exp(-(zeta**2) / (4 * s) - p * s))
    s_lo = 1.0
    width = 1.0
    while True:
        s_panel = s_lo + 0.5 * width * (nodes + 1.0)
        w_panel = 0.5 * width * wts
        total += np.sum(
            w_panel * np.exp(-(zeta**2) / (4 * s_panel) - p * s_panel) / np.sqrt(s_panel)
        )
        s_lo += width
        if math.exp(-p.real * s_lo) / math.sqrt(s_lo) < tol * max(abs(total), 1.0) * p.real:
            break
        if s_lo > 400.0 / max(p.real, 1e-12):
            break
    return complex(total)


def _halfline_erfc_quad(zeta: float, p: complex, tol: float = 1e-12) -> complex:
    """int_0^inf erfc(zeta/(2 sqrt(s))) e^{-p s} ds by panelled quadrature."""
    nodes, wts = leggauss(24)
    total = 0.0 + 0j
    # subdivide the first unit interval: erfc rises steeply near s = 0
    for s_a, s_b in ((0.0, 0.0625), (0.0625, 0.25), (0.25, 0.5), (0.5, 1.0)):
        s_panel = s_a + 0.5 * (s_b - s_a) * (nodes + 1.0)
        w_panel = 0.5 * (s_b - s_a) * wts
        total += np.sum(
            w_panel * erfc(zeta / (2.0 * np.sqrt(s_panel))) * np.exp(-p * s_panel)
        )
    s_lo = 1.0
    width = 1.0
    while True:
        s_panel = s_lo + 0.5 * width * (nodes + 1.0)
        w_panel = 0.5 * width * wts
        total += np.sum(w_panel * erfc(zeta / (2.0 * np.sqrt(s_panel))) * np.exp(-p * s_panel))
        s_lo += width
        if math.exp(-p.real * s_lo) < tol * max(abs(total), 1.0) * p.real:
            break
        if s_lo > 400.0 / max(p.real, 1e-12):
            break
    return complex(total)


def _perp(v):
    """90-degree rotation (-v2, v1) acting on the last axis."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def top_layer_uh(
    ws: WindStress,
    params: LayerParams,
    t: float,
    tau: float,
    x_h,
    zeta,
    omega: PhasePoint,
    method: str = "closed_form",
) -> np.ndarray:
    """Horizontal top-layer velocity at scaled depth zeta below the surface.

    Convolution of the wind history against the damped rotating heat
    kernel; satisfies the Neumann condition d/dzeta u|_0 = -sqrt(eps nu)
    beta sigma exactly and decays like e^{-zeta Re sqrt(p)}.
    """
    x_h = np.asarray(x_h, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if np.any(zeta < 0):
        raise ValueError("zeta must be nonnegative")
    pref = params.beta * params.eta / math.sqrt(4 * math.pi)
    out = np.zeros(np.broadcast(x_h[..., 0], zeta).shape + (2,), dtype=complex)
    for kh in ws.stored_kh():
        khp = np.array(
            [2 * np.pi * kh[0] / ws.geometry.a1, 2 * np.pi * kh[1] / ws.geometry.a2]
        )
        for conj_side in (False, True):
            kvec = -khp if conj_side else khp
            space = np.exp(1j * (kvec[0] * x_h[..., 0] + kvec[1] * x_h[..., 1]))
            for atom in ws.modes[kh]:
                ph = ws._atom_phase(atom, omega)
                v = atom.coeff * np.exp(1j * ph)
                mu = atom.mu
                if conj_side:
                    v = np.conj(v)
                    mu = -mu
                for sign in (+1, -1):
                    p = params.delta + 1j * (mu - sign)
                    if method == "closed_form":
                        core = np.sqrt(np.pi / p) * np.exp(-zeta * _sqrt_principal(p))
                    else:
                        core = np.vectorize(
                            lambda zz: _halfline_sqrt_quad(float(zz), p)
                        )(zeta)
                    vec = v + 1j * sign * _perp(v)
                    out += pref * np.exp(1j * mu * tau) * (space * core)[..., None] * vec
    return ws.envelope_at(t) * out


def top_layer_u3(
    ws: WindStress,
    params: LayerParams,
    t: float,
    tau: float,
    x_h,
    zeta,
    omega: PhasePoint,
    method: str = "closed_form",
) -> np.ndarray:
    """Vertical top-layer velocity (order eps*nu*beta), from incompressibility."""
    x_h = np.asarray(x_h, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    pref = -params.nu * params.epsilon * params.beta / 2.0
    out = np.zeros(np.broadcast(x_h[..., 0], zeta).shape, dtype=complex)
    for kh in ws.stored_kh():
        khp = np.array(
            [2 * np.pi * kh[0] / ws.geometry.a1, 2 * np.pi * kh[1] / ws.geometry.a2]
        )
        for conj_side in (False, True):
            kvec = khp if not conj_side else -khp
            space = np.exp(1j * (kvec[0] * x_h[..., 0] + kvec[1] * x_h[..., 1]))
            for atom in ws.modes[kh]:
                ph = ws._atom_phase(atom, omega)
                v = atom.coeff * np.exp(1j * ph)
                if conj_side:
                    v = np.conj(v)
                mu = atom.mu if not conj_side else -atom.mu
                for sign in (+1, -1):
                    p = params.delta + 1j * (mu - sign)
                    coeff = 1j * np.dot(kvec, v) + sign * np.dot(_perp(kvec), v)
                    if method == "closed_form":
                        core = np.exp(-zeta * _sqrt_principal(p)) / p
                    else:
                        core = (
                            np.vectorize(lambda zz: _halfline_erfc_quad(float(zz), p))(
                                zeta
                            )
                        )
                    out += pref * coeff * np.exp(1j * mu * tau) * space * core
    return ws.envelope_at(t) * out


# ---------------------------------------------------------------------------
# bottom layer (quasi-periodic Dirichlet data)
# ---------------------------------------------------------------------------


def eta_pm(lam: float, sign: int) -> complex:
    """Decay rate sqrt(1 -+ lam) (1 +- i)/sqrt(2); Re in (0, 1] off resonance."""
    return math.sqrt(1.0 - sign * lam) * (1.0 + 1j * sign) / math.sqrt(2.0)


def dirichlet_coefficient(w: SpectralField, k: Mode) -> np.ndarray:
    """Boundary data -<N_k, w> (n1(k), n2(k)) restoring u_h = 0 at the bottom."""
    from .geometry import eigenvector

    em = eigenvector(w.geometry, k)
    return -w[k] * em.n[:2]


def w_pm(c_bh: np.ndarray, sign: int) -> np.ndarray:
    """Split of a 2-vector onto the rotating frame: (c1 +- i c2)/2 (1, -+ i)."""
    amp = 0.5 * (c_bh[0] + 1j * sign * c_bh[1])
    return amp * np.array([1.0, -1j * sign])


@dataclass
class BottomLayerSpec:
    """Per-mode bottom layer data derived from a spectral field."""

    geometry: TorusGeometry
    c_bh: dict  # Mode -> complex 2-vector boundary coefficient
    lam: dict  # Mode -> frequency

    @staticmethod
    def from_field(w: SpectralField) -> "BottomLayerSpec":
        ms = w.mode_set()
        c, lam = {}, {}
        for i, k in enumerate(ms.modes):
            if w.data[i] == 0:
                continue
            c[k] = dirichlet_coefficient(w, k)
            lam[k] = float(ms.lam[i])
        return BottomLayerSpec(w.geometry, c, lam)

    def wk_pm(self, k: Mode, sign: int) -> np.ndarray:
        return w_pm(self.c_bh[k], sign)

    def eta_k(self, k: Mode, sign: int) -> complex:
        return eta_pm(self.lam[k], sign)


def bottom_layer(
    spec: BottomLayerSpec,
    k: Mode,
    t: float,
    tau: float,
    x_h,
    zeta,
    eps_nu: float | None = None,
) -> np.ndarray:
    """Exact bottom-layer profile of one mode with k_h != 0.

    Returns the 3-vector; the vertical component carries the sqrt(eps*nu)
    prefactor (eps_nu = eps*nu), omitted (set to 0) when not supplied.
    """
    if (k[0], k[1]) == (0, 0):
        raise ValueError("k_h = 0 is handled by the resonant/classical split")
    x_h = np.asarray(x_h, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    geom = spec.geometry
    khp = np.array([2 * np.pi * k[0] / geom.a1, 2 * np.pi * k[1] / geom.a2])
    space = np.exp(1j * (khp[0] * x_h[..., 0] + khp[1] * x_h[..., 1]))
    osc = np.exp(-1j * spec.lam[k] * tau)
    out = np.zeros(np.broadcast(space, zeta).shape + (3,), dtype=complex)
    root = math.sqrt(eps_nu) if eps_nu else 0.0
    for sign in (+1, -1):
        wk = spec.wk_pm(k, sign)
        eta = spec.eta_k(k, sign)
        decay = np.exp(-eta * zeta)
        out[..., 0] += wk[0] * decay * space * osc
        out[..., 1] += wk[1] * decay * space * osc
        out[..., 2] += root * (1j * np.dot(khp, wk) / eta) * decay * space * osc
    return out


def kh0_split(spec: BottomLayerSpec) -> tuple[dict, dict]:
    """Decompose the k_h = 0 boundary data into resonant and classical parts.

    Returns (alpha, gamma): alpha[sign] multiplies e^{+- i tau} (1, +- i)
    (slow resonant layer), gamma[sign] multiplies e^{+- i tau} (1, -+ i)
    (classical layer with rate 1 +- i).
    """
    alpha = {+1: 0j, -1: 0j}
    gamma = {+1: 0j, -1: 0j}
    for k, c in spec.c_bh.items():
        if (k[0], k[1]) != (0, 0):
            continue
        s = 1 if k[2] > 0 else -1
        alpha[s] += 0.5 * (c[0] - 1j * s * c[1])
        gamma[s] += 0.5 * (c[0] + 1j * s * c[1])
    return alpha, gamma


def classical_kh0_layer(gamma: dict, tau: float, zeta) -> np.ndarray:
    """Classical Ekman part of the k_h = 0 boundary data: rates 1 +- i."""
    zeta = np.asarray(zeta, dtype=float)
    out = np.zeros(zeta.shape + (2,), dtype=complex)
    for s in (+1, -1):
        vec = np.array([1.0, -1j * s])
        out += gamma[s] * (np.exp(1j * s * tau - (1 + 1j * s) * zeta))[..., None] * vec
    return out


def psi(X):
    """Slow-layer profile: psi(X) = (1/sqrt(pi)) int_X^inf e^{-u^2/4} du = erfc(X/2)."""
    return erfc(np.asarray(X, dtype=float) / 2.0)


def resonant_layer(alphas: dict, t: float, tau_scaled: float, z, nu: float) -> np.ndarray:
    """Slowly thickening layer psi(z/sqrt(nu t)) sum alpha_pm e^{+-i tau}(1, +-i)."""
    if t <= 0:
        raise ValueError("t must be positive")
    z = np.asarray(z, dtype=float)
    prof = psi(z / math.sqrt(nu * t))
    out = np.zeros(z.shape + (2,), dtype=complex)
    for s in (+1, -1):
        vec = np.array([1.0, 1j * s])
        out += alphas[s] * (prof * np.exp(1j * s * tau_scaled))[..., None] * vec
    return out


# ---------------------------------------------------------------------------
# boundary flux coefficients and the interior corrector
# ---------------------------------------------------------------------------


def compute_cB3(
    w: SpectralField, t: float, tau: float
) -> dict:
    """Vertical flux injected by the bottom layer, per horizontal mode.

    c_hat_B3(k_h) = -a1 a2 sum_{k3} sum_pm i k_h'. w_k^pm / eta_k^pm
    e^{-i lam_k tau}; zero at k_h = 0.
    """
    geom = w.geometry
    ms = w.mode_set()
    out: dict = {}
    for i, k in enumerate(ms.modes):
        if w.data[i] == 0 or (k[0], k[1]) == (0, 0):
            continue
        kh = (k[0], k[1])
        khp = ms.kprime[i, :2]
        c_bh = dirichlet_coefficient(w, k)
        lam = float(ms.lam[i])
        acc = 0j
        for sign in (+1, -1):
            wk = w_pm(c_bh, sign)
            acc += 1j * np.dot(khp, wk) / eta_pm(lam, sign)
        val = -geom.a1 * geom.a2 * acc * np.exp(-1j * lam * tau)
        out[kh] = out.get(kh, 0j) + val
    return out


def expected_E_cB3(w: SpectralField, k: Mode) -> complex:
    """Closed form of the ergodic filter of c_hat_B3 at frequency -lam_k:

    sqrt(a1 a2/(2a)) 1_{k_h != 0} <N_k, w> |k_h'| sum_pm
    (1 +- lam)/sqrt(1 -+ lam) (1 +- i)/2.
    """
    if (k[0], k[1]) == (0, 0):
        return 0j
    geom = w.geometry
    ms = w.mode_set()
    i = ms.index[k]
    lam = float(ms.lam[i])
    s = sum(
        (1 + sign * lam) / math.sqrt(1 - sign * lam) * (1 + 1j * sign) / 2.0
        for sign in (+1, -1)
    )
    return (
        math.sqrt(geom.a1 * geom.a2 / (2 * geom.a)) * w.data[i] * ms.kh_norm[i] * s
    )


def compute_cT3(
    ws: WindStress, params: LayerParams, t: float, tau: float, omega: PhasePoint
) -> dict:
    """Vertical flux injected by the top layer, per horizontal mode.

    c_hat_T3(k_h) = (1/2) sum_pm sum_atoms sigma_hat^pm e^{i mu tau} /
    (delta + i(mu -+ 1)), from the elementary integral of the damped
    oscillatory history.
    """
    geom = ws.geometry
    out: dict = {}
    for kh in ws.all_kh():
        khp = np.array([2 * np.pi * kh[0] / geom.a1, 2 * np.pi * kh[1] / geom.a2])
        acc = 0j
        for mu, v in ws.analytic_terms(kh, omega):
            sig_hat = geom.a1 * geom.a2 * v
            for sign in (+1, -1):
                coeff = 1j * np.dot(khp, sig_hat) + sign * np.dot(_perp(khp), sig_hat)
                acc += 0.5 * coeff * np.exp(1j * mu * tau) / (
                    params.delta + 1j * (mu - sign)
                )
        out[kh] = ws.envelope_at(t) * acc
    return out


def corrector_vint(
    geom: TorusGeometry,
    c_B3: dict,
    c_T3: dict,
    params: LayerParams,
    x_h,
    z,
    tol: float = 1e-12,
) -> np.ndarray:
    """Divergence-free interior lift of the two vertical boundary fluxes.

    v3 interpolates linearly between sqrt(eps nu) c_B3 at z=0 and
    eps nu beta c_T3 at z=a; v_h = (1/a) grad_h lap_h^{-1}[sqrt(eps nu)
    c_B3 - eps nu beta c_T3], so div v = 0 identically.
    """
    x_h = np.asarray(x_h, dtype=float)
    z = np.asarray(z, dtype=float)
    root = params.eta
    top = params.epsilon * params.nu * params.beta
    khs = sorted(set(c_B3) | set(c_T3))
    out = np.zeros(np.broadcast(x_h[..., 0], z).shape + (3,), dtype=complex)
    for kh in khs:
        cb = c_B3.get(kh, 0j)
        ct = c_T3.get(kh, 0j)
        combo = root * cb - top * ct
        if kh == (0, 0):
            if abs(combo) > tol or abs(cb) > tol or abs(ct) > tol:
                raise ValueError(
                    "nonzero horizontal-mean flux cannot be lifted (lap_h^-1)"
                )
            continue
        khp = np.array([2 * np.pi * kh[0] / geom.a1, 2 * np.pi * kh[1] / geom.a2])
        space = np.exp(1j * (khp[0] * x_h[..., 0] + khp[1] * x_h[..., 1]))
        kh2 = float(np.dot(khp, khp))
        vh = (1j * khp / geom.a) * (combo / (-kh2))
        out[..., 0] += vh[0] * space
        out[..., 1] += vh[1] * space
        out[..., 2] += (top * ct * z + root * cb * (geom.a - z)) / geom.a * space
    return out


# ---------------------------------------------------------------------------
# second-order interior corrector
# ---------------------------------------------------------------------------


def compute_delta_uint(
    geom: TorusGeometry,
    N: int,
    K: int,
    w: SpectralField,
    sources,
    eps: float,
    tau_grid: np.ndarray,
) -> np.ndarray:
    """Filtered coefficients of the oscillation-absorbing corrector.

    Returns an array (len(tau_grid), n_modes(K)) of <N_k, L(-tau)
    delta_u_int(tau)>: the non-resonant part of the convective mismatch is
    integrated exactly via (e^{i Delta tau} - 1)/(i Delta); the source
    mismatch (mean source minus the instantaneous filtered lift term) is
    integrated by cumulative trapezoid on tau_grid.

    `sources` bundles (ws, params, omega); see SigmaSources.
    """
    from .resonance import interaction_table
    from .sources import S_B_apply, S_T_delta, sigma_filtered_lift

    tau_grid = np.asarray(tau_grid, dtype=float)
    ms_out = mode_set(geom, K)
    full = interaction_table(geom, N, max(N, K))
    msf = mode_set(geom, full.out_truncation)
    coeffs = np.zeros((len(tau_grid), len(ms_out)), dtype=complex)

    # part 1: eps * int_0^tau [Qbar - Q(s)](w,w) ds over non-resonant triads
    nz = ~full.resonant
    ki, li, mi = full.ki[nz], full.li[nz], full.mi[nz]
    alpha, dlam = full.alpha[nz], full.dlam[nz]
    prod = alpha * w.data[ki] * w.data[li]
    for j, tau in enumerate(tau_grid):
        phase_int = (np.exp(1j * dlam * tau) - 1.0) / (1j * dlam)
        vals = np.zeros(len(msf), dtype=complex)
        np.add.at(vals, mi, -eps * prod * phase_int)
        for k, idx in ms_out.index.items():
            src = msf.index.get(k)
            if src is not None:
                coeffs[j, idx] += vals[src]

    # part 2: int_0^tau [Sbar_k - <N_k, L(-s) P Sigma(s)>] ds by quadrature
    if sources is not None:
        ws, params, omega = sources.ws, sources.params, sources.omega
        sbar = math.sqrt(params.epsilon * params.nu) * S_B_apply(geom, w).restricted(K)
        st = S_T_delta(ws, geom, params.delta, 0.0, omega, K)
        sbar = sbar + (params.epsilon * params.nu * params.beta) * st
        integrand = np.empty((len(tau_grid), len(ms_out)), dtype=complex)
        for j, tau in enumerate(tau_grid):
            lift = sigma_filtered_lift(geom, w, ws, params, 0.0, tau, omega, K)
            integrand[j] = sbar.data - lift.data
        acc = np.zeros(len(ms_out), dtype=complex)
        for j in range(1, len(tau_grid)):
            acc = acc + 0.5 * (integrand[j] + integrand[j - 1]) * (
                tau_grid[j] - tau_grid[j - 1]
            )
            coeffs[j] += acc
    return coeffs


@dataclass
class SigmaSources:
    """Bundle handed to compute_delta_uint for the source mismatch term."""

    ws: WindStress
    params: LayerParams
    omega: PhasePoint


# ---------------------------------------------------------------------------
# residual checks
# ---------------------------------------------------------------------------


def layer_residual_uT(
    ws: WindStress,
    params: LayerParams,
    omega: PhasePoint,
    taus: np.ndarray,
    zetas: np.ndarray,
    x_h=None,
    h: float = 1e-2,
) -> float:
    """Max finite-difference residual of d_tau u - d_zeta^2 u + u_perp + delta u = 0."""
    if x_h is None:
        x_h = np.zeros(2)

    def u(tau, zeta):
        return top_layer_uh(ws, params, 0.0, tau, x_h, np.asarray(zeta), omega)

    worst = 0.0
    for tau in taus:
        for zeta in zetas:
            ut = (u(tau + h, zeta) - u(tau - h, zeta)) / (2 * h)
            uzz = (u(tau, zeta + h) - 2 * u(tau, zeta) + u(tau, zeta - h)) / h**2
            val = u(tau, zeta)
            res = ut - uzz + _perp(val) + params.delta * val
            worst = max(worst, float(np.max(np.abs(res))))
    return worst


def layer_residual_bottom(
    spec: BottomLayerSpec,
    k: Mode,
    taus: np.ndarray,
    zetas: np.ndarray,
    h: float = 1e-2,
) -> float:
    """FD residual of the undamped layer equation for the bottom profile."""
    x_h = np.zeros(2)

    def u(tau, zeta):
        return bottom_layer(spec, k, 0.0, tau, x_h, np.asarray(zeta))[..., :2]

    worst = 0.0
    for tau in taus:
        for zeta in zetas:
            ut = (u(tau + h, zeta) - u(tau - h, zeta)) / (2 * h)
            uzz = (u(tau, zeta + h) - 2 * u(tau, zeta) + u(tau, zeta - h)) / h**2
            res = ut - uzz + _perp(u(tau, zeta))
            worst = max(worst, float(np.max(np.abs(res))))
    return worst


def psi_ode_residual(Xs: np.ndarray, h: float = 1e-3) -> float:
    """FD residual of -(X/2) psi' - psi'' = 0 for the slow-layer profile."""
    Xs = np.asarray(Xs, dtype=float)
    p = psi(Xs)
    dp = (psi(Xs + h) - psi(Xs - h)) / (2 * h)
    ddp = (psi(Xs + h) - 2 * p + psi(Xs - h)) / h**2
    return float(np.max(np.abs(-(Xs / 2) * dp - ddp)))


# ---------------------------------------------------------------------------
# frequency-resolved boundary flux terms (consumed by the source assembly)
# ---------------------------------------------------------------------------


def cB3_terms(w: SpectralField) -> dict:
    """Frequency atoms of c_hat_B3: dict k_h -> list of (freq, amplitude).

    c_hat_B3(tau, k_h) = sum amp * e^{i freq tau} with freq = -lam_k over
    the vertical stack at k_h.
    """
    geom = w.geometry
    ms = w.mode_set()
    out: dict = {}
    for i, k in enumerate(ms.modes):
        if w.data[i] == 0 or (k[0], k[1]) == (0, 0):
            continue
        kh = (k[0], k[1])
        khp = ms.kprime[i, :2]
        c_bh = dirichlet_coefficient(w, k)
        lam = float(ms.lam[i])
        acc = 0j
        for sign in (+1, -1):
            acc += 1j * np.dot(khp, w_pm(c_bh, sign)) / eta_pm(lam, sign)
        out.setdefault(kh, []).append((-lam, -geom.a1 * geom.a2 * acc))
    return out


def cT3_terms(
    ws: WindStress, params: LayerParams, t: float, omega: PhasePoint
) -> dict:
    """Frequency atoms of c_hat_T3: dict k_h -> list of (freq, amplitude)."""
    geom = ws.geometry
    env = ws.envelope_at(t)
    out: dict = {}
    for kh in ws.all_kh():
        khp = np.array([2 * np.pi * kh[0] / geom.a1, 2 * np.pi * kh[1] / geom.a2])
        terms = []
        for mu, v in ws.analytic_terms(kh, omega):
            sig_hat = geom.a1 * geom.a2 * v
            amp = 0j
            for sign in (+1, -1):
                coeff = 1j * np.dot(khp, sig_hat) + sign * np.dot(_perp(khp), sig_hat)
                amp += 0.5 * coeff / (params.delta + 1j * (mu - sign))
            terms.append((mu, env * amp))
        if terms:
            out[kh] = terms
    return out


def terms_value(terms: dict, kh, tau: float) -> complex:
    """Evaluate a frequency-term dict at one horizontal mode and time."""
    return sum(amp * np.exp(1j * f * tau) for f, amp in terms.get(kh, [])) or 0j
