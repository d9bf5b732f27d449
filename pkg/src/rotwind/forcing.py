"""Random stationary wind stress on the phase torus, and its spectral filters.

The stress is almost periodic in the fast time: finitely many horizontal
modes, each carrying finitely many frequency atoms.  Randomness enters
through a phase point on a finite-dimensional torus; the shift group
rotates each phase coordinate at its atom frequency, which realizes the
stationary ergodic setting exactly (ergodic when the frequencies are
rationally independent).  Atoms at frequency zero carry no phase, so the
flow has no frozen coordinate.

Every stored mode represents one half of a Hermitian pair: the sampled
physical stress is twice the real part of the analytic sum, hence real.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .geometry import QuadratureError, TorusGeometry

KhIndex = tuple[int, int]


@dataclass
class FrequencyAtom:
    """One frequency line of one horizontal mode."""

    mu: float
    coeff: np.ndarray  # complex 2-vector, stress amplitude

    def __post_init__(self):
        self.coeff = np.asarray(self.coeff, dtype=complex)
        if self.coeff.shape != (2,):
            raise ValueError("atom coefficient must be a 2-vector")
        if not np.all(np.isfinite(self.coeff)):
            raise ValueError("atom coefficient must be finite")


@dataclass
class PhasePoint:
    """Random element: phases in [0, 2pi)^d with the rotation shift action."""

    phases: np.ndarray

    def __post_init__(self):
        self.phases = np.mod(np.asarray(self.phases, dtype=float), 2 * np.pi)


class WindStress:
    """Stationary wind stress: horizontal modes x frequency atoms x phases.

    Parameters
    ----------
    geometry : the torus carrying the horizontal periods
    modes : dict mapping horizontal index (k1, k2) to a list of FrequencyAtom;
        atoms with equal frequency within one mode are merged
    envelope : optional polynomial coefficients (low degree) of the slow
        amplitude in t; default is the constant 1
    base_frequencies : optional explicit list of phase-torus frequencies;
        by default the distinct nonzero atom frequencies, in sorted order
    """

    def __init__(
        self,
        geometry: TorusGeometry,
        modes: dict[KhIndex, list[FrequencyAtom]] | None = None,
        envelope=None,
        base_frequencies=None,
    ):
        self.geometry = geometry
        self.modes: dict[KhIndex, list[FrequencyAtom]] = {}
        for kh, atoms in (modes or {}).items():
            merged: dict[float, np.ndarray] = {}
            for atom in atoms:
                if atom.mu in merged:
                    merged[atom.mu] = merged[atom.mu] + atom.coeff
                else:
                    merged[atom.mu] = np.asarray(atom.coeff, dtype=complex)
            self.modes[tuple(kh)] = [
                FrequencyAtom(mu, c) for mu, c in sorted(merged.items())
            ]
        self.envelope = np.asarray(envelope if envelope is not None else [1.0], float)
        freqs = sorted(
            {a.mu for atoms in self.modes.values() for a in atoms if a.mu != 0.0}
        )
        if base_frequencies is not None:
            base = [float(b) for b in base_frequencies]
            missing = [f for f in freqs if f not in base]
            if missing:
                raise ValueError(f"atom frequencies missing a phase coordinate: {missing}")
            self.base_frequencies = np.asarray(base, dtype=float)
        else:
            self.base_frequencies = np.asarray(freqs, dtype=float)
        self._phase_index = {f: j for j, f in enumerate(self.base_frequencies)}
        check_rational_independence(self.base_frequencies)

    # -- random element ----------------------------------------------------

    @property
    def phase_dim(self) -> int:
        return len(self.base_frequencies)

    def phase_of(self, mu: float) -> int | None:
        """Phase-torus coordinate carrying frequency mu (None for mu = 0)."""
        return self._phase_index.get(mu) if mu != 0.0 else None

    def random_phase(self, rng: np.random.Generator) -> PhasePoint:
        return PhasePoint(rng.uniform(0.0, 2 * np.pi, self.phase_dim))

    def zero_phase(self) -> PhasePoint:
        return PhasePoint(np.zeros(self.phase_dim))

    def shift(self, omega: PhasePoint, s: float) -> PhasePoint:
        return PhasePoint(omega.phases + self.base_frequencies * s)

    def envelope_at(self, t: float) -> float:
        return float(np.polynomial.polynomial.polyval(t, self.envelope))

    # -- sampling -----------------------------------------------------------

    def _atom_phase(self, atom: FrequencyAtom, omega: PhasePoint) -> float:
        j = self.phase_of(atom.mu)
        return 0.0 if j is None else float(omega.phases[j])

    def analytic_terms(self, kh: KhIndex, omega: PhasePoint):
        """(frequency, complex 2-vector) pairs of the analytic signal at kh.

        Includes the conjugate partners contributed by the mode stored at
        -kh, so that sigma_hat(kh) = a1*a2 * sum of terms * e^{i mu tau}.
        """
        terms = []
        for atom in self.modes.get(tuple(kh), []):
            ph = self._atom_phase(atom, omega)
            terms.append((atom.mu, atom.coeff * np.exp(1j * ph)))
        neg = (-kh[0], -kh[1])
        for atom in self.modes.get(neg, []):
            ph = self._atom_phase(atom, omega)
            terms.append((-atom.mu, np.conj(atom.coeff * np.exp(1j * ph))))
        return terms

    def sample(self, t: float, tau: float, x_h, omega: PhasePoint) -> np.ndarray:
        """Physical stress at (t, tau, x_h): real 2-vector."""
        x_h = np.asarray(x_h, dtype=float)
        acc = np.zeros(x_h.shape[:-1] + (2,), dtype=complex)
        for (k1, k2), atoms in self.modes.items():
            khp1 = 2 * np.pi * k1 / self.geometry.a1
            khp2 = 2 * np.pi * k2 / self.geometry.a2
            space = np.exp(1j * (khp1 * x_h[..., 0] + khp2 * x_h[..., 1]))
            for atom in atoms:
                ph = self._atom_phase(atom, omega)
                osc = np.exp(1j * (atom.mu * tau + ph))
                acc += (space * osc)[..., None] * atom.coeff
        return self.envelope_at(t) * 2.0 * np.real(acc)

    def fourier_coefficient(
        self, t: float, tau: float, kh: KhIndex, omega: PhasePoint
    ) -> np.ndarray:
        """Coefficient of e^{i k_h'.x_h} in the sampled stress (2-vector)."""
        acc = np.zeros(2, dtype=complex)
        for mu, c in self.analytic_terms(kh, omega):
            acc += c * np.exp(1j * mu * tau)
        return self.envelope_at(t) * acc

    def sigma_hat(self, t: float, tau: float, kh: KhIndex, omega: PhasePoint):
        """Integral-convention transform: int_T2 sigma e^{-i k_h'.x} dx."""
        return self.geometry.a1 * self.geometry.a2 * self.fourier_coefficient(
            t, tau, kh, omega
        )

    def stored_kh(self) -> list[KhIndex]:
        return sorted(self.modes.keys())

    def all_kh(self) -> list[KhIndex]:
        """Stored modes and their conjugate partners."""
        out = set(self.modes.keys())
        out.update({(-k1, -k2) for (k1, k2) in self.modes})
        return sorted(out)

    def frequency_gap_to_inertial(self) -> float:
        """Distance of the atom spectrum to the inertial frequencies {-1, 1}."""
        gaps = [
            min(abs(a.mu - 1.0), abs(a.mu + 1.0))
            for atoms in self.modes.values()
            for a in atoms
        ]
        return min(gaps) if gaps else math.inf

    # -- config ------------------------------------------------------------

    @staticmethod
    def from_config(geometry: TorusGeometry, config: dict) -> "WindStress":
        """Build from the JSON wind block.

        Schema: {modes: [{kh: [k1,k2], atoms: [{mu, re1, im1, re2, im2}]}],
                 base_frequencies: [...], envelope: [...]} .
        """
        allowed = {"modes", "base_frequencies", "envelope", "seed"}
        unknown = set(config) - allowed
        if unknown:
            raise ValueError(f"unknown wind config keys: {sorted(unknown)}")
        modes: dict[KhIndex, list[FrequencyAtom]] = {}
        for mode in config.get("modes", []):
            kh = tuple(int(v) for v in mode["kh"])
            atoms = [
                FrequencyAtom(
                    float(a["mu"]),
                    np.array(
                        [
                            a.get("re1", 0.0) + 1j * a.get("im1", 0.0),
                            a.get("re2", 0.0) + 1j * a.get("im2", 0.0),
                        ]
                    ),
                )
                for a in mode.get("atoms", [])
            ]
            modes.setdefault(kh, []).extend(atoms)
        return WindStress(
            geometry,
            modes,
            envelope=config.get("envelope"),
            base_frequencies=config.get("base_frequencies"),
        )


def check_rational_independence(freqs, max_coeff: int = 20, tol: float = 1e-9) -> bool:
    """Warn when the frequencies admit a small integer relation.

    Ergodicity of the torus rotation cannot be decided numerically, so a
    detected relation only emits a warning.  Returns True when no relation
    was found within the scanned coefficient range.
    """
    freqs = np.asarray(freqs, dtype=float)
    d = len(freqs)
    if d <= 1:
        return True
    budget = 200_000
    rng_max = max_coeff
    while (2 * rng_max + 1) ** d > budget and rng_max > 1:
        rng_max -= 1
    scale = np.max(np.abs(freqs))
    for combo in itertools.product(range(-rng_max, rng_max + 1), repeat=d):
        if all(c == 0 for c in combo):
            continue
        if abs(float(np.dot(combo, freqs))) <= tol * scale:
            warnings.warn(
                f"frequencies admit integer relation {combo}; the phase flow "
                "may fail to be ergodic",
                stacklevel=2,
            )
            return False
    return True


# ---------------------------------------------------------------------------
# approximate spectral decomposition
# ---------------------------------------------------------------------------


def spectral_density_Falpha(
    ws: WindStress,
    lam: float,
    alpha: float,
    kh: KhIndex,
    t: float = 0.0,
    omega: PhasePoint | None = None,
) -> np.ndarray:
    """Regularized spectral density at frequency lam for one horizontal mode.

    Closed form: each atom contributes a Lorentzian line of mass equal to
    its amplitude, (1/2pi) * coeff * 2 alpha / (alpha^2 + (mu - lam)^2).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if omega is None:
        omega = ws.zero_phase()
    acc = np.zeros(2, dtype=complex)
    for mu, c in ws.analytic_terms(kh, omega):
        acc += c * (2 * alpha / (alpha**2 + (mu - lam) ** 2))
    return ws.envelope_at(t) * acc / (2 * np.pi)


def lorentzian_sum(ws, lam, alpha, kh, t=0.0, omega=None) -> np.ndarray:
    """Spectral sum in the prefactor-free normalization: 2*pi*F_alpha."""
    return 2 * np.pi * spectral_density_Falpha(ws, lam, alpha, kh, t, omega)


def falpha_curve(
    ws: WindStress,
    lam: np.ndarray,
    alpha: float,
    kh: KhIndex,
    t: float = 0.0,
    omega: PhasePoint | None = None,
    include_partners: bool = True,
) -> np.ndarray:
    """Vectorized F_alpha over an array of frequencies: shape (len(lam), 2).

    include_partners=False restricts to the atoms stored at kh itself
    (the one-sided almost periodic sum), dropping the conjugate
    contributions from the mode stored at -kh.
    """
    if omega is None:
        omega = ws.zero_phase()
    lam = np.asarray(lam, dtype=float)
    acc = np.zeros(lam.shape + (2,), dtype=complex)
    if include_partners:
        terms = ws.analytic_terms(kh, omega)
    else:
        terms = [
            (a.mu, a.coeff * np.exp(1j * ws._atom_phase(a, omega)))
            for a in ws.modes.get(tuple(kh), [])
        ]
    for mu, c in terms:
        line = 2 * alpha / (alpha**2 + (mu - lam) ** 2)
        acc += line[..., None] * c
    return ws.envelope_at(t) * acc / (2 * np.pi)


def _halfline_laplace_pole(p: complex, z: complex) -> complex:
    """int_0^inf e^{-p u} / (u - z) du for Re p > 0, z off [0, inf).

    Equals e^{-p z} E1(-p z) up to a 2 pi i residue term that appears when
    the ray t = p u - p z sweeps across the origin while deforming onto the
    principal-branch path of E1.
    """
    from scipy.special import exp1

    w0 = -p * z
    val = np.exp(-p * z) * exp1(w0)
    if p.imag != 0.0:
        u_star = -w0.imag / p.imag
        if u_star > 0 and (p.real * u_star + w0.real) < 0:
            val += -np.sign(p.imag) * 2j * np.pi * np.exp(-p * z)
    return complex(val)


def _poisson_exp_integral(mu: float, tau: float, alpha: float) -> complex:
    """alpha * int e^{-alpha|u|} e^{i mu u} / ((u-tau)^2 + alpha^2) du, exactly.

    Partial fractions around the poles tau +- i alpha reduce each half-line
    piece to complex exponential integrals; this stays accurate for small
    alpha where the kernel quadrature would need thousands of oscillation
    periods.
    """
    p = alpha - 1j * mu  # u > 0 branch: e^{-p u}
    q = alpha + 1j * mu  # u < 0 branch: e^{+q u}
    total = 0j
    for sign in (+1, -1):
        z = tau + 1j * sign * alpha
        # int_{-inf}^0 e^{q u}/(u - z) du = -int_0^inf e^{-q u}/(u + z) du
        piece = -_halfline_laplace_pole(q, -z) + _halfline_laplace_pole(p, z)
        total += sign * piece
    return total / 2j


def reconstruct_sigma_alpha(
    ws: WindStress,
    alpha: float,
    t: float,
    tau: float,
    x_h,
    omega: PhasePoint,
) -> np.ndarray:
    """Smoothed stress sigma_alpha at a point.

    Equals (1/pi) int e^{-alpha|tau + alpha s|} sigma(tau + alpha s)
    / (1 + s^2) ds; for the finite-atom stress every term reduces exactly
    to exponential integrals (see _poisson_exp_integral), which the tests
    validate against direct kernel quadrature.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x_h = np.asarray(x_h, dtype=float)
    acc = np.zeros(2, dtype=complex)
    for kh in ws.all_kh():
        khp1 = 2 * np.pi * kh[0] / ws.geometry.a1
        khp2 = 2 * np.pi * kh[1] / ws.geometry.a2
        space = np.exp(1j * (khp1 * x_h[0] + khp2 * x_h[1]))
        for mu, c in ws.analytic_terms(kh, omega):
            acc += c * space * _poisson_exp_integral(mu, tau, alpha) / np.pi
    val = ws.envelope_at(t) * acc
    return np.real(val)


def reconstruct_sigma_alpha_quad(
    ws: WindStress,
    alpha: float,
    t: float,
    tau: float,
    x_h,
    omega: PhasePoint,
    rtol: float = 1e-9,
) -> np.ndarray:
    """Kernel-quadrature route (oracle; struggles for very small alpha)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    kink = -tau / alpha

    def component(i):
        def f(s):
            val = ws.sample(t, tau + alpha * s, x_h, omega)
            return math.exp(-alpha * abs(tau + alpha * s)) / (1 + s * s) * val[i]

        lo, err_lo = quad(f, -np.inf, kink, limit=800, epsabs=1e-12, epsrel=rtol)
        hi, err_hi = quad(f, kink, np.inf, limit=800, epsabs=1e-12, epsrel=rtol)
        val, err = lo + hi, err_lo + err_hi
        if err > 100 * (rtol * max(abs(val), 1.0)) + 1e-9:
            raise QuadratureError(
                f"sigma_alpha quadrature did not converge (value {val}, err {err})"
            )
        return val / np.pi

    return np.array([component(0), component(1)])


# ---------------------------------------------------------------------------
# ergodic filter
# ---------------------------------------------------------------------------


def _finite_average_factor(mu: float, lam: float, theta: float) -> complex:
    """(1/theta) int_0^theta e^{i(mu-lam) tau} dtau."""
    d = mu - lam
    if d == 0.0:
        return 1.0 + 0j
    return (np.exp(1j * d * theta) - 1.0) / (1j * d * theta)


def ergodic_average_E(
    source,
    lam: float,
    theta: float | None = None,
    omega: PhasePoint | None = None,
    kh: KhIndex | None = None,
    t: float = 0.0,
    n_quad: int = 20001,
):
    """Time average (1/theta) int_0^theta phi(tau) e^{-i lam tau} dtau.

    For a WindStress source the average is exact per atom, and theta=None
    returns the infinite-time closed form (indicator on matching atoms).
    For a plain callable, composite trapezoidal quadrature is used and
    theta is required.
    """
    if isinstance(source, WindStress):
        if kh is None:
            raise ValueError("kh required for a WindStress source")
        if omega is None:
            omega = source.zero_phase()
        acc = np.zeros(2, dtype=complex)
        for mu, c in source.analytic_terms(kh, omega):
            if theta is None:
                if mu == lam:
                    acc += c
            else:
                acc += c * _finite_average_factor(mu, lam, theta)
        return source.envelope_at(t) * acc
    if theta is None:
        raise ValueError("theta required for a callable source")
    taus = np.linspace(0.0, theta, n_quad)
    vals = np.array([source(tau) * np.exp(-1j * lam * tau) for tau in taus])
    return np.trapezoid(vals, taus, axis=0) / theta


def ergodic_offspectrum_bound(ws: WindStress, lam: float, theta: float) -> float:
    """Explicit bound 2 * sum|coeff| / (min_mu |lam-mu| * theta), per mode sum."""
    gaps = []
    total = 0.0
    for kh in ws.stored_kh():
        for mu, c in ws.analytic_terms(kh, ws.zero_phase()):
            gaps.append(abs(mu - lam))
            total += float(np.linalg.norm(c, 1))
    if not gaps:
        return 0.0
    gap = min(gaps)
    if gap == 0:
        return math.inf
    return 2.0 * total / (gap * theta)


# ---------------------------------------------------------------------------
# non-resonance hypotheses
# ---------------------------------------------------------------------------


@dataclass
class H1Report:
    closed_form: float
    grid_values: dict = field(default_factory=dict)

    @property
    def sup_grid(self) -> float:
        return max(self.grid_values.values()) if self.grid_values else 0.0


def _atom_adapted_grid(ws: WindStress, kh: KhIndex, alpha: float) -> np.ndarray:
    """Frequency grid resolving every Lorentzian peak at width alpha."""
    mus = [mu for mu, _ in ws.analytic_terms(kh, ws.zero_phase())] or [0.0]
    u = np.linspace(-np.pi / 2 + 1e-4, np.pi / 2 - 1e-4, 4001)
    pieces = [mu + alpha * np.tan(u) for mu in mus]
    return np.unique(np.concatenate(pieces))


def check_H1(ws: WindStress, alpha_grid=None) -> H1Report:
    """Uniform-in-alpha integrability of the regularized spectrum.

    For finite atoms the L1 norm in lam equals the summed atom amplitudes
    exactly (each Lorentzian has unit mass); the optional grid evaluation
    confirms that value numerically per alpha.
    """
    closed = 0.0
    for atoms in ws.modes.values():
        for a in atoms:
            closed += float(np.linalg.norm(a.coeff))
    closed *= abs(ws.envelope_at(0.0))
    report = H1Report(closed_form=closed)
    if alpha_grid is not None:
        for alpha in alpha_grid:
            total = 0.0
            for kh in ws.stored_kh():
                lam = _atom_adapted_grid(ws, kh, alpha)
                vals = np.linalg.norm(
                    falpha_curve(ws, lam, alpha, kh, include_partners=False), axis=-1
                )
                total += float(np.trapezoid(vals, lam))
            report.grid_values[float(alpha)] = total
    return report


@dataclass
class H2Report:
    passed: bool
    eta: float
    min_distance: float
    sup_curve: dict  # alpha -> sup_{lam in V+-} |F_alpha|

    def decay_ratio_bound(self) -> float:
        """max over the curve of sup / (alpha / eta): finite iff (H2)-like decay."""
        vals = [v / (a / self.eta) for a, v in self.sup_curve.items()]
        return max(vals) if vals else 0.0


def check_H2(
    ws: WindStress,
    eta: float,
    alpha_grid=(1e-1, 1e-2, 1e-3),
    n_lam: int = 2001,
) -> H2Report:
    """No spectral mass near the inertial frequencies +-1.

    Passes when every atom frequency keeps distance >= eta from {-1, +1};
    the sup of |F_alpha| over the eta/2-neighbourhoods is reported per
    alpha (for a passing stress it decays linearly in alpha).
    """
    dist = ws.frequency_gap_to_inertial()
    passed = dist >= eta
    curve = {}
    for alpha in alpha_grid:
        sup = 0.0
        for center in (-1.0, 1.0):
            lam = np.linspace(center - eta / 2, center + eta / 2, n_lam)
            for kh in ws.stored_kh():
                vals = np.linalg.norm(falpha_curve(ws, lam, alpha, kh), axis=-1)
                sup = max(sup, float(np.max(vals)))
        curve[float(alpha)] = sup
    return H2Report(passed=passed, eta=eta, min_distance=dist, sup_curve=curve)


def build_H2_counterexample(
    n_max: int = 10, decay: float = 0.5, kh: KhIndex = (1, 0)
) -> WindStress:
    """Summable atoms accumulating at frequency 1: passes (H1), fails (H2).

    Atoms sit at mu_n = 1 - 1/n for n = 2..n_max with amplitudes decay^n.
    """
    geom = TorusGeometry(1.0, 1.0, 1.0)
    atoms = [
        FrequencyAtom(1.0 - 1.0 / n, np.array([decay**n, 0.0]))
        for n in range(2, n_max + 1)
    ]
    return WindStress(geom, {kh: atoms})
