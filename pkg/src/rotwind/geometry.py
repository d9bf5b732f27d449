"""Torus-slab geometry, the rotation eigenbasis, projections and filtering.

The domain is a horizontally periodic box [0,a1) x [0,a2) x (0,a).  The
space of admissible velocities is H = {u in L^2 : div u = 0, u3 = 0 at
z = 0 and z = a}.  The projection of e3 ^ . onto H is diagonalized by an
explicit hilbertian basis of vector modes indexed by nonzero integer
triples; each mode carries a frequency lambda in [-1, 1].  Everything in
this module is a pure function of immutable inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

Mode = tuple[int, int, int]

DEFAULT_ORTHO_TOL = 1e-8
DEFAULT_DIV_TOL = 1e-6


class QuadratureError(Exception):
    """Raised when a quadrature fails its grid-doubling convergence check."""


@dataclass(frozen=True)
class TorusGeometry:
    """Periodic box: horizontal periods a1, a2 and slab height a."""

    a1: float
    a2: float
    a: float

    def __post_init__(self):
        if not (self.a1 > 0 and self.a2 > 0 and self.a > 0):
            raise ValueError("all box dimensions must be positive")

    @property
    def volume(self) -> float:
        return self.a1 * self.a2 * self.a

    def key(self) -> str:
        """Deterministic string identifying the geometry (for cache files)."""
        return f"{self.a1!r}:{self.a2!r}:{self.a!r}"


def _check_nonzero(k: Mode) -> None:
    if k == (0, 0, 0):
        raise ValueError("the zero mode is excluded from the basis")


def wavevector(geom: TorusGeometry, k: Mode) -> np.ndarray:
    """Wavevector (2*pi*k1/a1, 2*pi*k2/a2, pi*k3/a)."""
    return np.array(
        [2 * np.pi * k[0] / geom.a1, 2 * np.pi * k[1] / geom.a2, np.pi * k[2] / geom.a]
    )


def eigenvalue(geom: TorusGeometry, k: Mode) -> float:
    """Rotation frequency -k3'/|k'| of mode k; lies in [-1, 1]."""
    _check_nonzero(k)
    kp = wavevector(geom, k)
    return -kp[2] / np.linalg.norm(kp)


@dataclass(frozen=True)
class EigenMode:
    """One basis mode: index, wavevector, frequency and amplitude vector."""

    k: Mode
    kprime: np.ndarray
    lam: float
    n: np.ndarray  # complex 3-vector, includes the 1/sqrt(a1*a2*a) factor
    height: float = None  # slab height, for wall-exact evaluation


def _vertical_sine(kp3: float, z, height: float | None):
    """sin(k3' z) with exact zeros on the walls (the sine factor is
    analytically zero there; floating pi would leave ~1e-16 residue)."""
    s = np.sin(kp3 * np.asarray(z, dtype=float))
    if height is not None:
        s = np.where((z == 0.0) | (z == height), 0.0, s)
    return s


def eigenvector(geom: TorusGeometry, k: Mode) -> EigenMode:
    """Amplitude vector of mode k (separate branches for k_h = 0 / != 0)."""
    _check_nonzero(k)
    kp = wavevector(geom, k)
    lam = -kp[2] / np.linalg.norm(kp)
    root_v = math.sqrt(geom.volume)
    kh_norm = math.hypot(kp[0], kp[1])
    if (k[0], k[1]) != (0, 0):
        n = np.array(
            [
                (1j * kp[1] + kp[0] * lam) / (root_v * kh_norm),
                (-1j * kp[0] + kp[1] * lam) / (root_v * kh_norm),
                1j * kh_norm / (root_v * np.linalg.norm(kp)),
            ]
        )
    else:
        n = np.array([math.copysign(1.0, k[2]) / root_v, 1j / root_v, 0j])
    return EigenMode(k=k, kprime=kp, lam=lam, n=n, height=geom.a)


def evaluate_mode(mode: EigenMode, x_h, z):
    """Evaluate the mode at horizontal point(s) x_h and height(s) z.

    x_h: array-like (..., 2); z: scalar or array broadcastable against
    x_h[..., 0].  Returns a complex array of shape (..., 3).  The third
    component vanishes identically at z = 0 and z = a.
    """
    x_h = np.asarray(x_h, dtype=float)
    z = np.asarray(z, dtype=float)
    a = mode.height
    if a is not None and (np.any(z < -1e-12) or np.any(z > a * (1 + 1e-12))):
        raise ValueError("z outside [0, a]")
    phase = np.exp(1j * (mode.kprime[0] * x_h[..., 0] + mode.kprime[1] * x_h[..., 1]))
    c = np.cos(mode.kprime[2] * z)
    s = _vertical_sine(mode.kprime[2], z, a)
    out = np.empty(np.broadcast(phase, z).shape + (3,), dtype=complex)
    out[..., 0] = phase * c * mode.n[0]
    out[..., 1] = phase * c * mode.n[1]
    out[..., 2] = phase * s * mode.n[2]
    return out


class ModeSet:
    """All nonzero modes in the box max|k_i| <= N, in deterministic order.

    Enumeration is lexicographic on (k3, k1, k2) so that serialized output
    is reproducible.  Precomputes wavevectors, frequencies and amplitude
    vectors as dense arrays for vectorized work.
    """

    def __init__(self, geom: TorusGeometry, truncation: int):
        if truncation < 1:
            raise ValueError("truncation must be >= 1")
        self.geometry = geom
        self.truncation = truncation
        rng = range(-truncation, truncation + 1)
        self.modes: list[Mode] = [
            (k1, k2, k3)
            for k3 in rng
            for k1 in rng
            for k2 in rng
            if (k1, k2, k3) != (0, 0, 0)
        ]
        self.index = {k: i for i, k in enumerate(self.modes)}
        m = np.array(self.modes)
        self.k_int = m
        self.kprime = np.stack(
            [
                2 * np.pi * m[:, 0] / geom.a1,
                2 * np.pi * m[:, 1] / geom.a2,
                np.pi * m[:, 2] / geom.a,
            ],
            axis=1,
        )
        self.kp_norm = np.linalg.norm(self.kprime, axis=1)
        self.kh_norm = np.hypot(self.kprime[:, 0], self.kprime[:, 1])
        self.lam = -self.kprime[:, 2] / self.kp_norm
        self.n = np.empty((len(self.modes), 3), dtype=complex)
        root_v = math.sqrt(geom.volume)
        kh = self.kh_norm
        horiz = kh > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            self.n[:, 0] = (1j * self.kprime[:, 1] + self.kprime[:, 0] * self.lam) / (
                root_v * kh
            )
            self.n[:, 1] = (-1j * self.kprime[:, 0] + self.kprime[:, 1] * self.lam) / (
                root_v * kh
            )
            self.n[:, 2] = 1j * kh / (root_v * self.kp_norm)
        vert = ~horiz
        self.n[vert, 0] = np.sign(m[vert, 2]) / root_v
        self.n[vert, 1] = 1j / root_v
        self.n[vert, 2] = 0.0

    def __len__(self) -> int:
        return len(self.modes)

    def conjugate_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Index of -k for each mode, and the sign s_k with conj(N_k) = s_k N_{-k}.

        s_k = +1 for k_h != 0 and -1 for k_h = 0.
        """
        neg = np.array([self.index[(-k1, -k2, -k3)] for (k1, k2, k3) in self.modes])
        sign = np.where(self.kh_norm > 0, 1.0, -1.0)
        return neg, sign


_MODESET_CACHE: dict[tuple[str, int], ModeSet] = {}


def mode_set(geom: TorusGeometry, truncation: int) -> ModeSet:
    key = (geom.key(), truncation)
    if key not in _MODESET_CACHE:
        _MODESET_CACHE[key] = ModeSet(geom, truncation)
    return _MODESET_CACHE[key]


@dataclass
class SpectralField:
    """Truncated coefficient vector over the eigenbasis.

    Coefficients are stored densely, aligned with ModeSet enumeration
    order.  Supports basic vector arithmetic; all operations return new
    fields.
    """

    geometry: TorusGeometry
    truncation: int
    data: np.ndarray = field(default=None)  # complex, len == len(mode_set)

    def __post_init__(self):
        ms = self.mode_set()
        if self.data is None:
            self.data = np.zeros(len(ms), dtype=complex)
        else:
            self.data = np.asarray(self.data, dtype=complex)
            if self.data.shape != (len(ms),):
                raise ValueError("coefficient array does not match truncation")

    def mode_set(self) -> ModeSet:
        return mode_set(self.geometry, self.truncation)

    def copy(self) -> "SpectralField":
        return SpectralField(self.geometry, self.truncation, self.data.copy())

    def __getitem__(self, k: Mode) -> complex:
        return self.data[self.mode_set().index[k]]

    def __setitem__(self, k: Mode, value: complex) -> None:
        self.data[self.mode_set().index[k]] = value

    def items(self):
        ms = self.mode_set()
        return zip(ms.modes, self.data)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.geometry, self.truncation, self.data + other.data)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.geometry, self.truncation, self.data - other.data)

    def __mul__(self, c) -> "SpectralField":
        return SpectralField(self.geometry, self.truncation, self.data * c)

    __rmul__ = __mul__

    def _check_compatible(self, other: "SpectralField") -> None:
        if other.truncation != self.truncation or other.geometry != self.geometry:
            raise ValueError("fields have mismatched geometry or truncation")

    def norm(self) -> float:
        """L2(Upsilon) norm (the basis is orthonormal)."""
        return float(np.linalg.norm(self.data))

    def inner(self, other: "SpectralField") -> complex:
        self._check_compatible(other)
        return complex(np.vdot(self.data, other.data))

    def h10_norm(self) -> float:
        """Norm with horizontal-gradient weight: sum (1+|k_h'|^2)|w_k|^2."""
        ms = self.mode_set()
        return float(np.sqrt(np.sum((1.0 + ms.kh_norm**2) * np.abs(self.data) ** 2)))

    def h01_norm(self) -> float:
        """Diagnostic norm with vertical weight: sum (1+|k_3'|^2)|w_k|^2."""
        ms = self.mode_set()
        w = 1.0 + ms.kprime[:, 2] ** 2
        return float(np.sqrt(np.sum(w * np.abs(self.data) ** 2)))

    def is_real(self, tol: float = 1e-10) -> bool:
        """True when coefficients satisfy the Hermitian symmetry of the basis."""
        neg, sign = self.mode_set().conjugate_indices()
        return bool(
            np.max(np.abs(self.data[neg] - sign * np.conj(self.data)))
            <= tol * max(1.0, self.norm())
        )

    def evaluate(self, x_h, z) -> np.ndarray:
        """Velocity at points (direct summation over modes)."""
        ms = self.mode_set()
        x_h = np.asarray(x_h, dtype=float)
        z = np.asarray(z, dtype=float)
        shape = np.broadcast(x_h[..., 0], z).shape
        out = np.zeros(shape + (3,), dtype=complex)
        nz = np.nonzero(np.abs(self.data) > 0)[0]
        for i in nz:
            phase = np.exp(
                1j * (ms.kprime[i, 0] * x_h[..., 0] + ms.kprime[i, 1] * x_h[..., 1])
            )
            c = np.cos(ms.kprime[i, 2] * z)
            s = _vertical_sine(ms.kprime[i, 2], z, self.geometry.a)
            out[..., 0] += self.data[i] * phase * c * ms.n[i, 0]
            out[..., 1] += self.data[i] * phase * c * ms.n[i, 1]
            out[..., 2] += self.data[i] * phase * s * ms.n[i, 2]
        return out

    def restricted(self, truncation: int) -> "SpectralField":
        """Project onto the smaller box truncation."""
        ms_src = self.mode_set()
        out = SpectralField(self.geometry, truncation)
        ms_dst = out.mode_set()
        for k, i in ms_dst.index.items():
            j = ms_src.index.get(k)
            if j is not None:
                out.data[i] = self.data[j]
        return out

    def to_json(self) -> str:
        entries = [
            [int(k[0]), int(k[1]), int(k[2]), float(c.real), float(c.imag)]
            for k, c in self.items()
            if c != 0
        ]
        doc = {
            "geometry": {
                "a1": self.geometry.a1,
                "a2": self.geometry.a2,
                "a": self.geometry.a,
            },
            "truncation": self.truncation,
            "entries": entries,
        }
        return json.dumps(doc, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "SpectralField":
        doc = json.loads(text)
        geom = TorusGeometry(**doc["geometry"])
        out = SpectralField(geom, int(doc["truncation"]))
        for k1, k2, k3, re, im in doc["entries"]:
            out[(int(k1), int(k2), int(k3))] = re + 1j * im
        return out


def semigroup_apply(w: SpectralField, tau: float, direction: int = 1) -> SpectralField:
    """Apply the rotation semigroup: coefficient k -> e^{-i*direction*lam_k*tau}.

    direction=+1 is the forward semigroup, direction=-1 the filtering
    operator.  The action is unitary on coefficients.
    """
    ms = w.mode_set()
    return SpectralField(
        w.geometry, w.truncation, w.data * np.exp(-1j * direction * ms.lam * tau)
    )


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def quadrature_grid(geom: TorusGeometry, n_h: int, n_z: int):
    """Tensor grid: uniform (trapezoidal) in x_h, Gauss-Legendre in z.

    Returns (x1, x2, z, w_z); horizontal weights are a1*a2/(n_h*n_h).
    """
    x1 = np.arange(n_h) * (geom.a1 / n_h)
    x2 = np.arange(n_h) * (geom.a2 / n_h)
    nodes, wts = leggauss(n_z)
    z = 0.5 * geom.a * (nodes + 1.0)
    w_z = 0.5 * geom.a * wts
    return x1, x2, z, w_z


def _hfourier_of_grid(u_grid: np.ndarray, geom: TorusGeometry, x1, x2, N: int):
    """Horizontal Fourier coefficients (integral convention) of grid samples.

    u_grid has shape (n1, n2, n_z, 3); returns array indexed by
    (kh1+N, kh2+N, z, comp), each entry = integral over T^2 of
    e^{-i k_h'.x} u dx (trapezoidal rule, exact for band-limited trig).
    """
    n1, n2 = len(x1), len(x2)
    ks = np.arange(-N, N + 1)
    e1 = np.exp(-2j * np.pi * np.outer(ks, np.arange(n1)) / n1) * (geom.a1 / n1)
    e2 = np.exp(-2j * np.pi * np.outer(ks, np.arange(n2)) / n2) * (geom.a2 / n2)
    tmp = np.tensordot(e1, u_grid, axes=(1, 0))
    return np.tensordot(e2, tmp, axes=(1, 1)).transpose(1, 0, 2, 3)


def _project_on_grid(geom, N, u, n_h, n_z) -> np.ndarray:
    ms = mode_set(geom, N)
    x1, x2, z, w_z = quadrature_grid(geom, n_h, n_z)
    X1, X2, Z = np.meshgrid(x1, x2, z, indexing="ij")
    pts_h = np.stack([X1, X2], axis=-1)
    u_grid = np.asarray(u(pts_h, Z), dtype=complex)
    uhat = _hfourier_of_grid(u_grid, geom, x1, x2, N)  # (2N+1,2N+1,n_z,3)
    cos_t = np.cos(np.pi * np.arange(-N, N + 1)[:, None] * z[None, :] / geom.a)
    sin_t = np.sin(np.pi * np.arange(-N, N + 1)[:, None] * z[None, :] / geom.a)
    coeffs = np.zeros(len(ms), dtype=complex)
    for i, (k1, k2, k3) in enumerate(ms.modes):
        prof = uhat[k1 + N, k2 + N]  # (n_z, 3)
        c = cos_t[k3 + N]
        s = sin_t[k3 + N]
        integrand = (
            np.conj(ms.n[i, 0]) * c * prof[:, 0]
            + np.conj(ms.n[i, 1]) * c * prof[:, 1]
            + np.conj(ms.n[i, 2]) * s * prof[:, 2]
        )
        coeffs[i] = np.sum(w_z * integrand)
    return coeffs


def project_function(
    geom: TorusGeometry,
    truncation: int,
    u,
    resolution: int | None = None,
    verify: bool = True,
    rtol: float = 1e-8,
) -> SpectralField:
    """Project a callable velocity field u(x_h, z) -> (...,3) onto the basis.

    Coefficients are Hermitian inner products <N_k, u> computed by tensor
    quadrature; with verify=True the grid is doubled and a coefficient
    change above rtol (relative to the field size) raises QuadratureError.
    """
    n_h = resolution if resolution is not None else max(4 * truncation, 8)
    n_z = max(4 * truncation + 12, n_h)
    coeffs = _project_on_grid(geom, truncation, u, n_h, n_z)
    if verify:
        fine = _project_on_grid(geom, truncation, u, 2 * n_h, 2 * n_z)
        scale = max(np.max(np.abs(fine)), 1e-300)
        if np.max(np.abs(fine - coeffs)) > rtol * max(scale, 1.0):
            raise QuadratureError(
                "projection quadrature did not converge under grid doubling"
            )
        coeffs = fine
    return SpectralField(geom, truncation, coeffs)


def mode_matrix_on_grid(ms: ModeSet, x1, x2, z) -> np.ndarray:
    """Evaluate every mode on the tensor grid: (n_modes, n1*n2*nz, 3)."""
    n1, n2, nz = len(x1), len(x2), len(z)
    out = np.empty((len(ms), n1 * n2 * nz, 3), dtype=complex)
    ph1 = np.exp(1j * np.outer(ms.kprime[:, 0], x1))
    ph2 = np.exp(1j * np.outer(ms.kprime[:, 1], x2))
    cz = np.cos(np.outer(ms.kprime[:, 2], z))
    sz = np.sin(np.outer(ms.kprime[:, 2], z))
    for i in range(len(ms)):
        phase = (ph1[i][:, None, None] * ph2[i][None, :, None]).astype(complex)
        out[i, :, 0] = (phase * cz[i][None, None, :] * ms.n[i, 0]).ravel()
        out[i, :, 1] = (phase * cz[i][None, None, :] * ms.n[i, 1]).ravel()
        out[i, :, 2] = (phase * sz[i][None, None, :] * ms.n[i, 2]).ravel()
    return out


def orthonormality_report(geom: TorusGeometry, truncation: int, resolution=None):
    """Quadrature Gram matrix of the basis; returns (max offdiag, max diag error)."""
    ms = mode_set(geom, truncation)
    n_h = resolution if resolution is not None else max(4 * truncation, 8)
    n_z = max(n_h, 16)
    x1, x2, z, w_z = quadrature_grid(geom, n_h, n_z)
    M = mode_matrix_on_grid(ms, x1, x2, z)
    w = (
        np.full(len(x1), geom.a1 / len(x1))[:, None, None]
        * np.full(len(x2), geom.a2 / len(x2))[None, :, None]
        * w_z[None, None, :]
    ).ravel()
    gram = np.einsum("ipc,jpc->ij", np.conj(M) * w[None, :, None], M, optimize=True)
    off = gram - np.eye(len(ms))
    max_diag = float(np.max(np.abs(np.diag(gram) - 1.0)))
    np.fill_diagonal(off, 0.0)
    return float(np.max(np.abs(off))), max_diag


def coriolis_diagonal_report(geom: TorusGeometry, truncation: int, resolution=None):
    """Max error of quadrature <N_k, e3 ^ N_k> against i*lambda_k.

    Since N_k lies in H and the projection is self-adjoint, the projected
    quadratic form equals the unprojected one mode by mode.
    """
    ms = mode_set(geom, truncation)
    n_h = resolution if resolution is not None else max(4 * truncation, 8)
    n_z = max(n_h, 16)
    x1, x2, z, w_z = quadrature_grid(geom, n_h, n_z)
    M = mode_matrix_on_grid(ms, x1, x2, z)
    w = (
        np.full(len(x1), geom.a1 / len(x1))[:, None, None]
        * np.full(len(x2), geom.a2 / len(x2))[None, :, None]
        * w_z[None, None, :]
    ).ravel()
    rot = np.empty_like(M)
    rot[:, :, 0] = -M[:, :, 1]
    rot[:, :, 1] = M[:, :, 0]
    rot[:, :, 2] = 0.0
    vals = np.einsum("ipc,ipc->i", np.conj(M) * w[None, :, None], rot, optimize=True)
    return float(np.max(np.abs(vals - 1j * ms.lam)))


def random_real_field(
    geom: TorusGeometry,
    truncation: int,
    rng: np.random.Generator,
    decay: float = 1.0,
) -> SpectralField:
    """Random field with the Hermitian symmetry of a real velocity."""
    ms = mode_set(geom, truncation)
    raw = rng.standard_normal(len(ms)) + 1j * rng.standard_normal(len(ms))
    raw *= np.exp(-decay * (np.linalg.norm(ms.k_int, axis=1) - 1))
    neg, sign = ms.conjugate_indices()
    data = 0.5 * (raw + sign * np.conj(raw[neg]))
    return SpectralField(geom, truncation, data)
