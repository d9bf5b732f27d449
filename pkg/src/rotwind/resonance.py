"""Resonant triads, interaction coefficients, and the filtered quadratic form.

The quadratic form acts on spectral fields as

    Qbar(w1, w2) = sum_m sum_{(k,l) in K_m} <N_k,w1> <N_l,w2> alpha_{k,l,m} N_m

where K_m collects pairs whose horizontal indices add to m_h, whose
frequencies satisfy lam_k + lam_l = lam_m, and whose vertical indices
match up to signs.  Frequency coincidences are decided in exact rational
arithmetic (the frequencies are square roots of rationals once the box
dimensions are fixed floats); a floating tolerance is kept as a fallback
and stored with every table so experiments are reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import _kernels
from .geometry import (
    Mode,
    ModeSet,
    QuadratureError,
    SpectralField,
    TorusGeometry,
    mode_set,
)

DEFAULT_RES_TOL = 1e-12
_FLOAT_SCREEN = 1e-9  # |sum| above this can never be an exact zero
_ALPHA_CUT = 1e-13


# ---------------------------------------------------------------------------
# exact frequency arithmetic
# ---------------------------------------------------------------------------


def _lambda_squared(geom: TorusGeometry, k: Mode) -> Fraction:
    """lam_k^2 as an exact rational in the (binary float) box dimensions."""
    a1_sq = Fraction(geom.a1) ** 2
    a2_sq = Fraction(geom.a2) ** 2
    a_sq = Fraction(geom.a) ** 2
    num = k[2] * k[2] * a1_sq * a2_sq
    den = (
        4 * k[0] * k[0] * a2_sq * a_sq
        + 4 * k[1] * k[1] * a1_sq * a_sq
        + k[2] * k[2] * a1_sq * a2_sq
    )
    return num / den


def _lambda_exact(geom: TorusGeometry, k: Mode) -> tuple[int, Fraction]:
    """(sign, lam^2) with lam = sign * sqrt(lam^2); sign = -sgn(k3)."""
    s = -(k[2] > 0) + (k[2] < 0)
    return s, _lambda_squared(geom, k)


def _sqrt_sum_is_zero(terms: list[tuple[int, Fraction]]) -> bool:
    """Exact test of sum_i s_i * sqrt(r_i) == 0 for rational r_i >= 0."""
    live = [(s, r) for s, r in terms if r != 0 and s != 0]
    if not live:
        return True
    if len(live) == 1:
        return False
    if len(live) == 2:
        (s1, r1), (s2, r2) = live
        return s1 == -s2 and r1 == r2
    (s1, r1), (s2, r2), (s3, r3) = live
    # s1 sqrt(r1) + s2 sqrt(r2) = -s3 sqrt(r3); square once:
    rhs = r3 - r1 - r2
    if (s1 * s2 > 0) != (rhs > 0):
        return False
    if 4 * r1 * r2 != rhs * rhs:
        return False
    # magnitudes agree; check the sign of the left-hand side
    if s1 == s2:
        lhs_sign = s1
    elif r1 > r2:
        lhs_sign = s1
    elif r2 > r1:
        lhs_sign = s2
    else:
        lhs_sign = 0
    return lhs_sign == -s3


def lambda_sum_is_resonant(
    geom: TorusGeometry, k: Mode, l: Mode, m: Mode, tol: float = DEFAULT_RES_TOL
) -> bool:
    """Decide lam_k + lam_l == lam_m, exactly where possible."""
    ms_val = (
        _lam_float(geom, k) + _lam_float(geom, l) - _lam_float(geom, m)
    )
    if abs(ms_val) > max(_FLOAT_SCREEN, tol):
        return False
    if abs(ms_val) <= tol:
        return True
    sk, rk = _lambda_exact(geom, k)
    sl, rl = _lambda_exact(geom, l)
    sm, rm = _lambda_exact(geom, m)
    return _sqrt_sum_is_zero([(sk, rk), (sl, rl), (-sm, rm)])


def _lam_float(geom: TorusGeometry, k: Mode) -> float:
    kp3 = math.pi * k[2] / geom.a
    norm = math.sqrt(
        (2 * math.pi * k[0] / geom.a1) ** 2
        + (2 * math.pi * k[1] / geom.a2) ** 2
        + kp3**2
    )
    return -kp3 / norm


# ---------------------------------------------------------------------------
# interaction coefficient by quadrature
# ---------------------------------------------------------------------------


def _advection_inner(geom, k: Mode, l: Mode, m: Mode, n_h: int, n_z: int) -> complex:
    """<N_m, (N_k . grad) N_l> by tensor quadrature on the full 3D grid."""
    from .geometry import eigenvector, quadrature_grid

    ek, el, em = eigenvector(geom, k), eigenvector(geom, l), eigenvector(geom, m)
    x1, x2, z, w_z = quadrature_grid(geom, n_h, n_z)
    X1, X2, Z = np.meshgrid(x1, x2, z, indexing="ij")
    phase = np.exp(
        1j
        * (
            (ek.kprime[0] + el.kprime[0] - em.kprime[0]) * X1
            + (ek.kprime[1] + el.kprime[1] - em.kprime[1]) * X2
        )
    )
    ck, sk = np.cos(ek.kprime[2] * Z), np.sin(ek.kprime[2] * Z)
    cl, sl = np.cos(el.kprime[2] * Z), np.sin(el.kprime[2] * Z)
    cm, sm = np.cos(em.kprime[2] * Z), np.sin(em.kprime[2] * Z)
    adv_h = 1j * (el.kprime[0] * ek.n[0] + el.kprime[1] * ek.n[1])  # N_k,h . i l_h'
    integrand = (
        (np.conj(em.n[0]) * el.n[0] + np.conj(em.n[1]) * el.n[1])
        * cm
        * (adv_h * ck * cl - ek.n[2] * el.kprime[2] * sk * sl)
        + np.conj(em.n[2])
        * el.n[2]
        * sm
        * (adv_h * ck * sl + ek.n[2] * el.kprime[2] * sk * cl)
    )
    hw = (geom.a1 / n_h) * (geom.a2 / n_h)
    return complex(hw * np.sum(integrand * phase * w_z[None, None, :]))


def interaction_coefficient(
    geom: TorusGeometry,
    k: Mode,
    l: Mode,
    m: Mode,
    resolution: int | None = None,
    verify: bool = True,
    rtol: float = 1e-9,
) -> complex:
    """Symmetrized convective coupling of modes k, l into m, by quadrature."""
    for idx in (k, l, m):
        if idx == (0, 0, 0):
            raise ValueError("zero mode not admitted")
    span = max(
        abs(k[0]) + abs(l[0]) + abs(m[0]),
        abs(k[1]) + abs(l[1]) + abs(m[1]),
        abs(k[2]) + abs(l[2]) + abs(m[2]),
    )
    n_h = resolution if resolution is not None else 2 * span + 4
    n_z = max(n_h, 2 * span + 8)
    val = 0.5 * (
        _advection_inner(geom, k, l, m, n_h, n_z)
        + _advection_inner(geom, l, k, m, n_h, n_z)
    )
    if verify:
        fine = 0.5 * (
            _advection_inner(geom, k, l, m, 2 * n_h, 2 * n_z)
            + _advection_inner(geom, l, k, m, 2 * n_h, 2 * n_z)
        )
        if abs(fine - val) > rtol * max(1.0, abs(fine)):
            raise QuadratureError("interaction quadrature did not converge")
        val = fine
    return val


# ---------------------------------------------------------------------------
# resonance enumeration
# ---------------------------------------------------------------------------


def _eta_condition(k3: int, l3: int, m3: int) -> bool:
    return m3 in (k3 + l3, k3 - l3, -k3 + l3, -k3 - l3)


def resonant_set(
    geom: TorusGeometry, m: Mode, N: int, tol: float = DEFAULT_RES_TOL
) -> list[tuple[Mode, Mode]]:
    """All ordered pairs (k, l) within the box truncation N coupling into m."""
    if m == (0, 0, 0):
        raise ValueError("zero mode not admitted")
    pairs = []
    rng = range(-N, N + 1)
    for k1 in rng:
        l1 = m[0] - k1
        if abs(l1) > N:
            continue
        for k2 in rng:
            l2 = m[1] - k2
            if abs(l2) > N:
                continue
            for k3 in rng:
                k = (k1, k2, k3)
                if k == (0, 0, 0):
                    continue
                for l3 in rng:
                    l = (l1, l2, l3)
                    if l == (0, 0, 0):
                        continue
                    if not _eta_condition(k3, l3, m[2]):
                        continue
                    if lambda_sum_is_resonant(geom, k, l, m, tol):
                        pairs.append((k, l))
    return pairs


@dataclass
class NonresonanceReport:
    geometry: TorusGeometry
    cutoff: int
    tol: float
    violations: list  # entries (k, n, eta)

    @property
    def is_nonresonant(self) -> bool:
        return not self.violations


def check_nonresonant_torus(
    geom: TorusGeometry, K: int, tol: float = DEFAULT_RES_TOL
) -> NonresonanceReport:
    """Scan pairs |k|,|n| <= K for frequency coincidences that force coupling.

    A pair (k, n) violates non-resonance when some sign combination of
    (lam_k, lam_{n-k}, lam_n) cancels while k3 * n3 * (n3 - k3) != 0.
    """
    ms = mode_set(geom, K)
    big = mode_set(geom, 2 * K)
    lam_big = {m: big.lam[i] for m, i in big.index.items()}
    violations = []
    for k in ms.modes:
        if k[2] == 0:
            continue
        lam_k = lam_big[k]
        for n in ms.modes:
            if n[2] == 0 or n[2] == k[2]:
                continue
            d = (n[0] - k[0], n[1] - k[1], n[2] - k[2])
            if d == (0, 0, 0):
                continue
            lam_n = lam_big[n]
            lam_d = lam_big[d]
            for e1 in (1, -1):
                for e2 in (1, -1):
                    # eta3 = 1 w.l.o.g. (negate the whole combination)
                    val = e1 * lam_k + e2 * lam_d - lam_n
                    if abs(val) > max(_FLOAT_SCREEN, tol):
                        continue
                    if abs(val) <= tol or _sqrt_sum_is_zero(
                        [
                            (e1 * _lambda_exact(geom, k)[0], _lambda_squared(geom, k)),
                            (e2 * _lambda_exact(geom, d)[0], _lambda_squared(geom, d)),
                            (-_lambda_exact(geom, n)[0], _lambda_squared(geom, n)),
                        ]
                    ):
                        violations.append((k, n, (e1, e2, 1)))
    return NonresonanceReport(geom, K, tol, violations)


# ---------------------------------------------------------------------------
# triad tables
# ---------------------------------------------------------------------------


def _vertical_integral_tables(geom: TorusGeometry, max_in: int, max_out: int):
    """Quadrature values of the four triple trig integrals over [0, a].

    Returns dict of arrays indexed [k3+max_in, l3+max_in, m3+max_out].
    """
    n_z = 2 * (2 * max_in + max_out) + 16
    nodes, wts = leggauss(n_z)
    z = 0.5 * geom.a * (nodes + 1.0)
    w = 0.5 * geom.a * wts
    f_in = np.pi * np.arange(-max_in, max_in + 1)[:, None] * z[None, :] / geom.a
    f_out = np.pi * np.arange(-max_out, max_out + 1)[:, None] * z[None, :] / geom.a
    c_in, s_in = np.cos(f_in), np.sin(f_in)
    c_out, s_out = np.cos(f_out), np.sin(f_out)
    return {
        "ccc": np.einsum("kq,lq,mq,q->klm", c_in, c_in, c_out, w, optimize=True),
        "ssc": np.einsum("kq,lq,mq,q->klm", s_in, s_in, c_out, w, optimize=True),
        "css": np.einsum("kq,lq,mq,q->klm", c_in, s_in, s_out, w, optimize=True),
        "scs": np.einsum("kq,lq,mq,q->klm", s_in, c_in, s_out, w, optimize=True),
    }


def _advection_raw_vectorized(geom, ms_in, ms_out, ki, li, mi, tables, max_in, max_out):
    """<N_m, (N_k . grad) N_l> for index arrays, via the separable reduction."""
    nk = ms_in.n[ki]
    nl = ms_in.n[li]
    nm = ms_out.n[mi]
    kpl = ms_in.kprime[li]
    adv_h = 1j * (kpl[:, 0] * nk[:, 0] + kpl[:, 1] * nk[:, 1])
    k3 = ms_in.k_int[ki, 2] + max_in
    l3 = ms_in.k_int[li, 2] + max_in
    m3 = ms_out.k_int[mi, 2] + max_out
    i_ccc = tables["ccc"][k3, l3, m3]
    i_ssc = tables["ssc"][k3, l3, m3]
    i_css = tables["css"][k3, l3, m3]
    i_scs = tables["scs"][k3, l3, m3]
    hdot = np.conj(nm[:, 0]) * nl[:, 0] + np.conj(nm[:, 1]) * nl[:, 1]
    vdot = np.conj(nm[:, 2]) * nl[:, 2]
    lk3p = kpl[:, 2]
    return (geom.a1 * geom.a2) * (
        hdot * (adv_h * i_ccc - nk[:, 2] * lk3p * i_ssc)
        + vdot * (adv_h * i_css + nk[:, 2] * lk3p * i_scs)
    )


class TriadTable:
    """Resonant triads (k, l, m) with symmetrized coefficients.

    Stored as parallel index arrays into the input mode set (truncation N)
    and the output mode set (truncation out_truncation >= N, capturing the
    horizontal sum range and the vertical sign closure).
    """

    def __init__(self, geometry, in_truncation, out_truncation, tol, ki, li, mi, alpha):
        self.geometry = geometry
        self.in_truncation = in_truncation
        self.out_truncation = out_truncation
        self.tol = tol
        self.ki = ki
        self.li = li
        self.mi = mi
        self.alpha = alpha

    def __len__(self) -> int:
        return len(self.alpha)

    @property
    def mode_set_in(self) -> ModeSet:
        return mode_set(self.geometry, self.in_truncation)

    @property
    def mode_set_out(self) -> ModeSet:
        return mode_set(self.geometry, self.out_truncation)

    def triads(self):
        """Iterate (k, l, m, alpha) tuples in stored (grouped-by-m) order."""
        msi, mso = self.mode_set_in, self.mode_set_out
        for t in range(len(self)):
            yield (
                msi.modes[self.ki[t]],
                msi.modes[self.li[t]],
                mso.modes[self.mi[t]],
                self.alpha[t],
            )

    def restrict_outputs(self, truncation: int) -> "TriadTable":
        """Drop triads whose output mode falls outside the given box."""
        mso = self.mode_set_out
        target = mode_set(self.geometry, truncation)
        keep = []
        newmi = []
        for t in range(len(self)):
            m = mso.modes[self.mi[t]]
            j = target.index.get(m)
            if j is not None:
                keep.append(t)
                newmi.append(j)
        keep = np.array(keep, dtype=np.int64)
        return TriadTable(
            self.geometry,
            self.in_truncation,
            truncation,
            self.tol,
            self.ki[keep],
            self.li[keep],
            np.array(newmi, dtype=np.int64),
            self.alpha[keep],
        )

    def to_json(self) -> str:
        msi, mso = self.mode_set_in, self.mode_set_out
        rows = []
        for t in range(len(self)):
            k = msi.modes[self.ki[t]]
            l = msi.modes[self.li[t]]
            m = mso.modes[self.mi[t]]
            rows.append(
                list(k)
                + list(l)
                + list(m)
                + [float(self.alpha[t].real), float(self.alpha[t].imag)]
            )
        return json.dumps(
            {
                "geometry": {
                    "a1": self.geometry.a1,
                    "a2": self.geometry.a2,
                    "a": self.geometry.a,
                },
                "geometry_key": self.geometry.key(),
                "in_truncation": self.in_truncation,
                "out_truncation": self.out_truncation,
                "tolerance": self.tol,
                "triads": rows,
            },
            separators=(",", ":"),
        )

    @staticmethod
    def from_json(text: str) -> "TriadTable":
        doc = json.loads(text)
        geom = TorusGeometry(**doc["geometry"])
        msi = mode_set(geom, doc["in_truncation"])
        mso = mode_set(geom, doc["out_truncation"])
        ki, li, mi, alpha = [], [], [], []
        for row in doc["triads"]:
            ki.append(msi.index[tuple(row[0:3])])
            li.append(msi.index[tuple(row[3:6])])
            mi.append(mso.index[tuple(row[6:9])])
            alpha.append(row[9] + 1j * row[10])
        return TriadTable(
            geom,
            doc["in_truncation"],
            doc["out_truncation"],
            doc["tolerance"],
            np.array(ki, dtype=np.int64),
            np.array(li, dtype=np.int64),
            np.array(mi, dtype=np.int64),
            np.array(alpha, dtype=complex),
        )


class InteractionTable:
    """All nonzero symmetrized couplings within truncation, with phase gaps.

    Superset of the resonant TriadTable; dlam stores lam_m - lam_k - lam_l
    for the oscillatory form, and `resonant` flags exact cancellations.
    """

    def __init__(self, geometry, in_truncation, out_truncation, tol):
        self.geometry = geometry
        self.in_truncation = in_truncation
        self.out_truncation = out_truncation
        self.tol = tol
        ms_in = mode_set(geometry, in_truncation)
        ms_out = mode_set(geometry, out_truncation)
        max_in, max_out = in_truncation, out_truncation
        tables = _vertical_integral_tables(geometry, max_in, max_out)
        lookup = -np.ones((2 * max_out + 1,) * 3, dtype=np.int64)
        for m, i in ms_out.index.items():
            lookup[m[0] + max_out, m[1] + max_out, m[2] + max_out] = i

        all_ki, all_li, all_mi, all_alpha = [], [], [], []
        n_in = len(ms_in)
        l_idx = np.arange(n_in, dtype=np.int64)
        for ik in range(n_in):
            k = ms_in.modes[ik]
            m1 = k[0] + ms_in.k_int[:, 0]
            m2 = k[1] + ms_in.k_int[:, 1]
            if np.all(np.abs(m1) > max_out):
                continue
            for off_sign_k in (1, -1):
                for off_sign_l in (1, -1):
                    m3 = off_sign_k * k[2] + off_sign_l * ms_in.k_int[:, 2]
                    if off_sign_k < 0 and k[2] == 0:
                        continue  # duplicate of the +0 branch
                    ok = (
                        (np.abs(m1) <= max_out)
                        & (np.abs(m2) <= max_out)
                        & (np.abs(m3) <= max_out)
                    )
                    if off_sign_l < 0:
                        ok &= ms_in.k_int[:, 2] != 0
                    if not np.any(ok):
                        continue
                    mi = lookup[m1[ok] + max_out, m2[ok] + max_out, m3[ok] + max_out]
                    valid = mi >= 0
                    if not np.any(valid):
                        continue
                    li = l_idx[ok][valid]
                    mi = mi[valid]
                    ki = np.full(len(li), ik, dtype=np.int64)
                    raw_kl = _advection_raw_vectorized(
                        geometry, ms_in, ms_out, ki, li, mi, tables, max_in, max_out
                    )
                    raw_lk = _advection_raw_vectorized(
                        geometry, ms_in, ms_out, li, ki, mi, tables, max_in, max_out
                    )
                    alpha = 0.5 * (raw_kl + raw_lk)
                    keep = np.abs(alpha) > _ALPHA_CUT
                    all_ki.append(ki[keep])
                    all_li.append(li[keep])
                    all_mi.append(mi[keep])
                    all_alpha.append(alpha[keep])

        ki = np.concatenate(all_ki) if all_ki else np.zeros(0, dtype=np.int64)
        li = np.concatenate(all_li) if all_li else np.zeros(0, dtype=np.int64)
        mi = np.concatenate(all_mi) if all_mi else np.zeros(0, dtype=np.int64)
        alpha = np.concatenate(all_alpha) if all_alpha else np.zeros(0, dtype=complex)
        # the (eta_k, eta_l) double loop can produce the same (k,l,m) triple
        # twice when a vertical index vanishes; deduplicate exactly
        order = np.lexsort((li, ki, mi))
        ki, li, mi, alpha = ki[order], li[order], mi[order], alpha[order]
        if len(ki):
            dup = np.zeros(len(ki), dtype=bool)
            dup[1:] = (
                (ki[1:] == ki[:-1]) & (li[1:] == li[:-1]) & (mi[1:] == mi[:-1])
            )
            ki, li, mi, alpha = ki[~dup], li[~dup], mi[~dup], alpha[~dup]
        self.ki, self.li, self.mi, self.alpha = ki, li, mi, alpha
        self.dlam = ms_out.lam[mi] - ms_in.lam[ki] - ms_in.lam[li]
        self.resonant = self._classify()

    def _classify(self) -> np.ndarray:
        ms_in = mode_set(self.geometry, self.in_truncation)
        ms_out = mode_set(self.geometry, self.out_truncation)
        res = np.abs(self.dlam) <= self.tol
        candidates = np.nonzero(
            (np.abs(self.dlam) <= _FLOAT_SCREEN) & ~res
        )[0]
        lam2_cache: dict[Mode, tuple[int, Fraction]] = {}

        def exact(mode):
            if mode not in lam2_cache:
                lam2_cache[mode] = _lambda_exact(self.geometry, mode)
            return lam2_cache[mode]

        for t in candidates:
            k = ms_in.modes[self.ki[t]]
            l = ms_in.modes[self.li[t]]
            m = ms_out.modes[self.mi[t]]
            sk, rk = exact(k)
            sl, rl = exact(l)
            sm, rm = exact(m)
            if _sqrt_sum_is_zero([(sk, rk), (sl, rl), (-sm, rm)]):
                res[t] = True
        return res


_INTERACTION_CACHE: dict[tuple, InteractionTable] = {}


def interaction_table(
    geom: TorusGeometry,
    N: int,
    out_truncation: int | None = None,
    tol: float = DEFAULT_RES_TOL,
) -> InteractionTable:
    if out_truncation is None:
        out_truncation = 2 * N
    key = (geom.key(), N, out_truncation, tol)
    if key not in _INTERACTION_CACHE:
        _INTERACTION_CACHE[key] = InteractionTable(geom, N, out_truncation, tol)
    return _INTERACTION_CACHE[key]


def build_triad_table(
    geom: TorusGeometry,
    N: int,
    tol: float = DEFAULT_RES_TOL,
    out_truncation: int | None = None,
) -> TriadTable:
    """Assemble the resonant triad table (deterministic, grouped by m)."""
    full = interaction_table(geom, N, out_truncation, tol)
    sel = np.nonzero(full.resonant)[0]
    return TriadTable(
        geom,
        N,
        full.out_truncation,
        tol,
        full.ki[sel],
        full.li[sel],
        full.mi[sel],
        full.alpha[sel],
    )


def load_or_build_triad_table(
    path, geom: TorusGeometry, N: int, tol=DEFAULT_RES_TOL, rebuild: bool = False
) -> TriadTable:
    import os

    if not rebuild and os.path.exists(path):
        with open(path) as fh:
            table = TriadTable.from_json(fh.read())
        if (
            table.geometry.key() == geom.key()
            and table.in_truncation == N
            and table.tol == tol
        ):
            return table
    table = build_triad_table(geom, N, tol)
    with open(path, "w") as fh:
        fh.write(table.to_json())
    return table


# ---------------------------------------------------------------------------
# applying the forms
# ---------------------------------------------------------------------------


def _apply_table(ki, li, mi, coeff, w1, w2, n_out):
    out = np.zeros(n_out, dtype=complex)
    _kernels.triad_accumulate(out, coeff, ki, li, mi, w1.data, w2.data)
    return out


def qbar_apply(
    table: TriadTable, w1: SpectralField, w2: SpectralField, out_truncation=None
) -> SpectralField:
    """Filtered quadratic form Qbar(w1, w2), truncated to the input box."""
    for w in (w1, w2):
        if w.truncation != table.in_truncation or w.geometry != table.geometry:
            raise ValueError("field truncation does not match table")
    target = out_truncation if out_truncation is not None else table.in_truncation
    if target == table.out_truncation:
        data = _apply_table(
            table.ki, table.li, table.mi, table.alpha, w1, w2,
            len(table.mode_set_out),
        )
        return SpectralField(table.geometry, target, data)
    restricted = _restricted_view(table, target)
    data = _apply_table(
        restricted.ki, restricted.li, restricted.mi, restricted.alpha, w1, w2,
        len(mode_set(table.geometry, target)),
    )
    return SpectralField(table.geometry, target, data)


_RESTRICT_CACHE: dict[tuple, TriadTable] = {}


def _restricted_view(table: TriadTable, truncation: int) -> TriadTable:
    key = (
        table.geometry.key(),
        table.in_truncation,
        table.out_truncation,
        table.tol,
        len(table),
        truncation,
    )
    if key not in _RESTRICT_CACHE:
        _RESTRICT_CACHE[key] = table.restrict_outputs(truncation)
    return _RESTRICT_CACHE[key]


def q_tau_apply(
    geom: TorusGeometry,
    N: int,
    w1: SpectralField,
    w2: SpectralField,
    tau: float,
    out_truncation: int | None = None,
) -> SpectralField:
    """Oscillatory form Q(tau, w1, w2) with phases e^{i(lam_m-lam_k-lam_l)tau}."""
    full = interaction_table(geom, N, out_truncation)
    coeff = full.alpha * np.exp(1j * full.dlam * tau)
    data = _apply_table(
        full.ki, full.li, full.mi, coeff, w1, w2,
        len(mode_set(geom, full.out_truncation)),
    )
    return SpectralField(geom, full.out_truncation, data).restricted(N)


def q_tau_average(
    geom: TorusGeometry,
    N: int,
    w1: SpectralField,
    w2: SpectralField,
    theta: float,
    out_truncation: int | None = None,
) -> SpectralField:
    """Exact time average (1/theta) int_0^theta Q(tau, w1, w2) dtau."""
    full = interaction_table(geom, N, out_truncation)
    factor = np.ones(len(full.alpha), dtype=complex)
    nz = ~full.resonant
    d = full.dlam[nz]
    factor[nz] = (np.exp(1j * d * theta) - 1.0) / (1j * d * theta)
    data = _apply_table(
        full.ki, full.li, full.mi, full.alpha * factor, w1, w2,
        len(mode_set(geom, full.out_truncation)),
    )
    return SpectralField(geom, full.out_truncation, data).restricted(N)
