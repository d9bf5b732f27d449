"""Experiment orchestration: one JSON config in, deterministic artifacts out.

Every CSV starts with a schema/version comment and contains no wall-clock
data; timing and provenance go to a .meta.json sidecar so reruns with the
same config and seed are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .envelope import (
    EnvelopeConfig,
    ResonantTorusError,
    solve_envelope,
    solve_mean_limit,
)
from .forcing import (
    PhasePoint,
    WindStress,
    build_H2_counterexample,
    check_H1,
    check_H2,
    reconstruct_sigma_alpha,
)
from .geometry import (
    SpectralField,
    TorusGeometry,
    coriolis_diagonal_report,
    mode_set,
    orthonormality_report,
    random_real_field,
)
from .layers import (
    LayerParams,
    layer_residual_uT,
    psi,
    psi_ode_residual,
    top_layer_uh,
)
from .resonance import check_nonresonant_torus, load_or_build_triad_table
from .sources import (
    S_T_delta,
    pumping_coefficient_A,
    sbar_field,
    stheta_average,
)

SCHEMA_VERSION = "v1"


class ConfigError(Exception):
    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field


def fail(code: int, kind: str, message: str, field: str = "") -> int:
    doc = {"error": {"kind": kind, "message": message}}
    if field:
        doc["error"]["field"] = field
    print(json.dumps(doc), file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------


def _expect(doc: dict, path: str, allowed: set, required: set):
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(
            f"unknown keys {sorted(unknown)}", f"{path}.{sorted(unknown)[0]}"
        )
    for key in required:
        if key not in doc:
            raise ConfigError("missing required field", f"{path}.{key}" if path else key)


def parse_geometry(doc: dict) -> TorusGeometry:
    _expect(doc, "geometry", {"a1", "a2", "a"}, {"a1", "a2", "a"})
    try:
        return TorusGeometry(float(doc["a1"]), float(doc["a2"]), float(doc["a"]))
    except ValueError as exc:
        raise ConfigError(str(exc), "geometry")


def parse_wind(doc: dict, geom: TorusGeometry) -> WindStress:
    try:
        return WindStress.from_config(geom, doc)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc), "wind")


def parse_solver(doc: dict, defaults=None) -> dict:
    allowed = {
        "epsilon", "nu", "beta", "delta", "N", "dt", "T_final", "output_every",
    }
    _expect(doc, "solver", allowed, {"epsilon", "nu", "beta", "N", "dt", "T_final"})
    out = dict(doc)
    out.setdefault("delta", 1e-3)
    out.setdefault("output_every", 1)
    return out


def parse_grid(doc: dict) -> dict:
    allowed = {"Nz", "stretch", "Nh", "dt", "T_final", "save_every"}
    _expect(doc, "grid", allowed, {"Nz", "stretch", "Nh", "dt", "T_final"})
    out = dict(doc)
    out.setdefault("save_every", 1)
    return out


TOP_LEVEL_KEYS = {
    "experiment", "geometry", "wind", "solver", "grid", "out_dir", "seed", "params",
}


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    _expect(doc, "", TOP_LEVEL_KEYS, {"geometry"})
    return doc


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, complex):
        return f"{x.real!r}{x.imag:+}j"
    return repr(float(x))


def write_csv(path: str, kind: str, seed: int, header: list, rows) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(f"# schema=rotwind/{kind}/{SCHEMA_VERSION} seed={seed}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    os.replace(tmp, path)


def write_json(path: str, doc) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_meta(path: str, runtime_s: float, extra=None) -> None:
    doc = {
        "written_at": datetime.now(timezone.utc).isoformat(),
        "runtime_s": runtime_s,
        "rotwind_version": __version__,
    }
    if extra:
        doc.update(extra)
    write_json(path, doc)


def component_rng(master_seed: int, component: str, index: int = 0):
    """Counter-based fan-out of the master seed (stable across runs)."""
    label = sum(ord(c) * 31**i for i, c in enumerate(component)) % (2**31)
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(label, index))
    )


def ordered_parallel_map(fn, items, threads: int):
    """Map preserving input order; thread pool when threads > 1.

    Results are collected in submission order regardless of completion
    order, so artifacts stay deterministic.
    """
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def traj_rows(traj):
    return [
        (
            traj.times[i],
            traj.diagnostics["energy"][i],
            traj.diagnostics["dissipation"][i],
            traj.diagnostics["pumping"][i],
            traj.diagnostics["source_work"][i],
        )
        for i in range(len(traj.times))
    ]


TRAJ_HEADER = ["time", "energy", "dissipation", "pumping", "source_work"]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_basis(cfg, out, seed, args):
    geom = parse_geometry(cfg["geometry"])
    params = cfg.get("params", {})
    _expect(params, "params", {"N", "resolution", "tol"}, set())
    N = int(params.get("N", 4))
    ms = mode_set(geom, N)
    rows = []
    for i, k in enumerate(ms.modes):
        rows.append(
            (
                k[0], k[1], k[2], ms.lam[i],
                ms.n[i, 0].real, ms.n[i, 0].imag,
                ms.n[i, 1].real, ms.n[i, 1].imag,
                ms.n[i, 2].real, ms.n[i, 2].imag,
            )
        )
    write_csv(
        os.path.join(out, "eigenmodes.csv"), "eigenmodes", seed,
        ["k1", "k2", "k3", "lambda", "re_n1", "im_n1", "re_n2", "im_n2", "re_n3", "im_n3"],
        rows,
    )
    off, diag = orthonormality_report(geom, N, params.get("resolution"))
    cor = coriolis_diagonal_report(geom, N, params.get("resolution"))
    from .geometry import DEFAULT_ORTHO_TOL

    tol = float(params.get("tol", DEFAULT_ORTHO_TOL))
    write_json(
        os.path.join(out, "basis_report.json"),
        {
            "truncation": N,
            "tolerance": tol,
            "max_offdiagonal": off,
            "max_diagonal_error": diag,
            "max_coriolis_error": cor,
            "passed": bool(off < tol and diag < tol and cor < tol),
        },
    )
    return 0


def cmd_resonance(cfg, out, seed, args):
    geom = parse_geometry(cfg["geometry"])
    params = cfg.get("params", {})
    _expect(params, "params", {"N", "tol", "audit_K"}, set())
    N = int(params.get("N", 3))
    tol = float(params.get("tol", 1e-12))
    cache = os.path.join(out, "triads_cache.json")
    table = load_or_build_triad_table(cache, geom, N, tol, rebuild=args.rebuild_cache)
    msi, mso = table.mode_set_in, table.mode_set_out
    rows = []
    for t in range(len(table)):
        k = msi.modes[table.ki[t]]
        l = msi.modes[table.li[t]]
        m = mso.modes[table.mi[t]]
        rows.append(k + l + m + (table.alpha[t].real, table.alpha[t].imag))
    write_csv(
        os.path.join(out, "triads.csv"), "triads", seed,
        ["k1", "k2", "k3", "l1", "l2", "l3", "m1", "m2", "m3", "re_alpha", "im_alpha"],
        rows,
    )
    K = int(params.get("audit_K", N))
    rep = check_nonresonant_torus(geom, K, tol)
    write_csv(
        os.path.join(out, "nonres_audit.csv"), "nonres_audit", seed,
        ["k1", "k2", "k3", "n1", "n2", "n3", "eta1", "eta2", "eta3"],
        [k + n + e for k, n, e in rep.violations],
    )
    write_json(
        os.path.join(out, "resonance_report.json"),
        {
            "triads": len(table),
            "nonresonant": rep.is_nonresonant,
            "violations": len(rep.violations),
            "audit_cutoff": K,
            "tolerance": tol,
        },
    )
    return 0


def cmd_forcing_check(cfg, out, seed, args):
    geom = parse_geometry(cfg["geometry"])
    params = cfg.get("params", {})
    _expect(
        params, "params",
        {"alphas", "eta", "counterexample", "sigma_alpha_alphas", "T_check"}, set(),
    )
    if params.get("counterexample"):
        ws = build_H2_counterexample()
    else:
        if "wind" not in cfg:
            raise ConfigError("missing required field", "wind")
        ws = parse_wind(cfg["wind"], geom)
    alphas = [float(a) for a in params.get("alphas", (1e-1, 1e-2, 1e-3))]
    h1 = check_H1(ws, alpha_grid=alphas)
    h2 = check_H2(ws, eta=float(params.get("eta", 0.1)), alpha_grid=alphas)
    lam_grid = np.linspace(-3.0, 3.0, 1201)
    from .forcing import falpha_curve

    curve_rows = []
    kh0 = ws.stored_kh()[0]
    curves = {a: np.linalg.norm(falpha_curve(ws, lam_grid, a, kh0), axis=-1) for a in alphas}
    for i, lam in enumerate(lam_grid):
        curve_rows.append((lam, *[curves[a][i] for a in alphas]))
    write_csv(
        os.path.join(out, "falpha_curve.csv"), "falpha_curve", seed,
        ["lambda"] + [f"abs_falpha_{a!r}" for a in alphas],
        curve_rows,
    )
    sa_alphas = [float(a) for a in params.get("sigma_alpha_alphas", (1e-1, 1e-2))]
    rng = component_rng(seed, "forcing")
    om = ws.random_phase(rng)
    taus = np.linspace(0.0, float(params.get("T_check", 5.0)), 21)
    sa_rows = []
    for a in sa_alphas:
        sup = 0.0
        for tau in taus:
            diff = reconstruct_sigma_alpha(ws, a, 0.0, tau, np.zeros(2), om) - ws.sample(
                0.0, tau, np.zeros(2), om
            )
            sup = max(sup, float(np.max(np.abs(diff))))
        sa_rows.append((a, sup))
    write_csv(
        os.path.join(out, "sigma_alpha.csv"), "sigma_alpha", seed,
        ["alpha", "sup_err"], sa_rows,
    )
    write_json(
        os.path.join(out, "forcing_report.json"),
        {
            "H1_closed_form": h1.closed_form,
            "H1_grid": {repr(k): v for k, v in h1.grid_values.items()},
            "H2_passed": h2.passed,
            "H2_min_distance": h2.min_distance,
            "H2_sup_curve": {repr(k): v for k, v in h2.sup_curve.items()},
            "verdict": "pass" if h2.passed else "fail",
        },
    )
    return 0


def cmd_layers(cfg, out, seed, args):
    geom = parse_geometry(cfg["geometry"])
    if "wind" not in cfg:
        raise ConfigError("missing required field", "wind")
    ws = parse_wind(cfg["wind"], geom)
    params_doc = cfg.get("params", {})
    _expect(params_doc, "params", {"epsilon", "nu", "beta", "delta", "sweep"}, set())
    lp = LayerParams(
        epsilon=float(params_doc.get("epsilon", 1e-2)),
        nu=float(params_doc.get("nu", 1e-2)),
        beta=float(params_doc.get("beta", 10.0)),
        delta=float(params_doc.get("delta", 1e-3)),
    )
    rng = component_rng(seed, "layers")
    om = ws.random_phase(rng)
    taus = np.linspace(0.0, 6.0, 13)
    zetas = np.linspace(0.0, 8.0, 33)
    rows = []
    for tau in taus:
        uh = top_layer_uh(ws, lp, 0.0, tau, np.zeros(2), zetas, om)
        from .layers import top_layer_u3

        u3 = top_layer_u3(ws, lp, 0.0, tau, np.zeros(2), zetas, om)
        for i, zeta in enumerate(zetas):
            rows.append(
                (
                    tau, zeta,
                    uh[i, 0].real, uh[i, 0].imag,
                    uh[i, 1].real, uh[i, 1].imag,
                    u3[i].real, u3[i].imag,
                )
            )
    write_csv(
        os.path.join(out, "layer_profile.csv"), "layer_profile", seed,
        ["tau", "zeta", "re_u1", "im_u1", "re_u2", "im_u2", "re_u3", "im_u3"],
        rows,
    )
    res = layer_residual_uT(ws, lp, om, np.linspace(0.5, 2.5, 3), np.linspace(0.5, 2.0, 3))
    sweep = params_doc.get("sweep", [1e-2, 1e-3, 1e-4])
    sweep_rows = []
    for eps in sweep:
        p = LayerParams(epsilon=float(eps), nu=float(eps), beta=lp.beta, delta=lp.delta)
        scale = p.eta * p.beta
        zg = np.linspace(0.0, 10.0, 101)
        sup = 0.0
        l2 = 0.0
        for tau in np.linspace(0, 4, 5):
            u = top_layer_uh(ws, p, 0.0, tau, np.zeros(2), zg, om)
            sup = max(sup, float(np.max(np.abs(u))))
            l2 = max(l2, float(np.sqrt(np.trapezoid(np.sum(np.abs(u) ** 2, axis=-1), zg))))
        sweep_rows.append((eps, eps, sup / scale, l2 / scale))
    write_csv(
        os.path.join(out, "scaling.csv"), "layer_scaling", seed,
        ["epsilon", "nu", "ratio_sup", "ratio_l2"], sweep_rows,
    )
    write_json(
        os.path.join(out, "layer_report.json"),
        {
            "pde_residual_fd": res,
            "psi_ode_residual": psi_ode_residual(np.linspace(0.1, 3.0, 30)),
            "psi_at_0": float(psi(0.0)),
            "psi_at_2": float(psi(2.0)),
            "regime": lp.regime_flags(),
        },
    )
    return 0


def cmd_sources(cfg, out, seed, args):
    geom = parse_geometry(cfg["geometry"])
    if "wind" not in cfg:
        raise ConfigError("missing required field", "wind")
    ws = parse_wind(cfg["wind"], geom)
    params_doc = cfg.get("params", {})
    _expect(
        params_doc, "params",
        {"epsilon", "nu", "beta", "delta", "N", "thetas", "A_table_N"}, set(),
    )
    lp = LayerParams(
        epsilon=float(params_doc.get("epsilon", 1e-2)),
        nu=float(params_doc.get("nu", 1e-2)),
        beta=float(params_doc.get("beta", 10.0)),
        delta=float(params_doc.get("delta", 1e-3)),
    )
    N = int(params_doc.get("N", 2))
    ms = mode_set(geom, int(params_doc.get("A_table_N", 4)))
    rows = []
    for k in ms.modes:
        A = pumping_coefficient_A(geom, k)
        rows.append((k[0], k[1], k[2], A.real, A.imag))
    write_csv(
        os.path.join(out, "pumping.csv"), "pumping", seed,
        ["k1", "k2", "k3", "re_A", "im_A"], rows,
    )
    rng = component_rng(seed, "sources")
    om = ws.random_phase(rng)
    w = random_real_field(geom, N, rng)
    sbar = sbar_field(geom, w, ws, lp, 0.0, om, N)
    thetas = [float(t) for t in params_doc.get("thetas", (1e2, 1e3, 1e4))]
    st_rows = []
    for th in thetas:
        sth = stheta_average(geom, w, ws, lp, 0.0, om, th, N)
        st_rows.append((th, (sth - sbar).norm()))
    write_csv(
        os.path.join(out, "stheta.csv"), "stheta", seed, ["theta", "err"], st_rows
    )
    st = S_T_delta(ws, geom, lp.delta, 0.0, om, N)
    with open(os.path.join(out, "st_field.json"), "w") as fh:
        fh.write(st.to_json())
    slope = float(
        np.polyfit(np.log([r[0] for r in st_rows]), np.log([max(r[1], 1e-300) for r in st_rows]), 1)[0]
    )
    write_json(
        os.path.join(out, "sources_report.json"),
        {"stheta_slope": slope, "sbar_norm": sbar.norm(), "st_delta_norm": st.norm()},
    )
    return 0


def _declared_envelope(cfg, geom):
    solver = parse_solver(cfg.get("solver", {}))
    return EnvelopeConfig(
        epsilon=float(solver["epsilon"]),
        nu=float(solver["nu"]),
        beta=float(solver["beta"]),
        delta=float(solver["delta"]),
        N=int(solver["N"]),
        dt=float(solver["dt"]),
        T_final=float(solver["T_final"]),
        output_every=int(solver["output_every"]),
    )


def _initial_field(cfg, geom, N, seed):
    params = cfg.get("params", {})
    preset = params.get("u0", "random")
    if preset == "zero":
        return SpectralField(geom, N)
    if preset == "single":
        f = SpectralField(geom, N)
        f[(1, 0, 1)] = 0.2
        f[(-1, 0, -1)] = np.conj(0.2)
        return f
    if preset == "shear2d":
        f = SpectralField(geom, N)
        f[(0, 1, 0)] = 0.3
        f[(0, -1, 0)] = np.conj(0.3)
        return f
    rng = component_rng(seed, "u0")
    return random_real_field(geom, N, rng, decay=1.5)


def cmd_solve_envelope(cfg, out, seed, args):
    geom = parse_geometry(cfg["geometry"])
    if "solver" not in cfg:
        raise ConfigError("missing required field", "solver")
    env_cfg = _declared_envelope(cfg, geom)
    params = cfg.get("params", {})
    _expect(params, "params", {"u0", "snapshots"}, set())
    ws = parse_wind(cfg["wind"], geom) if "wind" in cfg else None
    om = ws.random_phase(component_rng(seed, "phase")) if ws else None
    u0 = _initial_field(cfg, geom, env_cfg.N, seed)
    traj = solve_envelope(u0, ws, env_cfg, om)
    write_csv(
        os.path.join(out, "envelope_traj.csv"), "trajectory", seed,
        TRAJ_HEADER, traj_rows(traj),
    )
    if params.get("snapshots"):
        for i in range(len(traj.times)):
            with open(os.path.join(out, f"envelope_snap_{i:05d}.json"), "w") as fh:
                fh.write(traj.field(i).to_json())
    return 0


def cmd_mean_limit(cfg, out, seed, args):
    geom = parse_geometry(cfg["geometry"])
    if "solver" not in cfg:
        raise ConfigError("missing required field", "solver")
    env_cfg = _declared_envelope(cfg, geom)
    params = cfg.get("params", {})
    _expect(params, "params", {"u0", "n_mc"}, set())
    ws = parse_wind(cfg["wind"], geom) if "wind" in cfg else None
    u0 = _initial_field(cfg, geom, env_cfg.N, seed)
    n_mc = int(params.get("n_mc", 16))
    try:
        res = solve_mean_limit(u0, ws, env_cfg)
    except ResonantTorusError as exc:
        raise ConfigError(str(exc), "geometry")
    write_csv(
        os.path.join(out, "meanlimit_wbar.csv"), "trajectory", seed,
        TRAJ_HEADER, traj_rows(res.wbar),
    )
    write_csv(
        os.path.join(out, "meanlimit_wtilde.csv"), "trajectory", seed,
        TRAJ_HEADER, traj_rows(res.wtilde),
    )
    rows = []
    if ws is not None and n_mc > 0:
        def one_realization(i):
            om = ws.random_phase(component_rng(seed, "mc", i))
            return solve_envelope(u0, ws, env_cfg, om).coeffs

        results = ordered_parallel_map(one_realization, list(range(n_mc)), args.threads)
        acc = None
        for coeffs in results:
            acc = coeffs if acc is None else acc + coeffs
        mean = acc / n_mc
        ref = res.wbar.coeffs + res.wtilde.coeffs
        for i, t in enumerate(res.wbar.times):
            rows.append((t, float(np.linalg.norm(mean[i] - ref[i]))))
    write_csv(
        os.path.join(out, "meanlimit_compare.csv"), "meanlimit_compare", seed,
        ["time", "l2_diff"], rows,
    )
    write_json(
        os.path.join(out, "meanlimit_report.json"),
        {
            "n_mc": n_mc,
            "nonresonant": res.nonresonance.is_nonresonant if res.nonresonance else None,
            "max_l2_diff": max((r[1] for r in rows), default=0.0),
        },
    )
    return 0


def cmd_solve_direct(cfg, out, seed, args):
    from .direct import GridConfig, solve_direct_linear

    geom = parse_geometry(cfg["geometry"])
    if "grid" not in cfg:
        raise ConfigError("missing required field", "grid")
    grid_doc = parse_grid(cfg["grid"])
    params = cfg.get("params", {})
    _expect(params, "params", {"epsilon", "nu", "beta", "u0"}, {"epsilon", "nu", "beta"})
    grid = GridConfig(
        Nz=int(grid_doc["Nz"]),
        stretch=float(grid_doc["stretch"]),
        Nh=int(grid_doc["Nh"]),
        dt=float(grid_doc["dt"]),
        T_final=float(grid_doc["T_final"]),
        save_every=int(grid_doc["save_every"]),
    )
    ws = parse_wind(cfg["wind"], geom) if "wind" in cfg else None
    om = ws.random_phase(component_rng(seed, "phase")) if ws else None
    u0 = _initial_field(cfg, geom, max(grid.Nh, 1), seed)
    traj = solve_direct_linear(
        u0, ws, float(params["epsilon"]), float(params["nu"]), float(params["beta"]),
        grid, geom, om,
    )
    write_csv(
        os.path.join(out, "direct_traj.csv"), "direct_trajectory", seed,
        ["time", "energy", "div_max"],
        [
            (traj.times[i], traj.diagnostics["energy"][i], traj.diagnostics["div_max"][i])
            for i in range(len(traj.times))
        ],
    )
    rows = []
    j = traj.khs.index(ws.stored_kh()[0]) if ws else 1
    for i, zv in enumerate(traj.z):
        u = traj.uhat[-1, j]
        rows.append((zv, u[0, i].real, u[0, i].imag, u[1, i].real, u[1, i].imag,
                     u[2, i].real, u[2, i].imag))
    write_csv(
        os.path.join(out, "direct_profile.csv"), "direct_profile", seed,
        ["z", "re_u1", "im_u1", "re_u2", "im_u2", "re_u3", "im_u3"], rows,
    )
    return 0


def cmd_compare(cfg, out, seed, args):
    from .direct import GridConfig, convergence_study

    geom = parse_geometry(cfg["geometry"])
    if "grid" not in cfg:
        raise ConfigError("missing required field", "grid")
    grid_doc = parse_grid(cfg["grid"])
    params = cfg.get("params", {})
    _expect(
        params, "params",
        {"eps_list", "beta_scale", "N", "u0", "envelope_dt", "delta"}, {"eps_list"},
    )
    N = int(params.get("N", 2))
    grid = GridConfig(
        Nz=int(grid_doc["Nz"]),
        stretch=float(grid_doc["stretch"]),
        Nh=int(grid_doc["Nh"]),
        dt=float(grid_doc["dt"]),
        T_final=float(grid_doc["T_final"]),
        save_every=int(grid_doc["save_every"]),
    )
    ws = parse_wind(cfg["wind"], geom) if "wind" in cfg else None
    om = ws.random_phase(component_rng(seed, "phase")) if ws else None
    u0 = _initial_field(cfg, geom, N, seed)
    rows = convergence_study(
        u0, ws, [float(e) for e in params["eps_list"]], geom, N, grid, om,
        beta_scale=float(params.get("beta_scale", 1.0)),
        envelope_dt=float(params.get("envelope_dt", 1e-3)),
        delta=float(params.get("delta", 1e-3)),
    )
    write_csv(
        os.path.join(out, "compare.csv"), "convergence", seed,
        ["epsilon", "nu", "beta", "err_LinfL2", "err_L2H10"],
        [(r.epsilon, r.nu, r.beta, r.err_linf_l2, r.err_l2_h10) for r in rows],
    )
    write_json(
        os.path.join(out, "compare_runtimes.json"),
        {repr(r.epsilon): r.runtime_s for r in rows},
    )
    return 0


COMMANDS = {
    "basis": cmd_basis,
    "resonance": cmd_resonance,
    "forcing-check": cmd_forcing_check,
    "layers": cmd_layers,
    "sources": cmd_sources,
    "solve-envelope": cmd_solve_envelope,
    "mean-limit": cmd_mean_limit,
    "solve-direct": cmd_solve_direct,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rotwind",
        description="spectral toolkit for wind-driven fast-rotating fluids",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--rebuild-cache", action="store_true")
    args = parser.parse_args(argv)

    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config)
        out = args.out or os.environ.get("ROTWIND_OUT") or cfg.get("out_dir") or "."
        os.makedirs(out, exist_ok=True)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        rc = COMMANDS[args.command](cfg, out, seed, args)
    except ConfigError as exc:
        return fail(2, "validation", str(exc), exc.field)
    except (ValueError, ArithmeticError) as exc:
        return fail(3, "numerical", str(exc))
    write_meta(
        os.path.join(out, f"{args.command}.meta.json"),
        time.perf_counter() - t0,
        {"command": args.command, "seed": seed},
    )
    return rc


if __name__ == "__main__":
    sys.exit(main())
