"""``fracmap`` command line.

Every command reads its inputs, runs one experiment and writes its outputs
atomically. Exit status: 0 success, 1 a checked invariant failed, 2 bad
input, configuration or IO. ``FRACMAP_THREADS`` caps the FFT worker count.

CSV outputs carry a header row. Lengths are in the grid units of the input
field, densities and energies are dimensionless.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import fft as sfft

from . import __version__
from .energy import Ball, MinimizeOptions, StagnationError, half_energy, minimize
from .extension import (HalfGridSpec, ResolutionError, density_curve, monotonicity_audit,
                        poisson_extend, xi_density)
from .fields import GridSpec, analytic_vortex, constant_field, gradient_norm
from .io import (FormatError, dumps17, read_extension, read_fhm, read_measure, read_points,
                 write_csv, write_extension, write_fhm, write_json)
from .reifenberg import (ConstantTheta, DiscreteMeasure, FieldTheta, OracleConsistencyError,
                         PointSingularityTheta, covering_tree, jones_beta, multiscale_beta_integral,
                         vitali_subcover)
from .symmetry import (defect_table, gradient_superlevel_volume, quantitative_stratum,
                       regularity_scale, regularity_sublevel_volume, tube_volume)

CONFIG_VERSION = 1
RHO_MAX = 0.01


class ConfigError(ValueError):
    """Invalid configuration or arguments (exit status 2)."""


# --------------------------------------------------------------------------
# argument parsing helpers


def _floats(text: str) -> list:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got '{text}'") from None


def _pairs(text: str) -> list:
    out = []
    for item in str(text).split(","):
        try:
            a, b = item.split(":")
            out.append((float(a), float(b)))
        except ValueError:
            raise ConfigError(f"expected rho:r pairs, got '{item}'") from None
    return out


def _need(ns, *names):
    for nm in names:
        if getattr(ns, nm, None) is None:
            raise ConfigError(f"missing required option --{nm.replace('_', '-')}")


def _threads() -> int:
    raw = os.environ.get("FRACMAP_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        t = int(raw)
    except ValueError:
        raise ConfigError(f"FRACMAP_THREADS must be a positive integer, got '{raw}'") from None
    if t < 1:
        raise ConfigError("FRACMAP_THREADS must be a positive integer")
    return t


def validate(ns) -> None:
    """Range checks shared by command line and config runs."""
    rho = getattr(ns, "rho", None)
    if rho is not None and not 0 < rho <= RHO_MAX:
        raise ConfigError(f"rho = {rho} violates 0 < rho <= 1/100")
    r, R = getattr(ns, "r", None), getattr(ns, "R", None)
    if r is not None and R is not None and not 0 < r < R <= 1:
        raise ConfigError(f"need 0 < r < R <= 1, got r = {r}, R = {R}")
    if r is not None and R is None and not r > 0:
        raise ConfigError("r must be positive")
    k = getattr(ns, "k", None)
    if k is not None and k < 0:
        raise ConfigError("k must be nonnegative")
    eps = getattr(ns, "eps", None)
    if eps is not None and not eps > 0:
        raise ConfigError("eps must be positive")
    delta = getattr(ns, "delta", None)
    if delta is not None and not delta > 0:
        raise ConfigError("delta must be positive")


def _check_k(k, n):
    if not 0 <= k <= n:
        raise ConfigError(f"k = {k} must lie in [0, {n}]")


# --------------------------------------------------------------------------
# shared pipeline pieces


def _extension(ns):
    if getattr(ns, "ext", None):
        return read_extension(ns.ext)
    _need(ns, "field")
    u = read_fhm(ns.field)
    return _extend_field(u, ns)


def _extend_field(u, ns):
    center = _floats(ns.center) if getattr(ns, "center", None) else [0.0] * u.n
    hw = ns.half_width
    zmax = ns.z_max if ns.z_max is not None else hw
    maker = HalfGridSpec.geometric if ns.levels == "geometric" else HalfGridSpec.uniform
    try:
        hs = maker(u.spec, hw, zmax, center=center)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return poisson_extend(u, hs)


def _emit_csv(path, header, rows):
    if path:
        write_csv(path, header, rows)
    else:
        from .io import csv_text

        sys.stdout.write(csv_text(header, rows))


def _emit_json(path, obj):
    if path:
        write_json(path, obj)
    else:
        sys.stdout.write(dumps17(obj) + "\n")


# --------------------------------------------------------------------------
# commands


def cmd_minimize(ns) -> int:
    _need(ns, "field", "omega", "out")
    u = read_fhm(ns.field)
    try:
        omega = Ball.parse(ns.omega)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    opts = MinimizeOptions()
    if ns.opts:
        raw = _read_json(ns.opts)
        raw.pop("version", None)
        names = {f.name for f in dataclasses.fields(MinimizeOptions)}
        bad = set(raw) - names
        if bad:
            raise ConfigError(f"unknown minimizer options: {sorted(bad)}")
        try:
            opts = MinimizeOptions(**raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{ns.opts}: {exc}") from None
    status = 0
    try:
        out, hist = minimize(u, omega, opts)
    except StagnationError as exc:
        out, hist = exc.partial, exc.history
        print(f"stagnated: {exc}", file=sys.stderr)
        status = 1
    write_fhm(ns.out, out, binary=ns.binary)
    if ns.log:
        write_csv(ns.log, ["iteration", "energy", "step", "residual"],
                  [(h.iteration, h.energy, h.step, h.residual) for h in hist])
    energies = np.array([h.energy for h in hist])
    if energies.size > 1 and np.any(np.diff(energies) > 0):
        print("energy log increased", file=sys.stderr)
        status = 1
    return status


def cmd_extend(ns) -> int:
    _need(ns, "field", "out")
    ue = _extend_field(read_fhm(ns.field), ns)
    write_extension(ns.out, ue)
    return 0


def cmd_theta(ns) -> int:
    _need(ns, "radii")
    ue = _extension(ns)
    x0 = _floats(ns.center) if ns.center else [0.0] * ue.spec.n
    radii = _floats(ns.radii)
    try:
        curve = xi_density(ue, x0, radii) if ns.xi else density_curve(ue, x0, radii)
    except ResolutionError as exc:
        raise ConfigError(str(exc)) from None
    _emit_csv(ns.out, ["r", "theta"], list(zip(curve.radii, curve.theta)))
    if ns.xi:
        print(dumps17({"xi": curve.xi, "xi_error": curve.xi_error}), file=sys.stderr)
    return 0


def cmd_audit(ns) -> int:
    _need(ns, "pairs")
    ue = _extension(ns)
    x0 = _floats(ns.center) if ns.center else [0.0] * ue.spec.n
    audit = monotonicity_audit(ue, x0, _pairs(ns.pairs))
    rows = audit.rows()
    _emit_csv(ns.out, rows[0], rows[1:])
    if ns.tol is not None and np.any(audit.mismatch > ns.tol):
        print(f"mismatch above {ns.tol}", file=sys.stderr)
        return 1
    return 0


def dyadic_schedule(r: float, top: float = 0.5) -> list:
    """``r, 2r, 4r, ...`` up to ``top``."""
    out = []
    s = r
    while s <= top * (1 + 1e-12):
        out.append(s)
        s *= 2
    return out


def _strata_points(ue, ns, s_max):
    base = ue.spec.base
    c = 0.5 * (base.lower + base.upper)
    hw = float(np.min(0.5 * (base.upper - base.lower)))
    if ns.points:
        pts = read_points(ns.points)
    else:
        sp = ns.spacing
        m = int(math.floor((hw - s_max) / sp + 1e-9))
        if m < 0:
            raise ConfigError("window too small for the largest scale of the schedule")
        ax = [c[i] + sp * np.arange(-m, m + 1) for i in range(base.n)]
        pts = np.stack(np.meshgrid(*ax, indexing="ij"), -1).reshape(-1, base.n)
    inside = np.all(np.abs(pts - c) + s_max <= hw + 1e-9, axis=1)
    return pts[inside]


def cmd_strata(ns) -> int:
    _need(ns, "k", "eps", "r")
    if ns.schedule != "dyadic":
        raise ConfigError("only the dyadic schedule is supported")
    ue = _extension(ns)
    _check_k(ns.k, ue.spec.n - 1)
    scales = dyadic_schedule(ns.r)
    if not scales:
        raise ConfigError("r must be at most 1/2")
    pts = _strata_points(ue, ns, max(scales))
    table = defect_table(ue, pts, scales, bins=ns.bins)
    st = quantitative_stratum(table, ns.k, ns.eps, ns.r)
    n = ue.spec.n
    rows = [tuple(p) + (ws, wd) for p, ws, wd, m in
            zip(st.points, st.witness_scale, st.witness_defect, st.mask) if m]
    _emit_csv(ns.out, [f"x{i + 1}" for i in range(n)] + ["witness_scale", "defect"], rows)
    return 0


def _mask_from_points(spec, pts):
    S = np.zeros(spec.counts, bool)
    if pts.size:
        idx = np.rint((pts - spec.lower) / spec.h).astype(int)
        ok = np.all((idx >= 0) & (idx < np.asarray(spec.counts)), axis=1)
        S[tuple(idx[ok].T)] = True
    return S


def cmd_volume(ns) -> int:
    _need(ns, "field", "radii")
    u = read_fhm(ns.field)
    window = Ball.parse(ns.window) if ns.window else Ball(np.zeros(u.n), 1.0)
    radii = _floats(ns.radii)
    if ns.mode == "tube":
        _need(ns, "set")
        S = _mask_from_points(u.spec, read_points(ns.set))
        f = lambda r: tube_volume(u, S, r, window)
    elif ns.mode == "superlevel":
        f = lambda r: gradient_superlevel_volume(u, r, window)
    else:
        f = lambda r: regularity_sublevel_volume(u, r, window)
    try:
        rows = [(r, f(r)) for r in radii]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _emit_csv(ns.out, ["r", "volume"], rows)
    return 0


def cmd_beta(ns) -> int:
    _need(ns, "measure", "k", "radius")
    mu = read_measure(ns.measure)
    _check_k(ns.k, mu.n)
    x = _floats(ns.center) if ns.center else [0.0] * mu.n
    if len(x) != mu.n:
        raise ConfigError("center dimension does not match the measure")
    res = jones_beta(mu, x, ns.radius, ns.k)
    out = {"beta_sq": res.beta_sq, "beta": res.beta, "origin": res.origin, "basis": res.basis}
    if ns.multiscale is not None:
        out["multiscale_integral"] = multiscale_beta_integral(mu, x, ns.radius, ns.k, ns.multiscale)
    _emit_json(ns.out, out)
    return 0


def _theta_oracle(spec_text: str, R: float, S):
    if spec_text == "vortex":
        return PointSingularityTheta(np.zeros(S.shape[1] if S.size else 2))
    if spec_text.startswith("constant:"):
        return ConstantTheta(float(spec_text.split(":", 1)[1]))
    if spec_text.startswith("field:"):
        u = read_fhm(spec_text.split(":", 1)[1])
        hw = 3 * R + u.spec.h
        if np.any(u.spec.lower > -hw) or np.any(u.spec.upper < hw):
            raise ConfigError(f"field grid must contain the box of half width {hw:.6g}")
        ue = poisson_extend(u, HalfGridSpec.uniform(u.spec, hw, 2 * R + u.spec.h))
        return FieldTheta(ue)
    raise ConfigError(f"unknown theta oracle '{spec_text}'")


def cmd_cover(ns) -> int:
    _need(ns, "set", "theta", "k", "eps", "r", "R", "out")
    S = read_points(ns.set)
    if S.size:
        _check_k(ns.k, S.shape[1])
    oracle = _theta_oracle(ns.theta, ns.R, S)
    try:
        tree = covering_tree(S, oracle, ns.k, ns.eps, ns.delta, ns.rho, ns.r, ns.R)
    except OracleConsistencyError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    write_json(ns.out, tree.to_dict())
    return 0 if tree.covers(S[np.linalg.norm(S, axis=1) <= ns.R] if S.size else S) else 1


# --------------------------------------------------------------------------
# vortex report


def run_vortex_report(resolution: int = 128, radii: Sequence[float] = (0.1, 0.2, 0.4),
                      out_dir=None, map_kind: str = "vortex", ext_resolution: int = 32,
                      eps: float = 0.1, seed: int = 0) -> dict:
    """Volume laws, densities, strata and a covering for the vortex or a constant map.

    Raises
    ------
    ConfigError
        If ``resolution < 64`` or a radius is below four grid spacings; the
        message lists the feasible radii.
    """
    if resolution < 64:
        raise ConfigError("resolution must be at least 64 nodes per unit")
    h = 1.0 / resolution
    radii = sorted(float(r) for r in radii)
    feasible = [r for r in radii if r >= 4 * h]
    if len(feasible) < len(radii):
        raise ConfigError(f"radii below 4h = {4 * h:.6g} are not resolved; feasible radii: {feasible}")
    spec = GridSpec.centered(2, 1.5, h)
    u = analytic_vortex(spec) if map_kind == "vortex" else constant_field(spec, [1.0, 0.0])
    unit = Ball(np.zeros(2), 1.0)
    t0 = time.time()

    superlevel = [(r, gradient_superlevel_volume(u, r, unit)) for r in radii]
    sublevel = [(r, regularity_sublevel_volume(u, r, unit)) for r in radii]
    rng = np.random.default_rng(seed)
    probes = rng.uniform(-0.9, 0.9, (20, 2))
    g = gradient_norm(u)
    ru = [(p[0], p[1], regularity_scale(u, p, g)) for p in probes]

    # the extension runs on a coarser grid
    cs = GridSpec.centered(2, 1.5, 1.0 / min(ext_resolution, resolution))
    uc = (analytic_vortex(cs) if map_kind == "vortex" else constant_field(cs, [1.0, 0.0]))
    ue = poisson_extend(uc, HalfGridSpec.uniform(cs, 1.05, 1.05))
    theta_r = [0.125, 0.25, 0.5, 1.0]
    curve = xi_density(ue, [0.0, 0.0], theta_r)

    r_strata = 0.125
    scales = dyadic_schedule(r_strata)
    sp = 0.125
    ax = sp * np.arange(-4, 5)
    grid_pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    grid_pts = grid_pts[np.max(np.abs(grid_pts), axis=1) + max(scales) <= 1.05 + 1e-9]
    table = defect_table(ue, grid_pts, scales, bins=16)
    st = quantitative_stratum(table, 0, eps, r_strata)
    S_pts = st.flagged
    S_mask = _mask_from_points(spec, S_pts)
    tubes = [(r, tube_volume(u, S_mask, r, unit)) for r in radii]

    R = 1.0
    tree = covering_tree(S_pts, PointSingularityTheta(np.zeros(2)), 0, eps, None, 0.01,
                         R / 32, R) if S_pts.size else None

    checks = {}
    if map_kind == "vortex":
        checks["superlevel_within_10pct"] = all(
            0.9 <= v / (math.pi * r * r) <= 1.1 for r, v in superlevel)
        checks["sublevel_within_10pct"] = all(
            0.9 <= v / (4 * math.pi * r * r) <= 1.1 for r, v in sublevel)
        checks["regularity_scale_within_2h"] = all(
            abs(v - min(math.hypot(a, b) / 2, 1.0)) <= 2 * h for a, b, v in ru)
        checks["covering_leaves_at_most_10"] = tree is not None and len(tree.leaves()) <= 10
    else:
        checks["all_volumes_zero"] = all(v == 0 for _, v in superlevel + sublevel + tubes)
        checks["strata_empty"] = S_pts.shape[0] == 0

    report = {
        "version": CONFIG_VERSION,
        "map": map_kind,
        "resolution": resolution,
        "extension_resolution": int(round(1 / cs.h)),
        "radii": radii,
        "superlevel_volume": [v for _, v in superlevel],
        "superlevel_ratio_to_pi_r2": [v / (math.pi * r * r) for r, v in superlevel],
        "regularity_sublevel_volume": [v for _, v in sublevel],
        "theta_center": {"r": list(curve.radii), "theta": list(curve.theta)},
        "xi_center": curve.xi,
        "xi_error": curve.xi_error,
        "stratum_k0": {"eps": eps, "r": r_strata, "schedule": scales, "points": S_pts},
        "tube_volume": [v for _, v in tubes],
        "covering": None if tree is None else tree.to_dict()["meta"],
        "checks": checks,
        "seconds": time.time() - t0,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "report.json", report)
        write_csv(out / "superlevel.csv", ["r", "volume"], superlevel)
        write_csv(out / "regularity_sublevel.csv", ["r", "volume"], sublevel)
        write_csv(out / "regularity_probes.csv", ["x1", "x2", "r_u"], ru)
        write_csv(out / "theta.csv", ["r", "theta"], list(zip(curve.radii, curve.theta)))
        write_csv(out / "stratum.csv", ["x1", "x2", "witness_scale", "defect"],
                  [tuple(p) + (ws, wd) for p, ws, wd, m in
                   zip(st.points, st.witness_scale, st.witness_defect, st.mask) if m])
        write_csv(out / "tube.csv", ["r", "volume"], tubes)
        if tree is not None:
            write_json(out / "tree.json", tree.to_dict())
    return report


def cmd_vortex_report(ns) -> int:
    rep = run_vortex_report(ns.resolution, _floats(ns.radii), ns.out_dir, ns.map,
                            ns.ext_resolution, ns.eps if ns.eps is not None else 0.1, ns.seed)
    if ns.out_dir is None:
        sys.stdout.write(dumps17(rep) + "\n")
    return 0 if all(rep["checks"].values()) else 1


# --------------------------------------------------------------------------
# selftest


def selftest(verbose: bool = True) -> bool:
    """Fast end-to-end checks of the main invariants."""
    results = []

    def check(name, ok):
        results.append(bool(ok))
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'} {name}")

    c = 1 / math.sqrt(3)
    tri = DiscreteMeasure(c * np.array([[1, 0], [-0.5, math.sqrt(3) / 2], [-0.5, -math.sqrt(3) / 2]]),
                          np.ones(3))
    check("triangle beta^2 = 1/2", abs(jones_beta(tri, [0, 0], 1.0, 1).beta_sq - 0.5) < 1e-12)
    line = DiscreteMeasure(np.c_[np.linspace(-1, 1, 7), np.zeros(7)], np.ones(7))
    check("collinear multiscale integral = 0", multiscale_beta_integral(line, [0, 0], 1.0, 1) == 0.0)
    rng = np.random.default_rng(1)
    cen, rad = rng.uniform(-1, 1, (50, 2)), rng.uniform(0.05, 0.3, 50)
    kept = vitali_subcover(cen, rad)
    kc, kr = cen[kept], rad[kept]
    dd = np.linalg.norm(kc[:, None] - kc[None], axis=2) + np.eye(len(kept)) * 1e9
    disjoint = np.all(dd >= (kr[:, None] + kr[None]) / 5)
    cover = np.all(np.any(np.linalg.norm(cen[:, None] - kc[None], axis=2) <= 5 * kr[None], axis=1))
    check("vitali subcover", disjoint and cover)
    u = analytic_vortex(GridSpec.centered(2, 1.5, 1 / 64))
    ratio = gradient_superlevel_volume(u, 0.2) / (math.pi * 0.04)
    check("vortex superlevel volume", 0.9 <= ratio <= 1.1)
    k = constant_field(GridSpec.centered(1, 4.0, 1 / 16), [0.6, 0.8])
    ue = poisson_extend(k, HalfGridSpec.uniform(k.spec, 1.0, 1.0))
    check("constant extends to constant", np.max(np.abs(ue.values - [0.6, 0.8])) < 1e-6)
    check("constant has zero energy", half_energy(k, Ball([0.0], 0.5)).value < 1e-12)
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "v.fhm"
        write_fhm(p, u)
        v = read_fhm(p)
        check("FHM1 round trip", np.array_equal(v.values, u.values) and np.array_equal(v.flags, u.flags))
    tree = covering_tree(np.zeros((1, 2)), PointSingularityTheta(np.zeros(2)), 0, 0.1, None,
                         0.01, 1 / 32, 1.0)
    check("vortex covering leaves <= 10", len(tree.leaves()) <= 10)
    return all(results)


def cmd_selftest(ns) -> int:
    return 0 if selftest(verbose=True) else 1


# --------------------------------------------------------------------------
# configs and parser


def _read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


COMMANDS = {
    "minimize": cmd_minimize,
    "extend": cmd_extend,
    "theta": cmd_theta,
    "audit-monotonicity": cmd_audit,
    "strata": cmd_strata,
    "volume": cmd_volume,
    "beta": cmd_beta,
    "cover": cmd_cover,
    "vortex-report": cmd_vortex_report,
    "selftest": cmd_selftest,
}


def _ext_options(p):
    p.add_argument("--field", help="input field (FHM1)")
    p.add_argument("--ext", help="precomputed extension (.npz from 'extend')")
    p.add_argument("--center", help="comma-separated centre")
    p.add_argument("--half-width", type=float, default=1.05, help="extension window half width")
    p.add_argument("--z-max", type=float, default=None, help="highest z level (default: half width)")
    p.add_argument("--levels", choices=["uniform", "geometric"], default="uniform")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracmap", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"fracmap {__version__}")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("run", help="run a JSON experiment config")
    p.add_argument("config")

    p = sub.add_parser("minimize", help="projected descent of the energy in a ball",
                       description="Log CSV columns: iteration, energy, step, residual.")
    p.add_argument("--field")
    p.add_argument("--omega", help="cx,cy,r of the ball")
    p.add_argument("--opts", help="JSON file with minimizer options")
    p.add_argument("--out")
    p.add_argument("--log")
    p.add_argument("--binary", action="store_true", help="write binary FHM1")

    p = sub.add_parser("extend", help="Poisson extension to the upper half space")
    _ext_options(p)
    p.add_argument("--out")

    p = sub.add_parser("theta", help="density Theta at a centre",
                       description="CSV columns: r (length), theta (dimensionless).")
    _ext_options(p)
    p.add_argument("--radii")
    p.add_argument("--xi", action="store_true", help="also extrapolate the limit density")
    p.add_argument("--out")

    p = sub.add_parser("audit-monotonicity", help="two-sided check of the monotonicity identity",
                       description="CSV columns: rho, r (lengths), lhs, rhs, mismatch (relative).")
    _ext_options(p)
    p.add_argument("--pairs", help="rho:r,rho:r,...")
    p.add_argument("--tol", type=float)
    p.add_argument("--out")

    p = sub.add_parser("strata", help="quantitative stratum from boundary symmetry defects",
                       description="CSV columns: node coordinates, witness_scale (length), defect.")
    _ext_options(p)
    p.add_argument("--k", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--schedule", default="dyadic")
    p.add_argument("--points", help="CSV of candidate points (default: lattice)")
    p.add_argument("--spacing", type=float, default=0.125)
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--out")

    p = sub.add_parser("volume", help="tube, gradient superlevel or regularity sublevel volumes",
                       description="CSV columns: r (length), volume (length^n).")
    p.add_argument("--field")
    p.add_argument("--mode", choices=["tube", "superlevel", "regularity"], default="superlevel")
    p.add_argument("--radii")
    p.add_argument("--set", help="point CSV for tube mode")
    p.add_argument("--window", help="cx,cy,r (default: unit disc)")
    p.add_argument("--out")

    p = sub.add_parser("beta", help="Jones beta number of a measure")
    p.add_argument("--measure")
    p.add_argument("--k", type=int)
    p.add_argument("--center")
    p.add_argument("--radius", type=float)
    p.add_argument("--multiscale", type=int, default=None, metavar="J")
    p.add_argument("--out")

    p = sub.add_parser("cover", help="covering tree with energy-drop certificates")
    p.add_argument("--set")
    p.add_argument("--theta", help="vortex | constant:<value> | field:<file.fhm>")
    p.add_argument("--k", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--rho", type=float, default=0.01)
    p.add_argument("--r", type=float)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--out")

    p = sub.add_parser("vortex-report", help="volume laws and covering for the vortex")
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--radii", default="0.1,0.2,0.4")
    p.add_argument("--ext-resolution", type=int, default=32)
    p.add_argument("--map", choices=["vortex", "constant"], default="vortex")
    p.add_argument("--eps", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")

    sub.add_parser("selftest", help="fast invariant checks")
    return ap


def _namespace_from_config(cfg: dict, parser: argparse.ArgumentParser) -> argparse.Namespace:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config field 'version' must be {CONFIG_VERSION}")
    cmd = cfg.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"config field 'command' must be one of {sorted(COMMANDS)}")
    sp = parser._subparsers._group_actions[0].choices[cmd]
    ns = sp.parse_args([])
    ns.command = cmd
    args = cfg.get("args", {})
    if not isinstance(args, dict):
        raise ConfigError("config field 'args' must be an object")
    known = vars(ns)
    for key, val in args.items():
        attr = key.replace("-", "_")
        if attr not in known:
            raise ConfigError(f"config field 'args.{key}' is not an option of '{cmd}'")
        if isinstance(val, list):
            val = ",".join(str(v) for v in val)
        setattr(ns, attr, val)
    return ns


def run_config(path) -> int:
    """Run the experiment described by a JSON config file; returns the exit status.

    The config holds ``version``, ``command`` and ``args`` (option names of
    the command, lists allowed for comma-separated values).
    """
    parser = build_parser()
    return _dispatch(lambda: _namespace_from_config(_read_json(path), parser))


def _dispatch(make_ns) -> int:
    try:
        ns = make_ns()
        validate(ns)
        with sfft.set_workers(_threads()):
            return COMMANDS[ns.command](ns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, FormatError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.command is None:
        parser.print_help()
        return 2
    if ns.command == "run":
        return run_config(ns.config)
    return _dispatch(lambda: ns)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
