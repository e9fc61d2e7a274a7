"""Command-line front end: simulations, blowup runs, verification suites,
constants tables, and parameter sweeps, with machine-readable outputs.

Exit codes: 0 success, 1 usage/argument error, 2 numerical failure,
3 invalid configuration.  Identical configurations produce byte-identical
CSV and JSON outputs; floats are written with 17 significant digits so the
files round-trip losslessly.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import asymptotics, core, harness
from .core import (
    SystemConfig,
    blowup_laws,
    embed_reduced,
    longtime_laws,
    longtime_laws_ambient,
    self_similar,
    support_profile,
)
from .integrate import (
    IntegrationError,
    IntegratorSettings,
    Trajectory,
    integrate_logtime,
    integrate_phi_to_blowup,
    integrate_rbk,
)

__all__ = ["main", "entrypoint"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_CONFIG = 3


class ConfigError(ValueError):
    """Invalid configuration document (exit code 3)."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_FAMILIES = ("monodisperse", "uniform", "self_similar", "random")


def _build_c0(entry, N: int, seed) -> np.ndarray:
    """Initial densities from an explicit array or a named family."""
    if isinstance(entry, (list, tuple)):
        c0 = np.asarray(entry, dtype=float)
        if c0.size != N:
            raise ConfigError(f"c0 has length {c0.size}, expected N={N}")
        return c0
    if not isinstance(entry, dict) or len(entry) != 1:
        raise ConfigError("c0 must be an array or a one-key family object")
    family, params = next(iter(entry.items()))
    if family not in _FAMILIES:
        raise ConfigError(f"unknown initial-condition family {family!r}")
    params = params or {}
    if family == "monodisperse":
        value = float(params.get("value", 1.0))
        index = int(params.get("index", N))
        if not 1 <= index <= N:
            raise ConfigError(f"monodisperse index {index} outside 1..{N}")
        c0 = np.zeros(N)
        c0[index - 1] = value
        return c0
    if family == "uniform":
        return np.full(N, float(params.get("value", 1.0)))
    if family == "self_similar":
        alpha = float(params.get("alpha", 0.5))
        kappa = float(params.get("kappa", 1.0))
        return self_similar(alpha, kappa, 0.0, N)
    # random: seed-fixed uniform positive densities
    if seed is None:
        raise ConfigError("random initial conditions require a seed")
    low = float(params.get("low", 0.1))
    high = float(params.get("high", 1.0))
    if not 0 < low < high:
        raise ConfigError("random family requires 0 < low < high")
    return np.random.default_rng(int(seed)).uniform(low, high, N)


def load_config(path) -> dict:
    """Parse and validate a run configuration document."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return raw


def resolve_run(raw: dict) -> dict:
    """Turn a raw config document into validated run inputs."""
    try:
        N = int(raw["N"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("config requires an integer N") from exc
    seed = raw.get("seed")
    try:
        c0 = _build_c0(raw.get("c0", {"uniform": {}}), N, seed)
        config = SystemConfig(N=N, c0=c0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        settings = IntegratorSettings(
            rtol=float(raw.get("rtol", 1e-9)),
            atol=float(raw.get("atol", 1e-12)),
            max_steps=int(raw.get("max_steps", 1_000_000)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sampling = raw.get("sampling") or {}
    chart = raw.get("chart", "t")
    if chart not in ("t", "log-t", "phi"):
        raise ConfigError(f"unknown chart {chart!r}")
    return {
        "config": config,
        "settings": settings,
        "chart": chart,
        "t_end": float(raw.get("t_end", 10.0)),
        "cap": float(raw.get("cap", 1e10)),
        "points_per_decade": int(sampling.get("points_per_decade", 64)),
        "decades": float(sampling.get("decades", 6.0)),
        "verify_theorem": bool(raw.get("verify_theorem", False)),
    }


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """CSV with 17-significant-digit values; header names the chart columns."""
    if traj.chart == "phi-y":
        header = ["y"] + [f"phi_{j}" for j in range(1, traj.dim + 1)]
    else:
        header = ["t"] + [f"c_{j}" for j in range(1, traj.dim + 1)]
    aux_names = sorted(traj.aux)
    header += aux_names
    lines = [",".join(header)]
    for i in range(traj.n_samples):
        row = [traj.abscissae[i], *traj.states[i]]
        row += [traj.aux_series(name)[i] for name in aux_names]
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trajectory_csv(path):
    """Inverse of write_trajectory_csv: (header, data array)."""
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = text[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    return header, data


def write_json(doc: dict, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _law_table(laws) -> dict:
    return {
        str(j): {"exponent": law.exponent, "prefactor": law.prefactor}
        for j, law in sorted(laws.items())
    }


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _simulate_trajectory(run: dict) -> Trajectory:
    config, settings = run["config"], run["settings"]
    if run["chart"] == "t":
        return integrate_rbk(
            config.c0,
            run["t_end"],
            settings,
            points_per_decade=run["points_per_decade"],
            decades=run["decades"],
        )
    if run["chart"] == "log-t":
        return integrate_logtime(
            config.c0,
            run["t_end"],
            settings,
            points_per_decade=run["points_per_decade"],
        )
    # phi chart: rescale by c_N and integrate to the cap
    c0 = config.c0
    if config.N < 2:
        raise ConfigError("phi chart needs N >= 2")
    if c0[-1] <= 0:
        raise ConfigError("phi chart requires c_N(0) > 0")
    phi0 = c0[:-1] / c0[-1]
    if np.any(phi0 <= 0):
        raise ConfigError("phi chart requires strictly positive initial densities")
    traj, _ = integrate_phi_to_blowup(phi0, run["cap"], settings)
    return traj


def cmd_simulate(args) -> int:
    run = resolve_run(load_config(args.config))
    if args.chart:
        run["chart"] = args.chart
    if run["verify_theorem"] and run["config"].N < 2:
        raise ConfigError(
            "long-time law verification is undefined for a single component: "
            "it decays by the exact closed form c(t) = 1/(c(0)^-1 + t)"
        )
    traj = _simulate_trajectory(run)
    write_trajectory_csv(traj, args.out)
    if run["verify_theorem"]:
        profile = support_profile(run["config"].c0)
        if profile.n_eff < 2:
            raise ConfigError(
                "long-time law verification is undefined for a single-component "
                "support: it decays by the exact closed form c(t) = 1/(c(0)^-1 + t)"
            )
        diags = asymptotics.longtime_diagnostic(traj, profile)
        report = {
            str(j): {"final_residual": d.final_residual} for j, d in diags.items()
        }
        write_json(report, Path(args.out).with_suffix(".report.json"))
    return EXIT_OK


def cmd_blowup(args) -> int:
    raw = load_config(args.config)
    if getattr(args, "cap", None) is not None:
        raw["cap"] = args.cap
    run = resolve_run(raw)
    config, settings = run["config"], run["settings"]
    if config.N < 3:
        raise ConfigError(f"blowup laws are undefined for N={config.N}; need N >= 3")
    if "phi0" in raw:
        phi0 = np.asarray(raw["phi0"], dtype=float)
        if phi0.size != config.N - 1:
            raise ConfigError(f"phi0 must have length N-1={config.N - 1}")
    else:
        if config.c0[-1] <= 0 or np.any(config.c0 <= 0):
            raise ConfigError("blowup runs need strictly positive initial densities")
        phi0 = config.c0[:-1] / config.c0[-1]
    traj, estimate = integrate_phi_to_blowup(phi0, run["cap"], settings)
    write_trajectory_csv(traj, args.out)

    phi1 = traj.states[:, 0]
    window_too_short = bool(phi1[-1] / phi1[0] < 1e4)
    report = {
        "N": config.N,
        "cap": run["cap"],
        "omega": estimate.omega,
        "uncertainty": estimate.uncertainty,
        "method": estimate.method,
        "flags": {"window_too_short": window_too_short},
    }
    if window_too_short:
        report["fitted_laws"] = None
        report["theoretical_laws"] = _law_table(blowup_laws(config.N))
    else:
        fit_report = asymptotics.blowup_diagnostic(traj, estimate)
        report["fitted_laws"] = {
            str(j): {
                "exponent": f.exponent,
                "prefactor": f.prefactor,
                "residual": f.residual,
            }
            for j, f in sorted(fit_report.fitted.items())
        }
        report["theoretical_laws"] = _law_table(fit_report.theoretical)
        report["fit_window_y"] = list(fit_report.window)
    write_json(report, Path(args.out).with_suffix(".report.json"))
    return EXIT_OK


def _emit(checks) -> int:
    ok_all = True
    for name, ok, measured in checks:
        ok_all &= bool(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {measured}")
    return EXIT_OK if ok_all else EXIT_NUMERICAL


def _verify_identities(args) -> int:
    raw = load_config(args.config) if args.config else {
        "N": 5, "c0": {"random": {}}, "seed": 20240809, "t_end": 100.0,
        "sampling": {"points_per_decade": 320},
    }
    run = resolve_run(raw)
    traj = integrate_rbk(
        run["config"].c0,
        run["t_end"],
        run["settings"],
        points_per_decade=run["points_per_decade"],
        decades=run["decades"],
    )
    report = harness.identity_suite(traj)
    s = report.summary()
    return _emit(
        [
            ("nu_odd closed form", s["nu_odd"]["ok"],
             f"max rel err {s['nu_odd']['max_rel_err']:.3e} (tol {s['nu_odd']['tol']:.1e})"),
            ("c_N integrating factor", s["c_last"]["ok"],
             f"max rel err {s['c_last']['max_rel_err']:.3e} (tol {s['c_last']['tol']:.1e})"),
            ("density dissipation identity", s["dissipation"]["ok"],
             f"max rel err {s['dissipation']['max_rel_err']:.3e} (tol {s['dissipation']['tol']:.1e})"),
        ]
    )


def _verify_support(args) -> int:
    raw = load_config(args.config) if args.config else {
        "N": 6, "c0": [0.0, 1.0, 0.0, 1.0, 0.0, 1.0], "t_end": 100.0,
    }
    run = resolve_run(raw)
    config = run["config"]
    profile = support_profile(config.c0)
    traj = integrate_rbk(config.c0, run["t_end"], run["settings"])
    lattice = set(range(profile.m, profile.p + 1, profile.m))
    off = [j - 1 for j in range(1, config.N + 1) if j not in lattice]
    off_zero = bool(np.all(traj.states[:, off] == 0.0)) if off else True
    reduced, _ = core.gcd_reduce(config)
    round_trip = embed_reduced(reduced.c0, profile.m, config.N)
    rt_exact = bool(np.all(round_trip == config.c0))
    emb = embed_reduced(core.rbk_field(reduced.c0), profile.m, config.N)
    commute_err = float(np.max(np.abs(core.rbk_field(round_trip) - emb)))
    return _emit(
        [
            ("off-lattice components bitwise zero", off_zero,
             f"lattice m={profile.m}, p={profile.p}"),
            ("reduce/embed round trip exact", rt_exact, "bitwise"),
            ("field commutes with embedding", commute_err < 1e-14,
             f"max abs defect {commute_err:.3e}"),
        ]
    )


def _verify_asymptotics(args) -> int:
    raw = load_config(args.config) if args.config else {"N": 4, "c0": {"uniform": {}}}
    run = resolve_run(raw)
    config = run["config"]
    if config.N < 3:
        raise ConfigError(f"blowup laws are undefined for N={config.N}")
    if np.any(config.c0 <= 0):
        raise ConfigError("asymptotics suite needs strictly positive initial densities")
    phi0 = config.c0[:-1] / config.c0[-1]
    traj, estimate = integrate_phi_to_blowup(phi0, run["cap"], run["settings"])
    rep = asymptotics.blowup_diagnostic(traj, estimate)
    exp_err = max(
        abs(rep.fitted[j].exponent / rep.theoretical[j].exponent - 1.0)
        for j in rep.fitted
    )
    pre_err = max(
        abs(rep.fitted[j].prefactor / rep.theoretical[j].prefactor - 1.0)
        for j in rep.fitted
    )
    psi = asymptotics.psi_diagnostic(traj)
    psi_final = max(abs(d.final_residual) for d in psi.values())
    ratios = asymptotics.ratio_divergence(traj)
    ratios_ok = all(r.increasing and r.exceeds_threshold for r in ratios.values())
    checks = [
        ("blowup exponents within 5%", exp_err < 0.05, f"max rel err {exp_err:.3e}"),
        ("blowup prefactors within 20%", pre_err < 0.20, f"max rel err {pre_err:.3e}"),
        ("psi polynomial residuals < 0.1", psi_final < 0.1, f"max |rho^| {psi_final:.3e}"),
        ("ratio divergence", ratios_ok,
         f"final phi_1/phi_2 = {ratios[1].final_value:.3e}"),
        ("omega uncertainty", True,
         f"omega = {estimate.omega:.9f} +/- {estimate.uncertainty:.2e}"),
    ]
    # cross-check against the frozen reference fixture when one matches
    # (fixture location honours RBK_FIXTURES)
    if np.all(phi0 == 1.0):
        try:
            fx = harness.load_fixtures()["fixtures"][f"omega/N{config.N}_ones"]
        except (OSError, KeyError):
            fx = None
        if fx is not None:
            rel = abs(estimate.omega / fx["oracle"]["omega"] - 1.0)
            checks.append(
                ("omega matches reference fixture", rel < fx["tolerance"],
                 f"rel dev {rel:.3e} (tol {fx['tolerance']:.0e})")
            )
    return _emit(checks)


# Final-residual threshold separating the matching prefactor convention from
# the rejected one; calibrated against the reduction-variant residuals (~0.08
# at t = 1e8) and the ambient-variant ones (>= 0.6) for the standard probe.
_VERDICT_THRESHOLD = 0.35


def _verify_theorem_constants(args) -> int:
    N = args.N or 6
    m = args.m or 1
    p = args.p or N
    if p % m:
        raise UsageError(f"p={p} not divisible by m={m}")
    n_eff = p // m
    if n_eff < 2:
        raise ConfigError(
            "single-component support decays by the exact closed form "
            "c(t) = 1/(c(0)^-1 + t); no long-time law to verify"
        )
    try:
        reduction = longtime_laws(n_eff, m)
        ambient = longtime_laws_ambient(N, m, p)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print("prefactors (reduction, n_eff = p/m):",
          [reduction[j].prefactor for j in sorted(reduction)])
    print("prefactors (as-printed, ambient N): ",
          [ambient[j].prefactor for j in sorted(ambient)])

    raw = load_config(args.config) if args.config else {"t_end": 1e8}
    t_end = float(raw.get("t_end", 1e8))
    settings = IntegratorSettings(
        rtol=float(raw.get("rtol", 1e-9)), atol=float(raw.get("atol", 1e-12))
    )
    c0 = embed_reduced(np.ones(n_eff), m, N)
    traj = integrate_logtime(c0, t_end, settings)
    profile = support_profile(c0)

    def final_decades(diags):
        # max |e_j| at t_end and one/two decades earlier
        out = []
        for frac in (1e-4, 1e-2, 1.0):
            tt = t_end * frac
            vals = []
            for d in diags.values():
                i = int(np.argmin(np.abs(d.abscissae - tt)))
                vals.append(abs(float(d.residuals[i])))
            out.append(max(vals))
        return out

    red = final_decades(asymptotics.longtime_diagnostic(traj, profile, variant="reduction"))
    amb = final_decades(
        asymptotics.longtime_diagnostic(traj, profile, variant="ambient", ambient_N=N)
    )
    red_matches = red[-1] < _VERDICT_THRESHOLD and red[0] > red[1] > red[2]
    variants_differ = any(
        reduction[j].prefactor != ambient[j].prefactor for j in reduction
    )
    amb_rejected = (not variants_differ) or amb[-1] >= _VERDICT_THRESHOLD
    print(f"verdict: reduction prefactors {'MATCH' if red_matches else 'DO NOT MATCH'} "
          f"the simulation; as-printed variant "
          f"{'coincides' if not variants_differ else ('REJECTED' if amb_rejected else 'matches')}")
    checks = [
        ("reduction prefactors match simulation", red_matches,
         f"max |e_j| across decades {red[0]:.3f} > {red[1]:.3f} > {red[2]:.3f}"),
    ]
    if variants_differ:
        checks.append(
            ("as-printed prefactors rejected", amb_rejected,
             f"max |e_j| at t_end {amb[-1]:.3f} (threshold {_VERDICT_THRESHOLD})")
        )
    return _emit(checks)


_SUITES = {
    "identities": _verify_identities,
    "support": _verify_support,
    "asymptotics": _verify_asymptotics,
    "theorem-constants": _verify_theorem_constants,
}


def cmd_verify(args) -> int:
    suite = args.suite or getattr(args, "suite_flag", None)
    if suite not in _SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {sorted(_SUITES)}")
    return _SUITES[suite](args)


def cmd_constants(args) -> int:
    N = args.N
    m = args.m or 1
    p = args.p or N
    if N is None:
        raise UsageError("--N is required")
    if p % m:
        raise UsageError(f"p={p} not divisible by m={m}")
    n_eff = p // m
    try:
        doc = {
            "N": N,
            "m": m,
            "p": p,
            "n_eff": n_eff,
            "longtime": {
                "reduction": _law_table(longtime_laws(n_eff, m)),
                "as_printed": _law_table(longtime_laws_ambient(N, m, p)),
            },
            "blowup": _law_table(blowup_laws(N)) if N >= 3 else None,
        }
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def _sweep_cell(cell_id: str, raw: dict, outdir: Path) -> dict:
    entry = {"id": cell_id, "params": raw, "status": "ok"}
    try:
        run = resolve_run(raw)
        traj = _simulate_trajectory(run)
        csv_path = outdir / cell_id / "trajectory.csv"
        write_trajectory_csv(traj, csv_path)
        report = {
            "final_abscissa": traj.final_abscissa,
            "final_state": list(traj.final_state),
            "n_samples": traj.n_samples,
        }
        if run["chart"] in ("t", "log-t"):
            s = harness.identity_suite(traj).summary()
            report["identities"] = s
        report_path = outdir / cell_id / "report.json"
        write_json(report, report_path)
        entry["csv"] = str(csv_path.relative_to(outdir))
        entry["report"] = str(report_path.relative_to(outdir))
    except Exception as exc:  # cell failures land in the manifest
        entry["status"] = "failed"
        entry["error"] = f"{type(exc).__name__}: {exc}"
    return entry


def cmd_sweep(args) -> int:
    raw = load_config(args.config)
    base = raw.get("base")
    grid = raw.get("grid")
    if not isinstance(base, dict) or not isinstance(grid, dict) or not grid:
        raise UsageError("sweep config requires non-empty 'base' and 'grid' objects")
    keys = sorted(grid)
    values = [grid[k] for k in keys]
    if any(not isinstance(v, list) or not v for v in values):
        raise UsageError("every grid entry must be a non-empty list")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    cells = []
    for i, combo in enumerate(itertools.product(*values)):
        cell_raw = json.loads(json.dumps(base))
        for k, v in zip(keys, combo):
            cell_raw[k] = v
        cells.append((f"cell{i:03d}", cell_raw))

    with ThreadPoolExecutor(max_workers=min(8, len(cells))) as pool:
        entries = list(
            pool.map(lambda c: _sweep_cell(c[0], c[1], outdir), cells)
        )
    entries.sort(key=lambda e: e["id"])
    manifest = {"grid_keys": keys, "cells": entries}
    write_json(manifest, outdir / "manifest.json")
    if any(e["status"] != "ok" for e in entries):
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


class UsageError(ValueError):
    """Bad command-line arguments (exit code 1)."""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbklab",
        description="Simulation and verification lab for the finite-dimensional "
        "constant-kernel RBK coagulation system",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a configuration and write a CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--chart", choices=["t", "log-t", "phi"])
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("blowup", help="phi-chart blowup run with omega report")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="CSV path; report lands at *.report.json")
    p.add_argument("--cap", type=float, help="override the phi_1 cap")
    p.set_defaults(fn=cmd_blowup)

    p = sub.add_parser("verify", help="run a named verification suite")
    p.add_argument("suite", nargs="?")
    p.add_argument("--suite", dest="suite_flag")
    p.add_argument("--config")
    p.add_argument("--N", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--p", type=int)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("constants", help="print the asymptotic-constant tables")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--p", type=int)
    p.set_defaults(fn=cmd_constants)

    p = sub.add_parser("sweep", help="run a parameter grid of simulations")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint() -> None:
    sys.exit(main())
