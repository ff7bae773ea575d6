"""Command-line experiment runner.

Each subcommand reads a JSON config file, runs one experiment, and writes
its outputs into a directory: delimited CSV data, SVG figures, and a
metadata.json that records the exact configuration (including a git-style
content hash of the config file) so every run is reproducible bit for bit.

Usage:
    sle <subcommand> --config FILE [--seed N] [--samples N] [--dt X]
        [--out DIR] [--extended]

Config schema (JSON object; unknown keys rejected; all keys optional
unless stated):

    trace:             kappa, geometry ("half-plane"|"strip"), start,
                       horizon, dt, stride, seed, zero_driver (bool),
                       forces (list, see below)
    density-j:         kappa, sigma, samples, seed, dt, horizon,
                       reference_sigma (wrong-reference negative control)
    hitting:           configs (list of {kappa, sigma, x0}; required),
                       samples, seed, barrier, dt
    cases:             kappa, cases (list of [j, k] labels), samples,
                       seed, dt, horizon
    martingale:        kappa1, rho1 (list), positions (list), degenerate
                       (bool), samples (seed pairs), seed, dt, tip_stride
    duality-endpoint:  x, kappa, samples (per pipeline), seed, dt,
                       cutoff, control (bool, wrong force vector)
    reversibility4:    rho_plus, rho_minus, samples (per side), seed, dt,
                       control (bool, mismatched reversed side)

A force entry is {"rho": R} plus exactly one anchor: "x" (real point),
"side" ("plus"|"minus", point starting beside the seed), or "at"
("+inf"|"-inf"|"upper@X", strip anchors).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments, plots
from .coupling import (
    CouplingRun,
    MartingaleParams,
    build_ensemble,
    compute_M,
    compute_M_degenerate,
    martingale_mc,
)
from .driver import ForceSpec, Geometry, Location, SleConfig, simulate_batch
from .loewner import DrivingFunction, evolve, trace_tips
from .scalefn import build_scale_function, j_density

__all__ = ["main"]


def _content_hash(data: bytes) -> str:
    """Git-style blob hash of raw content."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _load_config(path: str, allowed: set) -> dict:
    raw = Path(path).read_bytes()
    cfg = json.loads(raw)
    if not isinstance(cfg, dict):
        raise SystemExit("config must be a JSON object")
    unknown = set(cfg) - allowed
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    cfg["_hash"] = _content_hash(raw)
    return cfg


def _parse_forces(entries) -> tuple:
    out = []
    for e in entries:
        rho = float(e["rho"])
        anchors = {"x", "side", "at"} & set(e)
        if len(anchors) != 1:
            raise SystemExit(f"force needs exactly one anchor: {e}")
        if "x" in e:
            out.append(ForceSpec(Location.REAL, rho, float(e["x"])))
        elif "side" in e:
            loc = {"plus": Location.PLUS_SIDE, "minus": Location.MINUS_SIDE}
            out.append(ForceSpec(loc[e["side"]], rho))
        else:
            at = str(e["at"])
            if at == "+inf":
                out.append(ForceSpec(Location.PLUS_INFINITY, rho))
            elif at == "-inf":
                out.append(ForceSpec(Location.MINUS_INFINITY, rho))
            elif at.startswith("upper@"):
                out.append(ForceSpec(Location.STRIP_UPPER, rho,
                                     float(at[len("upper@"):])))
            else:
                raise SystemExit(f"unknown force anchor: {at}")
    return tuple(out)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_outputs(out_dir: Path, cfg: dict, report: dict, meta: dict):
    meta = dict(meta)
    meta["config_hash"] = cfg["_hash"]
    meta["config"] = {k: v for k, v in cfg.items() if k != "_hash"}
    with open(out_dir / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    _write_csv(out_dir / "report.csv", ["key", "value"],
               sorted(report.items()))
    for line in sorted(f"{k} = {v}" for k, v in report.items()):
        print(line)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_trace(cfg: dict, out: Path) -> dict:
    kappa = float(cfg.get("kappa", 2.0))
    geometry = {"half-plane": Geometry.HALF_PLANE, "strip": Geometry.STRIP}[
        cfg.get("geometry", "half-plane")
    ]
    start = float(cfg.get("start", 0.0))
    horizon = float(cfg.get("horizon", 1.0))
    dt = float(cfg.get("dt", 1e-3))
    stride = int(cfg.get("stride", 10))
    seed = int(cfg.get("seed", 0))
    forces = _parse_forces(cfg.get("forces", []))

    if cfg.get("zero_driver", False):
        n = int(round(horizon / dt))
        values = np.full(n + 1, start)
    else:
        sle = SleConfig(kappa, geometry=geometry, start=start, forces=forces,
                        dt=dt, horizon=horizon, seed=seed, strict=False)
        batch = simulate_batch(sle, 1, record_stride=1)
        values = batch.xi_rec[0][: int(batch.lifetime_idx[0]) + 1]
    df = DrivingFunction(dt, values, kappa, geometry)
    idx = np.arange(stride, len(values), stride)
    tips = np.concatenate([[complex(start)], trace_tips(evolve(df), df, idx)])
    ts = np.concatenate([[0.0], idx * dt])
    _write_csv(out / "trace.csv", ["t", "re", "im"],
               [(f"{t:.10g}", f"{z.real:.10g}", f"{z.imag:.10g}")
                for t, z in zip(ts, tips)])
    plots.save_trace_plot(
        tips, out / "trace.svg",
        geometry="strip" if geometry is Geometry.STRIP else "half-plane",
        title=f"SLE({kappa:g}) trace",
    )
    return {"n_points": len(tips), "lifetime": f"{ts[-1]:.6g}"}


def cmd_density_j(cfg: dict, out: Path) -> dict:
    kappa = float(cfg.get("kappa", 2.0))
    sigma = float(cfg.get("sigma", 0.0))
    n = int(cfg.get("samples", 2000))
    seed = int(cfg.get("seed", 0))
    dt = float(cfg.get("dt", 1e-3))
    horizon = float(cfg.get("horizon", 30.0))
    ref = cfg.get("reference_sigma")
    ks, samples, sf = experiments.density_j_experiment(
        kappa, sigma, n, seed, dt=dt, horizon=horizon,
        reference_sigma=None if ref is None else float(ref),
    )
    _write_csv(out / "samples.csv", ["terminal_point"],
               [(f"{x:.10g}",) for x in samples])
    plots.save_density_plot(
        samples, lambda x: j_density(sf, x), out / "density.svg",
        title=f"terminal points, κ={kappa:g}, σ={sigma:g}",
    )
    return {
        "ks_statistic": f"{ks.statistic:.6g}",
        "p_value": f"{ks.p_value:.6g}",
        "n_finite": samples.size,
    }


def cmd_hitting(cfg: dict, out: Path) -> dict:
    n = int(cfg.get("samples", 10000))
    seed = int(cfg.get("seed", 0))
    barrier = float(cfg.get("barrier", 30.0))
    dt = float(cfg.get("dt", 2e-3))
    reports = []
    for k, case in enumerate(cfg["configs"]):
        reports.append(experiments.hitting_experiment(
            float(case["kappa"]), float(case["sigma"]), float(case["x0"]),
            n, seed + k, barrier=barrier, dt=dt,
        ))
    _write_csv(
        out / "hitting.csv",
        ["kappa", "sigma", "x0", "predicted", "observed", "se", "deviation_se"],
        [(r.kappa, r.sigma, r.x0, f"{r.predicted:.6g}", f"{r.observed:.6g}",
          f"{r.standard_error:.6g}", f"{r.deviation_se:.3g}") for r in reports],
    )
    plots.save_hitting_plot(reports, out / "hitting.svg")
    return {f"deviation_se[{r.kappa:g},{r.sigma:g},{r.x0:g}]":
            f"{r.deviation_se:.3g}" for r in reports}


def cmd_cases(cfg: dict, out: Path) -> dict:
    kappa = float(cfg.get("kappa", 4.0))
    n = int(cfg.get("samples", 500))
    seed = int(cfg.get("seed", 0))
    dt = float(cfg.get("dt", 1e-3))
    horizon = float(cfg.get("horizon", 60.0))
    labels = [tuple(c) for c in cfg.get(
        "cases", sorted(experiments.CASE_PARAMETERS))]
    rows, report = [], {}
    for i, label in enumerate(labels):
        rho_plus, rho_minus = experiments.CASE_PARAMETERS[label]
        rep = experiments.case_experiment(
            kappa, rho_plus, rho_minus, n, seed + i, dt=dt, horizon=horizon)
        for region, freq in rep.frequencies.items():
            rows.append((f"{label[0]}{label[1]}", rho_plus, rho_minus,
                         region.name.lower(), f"{freq:.4g}"))
        plots.save_case_plot(rep, out / f"case_{label[0]}{label[1]}.svg")
        report[f"min_predicted_frequency[{label[0]}{label[1]}]"] = (
            f"{rep.min_predicted_frequency:.4g}")
    _write_csv(out / "cases.csv",
               ["case", "rho_plus", "rho_minus", "event", "frequency"], rows)
    return report


def cmd_martingale(cfg: dict, out: Path) -> dict:
    kappa1 = float(cfg.get("kappa1", 4.0))
    rho1 = tuple(float(r) for r in cfg.get("rho1", [0.8]))
    degenerate = bool(cfg.get("degenerate", False))
    positions = tuple(float(x) for x in cfg.get(
        "positions", [0.0] if degenerate else [-1.5]))
    n_pairs = int(cfg.get("samples", 2000))
    seed = int(cfg.get("seed", 0))
    dt = float(cfg.get("dt", 1e-4))
    tip_stride = int(cfg.get("tip_stride", 6))
    params = MartingaleParams(kappa1=kappa1, rho1=rho1)
    run = CouplingRun(params=params, forces=positions, degenerate=degenerate,
                      dt=dt, tip_stride=tip_stride)
    result = martingale_mc(run, n_pairs, seed)
    boundary = _boundary_deviation(run, seed)
    _write_csv(out / "martingale.csv", ["pair", "M_stopped"],
               [(i, f"{v:.10g}") for i, v in enumerate(result.values)])
    plots.save_martingale_plot(result, out / "martingale.svg")
    return {
        "mean": f"{result.mean:.6g}",
        "se": f"{result.standard_error:.6g}",
        "deviation_se": f"{abs(result.mean - 1.0) / result.standard_error:.3g}",
        "n_excluded": result.n_excluded,
        "boundary_max_error": f"{boundary:.3g}",
    }


def _boundary_deviation(run: CouplingRun, seed: int) -> float:
    """Max deviation of M from 1 along the two boundary rows of one grid."""
    cfg1, cfg2 = run.sle_configs(seed)
    eps = run.epsilon if run.degenerate else 0.0
    b1 = simulate_batch(cfg1, 1, epsilon=eps, record_stride=1)
    b2 = simulate_batch(cfg2, 1, record_stride=1)
    p = run.params
    df1 = DrivingFunction(run.dt, b1.xi_rec[0], p.kappa1)
    df2 = DrivingFunction(run.dt, b2.xi_rec[0], p.kappa2)
    grid = np.arange(0, 5) * run.tip_stride
    from .coupling import self_forces

    q = b1.forces_rec[1][0][grid] if run.degenerate else None
    st = build_ensemble(df1, df2, grid, grid, forces=self_forces(run),
                        tip_stride=run.tip_stride, q1_track=q)
    M = compute_M_degenerate(st, p) if run.degenerate else compute_M(st, p)
    return float(max(np.abs(M[0, :] - 1.0).max(), np.abs(M[:, 0] - 1.0).max()))


def cmd_duality_endpoint(cfg: dict, out: Path, extended: bool) -> dict:
    if not extended:
        raise SystemExit(
            "duality-endpoint is a slow experiment; re-run with --extended")
    x = float(cfg.get("x", 1.0))
    kappa = float(cfg.get("kappa", 8.0))
    n = int(cfg.get("samples", 500))
    seed = int(cfg.get("seed", 0))
    dt = float(cfg.get("dt", 2e-4))
    cutoff = float(cfg.get("cutoff", 2.0))
    control = bool(cfg.get("control", False))
    rep = experiments.duality_endpoint_experiment(
        x, n, seed, kappa=kappa, dt_hull=dt, dt_trace=dt, cutoff=cutoff,
        control=control,
    )
    ya = rep.hull_samples
    yb = rep.trace_samples
    _write_csv(out / "landing_points.csv", ["pipeline", "y"],
               [("hull", f"{v:.10g}") for v in ya]
               + [("trace", f"{v:.10g}") for v in yb])
    plots.save_two_sample_plot(
        ya, yb, out / "duality.svg",
        labels=("hull boundary landing", "dual trace landing"),
        title=f"duality endpoint law, κ={kappa:g}, x={x:g}",
    )
    return {
        "ks_statistic": f"{rep.ks.statistic:.6g}",
        "p_value": f"{rep.ks.p_value:.6g}",
        "opposite_sign_fraction": f"{rep.opposite_sign_fraction:.4g}",
        "n_ambiguous": rep.n_ambiguous,
    }


def cmd_reversibility4(cfg: dict, out: Path) -> dict:
    rho_plus = float(cfg.get("rho_plus", 1.0))
    rho_minus = float(cfg.get("rho_minus", 0.5))
    n = int(cfg.get("samples", 1000))
    seed = int(cfg.get("seed", 0))
    dt = float(cfg.get("dt", 1e-3))
    control = bool(cfg.get("control", False))
    ks, a, b = experiments.reversibility_experiment(
        rho_plus, rho_minus, n, seed, dt=dt, control=control)
    _write_csv(out / "crossings.csv", ["side", "re_crossing"],
               [("first", f"{v:.10g}") for v in a]
               + [("reversed", f"{v:.10g}") for v in b])
    plots.save_two_sample_plot(
        a, b, out / "reversibility.svg",
        labels=("first crossing", "reversed-side crossing"),
        title=f"reversibility, ρ₊={rho_plus:g}, ρ₋={rho_minus:g}",
    )
    return {
        "ks_statistic": f"{ks.statistic:.6g}",
        "p_value": f"{ks.p_value:.6g}",
        "n_first": a.size,
        "n_reversed": b.size,
    }


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "trace": (cmd_trace, {
        "kappa", "geometry", "start", "horizon", "dt", "stride", "seed",
        "zero_driver", "forces"}),
    "density-j": (cmd_density_j, {
        "kappa", "sigma", "samples", "seed", "dt", "horizon",
        "reference_sigma"}),
    "hitting": (cmd_hitting, {"configs", "samples", "seed", "barrier", "dt"}),
    "cases": (cmd_cases, {"kappa", "cases", "samples", "seed", "dt",
                          "horizon"}),
    "martingale": (cmd_martingale, {
        "kappa1", "rho1", "positions", "degenerate", "samples", "seed", "dt",
        "tip_stride"}),
    "duality-endpoint": (cmd_duality_endpoint, {
        "x", "kappa", "samples", "seed", "dt", "cutoff", "control"}),
    "reversibility4": (cmd_reversibility4, {
        "rho_plus", "rho_minus", "samples", "seed", "dt", "control"}),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sle",
        description="simulation experiments for SLE(kappa; rho) processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--samples", type=int, help="override sample count")
        p.add_argument("--dt", type=float, help="override time step")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--extended", action="store_true",
                       help="allow slow experiments")
    args = parser.parse_args(argv)

    func, allowed = _COMMANDS[args.command]
    cfg = _load_config(args.config, allowed)
    for key in ("seed", "samples", "dt"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    out = Path(args.out or f"out/{args.command}")
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "duality-endpoint":
        report = func(cfg, out, args.extended)
    else:
        report = func(cfg, out)

    meta = {
        "command": args.command,
        "seed": cfg.get("seed", 0),
        "samples": cfg.get("samples"),
        "dt": cfg.get("dt"),
        "h": _grid_spacing(args.command, cfg),
        "epsilon": _epsilon(args.command, cfg),
    }
    _write_outputs(out, cfg, report, meta)
    return 0


def _grid_spacing(command: str, cfg: dict) -> float | None:
    """Coarsest sampling spacing (time units) of the run's readouts."""
    dt = float(cfg.get("dt", {"martingale": 1e-4, "hitting": 2e-3,
                              "duality-endpoint": 2e-4}.get(command, 1e-3)))
    if command == "trace":
        return dt * int(cfg.get("stride", 10))
    if command == "martingale":
        return dt * int(cfg.get("tip_stride", 6))
    if command in ("density-j", "cases"):
        return dt * 10  # driver recording stride of the edge flow
    return dt


def _epsilon(command: str, cfg: dict) -> float:
    """Boundary offset of degenerate side forces used by the run."""
    if command == "martingale" and cfg.get("degenerate", False):
        return CouplingRun(
            params=MartingaleParams(kappa1=4.0, rho1=(0.0,)),
        ).epsilon
    if command == "duality-endpoint":
        return 1e-4
    if command == "reversibility4":
        return 1e-4
    return 0.0


if __name__ == "__main__":
    sys.exit(main())
