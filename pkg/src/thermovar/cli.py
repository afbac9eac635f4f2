"""Command-line scenario runner.

``thermovar run scenario.ini --out results/`` writes a per-step CSV, VTK
field snapshots and ``summary.json``; ``study`` runs the series of the
``[study]`` block and checks the requested trends; ``verify`` runs the
test suite.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cahn_hilliard import binodal_points, ch_energy, make_grid, run_ch, total_mass
from .config import Scenario, load_scenario, study_series
from .damage import element_beta_e, run_damage_bar
from .errors import ConfigError, SimulationError, ThermovarError
from .fem.mesh import interval
from .fem.vtk import write_vtk
from .point0d import TRAJECTORY_COLUMNS, integrate
from .shearband import band_width, nodal_fields, run_shear_band

U64 = 2**64


class RunOutput:
    """Collects CSV rows, snapshots and the summary of one run."""

    def __init__(self, out: Path | None, columns, reproducible: bool, vtk: bool = True):
        self.out = out
        self.vtk = vtk
        self.columns = list(columns)
        self.rows: list = []
        self.reproducible = reproducible
        self.snapshots: list[str] = []
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)

    def row(self, *values):
        self.rows.append([float(v) for v in values])

    def snapshot(self, name: str, mesh, point_data=None, cell_data=None):
        if self.out is None or not self.vtk:
            return
        write_vtk(self.out / name, mesh, point_data, cell_data, deterministic=True)
        self.snapshots.append(name)

    def finish(self, summary: dict, csv_name: str) -> dict:
        if self.out is None:
            return summary
        with open(self.out / csv_name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            w.writerows([[repr(v) for v in r] for r in self.rows])
        summary["artifacts"] = {"csv": csv_name, "snapshots": list(self.snapshots)}
        write_json(self.out / "summary.json", summary)
        return summary


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _snap_due(k: int, every: int) -> bool:
    return every > 0 and k % every == 0


# --------------------------------------------------------------------------- models

def run_point0d(sc: Scenario, out: Path | None, seed: int, reproducible: bool) -> dict:
    p, ld, tm = sc.material, sc.loading, sc.time
    ramp = lambda t: ld["rate"] * min(t, ld["hold_after"])
    kw = {"strain": ramp} if ld["control"] == "strain" else {"stress": ramp}
    try:
        tr = integrate(p, tm["t_end"], tm["steps"], sc.algorithm["scheme"], **kw)
    except ThermovarError as exc:
        raise SimulationError(-1, exc) from exc
    ro = RunOutput(out, TRAJECTORY_COLUMNS, reproducible, sc.output["vtk"])
    for r in tr.as_rows():
        ro.row(*r)
    summary = {"peak_stress": float(np.max(np.abs(tr.sigma))),
               "final_temperature": float(tr.theta[-1]),
               "max_theta_minus_theta0": float(tr.theta.max() - p.theta0),
               "min_dissipation_increment": float(tr.dissipation_increment.min())}
    return ro.finish(summary, "trajectory.csv")


def run_ch1d(sc: Scenario, out: Path | None, seed: int, reproducible: bool) -> dict:
    p, m, ld = sc.material, sc.mesh, sc.loading
    rng = np.random.default_rng(seed)
    n = m["cells"]
    c0 = ld["c_mean"] + ld["noise"] * rng.uniform(-1.0, 1.0, n)
    grid = make_grid(c0, m["length"], p, m["bc"])
    tau = sc.time["t_end"] / sc.time["steps"]
    ro = RunOutput(out, ("t", "mass", "energy", "c_min", "c_max", "theta_max"), reproducible,
                   sc.output["vtk"])
    mesh = interval(n, m["length"])
    every = sc.output["snapshot_every"]
    m0 = total_mass(grid)

    def record(t, g):
        ro.row(t, total_mass(g), ch_energy(g, p), g.c.min(), g.c.max(), g.theta.max())

    def fields(g):
        return {"concentration": g.c, "temperature": g.theta}

    record(0.0, grid)
    ro.snapshot("fields_0000.vtk", mesh, cell_data=fields(grid))
    counter = itertools.count(1)

    def cb(t, g):
        k = next(counter)
        record(t, g)
        if _snap_due(k, every):
            ro.snapshot(f"fields_{k:04d}.vtk", mesh, cell_data=fields(g))

    try:
        grid = run_ch(grid, tau, sc.time["t_end"], p, ld["thermal_coupling"],
                      sc.algorithm["scheme"], callback=cb)
    except ThermovarError as exc:
        raise SimulationError(len(ro.rows), exc) from exc
    ro.snapshot("fields_final.vtk", mesh, cell_data=fields(grid))
    energies = np.array([r[2] for r in ro.rows])
    lo, hi = binodal_points(p)
    near = np.minimum(np.abs(grid.c - lo), np.abs(grid.c - hi)) < 0.1 * (hi - lo)
    summary = {"mass_drift": float(abs(total_mass(grid) - m0)),
               "energy_monotone": bool(np.all(np.diff(energies) <= 1e-12 * abs(energies[0]))),
               "binodal": [lo, hi], "fraction_near_binodal": float(near.mean()),
               "c_min": float(grid.c.min()), "c_max": float(grid.c.max()),
               "max_theta_minus_theta0": float(grid.theta.max() - p.theta0)}
    return ro.finish(summary, "history.csv")


def run_damage1d(sc: Scenario, out: Path | None, seed: int, reproducible: bool) -> dict:
    p, m, ld = sc.material, sc.mesh, sc.loading
    ro = RunOutput(out, ("t", "u_end", "reaction", "d_max", "theta_min", "theta_max",
                         "dissipation_min"), reproducible, sc.output["vtk"])
    mesh = interval(m["n_el"], m["length"])
    every = sc.output["snapshot_every"]
    counter = itertools.count(1)
    dmin = [0.0]

    def fields(s):
        return ({"displacement": s.u, "damage": s.d},
                {"temperature": s.theta, "beta_e": element_beta_e(s, p)})

    def cb(s_n, s, tau, info):
        k = next(counter)
        # local dissipation -sum beta_e (d - d_n) w >= 0
        dd = 0.5 * ((s.d - s_n.d)[:-1] + (s.d - s_n.d)[1:])
        dmin[0] = min(dmin[0], float(np.min(-element_beta_e(s, p) * dd * s.h)))
        ro.row(s.t, s.u[-1], info.reaction, s.d.max(), s.theta.min(), s.theta.max(), dmin[0])
        if _snap_due(k, every):
            ro.snapshot(f"fields_{k:04d}.vtk", mesh, *fields(s))

    try:
        h = run_damage_bar(p, m["length"], m["n_el"], ld["u_end"], sc.time["steps"],
                           sc.time["t_end"], ld["mode"], sc.algorithm["scheme"],
                           ld["imperfection"], ld["conduction"], ld["grips"], callback=cb)
    except ThermovarError as exc:
        raise SimulationError(len(ro.rows) + 1, exc) from exc
    s = h.states[-1]
    ro.snapshot("fields_final.vtk", mesh, *fields(s))
    d_el = 0.5 * (s.d[:-1] + s.d[1:])
    width = int(np.sum(d_el > 0.5 * d_el.max())) if d_el.max() > 0 else 0
    summary = {"peak_load": float(np.max(h.reactions)), "d_max": float(s.d.max()),
               "max_theta_minus_theta0": float(max(x.theta.max() for x in h.states) - p.theta0),
               "band_width": width, "dissipation_min": dmin[0], "d_final": s.d.tolist()}
    return ro.finish(summary, "load_displacement.csv")


def run_shearband2d(sc: Scenario, out: Path | None, seed: int, reproducible: bool) -> dict:
    p, m, ld = sc.material, sc.mesh, sc.loading
    ro = RunOutput(out, ("t", "displacement", "load", "alpha_max", "theta_max",
                         "newton_iterations"), reproducible, sc.output["vtk"])
    every = sc.output["snapshot_every"]

    def fields(model):
        cells = {"plastic_strain": model.element_mean(model.hist.alpha_loc),
                 "dissipation": model.element_mean(model.hist.dissipation)}
        return nodal_fields(model), cells

    def cb(k, t, model):
        if _snap_due(k, every):
            ro.snapshot(f"fields_{k:04d}.vtk", model.mesh, *fields(model))

    try:
        res = run_shear_band(p, m["nx"], m["ny"], ld["u_end"], sc.time["steps"],
                             sc.time["t_end"], ld["weakening"], m["eas"], callback=cb)
    except SimulationError:
        raise
    except ThermovarError as exc:
        raise SimulationError(-1, exc) from exc
    its = [0] + list(res.newton_iterations)
    for i in range(res.times.size):
        ro.row(res.times[i], res.displacement[i], res.load[i], res.alpha_max[i],
               res.theta_max[i], its[i])
    ro.snapshot("fields_final.vtk", res.model.mesh, *fields(res.model))
    summary = {"peak_load": res.peak_load, "final_load": float(res.load[-1]),
               "alpha_max": float(res.alpha_max.max()),
               "theta_max": float(res.theta_max.max()),
               "max_theta_minus_theta0": float(res.theta_max.max() - p.theta0),
               "band_width": res.band_width(), "invariants": res.invariants,
               "max_newton_iterations": int(max(res.newton_iterations, default=0)),
               "displacement": res.displacement.tolist(), "load": res.load.tolist()}
    if not reproducible:
        summary["wall_time"] = res.wall_time
    return ro.finish(summary, "load_displacement.csv")


RUNNERS = {"point0d": run_point0d, "ch1d": run_ch1d, "damage1d": run_damage1d,
           "shearband2d": run_shearband2d}


def run(sc: Scenario, out: Path | None, seed: int = 0, reproducible: bool = False) -> dict:
    """Run one scenario; returns the summary (also written to ``out``)."""
    t0 = time.perf_counter()
    summary = RUNNERS[sc.model](sc, out, seed, reproducible)
    summary["parameters"] = sc.resolved()
    summary["seed"] = seed
    summary["version"] = __version__
    if not reproducible:
        summary["elapsed"] = time.perf_counter() - t0
    if out is not None:
        write_json(out / "summary.json", summary)
    return summary


# --------------------------------------------------------------------------- studies

def _variants(sc: Scenario):
    """Cartesian product of the study series as (label dict, scenario)."""
    ser = study_series(sc)
    axes = []
    if ser["meshes"]:
        key = "mesh"
        if sc.model == "shearband2d":
            axes.append([(key, f"{nx}x{ny}", {"mesh": {"nx": nx, "ny": ny}}) for nx, ny in ser["meshes"]])
        elif sc.model == "damage1d":
            axes.append([(key, nx, {"mesh": {"n_el": nx}}) for nx, _ in ser["meshes"]])
        elif sc.model == "ch1d":
            axes.append([(key, nx, {"mesh": {"cells": nx}}) for nx, _ in ser["meshes"]])
        else:
            raise ConfigError("study.meshes", "point0d has no mesh")
    for name in ("l", "eta_f"):
        if ser[name]:
            axes.append([(name, v, {"material": {name: v}}) for v in ser[name]])
    if ser["tau"]:
        t_end = sc.time["t_end"]
        axes.append([("tau", v, {"time": {"steps": max(1, round(t_end / v))}}) for v in ser["tau"]])
    if not axes:
        raise ConfigError("study", "no series given")
    for combo in itertools.product(*axes):
        label, s = {}, sc
        for name, val, patch in combo:
            label[name] = val
            for section, kw in patch.items():
                s = s.with_material(**kw) if section == "material" else s.with_section(section, **kw)
        yield label, s


_METRICS = ("peak_load", "alpha_max", "theta_max", "max_theta_minus_theta0", "band_width",
            "d_max", "final_temperature", "peak_stress", "mass_drift")


def _end_value(model: str, summ: dict) -> float:
    """Scalar used for convergence orders of a tau series."""
    if model == "point0d":
        return summ["final_temperature"]
    if model == "ch1d":
        return summ["c_max"]
    return summ["peak_load"]


def _observed_order(taus, values, ref) -> float:
    taus = np.asarray(taus, float)
    err = np.abs(np.asarray(values, float) - ref)
    ok = err > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(taus[ok]), np.log(err[ok]), 1)[0])


def study(sc: Scenario, out: Path | None, seed: int = 0, reproducible: bool = False) -> dict:
    """Run the study series; checks requested monotonic trends.

    Returns a report with one row per variant, the trend checks and, for
    time-step series, the observed convergence order against a run with
    an eight times smaller step.
    """
    ser = study_series(sc)
    rows = []
    for label, s in _variants(sc):
        tag = "_".join(f"{k}{v}" for k, v in label.items())
        sub = out / tag if out is not None else None
        summ = run(s, sub, seed, reproducible)
        row = dict(label)
        row.update({k: summ[k] for k in _METRICS if k in summ})
        row["_end"] = _end_value(sc.model, summ)
        rows.append(row)

    checks = []
    trend_axis = next((a for a in ("l", "eta_f", "tau") if ser[a]), None)
    groups: dict = {}
    for r in rows:
        key = tuple((k, v) for k, v in r.items() if k in ("mesh", "l", "eta_f", "tau") and k != trend_axis)
        groups.setdefault(key, []).append(r)
    for direction in ("decreasing", "increasing"):
        for metric in ser[direction]:
            if trend_axis is None:
                raise ConfigError(f"study.{direction}", "needs an l, eta_f or tau series")
            for key, grp in groups.items():
                grp = sorted(grp, key=lambda r: r[trend_axis])
                if metric not in grp[0]:
                    raise ConfigError(f"study.{direction}", f"unknown metric {metric!r}")
                vals = [g[metric] for g in grp]
                d = np.diff(vals)
                ok = bool(np.all(d < 0) if direction == "decreasing" else np.all(d > 0))
                checks.append({"metric": metric, "trend": direction, "along": trend_axis,
                               "group": dict(key), "values": vals, "passed": ok})

    orders = []
    if ser["tau"]:
        tmin = min(ser["tau"])
        steps = max(1, round(sc.time["t_end"] / (tmin / 8)))
        for key, grp in groups.items():
            base = sc
            for k, v in key:
                if k == "mesh":
                    continue
                base = base.with_material(**{k: v})
            ref = _end_value(sc.model, run(base.with_section("time", steps=steps), None, seed, True))
            grp = sorted(grp, key=lambda r: r["tau"])
            orders.append({"group": dict(key), "taus": [g["tau"] for g in grp],
                           "errors": [abs(g["_end"] - ref) for g in grp],
                           "order": _observed_order([g["tau"] for g in grp], [g["_end"] for g in grp], ref)})
    for r in rows:
        r.pop("_end")
    report = {"rows": rows, "checks": checks, "orders": orders,
              "passed": all(c["passed"] for c in checks), "parameters": sc.resolved()}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        cols = sorted({k for r in rows for k in r})
        with open(out / "study.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, cols, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        write_json(out / "study.json", report)
    return report


def _print_table(rows: list) -> None:
    if not rows:
        return
    cols = list(rows[0])
    print("  ".join(f"{c:>14}" for c in cols))
    for r in rows:
        print("  ".join(f"{r[c]:>14.6g}" if isinstance(r[c], float) else f"{str(r[c]):>14}"
                        for c in cols))


# --------------------------------------------------------------------------- entry point

def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thermovar", description="Incremental variational solvers")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--seed", type=_seed, default=0, help="seed of random initial data")
    common.add_argument("--reproducible", action="store_true",
                        help="omit timings so repeated runs give identical files")
    r = sub.add_parser("run", parents=[common], help="run one scenario")
    r.add_argument("config", type=Path)
    s = sub.add_parser("study", parents=[common], help="run the study series of a scenario")
    s.add_argument("config", type=Path)
    v = sub.add_parser("verify", help="run the test suite")
    v.add_argument("--full", action="store_true", help="include slow acceptance tests")
    v.add_argument("pytest_args", nargs=argparse.REMAINDER)
    return ap


def _verify(full: bool, extra: list) -> int:
    import pytest

    tests = Path(__file__).resolve().parents[2] / "tests"
    if not tests.is_dir():
        print(f"test directory not found: {tests}", file=sys.stderr)
        return 2
    args = [str(tests), "-q"]
    if not full:
        args += ["-m", "not slow"]
    return int(pytest.main(args + list(extra)))


def main(argv=None) -> int:
    ap = build_parser()
    args, extra = ap.parse_known_args(argv)
    if args.command == "verify":
        return _verify(args.full, extra + args.pytest_args)
    if extra:
        ap.error(f"unrecognized arguments: {' '.join(extra)}")
    try:
        sc = load_scenario(args.config)
        if args.command == "run":
            summ = run(sc, args.out, args.seed, args.reproducible)
            shown = {k: v for k, v in summ.items()
                     if isinstance(v, (int, float, str, bool)) and k not in ("seed", "version")}
            for k, v in sorted(shown.items()):
                print(f"{k:>24}: {v}")
            print(f"artifacts written to {args.out}")
            return 0
        rep = study(sc, args.out, args.seed, args.reproducible)
        _print_table(rep["rows"])
        for c in rep["checks"]:
            print(f"{c['metric']} {c['trend']} in {c['along']} {c['group'] or ''}: "
                  f"{'PASS' if c['passed'] else 'FAIL'}")
        for o in rep["orders"]:
            print(f"observed order {o['order']:.3f} {o['group'] or ''}")
        return 0 if rep["passed"] else 1
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"simulation failed at {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
