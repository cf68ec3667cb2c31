"""Command-line front end.

Verbs:
    run <config|preset>   execute a benchmark configuration, write artifacts
    compare <a> <b>       resample two curve files and report discrepancies
    presets [name]        list preset names, or print one preset's INI

Exit codes: 0 success, 2 configuration/validation error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels, output, scenarios
from .config import (WORKERS_ENV, ConfigError, PRESETS, RunConfig,
                     config_as_dict, load_config, parse_config, preset_ini)
from .material import ConstitutiveError
from .scenarios import CurveRecord, build, run_dns, run_homogenization
from .stepping import SolveError
from .unitcell import MicroDivergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def compare_curves(curve_a: CurveRecord, curve_b: CurveRecord) -> dict:
    """Resample two reaction curves onto a common grid and report their
    maximum and RMS relative force discrepancy.

    Monotone curves are resampled over the union of applied-displacement
    breakpoints; cyclic curves (non-monotone applied displacement) over the
    union of pseudo-time breakpoints, which parametrizes the same loading
    path.  Discrepancies are normalized by the peak force of curve b, and
    split at curve b's proportional limit (departure from the initial secant
    by 2 percent of the peak force).
    """
    def monotone(x):
        return np.all(np.diff(x) > 0)

    if monotone(curve_a.applied) and monotone(curve_b.applied):
        xa, xb, param = curve_a.applied, curve_b.applied, "applied_displacement"
    elif monotone(curve_a.pseudo_time) and monotone(curve_b.pseudo_time):
        xa, xb, param = curve_a.pseudo_time, curve_b.pseudo_time, "pseudo_time"
    else:
        raise ValueError("curves are not parametrizable (non-monotone pseudo-time)")
    lo = max(xa.min(), xb.min())
    hi = min(xa.max(), xb.max())
    if hi <= lo:
        raise ValueError(f"curve ranges do not overlap: [{xa.min()}, {xa.max()}] "
                         f"vs [{xb.min()}, {xb.max()}]")
    grid = np.unique(np.concatenate([xa[(xa >= lo) & (xa <= hi)],
                                     xb[(xb >= lo) & (xb <= hi)]]))
    fa = np.interp(grid, xa, curve_a.reaction)
    fb = np.interp(grid, xb, curve_b.reaction)
    scale = float(np.max(np.abs(fb)))
    if scale == 0.0:
        scale = max(float(np.max(np.abs(fa))), 1.0)
    rel = np.abs(fa - fb) / scale

    # proportional limit of the reference curve from the initial secant
    split = None
    nz = np.nonzero(np.abs(fb) > 1e-12 * scale)[0]
    if nz.size >= 2:
        k0 = fb[nz[1]] / grid[nz[1]] if grid[nz[1]] != 0 else 0.0
        dev = np.abs(fb - k0 * grid)
        beyond = np.nonzero(dev > 0.02 * scale)[0]
        if beyond.size:
            split = int(beyond[0])
    if split is None or split < 2:
        elastic = np.ones(grid.size, dtype=bool)
        post = np.zeros(grid.size, dtype=bool)
    else:
        elastic = np.arange(grid.size) < split
        post = ~elastic

    def stats(mask):
        if not np.any(mask):
            return None, None
        r = rel[mask]
        return float(np.max(r)), float(np.sqrt(np.mean(r * r)))

    max_all, rms_all = stats(np.ones(grid.size, dtype=bool))
    max_el, rms_el = stats(elastic)
    max_py, rms_py = stats(post)
    return {
        "param": param,
        "n_points": int(grid.size),
        "force_scale": scale,
        "max_rel": max_all,
        "rms_rel": rms_all,
        "max_rel_elastic": max_el,
        "rms_rel_elastic": rms_el,
        "max_rel_post_yield": max_py,
        "rms_rel_post_yield": rms_py,
    }


def _resolve_workers(cfg: RunConfig) -> int:
    if cfg.workers is not None:
        return cfg.workers
    env = os.environ.get(WORKERS_ENV, "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer",
                              field="run.workers") from None
    return os.cpu_count() or 1


def _increment_log(rows):
    return [{"time": r["time"], "factor": r["factor"], "iterations": r["iterations"],
             "substeps": r["substeps"],
             "final_residual": (r["residuals"][-1] if r["residuals"] else 0.0)}
            for r in rows]


def cmd_run(args) -> int:
    target = args.config
    try:
        if target in PRESETS and not Path(target).exists():
            cfg = parse_config(preset_ini(target))
        else:
            if not Path(target).exists():
                raise ConfigError(f"config file not found: {target}", field="config")
            cfg = load_config(target)
        workers = _resolve_workers(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.output_dir:
        cfg = RunConfig(**{**config_kwargs(cfg), "output_dir": args.output_dir})
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kernels.set_workers(workers)

    scn = build(cfg.scenario)
    with_poisson = cfg.write_poisson
    manifest = {
        "version": __version__,
        "backend": kernels.BACKEND,
        "workers": workers,
        "config": config_as_dict(cfg),
        "runs": {},
    }
    t_start = time.perf_counter()
    try:
        if cfg.mode in ("homogenization", "both"):
            res = run_homogenization(scn, cfg.solver, with_poisson=with_poisson)
            arts = {}
            if cfg.write_curves:
                p = out_dir / "curve_homogenization.csv"
                output.write_curve_csv(p, res.curve)
                arts["curve"] = p.name
            if cfg.write_displacement_field:
                p = out_dir / "field_homogenization.vtk"
                output.write_macro_field(p, res.model, res.u)
                arts["displacement_field"] = p.name
            manifest["runs"]["homogenization"] = {
                "wall_time_s": res.wall_time,
                "artifacts": arts,
                "increments": _increment_log(res.rows),
            }
        if cfg.mode in ("dns", "both"):
            res = run_dns(scn, cfg.solver, with_poisson=with_poisson)
            arts = {}
            if cfg.write_curves:
                p = out_dir / "curve_dns.csv"
                output.write_curve_csv(p, res.curve)
                arts["curve"] = p.name
            if cfg.write_displacement_field:
                p = out_dir / "field_dns.vtk"
                output.write_dns_field(p, res.model, res.u)
                arts["displacement_field"] = p.name
            if cfg.write_yield_map:
                from .dns import yield_map
                p = out_dir / "yield_map_dns.csv"
                output.write_yield_map_csv(p, res.model, yield_map(res.model))
                arts["yield_map"] = p.name
            manifest["runs"]["dns"] = {
                "wall_time_s": res.wall_time,
                "artifacts": arts,
                "increments": _increment_log(res.rows),
            }
    except (SolveError, MicroDivergenceError, ConstitutiveError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        manifest["failure"] = str(exc)
        output.write_manifest(out_dir / "manifest.json", manifest)
        return EXIT_SOLVER
    manifest["wall_time_s"] = time.perf_counter() - t_start
    output.write_manifest(out_dir / "manifest.json", manifest)
    print(f"wrote {out_dir}/manifest.json")
    return EXIT_OK


def config_kwargs(cfg: RunConfig) -> dict:
    return {
        "scenario": cfg.scenario, "mode": cfg.mode, "output_dir": cfg.output_dir,
        "workers": cfg.workers, "write_curves": cfg.write_curves,
        "write_displacement_field": cfg.write_displacement_field,
        "write_poisson": cfg.write_poisson, "write_yield_map": cfg.write_yield_map,
        "solver": cfg.solver,
    }


def cmd_compare(args) -> int:
    try:
        ca = output.read_curve_csv(args.curve_a)
        cb = output.read_curve_csv(args.curve_b)
        report = compare_curves(ca, cb)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.name:
        try:
            print(preset_ini(args.name), end="")
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    for name in sorted(PRESETS):
        print(name)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="latticehom",
                                     description="Two-scale lattice solver front end")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute a benchmark configuration")
    p_run.add_argument("config", help="path to an INI config, or a preset name")
    p_run.add_argument("--output-dir", default=None, help="override run.output_dir")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="compare two curve CSV files")
    p_cmp.add_argument("curve_a")
    p_cmp.add_argument("curve_b")
    p_cmp.set_defaults(func=cmd_compare)

    p_pre = sub.add_parser("presets", help="list presets or print one")
    p_pre.add_argument("name", nargs="?", default=None)
    p_pre.set_defaults(func=cmd_presets)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
