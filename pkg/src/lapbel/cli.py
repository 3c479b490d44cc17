"""Command line: ``lapbel list``, ``lapbel run CONFIG``, ``lapbel mesh info``.

Exit codes: 0 all thresholds met, 1 configuration error, 2 solver or
geometry failure, 3 a threshold was missed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import write_csv
from .config import load_config
from .errors import ConfigError, LapbelError
from .experiments import REGISTRY
from .mesh import build_mesh, write_off
from .plot import convergence_svg
from .surface import exact_surface_measures, surface_by_name

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ACCEPTANCE = 0, 1, 2, 3


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def list_experiments() -> list:
    return [(e.name, e.validates, e.norm, e.threshold) for e in REGISTRY.values()]


def cmd_list(args) -> int:
    rows = [("experiment", "validates", "norm", "min EOC")]
    rows += [(n, v, norm, f"{t:g}") for n, v, norm, t in list_experiments()]
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return EXIT_OK


def summary_of(cfg, outcome) -> dict:
    return _plain({
        "experiment": cfg.experiment,
        "pass": bool(outcome.passed),
        "measured_min_eoc": outcome.measured_min_eoc,
        "threshold": outcome.threshold,
        "norm": outcome.norm,
        "eoc": outcome.orders,
        "levels": cfg.levels,
        "surface": cfg.surface.describe(),
        "details": outcome.extra,
    })


def write_artifacts(cfg, outcome) -> dict:
    """CSV table, SVG plot and JSON summary in ``cfg.output``; returns the summary."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{cfg.experiment}.csv", cfg.experiment, outcome.records)
    svg = convergence_svg(f"{cfg.experiment} on {cfg.surface.describe()}", outcome.series,
                          outcome.guides)
    (out / f"{cfg.experiment}.svg").write_text(svg)
    summary = summary_of(cfg, outcome)
    (out / f"{cfg.experiment}.json").write_text(json.dumps(summary, indent=2, sort_keys=True)
                                                + "\n")
    return summary


def run(config_path) -> int:
    cfg = load_config(config_path)
    outcome = REGISTRY[cfg.experiment].run(cfg)
    summary = write_artifacts(cfg, outcome)
    status = "PASS" if summary["pass"] else "FAIL"
    print(f"{status} {cfg.experiment}: min EOC {summary['measured_min_eoc']:.3f} "
          f"({outcome.norm}, threshold {outcome.threshold:g}) -> {cfg.output}")
    return EXIT_OK if summary["pass"] else EXIT_ACCEPTANCE


def cmd_run(args) -> int:
    try:
        return run(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LapbelError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def mesh_info(surface, level: int) -> dict:
    mesh = build_mesh(surface, level)
    q = mesh.quality
    area = float(mesh.areas.sum())
    return {"surface": surface.describe(), "level": level, "vertices": mesh.n_vertices,
            "triangles": mesh.n_triangles, "h": q["h"], "gamma": q["gamma"],
            "min_angle_deg": float(np.degrees(q["min_angle"])),
            "euler_characteristic": mesh.euler_characteristic(),
            "area": area, "area_defect": abs(area - exact_surface_measures(surface)["area"])}


def cmd_mesh_info(args) -> int:
    params = {}
    if args.R is not None:
        params["R"] = args.R
    if args.r is not None:
        params["r"] = args.r
    try:
        surface = surface_by_name(args.surface, **params)
        info = mesh_info(surface, args.level)
        if args.off:
            write_off(build_mesh(surface, args.level), args.off)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LapbelError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_SOLVER
    for k, v in info.items():
        print(f"{k:22s} {v:.6g}" if isinstance(v, float) else f"{k:22s} {v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lapbel",
                                     description="Surface finite element convergence experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list", help="list the available experiments")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("run", help="run the experiment described by a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("mesh", help="mesh utilities")
    msub = p.add_subparsers(dest="mesh_command", required=True)
    pi = msub.add_parser("info", help="size and quality of a refinement level")
    pi.add_argument("--surface", default="sphere")
    pi.add_argument("--level", type=int, required=True)
    pi.add_argument("--R", type=float)
    pi.add_argument("--r", type=float)
    pi.add_argument("--off", help="also write the mesh to this OFF file")
    pi.set_defaults(func=cmd_mesh_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
