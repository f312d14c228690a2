"""Command line entry point: ``shishkin-sdfem {mesh,solve,green,verify,decay,calibrate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .assembly import StabilizationProfile
from .greens import SchemeSolver, green_decay_profile
from .harness import ConfigError, ExperimentConfig
from .weights import WeightParams, estimate_quantities

log = logging.getLogger("shishkin_sdfem")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI-style experiment file; flags override it")
    p.add_argument("--N", help="comma-separated mesh sizes")
    p.add_argument("--eps", help="comma-separated diffusion coefficients")
    p.add_argument("--b", help="convection vector, e.g. 1,1")
    p.add_argument("--k", help="comma-separated weight scales")
    p.add_argument("--xstar", help="node 'i,j' or center-of-Os | Ox-node | Oy-node")
    p.add_argument("--f", help="built-in source: one, poly, zero")
    p.add_argument("--quad-order", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output stem; .csv and .json are written next to it")
    p.add_argument("--allow-non-assumption1", action="store_true", default=None)
    p.add_argument("--no-crosswind", action="store_true",
                   help="plain streamline diffusion without extra crosswind diffusion")


def build_config(ns: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(ns.config) if ns.config else ExperimentConfig()
    upd = {}
    if ns.N:
        upd["N"] = harness._ints(ns.N)
    if ns.eps:
        upd["eps"] = harness._floats(ns.eps)
    if ns.b:
        upd["b"] = tuple(harness._floats(ns.b))
    if ns.k:
        upd["k"] = harness._floats(ns.k)
    for name in ("xstar", "f", "quad_order", "tol", "seed", "out", "allow_non_assumption1"):
        val = getattr(ns, name, None)
        if val is not None:
            upd[name] = val
    if getattr(ns, "K", None):
        upd["K"] = harness._floats(ns.K)
    if getattr(ns, "v", None) is not None:
        upd["v"] = ns.v
    if ns.no_crosswind:
        upd["crosswind"] = False
    return replace(cfg, **upd)


def _emit(report: harness.ExperimentReport, cfg: ExperimentConfig) -> None:
    if cfg.out:
        csv_path, json_path = report.write(cfg.out)
        log.info("wrote %s and %s", csv_path, json_path)
        print(json.dumps(report.summary, indent=2, default=harness._jsonable))
    else:
        sys.stdout.write(report.to_csv())


def cmd_mesh(cfg: ExperimentConfig, ns) -> int:
    mesh = harness.make_mesh(cfg, cfg.N[0], cfg.eps[0])
    text = mesh.to_json(indent=2)
    if cfg.out:
        Path(cfg.out).with_suffix(".json").write_text(text, encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_solve(cfg: ExperimentConfig, ns) -> int:
    if ns.matrix_market:
        mesh = harness.make_mesh(cfg, cfg.N[0], cfg.eps[0])
        ss = SchemeSolver(mesh, StabilizationProfile.for_mesh(mesh, cfg.crosswind))
        ss.system.export_matrix_market(ns.matrix_market)
    _emit(harness.run_solve(cfg), cfg)
    return 0


def cmd_green(cfg: ExperimentConfig, ns) -> int:
    N, eps, k = cfg.N[0], cfg.eps[0], cfg.k[0]
    mesh = harness.make_mesh(cfg, N, eps)
    profile = StabilizationProfile.for_mesh(mesh, cfg.crosswind)
    node = harness._anchor(cfg, mesh, require_outside_xy=False)
    green = SchemeSolver(mesh, profile).green(node, cfg.tol)
    w = WeightParams.at_node(mesh, k, node)
    prof = green_decay_profile(green.G, mesh, w)
    rec = estimate_quantities(green.G, mesh, profile, w, cfg.quad_order)
    summary = {"config": cfg.to_dict(), "estimates": rec.to_dict(),
               "ring_maxima": prof.ring_maxima, "solver": green.report.to_dict()}
    if cfg.out:
        stem = Path(cfg.out)
        stem.parent.mkdir(parents=True, exist_ok=True)
        stem.with_suffix(".csv").write_text(prof.to_csv(), encoding="utf-8")
        stem.with_suffix(".json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
        print(json.dumps(summary["estimates"], indent=2))
    else:
        sys.stdout.write(prof.to_csv())
    return 0


def cmd_verify(cfg, ns) -> int:
    _emit(harness.run_green_suite(cfg), cfg)
    return 0


def cmd_decay(cfg, ns) -> int:
    _emit(harness.run_decay(cfg), cfg)
    return 0


def cmd_calibrate(cfg, ns) -> int:
    data = harness.calibrate()
    text = json.dumps(data, indent=2)
    if cfg.out:
        Path(cfg.out).with_suffix(".json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shishkin-sdfem", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, helptext in [
        ("mesh", cmd_mesh, "dump the Shishkin mesh as JSON"),
        ("solve", cmd_solve, "solve the discrete problem for each (N, eps)"),
        ("green", cmd_green, "one discrete Green function and its decay CSV"),
        ("verify", cmd_verify, "weighted-norm and estimate quantities over a sweep"),
        ("decay", cmd_decay, "sup norms outside the excluded neighbourhood"),
        ("calibrate", cmd_calibrate, "recompute the k* calibration fixture"),
    ]:
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.set_defaults(func=fn)
        if name == "solve":
            p.add_argument("--matrix-market", help="write the first system matrix to this path")
        if name == "decay":
            p.add_argument("--K", help="comma-separated exclusion exponents")
            p.add_argument("--v", type=int, help="decay exponent of the N^-v templates")
    return parser


def main(argv=None) -> int:
    ns = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = build_config(ns)
        return ns.func(cfg, ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
