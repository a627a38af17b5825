"""Command-line front end.

    pai analyze   --network net.json --dist dist.json --domain rbf ... --out report.json
    pai query     --report report.json --queries q.json
    pai oracle    --network net.json --dist dist.json [--queries q.json]
    pai plot-data --report report.json --stage 1 --out stage1.csv

Exit codes: 0 success, 2 validation error, 3 numerical failure.
Set PAI_LOG=off|info|debug for log output on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .clusters import INIT_METHODS
from .core import region_mass_points, sample_zonotope
from .distribution import KERNELS
from .errors import NumericalError, ValidationError
from .io import (
    distribution_from_json,
    dump_json,
    load_network,
    load_regions,
    read_json,
    zonotope_from_json,
)
from .oracle import mc_pushforward
from .pipeline import (
    DOMAINS,
    ORACLE_SEED_OFFSET,
    SAMPLE_SEED_OFFSET,
    PipelineConfig,
    Report,
    emit_plot_data,
    requery,
    run_pipeline,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
LOG_LEVELS = {"off": logging.CRITICAL + 1, "info": logging.INFO, "debug": logging.DEBUG}


def _configure_logging():
    level = LOG_LEVELS.get(os.environ.get("PAI_LOG", "off").lower(), LOG_LEVELS["off"])
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("pai").setLevel(level)


def _write(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pai", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    an = sub.add_parser("analyze", help="fit an abstraction and propagate it layer by layer")
    an.add_argument("--network", required=True)
    an.add_argument("--dist", required=True)
    an.add_argument("--domain", required=True, choices=DOMAINS)
    an.add_argument("--queries")
    an.add_argument("--out")
    an.add_argument("--degree", type=int, default=2, help="polynomial degree")
    an.add_argument("--n-centers", type=int, default=3)
    an.add_argument("--kernel", choices=KERNELS, default="gaussian")
    an.add_argument("--sigma", type=float, default=1.0,
                    help="kernel width; gaussian is exp(-d^2 / (2 sigma^2))")
    an.add_argument("--k", type=int, default=2, help="number of clusters")
    an.add_argument("--max-iters", type=int, default=300)
    an.add_argument("--tol", type=float, default=1e-8)
    an.add_argument("--init", choices=INIT_METHODS, default="random_points")
    an.add_argument("--init-params",
                    help="JSON file with initial 'centroids' (kmeans) or "
                         "'means'/'covariances'/'weights' (gmm); needed for --init given")
    an.add_argument("--weighted-kmeans", action="store_true",
                    help="weight-aware centroid/EM updates")
    an.add_argument("--normalize", action="store_true", help="rescale input weights to sum 1")
    an.add_argument("--jacobian-correction", action="store_true",
                    help="multiply transformed densities by |det f^-1|")
    an.add_argument("--oracle-samples", type=int, default=10_000,
                    help="fresh Monte Carlo samples for zonotope inputs; 0 disables the oracle")
    an.add_argument("--oracle-bins", type=int, default=8)
    an.add_argument("--seed", type=int, default=0)

    q = sub.add_parser("query", help="answer region queries against a saved report")
    q.add_argument("--report", required=True)
    q.add_argument("--queries", required=True)
    q.add_argument("--out")

    orc = sub.add_parser("oracle", help="standalone Monte Carlo pushforward")
    orc.add_argument("--network", required=True)
    orc.add_argument("--dist", required=True)
    orc.add_argument("--queries")
    orc.add_argument("--samples", type=int, default=0,
                     help="resample zonotope inputs with this many points (0: use the file)")
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--out")

    pl = sub.add_parser("plot-data", help="emit CSV for one report stage")
    pl.add_argument("--report", required=True)
    pl.add_argument("--stage", type=int, required=True)
    pl.add_argument("--out")
    return ap


def cmd_analyze(args) -> int:
    init_params = read_json(args.init_params) if args.init_params else None
    cfg = PipelineConfig(
        domain=args.domain, degree=args.degree, n_centers=args.n_centers, kernel=args.kernel,
        sigma=args.sigma, k=args.k, max_iters=args.max_iters, tol=args.tol, init=args.init,
        init_params=init_params, weighted_kmeans=args.weighted_kmeans,
        normalize=args.normalize, jacobian_correction=args.jacobian_correction,
        oracle_samples=args.oracle_samples, oracle_bins=args.oracle_bins, seed=args.seed,
    )
    report = run_pipeline(cfg, args.network, args.dist, args.queries)
    _write(dump_json(report.to_json()), args.out)
    return EXIT_OK


def cmd_query(args) -> int:
    report = Report.from_json(read_json(args.report))
    _write(dump_json({"format": 1, "stages": requery(report, load_regions(args.queries))}),
           args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    net = load_network(args.network)
    dist_obj = read_json(args.dist)
    data, desc = distribution_from_json(dist_obj, args.dist, args.seed + SAMPLE_SEED_OFFSET)
    if args.samples > 0 and desc["type"] == "zonotope":
        z = zonotope_from_json(dist_obj, args.dist)
        data = sample_zonotope(z, args.samples, args.seed + ORACLE_SEED_OFFSET)
    regions = load_regions(args.queries) if args.queries else []
    push = mc_pushforward(net, data, record_layers=True)
    stages = []
    for i in range(len(net) + 1):
        pts = push.stage(i)
        stages.append({
            "index": i,
            "count": len(pts),
            "total_mass": pts.total_mass,
            "mean": pts.mean().tolist(),
            "lower": pts.points.min(axis=0).tolist(),
            "upper": pts.points.max(axis=0).tolist(),
            "queries": [{"region": r.to_json(), "mass": region_mass_points(pts, r)}
                        for r in regions if r.dim == pts.dim],
        })
    _write(dump_json({"format": 1, "distribution": desc, "stages": stages}), args.out)
    return EXIT_OK


def cmd_plot_data(args) -> int:
    report = Report.from_json(read_json(args.report))
    _write(emit_plot_data(report, args.stage), args.out)
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "query": cmd_query, "oracle": cmd_oracle,
            "plot-data": cmd_plot_data}


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, IndexError) as exc:
        print(f"pai: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"pai: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
