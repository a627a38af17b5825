"""Layer-by-layer analysis pipeline and report handling.

A report has one stage per network layer plus the input stage. Each stage
holds the serialized abstraction, its total mass, answers to region queries
and (optionally) a comparison with a Monte Carlo pushforward.

Seeds: zonotope inputs are sampled with the file's ``seed`` when present, else
``cfg.seed``; fitting uses ``cfg.seed + 1``; fresh oracle samples use
``cfg.seed + 2``.
"""

from __future__ import annotations

import csv
import io as _io
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .clusters import (
    CentroidAbstraction,
    EmConfig,
    GmmAbstraction,
    gmm_fit,
    kmeans_fit,
    transform_centroids,
    transform_gmm,
)
from .core import AffineLayer, Network, WeightedPointSet, sample_zonotope
from .distribution import (
    RbfKernel,
    fit_polynomial,
    fit_rbf_exhaustive,
    fourier_of_rbf,
    transform_distribution,
)
from .errors import UnsupportedKernelError, ValidationError
from .io import (
    abstraction_from_json,
    distribution_from_json,
    network_from_json,
    network_to_json,
    read_json,
    regions_from_json,
    zonotope_from_json,
)
from .oracle import abstract_mass, compare_region_masses, mc_pushforward, quantile_regions

log = logging.getLogger("pai")

DOMAINS = ("polynomial", "rbf", "fourier", "kmeans", "gmm")
DISTRIBUTION_DOMAINS = ("polynomial", "rbf", "fourier")
REPORT_FORMAT = 1
SAMPLE_SEED_OFFSET = 0
FIT_SEED_OFFSET = 1
ORACLE_SEED_OFFSET = 2
PLOT_POINTS = 201


@dataclass(frozen=True)
class PipelineConfig:
    domain: str
    degree: int = 2
    n_centers: int = 3
    kernel: str = "gaussian"
    sigma: float = 1.0
    k: int = 2
    max_iters: int = 300
    tol: float = 1e-8
    init: str = "random_points"
    init_params: Optional[dict] = None
    weighted_kmeans: bool = False
    normalize: bool = False
    jacobian_correction: bool = False
    oracle_samples: int = 10_000
    oracle_bins: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValidationError(f"domain must be one of {DOMAINS}")
        if self.domain == "fourier" and self.kernel != "gaussian":
            raise UnsupportedKernelError("the fourier domain needs a gaussian RBF first step")
        if self.init == "given" and self.domain not in ("kmeans", "gmm"):
            raise ValidationError("init 'given' applies to kmeans and gmm only")
        if self.init == "given" and not self.init_params:
            raise ValidationError("init 'given' needs init parameters")
        if self.oracle_samples < 0:
            raise ValidationError("oracle_samples must be nonnegative")

    def em_config(self) -> EmConfig:
        params = self.init_params or {}
        return EmConfig(
            k=self.k,
            max_iters=self.max_iters,
            tol=self.tol,
            seed=self.seed + FIT_SEED_OFFSET,
            init=self.init,
            init_means=params.get("means", params.get("centroids")),
            init_covariances=params.get("covariances"),
            init_weights=params.get("weights"),
            weighted=self.weighted_kmeans,
        )


@dataclass
class Report:
    config: dict
    network: dict
    distribution: dict
    stages: list
    timing: dict = field(default_factory=dict)
    format: int = REPORT_FORMAT
    tool: str = "pai"
    version: str = __version__

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj) -> "Report":
        if not isinstance(obj, dict) or obj.get("format") != REPORT_FORMAT:
            raise ValidationError(f"not a format-{REPORT_FORMAT} report")
        keys = ("config", "network", "distribution", "stages", "timing", "format", "tool",
                "version")
        return cls(**{k: obj[k] for k in keys if k in obj})


def fit_abstraction(cfg: PipelineConfig, data: WeightedPointSet):
    if cfg.domain == "polynomial":
        return fit_polynomial(data, cfg.degree)
    if cfg.domain in ("rbf", "fourier"):
        rbf = fit_rbf_exhaustive(data, cfg.n_centers, RbfKernel(cfg.kernel, cfg.sigma))
        return fourier_of_rbf(rbf) if cfg.domain == "fourier" else rbf
    if cfg.domain == "kmeans":
        return kmeans_fit(data, cfg.em_config())
    return gmm_fit(data, cfg.em_config())


def transform(cfg: PipelineConfig, abst, layer):
    if isinstance(abst, CentroidAbstraction):
        return transform_centroids(abst, Network((layer,)))
    if isinstance(abst, GmmAbstraction):
        return transform_gmm(abst, layer)
    return transform_distribution(abst, layer, cfg.jacobian_correction)


def _layer_summary(layer) -> dict:
    if isinstance(layer, AffineLayer):
        return {"type": "affine", "in_dim": layer.in_dim, "out_dim": layer.out_dim}
    return {"type": "activation", "kind": layer.kind, "dim": layer.dim}


def _box(points: WeightedPointSet) -> dict:
    return {"lower": points.points.min(axis=0).tolist(),
            "upper": points.points.max(axis=0).tolist()}


def _answer(abst, regions) -> list:
    return [{"region": r.to_json(), "mass": abstract_mass(abst, r)} for r in regions]


def run_pipeline(cfg: PipelineConfig, network_file, dist_file, queries_file=None) -> Report:
    """Fit ``cfg.domain`` on the input distribution and push it through the network."""
    t0 = time.perf_counter()
    net = network_from_json(read_json(network_file), str(network_file))
    dist_obj = read_json(dist_file)
    data, dist_desc = distribution_from_json(dist_obj, str(dist_file),
                                             cfg.seed + SAMPLE_SEED_OFFSET)
    regions = regions_from_json(read_json(queries_file), str(queries_file)) if queries_file else []
    if data.dim != net.in_dim:
        raise ValidationError(f"{dist_file}: distribution dim {data.dim} != network input dim "
                              f"{net.in_dim}")
    if cfg.normalize:
        data = data.normalized()

    oracle_in = None
    if cfg.oracle_samples > 0:
        if dist_desc["type"] == "zonotope":
            z = zonotope_from_json(dist_obj, str(dist_file))
            oracle_in = sample_zonotope(z, cfg.oracle_samples, cfg.seed + ORACLE_SEED_OFFSET)
        else:
            # a finite point set is its own exact oracle
            oracle_in = data
        if cfg.normalize:
            oracle_in = oracle_in.normalized()

    log.info("fitting %s on %d points", cfg.domain, len(data))
    t_fit = time.perf_counter()
    abst = fit_abstraction(cfg, data)
    fit_seconds = time.perf_counter() - t_fit

    support = mc_pushforward(net, data, record_layers=True)
    oracle = mc_pushforward(net, oracle_in, record_layers=True) if oracle_in is not None else None

    stages = []
    layers = (None,) + net.layers
    for i, layer in enumerate(layers):
        if layer is not None:
            log.debug("stage %d: %s", i, _layer_summary(layer))
            abst = transform(cfg, abst, layer)
        stage = {
            "index": i,
            "layer": None if layer is None else _layer_summary(layer),
            "abstraction": abst.to_json(),
            "support": _box(support.stage(i)),
            "queries": _answer(abst, regions),
            "oracle": None,
        }
        if isinstance(abst, (CentroidAbstraction, GmmAbstraction)):
            stage["total_mass"] = abst.total_mass
        if oracle is not None:
            pts = oracle.stage(i)
            cmp = compare_region_masses(pts, abst, quantile_regions(pts, cfg.oracle_bins),
                                        normalize=cfg.normalize)
            stage["oracle"] = cmp.to_json()
            stage["oracle"]["samples"] = len(pts)
        stages.append(stage)

    return Report(
        config=asdict(cfg),
        network=network_to_json(net),
        distribution={**dist_desc, "dim": data.dim, "total_mass": data.total_mass},
        stages=stages,
        timing={"fit_seconds": fit_seconds, "total_seconds": time.perf_counter() - t0},
    )


def requery(report: Report, regions) -> list:
    """Answer region queries against every stage of a saved report."""
    out = []
    for stage in report.stages:
        abst = abstraction_from_json(stage["abstraction"])
        out.append({"index": stage["index"], "queries": _answer(abst, regions)})
    return out


def emit_plot_data(report: Report, stage: int) -> str:
    """CSV text for one stage.

    One-dimensional distribution models are sampled on a regular grid over the
    stage's data support; cluster domains emit one row per centroid or mean
    with its mass.
    """
    if not 0 <= stage < len(report.stages):
        raise IndexError(f"stage {stage} out of range (report has {len(report.stages)})")
    entry = report.stages[stage]
    abst = abstraction_from_json(entry["abstraction"])
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")

    if isinstance(abst, (CentroidAbstraction, GmmAbstraction)):
        coords = abst.centroids if isinstance(abst, CentroidAbstraction) else abst.means
        d = coords.shape[1]
        names = {1: ["x"], 2: ["x", "y"]}.get(d, [f"x{j}" for j in range(d)])
        writer.writerow(names + ["mass"])
        for row, mass in zip(coords, abst.masses):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(mass))])
        return buf.getvalue()

    if abst.dim != 1:
        raise ValidationError("plot data for distribution domains is one-dimensional")
    lo, hi = entry["support"]["lower"][0], entry["support"]["upper"][0]
    pad = 0.1 * (hi - lo) if hi > lo else 1.0
    xs = np.linspace(lo - pad, hi + pad, PLOT_POINTS)
    writer.writerow(["x", "density"])
    for x, y in zip(xs, abst.evaluate(xs)):
        writer.writerow([repr(float(x)), repr(float(y))])
    return buf.getvalue()
