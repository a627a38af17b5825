"""Brute-force reference: push samples through the network and count.

Nothing in here shares code paths with the abstract transformers beyond
``forward_eval``; it is the ground truth the abstractions are compared to.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .clusters import CentroidAbstraction, GmmAbstraction, region_mass_abstract
from .core import Network, Region, WeightedPointSet, region_mass_points
from .distribution import region_mass_density
from .errors import DimensionError

DEFAULT_BINS = 8
MAX_GRID_DIMS = 2


@dataclass(frozen=True)
class EmpiricalPushforward:
    input_points: WeightedPointSet
    output_points: WeightedPointSet
    per_layer: Optional[tuple] = None

    def stage(self, i: int) -> WeightedPointSet:
        """Point set after ``i`` layers (0 is the input)."""
        if i == 0:
            return self.input_points
        if self.per_layer is None:
            raise ValueError("intermediate layers were not recorded")
        return self.per_layer[i - 1]


@dataclass(frozen=True)
class RegionError:
    region: Region
    empirical: float
    abstract: float

    @property
    def abs_error(self) -> float:
        return abs(self.empirical - self.abstract)

    def to_json(self) -> dict:
        return {"region": self.region.to_json(), "empirical": self.empirical,
                "abstract": self.abstract, "abs_error": self.abs_error}


@dataclass(frozen=True)
class ComparisonReport:
    entries: tuple

    @property
    def errors(self) -> np.ndarray:
        return np.array([e.abs_error for e in self.entries])

    @property
    def max_error(self) -> float:
        return float(self.errors.max()) if self.entries else 0.0

    @property
    def mean_error(self) -> float:
        return float(self.errors.mean()) if self.entries else 0.0

    def to_json(self) -> dict:
        return {"max_error": self.max_error, "mean_error": self.mean_error,
                "regions": [e.to_json() for e in self.entries]}


def mc_pushforward(net: Network, d: WeightedPointSet,
                   record_layers: bool = False) -> EmpiricalPushforward:
    if d.dim != net.in_dim:
        raise DimensionError(f"distribution dim {d.dim} != network input dim {net.in_dim}")
    z = d.points
    stages = []
    for layer in net.layers:
        z = layer.apply(z)
        if record_layers:
            stages.append(WeightedPointSet(z, d.weights))
    out = stages[-1] if record_layers else WeightedPointSet(z, d.weights)
    return EmpiricalPushforward(d, out, tuple(stages) if record_layers else None)


def quantile_regions(points: WeightedPointSet, bins: int = DEFAULT_BINS) -> list:
    """Report regions built from per-axis quantile edges.

    Up to two dimensions this is the full grid of quantile cells. Beyond that
    it is ``bins`` slabs per axis, unbounded in the other coordinates. The
    outermost edges sit at the data extremes, so every point is covered.
    """
    pts = points.points
    probs = np.linspace(0.0, 1.0, bins + 1)
    edges = [np.unique(np.quantile(pts[:, j], probs)) for j in range(points.dim)]
    if points.dim <= MAX_GRID_DIMS:
        regions = []
        for cell in itertools.product(*[range(max(len(e) - 1, 1)) for e in edges]):
            lo = [e[i] for e, i in zip(edges, cell)]
            hi = [e[min(i + 1, len(e) - 1)] for e, i in zip(edges, cell)]
            regions.append(Region(lo, hi))
        return regions
    regions = []
    for j, e in enumerate(edges):
        for i in range(max(len(e) - 1, 1)):
            lo = np.full(points.dim, -np.inf)
            hi = np.full(points.dim, np.inf)
            lo[j], hi[j] = e[i], e[min(i + 1, len(e) - 1)]
            regions.append(Region(lo, hi))
    return regions


def abstract_mass(abst, region: Region) -> float:
    if isinstance(abst, (CentroidAbstraction, GmmAbstraction)):
        return region_mass_abstract(abst, region)
    return region_mass_density(abst, region)


def _hull(regions: Sequence[Region]) -> Region:
    lo = np.min([r.lower for r in regions], axis=0)
    hi = np.max([r.upper for r in regions], axis=0)
    return Region(lo, hi)


def compare_region_masses(empirical, abst, regions: Sequence[Region],
                          normalize: bool = False) -> ComparisonReport:
    """Absolute mass error of ``abst`` against empirical counts on each region.

    ``empirical`` is an :class:`EmpiricalPushforward` (its output is used) or a
    plain point set. With ``normalize``, both sides are rescaled to unit total:
    the points by their weight sum, distribution-domain models by their
    integral over the hull of ``regions``.
    """
    pts = empirical.output_points if isinstance(empirical, EmpiricalPushforward) else empirical
    if pts.dim != abst.dim:
        raise DimensionError(f"empirical dim {pts.dim} != abstraction dim {abst.dim}")
    regions = list(regions)
    emp_scale = 1.0 / pts.total_mass if normalize else 1.0
    abs_scale = 1.0
    if normalize and regions:
        if isinstance(abst, (CentroidAbstraction, GmmAbstraction)):
            abs_scale = 1.0 / abst.total_mass
        else:
            abs_scale = 1.0 / abstract_mass(abst, _hull(regions))
    entries = tuple(
        RegionError(r, region_mass_points(pts, r) * emp_scale, abstract_mass(abst, r) * abs_scale)
        for r in regions
    )
    return ComparisonReport(entries)
