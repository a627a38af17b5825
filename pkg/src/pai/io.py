"""JSON loading and saving for networks, distributions, regions, abstractions.

Loader errors are :class:`ValidationError` messages of the form
``"<file>: <json path>: <problem>"``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .clusters import CentroidAbstraction, GmmAbstraction
from .core import (
    ActivationLayer,
    AffineLayer,
    Network,
    Region,
    WeightedPointSet,
    ZonotopeSource,
    sample_zonotope,
)
from .distribution import (
    ComposedAbstraction,
    FourierAbstraction,
    PolynomialAbstraction,
    RbfAbstraction,
    RbfKernel,
    RbfSearch,
)
from .errors import PaiError, ValidationError

DEFAULT_ZONOTOPE_SAMPLES = 10_000


class _Ctx:
    def __init__(self, source: str):
        self.source = source

    def fail(self, path: str, msg: str):
        raise ValidationError(f"{self.source}: {path}: {msg}")

    def get(self, obj, key, path, kind=None):
        if not isinstance(obj, dict):
            self.fail(path, "expected an object")
        if key not in obj:
            self.fail(f"{path}.{key}" if path else key, "missing field")
        val = obj[key]
        if kind is not None and not isinstance(val, kind):
            self.fail(f"{path}.{key}" if path else key, f"expected {kind.__name__}")
        return val

    def array(self, val, ndim, path):
        try:
            arr = np.array(val, dtype=float)
        except (TypeError, ValueError):
            self.fail(path, "expected numbers")
        if arr.ndim != ndim and not (ndim == 2 and arr.size == 0):
            self.fail(path, f"expected a {ndim}-d array")
        return arr

    def build(self, path, fn, *args):
        try:
            return fn(*args)
        except PaiError as exc:
            self.fail(path, str(exc))


def read_json(path) -> object:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"{p}: cannot read: {exc.strerror}") from None
    try:
        return json.loads(text) if text.strip() else None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{p}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def network_from_json(obj, source: str = "<network>") -> Network:
    ctx = _Ctx(source)
    layers_obj = ctx.get(obj, "layers", "", list)
    layers = []
    for i, spec in enumerate(layers_obj):
        path = f"layers[{i}]"
        kind = ctx.get(spec, "type", path, str)
        if kind == "affine":
            w = ctx.array(ctx.get(spec, "weight", path), 2, f"{path}.weight")
            b = ctx.array(ctx.get(spec, "bias", path), 1, f"{path}.bias")
            layers.append(ctx.build(path, AffineLayer, w, b))
        elif kind == "activation":
            act = ctx.get(spec, "kind", path, str)
            dim = ctx.get(spec, "dim", path, int)
            layers.append(ctx.build(path, ActivationLayer, act, dim))
        else:
            ctx.fail(f"{path}.type", f"unknown layer type {kind!r}")
    return ctx.build("layers", Network, tuple(layers))


def network_to_json(net: Network) -> dict:
    out = []
    for layer in net.layers:
        if isinstance(layer, AffineLayer):
            out.append({"type": "affine", "weight": layer.weight.tolist(),
                        "bias": layer.bias.tolist()})
        else:
            out.append({"type": "activation", "kind": layer.kind, "dim": layer.dim})
    return {"layers": out}


def load_network(path) -> Network:
    return network_from_json(read_json(path), str(path))


def distribution_from_json(obj, source: str = "<distribution>",
                           default_seed: int = 0) -> tuple:
    """Parse a distribution file into ``(WeightedPointSet, description)``.

    Zonotopes are sampled here; the file's ``seed`` wins over ``default_seed``.
    """
    ctx = _Ctx(source)
    kind = ctx.get(obj, "type", "", str)
    if kind == "points":
        pts = ctx.array(ctx.get(obj, "points", ""), 2, "points")
        w = ctx.array(ctx.get(obj, "weights", ""), 1, "weights")
        return ctx.build("points", WeightedPointSet, pts, w), {"type": "points", "count": len(w)}
    if kind == "zonotope":
        z = zonotope_from_json(obj, source)
        samples = obj.get("samples", DEFAULT_ZONOTOPE_SAMPLES)
        seed = obj.get("seed", default_seed)
        if not isinstance(samples, int) or samples < 1:
            ctx.fail("samples", "expected a positive integer")
        if not isinstance(seed, int):
            ctx.fail("seed", "expected an integer")
        desc = {"type": "zonotope", "samples": samples, "seed": seed}
        return sample_zonotope(z, samples, seed), desc
    ctx.fail("type", f"unknown distribution type {kind!r}")


def load_distribution(path, default_seed: int = 0) -> tuple:
    return distribution_from_json(read_json(path), str(path), default_seed)


def zonotope_from_json(obj, source: str = "<distribution>") -> ZonotopeSource:
    ctx = _Ctx(source)
    center = ctx.array(ctx.get(obj, "center", ""), 1, "center")
    gens = ctx.array(obj.get("generators", []), 2, "generators")
    return ctx.build("generators", ZonotopeSource, center, gens.reshape(-1, center.size))


def regions_from_json(obj, source: str = "<queries>") -> list:
    """Accepts ``{"queries": [...]}``, a bare list, or nothing at all."""
    ctx = _Ctx(source)
    if obj is None:
        return []
    items = obj.get("queries", []) if isinstance(obj, dict) else obj
    if not isinstance(items, list):
        ctx.fail("queries", "expected a list of regions")
    regions = []
    for i, item in enumerate(items):
        path = f"queries[{i}]"
        lo = ctx.array(ctx.get(item, "lower", path), 1, f"{path}.lower")
        hi = ctx.array(ctx.get(item, "upper", path), 1, f"{path}.upper")
        regions.append(ctx.build(path, Region, lo, hi))
    return regions


def load_regions(path) -> list:
    return regions_from_json(read_json(path), str(path))


def abstraction_from_json(obj):
    """Inverse of the ``to_json`` methods on every abstraction type."""
    kind = obj["type"]
    if kind == "polynomial":
        return PolynomialAbstraction(obj["coefficients"])
    if kind == "rbf":
        search = obj.get("search")
        if search is not None:
            search = RbfSearch(search["explored"], search["feasible"],
                               tuple(search["center_indices"]), search["rms"])
        return RbfAbstraction(RbfKernel(obj["kernel"], obj["sigma"]), obj["centers"],
                              obj["coefficients"], obj.get("center_values"), search)
    if kind == "composed":
        maps = tuple(AffineLayer(m["weight"], m["bias"]) for m in obj["inverse_maps"])
        return ComposedAbstraction(abstraction_from_json(obj["base"]), maps, obj["scale"])
    if kind == "fourier":
        terms = obj["terms"]
        return FourierAbstraction([t["amplitude"] for t in terms], [t["center"] for t in terms],
                                  [t["width"] for t in terms])
    if kind == "centroids":
        return CentroidAbstraction(obj["centroids"], obj["masses"])
    if kind == "gmm":
        comps = obj["components"]
        return GmmAbstraction([c["w"] for c in comps], [c["mu"] for c in comps],
                              [c["sigma"] for c in comps], obj["masses"])
    raise ValidationError(f"unknown abstraction type {kind!r}")


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
