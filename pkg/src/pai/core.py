"""Concrete-side data model: layers, networks, input distributions, regions.

All containers are frozen dataclasses holding read-only numpy arrays, so
instances can be shared freely. Randomness always goes through
``numpy.random.Generator(PCG64(seed))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DimensionError, IllConditionedError, NotInvertibleError, ValidationError

CONDITION_LIMIT = 1e12

ACTIVATIONS = {
    "identity": lambda z: z,
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
    "sigmoid": lambda z: 0.5 * (1.0 + np.tanh(0.5 * z)),
}


def frozen_array(values, ndim: int | None = None, name: str = "array") -> np.ndarray:
    arr = np.array(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name}: expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: entries must be finite")
    arr.setflags(write=False)
    return arr


def rng_for(seed: int) -> np.random.Generator:
    """The package-wide seeded generator (PCG64)."""
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class AffineLayer:
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = frozen_array(self.weight, 2, "weight")
        b = frozen_array(self.bias, 1, "bias")
        if w.shape[0] != b.shape[0]:
            raise DimensionError(
                f"weight has {w.shape[0]} rows but bias has length {b.shape[0]}"
            )
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @classmethod
    def scalar(cls, a: float, b: float) -> "AffineLayer":
        """The 1x1 layer x -> a*x + b."""
        return cls([[a]], [b])

    @classmethod
    def identity(cls, dim: int) -> "AffineLayer":
        return cls(np.eye(dim), np.zeros(dim))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def is_identity(self) -> bool:
        return (
            self.in_dim == self.out_dim
            and np.array_equal(self.weight, np.eye(self.in_dim))
            and not np.any(self.bias)
        )

    def apply(self, x: np.ndarray) -> np.ndarray:
        # works on a single vector (n,) or a batch (m, n)
        return x @ self.weight.T + self.bias

    def then(self, other: "AffineLayer") -> "AffineLayer":
        """Composition ``other(self(x))`` as one affine layer."""
        if other.in_dim != self.out_dim:
            raise DimensionError("layers do not chain")
        return AffineLayer(other.weight @ self.weight, other.weight @ self.bias + other.bias)


@dataclass(frozen=True)
class ActivationLayer:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise ValidationError(
                f"unknown activation {self.kind!r}; expected one of {sorted(ACTIVATIONS)}"
            )
        if int(self.dim) < 1:
            raise ValidationError("activation dim must be positive")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def in_dim(self) -> int:
        return self.dim

    @property
    def out_dim(self) -> int:
        return self.dim

    def apply(self, x: np.ndarray) -> np.ndarray:
        return ACTIVATIONS[self.kind](x)


Layer = Union[AffineLayer, ActivationLayer]


@dataclass(frozen=True)
class Network:
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValidationError("network must have at least one layer")
        for i in range(1, len(layers)):
            if layers[i - 1].out_dim != layers[i].in_dim:
                raise DimensionError(
                    f"layer {i - 1} outputs dim {layers[i - 1].out_dim} "
                    f"but layer {i} expects dim {layers[i].in_dim}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def __len__(self) -> int:
        return len(self.layers)

    def is_affine(self) -> bool:
        return all(isinstance(layer, AffineLayer) for layer in self.layers)


def forward_eval(net: Network, x) -> np.ndarray:
    """Apply every layer of ``net`` to a point ``x`` (or a batch of rows)."""
    z = np.asarray(x, dtype=float)
    if z.ndim == 0 or z.shape[-1] != net.in_dim:
        raise DimensionError(f"input has shape {z.shape}, network expects dim {net.in_dim}")
    for layer in net.layers:
        z = layer.apply(z)
    return z


def affine_invert(layer: AffineLayer) -> AffineLayer:
    """Return g with g(f(x)) = x, rejecting non-square or ill-conditioned maps."""
    w = layer.weight
    if w.shape[0] != w.shape[1]:
        raise NotInvertibleError(f"weight of shape {w.shape} is not square")
    cond = np.linalg.cond(w)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditionedError(f"condition number {cond:.3g} exceeds {CONDITION_LIMIT:g}")
    w_inv = np.linalg.inv(w)
    return AffineLayer(w_inv, -(w_inv @ layer.bias))


@dataclass(frozen=True)
class WeightedPointSet:
    """A finite distribution: rows of ``points`` with nonnegative ``weights``.

    Weights need not sum to one; :meth:`normalized` rescales them.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        pts = frozen_array(pts, 2, "points")
        w = frozen_array(self.weights, 1, "weights")
        if pts.shape[0] != w.shape[0]:
            raise DimensionError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if np.any(w < 0):
            raise ValidationError("weights must be nonnegative")
        if not w.sum() > 0:
            raise ValidationError("weights must have positive sum")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def normalized(self) -> "WeightedPointSet":
        return WeightedPointSet(self.points, self.weights / self.weights.sum())

    def mean(self) -> np.ndarray:
        return self.weights @ self.points / self.weights.sum()


@dataclass(frozen=True)
class ZonotopeSource:
    """z(eps) = center + sum_j eps_j * generators[j], eps in [-1, 1]^g."""

    center: np.ndarray
    generators: np.ndarray = field(default=None)

    def __post_init__(self):
        c = frozen_array(self.center, 1, "center")
        gens = self.generators
        if gens is None or len(gens) == 0:
            g = np.zeros((0, c.shape[0]))
        else:
            g = np.array(gens, dtype=float)
        g = frozen_array(g, 2, "generators")
        if g.shape[1] != c.shape[0]:
            raise DimensionError(
                f"generators have dim {g.shape[1]}, center has dim {c.shape[0]}"
            )
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", g)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def noise_count(self) -> int:
        return self.generators.shape[0]

    def bounding_box(self) -> "Region":
        radius = np.abs(self.generators).sum(axis=0)
        return Region(self.center - radius, self.center + radius)


def sample_zonotope(z: ZonotopeSource, count: int, seed: int) -> WeightedPointSet:
    if count < 1:
        raise ValidationError("sample count must be at least 1")
    eps = rng_for(seed).uniform(-1.0, 1.0, size=(count, z.noise_count))
    points = z.center + eps @ z.generators
    return WeightedPointSet(points, np.full(count, 1.0 / count))


@dataclass(frozen=True)
class Region:
    """Closed axis-aligned box; infinite bounds are allowed."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionError("lower and upper bounds differ in length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValidationError("region bounds must not be NaN")
        if np.any(lo > hi):
            raise ValidationError("region lower bound exceeds upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        if pts.shape[1] != self.dim:
            raise DimensionError(f"points have dim {pts.shape[1]}, region has dim {self.dim}")
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def to_json(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


def region_mass_points(d: WeightedPointSet, r: Region) -> float:
    if d.dim != r.dim:
        raise DimensionError(f"distribution dim {d.dim} != region dim {r.dim}")
    return float(d.weights[r.contains(d.points)].sum())
