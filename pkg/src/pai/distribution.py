"""Distribution-approximation domains.

An abstract element here is a function ``y(x)`` fitted over the graph of
(value, probability) pairs of a concrete point set. Layers act on it by
composition with the inverse map, ``y'(x) = y(f^{-1}(x))``; an optional
Jacobian factor turns that into a true density pushforward.

Gaussian kernels are parameterized as ``exp(-d**2 / (2 sigma**2))``, so the
kernel ``exp(-d**2)`` corresponds to ``sigma = 1/sqrt(2)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import solve_triangular

from .core import AffineLayer, Region, WeightedPointSet, affine_invert, frozen_array
from .errors import (
    DimensionError,
    NoFeasibleModelError,
    NotInvertibleError,
    RankDeficientError,
    SearchTooLargeError,
    SingularSystemError,
    TooFewPointsError,
    UnderdeterminedError,
    UnsupportedKernelError,
    UnsupportedLayerError,
    ValidationError,
)

KERNELS = ("gaussian", "multiquadric", "inverse_multiquadric", "thin_plate_spline")
MAX_COMBINATIONS = 10**6
INTERPOLATION_COND_LIMIT = 1e12
SIMPSON_NODES = 1025


@dataclass(frozen=True)
class RbfKernel:
    kind: str = "gaussian"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise UnsupportedKernelError(f"unknown kernel {self.kind!r}")
        if self.kind != "thin_plate_spline" and not self.sigma > 0:
            raise ValidationError("kernel width sigma must be positive")

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        s = self.sigma
        if self.kind == "gaussian":
            return np.exp(-(d * d) / (2.0 * s * s))
        if self.kind == "multiquadric":
            return np.sqrt(d * d + s * s)
        if self.kind == "inverse_multiquadric":
            return 1.0 / np.sqrt(d * d + s * s)
        # thin plate spline; d**2 log d -> 0 as d -> 0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = d * d * np.log(d)
        return np.where(d > 0, out, 0.0)

    def to_json(self) -> dict:
        return {"kernel": self.kind, "sigma": float(self.sigma)}


def _as_points(x, dim: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim <= 1 and dim == 1:
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise DimensionError(f"expected points of dim {dim}, got shape {np.shape(x)}")
    return pts


@dataclass(frozen=True)
class PolynomialAbstraction:
    """y(x) = sum_j coefficients[j] * x**j over a one-dimensional space."""

    coefficients: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coefficients", frozen_array(self.coefficients, 1, "coefficients"))
        if self.coefficients.size == 0:
            raise ValidationError("polynomial needs at least one coefficient")

    @property
    def degree(self) -> int:
        return self.coefficients.size - 1

    @property
    def dim(self) -> int:
        return 1

    def evaluate(self, points) -> np.ndarray:
        x = _as_points(points, 1)[:, 0]
        return np.polynomial.polynomial.polyval(x, self.coefficients)

    def to_json(self) -> dict:
        return {"type": "polynomial", "degree": self.degree,
                "coefficients": self.coefficients.tolist()}


@dataclass(frozen=True)
class RbfSearch:
    """Provenance of an exhaustive center search."""

    explored: int
    feasible: int
    center_indices: tuple
    rms: float

    def to_json(self) -> dict:
        return {"explored": self.explored, "feasible": self.feasible,
                "center_indices": list(self.center_indices), "rms": self.rms}


@dataclass(frozen=True)
class RbfAbstraction:
    """y(x) = sum_i coefficients[i] * kernel(||x - centers[i]||)."""

    kernel: RbfKernel
    centers: np.ndarray
    coefficients: np.ndarray
    center_values: Optional[np.ndarray] = None
    search: Optional[RbfSearch] = None

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        object.__setattr__(self, "centers", frozen_array(c, 2, "centers"))
        object.__setattr__(self, "coefficients", frozen_array(self.coefficients, 1, "coefficients"))
        if self.center_values is not None:
            object.__setattr__(self, "center_values",
                               frozen_array(self.center_values, 1, "center_values"))
        if self.centers.shape[0] != self.coefficients.shape[0]:
            raise DimensionError("one coefficient per center required")

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def evaluate(self, points) -> np.ndarray:
        x = _as_points(points, self.dim)
        dist = np.linalg.norm(x[:, None, :] - self.centers[None, :, :], axis=-1)
        return self.kernel(dist) @ self.coefficients

    def to_json(self) -> dict:
        out = {"type": "rbf", **self.kernel.to_json(),
               "centers": self.centers.tolist(), "coefficients": self.coefficients.tolist()}
        if self.center_values is not None:
            out["center_values"] = self.center_values.tolist()
        if self.search is not None:
            out["search"] = self.search.to_json()
        return out


@dataclass(frozen=True)
class ComposedAbstraction:
    """``scale * base(g_1(g_2(...g_k(x))))`` for stored inverse maps g_i.

    Used whenever the transformed model has no closed form in its own family.
    ``inverse_maps`` are kept in the order the layers were applied.
    """

    base: object
    inverse_maps: tuple
    scale: float = 1.0

    @property
    def dim(self) -> int:
        return self.inverse_maps[-1].in_dim

    def pull_back(self, points) -> np.ndarray:
        z = _as_points(points, self.dim)
        for g in reversed(self.inverse_maps):
            z = g.apply(z)
        return z

    def evaluate(self, points) -> np.ndarray:
        return self.scale * self.base.evaluate(self.pull_back(points))

    def to_json(self) -> dict:
        return {"type": "composed", "base": self.base.to_json(), "scale": float(self.scale),
                "inverse_maps": [{"weight": g.weight.tolist(), "bias": g.bias.tolist()}
                                 for g in self.inverse_maps]}


@dataclass(frozen=True)
class FourierAbstraction:
    """Closed-form spectrum of a sum of Gaussian bumps in one dimension.

    Term i is the source function ``amplitude * exp(-(x - center)**2 / width**2)``,
    whose transform (kernel ``exp(-j w x)``) is
    ``amplitude * sqrt(pi) * width * exp(-width**2 w**2 / 4) * exp(-j w center)``.
    """

    amplitudes: np.ndarray
    centers: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        a = frozen_array(self.amplitudes, 1, "amplitudes")
        c = frozen_array(self.centers, 1, "centers")
        w = frozen_array(self.widths, 1, "widths")
        if not (a.shape == c.shape == w.shape):
            raise DimensionError("amplitudes, centers and widths must have equal length")
        if np.any(w <= 0):
            raise ValidationError("widths must be positive")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", w)

    @property
    def dim(self) -> int:
        return 1

    def spectrum(self, omega) -> np.ndarray:
        om = np.asarray(omega, dtype=float)
        flat = om.reshape(-1, 1)
        terms = (self.amplitudes * math.sqrt(math.pi) * self.widths
                 * np.exp(-(self.widths ** 2) * flat ** 2 / 4.0)
                 * np.exp(-1j * flat * self.centers))
        return terms.sum(axis=1).reshape(om.shape)

    def total_integral(self) -> float:
        return float(self.spectrum(0.0).real)

    def evaluate(self, points) -> np.ndarray:
        """The source function in space, recovered term by term."""
        x = _as_points(points, 1)
        return np.exp(-((x - self.centers) ** 2) / self.widths ** 2) @ self.amplitudes

    def to_json(self) -> dict:
        return {"type": "fourier",
                "terms": [{"amplitude": float(a), "center": float(c), "width": float(w)}
                          for a, c, w in zip(self.amplitudes, self.centers, self.widths)]}


DistributionAbstraction = Union[PolynomialAbstraction, RbfAbstraction, ComposedAbstraction,
                                FourierAbstraction]


def _require_1d(data: WeightedPointSet) -> np.ndarray:
    if data.dim != 1:
        raise DimensionError(f"fitting is one-dimensional; data has dim {data.dim}")
    return data.points[:, 0]


def fit_polynomial(data: WeightedPointSet, degree: int) -> PolynomialAbstraction:
    """Least-squares polynomial regressing point weight on point value.

    Solved through a QR factorization of the Vandermonde matrix rather than
    the normal equations.
    """
    x = _require_1d(data)
    if degree < 0:
        raise ValidationError("degree must be nonnegative")
    if x.size < degree + 1:
        raise UnderdeterminedError(f"{x.size} points cannot determine {degree + 1} coefficients")
    vander = np.vander(x, degree + 1, increasing=True)
    q, r = np.linalg.qr(vander)
    diag = np.abs(np.diag(r))
    if diag.min() <= diag.max() * max(vander.shape) * np.finfo(float).eps:
        raise RankDeficientError(f"design matrix of degree {degree} is rank deficient")
    beta = solve_triangular(r, q.T @ data.weights)
    return PolynomialAbstraction(beta)


def _solve_square(phi: np.ndarray, values: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(phi)
    if not np.isfinite(cond) or cond > INTERPOLATION_COND_LIMIT:
        raise SingularSystemError(f"interpolation matrix condition {cond:.3g}")
    coef = np.linalg.solve(phi, values)
    if np.max(np.abs(phi @ coef - values), initial=0.0) >= 1e-9:
        raise SingularSystemError("interpolation residual too large")
    return coef


def solve_rbf_interpolation(centers, center_values, kernel: RbfKernel) -> np.ndarray:
    c = np.asarray(centers, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    values = np.asarray(center_values, dtype=float)
    if values.shape != (c.shape[0],):
        raise DimensionError("one value per center required")
    phi = kernel(np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1))
    return _solve_square(phi, values)


def fit_rbf_exhaustive(data: WeightedPointSet, n_centers: int,
                       kernel: RbfKernel) -> RbfAbstraction:
    """Try every ``n_centers``-subset of the data points as centers.

    Each subset is interpolated exactly at its own points; the subset whose
    model has the lowest RMS error over all data wins. Ties go to the
    lexicographically smallest index tuple, and singular subsets are skipped.
    """
    x = _require_1d(data)
    m = x.size
    if not 1 <= n_centers <= m:
        raise TooFewPointsError(f"need 1 <= n_centers <= {m}, got {n_centers}")
    total = math.comb(m, n_centers)
    if total > MAX_COMBINATIONS:
        raise SearchTooLargeError(f"C({m}, {n_centers}) = {total} exceeds {MAX_COMBINATIONS}")

    y = data.weights
    phi_all = kernel(np.abs(x[:, None] - x[None, :]))
    best = None
    explored = feasible = 0
    for idx in itertools.combinations(range(m), n_centers):
        explored += 1
        sel = list(idx)
        try:
            coef = _solve_square(phi_all[np.ix_(sel, sel)], y[sel])
        except (SingularSystemError, np.linalg.LinAlgError):
            continue
        feasible += 1
        resid = phi_all[:, sel] @ coef - y
        rms = math.sqrt(float(resid @ resid) / m)
        if best is None or rms < best[0]:
            best = (rms, idx, coef)
    if best is None:
        raise NoFeasibleModelError(f"all {explored} center combinations are singular")
    rms, idx, coef = best
    sel = list(idx)
    return RbfAbstraction(kernel, x[sel][:, None], coef, y[sel],
                          RbfSearch(explored, feasible, idx, rms))


def eval_distribution(abst: DistributionAbstraction, x) -> float:
    """Model value at a single point (a scalar is accepted in one dimension)."""
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.ndim != 1 or pt.shape[0] != abst.dim:
        raise DimensionError(f"point of shape {np.shape(x)} does not match dim {abst.dim}")
    return float(abst.evaluate(pt[None, :])[0])


def _scaled_isometry_factor(weight: np.ndarray) -> Optional[float]:
    """s if weight == s * Q for orthogonal Q, else None."""
    n = weight.shape[0]
    gram = weight.T @ weight
    s2 = np.trace(gram) / n
    if s2 > 0 and np.allclose(gram, s2 * np.eye(n), rtol=0.0, atol=1e-13 * s2):
        return math.sqrt(s2)
    return None


def transform_distribution(abst: DistributionAbstraction, layer: AffineLayer,
                           jacobian_correction: bool = False) -> DistributionAbstraction:
    """Push a distribution model through ``layer``: x -> y(f^{-1}(x)).

    Gaussian RBF models stay in closed form under scaled isometries (centers
    move by f, widths scale); everything else becomes a
    :class:`ComposedAbstraction`. With ``jacobian_correction`` the result is
    also multiplied by ``|det f^{-1}|`` so total mass is preserved.
    """
    if not isinstance(layer, AffineLayer):
        raise UnsupportedLayerError("distribution domains support affine layers only")
    if isinstance(abst, FourierAbstraction):
        return transform_fourier(abst, layer, jacobian_correction)
    if layer.in_dim != abst.dim:
        raise DimensionError(f"layer expects dim {layer.in_dim}, abstraction has dim {abst.dim}")
    inverse = affine_invert(layer)
    if layer.is_identity():
        return abst
    jac = abs(float(np.linalg.det(inverse.weight))) if jacobian_correction else 1.0

    if isinstance(abst, RbfAbstraction) and abst.kernel.kind == "gaussian":
        s = _scaled_isometry_factor(layer.weight)
        if s is not None:
            return RbfAbstraction(
                RbfKernel("gaussian", abst.kernel.sigma * s),
                layer.apply(abst.centers),
                abst.coefficients * jac if jacobian_correction else abst.coefficients,
                abst.center_values,
                abst.search,
            )
    if isinstance(abst, ComposedAbstraction):
        return ComposedAbstraction(abst.base, abst.inverse_maps + (inverse,), abst.scale * jac)
    return ComposedAbstraction(abst, (inverse,), jac)


def fourier_of_rbf(abst: RbfAbstraction) -> FourierAbstraction:
    if not isinstance(abst, RbfAbstraction) or abst.kernel.kind != "gaussian":
        raise UnsupportedKernelError("Fourier abstraction needs a gaussian RBF model")
    if abst.dim != 1:
        raise DimensionError("Fourier abstraction is one-dimensional")
    width = math.sqrt(2.0) * abst.kernel.sigma
    return FourierAbstraction(abst.coefficients, abst.centers[:, 0],
                              np.full(abst.coefficients.size, width))


def _scalar_affine(layer: AffineLayer) -> tuple:
    if not isinstance(layer, AffineLayer):
        raise UnsupportedLayerError("Fourier domain supports affine layers only")
    if layer.weight.shape != (1, 1):
        raise DimensionError("Fourier domain supports 1x1 affine layers only")
    a, b = float(layer.weight[0, 0]), float(layer.bias[0])
    if a == 0.0:
        raise NotInvertibleError("scalar layer with zero slope is not invertible")
    return a, b


def transform_fourier(F: FourierAbstraction, layer: AffineLayer,
                      jacobian_correction: bool = False) -> FourierAbstraction:
    """Spectrum of x -> y((x - b) / a) given the spectrum of y.

    The rule is F'(w) = |a| exp(-j w b) F(a w); on Gaussian terms this moves
    each center to a*c + b and scales each width by |a|.
    """
    a, b = _scalar_affine(layer)
    if a == 1.0 and b == 0.0:
        return F
    amps = F.amplitudes / abs(a) if jacobian_correction else F.amplitudes
    return FourierAbstraction(amps, a * F.centers + b, abs(a) * F.widths)


def region_mass_density(abst: DistributionAbstraction, region: Region,
                        nodes: int = SIMPSON_NODES) -> float:
    """Integral of the model over a finite box by composite Simpson quadrature."""
    if region.dim != abst.dim:
        raise DimensionError(f"region dim {region.dim} != abstraction dim {abst.dim}")
    if not (np.all(np.isfinite(region.lower)) and np.all(np.isfinite(region.upper))):
        raise ValidationError("density integration needs a bounded region")
    if np.any(region.lower == region.upper):
        return 0.0
    if abst.dim == 1:
        xs = np.linspace(region.lower[0], region.upper[0], nodes)
        return float(simpson(abst.evaluate(xs), x=xs))
    if abst.dim == 2:
        xs = np.linspace(region.lower[0], region.upper[0], nodes)
        ys = np.linspace(region.lower[1], region.upper[1], nodes)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        vals = abst.evaluate(np.column_stack([gx.ravel(), gy.ravel()])).reshape(gx.shape)
        return float(simpson(simpson(vals, x=ys, axis=1), x=xs))
    raise DimensionError("density integration supports at most two dimensions")
