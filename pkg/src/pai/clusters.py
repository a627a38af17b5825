"""Clusters-approximation domains: K-means centroids and Gaussian mixtures.

Both abstractions carry one probability mass per cluster, aggregated from the
weights of the concrete points. Transformers move the cluster representatives
and leave the masses untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp, ndtr

from .core import (
    ActivationLayer,
    AffineLayer,
    Network,
    Region,
    WeightedPointSet,
    forward_eval,
    frozen_array,
    rng_for,
)
from .errors import (
    DegenerateDataError,
    DimensionError,
    StateError,
    TooFewPointsError,
    UnsupportedLayerError,
    ValidationError,
)

INIT_METHODS = ("random_points", "kmeans_plus_plus", "given")
COVARIANCE_REG = 1e-6
# total integrand evaluations allowed for full-covariance box probabilities
QUADRATURE_BUDGET = 2_000_000
MAX_NODES_PER_AXIS = 128


@dataclass(frozen=True)
class EmConfig:
    """Settings shared by K-means and EM.

    ``max_iters = 0`` keeps the initial parameters and only runs the
    assignment (or E-) step, which is how pre-seeded models are evaluated.
    ``weighted`` switches both algorithms from plain to weight-aware means.
    """

    k: int
    max_iters: int = 300
    tol: float = 1e-8
    seed: int = 0
    init: str = "random_points"
    init_means: Optional[np.ndarray] = None
    init_covariances: Optional[np.ndarray] = None
    init_weights: Optional[np.ndarray] = None
    weighted: bool = False

    def __post_init__(self):
        if int(self.k) < 1:
            raise ValidationError("k must be a positive integer")
        if int(self.max_iters) < 0:
            raise ValidationError("max_iters must be nonnegative")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.init not in INIT_METHODS:
            raise ValidationError(f"init must be one of {INIT_METHODS}")
        if self.init == "given":
            if self.init_means is None:
                raise ValidationError("init 'given' requires init_means")
            if len(self.init_means) != self.k:
                raise ValidationError(f"init_means has {len(self.init_means)} rows, k = {self.k}")


@dataclass(frozen=True)
class CentroidAbstraction:
    centroids: np.ndarray
    masses: np.ndarray
    assignments: Optional[np.ndarray] = None
    objective_history: tuple = ()

    def __post_init__(self):
        c = frozen_array(self.centroids, 2, "centroids")
        p = frozen_array(self.masses, 1, "masses")
        if c.shape[0] < 1 or c.shape[0] != p.shape[0]:
            raise DimensionError("need one mass per centroid and at least one centroid")
        if np.any(p < 0):
            raise ValidationError("masses must be nonnegative")
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "masses", p)
        if self.assignments is not None:
            a = np.array(self.assignments, dtype=np.intp)
            a.setflags(write=False)
            object.__setattr__(self, "assignments", a)
        object.__setattr__(self, "objective_history", tuple(self.objective_history))

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def to_json(self) -> dict:
        return {"type": "centroids", "centroids": self.centroids.tolist(),
                "masses": self.masses.tolist()}


@dataclass(frozen=True)
class GmmAbstraction:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    masses: np.ndarray
    responsibilities: Optional[np.ndarray] = None
    loglik_history: tuple = field(default=())

    def __post_init__(self):
        w = frozen_array(self.weights, 1, "weights")
        mu = frozen_array(self.means, 2, "means")
        cov = frozen_array(self.covariances, 3, "covariances")
        p = frozen_array(self.masses, 1, "masses")
        k, d = mu.shape
        if w.shape != (k,) or p.shape != (k,) or cov.shape != (k, d, d):
            raise DimensionError("inconsistent GMM component shapes")
        if np.any(w <= 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError("mixture weights must lie in (0, 1] and sum to 1")
        if not np.allclose(cov, np.swapaxes(cov, 1, 2), rtol=0.0, atol=1e-12):
            raise ValidationError("covariances must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-10:
            raise ValidationError("covariances must be positive semidefinite")
        for name, arr in (("weights", w), ("means", mu), ("covariances", cov), ("masses", p)):
            object.__setattr__(self, name, arr)
        if self.responsibilities is not None:
            r = frozen_array(self.responsibilities, 2, "responsibilities")
            object.__setattr__(self, "responsibilities", r)
        object.__setattr__(self, "loglik_history", tuple(self.loglik_history))

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def to_json(self) -> dict:
        return {"type": "gmm",
                "components": [{"w": float(w), "mu": mu.tolist(), "sigma": s.tolist()}
                               for w, mu, s in zip(self.weights, self.means, self.covariances)],
                "masses": self.masses.tolist()}


# ---------------------------------------------------------------------------
# K-means


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("mkd,mkd->mk", diff, diff)


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin returns the first minimum, so ties go to the lowest cluster index
    return np.argmin(_sq_dists(points, centroids), axis=1)


def _objective(points, centroids, labels, weights=None) -> float:
    resid = points - centroids[labels]
    per_point = np.einsum("md,md->m", resid, resid)
    return float(per_point.sum() if weights is None else weights @ per_point)


def _initial_centroids(data: WeightedPointSet, cfg: EmConfig, rng) -> np.ndarray:
    pts = data.points
    if cfg.init == "given":
        init = np.array(cfg.init_means, dtype=float)
        if init.shape != (cfg.k, data.dim):
            raise DimensionError(f"init_means shape {init.shape} != ({cfg.k}, {data.dim})")
        return init
    if cfg.init == "random_points":
        return pts[rng.choice(len(data), size=cfg.k, replace=False)].copy()
    # k-means++: D^2 sampling
    chosen = [int(rng.integers(len(data)))]
    d2 = _sq_dists(pts, pts[chosen])[:, 0]
    for _ in range(1, cfg.k):
        total = d2.sum()
        if total <= 0:
            remaining = np.setdiff1d(np.arange(len(data)), chosen)
            nxt = int(rng.choice(remaining))
        else:
            nxt = int(rng.choice(len(data), p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(pts, pts[[nxt]])[:, 0])
    return pts[chosen].copy()


def _update_centroids(points, labels, old, weights) -> np.ndarray:
    k, d = old.shape
    w = np.ones(points.shape[0]) if weights is None else weights
    sums = np.zeros((k, d))
    np.add.at(sums, labels, points * w[:, None])
    counts = np.bincount(labels, weights=w, minlength=k)
    new = old.copy()
    occupied = counts > 0
    new[occupied] = sums[occupied] / counts[occupied, None]
    if not occupied.all():
        # empty clusters jump to the point farthest from its current centroid
        far = _sq_dists(points, old)[np.arange(points.shape[0]), labels]
        order = np.argsort(-far, kind="stable")
        for j, cluster in enumerate(np.flatnonzero(~occupied)):
            new[cluster] = points[order[j]]
    return new


def kmeans_fit(data: WeightedPointSet, cfg: EmConfig) -> CentroidAbstraction:
    """Lloyd iteration with per-cluster mass aggregation.

    Centroid updates use plain means unless ``cfg.weighted``; masses are always
    the summed point weights of each cluster. Stops when labels stop changing,
    centroids move less than ``cfg.tol``, or after ``cfg.max_iters`` updates.
    The objective after every assignment step is kept in
    ``objective_history``.
    """
    if cfg.k > len(data):
        raise TooFewPointsError(f"k = {cfg.k} exceeds the {len(data)} data points")
    pts = data.points
    w = data.weights if cfg.weighted else None
    centroids = _initial_centroids(data, cfg, rng_for(cfg.seed))
    labels = _assign(pts, centroids)
    history = [_objective(pts, centroids, labels, w)]
    for _ in range(cfg.max_iters):
        new = _update_centroids(pts, labels, centroids, w)
        new_labels = _assign(pts, new)
        movement = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        history.append(_objective(pts, centroids, new_labels, w))
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        if stable or movement < cfg.tol:
            break
    masses = np.bincount(labels, weights=data.weights, minlength=cfg.k)
    return CentroidAbstraction(centroids, masses, labels, history)


def kmeans_objective(data: WeightedPointSet, abst: CentroidAbstraction,
                     weighted: bool = False) -> float:
    """Sum of squared distances of points to their assigned centroids."""
    if abst.assignments is None:
        raise StateError("abstraction carries no point assignments")
    if abst.assignments.shape[0] != len(data):
        raise StateError("assignments do not match the data")
    return _objective(data.points, abst.centroids, abst.assignments,
                      data.weights if weighted else None)


def transform_centroids(abst: CentroidAbstraction, net: Network) -> CentroidAbstraction:
    if abst.dim != net.in_dim:
        raise DimensionError(f"centroids have dim {abst.dim}, network expects {net.in_dim}")
    moved = forward_eval(net, abst.centroids)
    return CentroidAbstraction(moved, abst.masses, abst.assignments, abst.objective_history)


# ---------------------------------------------------------------------------
# Gaussian mixtures


def _log_gaussians(points, means, covs) -> np.ndarray:
    """log N(x_i | mu_k, Sigma_k) as an (m, k) array."""
    m, d = points.shape
    out = np.empty((m, means.shape[0]))
    for j, (mu, cov) in enumerate(zip(means, covs)):
        factor = cho_factor(cov, lower=True)
        diff = points - mu
        maha = np.einsum("md,md->m", diff, cho_solve(factor, diff.T).T)
        logdet = 2.0 * np.log(np.diag(factor[0])).sum()
        out[:, j] = -0.5 * (d * math.log(2.0 * math.pi) + logdet + maha)
    return out


def _e_step(points, weights, means, covs, sample_w):
    joint = _log_gaussians(points, means, covs) + np.log(weights)
    norm = logsumexp(joint, axis=1)
    resp = np.exp(joint - norm[:, None])
    # renormalise so rows sum to one to rounding
    resp /= resp.sum(axis=1, keepdims=True)
    ll = float(norm.sum() if sample_w is None else sample_w @ norm)
    return resp, ll


def _m_step(points, resp, sample_w):
    m, d = points.shape
    r = resp if sample_w is None else resp * sample_w[:, None]
    mk = r.sum(axis=0)
    nk = np.maximum(mk, 10 * np.finfo(float).tiny)
    weights = mk / mk.sum()
    means = (r.T @ points) / nk[:, None]
    covs = np.empty((resp.shape[1], d, d))
    for j in range(resp.shape[1]):
        diff = points - means[j]
        covs[j] = (r[:, j, None] * diff).T @ diff / nk[j]
        covs[j] = 0.5 * (covs[j] + covs[j].T) + COVARIANCE_REG * np.eye(d)
    return weights, means, covs


def _gmm_init(data: WeightedPointSet, cfg: EmConfig, sample_w):
    d = data.dim
    if cfg.init == "given":
        means = np.array(cfg.init_means, dtype=float)
        if means.shape != (cfg.k, d):
            raise DimensionError(f"init_means shape {means.shape} != ({cfg.k}, {d})")
        if cfg.init_covariances is None:
            covs = np.repeat(np.cov(data.points.T, bias=True).reshape(d, d)[None], cfg.k, axis=0)
            covs = covs + COVARIANCE_REG * np.eye(d)
        else:
            covs = np.array(cfg.init_covariances, dtype=float).reshape(cfg.k, d, d)
        if cfg.init_weights is None:
            weights = np.full(cfg.k, 1.0 / cfg.k)
        else:
            weights = np.array(cfg.init_weights, dtype=float)
        return weights, means, covs

    km = kmeans_fit(data, cfg)
    labels = km.assignments
    w = np.ones(len(data)) if sample_w is None else sample_w
    overall = np.cov(data.points.T, aweights=w, bias=True).reshape(d, d)
    counts = np.bincount(labels, weights=w, minlength=cfg.k)
    covs = np.empty((cfg.k, d, d))
    for j in range(cfg.k):
        members = labels == j
        if members.sum() >= 2:
            covs[j] = np.cov(data.points[members].T, aweights=w[members], bias=True).reshape(d, d)
        else:
            covs[j] = overall
        covs[j] = covs[j] + COVARIANCE_REG * np.eye(d)
    weights = np.maximum(counts, np.finfo(float).tiny)
    return weights / weights.sum(), km.centroids, covs


def gmm_fit(data: WeightedPointSet, cfg: EmConfig) -> GmmAbstraction:
    """Fit a K-component Gaussian mixture by EM.

    Initialised from :func:`kmeans_fit` with the same config unless
    ``cfg.init == "given"``. Every M-step adds ``COVARIANCE_REG * I`` to each
    covariance. Iteration stops once the log-likelihood gain drops below
    ``cfg.tol``. Cluster masses are the responsibility-weighted sums of the
    point weights.
    """
    if cfg.k > len(data):
        raise TooFewPointsError(f"k = {cfg.k} exceeds the {len(data)} data points")
    pts = data.points
    if np.all(pts == pts[0]):
        raise DegenerateDataError("all data points are identical")
    sample_w = None
    if cfg.weighted:
        sample_w = data.weights * (len(data) / data.weights.sum())

    weights, means, covs = _gmm_init(data, cfg, sample_w)
    resp, ll = _e_step(pts, weights, means, covs, sample_w)
    history = [ll]
    for _ in range(cfg.max_iters):
        weights, means, covs = _m_step(pts, resp, sample_w)
        resp, ll_new = _e_step(pts, weights, means, covs, sample_w)
        history.append(ll_new)
        if ll_new - ll < cfg.tol:
            break
        ll = ll_new
    masses = data.weights @ resp
    return GmmAbstraction(weights, means, covs, masses, resp, history)


def transform_gmm(abst: GmmAbstraction, layer) -> GmmAbstraction:
    """Map every component through an affine layer: (A mu + b, A Sigma A^T, w)."""
    if isinstance(layer, ActivationLayer):
        raise UnsupportedLayerError(
            f"GMM domain supports affine layers only; got activation {layer.kind!r}"
        )
    if not isinstance(layer, AffineLayer):
        raise UnsupportedLayerError(f"unsupported layer {type(layer).__name__}")
    if layer.in_dim != abst.dim:
        raise DimensionError(f"layer expects dim {layer.in_dim}, GMM has dim {abst.dim}")
    a = layer.weight
    means = layer.apply(abst.means)
    covs = np.einsum("ij,kjl,ml->kim", a, abst.covariances, a)
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    return GmmAbstraction(abst.weights, means, covs, abst.masses, abst.responsibilities,
                          abst.loglik_history)


# ---------------------------------------------------------------------------
# region queries


def _box_probability(mean: np.ndarray, cov: np.ndarray, region: Region) -> float:
    """P(X in box) for X ~ N(mean, cov).

    Diagonal covariances factor into per-axis normal CDFs. Otherwise the last
    coordinate is integrated exactly through its conditional distribution and
    the remaining ones by tensor Gauss-Legendre quadrature, with
    ``min(128, floor(2e6 ** (1 / (d - 1))))`` nodes per axis over the box
    clipped to mean +/- 8 standard deviations.
    """
    d = mean.shape[0]
    sd = np.sqrt(np.maximum(np.diag(cov), 0.0))
    lo, hi = region.lower, region.upper

    def axis_prob(l, u, mu, s):
        l, u, mu, s = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (l, u, mu, s)))
        point = ((l <= mu) & (mu <= u)).astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            smooth = ndtr((u - mu) / s) - ndtr((l - mu) / s)
        return np.where(s > 0, smooth, point)

    off = cov - np.diag(np.diag(cov))
    if d == 1 or not np.any(off):
        return float(np.prod(axis_prob(lo, hi, mean, sd)))

    outer = d - 1
    a = np.maximum(lo[:outer], mean[:outer] - 8 * sd[:outer])
    b = np.minimum(hi[:outer], mean[:outer] + 8 * sd[:outer])
    if np.any(a >= b):
        return 0.0
    n = int(min(MAX_NODES_PER_AXIS, math.floor(QUADRATURE_BUDGET ** (1.0 / outer))))
    nodes, wts = np.polynomial.legendre.leggauss(n)
    axes = [0.5 * (b[i] - a[i]) * nodes + 0.5 * (a[i] + b[i]) for i in range(outer)]
    axw = [0.5 * (b[i] - a[i]) * wts for i in range(outer)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, outer)
    gw = np.prod(np.stack(np.meshgrid(*axw, indexing="ij"), axis=-1).reshape(-1, outer), axis=1)

    s11 = cov[:outer, :outer]
    s21 = cov[outer, :outer]
    gain = np.linalg.solve(s11, s21)
    cond_var = max(cov[outer, outer] - s21 @ gain, 0.0)
    diff = grid - mean[:outer]
    logpdf = _log_gaussians(grid, mean[None, :outer], s11[None])[:, 0]
    cond_mean = mean[outer] + diff @ gain
    inner = axis_prob(lo[outer], hi[outer], cond_mean, math.sqrt(cond_var))
    return float(gw @ (np.exp(logpdf) * inner))


def region_mass_abstract(abst, region: Region) -> float:
    """Probability mass an abstraction assigns to a closed box."""
    if region.dim != abst.dim:
        raise DimensionError(f"region dim {region.dim} != abstraction dim {abst.dim}")
    if isinstance(abst, CentroidAbstraction):
        return float(abst.masses[region.contains(abst.centroids)].sum())
    if isinstance(abst, GmmAbstraction):
        return float(sum(p * _box_probability(mu, cov, region)
                         for p, mu, cov in zip(abst.masses, abst.means, abst.covariances)))
    raise ValidationError(f"not a cluster abstraction: {type(abst).__name__}")
