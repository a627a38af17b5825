import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pai.clusters import (
    CentroidAbstraction,
    EmConfig,
    GmmAbstraction,
    gmm_fit,
    kmeans_fit,
    kmeans_objective,
    region_mass_abstract,
    transform_centroids,
    transform_gmm,
)
from pai.core import (
    ActivationLayer,
    AffineLayer,
    Network,
    Region,
    WeightedPointSet,
    forward_eval,
    sample_zonotope,
)
from pai.errors import (
    DegenerateDataError,
    DimensionError,
    StateError,
    TooFewPointsError,
    UnsupportedLayerError,
    ValidationError,
)

import reference

GIVEN_CENTROIDS = np.array([[11 / 18, 29 / 18], [25 / 18, 43 / 18]])
SHEARED_CENTROIDS = np.array([[-7 / 18, 29 / 18], [7 / 18, 43 / 18]])


def given_gmm():
    cov = np.diag([1 / 81, 1 / 81])
    return GmmAbstraction([0.5, 0.5], GIVEN_CENTROIDS, [cov, cov], [0.5, 0.5])


# --- K-means -------------------------------------------------------------------

def test_kmeans_two_blobs(two_blobs):
    abst = kmeans_fit(two_blobs, EmConfig(k=2, seed=0))
    order = np.argsort(abst.centroids[:, 0])
    pts = two_blobs.points
    np.testing.assert_allclose(abst.centroids[order[0]], pts[:200].mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(abst.centroids[order[1]], pts[200:].mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(abst.masses[order], [0.5, 0.5], atol=1e-12)


def test_kmeans_zonotope_masses(zonotope):
    data = sample_zonotope(zonotope, 100_000, seed=0)
    abst = kmeans_fit(data, EmConfig(k=2, seed=0))
    assert np.all(np.abs(abst.masses - 0.5) < 0.02)
    assert np.all(np.diff(abst.objective_history) <= 0)


def test_kmeans_k_equals_points():
    data = WeightedPointSet([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]], [0.2, 0.3, 0.5])
    abst = kmeans_fit(data, EmConfig(k=3, seed=4))
    assert sorted(map(tuple, abst.centroids)) == sorted(map(tuple, data.points))
    assert kmeans_objective(data, abst) == 0.0
    assert abst.total_mass == pytest.approx(1.0)


def test_kmeans_objective_single_cluster():
    data = WeightedPointSet([[0.0], [2.0]], [0.5, 0.5])
    abst = kmeans_fit(data, EmConfig(k=1))
    assert abst.centroids.tolist() == [[1.0]]
    assert kmeans_objective(data, abst) == 2.0


def test_kmeans_objective_needs_assignments():
    with pytest.raises(StateError):
        kmeans_objective(WeightedPointSet([[0.0]], [1.0]), CentroidAbstraction([[0.0]], [1.0]))


def test_kmeans_masses_weighted_unweighted_means():
    data = WeightedPointSet([[0.0], [1.0], [10.0]], [0.7, 0.1, 0.2])
    cfg = EmConfig(k=2, init="given", init_means=[[0.0], [10.0]])
    plain = kmeans_fit(data, cfg)
    assert plain.centroids[0, 0] == 0.5
    np.testing.assert_allclose(plain.masses, [0.8, 0.2])
    weighted = kmeans_fit(data, EmConfig(k=2, init="given", init_means=[[0.0], [10.0]],
                                         weighted=True))
    assert weighted.centroids[0, 0] == pytest.approx(0.1 / 0.8)


def test_kmeans_given_no_iterations(zonotope):
    data = sample_zonotope(zonotope, 2000, seed=3)
    abst = kmeans_fit(data, EmConfig(k=2, max_iters=0, init="given", init_means=GIVEN_CENTROIDS))
    np.testing.assert_array_equal(abst.centroids, GIVEN_CENTROIDS)
    assert abst.total_mass == pytest.approx(1.0)
    assert len(abst.objective_history) == 1


def test_kmeans_plus_plus(two_blobs):
    abst = kmeans_fit(two_blobs, EmConfig(k=2, init="kmeans_plus_plus", seed=9))
    np.testing.assert_allclose(np.sort(abst.masses), [0.5, 0.5])


def test_kmeans_deterministic(zonotope):
    data = sample_zonotope(zonotope, 5000, seed=1)
    a = kmeans_fit(data, EmConfig(k=3, seed=5))
    b = kmeans_fit(data, EmConfig(k=3, seed=5))
    np.testing.assert_array_equal(a.centroids, b.centroids)
    np.testing.assert_array_equal(a.assignments, b.assignments)


def test_kmeans_empty_cluster_reseeded():
    # two identical initial centroids: the second one starts out empty
    data = WeightedPointSet([[0.0], [0.1], [9.0], [9.2]], [0.25] * 4)
    abst = kmeans_fit(data, EmConfig(k=2, init="given", init_means=[[0.0], [0.0]]))
    assert sorted(abst.centroids[:, 0].round(12).tolist()) == [0.05, 9.1]
    assert abst.k == 2


def test_kmeans_errors():
    data = WeightedPointSet([[0.0], [1.0]], [0.5, 0.5])
    with pytest.raises(TooFewPointsError):
        kmeans_fit(data, EmConfig(k=3))
    with pytest.raises(ValidationError):
        EmConfig(k=2, tol=0.0)
    with pytest.raises(ValidationError):
        EmConfig(k=2, init="given")
    with pytest.raises(DimensionError):
        kmeans_fit(data, EmConfig(k=2, init="given", init_means=[[0.0, 0.0], [1.0, 1.0]]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 5), weighted=st.booleans())
def test_lloyd_monotone_and_idempotent(seed, k, weighted):
    rng = np.random.default_rng(seed)
    data = WeightedPointSet(rng.normal(size=(120, 2)) * [1, 3], rng.uniform(0.1, 1, 120))
    abst = kmeans_fit(data, EmConfig(k=k, seed=seed, weighted=weighted))
    hist = np.array(abst.objective_history)
    assert np.all(np.diff(hist) <= 1e-12 * max(1.0, hist[0]))
    relabel = np.argmin(((data.points[:, None] - abst.centroids[None]) ** 2).sum(-1), axis=1)
    np.testing.assert_array_equal(relabel, abst.assignments)


# --- centroid transformer -----------------------------------------------------

def test_transform_centroids_shear(shear):
    abst = CentroidAbstraction(GIVEN_CENTROIDS, [0.5, 0.5])
    moved = transform_centroids(abst, Network((shear,)))
    np.testing.assert_allclose(moved.centroids, SHEARED_CENTROIDS, rtol=0, atol=1e-14)
    assert moved.masses.tolist() == [0.5, 0.5]


def test_transform_centroids_identity():
    abst = CentroidAbstraction(GIVEN_CENTROIDS, [0.5, 0.5])
    moved = transform_centroids(abst, Network((AffineLayer.identity(2),)))
    np.testing.assert_array_equal(moved.centroids, abst.centroids)


def test_transform_centroids_relu(shear):
    abst = CentroidAbstraction(GIVEN_CENTROIDS, [0.5, 0.5])
    net = Network((shear, ActivationLayer("relu", 2)))
    moved = transform_centroids(abst, net)
    for mu, out in zip(GIVEN_CENTROIDS, moved.centroids):
        np.testing.assert_array_equal(out, forward_eval(net, mu))
    np.testing.assert_allclose(moved.centroids, np.maximum(SHEARED_CENTROIDS, 0), atol=1e-15)


def test_transform_centroids_dimension_error():
    with pytest.raises(DimensionError):
        transform_centroids(CentroidAbstraction([[0.0]], [1.0]),
                            Network((AffineLayer.identity(2),)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_centroid_naturality_and_mass(seed):
    rng = np.random.default_rng(seed)
    abst = CentroidAbstraction(rng.normal(size=(4, 3)), rng.uniform(size=4))
    n1 = Network((AffineLayer(rng.normal(size=(3, 3)), rng.normal(size=3)),
                  ActivationLayer("tanh", 3)))
    n2 = Network((AffineLayer(rng.normal(size=(2, 3)), rng.normal(size=2)),))
    joined = transform_centroids(abst, Network(n1.layers + n2.layers))
    staged = transform_centroids(transform_centroids(abst, n1), n2)
    np.testing.assert_allclose(joined.centroids, staged.centroids, rtol=0, atol=1e-12)
    assert staged.masses.sum() == abst.masses.sum()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), weighted=st.booleans())
def test_centroids_commute_with_affine_means(seed, weighted):
    rng = np.random.default_rng(seed)
    data = WeightedPointSet(rng.normal(size=(200, 2)), rng.uniform(0.1, 1, 200))
    abst = kmeans_fit(data, EmConfig(k=3, seed=seed, weighted=weighted))
    layer = AffineLayer(rng.normal(size=(2, 2)), rng.normal(size=2))
    moved = transform_centroids(abst, Network((layer,)))
    mapped = layer.apply(data.points)
    for j in range(abst.k):
        member = abst.assignments == j
        w = data.weights[member] if weighted else np.ones(member.sum())
        np.testing.assert_allclose(moved.centroids[j], w @ mapped[member] / w.sum(),
                                   rtol=0, atol=1e-9)


# --- GMM -----------------------------------------------------------------------

def synthetic_two_gaussians(n=1000, seed=21):
    rng = np.random.default_rng(seed)
    a = rng.normal([0.0, 0.0], 1.0, size=(n // 2, 2))
    b = rng.normal([8.0, -6.0], 1.0, size=(n // 2, 2))
    return a, b, WeightedPointSet(np.vstack([a, b]), np.full(n, 1.0 / n))


def test_gmm_two_components():
    a, b, data = synthetic_two_gaussians()
    g = gmm_fit(data, EmConfig(k=2, seed=0))
    order = np.argsort(g.means[:, 0])
    bound = 3 / math.sqrt(500)
    assert np.abs(g.means[order[0]] - a.mean(axis=0)).max() < bound
    assert np.abs(g.means[order[1]] - b.mean(axis=0)).max() < bound
    assert np.abs(g.means[order[0]] - [0, 0]).max() < bound
    assert np.abs(g.means[order[1]] - [8, -6]).max() < bound
    assert np.all(np.abs(g.weights - 0.5) < 0.05)
    assert np.all(np.diff(g.loglik_history) >= -1e-9)
    assert np.abs(g.responsibilities.sum(axis=1) - 1).max() < 1e-12


def test_gmm_single_component():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(300, 2)) @ [[1.0, 0.3], [0.0, 0.5]]
    g = gmm_fit(WeightedPointSet(pts, np.full(300, 1 / 300)), EmConfig(k=1))
    np.testing.assert_allclose(g.means[0], pts.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(g.covariances[0], np.cov(pts.T, bias=True) + 1e-6 * np.eye(2),
                               atol=1e-12)
    assert g.weights.tolist() == [1.0]
    assert g.masses[0] == pytest.approx(1.0)


def test_gmm_masses_use_point_weights():
    _, _, data = synthetic_two_gaussians(400)
    w = np.r_[np.full(200, 0.3 / 200), np.full(200, 0.7 / 200)]
    g = gmm_fit(WeightedPointSet(data.points, w), EmConfig(k=2, seed=1))
    np.testing.assert_allclose(np.sort(g.masses), [0.3, 0.7], atol=1e-6)
    np.testing.assert_allclose(g.masses, w @ g.responsibilities, atol=1e-15)


def test_gmm_errors():
    with pytest.raises(TooFewPointsError):
        gmm_fit(WeightedPointSet([[0.0]], [1.0]), EmConfig(k=2))
    with pytest.raises(DegenerateDataError):
        gmm_fit(WeightedPointSet([[1.0, 1.0]] * 5, [0.2] * 5), EmConfig(k=2))


def test_gmm_given_init(zonotope):
    data = sample_zonotope(zonotope, 3000, seed=2)
    cov = np.diag([1 / 81, 1 / 81])
    g = gmm_fit(data, EmConfig(k=2, max_iters=0, init="given", init_means=GIVEN_CENTROIDS,
                               init_covariances=[cov, cov], init_weights=[0.5, 0.5]))
    np.testing.assert_array_equal(g.means, GIVEN_CENTROIDS)
    assert g.total_mass == pytest.approx(1.0)
    np.testing.assert_allclose(g.masses, [0.5, 0.5], atol=0.03)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 3))
def test_em_monotone_property(seed, k):
    rng = np.random.default_rng(seed)
    pts = np.vstack([rng.normal(c, 1.0, size=(60, 2)) for c in ([0, 0], [4, 0], [0, 4])])
    g = gmm_fit(WeightedPointSet(pts, np.full(180, 1 / 180)), EmConfig(k=k, seed=seed))
    assert np.all(np.diff(g.loglik_history) >= -1e-9)
    assert np.abs(g.responsibilities.sum(axis=1) - 1).max() < 1e-12


def test_transform_gmm_shear(shear):
    moved = transform_gmm(given_gmm(), shear)
    np.testing.assert_allclose(moved.means, SHEARED_CENTROIDS, rtol=0, atol=1e-14)
    expected = np.array([[5 / 81, -1 / 81], [-1 / 81, 1 / 81]])
    for cov in moved.covariances:
        np.testing.assert_allclose(cov, expected, rtol=0, atol=1e-14)
    assert moved.weights.tolist() == [0.5, 0.5]
    assert moved.masses.tolist() == [0.5, 0.5]


def test_transform_gmm_identity():
    g = given_gmm()
    moved = transform_gmm(g, AffineLayer.identity(2))
    np.testing.assert_array_equal(moved.means, g.means)
    np.testing.assert_array_equal(moved.covariances, g.covariances)


def test_transform_gmm_rejects_activation():
    with pytest.raises(UnsupportedLayerError):
        transform_gmm(given_gmm(), ActivationLayer("relu", 2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), out=st.integers(1, 4))
def test_transform_gmm_properties(seed, out):
    rng = np.random.default_rng(seed)
    covs = []
    for _ in range(3):
        m = rng.normal(size=(3, 3))
        covs.append(m @ m.T)
    w = rng.uniform(0.1, 1, 3)
    g = GmmAbstraction(w / w.sum(), rng.normal(size=(3, 3)), covs, rng.uniform(size=3))
    A = rng.normal(size=(out, 3))
    moved = transform_gmm(g, AffineLayer(A, rng.normal(size=out)))
    for c_in, c_out in zip(g.covariances, moved.covariances):
        assert np.abs(c_out - c_out.T).max() <= 1e-12
        assert np.linalg.eigvalsh(c_out).min() >= -1e-10 * max(1.0, np.abs(c_out).max())
        np.testing.assert_allclose(c_out, A @ c_in @ A.T, rtol=1e-12, atol=1e-12)
    assert moved.masses.sum() == g.masses.sum()


# --- region queries -----------------------------------------------------------

def test_region_mass_centroids():
    abst = CentroidAbstraction(SHEARED_CENTROIDS, [0.5, 0.5])
    assert region_mass_abstract(abst, Region([0.0, 0.0], [1.0, 3.0])) == 0.5
    everything = Region([-np.inf, -np.inf], [np.inf, np.inf])
    assert region_mass_abstract(abst, everything) == 1.0


def test_region_mass_gmm_diagonal():
    g = GmmAbstraction([1.0], [[0.0, 0.0]], [np.diag([1.0, 4.0])], [0.8])
    got = region_mass_abstract(g, Region([-1.0, -2.0], [1.0, 2.0]))
    assert got == pytest.approx(0.8 * math.erf(1 / math.sqrt(2)) ** 2, abs=1e-14)
    mc = reference.box_mass_monte_carlo([0, 0], np.diag([1.0, 4.0]), [-1, -2], [1, 2])
    assert abs(got - 0.8 * mc) < 1e-3


def test_region_mass_gmm_full_covariance(shear):
    moved = transform_gmm(given_gmm(), shear)
    region = Region([-0.5, 1.4], [0.0, 1.9])
    got = region_mass_abstract(moved, region)
    mc = sum(0.5 * reference.box_mass_monte_carlo(mu, cov, region.lower, region.upper, seed=i)
             for i, (mu, cov) in enumerate(zip(moved.means, moved.covariances)))
    assert abs(got - mc) < 1e-3


def test_region_mass_gmm_3d_against_monte_carlo():
    rng = np.random.default_rng(4)
    m = rng.normal(size=(3, 3))
    cov = m @ m.T + 0.5 * np.eye(3)
    g = GmmAbstraction([1.0], [[0.2, -0.1, 0.3]], [cov], [1.0])
    region = Region([-1.0, -0.5, -1.5], [1.0, 1.5, 0.5])
    got = region_mass_abstract(g, region)
    mc = reference.box_mass_monte_carlo(g.means[0], cov, region.lower, region.upper)
    assert abs(got - mc) < 1e-3
    whole = Region([-np.inf] * 3, [np.inf] * 3)
    assert region_mass_abstract(g, whole) == pytest.approx(1.0, abs=1e-9)


def test_region_mass_dimension_error():
    with pytest.raises(DimensionError):
        region_mass_abstract(given_gmm(), Region([0.0], [1.0]))


def test_gmm_validation():
    with pytest.raises(ValidationError):
        GmmAbstraction([0.6, 0.6], [[0.0], [1.0]], [[[1.0]], [[1.0]]], [0.5, 0.5])
    with pytest.raises(ValidationError):
        GmmAbstraction([1.0], [[0.0, 0.0]], [[[1.0, 0.5], [0.0, 1.0]]], [1.0])
    with pytest.raises(ValidationError):
        GmmAbstraction([1.0], [[0.0]], [[[-1.0]]], [1.0])
