import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pai.clusters import CentroidAbstraction, EmConfig, kmeans_fit, transform_centroids
from pai.core import AffineLayer, ActivationLayer, Network, Region, WeightedPointSet, sample_zonotope
from pai.distribution import fit_polynomial
from pai.errors import DimensionError
from pai.oracle import compare_region_masses, mc_pushforward, quantile_regions


def test_identity_pushforward_returns_input(example_points):
    push = mc_pushforward(Network((AffineLayer.identity(1),)), example_points)
    np.testing.assert_array_equal(push.output_points.points, example_points.points)
    np.testing.assert_array_equal(push.output_points.weights, example_points.weights)


def test_scalar_pushforward():
    d = WeightedPointSet([[0.0], [1.0]], [0.5, 0.5])
    push = mc_pushforward(Network((AffineLayer.scalar(2.0, 1.0),)), d)
    assert push.output_points.points.ravel().tolist() == [1.0, 3.0]
    assert push.output_points.weights.tolist() == [0.5, 0.5]


def test_shear_pushforward_bounds(zonotope, shear):
    d = sample_zonotope(zonotope, 20_000, seed=0)
    out = mc_pushforward(Network((shear,)), d).output_points.points
    assert np.all((out[:, 0] >= -2) & (out[:, 0] <= 2))
    assert np.all((out[:, 1] >= 1) & (out[:, 1] <= 3))


def test_recorded_layers(shear):
    d = WeightedPointSet([[1.0, -1.0]], [1.0])
    net = Network((shear, ActivationLayer("relu", 2)))
    push = mc_pushforward(net, d, record_layers=True)
    assert push.stage(0) is d
    assert push.stage(1).points.tolist() == [[3.0, -1.0]]
    assert push.stage(2).points.tolist() == [[3.0, 0.0]]
    with pytest.raises(ValueError):
        mc_pushforward(net, d).stage(1)


def test_pushforward_dimension_error(shear):
    with pytest.raises(DimensionError):
        mc_pushforward(Network((shear,)), WeightedPointSet([[1.0]], [1.0]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5), m=st.integers(1, 5))
def test_pushforward_preserves_weight_and_commutes_with_mean(seed, n, m):
    rng = np.random.default_rng(seed)
    d = WeightedPointSet(rng.normal(size=(300, n)), rng.uniform(0.1, 1.0, 300))
    layer = AffineLayer(rng.normal(size=(m, n)), rng.normal(size=m))
    out = mc_pushforward(Network((layer,)), d).output_points
    assert out.total_mass == d.total_mass
    np.testing.assert_allclose(out.mean(), layer.apply(d.mean()), rtol=0, atol=1e-10)


def test_quantile_regions_cover_points(zonotope):
    d = sample_zonotope(zonotope, 5000, seed=4)
    regions = quantile_regions(d, bins=8)
    assert len(regions) == 64
    covered = np.zeros(len(d), dtype=bool)
    for r in regions:
        covered |= r.contains(d.points)
    assert covered.all()


def test_quantile_regions_slabs_in_high_dim():
    d = WeightedPointSet(np.random.default_rng(0).normal(size=(100, 3)), np.full(100, 0.01))
    regions = quantile_regions(d, bins=4)
    assert len(regions) == 12
    assert all(np.isinf(r.lower).sum() == 2 for r in regions)


def test_compare_exact_when_each_point_is_a_cluster():
    d = WeightedPointSet([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0], [2.0, 2.0]], [0.1, 0.2, 0.3, 0.4])
    abst = kmeans_fit(d, EmConfig(k=4, seed=0))
    report = compare_region_masses(d, abst, quantile_regions(d, bins=2))
    assert report.max_error == 0.0


def test_compare_two_blobs(two_blobs, shear):
    net = Network((shear,))
    abst = transform_centroids(kmeans_fit(two_blobs, EmConfig(k=2, seed=0)), net)
    push = mc_pushforward(net, two_blobs)
    regions = [Region([-1.0, -1.0], [1.0, 1.0]), Region([4.0, 4.0], [6.0, 6.0]),
               Region([-10.0, -10.0], [10.0, 10.0])]
    report = compare_region_masses(push, abst, regions)
    assert np.all(report.errors < 0.01)


def test_compare_normalized_constant_density():
    # a degree-0 fit spreads mass evenly; each half of the range gets 1/2
    rng = np.random.default_rng(3)
    x = rng.uniform(0.0, 4.0, 40)
    d = WeightedPointSet(x[:, None], rng.uniform(0.5, 1.5, 40))
    poly = fit_polynomial(d, 0)
    left, right = Region([0.0], [2.0]), Region([np.nextafter(2.0, 3.0)], [4.0])
    report = compare_region_masses(d, poly, [left, right], normalize=True)
    p_left = d.weights[x <= 2.0].sum() / d.total_mass
    assert report.entries[0].abstract == pytest.approx(0.5, abs=1e-9)
    assert report.entries[0].abs_error == pytest.approx(abs(p_left - 0.5), abs=1e-9)


def test_compare_normalized_clusters_scale_by_total_mass():
    d = WeightedPointSet([[0.0], [10.0]], [2.0, 6.0])
    abst = CentroidAbstraction([[0.0], [10.0]], [2.0, 6.0])
    report = compare_region_masses(d, abst, [Region([-1.0], [1.0])], normalize=True)
    assert report.entries[0].empirical == 0.25
    assert report.entries[0].abstract == 0.25


def test_compare_dimension_error(example_points):
    abst = CentroidAbstraction([[0.0, 0.0]], [1.0])
    with pytest.raises(DimensionError):
        compare_region_masses(example_points, abst, [])


def test_report_json():
    d = WeightedPointSet([[0.0]], [1.0])
    abst = CentroidAbstraction([[0.5]], [1.0])
    report = compare_region_masses(d, abst, [Region([-1.0], [0.25])])
    js = report.to_json()
    assert js["max_error"] == 1.0
    assert js["regions"][0] == {"region": {"lower": [-1.0], "upper": [0.25]},
                                "empirical": 1.0, "abstract": 0.0, "abs_error": 1.0}
