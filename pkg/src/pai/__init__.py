"""Probabilistic abstract interpretation of feedforward networks.

Input distributions are abstracted into a distribution domain (polynomial,
RBF or Fourier model of the value/probability graph) or a cluster domain
(K-means centroids or Gaussian mixture components with masses), then pushed
through the network layer by layer.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ActivationLayer,
    AffineLayer,
    Network,
    Region,
    WeightedPointSet,
    ZonotopeSource,
    affine_invert,
    forward_eval,
    region_mass_points,
    sample_zonotope,
)
from .distribution import (  # noqa: E402
    ComposedAbstraction,
    FourierAbstraction,
    PolynomialAbstraction,
    RbfAbstraction,
    RbfKernel,
    eval_distribution,
    fit_polynomial,
    fit_rbf_exhaustive,
    fourier_of_rbf,
    region_mass_density,
    solve_rbf_interpolation,
    transform_distribution,
    transform_fourier,
)
from .clusters import (  # noqa: E402
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
from .oracle import (  # noqa: E402
    ComparisonReport,
    EmpiricalPushforward,
    compare_region_masses,
    mc_pushforward,
    quantile_regions,
)
