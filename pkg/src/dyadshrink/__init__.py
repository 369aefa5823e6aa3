"""Multiscale piecewise-polynomial regression on the unit cube.

Noisy samples on a dyadic tensor grid are fit by local least-squares
polynomials on every dyadic level, the level differences are expanded in
discretely-orthonormal local bases, and the resulting coefficients are
hard-thresholded with a noise-level-dependent schedule before
reconstruction.
"""

from dyadshrink.grid import SampleGrid, FunctionOracle, ObservationSet, build_grid, observe
from dyadshrink.polybasis import dim_poly, orthonormal_basis, project_ls, norm_star
from dyadshrink.multiscale import (
    DyadicCube,
    PiecewisePoly,
    CoefficientVector,
    MultiscaleDecomposition,
    cubes_at_level,
    locate,
    project_level,
    decompose,
    reconstruct,
    eval_pwp,
)
from dyadshrink.shrinkage import (
    EstimatorConfig,
    ThresholdSchedule,
    epsilon,
    k_star,
    schedule,
    hard_threshold,
    threshold_level,
    estimate,
)

__version__ = "0.1.0"
