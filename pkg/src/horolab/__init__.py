"""horolab: horocycle curvature, weighted Gromov products and boundary
cocycles on two negatively curved surfaces."""

import os as _os

# must precede the first numba import
_threads = _os.environ.get("HOROLAB_THREADS")
if _threads and _threads.isdigit() and int(_threads) > 0:
    _os.environ.setdefault("NUMBA_NUM_THREADS", _threads)
_os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .errors import (  # noqa: E402
    ConvergenceError, DomainError, HorolabError, InvalidIsometryError, PreconditionError,
    TruncationError,
)
from .models import (  # noqa: E402
    ORIGIN, ConstantCurvature, IsometryElement, ManifoldModel, PerturbedAxial, Point,
    TangentVector, UnitTangent, curvature_at, distance, geodesic_evolve, isometry_apply,
    isometry_classify,
)
from .flow import (  # noqa: E402
    HolderExponentEstimator, MeanCurvatureField, RiccatiResult, f_symmetric, holder_exponent,
    jacobi_solve, riccati_mean_curvature, symmetry_defect,
)
from .boundary import (  # noqa: E402
    BoundaryGeodesic, BoundaryPoint, QuasiMetric, QuasimetricConstantEstimator,
    boundary_derivative, boundary_map, busemann_cocycle, connect_boundary_points,
    cross_ratio_add, cross_ratio_mult, frink_metrize, gromov_product, q_value, quasimetric,
    quasimetric_constant,
)
from .measure import (  # noqa: E402
    AhlforsEstimator, NuMeasure, ahlfors_fit, ball_mass, lambda_density, nu_density,
    nu_sample, rn_lambda, rn_nu,
)
from .besov import (  # noqa: E402
    BesovEstimate, CocycleGrowthEstimator, CocycleSeries, besov_seminorm, cocycle_lp_norm,
    cocycle_value, growth_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DomainError",
    "HorolabError",
    "InvalidIsometryError",
    "PreconditionError",
    "TruncationError",
    "ORIGIN",
    "ConstantCurvature",
    "IsometryElement",
    "ManifoldModel",
    "PerturbedAxial",
    "Point",
    "TangentVector",
    "UnitTangent",
    "curvature_at",
    "distance",
    "geodesic_evolve",
    "isometry_apply",
    "isometry_classify",
    "HolderExponentEstimator",
    "MeanCurvatureField",
    "RiccatiResult",
    "f_symmetric",
    "holder_exponent",
    "jacobi_solve",
    "riccati_mean_curvature",
    "symmetry_defect",
    "BoundaryGeodesic",
    "BoundaryPoint",
    "QuasiMetric",
    "QuasimetricConstantEstimator",
    "boundary_derivative",
    "boundary_map",
    "busemann_cocycle",
    "connect_boundary_points",
    "cross_ratio_add",
    "cross_ratio_mult",
    "frink_metrize",
    "gromov_product",
    "q_value",
    "quasimetric",
    "quasimetric_constant",
    "AhlforsEstimator",
    "NuMeasure",
    "ahlfors_fit",
    "ball_mass",
    "lambda_density",
    "nu_density",
    "nu_sample",
    "rn_lambda",
    "rn_nu",
    "BesovEstimate",
    "CocycleGrowthEstimator",
    "CocycleSeries",
    "besov_seminorm",
    "cocycle_lp_norm",
    "cocycle_value",
    "growth_experiment",
    "set_threads",
]


def set_threads(n):
    """Cap the number of worker threads used by the compiled kernels."""
    import numba
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
