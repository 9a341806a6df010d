"""Projections onto matrix-group orbits, linear-prior Bayes estimators and
rotation regression between spheres."""

from .bayes_estimator import (
    EstimatorResult,
    LinearPrior,
    RiskExpansion,
    bayes_estimate_orbit,
    bayes_estimate_s2,
    bayes_risk_s2,
    prior_density,
    vtilde_dot_tau,
)
from .bayes_regression import (
    PosteriorModel,
    TauForm,
    bayes_estimator_condition,
    posterior_mean,
    verify_posterior_integral,
    weighted_tau,
)
from .errors import ComputationError, DomainError, OrbitkitError
from .matdecomp import (
    polar,
    project_special_orthogonal,
    skew_canonical,
    so3_exp,
    so3_log,
    sym_sqrt,
    takagi,
)
from .orbits import OrbitPoint, OrbitSpec, equivariance_check, in_tube, low_rank_project, project
from .regression import (
    RegressionDataset,
    RegressionFit,
    fit_extrinsic_so3,
    fit_intrinsic_so3,
    lsq_linear,
    sum_sq_extrinsic,
    sum_sq_intrinsic,
)
from .simlab import SimulationConfig, SimulationReport, ks_test_normal, run_simulation
from .sphere_geom import (
    EulerAngles,
    QuadratureRule,
    euler_from_rotation,
    quad_s2,
    quad_so3,
    rotation_from_euler,
    s2_dist,
    s2_exp,
    s2_log,
)

__version__ = "0.1.0"
