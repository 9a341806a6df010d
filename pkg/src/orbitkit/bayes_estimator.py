"""Linear priors and the second-order Bayes estimator on group orbits.

A linear prior on an orbit ``O`` inside a euclidean space is the density
``lambda_v(phi) = alpha * <v, phi> + beta`` with respect to the invariant
probability measure on ``O``. For small noise ``epsilon`` the Bayes
estimator moves the projection ``theta_hat = pi(x)`` along the orbit in the
direction of the gradient of ``log lambda_v``::

    estimate = exp(s * xi) . theta_hat,   s = alpha * epsilon**2 / lambda_v(theta_hat)

where ``xi . theta_hat`` is the tangential part of ``v``. On S^2 this is the
geodesic step ``s * (v - <v, theta_hat> theta_hat)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import matdecomp as md
from .errors import DomainError, NonPositiveDensity, OutsideTube, PriorInvalid, ShapeMismatch
from .orbits import OrbitKind, OrbitPoint, OrbitSpec, project
from .sphere_geom import quad_s2, s2_exp

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class LinearPrior:
    """``lambda_v = alpha * <v, phi> + beta``."""

    v: np.ndarray
    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        if not (np.all(np.isfinite(v)) and np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise PriorInvalid("prior parameters must be finite")
        if self.alpha < 0:
            raise PriorInvalid("alpha must be nonnegative")

    @classmethod
    def flat(cls, v) -> "LinearPrior":
        return cls(v, 0.0, 1.0)


@dataclass(frozen=True)
class EstimatorResult:
    estimate: OrbitPoint
    base_point: OrbitPoint
    geodesic_step: np.ndarray
    epsilon: float
    step_size: float

    @property
    def step_length(self) -> float:
        return float(np.linalg.norm(self.geodesic_step))


@dataclass(frozen=True)
class RiskExpansion:
    """``R(epsilon) = order2_coeff * eps^2 + order4_coeff * eps^4 + O(eps^6)``."""

    order2_coeff: float
    order4_coeff: float

    def __call__(self, epsilon: float) -> float:
        e2 = epsilon * epsilon
        return self.order2_coeff * e2 + self.order4_coeff * e2 * e2


# -- prior checks ----------------------------------------------------------


def _spec_for(phi) -> OrbitSpec:
    phi = np.asarray(phi)
    if phi.ndim == 1:
        return OrbitSpec.sphere(phi.size)
    if phi.ndim == 2 and phi.shape[0] == phi.shape[1]:
        return OrbitSpec.special_orthogonal(phi.shape[0])
    raise ShapeMismatch(f"cannot infer an orbit from shape {phi.shape}")


def prior_extremes(prior: LinearPrior, spec: OrbitSpec) -> tuple[float, float]:
    """Mean and minimum of ``f_v = <v, .>`` over the orbit (Sphere or SO(n))."""
    v = prior.v
    if spec.kind is OrbitKind.SPHERE:
        if v.shape != (spec.n,):
            raise ShapeMismatch("prior vector does not match the sphere dimension")
        mean = 0.0 if spec.n > 1 else float(v[0]) * 0.0
        return mean, -float(np.linalg.norm(v))
    if spec.kind is OrbitKind.GROUP:
        n = spec.n
        if v.shape != (n, n):
            raise ShapeMismatch("prior matrix does not match the group dimension")
        if n == 1:
            return float(v[0, 0]), float(v[0, 0])
        # max over SO(n) of tr(a' r) is the sign-corrected nuclear norm of a
        s = np.linalg.svd(-v, compute_uv=False)
        d = 1.0 if np.linalg.det(-v) >= 0 else -1.0
        return 0.0, -float(s[:-1].sum() + d * s[-1])
    raise DomainError(f"linear priors are only supported on spheres and SO(n), not {spec.label}")


def validate_prior(prior: LinearPrior, spec: OrbitSpec) -> float:
    """Check normalization and positivity; returns the density floor ``c > 0``."""
    mean, low = prior_extremes(prior, spec)
    if abs(prior.alpha * mean + prior.beta - 1.0) > NORMALIZATION_TOL:
        raise PriorInvalid(
            f"prior does not integrate to 1 (alpha*mean + beta = {prior.alpha * mean + prior.beta:.17g})"
        )
    floor = prior.alpha * low + prior.beta
    if not floor > 0:
        raise NonPositiveDensity(f"prior density reaches {floor:.3e} <= 0 on the orbit")
    return floor


def prior_density(prior: LinearPrior, phi, spec: OrbitSpec | None = None) -> float:
    phi = phi.value if isinstance(phi, OrbitPoint) else np.asarray(phi, dtype=float)
    spec = spec or _spec_for(phi)
    validate_prior(prior, spec)
    return prior.alpha * float(np.sum(prior.v * phi)) + prior.beta


# -- estimators ------------------------------------------------------------


def _check_eps(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise DomainError("epsilon must be positive")
    return epsilon


def bayes_estimate_s2(x, prior: LinearPrior, epsilon: float) -> EstimatorResult:
    """Second-order Bayes estimate on the unit sphere S^2 from the observation ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (3,):
        raise ShapeMismatch("x must be a 3-vector")
    epsilon = _check_eps(epsilon)
    spec = OrbitSpec.sphere(3)
    validate_prior(prior, spec)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise OutsideTube("x = 0 has no nearest point on the sphere")
    theta = x / r
    lam = prior.alpha * float(prior.v @ theta) + prior.beta
    vbar = prior.v - float(prior.v @ theta) * theta
    s = prior.alpha * epsilon**2 / lam
    step = s * vbar
    est = s2_exp(theta, step) if prior.alpha > 0 else theta.copy()
    return EstimatorResult(OrbitPoint(spec, est), OrbitPoint(spec, theta), step, epsilon, s)


def bayes_estimate_orbit(spec: OrbitSpec, x, prior: LinearPrior, epsilon: float) -> EstimatorResult:
    """Second-order Bayes estimate on ``Sphere(n)`` or ``SO(n)``.

    ``geodesic_step`` is the Lie-algebra element ``s * xi`` (an ``n x n``
    skew matrix); the estimate is ``expm(s * xi) @ theta_hat``.
    """
    if spec.kind not in (OrbitKind.SPHERE, OrbitKind.GROUP):
        raise DomainError(f"bayes_estimate_orbit does not support {spec.label}")
    epsilon = _check_eps(epsilon)
    validate_prior(prior, spec)
    base = project(spec, x)
    theta = base.value
    v = prior.v
    lam = prior.alpha * float(np.sum(v * theta)) + prior.beta
    s = prior.alpha * epsilon**2 / lam
    if spec.kind is OrbitKind.SPHERE:
        vbar = v - float(v @ theta) * theta
        xi = np.outer(vbar, theta) - np.outer(theta, vbar)
    else:
        m = v @ theta.T
        xi = 0.5 * (m - m.T)
    step = s * xi
    if spec.kind is OrbitKind.GROUP and spec.n == 3:
        rot = md.so3_exp(md.vee(step))
    else:
        rot = scipy.linalg.expm(step)
    est = rot @ theta
    if spec.kind is OrbitKind.SPHERE:
        est = est / np.linalg.norm(est)
    return EstimatorResult(OrbitPoint(spec, est), base, step, epsilon, s)


# -- risk ------------------------------------------------------------------


def _series(alpha: float) -> float:
    a2 = alpha * alpha
    term = alpha
    total = 0.0
    m = 1
    while True:
        c = 2.0 * term / ((2 * m - 1) * (2 * m + 1))
        total += c
        if c < 1e-18 * max(total, 1e-300):
            return total
        term *= a2
        m += 1


def vtilde_dot_tau(alpha: float) -> float:
    """``(alpha^-2 - 1) * log sqrt((1 - alpha)/(1 + alpha)) + 1/alpha`` on ``[0, 1)``.

    Extended by continuity to 0 at ``alpha = 0``; uses the power series
    ``sum_m 2 alpha^(2m-1) / ((2m-1)(2m+1))`` below 0.2 to avoid cancellation.
    """
    alpha = float(alpha)
    if not (0.0 <= alpha < 1.0):
        raise DomainError("alpha must lie in [0, 1)")
    if alpha == 0.0:
        return 0.0
    if alpha < 0.2:
        return _series(alpha)
    return 1.0 / alpha - (1.0 / (alpha * alpha) - 1.0) * float(np.arctanh(alpha))


def vtilde_dot_tau_quadrature(alpha: float, order: int = 32) -> float:
    """Sphere-integral form ``2 * mean_{S^2} log(1 + alpha z) z`` of :func:`vtilde_dot_tau`."""
    rule = quad_s2(order)
    z = rule.nodes[:, 2]
    return 2.0 * float(rule.weights @ (np.log1p(alpha * z) * z))


def bayes_risk_s2(prior: LinearPrior, epsilon: float | None = None) -> RiskExpansion:
    """Risk coefficients ``(2, 2/3 + vtilde_dot_tau(alpha))`` on S^2 for a unit ``v``."""
    validate_prior(prior, OrbitSpec.sphere(3))
    if abs(np.linalg.norm(prior.v) - 1.0) > 1e-12:
        raise PriorInvalid("the S^2 risk expansion assumes a unit prior vector")
    if epsilon is not None:
        _check_eps(epsilon)
    return RiskExpansion(2.0, 2.0 / 3.0 + vtilde_dot_tau(prior.alpha))
