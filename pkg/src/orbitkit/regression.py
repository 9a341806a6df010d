"""Regression of a rotation from paired points on S^2.

Given design points ``theta_l`` and observations ``y_l`` on the unit sphere,
find ``gamma`` in SO(3) minimizing either the chordal loss
``mean |gamma theta_l - y_l|^2`` (solved in closed form by the nearest
rotation to ``nu = sum y_l theta_l'``) or the intrinsic loss
``mean dist(gamma theta_l, y_l)^2``.

The intrinsic minimizer satisfies ``gamma = proj_SO3(nu(gamma))`` with the
reweighted ``nu(gamma) = mean (alpha_l / sin alpha_l) y_l theta_l'`` and
``alpha_l`` the angle between ``gamma theta_l`` and ``y_l``. Iterating that
map is available (``solver="fixed_point"``) but is slow for large noise, so
the default is a Riemannian Newton method on SO(3) with a gradient fallback
and Armijo backtracking; both stop on the same first-order residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matdecomp as md
from .errors import AntipodalData, DegenerateProjection, NoConvergence, ShapeMismatch
from .sphere_geom import theta_over_sin

FOC_TOL = 1e-10
MAX_ITER = 200
ANTIPODE_GUARD = 1e-6
UNIT_TOL = 1e-8


@dataclass(frozen=True)
class RegressionDataset:
    """Paired unit vectors; ``design[l]`` is mapped to ``observations[l]``."""

    design: np.ndarray
    observations: np.ndarray

    def __post_init__(self):
        th = np.array(self.design, dtype=float)
        y = np.array(self.observations, dtype=float)
        if th.ndim != 2 or th.shape[1] != 3 or th.shape != y.shape:
            raise ShapeMismatch("design and observations must both be (k, 3) arrays")
        if th.shape[0] < 3:
            raise DegenerateProjection("need at least 3 design points")
        for name, arr in (("design", th), ("observations", y)):
            if not np.all(np.isfinite(arr)):
                raise ShapeMismatch(f"{name} must be finite")
            if np.max(np.abs(np.linalg.norm(arr, axis=1) - 1.0)) > UNIT_TOL:
                raise ShapeMismatch(f"{name} points must have unit norm")
        th.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "design", th)
        object.__setattr__(self, "observations", y)

    @property
    def k(self) -> int:
        return self.design.shape[0]

    @classmethod
    def from_pairs(cls, pairs) -> "RegressionDataset":
        """From a ``(k, 6)`` array of rows ``(theta_x, theta_y, theta_z, y_x, y_y, y_z)``."""
        pairs = np.asarray(pairs, dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 6:
            raise ShapeMismatch("pairs must have 6 columns")
        return cls(pairs[:, :3], pairs[:, 3:])

    def transformed(self, g, h) -> "RegressionDataset":
        """The dataset ``(g theta_l, h y_l)``."""
        return RegressionDataset(self.design @ np.asarray(g).T, self.observations @ np.asarray(h).T)


@dataclass(frozen=True)
class RegressionFit:
    gamma: np.ndarray
    method: str
    iterations: int
    residual_norm: float
    converged: bool
    antipodal_pairs: tuple = field(default=())

    def diagnostics(self) -> dict:
        return {
            "method": self.method,
            "iterations": int(self.iterations),
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
        }


# -- losses ----------------------------------------------------------------


def _angles(data: RegressionDataset, gamma) -> tuple[np.ndarray, ...]:
    p = data.design @ np.asarray(gamma).T
    y = data.observations
    c = np.einsum("ij,ij->i", p, y)
    cr = np.cross(p, y)
    s = np.linalg.norm(cr, axis=1)
    return p, c, cr, s, np.arctan2(s, c)


def sum_sq_intrinsic(data: RegressionDataset, gamma) -> float:
    """``mean_l dist(gamma theta_l, y_l)^2`` with the great-circle distance."""
    a = _angles(data, gamma)[4]
    return float(np.mean(a * a))


def sum_sq_extrinsic(data: RegressionDataset, gamma) -> float:
    """``mean_l |gamma theta_l - y_l|^2``."""
    d = data.design @ np.asarray(gamma).T - data.observations
    return float(np.mean(np.einsum("ij,ij->i", d, d)))


# -- first-order conditions ------------------------------------------------


def so3_tangent_basis(gamma) -> np.ndarray:
    """Orthonormal basis ``hat(e_i) gamma / sqrt(2)`` of the tangent space at ``gamma``."""
    gamma = np.asarray(gamma, dtype=float)
    return np.stack([md.hat(e) @ gamma for e in np.eye(3)]) / np.sqrt(2.0)


def lsq_linear(design, observations, tangent_basis, gamma) -> np.ndarray:
    """Components ``<nu - gamma tau, B_i>`` of the normal-equation discrepancy.

    ``nu = sum y_l theta_l'`` and ``tau = sum theta_l theta_l'``. Each entry is
    ``-k/2`` times the directional derivative of :func:`sum_sq_extrinsic`
    along ``B_i``; all vanish exactly when ``gamma`` satisfies the first-order
    condition on the manifold spanned locally by the basis.
    """
    th = np.asarray(design, dtype=float)
    y = np.asarray(observations, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    nu = y.T @ th
    tau = th.T @ th
    d = nu - gamma @ tau
    basis = np.asarray(tangent_basis, dtype=float)
    basis = basis.reshape((-1,) + gamma.shape)
    return np.einsum("ij,bij->b", d, basis)


def full_hom_basis(shape) -> np.ndarray:
    """Standard basis of all matrices of the given shape (trivial normal space)."""
    size = int(np.prod(shape))
    return np.eye(size).reshape((size,) + tuple(shape))


def weighted_nu(data: RegressionDataset, gamma) -> tuple[np.ndarray, np.ndarray]:
    """``(nu(gamma), alpha)`` with ``nu = mean (alpha/sin alpha) y theta'``."""
    _, _, _, _, a = _angles(data, gamma)
    w = theta_over_sin(np.minimum(a, np.pi - 1e-300))
    nu = (w[:, None] * data.observations).T @ data.design / data.k
    return nu, a


def foc_residual(gamma, nu) -> float:
    """``||skew(gamma' nu)||_F``; zero iff ``gamma' nu`` is symmetric."""
    m = np.asarray(gamma).T @ np.asarray(nu)
    return float(np.linalg.norm(0.5 * (m - m.T)))


def _check_tau(data: RegressionDataset) -> None:
    tau = data.design.T @ data.design
    w = np.linalg.eigvalsh(tau)
    if w[0] <= 1e-12 * w[-1]:
        raise DegenerateProjection("design points do not span E^3 (sum theta theta' is singular)")


# -- fits ------------------------------------------------------------------


def fit_extrinsic_so3(data: RegressionDataset) -> RegressionFit:
    """Least-squares rotation: the nearest rotation to ``nu = sum y theta'``."""
    _check_tau(data)
    nu = data.observations.T @ data.design / data.k
    gamma = md.project_special_orthogonal(nu)
    return RegressionFit(gamma, "extrinsic", 0, foc_residual(gamma, nu), True)


def _grad_hess(data: RegressionDataset, gamma):
    # Gradient and Hessian of the intrinsic loss f(exp(hat(w)) gamma) at w = 0.
    p, c, cr, s, a = _angles(data, gamma)
    k = data.k
    pos = s > 0
    w = np.where(pos, a / np.where(pos, s, 1.0), 1.0)
    grad = -(2.0 / k) * (w[:, None] * cr).sum(axis=0)
    log = w[:, None] * (data.observations - c[:, None] * p)  # log_p(y)
    nlog = np.linalg.norm(log, axis=1)
    u = np.where((nlog > 1e-300)[:, None], log / np.where(nlog > 0, nlog, 1.0)[:, None], 0.0)
    act = np.where(pos & (a > 1e-8), a * c / np.where(pos, s, 1.0), 1.0)  # alpha cot alpha
    q = np.cross(u, p)
    gphi = -2.0 * log
    h = 2.0 * act.sum() * np.eye(3) - 2.0 * np.einsum("l,li,lj->ij", act, p, p)
    h += 2.0 * np.einsum("l,li,lj->ij", 1.0 - act, q, q)
    m = np.einsum("li,lj->ij", gphi, p)
    h += 0.5 * (m + m.T)
    return grad, h / k


def _newton(data, gamma, max_iter, foc_tol):
    f = sum_sq_intrinsic(data, gamma)
    for it in range(max_iter + 1):
        nu, _ = weighted_nu(data, gamma)
        res = foc_residual(gamma, nu)
        if res < foc_tol:
            return gamma, it, res, True
        if it == max_iter:
            break
        grad, h = _grad_hess(data, gamma)
        ev = np.linalg.eigvalsh(h)
        newton_ok = ev[0] > 1e-8
        step = -np.linalg.solve(h, grad) if newton_ok else -grad
        if newton_ok and np.linalg.norm(step) < 1e-5:
            # quadratic regime: the decrease in f is below rounding, skip the line search
            gamma = md.so3_exp(step) @ gamma
            f = sum_sq_intrinsic(data, gamma)
            continue
        t = 1.0
        slope = float(grad @ step)
        while True:
            cand = md.so3_exp(t * step) @ gamma
            fc = sum_sq_intrinsic(data, cand)
            if fc <= f + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        gamma, f = cand, fc
    return gamma, max_iter, res, False


def _fixed_point(data, gamma, max_iter, foc_tol):
    for it in range(max_iter + 1):
        nu, _ = weighted_nu(data, gamma)
        res = foc_residual(gamma, nu)
        if res < foc_tol:
            return gamma, it, res, True
        if it == max_iter:
            break
        gamma = md.project_special_orthogonal(nu)
    return gamma, max_iter, res, False


def fit_intrinsic_so3(
    data: RegressionDataset,
    init=None,
    *,
    solver: str = "newton",
    max_iter: int = MAX_ITER,
    foc_tol: float = FOC_TOL,
    antipode_guard: float = ANTIPODE_GUARD,
) -> RegressionFit:
    """Minimize the intrinsic loss starting from ``init`` (default: the extrinsic fit).

    Raises :class:`NoConvergence` if the residual ``||skew(gamma' nu(gamma))||_F``
    stays above ``foc_tol`` after ``max_iter`` iterations, and
    :class:`AntipodalData` if some pair sits within ``antipode_guard`` of the
    cut locus at the final iterate. Both exceptions carry the last iterate as
    ``exc.fit``.
    """
    if init is None:
        gamma = fit_extrinsic_so3(data).gamma
    else:
        _check_tau(data)
        gamma = np.asarray(init, dtype=float)
        if not md.is_rotation(gamma, 1e-8):
            raise ShapeMismatch("init must be a rotation")
    if solver == "newton":
        gamma, its, res, ok = _newton(data, gamma, max_iter, foc_tol)
    elif solver == "fixed_point":
        gamma, its, res, ok = _fixed_point(data, gamma, max_iter, foc_tol)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    a = _angles(data, gamma)[4]
    bad = tuple(int(i) for i in np.nonzero(a >= np.pi - antipode_guard)[0])
    fit = RegressionFit(gamma, "intrinsic", its, res, ok and not bad, bad)
    if bad:
        exc = AntipodalData(f"pairs {list(bad)} sit on the cut locus at the final iterate")
        exc.fit = fit
        raise exc
    if not ok:
        exc = NoConvergence(f"no convergence after {its} iterations (residual {res:.3e})")
        exc.fit = fit
        raise exc
    return fit
