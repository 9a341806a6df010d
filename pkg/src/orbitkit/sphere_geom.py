"""Intrinsic geometry of S^2 and SO(3).

Geodesic distance, exponential and logarithm maps on the unit sphere,
3-1-3 Euler angles, uniform / Haar sampling and product quadrature rules
for integrals against the uniform measure on S^2 and Haar measure on SO(3).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CutLocus, NotTangent, ShapeMismatch

CUTLOCUS_TOL = 1e-9
GIMBAL_TOL = 1e-9
TWO_PI = 2.0 * np.pi


def _unit3(x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ShapeMismatch(f"{name} must be a 3-vector, got shape {x.shape}")
    return x


def s2_dist(x, y) -> float:
    """Great-circle distance between two unit vectors."""
    x, y = _unit3(x), _unit3(y, "y")
    # atan2 keeps full precision near 0 and pi, where arccos loses half the digits
    return float(np.arctan2(np.linalg.norm(np.cross(x, y)), float(x @ y)))


def theta_over_sin(alpha):
    """``alpha / sin(alpha)`` with its even Taylor series below 1e-4."""
    alpha = np.asarray(alpha, dtype=float)
    small = np.abs(alpha) < 1e-4
    a2 = alpha * alpha
    safe = np.where(small, 1.0, alpha)
    out = np.where(small, 1.0 + a2 / 6.0 + 7.0 * a2 * a2 / 360.0, safe / np.sin(safe))
    return out if out.ndim else float(out)


def s2_log(x, y) -> np.ndarray:
    """Tangent vector at ``x`` pointing along the minimizing geodesic to ``y``.

    Its length is the geodesic distance. Raises :class:`CutLocus` when ``y``
    is within ``1e-9`` (in ``<x, y> + 1``) of the antipode of ``x``.
    """
    x = _unit3(x)
    y = _unit3(y, "y")
    c = float(x @ y)
    if c <= -1.0 + CUTLOCUS_TOL:
        raise CutLocus("s2_log is undefined at the antipode")
    w = y - c * x
    alpha = np.arctan2(np.linalg.norm(w), c)
    return theta_over_sin(alpha) * w


def s2_exp(x, w) -> np.ndarray:
    """Point reached from ``x`` after unit time along the geodesic with velocity ``w``."""
    x = _unit3(x)
    w = _unit3(w, "w")
    if abs(float(w @ x)) > 1e-10 * max(1.0, float(np.linalg.norm(w))):
        raise NotTangent("w is not orthogonal to x")
    t = float(np.linalg.norm(w))
    if t == 0.0:
        return x.copy()
    out = np.cos(t) * x + np.sin(t) / t * w
    return out / np.linalg.norm(out)


# -- Euler angles ----------------------------------------------------------


def rot1(s: float) -> np.ndarray:
    c, n = np.cos(s), np.sin(s)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -n], [0.0, n, c]])


def rot3(s: float) -> np.ndarray:
    c, n = np.cos(s), np.sin(s)
    return np.array([[c, -n, 0.0], [n, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class EulerAngles:
    """3-1-3 angles: ``R = rot3(a) @ rot1(b) @ rot3(c)``.

    ``a, c`` lie in ``[0, 2pi)`` and ``b`` in ``[0, pi]``. ``gimbal_lock`` is
    set when ``b`` is within 1e-9 of 0 or pi, in which case ``c = 0``.
    """

    a: float
    b: float
    c: float
    gimbal_lock: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])


def rotation_from_euler(e: EulerAngles | tuple | np.ndarray) -> np.ndarray:
    if isinstance(e, EulerAngles):
        a, b, c = e.a, e.b, e.c
    else:
        a, b, c = (float(t) for t in e)
    return rot3(a) @ rot1(b) @ rot3(c)


def _wrap(t: float) -> float:
    t = float(np.mod(t, TWO_PI))
    return 0.0 if t >= TWO_PI else t


def euler_from_rotation(r) -> EulerAngles:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ShapeMismatch("rotation must be 3x3")
    s = np.arctan2(r[1, 0] - r[0, 1], r[0, 0] + r[1, 1])
    d = np.arctan2(r[1, 0] + r[0, 1], r[0, 0] - r[1, 1])
    b = float(np.arctan2(np.hypot(r[0, 2], r[1, 2]), r[2, 2]))
    if b < GIMBAL_TOL:
        return EulerAngles(_wrap(s), b, 0.0, True)
    if b > np.pi - GIMBAL_TOL:
        return EulerAngles(_wrap(d), b, 0.0, True)
    a = 0.5 * (s + d)
    c = 0.5 * (s - d)
    # (s, d) fix a and c only modulo pi; pick the branch with sin b >= 0
    if np.sin(a) * r[0, 2] - np.cos(a) * r[1, 2] < 0:
        a += np.pi
        c += np.pi
    return EulerAngles(_wrap(a), b, _wrap(c), False)


# -- sampling --------------------------------------------------------------


def sample_uniform_s2(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform point(s) on S^2; shape ``(3,)`` or ``(size, 3)``."""
    shape = (3,) if size is None else (size, 3)
    v = rng.standard_normal(shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def quaternion_to_rotation(q) -> np.ndarray:
    """Rotation matrix (or stack) of unit quaternion(s) ``(w, x, y, z)``."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - w * z)
    out[..., 0, 2] = 2 * (x * z + w * y)
    out[..., 1, 0] = 2 * (x * y + w * z)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - w * x)
    out[..., 2, 0] = 2 * (x * z - w * y)
    out[..., 2, 1] = 2 * (y * z + w * x)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def sample_haar_so3(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-distributed rotation(s) from uniformly random unit quaternions."""
    shape = (4,) if size is None else (size, 4)
    q = rng.standard_normal(shape)
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return quaternion_to_rotation(q)


# -- quadrature ------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes with positive weights summing to one.

    ``nodes`` has shape ``(m, 3)`` for S^2 and ``(m, 3, 3)`` for SO(3).
    ``degree`` is the total polynomial degree (in ambient coordinates,
    respectively matrix entries) integrated exactly.
    """

    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, f) -> np.ndarray:
        """``sum_i w_i f(node_i)`` for a vectorized ``f`` acting on the node stack."""
        vals = np.asarray(f(self.nodes))
        return np.tensordot(self.weights, vals, axes=(0, 0))

    def __len__(self) -> int:
        return self.weights.size


def _check_order(order: int) -> int:
    order = int(order)
    if order < 2:
        raise ValueError("quadrature order must be at least 2")
    return order


@lru_cache(maxsize=16)
def _quad_s2(order: int) -> QuadratureRule:
    z, wz = np.polynomial.legendre.leggauss(order)
    m = 2 * order
    phi = TWO_PI * np.arange(m) / m
    zz, pp = np.meshgrid(z, phi, indexing="ij")
    rho = np.sqrt(1.0 - zz * zz)
    nodes = np.stack([rho * np.cos(pp), rho * np.sin(pp), zz], axis=-1).reshape(-1, 3)
    weights = np.repeat(wz / 2.0, m) / m
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights, 2 * order - 1)


def quad_s2(order: int) -> QuadratureRule:
    """Gauss-Legendre in ``cos b`` times ``2*order`` equispaced azimuths.

    Exact for polynomials of total degree ``<= 2*order - 1``.
    """
    return _quad_s2(_check_order(order))


@lru_cache(maxsize=8)
def _quad_so3(order: int) -> QuadratureRule:
    z, wz = np.polynomial.legendre.leggauss(order)
    m = 2 * order
    ang = TWO_PI * np.arange(m) / m
    aa, zz, cc = np.meshgrid(ang, z, ang, indexing="ij")
    b = np.arccos(zz)
    ca, sa = np.cos(aa), np.sin(aa)
    cb, sb = zz, np.sin(b)
    c_, s_ = np.cos(cc), np.sin(cc)
    r = np.empty(aa.shape + (3, 3))
    r[..., 0, 0] = ca * c_ - sa * cb * s_
    r[..., 0, 1] = -ca * s_ - sa * cb * c_
    r[..., 0, 2] = sa * sb
    r[..., 1, 0] = sa * c_ + ca * cb * s_
    r[..., 1, 1] = -sa * s_ + ca * cb * c_
    r[..., 1, 2] = -ca * sb
    r[..., 2, 0] = sb * s_
    r[..., 2, 1] = sb * c_
    r[..., 2, 2] = cb
    w = np.broadcast_to((wz / 2.0)[None, :, None], aa.shape) / (m * m)
    nodes = r.reshape(-1, 3, 3)
    weights = np.ascontiguousarray(w).reshape(-1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights, 2 * order - 1)


def quad_so3(order: int) -> QuadratureRule:
    """Product rule in 3-1-3 Euler angles for normalized Haar measure.

    ``2*order`` equispaced nodes in ``a`` and ``c``, ``order`` Gauss-Legendre
    nodes in ``cos b``; exact for polynomials in the matrix entries of total
    degree ``<= 2*order - 1``.
    """
    return _quad_so3(_check_order(order))
