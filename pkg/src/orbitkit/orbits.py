"""Nearest-point projections onto compact matrix-group orbits.

Each :class:`OrbitSpec` names an orbit ``{g . theta}`` in a euclidean matrix
space together with the group action. :func:`project` maps a point of the
tubular neighbourhood onto the orbit, :func:`in_tube` reports whether the
projection is well defined (and why not), and :func:`act` applies a group
element.

Supported kinds and their ambient spaces::

    sphere        R^n            O(n), left multiplication
    stiefel       n x k real     O(n), left multiplication
    grassmannian  Sym(R^n)       O(n), congruence g x g'
    svd           n x k real     O(n) x O(k), g1 x g2'
    lagrangian    Sym(C^n)       U(n), u x u' (plain transpose)
    isotropic     Sym(C^n)       U(n), u x u'
    complex       so(2n)         SO(2n), conjugation g x g'
    group         n x n real     SO(n), left multiplication
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import ortho_group, special_ortho_group, unitary_group

from . import matdecomp as md
from .errors import OutsideTube, RankGapViolation, ShapeMismatch

GAP_TOL = 1e-8


class OrbitKind(str, enum.Enum):
    SPHERE = "sphere"
    STIEFEL = "stiefel"
    GRASSMANNIAN = "grassmannian"
    SVD = "svd"
    LAGRANGIAN = "lagrangian"
    ISOTROPIC = "isotropic"
    COMPLEX = "complex"
    GROUP = "group"


@dataclass(frozen=True)
class OrbitSpec:
    """Orbit type plus dimension parameters.

    Use the classmethod constructors rather than the raw fields. ``base`` is
    only meaningful for ``svd`` (the base singular values) and ``stiefel``
    (an optional n x k base frame stored row-major).
    """

    kind: OrbitKind
    n: int
    k: int = 0
    base: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "kind", OrbitKind(self.kind))
        if self.n < 1:
            raise ShapeMismatch("n must be positive")
        if self.kind in (OrbitKind.STIEFEL, OrbitKind.GRASSMANNIAN, OrbitKind.ISOTROPIC):
            if not 1 <= self.k <= self.n:
                raise ShapeMismatch(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.kind is OrbitKind.SVD:
            vals = np.asarray(self.base, dtype=float)
            if vals.size != min(self.n, self.k) or self.k < 1:
                raise ShapeMismatch("svd orbit needs min(n, k) base singular values")
            if np.any(vals < 0) or np.any(np.diff(vals) > 0):
                raise ShapeMismatch("base singular values must be nonnegative and descending")
        if self.kind is OrbitKind.COMPLEX and self.n % 2:
            raise ShapeMismatch("complex structures live in even dimension")
        if self.kind is OrbitKind.STIEFEL and self.base:
            theta = np.asarray(self.base, dtype=float).reshape(self.n, self.k)
            if np.linalg.matrix_rank(theta) < self.k:
                raise ShapeMismatch("Stiefel base frame must have full rank")

    # constructors -----------------------------------------------------
    @classmethod
    def sphere(cls, n: int) -> "OrbitSpec":
        return cls(OrbitKind.SPHERE, n)

    @classmethod
    def stiefel(cls, k: int, n: int, base=None) -> "OrbitSpec":
        b = () if base is None else tuple(np.asarray(base, dtype=float).reshape(-1))
        return cls(OrbitKind.STIEFEL, n, k, b)

    @classmethod
    def grassmannian(cls, k: int, n: int) -> "OrbitSpec":
        return cls(OrbitKind.GRASSMANNIAN, n, k)

    @classmethod
    def svd_orbit(cls, values, n: int, k: int) -> "OrbitSpec":
        return cls(OrbitKind.SVD, n, k, tuple(float(v) for v in values))

    @classmethod
    def lagrangian(cls, n: int) -> "OrbitSpec":
        return cls(OrbitKind.LAGRANGIAN, n)

    @classmethod
    def isotropic(cls, k: int, n: int) -> "OrbitSpec":
        return cls(OrbitKind.ISOTROPIC, n, k)

    @classmethod
    def complex_structures(cls, dim: int) -> "OrbitSpec":
        return cls(OrbitKind.COMPLEX, dim)

    @classmethod
    def special_orthogonal(cls, n: int) -> "OrbitSpec":
        return cls(OrbitKind.GROUP, n)

    # geometry ---------------------------------------------------------
    @property
    def ambient_shape(self) -> tuple:
        kind = self.kind
        if kind is OrbitKind.SPHERE:
            return (self.n,)
        if kind in (OrbitKind.STIEFEL, OrbitKind.SVD):
            return (self.n, self.k)
        return (self.n, self.n)

    @property
    def is_complex(self) -> bool:
        return self.kind in (OrbitKind.LAGRANGIAN, OrbitKind.ISOTROPIC)

    @cached_property
    def base_point(self) -> np.ndarray:
        n, k = self.n, self.k
        kind = self.kind
        if kind is OrbitKind.SPHERE:
            return np.eye(n)[0]
        if kind is OrbitKind.STIEFEL:
            if self.base:
                return np.asarray(self.base, dtype=float).reshape(n, k)
            return np.eye(n, k)
        if kind in (OrbitKind.GRASSMANNIAN, OrbitKind.ISOTROPIC):
            th = np.diag(np.r_[np.ones(k), np.zeros(n - k)])
            return th.astype(complex) if self.is_complex else th
        if kind is OrbitKind.SVD:
            th = np.zeros((n, k))
            m = min(n, k)
            th[np.arange(m), np.arange(m)] = self.base
            return th
        if kind is OrbitKind.LAGRANGIAN:
            return np.eye(n, dtype=complex)
        if kind is OrbitKind.COMPLEX:
            h = n // 2
            z, i = np.zeros((h, h)), np.eye(h)
            return np.block([[z, -i], [i, z]])
        return np.eye(n)

    @cached_property
    def _pfaffian_sign(self) -> float:
        _, alpha = md.skew_canonical(self.base_point)
        return float(np.sign(np.prod(md.skew_block_values(alpha))))

    @property
    def label(self) -> str:
        kind = self.kind.value
        if self.kind in (OrbitKind.STIEFEL, OrbitKind.GRASSMANNIAN, OrbitKind.ISOTROPIC):
            return f"{kind}({self.k},{self.n})"
        if self.kind is OrbitKind.SVD:
            return f"svd({self.n}x{self.k}; {', '.join(f'{v:g}' for v in self.base)})"
        return f"{kind}({self.n})"


@dataclass(frozen=True)
class OrbitPoint:
    spec: OrbitSpec
    value: np.ndarray


@dataclass(frozen=True)
class TubeCheck:
    """Result of :func:`in_tube`; truthy iff the projection is defined."""

    ok: bool
    reason: str = ""
    margin: float = float("nan")

    def __bool__(self) -> bool:
        return self.ok


# -- helpers ---------------------------------------------------------------


def _coerce(spec: OrbitSpec, x) -> np.ndarray:
    x = np.asarray(x)
    if spec.kind is OrbitKind.SPHERE and x.ndim == 2 and 1 in x.shape:
        x = x.reshape(-1)
    if x.shape != spec.ambient_shape:
        raise ShapeMismatch(f"{spec.label} expects shape {spec.ambient_shape}, got {x.shape}")
    if spec.is_complex:
        x = x.astype(complex)
    else:
        if np.iscomplexobj(x):
            if np.any(x.imag != 0):
                raise ShapeMismatch(f"{spec.label} expects a real matrix")
            x = x.real
        x = x.astype(float)
    if not np.all(np.isfinite(x)):
        raise ShapeMismatch("entries must be finite")
    return x


def _gap_tol(x: np.ndarray) -> float:
    return GAP_TOL * float(np.linalg.norm(x))


def _fail(reason: str, margin: float = float("nan")) -> TubeCheck:
    return TubeCheck(False, reason, margin)


def _ok(margin: float) -> TubeCheck:
    return TubeCheck(True, "", margin)


# -- tube membership -------------------------------------------------------


def in_tube(spec: OrbitSpec, x) -> TubeCheck:
    """Whether ``x`` lies in the tubular neighbourhood where :func:`project` is defined.

    The check is the rank/gap condition of the orbit type with margin
    ``1e-8 * ||x||_F``. Raises :class:`ShapeMismatch` for a wrongly shaped ``x``.
    """
    x = _coerce(spec, x)
    tol = _gap_tol(x)
    kind = spec.kind
    n, k = spec.n, spec.k

    if kind is OrbitKind.SPHERE:
        r = float(np.linalg.norm(x))
        return _ok(r) if r > 0 else _fail("x is the zero vector", r)

    if kind is OrbitKind.STIEFEL:
        s = np.linalg.svd(x, compute_uv=False)
        if s[-1] > tol:
            return _ok(s[-1])
        return _fail(f"x is rank deficient (sigma_{k} = {s[-1]:.3e})", s[-1])

    if kind is OrbitKind.GRASSMANNIAN:
        if np.linalg.norm(x - x.T) > 1e-10 * max(1.0, np.linalg.norm(x)):
            return _fail("x is not symmetric")
        w = np.linalg.eigvalsh((x + x.T) / 2)[::-1]
        if k == n:
            return _ok(np.inf)
        gap = w[k - 1] - w[k]
        if gap > tol:
            return _ok(gap)
        return _fail(f"eigenvalue gap lambda_{k} - lambda_{k + 1} = {gap:.3e} too small", gap)

    if kind is OrbitKind.SVD:
        s = np.linalg.svd(x, compute_uv=False)
        th = np.asarray(spec.base)
        margins = [np.inf]
        for i in range(th.size - 1):
            if th[i] > th[i + 1]:
                gap = s[i] - s[i + 1]
                margins.append(gap)
                if gap <= tol:
                    return _fail(
                        f"singular values sigma_{i + 1}, sigma_{i + 2} collide "
                        f"(gap {gap:.3e}) where the base values differ",
                        gap,
                    )
        if th[-1] > 0:
            margins.append(s[-1])
            if s[-1] <= tol:
                return _fail(f"smallest singular value {s[-1]:.3e} vanishes", s[-1])
        return _ok(min(margins))

    if kind in (OrbitKind.LAGRANGIAN, OrbitKind.ISOTROPIC):
        if np.linalg.norm(x - x.T) > 1e-10 * max(1.0, np.linalg.norm(x)):
            return _fail("x is not complex symmetric")
        s = np.linalg.svd(x, compute_uv=False)
        if kind is OrbitKind.LAGRANGIAN:
            if s[-1] > tol:
                return _ok(s[-1])
            return _fail(f"x is singular (smallest Takagi value {s[-1]:.3e})", s[-1])
        if k == n:
            if s[-1] > tol:
                return _ok(s[-1])
            return _fail(f"x is singular (smallest Takagi value {s[-1]:.3e})", s[-1])
        gap = s[k - 1] - s[k]
        if gap > tol:
            return _ok(gap)
        return _fail(f"Takagi values {k} and {k + 1} collide (gap {gap:.3e})", gap)

    if kind is OrbitKind.COMPLEX:
        if np.linalg.norm(x + x.T) > 1e-10 * max(1.0, np.linalg.norm(x)):
            return _fail("x is not skew-symmetric")
        _, alpha = md.skew_canonical((x - x.T) / 2)
        a = md.skew_block_values(alpha)
        smallest = float(np.min(np.abs(a)))
        if smallest <= tol:
            return _fail(f"x is singular (smallest block value {smallest:.3e})", smallest)
        if np.sign(np.prod(a)) != spec._pfaffian_sign:
            return _fail("Pfaffian of x has the wrong sign (other orientation component)")
        return _ok(smallest)

    # special orthogonal group
    u, s, vt = np.linalg.svd(x)
    if n == 1:
        return _ok(np.inf)
    d = 1.0 if np.linalg.det(u @ vt) > 0 else -1.0
    margin = s[-2] + d * s[-1]
    if margin > tol:
        return _ok(margin)
    return _fail(f"nearest rotation not unique (sigma_{n - 1} + det*sigma_{n} = {margin:.3e})", margin)


# -- projection ------------------------------------------------------------


def project(spec: OrbitSpec, x) -> OrbitPoint:
    """Nearest point of the orbit to ``x``; raises :class:`OutsideTube` off the tube."""
    x = _coerce(spec, x)
    check = in_tube(spec, x)
    if not check:
        raise OutsideTube(f"{spec.label}: {check.reason}")
    return OrbitPoint(spec, _project_unchecked(spec, x))


def _project_unchecked(spec: OrbitSpec, x: np.ndarray) -> np.ndarray:
    kind = spec.kind
    k = spec.k
    if kind is OrbitKind.SPHERE:
        return x / np.linalg.norm(x)
    if kind is OrbitKind.STIEFEL:
        u, s, vt = np.linalg.svd(x, full_matrices=False)
        frame = u @ vt  # x (x'x)^{-1/2}
        if spec.base:
            frame = frame @ md.sym_sqrt(spec.base_point.T @ spec.base_point)
        return frame
    if kind is OrbitKind.GRASSMANNIAN:
        w, q = np.linalg.eigh((x + x.T) / 2)
        top = q[:, ::-1][:, :k]
        p = top @ top.T
        return (p + p.T) / 2
    if kind is OrbitKind.SVD:
        u, s, vt = np.linalg.svd(x, full_matrices=False)
        out = (u * np.asarray(spec.base)) @ vt
        return out
    if kind is OrbitKind.LAGRANGIAN:
        g, _ = md.takagi(x)
        p = g @ g.T
        return (p + p.T) / 2
    if kind is OrbitKind.ISOTROPIC:
        g, _ = md.takagi(x, allow_singular=True)
        top = g[:, :k]
        p = top @ top.T
        return (p + p.T) / 2
    if kind is OrbitKind.COMPLEX:
        g, alpha = md.skew_canonical((x - x.T) / 2)
        j = md.skew_block_diag(np.sign(md.skew_block_values(alpha)))
        out = g @ j @ g.T
        return (out - out.T) / 2
    return md.project_special_orthogonal(x)


# -- group action ----------------------------------------------------------


def act(spec: OrbitSpec, g, x) -> np.ndarray:
    """Apply the group element ``g`` (a pair ``(g1, g2)`` for ``svd``) to ``x``."""
    kind = spec.kind
    if kind is OrbitKind.SVD:
        g1, g2 = g
        return np.asarray(g1) @ x @ np.asarray(g2).T
    g = np.asarray(g)
    if kind in (OrbitKind.SPHERE, OrbitKind.STIEFEL, OrbitKind.GROUP):
        return g @ x
    return g @ x @ g.T


def random_group_element(spec: OrbitSpec, rng: np.random.Generator):
    """Haar-random element of the acting group."""
    kind = spec.kind
    n = spec.n
    if kind is OrbitKind.SVD:
        return (_random_orthogonal(n, rng), _random_orthogonal(spec.k, rng))
    if kind in (OrbitKind.LAGRANGIAN, OrbitKind.ISOTROPIC):
        if n == 1:
            return np.exp(1j * rng.uniform(0, 2 * np.pi)).reshape(1, 1)
        return unitary_group.rvs(n, random_state=rng)
    if kind in (OrbitKind.COMPLEX, OrbitKind.GROUP):
        if n == 1:
            return np.ones((1, 1))
        return special_ortho_group.rvs(n, random_state=rng)
    return _random_orthogonal(n, rng)


def _random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    if n == 1:
        return np.array([[rng.choice([-1.0, 1.0])]])
    return ortho_group.rvs(n, random_state=rng)


def sample_on_orbit(spec: OrbitSpec, rng: np.random.Generator) -> np.ndarray:
    """A random orbit point ``g . theta``."""
    return act(spec, random_group_element(spec, rng), spec.base_point)


def _ambient_noise(spec: OrbitSpec, rng: np.random.Generator) -> np.ndarray:
    shape = spec.ambient_shape
    z = rng.standard_normal(shape)
    if spec.is_complex:
        z = z + 1j * rng.standard_normal(shape)
    if spec.kind in (OrbitKind.GRASSMANNIAN, OrbitKind.LAGRANGIAN, OrbitKind.ISOTROPIC):
        z = (z + z.T) / 2
    elif spec.kind is OrbitKind.COMPLEX:
        z = (z - z.T) / 2
    return z


def sample_in_tube(spec: OrbitSpec, rng: np.random.Generator, scale: float = 0.2) -> np.ndarray:
    """Random orbit point plus ambient noise of relative size ``scale``, resampled until in the tube."""
    size = max(1.0, float(np.linalg.norm(spec.base_point)))
    for _ in range(1000):
        x = sample_on_orbit(spec, rng) + scale * size * _ambient_noise(spec, rng) / np.sqrt(
            np.prod(spec.ambient_shape)
        )
        if in_tube(spec, x):
            return x
    raise RuntimeError(f"could not sample a tube point for {spec.label}")  # pragma: no cover


# -- checks ----------------------------------------------------------------


def on_orbit(spec: OrbitSpec, value, tol: float = 1e-8) -> bool:
    """Membership test for the orbit (defining equations, not a search)."""
    try:
        y = _coerce(spec, value)
    except ShapeMismatch:
        return False
    kind = spec.kind
    n, k = spec.n, spec.k
    if kind is OrbitKind.SPHERE:
        return abs(np.linalg.norm(y) - 1.0) < tol
    if kind is OrbitKind.STIEFEL:
        th = spec.base_point
        return np.linalg.norm(y.T @ y - th.T @ th) < tol
    if kind is OrbitKind.GRASSMANNIAN:
        return (
            np.linalg.norm(y - y.T) < tol
            and np.linalg.norm(y @ y - y) < tol
            and abs(np.trace(y) - k) < tol
        )
    if kind is OrbitKind.SVD:
        s = np.linalg.svd(y, compute_uv=False)
        return np.max(np.abs(s - np.asarray(spec.base))) < tol
    if kind is OrbitKind.LAGRANGIAN:
        return (
            np.linalg.norm(y - y.T) < tol
            and np.linalg.norm(y.conj().T @ y - np.eye(n)) < tol
        )
    if kind is OrbitKind.ISOTROPIC:
        ph = y @ y.conj().T
        return (
            np.linalg.norm(y - y.T) < tol
            and np.linalg.norm(ph @ y - y) < tol
            and abs(np.trace(ph).real - k) < tol
        )
    if kind is OrbitKind.COMPLEX:
        if np.linalg.norm(y @ y + np.eye(n)) >= tol or np.linalg.norm(y.T @ y - np.eye(n)) >= tol:
            return False
        _, alpha = md.skew_canonical((y - y.T) / 2)
        return np.sign(np.prod(md.skew_block_values(alpha))) == spec._pfaffian_sign
    return np.linalg.norm(y.T @ y - np.eye(n)) < tol and abs(np.linalg.det(y) - 1.0) < tol


def equivariance_check(spec: OrbitSpec, x, g) -> float:
    """``||pi(g . x) - g . pi(x)||_F``."""
    x = _coerce(spec, x)
    lhs = project(spec, act(spec, g, x)).value
    rhs = act(spec, g, project(spec, x).value)
    return float(np.linalg.norm(lhs - rhs))


def low_rank_project(x, l: int) -> np.ndarray:
    """Rank-``l`` truncation of the SVD of ``x`` (the Eckart-Young best approximation).

    Requires ``sigma_l > sigma_{l+1} + tol`` and ``sigma_l > tol`` with
    ``tol = 1e-8 * ||x||_F``; otherwise :class:`RankGapViolation`.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ShapeMismatch("low_rank_project needs a matrix")
    m = min(x.shape)
    if not 1 <= l <= m:
        raise ShapeMismatch(f"target rank must be in [1, {m}]")
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    tol = _gap_tol(x)
    nxt = s[l] if l < m else 0.0
    if not (s[l - 1] > tol and s[l - 1] > nxt + tol):
        raise RankGapViolation(
            f"no singular-value gap after index {l} (sigma_{l} = {s[l - 1]:.3e}, next = {nxt:.3e})"
        )
    return (u[:, :l] * s[:l]) @ vt[:l]


ALL_KINDS = tuple(OrbitKind)


def parse_orbit(kind: str, params: str | None = None, base: str | None = None) -> OrbitSpec:
    """Build a spec from CLI-style strings, e.g. ``("stiefel", "2,3")``."""
    try:
        kind = OrbitKind(kind.strip().lower())
    except ValueError:
        raise ShapeMismatch(f"unknown orbit kind {kind!r}") from None
    nums = [int(t) for t in params.split(",")] if params else []
    if kind in (OrbitKind.SPHERE, OrbitKind.LAGRANGIAN, OrbitKind.COMPLEX, OrbitKind.GROUP):
        if len(nums) != 1:
            raise ShapeMismatch(f"{kind.value} takes one parameter n")
        return OrbitSpec(kind, nums[0])
    if len(nums) != 2:
        raise ShapeMismatch(f"{kind.value} takes two parameters k,n")
    k, n = nums
    if kind is OrbitKind.SVD:
        if not base:
            raise ShapeMismatch("svd orbit needs --base singular values")
        vals = [float(t) for t in base.split(",")]
        # params are (cols, rows) for consistency with Stiefel's k,n
        return OrbitSpec.svd_orbit(vals, n, k)
    return OrbitSpec(kind, n, k)
