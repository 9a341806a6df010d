"""Dense matrix decompositions used by the orbit projections.

Everything here is a pure function of small dense ``numpy`` arrays. The
decompositions are thin wrappers over LAPACK (via ``numpy.linalg`` and
``scipy.linalg``) that add the branch and sign conventions the projections
depend on: symmetric square roots, the orthogonal polar factor, the nearest
special orthogonal matrix, the Takagi factorization of complex symmetric
matrices and the real canonical form of skew-symmetric matrices.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg

from .errors import (
    CutLocus,
    DegenerateProjection,
    NotComplexSymmetric,
    NotPositiveDefinite,
    NotSkewSymmetric,
    NotSymmetric,
    ShapeMismatch,
    SingularInput,
)

SYMMETRY_TOL = 1e-12
PD_TOL = 1e-10
SINGULAR_TOL = 1e-12
CUTLOCUS_TOL = 1e-9


@dataclass(frozen=True)
class SpectralDecomp:
    """``m = eigenvectors @ diag(eigenvalues) @ eigenvectors.T``, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


@dataclass(frozen=True)
class SvdDecomp:
    """``m = u @ diag(sigma) @ v.T`` (thin), sigma descending and nonnegative."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def _as_square(m, name="matrix") -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got shape {m.shape}")
    return m


def _scale(m: np.ndarray) -> float:
    return max(1.0, float(np.linalg.norm(m)))


def spectral(m) -> SpectralDecomp:
    """Eigendecomposition of a real symmetric matrix with descending eigenvalues."""
    m = _as_square(np.asarray(m, dtype=float))
    if np.linalg.norm(m - m.T) > SYMMETRY_TOL * _scale(m):
        raise NotSymmetric("matrix is not symmetric")
    w, q = np.linalg.eigh((m + m.T) / 2)
    return SpectralDecomp(w[::-1].copy(), q[:, ::-1].copy())


def svd(m) -> SvdDecomp:
    """Thin singular-value decomposition of a real matrix."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ShapeMismatch(f"expected a matrix, got shape {m.shape}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return SvdDecomp(u, s, vt.T)


def sym_sqrt(m) -> np.ndarray:
    """Unique symmetric positive-definite square root of an SPD matrix.

    Raises
    ------
    NotSymmetric
        if ``m`` differs from its transpose by more than ``1e-12`` (relative).
    NotPositiveDefinite
        if the smallest eigenvalue is below ``1e-10 * ||m||_F``.
    """
    m = _as_square(np.asarray(m, dtype=float))
    if np.linalg.norm(m - m.T) > SYMMETRY_TOL * _scale(m):
        raise NotSymmetric("sym_sqrt needs a symmetric matrix")
    w, q = np.linalg.eigh((m + m.T) / 2)
    if w[0] <= PD_TOL * np.linalg.norm(m):
        raise NotPositiveDefinite(f"smallest eigenvalue {w[0]:.3e} is not positive")
    r = (q * np.sqrt(w)) @ q.T
    return (r + r.T) / 2


def inv_sym_sqrt(m) -> np.ndarray:
    """``m^{-1/2}`` for symmetric positive-definite ``m``."""
    m = _as_square(np.asarray(m, dtype=float))
    if np.linalg.norm(m - m.T) > SYMMETRY_TOL * _scale(m):
        raise NotSymmetric("inv_sym_sqrt needs a symmetric matrix")
    w, q = np.linalg.eigh((m + m.T) / 2)
    if w[0] <= PD_TOL * np.linalg.norm(m):
        raise NotPositiveDefinite(f"smallest eigenvalue {w[0]:.3e} is not positive")
    r = (q / np.sqrt(w)) @ q.T
    return (r + r.T) / 2


def polar(m) -> tuple[np.ndarray, np.ndarray]:
    """Polar decomposition ``m = g @ p`` of an invertible square matrix.

    ``g`` is orthogonal (its determinant has the sign of ``det m``) and ``p``
    is symmetric positive definite.
    """
    m = _as_square(np.asarray(m, dtype=float))
    n = m.shape[0]
    u, s, vt = np.linalg.svd(m)
    if s[-1] <= SINGULAR_TOL * max(s[0], np.finfo(float).tiny) or s[0] == 0.0:
        raise SingularInput("polar decomposition needs an invertible matrix")
    if abs(np.prod(s)) <= SINGULAR_TOL * s[0] ** n:
        raise SingularInput("polar decomposition needs an invertible matrix")
    g = u @ vt
    p = (vt.T * s) @ vt
    return g, (p + p.T) / 2


def project_special_orthogonal(m) -> np.ndarray:
    """Frobenius-nearest rotation to a square matrix.

    Returns ``u @ diag(1, ..., 1, det(u v')) @ v'`` from the SVD ``m = u s v'``.
    The nearest rotation is unique when ``s[-2] + det(u v') * s[-1] > 0``;
    otherwise :class:`DegenerateProjection` is raised.
    """
    m = _as_square(np.asarray(m, dtype=float))
    n = m.shape[0]
    if n == 1:
        return np.ones((1, 1))
    u, s, vt = np.linalg.svd(m)
    d = 1.0 if np.linalg.det(u @ vt) > 0 else -1.0
    margin = s[-2] + d * s[-1]
    if not margin > SINGULAR_TOL * max(s[0], np.finfo(float).tiny) or s[0] == 0.0:
        raise DegenerateProjection(
            f"nearest rotation is not unique (sigma_{n - 1} + det*sigma_{n} = {margin:.3e})"
        )
    u = u.copy()
    u[:, -1] *= d
    return u @ vt


def takagi(m, allow_singular: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Takagi factorization ``m = g @ diag(sigma) @ g.T`` of a complex symmetric matrix.

    ``g`` is unitary and ``sigma`` holds the singular values of ``m`` in
    descending order. The factor is built from the SVD ``m = U S V^H``: the
    unitary ``Z = U^H conj(V)`` is symmetric and commutes with ``S``, so with
    ``Z = W^2`` for a symmetric square root ``W`` one gets ``g = U W``.

    Singular inputs are rejected unless ``allow_singular`` is set; the null
    directions then get an arbitrary (but unitary) completion.
    """
    m = _as_square(np.asarray(m, dtype=complex))
    if np.linalg.norm(m - m.T) > 1e-10 * _scale(m):
        raise NotComplexSymmetric("takagi needs m == m.T (plain transpose)")
    m = (m + m.T) / 2
    n = m.shape[0]
    u, s, vh = np.linalg.svd(m)
    null = s <= SINGULAR_TOL * max(s[0], np.finfo(float).tiny)
    if s[0] == 0.0:
        null[:] = True
    if null.any() and not allow_singular:
        raise SingularInput("takagi factorization of a singular matrix")
    z = u.conj().T @ vh.T
    if null.any():
        z[null, :] = 0.0
        z[:, null] = 0.0
        z[null, null] = 1.0
    z = (z + z.T) / 2
    w = _unitary_sqrt(z)
    g = u @ w
    return g, s


def _unitary_sqrt(z: np.ndarray) -> np.ndarray:
    # Square root of a (numerically) unitary normal matrix as a primary matrix
    # function; the branch cut sits in the widest gap of the spectrum so
    # clustered eigenvalues share a branch.
    t, q = scipy.linalg.schur(z, output="complex")
    lam = np.diag(t)
    ang = np.sort(np.angle(lam))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    i = int(np.argmax(gaps))
    cut = ang[i] + gaps[i] / 2
    rel = np.mod(np.angle(lam) - cut, 2 * np.pi) + cut
    root = np.abs(lam) ** 0.5 * np.exp(0.5j * rel)
    return (q * root) @ q.conj().T


def skew_block_diag(a: Iterable[float]) -> np.ndarray:
    """Block-diagonal matrix with 2x2 blocks ``[[0, a_i], [-a_i, 0]]``."""
    a = np.asarray(list(a), dtype=float)
    out = np.zeros((2 * a.size, 2 * a.size))
    for i, ai in enumerate(a):
        out[2 * i, 2 * i + 1] = ai
        out[2 * i + 1, 2 * i] = -ai
    return out


def skew_canonical(m) -> tuple[np.ndarray, np.ndarray]:
    """Real canonical form of an even-dimensional skew-symmetric matrix.

    Returns ``(g, alpha)`` with ``g`` in SO(2n) and ``g.T @ m @ g = alpha``,
    where ``alpha`` is block diagonal with blocks ``[[0, a_i], [-a_i, 0]]``
    and ``|a_1| >= |a_2| >= ...``. All ``a_i`` are nonnegative except that
    the last one is negative when the Pfaffian of ``m`` is negative: with
    ``det g = +1`` the sign of ``prod(a_i)`` is the sign of ``Pf(m)``.
    """
    m = _as_square(np.asarray(m, dtype=float))
    dim = m.shape[0]
    if dim % 2:
        raise ShapeMismatch("skew_canonical needs an even dimension")
    if np.linalg.norm(m + m.T) > SYMMETRY_TOL * _scale(m):
        raise NotSkewSymmetric("matrix is not skew-symmetric")
    m = (m - m.T) / 2
    w, vecs = np.linalg.eigh(1j * m)
    tol = 1e-13 * max(1.0, float(np.abs(w).max(initial=0.0))) * dim
    pos = np.nonzero(w > tol)[0][::-1]
    cols = []
    a = []
    for idx in pos:
        v = vecs[:, idx] * np.sqrt(2.0)
        cols += [v.imag, v.real]
        a.append(w[idx])
    n_zero_blocks = dim // 2 - len(a)
    g = np.zeros((dim, dim))
    if cols:
        g[:, : len(cols)] = np.column_stack(cols)
    if n_zero_blocks:
        used = g[:, : len(cols)]
        proj = np.eye(dim) - used @ used.T
        pw, pv = np.linalg.eigh((proj + proj.T) / 2)
        g[:, len(cols):] = pv[:, -2 * n_zero_blocks:]
        a += [0.0] * n_zero_blocks
    a = np.array(a)
    # re-orthonormalize against rounding in the eigenvectors
    qq, rr = np.linalg.qr(g)
    g = qq * np.sign(np.diag(rr))
    if np.linalg.det(g) < 0:
        if n_zero_blocks:
            g[:, -1] *= -1
        else:
            g[:, [-2, -1]] = g[:, [-1, -2]]
            a[-1] = -a[-1]
    return g, skew_block_diag(a)


def skew_block_values(alpha) -> np.ndarray:
    """The ``a_i`` of a block-diagonal ``[[0, a_i], [-a_i, 0]]`` matrix."""
    alpha = np.asarray(alpha)
    return alpha[0::2, 1::2].diagonal().copy()


def hat(w) -> np.ndarray:
    """3-vector to skew matrix, ``hat(w) @ x == cross(w, x)``."""
    w = np.asarray(w, dtype=float)
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def vee(s) -> np.ndarray:
    """Inverse of :func:`hat` applied to the skew part of ``s``."""
    s = np.asarray(s, dtype=float)
    return 0.5 * np.array([s[2, 1] - s[1, 2], s[0, 2] - s[2, 0], s[1, 0] - s[0, 1]])


def so3_exp(w) -> np.ndarray:
    """Rodrigues formula: rotation by angle ``|w|`` about ``w / |w|``."""
    w = np.asarray(w, dtype=float)
    t2 = float(w @ w)
    k = hat(w)
    if t2 < 1e-8:
        # Taylor coefficients of sin(t)/t and (1 - cos t)/t^2
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    else:
        t = np.sqrt(t2)
        a = np.sin(t) / t
        b = (1.0 - np.cos(t)) / t2
    return np.eye(3) + a * k + b * (k @ k)


def so3_log(r) -> np.ndarray:
    """Axis-angle vector of a rotation with angle below pi.

    Raises :class:`CutLocus` when ``trace(r) <= -1 + 1e-9``.
    """
    r = np.asarray(r, dtype=float)
    tr = np.trace(r)
    if tr <= -1.0 + CUTLOCUS_TOL:
        raise CutLocus("rotation angle is (numerically) pi; log is not unique")
    v = vee(r)
    s = np.linalg.norm(v)
    c = 0.5 * (tr - 1.0)
    theta = np.arctan2(s, c)
    if theta < 1e-4:
        return (1.0 + theta * theta / 6.0 + 7.0 * theta**4 / 360.0) * v
    if theta < 3.0:
        return theta / s * v
    # near pi the antisymmetric part is small; read the axis off the symmetric part
    b = ((r + r.T) / 2 - c * np.eye(3)) / (1.0 - c)
    i = int(np.argmax(np.diag(b)))
    axis = b[:, i] / np.sqrt(b[i, i])
    if axis @ v < 0:
        axis = -axis
    return theta * axis


def is_rotation(r, tol: float = 1e-10) -> bool:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        return False
    return bool(
        np.linalg.norm(r.T @ r - np.eye(3)) < tol and abs(np.linalg.det(r) - 1.0) < tol
    )


# -- CSV matrix exchange ---------------------------------------------------


def format_number(x) -> str:
    """17 significant digits; complex numbers as ``re+imj``."""
    if np.iscomplexobj(x) or isinstance(x, complex):
        x = complex(x)
        return f"{_fmt_real(x.real)}{'+' if x.imag >= 0 or np.isnan(x.imag) else '-'}{_fmt_real(abs(x.imag))}j"
    return _fmt_real(float(x))


def _fmt_real(x: float) -> str:
    s = f"{x:.17g}"
    return "0" if s == "-0" else s


def matrix_to_csv(m) -> str:
    m = np.atleast_2d(np.asarray(m))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in m:
        writer.writerow([format_number(x) for x in row])
    return buf.getvalue()


def write_matrix_csv(path: str | os.PathLike, m) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(matrix_to_csv(m))


def parse_matrix_csv(text: str) -> np.ndarray:
    """Parse the CSV matrix format (one row per line, comma separated)."""
    rows = []
    for rec in csv.reader(io.StringIO(text)):
        cells = [c.strip() for c in rec if c.strip()]
        if cells:
            rows.append(cells)
    if not rows:
        raise ShapeMismatch("empty matrix")
    if len({len(r) for r in rows}) != 1:
        raise ShapeMismatch("ragged rows in matrix CSV")
    is_complex = any("j" in c for r in rows for c in r)
    try:
        if is_complex:
            out = np.array([[complex(c) for c in r] for r in rows], dtype=complex)
        else:
            out = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ShapeMismatch(f"unparseable matrix entry: {exc}") from None
    if not np.all(np.isfinite(out)):
        raise ShapeMismatch("matrix entries must be finite")
    return out


def read_matrix_csv(path: str | os.PathLike) -> np.ndarray:
    with open(path, newline="") as fh:
        return parse_matrix_csv(fh.read())
