"""Posterior-mean regression for rotations and its numerical checks.

The model is the posterior density ``lambda(gamma | y) = 1 + c tr(gamma' x)``
on SO(3) (flat prior, normalized Haar measure) with ``x = x(y)`` a
rotation-valued statistic of the data. Its mean ``gamma_bar`` equals
``(c/3) x`` and the Bayes estimator under the chordal loss is the nearest
rotation to ``gamma_bar``, i.e. ``x`` itself for ``c > 0``.

Monte Carlo work is split into fixed-size chunks whose seeds are derived up
front, so results do not depend on how many worker threads run them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import matdecomp as md
from .errors import DomainError, ShapeMismatch, SingularTau
from .sphere_geom import euler_from_rotation, quad_s2, quad_so3, sample_haar_so3

C_BOUND = 0.3
CHUNK = 1 << 16


@dataclass(frozen=True)
class PosteriorModel:
    """Posterior ``1 + c tr(gamma' x)`` on SO(3); ``|c| <= 0.3`` keeps it positive."""

    c: float
    x_statistic: np.ndarray

    def __post_init__(self):
        c = float(self.c)
        if not (np.isfinite(c) and abs(c) <= C_BOUND):
            raise DomainError(f"|c| must be at most {C_BOUND}")
        x = np.array(self.x_statistic, dtype=float)
        if not md.is_rotation(x, 1e-8):
            raise ShapeMismatch("x_statistic must be a rotation")
        x.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "x_statistic", x)

    def density(self, gamma) -> np.ndarray:
        """Posterior density at a rotation or a stack of rotations."""
        g = np.asarray(gamma, dtype=float)
        return 1.0 + self.c * np.einsum("...ij,ij->...", g, self.x_statistic)


@dataclass(frozen=True)
class TauForm:
    matrix: np.ndarray


@dataclass(frozen=True)
class MonteCarloMatrix:
    """Entrywise Monte Carlo estimate with standard errors."""

    mean: np.ndarray
    stderr: np.ndarray
    n_samples: int


def _chunk_seeds(rng, n_samples: int) -> list[np.random.SeedSequence]:
    if isinstance(rng, np.random.Generator):
        entropy = int(rng.integers(0, 2**63))
    else:
        entropy = int(rng)
    n_chunks = -(-n_samples // CHUNK)
    return np.random.SeedSequence(entropy).spawn(n_chunks)


def _run_chunks(fn, rng, n_samples: int, workers: int):
    seeds = _chunk_seeds(rng, n_samples)
    sizes = [min(CHUNK, n_samples - i * CHUNK) for i in range(len(seeds))]
    jobs = list(zip(seeds, sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))
    return [fn(*job) for job in jobs]


# -- posterior mean --------------------------------------------------------


def posterior_mean(model: PosteriorModel, n_samples: int, rng, workers: int = 1) -> MonteCarloMatrix:
    """Haar Monte Carlo estimate of ``integral gamma lambda(gamma|y) d gamma``.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    n_samples = int(n_samples)
    if n_samples < 2:
        raise DomainError("need at least two samples")
    x, c = model.x_statistic, model.c

    def chunk(seed, size):
        g = sample_haar_so3(np.random.default_rng(seed), size)
        z = g * (1.0 + c * np.einsum("nij,ij->n", g, x))[:, None, None]
        return z.sum(axis=0), np.einsum("nij,nij->ij", z, z)

    parts = _run_chunks(chunk, rng, n_samples, workers)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / n_samples
    var = (s2 - n_samples * mean * mean) / (n_samples - 1)
    return MonteCarloMatrix(mean, np.sqrt(np.maximum(var, 0.0) / n_samples), n_samples)


def projection_error(model: PosteriorModel, n_samples: int, rng, workers: int = 1):
    """Rotation vector of ``x' proj(gamma_bar)`` to first order, with standard errors.

    Writing ``gamma_bar = (c/3) x + E``, the nearest rotation is
    ``x exp(hat(w))`` with ``w = vee(x' E) * 3/c + O(E^2)``; the per-sample
    contributions to ``w`` give its standard error. Returns
    ``(w_exact, w_linear, stderr)`` where ``w_exact`` is ``so3_log`` of the
    actual projected rotation relative to ``x``.
    """
    if model.c == 0:
        raise DomainError("the projection is undefined for c = 0")
    x, c = model.x_statistic, model.c
    scale = 3.0 / c

    def chunk(seed, size):
        g = sample_haar_so3(np.random.default_rng(seed), size)
        z = g * (1.0 + c * np.einsum("nij,ij->n", g, x))[:, None, None]
        m = np.einsum("ji,njk->nik", x, z)
        w = scale * 0.5 * np.stack(
            [m[:, 2, 1] - m[:, 1, 2], m[:, 0, 2] - m[:, 2, 0], m[:, 1, 0] - m[:, 0, 1]], axis=1
        )
        return z.sum(axis=0), w.sum(axis=0), (w * w).sum(axis=0)

    parts = _run_chunks(chunk, rng, n_samples, workers)
    gbar = sum(p[0] for p in parts) / n_samples
    wsum = sum(p[1] for p in parts)
    wsq = sum(p[2] for p in parts)
    w_lin = wsum / n_samples
    var = (wsq - n_samples * w_lin * w_lin) / (n_samples - 1)
    se = np.sqrt(np.maximum(var, 0.0) / n_samples)
    w_exact = md.so3_log(x.T @ md.project_special_orthogonal(gbar))
    return w_exact, w_lin, se


def posterior_normalizer(model: PosteriorModel, order: int = 4) -> float:
    """``integral lambda(gamma|y) d gamma`` by quadrature; equals 1 for this family."""
    rule = quad_so3(order)
    return float(rule.weights @ model.density(rule.nodes))


# -- first-order condition -------------------------------------------------


def tau_s2(order: int = 8) -> TauForm:
    """``integral theta theta' d theta`` over the unit sphere (``I/3``)."""
    rule = quad_s2(order)
    return TauForm(np.einsum("n,ni,nj->ij", rule.weights, rule.nodes, rule.nodes))


def bayes_estimator_condition(gamma_hat, gamma_bar, tau, tangent_basis=None) -> float:
    """Size of the tangential part of ``(gamma_bar - gamma_hat) tau`` at ``gamma_hat``.

    Without a basis the tangent space of SO(3) is used (the norm of
    ``skew(D gamma_hat')``); with a basis the norm of the coefficient vector
    ``<D, B_i>`` is returned. Zero certifies the Bayes first-order condition.
    """
    t = np.asarray(tau.matrix if isinstance(tau, TauForm) else tau, dtype=float)
    w = np.linalg.eigvalsh(0.5 * (t + t.T))
    if not np.all(np.isfinite(w)) or abs(w).min() <= 1e-12 * max(abs(w).max(), 1e-300):
        raise SingularTau("tau is singular")
    gh = np.asarray(gamma_hat, dtype=float)
    d = (np.asarray(gamma_bar, dtype=float) - gh) @ t
    if tangent_basis is None:
        m = d @ gh.T
        return float(np.linalg.norm(0.5 * (m - m.T)))
    basis = np.asarray(tangent_basis, dtype=float).reshape(-1, 3, 3)
    return float(np.linalg.norm(np.einsum("ij,bij->b", d, basis)))


def _aligned_frame(th: np.ndarray) -> np.ndarray:
    # rotations rho with rho @ e3 = th, one per row of th
    helper = np.where(np.abs(th[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    u = helper - np.einsum("ti,ti->t", helper, th)[:, None] * th
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return np.stack([u, np.cross(th, u), th], axis=2)


@lru_cache(maxsize=8)
def _radial_so3_rule(order: int, unit_weight: bool):
    # Euler grid R3(a) R1(b) R3(c) with Gauss-Legendre in b itself on [0, pi].
    # The Haar density is sin(b)/(8 pi^2); multiplied by b/sin(b) it becomes b.
    m = 2 * order
    ang = 2.0 * np.pi * np.arange(m) / m
    xb, wb = np.polynomial.legendre.leggauss(order)
    b = 0.5 * np.pi * (xb + 1.0)
    wb = 0.5 * np.pi * wb * (np.sin(b) if unit_weight else b) / 2.0
    aa, bb, cc = np.meshgrid(ang, b, ang, indexing="ij")
    ca, sa, cb, sb, c_, s_ = np.cos(aa), np.sin(aa), np.cos(bb), np.sin(bb), np.cos(cc), np.sin(cc)
    g = np.empty(aa.shape + (3, 3))
    g[..., 0, 0] = ca * c_ - sa * cb * s_
    g[..., 0, 1] = -ca * s_ - sa * cb * c_
    g[..., 0, 2] = sa * sb
    g[..., 1, 0] = sa * c_ + ca * cb * s_
    g[..., 1, 1] = -sa * s_ + ca * cb * c_
    g[..., 1, 2] = -ca * sb
    g[..., 2, 0] = sb * s_
    g[..., 2, 1] = sb * c_
    g[..., 2, 2] = cb
    w = np.broadcast_to(wb[None, :, None], aa.shape) / (m * m)
    return g.reshape(-1, 3, 3), np.ascontiguousarray(w).reshape(-1)


def weighted_tau(gamma_hat, model: PosteriorModel, order: int = 16, unit_weight: bool = False) -> np.ndarray:
    """``3 * int int lambda(gamma_hat gamma|y) (alpha/sin alpha) gamma theta theta'``.

    ``alpha`` is the angle between ``gamma theta`` and ``theta``. The outer
    integral uses ``quad_s2(order)``. For each node ``theta`` the inner Haar
    integral is taken in 3-1-3 Euler angles of ``rho' gamma rho`` with
    ``rho e3 = theta``; then ``alpha`` is the middle Euler angle and the
    weight ``alpha/sin alpha`` cancels the ``sin`` in the Haar density,
    leaving a smooth integrand. With ``unit_weight=True`` the weight is
    replaced by 1 and ``gamma_hat @ result`` is the posterior mean.
    """
    if int(order) < 8:
        raise DomainError("weighted_tau needs quadrature order >= 8")
    order = int(order)
    gh = np.asarray(gamma_hat, dtype=float)
    s2 = quad_s2(order)
    g, wg = _radial_so3_rule(order, bool(unit_weight))
    a = gh.T @ model.x_statistic
    ge3 = g[:, :, 2]
    out = np.zeros((3, 3))
    step = max(1, 1_000_000 // len(wg))
    for i in range(0, len(s2), step):
        th = s2.nodes[i:i + step]
        rho = _aligned_frame(th)
        # lambda(gamma_hat rho G rho') = 1 + c <G, rho' A rho>
        bmat = np.einsum("tki,kl,tlj->tij", rho, a, rho)
        lam = 1.0 + model.c * np.einsum("gij,tij->tg", g, bmat)
        acc = np.einsum("tg,gk->tk", lam * wg, ge3)
        p = np.einsum("tik,tk->ti", rho, acc)
        out += np.einsum("t,ti,tj->ij", s2.weights[i:i + step], p, th)
    return 3.0 * out


# -- six-dimensional verification integral ---------------------------------


@dataclass(frozen=True)
class IntegralCheck:
    numeric: float
    analytic: float
    stderr: float
    euler_y: float

    @property
    def relative_error(self) -> float:
        if self.analytic == 0.0:
            return float("nan")
        return abs(self.numeric - self.analytic) / self.analytic


def verify_posterior_integral(
    model: PosteriorModel, gamma_hat, alpha_test, n_samples: int, rng, workers: int = 1
) -> IntegralCheck:
    """Monte Carlo value of the 6-dimensional vanishing integral and its closed form.

    With ``M = alpha' gamma_hat' x alpha`` the integrand factorizes over two
    independent Haar rotations ``g = R3(a) R1(b) R3(c)``, and the integral is
    ``|J|^2`` with ``J = E[b exp(i a) c tr(g' M)]`` (the constant part of the
    density has zero mean against ``b exp(i a)``). ``|J|^2`` is estimated by
    the unbiased pair statistic ``(|sum z|^2 - sum |z|^2) / (n (n - 1))``.
    The closed form is ``pi^4 c^2 sin(y)^2 / 256`` with ``y`` the middle
    3-1-3 Euler angle of ``M``.
    """
    n = int(n_samples)
    if n < 2:
        raise DomainError("need at least two samples")
    gh = np.asarray(gamma_hat, dtype=float)
    al = np.asarray(alpha_test, dtype=float)
    m = al.T @ gh.T @ model.x_statistic @ al
    y = euler_from_rotation(m).b
    analytic = np.pi**4 * model.c**2 * np.sin(y) ** 2 / 256.0
    c = model.c

    def chunk(seed, size):
        g = sample_haar_so3(np.random.default_rng(seed), size)
        b = np.arccos(np.clip(g[:, 2, 2], -1.0, 1.0))
        a = np.arctan2(g[:, 0, 2], -g[:, 1, 2])
        z = b * np.exp(1j * a) * (c * np.einsum("nij,ij->n", g, m))
        return z.sum(), float((np.abs(z) ** 2).sum()), float((np.abs(z) ** 4).sum()), z

    parts = _run_chunks(chunk, rng, n, workers)
    s = sum(p[0] for p in parts)
    q = sum(p[1] for p in parts)
    numeric = float((abs(s) ** 2 - q) / (n * (n - 1)))
    jhat = s / n
    # delta-method term plus the degenerate pair term (which dominates when J = 0)
    lin = np.concatenate([np.real(np.conj(jhat) * p[3]) for p in parts])
    var_lin = float(np.var(lin, ddof=1))
    ez2 = q / n
    se = float(np.sqrt(4.0 * var_lin / n + 2.0 * ez2 * ez2 / (n * (n - 1))))
    return IntegralCheck(numeric, float(analytic), se, float(y))
