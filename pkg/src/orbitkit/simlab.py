"""Monte Carlo study of the intrinsic rotation regressor.

For each noise level ``sigma`` the harness draws ``n_draws`` datasets
``y_l = u_l / |u_l|``, ``u_l = gamma theta_l + sigma eps_l`` with standard
gaussian ``eps_l``, fits the intrinsic regressor from the extrinsic start,
converts the fits to 3-1-3 Euler angles, whitens the deviations with the
lower Cholesky factor of their sample covariance and runs a KS test for
normality on each whitened coordinate.

Every draw has its own RNG stream keyed by ``(master_seed, sigma, draw)``,
so reports are bit-reproducible and independent of the worker count.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.special import ndtr

from .errors import ComputationError, DomainError, TooFewSamples
from .regression import RegressionDataset, fit_intrinsic_so3
from .sphere_geom import euler_from_rotation, rotation_from_euler

DEFAULT_TRUE_EULER = (math.pi / 3, math.pi / 2, math.pi / 4)
DESIGN_KEY = 0xD51
COORDS = ("a", "b", "c")


@dataclass(frozen=True)
class SimulationConfig:
    k: int = 100
    n_draws: int = 1000
    sigma_grid: tuple = tuple(round(0.1 * i, 10) for i in range(1, 10))
    true_gamma: np.ndarray = field(default_factory=lambda: rotation_from_euler(DEFAULT_TRUE_EULER))
    master_seed: int = 20240917
    design_policy: str = "fixed_across_draws"
    solver: str = "newton"

    def __post_init__(self):
        if self.k < 3:
            raise DomainError("k must be at least 3")
        if self.n_draws < 2:
            raise DomainError("n_draws must be at least 2")
        grid = tuple(float(s) for s in self.sigma_grid)
        if any(not (s > 0 and math.isfinite(s)) for s in grid):
            raise DomainError("all sigma values must be positive")
        object.__setattr__(self, "sigma_grid", grid)
        if self.design_policy not in ("fixed_across_draws", "redrawn_per_draw"):
            raise DomainError(f"unknown design policy {self.design_policy!r}")
        g = np.array(self.true_gamma, dtype=float)
        if g.shape != (3, 3) or np.linalg.norm(g.T @ g - np.eye(3)) > 1e-10 or np.linalg.det(g) < 0:
            raise DomainError("true_gamma must be a rotation")
        g.setflags(write=False)
        object.__setattr__(self, "true_gamma", g)
        if not 0 <= int(self.master_seed) < 2**64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SigmaResult:
    sigma: float
    euler: np.ndarray  # (n_ok, 3) fitted a, b, c
    mean: np.ndarray  # (3,)
    covariance: np.ndarray  # (3, 3)
    cholesky: np.ndarray  # lower triangular, C C' = covariance
    whitened: np.ndarray  # (n_ok, 3)
    ks_statistic: np.ndarray  # (3,)
    ks_pvalue: np.ndarray  # (3,)
    failures: int
    max_iterations: int


@dataclass(frozen=True)
class SimulationReport:
    config: SimulationConfig
    results: tuple

    @property
    def total_failures(self) -> int:
        return sum(r.failures for r in self.results)

    def pvalues(self) -> np.ndarray:
        return np.array([r.ks_pvalue for r in self.results]).reshape(-1, 3)


# -- random streams --------------------------------------------------------


def _sigma_key(sigma: float) -> int:
    return int(np.float64(sigma).view(np.uint64))


def _stream(config: SimulationConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(config.master_seed), spawn_key=key))


def _unit_rows(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def fixed_design(config: SimulationConfig) -> np.ndarray:
    return _unit_rows(_stream(config, DESIGN_KEY).standard_normal((config.k, 3)))


def generate_draw(config: SimulationConfig, sigma: float, draw_index: int) -> RegressionDataset:
    """Dataset number ``draw_index`` at noise level ``sigma`` (deterministic)."""
    rng = _stream(config, _sigma_key(sigma), int(draw_index))
    if config.design_policy == "fixed_across_draws":
        design = fixed_design(config)
    else:
        design = _unit_rows(rng.standard_normal((config.k, 3)))
    u = design @ config.true_gamma.T + sigma * rng.standard_normal((config.k, 3))
    return RegressionDataset(design, _unit_rows(u))


# -- KS test ---------------------------------------------------------------


def ks_statistic(samples) -> float:
    """``sup |F_n - Phi|`` against the standard normal CDF."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise TooFewSamples("no samples")
    cdf = ndtr(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def kolmogorov_sf(t: float) -> float:
    """``P(K > t)`` for the Kolmogorov distribution, series truncated at terms below 1e-10."""
    if t <= 0:
        return 1.0
    if t < 1.0:
        # theta-function form converges fast for small t
        s = 0.0
        j = 1
        while True:
            term = math.exp(-((2 * j - 1) ** 2) * math.pi**2 / (8 * t * t))
            s += term
            if term < 1e-10:
                break
            j += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / t * s))
    s = 0.0
    j = 1
    while True:
        term = math.exp(-2.0 * j * j * t * t)
        s += term if j % 2 else -term
        if term < 1e-10:
            break
        j += 1
    return min(1.0, max(0.0, 2.0 * s))


def ks_test_normal(samples) -> tuple[float, float]:
    """KS statistic and asymptotic p-value against N(0, 1); needs at least 8 samples."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 8:
        raise TooFewSamples(f"KS test needs at least 8 samples, got {x.size}")
    d = ks_statistic(x)
    return d, kolmogorov_sf(math.sqrt(x.size) * d)


# -- whitening -------------------------------------------------------------


def _wrap_pi(t: np.ndarray) -> np.ndarray:
    # into (-pi, pi]
    return np.pi - np.mod(np.pi - t, 2 * np.pi)


def angle_statistics(euler: np.ndarray):
    """Mean, covariance, Cholesky factor and whitened deviations of Euler-angle draws."""
    euler = np.asarray(euler, dtype=float)
    n = euler.shape[0]
    if n < 4:
        raise TooFewSamples("need at least 4 draws to whiten")
    centre = np.arctan2(np.sin(euler).mean(axis=0), np.cos(euler).mean(axis=0))
    dev = _wrap_pi(euler - centre)
    shift = dev.mean(axis=0)
    dev = dev - shift
    mean = centre + shift
    cov = dev.T @ dev / (n - 1)
    chol = np.linalg.cholesky(cov)
    xi = scipy.linalg.solve_triangular(chol, dev.T, lower=True).T
    return mean, cov, chol, xi


# -- driver ----------------------------------------------------------------


def _fit_one(config: SimulationConfig, sigma: float, index: int):
    data = generate_draw(config, sigma, index)
    try:
        fit = fit_intrinsic_so3(data, solver=config.solver)
    except ComputationError:
        return None, 0
    e = euler_from_rotation(fit.gamma)
    return (e.a, e.b, e.c), fit.iterations


def run_sigma(config: SimulationConfig, sigma: float, workers: int = 1) -> SigmaResult:
    idx = range(config.n_draws)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(lambda i: _fit_one(config, sigma, i), idx))
    else:
        out = [_fit_one(config, sigma, i) for i in idx]
    angles = np.array([o[0] for o in out if o[0] is not None], dtype=float).reshape(-1, 3)
    failures = sum(o[0] is None for o in out)
    max_it = max((o[1] for o in out), default=0)
    mean, cov, chol, xi = angle_statistics(angles)
    ks = [ks_test_normal(xi[:, j]) for j in range(3)]
    return SigmaResult(
        sigma=float(sigma),
        euler=angles,
        mean=mean,
        covariance=cov,
        cholesky=chol,
        whitened=xi,
        ks_statistic=np.array([d for d, _ in ks]),
        ks_pvalue=np.array([p for _, p in ks]),
        failures=int(failures),
        max_iterations=int(max_it),
    )


def run_simulation(config: SimulationConfig, workers: int = 1, progress=None) -> SimulationReport:
    """Run every sigma of the grid; ``progress(sigma_result)`` is called after each."""
    results = []
    for sigma in config.sigma_grid:
        r = run_sigma(config, sigma, workers)
        results.append(r)
        if progress is not None:
            progress(r)
    return SimulationReport(config, tuple(results))


# -- artifacts -------------------------------------------------------------


def _g(x: float) -> str:
    return f"{float(x):.17g}"


def _sigma_label(sigma: float) -> str:
    return f"{sigma:g}"


def _histogram_svg(values: np.ndarray, title: str) -> str:
    width, height, pad = 400, 260, 30
    edges = np.linspace(-4.0, 4.0, 21)
    counts, _ = np.histogram(values, bins=edges)
    bw = edges[1] - edges[0]
    dens = counts / (max(values.size, 1) * bw)
    ymax = max(0.5, float(dens.max(initial=0.0)) * 1.05)

    def sx(v):
        return pad + (v + 4.0) / 8.0 * (width - 2 * pad)

    def sy(v):
        return height - pad - v / ymax * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.2f}" y="18" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12">{title}</text>',
    ]
    for lo, d in zip(edges[:-1], dens):
        x0, x1 = sx(lo), sx(lo + bw)
        y = sy(d)
        parts.append(
            f'<rect x="{x0:.2f}" y="{y:.2f}" width="{x1 - x0:.2f}" height="{sy(0) - y:.2f}" '
            f'fill="#9ecae1" stroke="#3182bd" stroke-width="0.5"/>'
        )
    grid = np.linspace(-4.0, 4.0, 161)
    pdf = np.exp(-0.5 * grid * grid) / math.sqrt(2 * math.pi)
    pts = " ".join(f"{sx(u):.2f},{sy(v):.2f}" for u, v in zip(grid, pdf))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="1.5"/>')
    parts.append(
        f'<line x1="{pad}" y1="{sy(0):.2f}" x2="{width - pad}" y2="{sy(0):.2f}" stroke="black"/>'
    )
    for t in range(-4, 5, 2):
        parts.append(
            f'<text x="{sx(t):.2f}" y="{height - 10}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{t}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_artifacts(report: SimulationReport, out_dir) -> list[Path]:
    """Write draws CSVs, the p-value summary and the histogram SVGs; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    summary = out / "summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sigma", "p_a", "p_b", "p_c"])
        for r in report.results:
            w.writerow([_g(r.sigma)] + [_g(p) for p in r.ks_pvalue])
    written.append(summary)
    for r in report.results:
        label = _sigma_label(r.sigma)
        path = out / f"euler_sigma_{label}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "b", "c", "xi_a", "xi_b", "xi_c"])
            for e, z in zip(r.euler, r.whitened):
                w.writerow([_g(v) for v in e] + [_g(v) for v in z])
        written.append(path)
        for j, name in enumerate(COORDS):
            svg = out / f"hist_sigma_{label}_{name}.svg"
            title = f"sigma={label} coordinate {name}: KS p={r.ks_pvalue[j]:.2f}"
            svg.write_text(_histogram_svg(r.whitened[:, j], title))
            written.append(svg)
    return written


def parse_sigma_grid(text: str) -> tuple:
    """``"0.1:0.9:0.1"`` (inclusive range) or a comma list ``"0.1,0.5"``."""
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        parts = [float(t) for t in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise DomainError("sigma range must be start:stop:step with step > 0")
        start, stop, step = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 12) for i in range(max(n, 0)))
    return tuple(float(t) for t in text.split(","))


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1))
