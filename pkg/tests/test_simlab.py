import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, strategies as st

from orbitkit import simlab as sl
from orbitkit.errors import DomainError, TooFewSamples
from orbitkit.sphere_geom import rotation_from_euler


def small(**kw):
    base = dict(k=30, n_draws=40, sigma_grid=(0.1, 0.3), master_seed=7)
    base.update(kw)
    return sl.SimulationConfig(**base)


def test_config_validation():
    with pytest.raises(DomainError):
        sl.SimulationConfig(k=2)
    with pytest.raises(DomainError):
        sl.SimulationConfig(n_draws=1)
    with pytest.raises(DomainError):
        sl.SimulationConfig(sigma_grid=(0.1, 0.0))
    with pytest.raises(DomainError):
        sl.SimulationConfig(design_policy="sometimes")
    with pytest.raises(DomainError):
        sl.SimulationConfig(true_gamma=np.diag([1.0, 1.0, -1.0]))
    assert sl.SimulationConfig().sigma_grid == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def test_parse_sigma_grid():
    assert sl.parse_sigma_grid("0.1:0.9:0.1") == sl.SimulationConfig().sigma_grid
    assert sl.parse_sigma_grid("0.2,0.5") == (0.2, 0.5)
    assert sl.parse_sigma_grid("") == ()
    with pytest.raises(DomainError):
        sl.parse_sigma_grid("0.1:0.9")


# -- data generation -----------------------------------------------------------


def test_generate_draw_deterministic():
    cfg = small()
    a, b = sl.generate_draw(cfg, 0.3, 5), sl.generate_draw(cfg, 0.3, 5)
    assert a.observations.tobytes() == b.observations.tobytes()
    assert a.design.tobytes() == b.design.tobytes()
    c = sl.generate_draw(cfg, 0.3, 6)
    assert not np.array_equal(a.observations, c.observations)
    np.testing.assert_array_equal(a.design, c.design)
    r1 = sl.generate_draw(small(design_policy="redrawn_per_draw"), 0.3, 5)
    r2 = sl.generate_draw(small(design_policy="redrawn_per_draw"), 0.3, 6)
    assert not np.array_equal(r1.design, r2.design)


def test_zero_noise_is_exact():
    cfg = small()
    d = sl.generate_draw(cfg, 0.0, 0)
    np.testing.assert_allclose(d.observations, d.design @ cfg.true_gamma.T, atol=1e-15)


def test_concentration_decreases_with_sigma():
    cfg = small(k=100)
    means = []
    for s in (0.01, 0.1, 0.3, 0.6, 0.9):
        vals = [np.mean(np.einsum("ij,ij->i", d.observations, d.design @ cfg.true_gamma.T))
                for d in (sl.generate_draw(cfg, s, i) for i in range(20))]
        means.append(np.mean(vals))
    assert means[0] > 0.999 and np.all(np.diff(means) < 0)


# -- KS ------------------------------------------------------------------------


def test_ks_examples():
    assert sl.ks_statistic([-1.0, 1.0]) == pytest.approx(scipy.stats.norm.cdf(1) - 0.5, abs=1e-15)
    d, p = sl.ks_test_normal(np.zeros(50))
    assert d == pytest.approx(0.5) and p < 1e-10
    with pytest.raises(TooFewSamples):
        sl.ks_test_normal(np.zeros(7))


@pytest.mark.parametrize("t", [0.2, 0.5, 0.8, 0.99, 1.0, 1.36, 2.0, 3.0])
def test_kolmogorov_sf_against_scipy(t):
    assert sl.kolmogorov_sf(t) == pytest.approx(scipy.stats.kstwobign.sf(t), abs=1e-9)


@given(st.integers(0, 2**32 - 1), st.integers(8, 500))
def test_ks_statistic_against_scipy(seed, n):
    x = np.random.default_rng(seed).standard_normal(n) * 1.3 + 0.2
    d, _ = sl.ks_test_normal(x)
    assert d == pytest.approx(scipy.stats.kstest(x, "norm").statistic, abs=1e-14)


def test_ks_calibration():
    rng = np.random.default_rng(17)
    p = np.array([sl.ks_test_normal(rng.standard_normal(1000))[1] for _ in range(200)])
    assert abs(np.mean(p < 0.05) - 0.05) <= 0.03


# -- statistics ----------------------------------------------------------------


def test_whitening_identities():
    rng = np.random.default_rng(2)
    e = np.array([1.0, 2.0, 6.2]) + rng.standard_normal((300, 3)) @ np.array(
        [[0.1, 0, 0], [0.05, 0.2, 0], [0, 0.1, 0.15]]
    )
    mean, cov, chol, xi = sl.angle_statistics(np.mod(e, 2 * np.pi))
    assert np.max(np.abs(xi.mean(axis=0))) < 1e-10
    assert np.max(np.abs(xi.T @ xi / (len(xi) - 1) - np.eye(3))) < 1e-8
    np.testing.assert_allclose(chol @ chol.T, cov, atol=1e-15)
    assert np.all(np.triu(chol, 1) == 0)
    # the third angle straddles 2 pi; wrap-aware mean lands near 6.2 mod 2 pi
    assert abs(math.remainder(mean[2] - 6.2, 2 * math.pi)) < 0.05
    with pytest.raises(TooFewSamples):
        sl.angle_statistics(e[:3])


def test_small_noise_normality():
    cfg = sl.SimulationConfig(k=100, n_draws=100, sigma_grid=(0.01,), master_seed=3)
    r = sl.run_sigma(cfg, 0.01)
    assert r.failures == 0
    assert np.all(r.ks_pvalue > 0.01)


def test_run_simulation_deterministic_and_parallel():
    cfg = small()
    a = sl.run_simulation(cfg)
    b = sl.run_simulation(cfg, workers=4)
    for ra, rb in zip(a.results, b.results):
        assert ra.euler.tobytes() == rb.euler.tobytes()
        assert ra.ks_pvalue.tobytes() == rb.ks_pvalue.tobytes()
    assert a.total_failures == 0 and a.pvalues().shape == (2, 3)
    seen = []
    sl.run_simulation(cfg, progress=seen.append)
    assert [r.sigma for r in seen] == [0.1, 0.3]


def test_monotone_dispersion():
    cfg = sl.SimulationConfig(k=50, n_draws=100, sigma_grid=(0.1, 0.3, 0.5, 0.7, 0.9), master_seed=5)
    tr = [np.trace(r.covariance) for r in sl.run_simulation(cfg).results]
    assert all(tr[i + 1] >= 0.95 * tr[i] for i in range(len(tr) - 1))


def test_identity_truth_is_gimbal_locked():
    cfg = small(true_gamma=np.eye(3))
    r = sl.run_sigma(cfg, 0.1)
    # near b = 0 the first and third angles are not separately identified
    assert np.trace(r.covariance) > 1.0


@pytest.mark.slow
def test_covariance_fluctuation_clt_scaling():
    def frob_norms(n_draws, reps=40):
        out = []
        for rep in range(reps):
            cfg = sl.SimulationConfig(k=30, n_draws=n_draws, sigma_grid=(0.3,), master_seed=1000 + rep)
            out.append(np.linalg.norm(sl.run_sigma(cfg, 0.3).covariance))
        return np.std(out, ddof=1)

    ratio = frob_norms(50) / frob_norms(100)
    assert 1.1 < ratio < 1.9


# -- artifacts -------------------------------------------------------------------


def test_empty_grid_header_only(tmp_path):
    report = sl.SimulationReport(small(), ())
    files = sl.emit_artifacts(report, tmp_path)
    assert [f.name for f in files] == ["summary.csv"]
    assert (tmp_path / "summary.csv").read_text() == "sigma,p_a,p_b,p_c\n"


def test_artifacts_counts_and_bytes(tmp_path):
    cfg = small()
    files = sl.emit_artifacts(sl.run_simulation(cfg), tmp_path / "a")
    again = sl.emit_artifacts(sl.run_simulation(cfg), tmp_path / "b")
    assert len(files) == 1 + 2 * (1 + 3)
    assert len([f for f in files if f.suffix == ".svg"]) == 6
    for f, g in zip(files, again):
        assert f.name == g.name and f.read_bytes() == g.read_bytes()
    rows = (tmp_path / "a" / "euler_sigma_0.1.csv").read_text().splitlines()
    assert rows[0] == "a,b,c,xi_a,xi_b,xi_c" and len(rows) == 41
    svg = (tmp_path / "a" / "hist_sigma_0.3_b.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<rect") >= 20
