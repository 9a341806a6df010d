import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, strategies as st

from orbitkit import matdecomp as md
from orbitkit.errors import (
    CutLocus,
    DegenerateProjection,
    NotComplexSymmetric,
    NotPositiveDefinite,
    NotSkewSymmetric,
    NotSymmetric,
    SingularInput,
)

seeds = st.integers(0, 2**32 - 1)


def rel(a, b):
    return np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    return q if np.linalg.det(q) > 0 else -q


# -- sym_sqrt ----------------------------------------------------------------


def test_sym_sqrt_diagonal_and_identity():
    np.testing.assert_allclose(md.sym_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)
    np.testing.assert_allclose(md.sym_sqrt(np.eye(3)), np.eye(3), atol=1e-15)


@given(seeds, st.integers(1, 6))
def test_sym_sqrt_squares_back(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    m = a.T @ a + np.eye(n)
    r = md.sym_sqrt(m)
    assert np.allclose(r, r.T, atol=0)
    assert np.linalg.eigvalsh(r).min() > 0
    assert np.linalg.norm(r @ r - m) / np.linalg.norm(m) < 1e-10
    np.testing.assert_allclose(
        np.sort(np.linalg.eigvalsh(r)), np.sqrt(np.sort(np.linalg.eigvalsh(m))), atol=1e-9
    )


def test_sym_sqrt_errors():
    with pytest.raises(NotSymmetric):
        md.sym_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotPositiveDefinite):
        md.sym_sqrt(np.diag([1.0, -1.0]))
    with pytest.raises(NotPositiveDefinite):
        md.sym_sqrt(np.diag([1.0, 0.0]))


# -- polar -------------------------------------------------------------------


def test_polar_trivial_cases(rng):
    q = random_rotation(rng)
    g, p = md.polar(q)
    np.testing.assert_allclose(g, q, atol=1e-14)
    np.testing.assert_allclose(p, np.eye(3), atol=1e-14)
    g, p = md.polar(np.diag([2.0, 3.0]))
    np.testing.assert_allclose(g, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(p, np.diag([2.0, 3.0]), atol=1e-15)


@given(seeds, st.integers(1, 5))
def test_polar_against_sqrt_oracle(seed, n):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n)) + 0.1 * np.eye(n)
    if abs(np.linalg.det(m)) < 1e-6:
        return
    g, p = md.polar(m)
    oracle = m @ np.linalg.inv(md.sym_sqrt(m.T @ m))
    assert rel(g, oracle) < 1e-9
    assert np.linalg.norm(g.T @ g - np.eye(n)) < 1e-10
    assert rel(g @ p, m) < 1e-10
    assert np.linalg.eigvalsh(p).min() > 0


def test_polar_singular():
    with pytest.raises(SingularInput):
        md.polar(np.array([[1.0, 2.0], [2.0, 4.0]]))


# -- nearest rotation ----------------------------------------------------------


def test_project_so3_fixed_point_and_scaling(rng):
    r = random_rotation(rng)
    np.testing.assert_allclose(md.project_special_orthogonal(r), r, atol=1e-14)
    np.testing.assert_allclose(md.project_special_orthogonal(2.7 * r), r, atol=1e-14)


def _brute_force_rotation(m):
    # coarse axis-angle grid over the ball of radius pi, then local polish
    t = np.linspace(-np.pi, np.pi, 41)
    w = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3)
    w = w[np.linalg.norm(w, axis=1) <= np.pi]
    th = np.linalg.norm(w, axis=1)
    k = np.zeros((len(w), 3, 3))
    k[:, 0, 1], k[:, 0, 2], k[:, 1, 2] = -w[:, 2], w[:, 1], -w[:, 0]
    k = k - k.transpose(0, 2, 1)
    safe = np.where(th > 0, th, 1.0)
    a = np.where(th > 0, np.sin(safe) / safe, 1.0)
    b = np.where(th > 0, (1 - np.cos(safe)) / safe**2, 0.5)
    r = np.eye(3) + a[:, None, None] * k + b[:, None, None] * (k @ k)
    best = w[np.argmin(np.linalg.norm(r - m, axis=(1, 2)))]
    res = scipy.optimize.minimize(
        lambda v: np.linalg.norm(md.so3_exp(v) - m) ** 2, best, method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-14, "maxiter": 4000},
    )
    return md.so3_exp(res.x)


def test_project_so3_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(5):
        m = rng.standard_normal((3, 3))
        r = md.project_special_orthogonal(m)
        oracle = _brute_force_rotation(m)
        assert np.linalg.norm(r - oracle) < 1e-3
        assert np.linalg.norm(m - r) <= np.linalg.norm(m - oracle) + 1e-9


@given(seeds, st.floats(0.01, 100.0))
def test_project_so3_positive_scaling_invariance(seed, s):
    m = np.random.default_rng(seed).standard_normal((3, 3))
    try:
        r = md.project_special_orthogonal(m)
    except DegenerateProjection:
        return
    np.testing.assert_allclose(md.project_special_orthogonal(s * m), r, atol=1e-12)


def test_project_so3_degenerate():
    with pytest.raises(DegenerateProjection):
        md.project_special_orthogonal(np.zeros((3, 3)))
    # det(uv') = -1 with sigma_2 = sigma_3: two nearest rotations
    with pytest.raises(DegenerateProjection):
        md.project_special_orthogonal(np.diag([1.0, 1.0, -1.0]))


# -- Takagi ----------------------------------------------------------------------


def test_takagi_real_diagonal():
    d = np.diag([3.0, 2.0, 0.5])
    g, s = md.takagi(d)
    np.testing.assert_allclose(s, [3.0, 2.0, 0.5])
    np.testing.assert_allclose(np.abs(g), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(g @ np.diag(s) @ g.T, d, atol=1e-14)


def test_takagi_i_identity():
    g, s = md.takagi(1j * np.eye(2))
    np.testing.assert_allclose(s, [1.0, 1.0])
    np.testing.assert_allclose(g @ g.T, 1j * np.eye(2), atol=1e-14)


@given(seeds, st.integers(1, 6))
def test_takagi_reconstructs(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    m = a + a.T
    g, s = md.takagi(m)
    assert np.linalg.norm(g @ np.diag(s) @ g.T - m) / max(1, np.linalg.norm(m)) < 1e-9
    assert np.linalg.norm(g.conj().T @ g - np.eye(n)) < 1e-10
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)


def test_takagi_errors():
    with pytest.raises(NotComplexSymmetric):
        md.takagi(np.array([[1, 1j], [-1j, 1]]))
    with pytest.raises(SingularInput):
        md.takagi(np.diag([1.0 + 0j, 0.0]))
    g, s = md.takagi(np.diag([1.0 + 0j, 0.0]), allow_singular=True)
    np.testing.assert_allclose(g @ np.diag(s) @ g.T, np.diag([1.0, 0.0]), atol=1e-15)


# -- skew canonical form -----------------------------------------------------------


def test_skew_canonical_standard_structure():
    for n in (1, 2, 3):
        z, i = np.zeros((n, n)), np.eye(n)
        theta = np.block([[z, -i], [i, z]])
        g, alpha = md.skew_canonical(theta)
        a = md.skew_block_values(alpha)
        np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
        assert np.linalg.norm(g.T @ theta @ g - alpha) < 1e-10
        assert abs(np.linalg.det(g) - 1) < 1e-12


def test_skew_canonical_zero():
    g, alpha = md.skew_canonical(np.zeros((4, 4)))
    np.testing.assert_allclose(alpha, 0.0)
    assert abs(np.linalg.det(g) - 1) < 1e-12
    assert np.linalg.norm(g.T @ g - np.eye(4)) < 1e-12


@given(seeds, st.integers(1, 4))
def test_skew_canonical_reconstructs(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2 * n, 2 * n))
    m = a - a.T
    g, alpha = md.skew_canonical(m)
    assert np.linalg.norm(g.T @ m @ g - alpha) < 1e-10
    assert abs(np.linalg.det(g) - 1) < 1e-10
    vals = md.skew_block_values(alpha)
    # blocks descending in magnitude, nonnegative except possibly the last
    assert np.all(np.diff(np.abs(vals)) <= 1e-12)
    assert np.all(vals[:-1] >= 0)
    sv = np.linalg.svd(m, compute_uv=False)
    np.testing.assert_allclose(np.sort(np.repeat(np.abs(vals), 2)), np.sort(sv), atol=1e-9)


def test_skew_canonical_pfaffian_sign_goes_to_last_block():
    m = np.zeros((4, 4))
    m[0, 2], m[2, 0] = -2.0, 2.0
    m[1, 3], m[3, 1] = -1.0, 1.0
    g, alpha = md.skew_canonical(m)
    a = md.skew_block_values(alpha)
    pf = m[0, 1] * m[2, 3] - m[0, 2] * m[1, 3] + m[0, 3] * m[1, 2]
    assert np.sign(np.prod(a)) == np.sign(pf)
    np.testing.assert_allclose(np.abs(a), [2.0, 1.0], atol=1e-12)


def test_skew_canonical_rejects_nonskew():
    with pytest.raises(NotSkewSymmetric):
        md.skew_canonical(np.eye(2))


# -- SO(3) exp / log ----------------------------------------------------------------


def test_so3_exp_axis_case():
    r = md.so3_exp([0, 0, np.pi / 2])
    np.testing.assert_allclose(r, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
    np.testing.assert_array_equal(md.so3_exp(np.zeros(3)), np.eye(3))


@given(seeds, st.floats(0.0, 3.0))
def test_so3_round_trip(seed, t):
    v = np.random.default_rng(seed).standard_normal(3)
    w = t * v / np.linalg.norm(v)
    r = md.so3_exp(w)
    assert md.is_rotation(r, 1e-12)
    np.testing.assert_allclose(md.so3_log(r), w, atol=1e-12)
    np.testing.assert_allclose(r @ md.so3_exp(-w), np.eye(3), atol=1e-14)


def test_so3_log_near_pi():
    rng = np.random.default_rng(3)
    for t in (np.pi - 1e-3, np.pi - 1e-4):
        v = rng.standard_normal(3)
        w = t * v / np.linalg.norm(v)
        np.testing.assert_allclose(md.so3_log(md.so3_exp(w)), w, atol=1e-7)


def test_so3_log_cut_locus():
    with pytest.raises(CutLocus):
        md.so3_log(np.diag([1.0, -1.0, -1.0]))


# -- reconstruction over many random inputs --------------------------------------------


def test_reconstruction_residuals_bulk():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        a = rng.standard_normal((3, 3))
        spd = a.T @ a + 0.1 * np.eye(3)
        r = md.sym_sqrt(spd)
        worst = max(worst, rel(r @ r, spd))
        g, p = md.polar(a)
        worst = max(worst, rel(g @ p, a))
        c = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        c = c + c.T
        u, s = md.takagi(c)
        worst = max(worst, rel(u @ np.diag(s) @ u.T, c))
        k = rng.standard_normal((4, 4))
        k = k - k.T
        q, alpha = md.skew_canonical(k)
        worst = max(worst, rel(q @ alpha @ q.T, k))
        sd = md.spectral(spd)
        worst = max(worst, rel(sd.reconstruct(), spd))
        sv = md.svd(a)
        worst = max(worst, rel(sv.reconstruct(), a))
    assert worst < 1e-9


# -- CSV ------------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.standard_normal((3, 2))
    c = m + 1j * rng.standard_normal((3, 2))
    for arr in (m, c):
        path = tmp_path / "m.csv"
        md.write_matrix_csv(path, arr)
        back = md.read_matrix_csv(path)
        np.testing.assert_array_equal(back, arr)
    assert md.matrix_to_csv(np.array([[1 + 2j, -0.5 - 1j]])) == "1+2j,-0.5-1j\n"
