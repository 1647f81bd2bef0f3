import numpy as np
import pytest

from mvgp_cbf.moments import (GaussianScalar, GaussianVector, IndefiniteMatrix, JointGaussianTriple,
                              _dot_lambda, gaussian_dot_moments, psd_sqrt, quad_form_cov_with_x,
                              quad_form_moments)


def random_triple(rng, d):
    R = rng.standard_normal((3 * d, 3 * d))
    S = R @ R.T / (3 * d)
    mu = rng.standard_normal(3 * d)
    blk = lambda i, j: S[i * d:(i + 1) * d, j * d:(j + 1) * d]  # noqa: E731
    return JointGaussianTriple(
        GaussianVector(mu[:d], blk(0, 0)), GaussianVector(mu[d:2 * d], blk(1, 1)),
        GaussianVector(mu[2 * d:], blk(2, 2)), blk(0, 1), blk(1, 2), blk(2, 0)), mu, S


def mc_mean_var(samples):
    n = samples.size
    m, v = samples.mean(), samples.var()
    se_m = np.sqrt(v / n)
    se_v = np.sqrt(max(np.mean((samples - m) ** 4) - v * v, 0.0) / n)
    return m, v, se_m, se_v


def test_quad_form_identity_case():
    assert quad_form_moments(np.zeros(3), np.eye(3), np.eye(3)) == (3.0, 6.0)


def test_quad_form_deterministic_input():
    mean, var = quad_form_moments([1.0, 0.0], np.zeros((2, 2)), np.eye(2))
    assert mean == 1.0 and var == 0.0


def test_quad_form_rejects_bad_input():
    with pytest.raises(ValueError):
        quad_form_moments(np.zeros(2), np.eye(3), np.eye(2))
    L = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError, match="symmetric"):
        quad_form_moments(np.zeros(2), np.eye(2), L)


def test_cov_with_x_examples():
    np.testing.assert_array_equal(quad_form_cov_with_x(np.zeros(2), np.eye(2), np.eye(2)), 0.0)
    np.testing.assert_allclose(quad_form_cov_with_x([1.0, 2.0], np.eye(2), np.eye(2)), [2.0, 4.0])


@pytest.mark.parametrize("seed", range(3))
def test_quad_form_against_sampling(seed):
    rng = np.random.default_rng(seed)
    d = 4
    R = rng.standard_normal((d, d))
    Sigma = R @ R.T / d
    Lh = rng.standard_normal((d, d))
    Lam = 0.5 * (Lh + Lh.T)
    xbar = rng.standard_normal(d)
    x = rng.multivariate_normal(xbar, Sigma, size=400_000)
    q = np.einsum("ni,ij,nj->n", x, Lam, x)
    m, v, se_m, se_v = mc_mean_var(q)
    mean, var = quad_form_moments(xbar, Sigma, Lam)
    assert abs(mean - m) < 4 * se_m
    assert abs(var - v) < 4 * se_v
    c = quad_form_cov_with_x(xbar, Sigma, Lam)
    xc = x - x.mean(0)
    emp = (xc * (q - q.mean())[:, None]).mean(0)
    se = (xc * (q - q.mean())[:, None]).std(0) / np.sqrt(len(q))
    assert np.all(np.abs(c - emp) < 4 * se)


def test_dot_moments_zero_case():
    d = 2
    z = GaussianVector(np.zeros(d), np.eye(d))
    j = JointGaussianTriple(z, z, z, np.zeros((d, d)), np.zeros((d, d)), np.zeros((d, d)))
    mean, var, cx, cy, cz = gaussian_dot_moments(j)
    assert mean == 0.0
    np.testing.assert_array_equal(cx, 0.0)


def test_dot_moments_deterministic_x():
    rng = np.random.default_rng(1)
    xbar = rng.standard_normal(3)
    R = rng.standard_normal((3, 3))
    Vy = R @ R.T
    zero = np.zeros((3, 3))
    j = JointGaussianTriple(GaussianVector(xbar, zero), GaussianVector(rng.standard_normal(3), Vy),
                            GaussianVector(np.zeros(3), np.eye(3)), zero, zero, zero)
    mean, var, *_ = gaussian_dot_moments(j)
    assert mean == pytest.approx(xbar @ j.y.mean, abs=1e-14)
    assert var == pytest.approx(xbar @ Vy @ xbar, rel=1e-12)


def test_dot_moments_closed_forms_and_delegation():
    rng = np.random.default_rng(2)
    j, mu, S = random_triple(rng, 3)
    mean, var, cx, cy, cz = gaussian_dot_moments(j)
    xb, yb = j.x.mean, j.y.mean
    assert mean == pytest.approx(xb @ yb + np.trace(j.cov_xy), abs=1e-12)
    np.testing.assert_allclose(cx, j.cov_xy @ xb * 0 + j.cov_xy @ yb * 0 + j.x.cov @ yb + j.cov_xy @ xb,
                               atol=1e-12)
    np.testing.assert_allclose(cy, j.y.cov @ xb + j.cov_xy.T @ yb, atol=1e-12)
    np.testing.assert_allclose(cz, j.cov_yz.T @ xb + j.cov_zx @ yb, atol=1e-12)
    s = j.stacked()
    assert (mean, var) == quad_form_moments(s.mean, s.cov, _dot_lambda(3))


def test_dot_moments_swap_symmetry():
    rng = np.random.default_rng(3)
    j, _, _ = random_triple(rng, 2)
    sw = JointGaussianTriple(j.y, j.x, j.z, j.cov_xy.T, j.cov_zx.T, j.cov_yz.T)
    a, b = gaussian_dot_moments(j), gaussian_dot_moments(sw)
    assert a[0] == pytest.approx(b[0], abs=1e-12)
    assert a[1] == pytest.approx(b[1], rel=1e-12)


@pytest.mark.parametrize("d", [1, 2, 4])
def test_dot_moments_against_sampling(d):
    rng = np.random.default_rng(10 + d)
    j, mu, S = random_triple(rng, d)
    w = rng.multivariate_normal(mu, S, size=400_000)
    x, y, z = w[:, :d], w[:, d:2 * d], w[:, 2 * d:]
    p = np.einsum("ni,ni->n", x, y)
    m, v, se_m, se_v = mc_mean_var(p)
    mean, var, cx, cy, cz = gaussian_dot_moments(j)
    assert abs(mean - m) < 4 * se_m
    assert abs(var - v) < 4 * se_v
    pc = p - p.mean()
    for est, vec in ((cx, x), (cy, y), (cz, z)):
        prod = (vec - vec.mean(0)) * pc[:, None]
        se = prod.std(0) / np.sqrt(len(p))
        assert np.all(np.abs(est - prod.mean(0)) < 4 * se)


def test_gaussian_types_validate():
    with pytest.raises(ValueError):
        GaussianScalar(0.0, -1.0)
    with pytest.raises(IndefiniteMatrix):
        GaussianVector(np.zeros(2), np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        GaussianVector(np.zeros(2), np.array([[1.0, 0.2], [0.0, 1.0]]))
    assert GaussianScalar(1.0, 4.0).std == 2.0


def test_psd_sqrt_examples():
    L = psd_sqrt(np.eye(3))
    np.testing.assert_allclose(np.abs(L), np.eye(3)[:, ::-1] if abs(L[0, 0]) < 0.5 else np.eye(3), atol=1e-15)
    L = psd_sqrt(np.diag([4.0, 9.0]))
    np.testing.assert_allclose(np.sort(np.abs(L).sum(0)), [2.0, 3.0])


def test_psd_sqrt_reconstruction_and_errors():
    rng = np.random.default_rng(4)
    R = rng.standard_normal((5, 3))
    M = R @ R.T
    L = psd_sqrt(M)
    assert np.linalg.norm(L @ L.T - M) <= 1e-8 * max(1.0, np.linalg.norm(M))
    with pytest.raises(IndefiniteMatrix):
        psd_sqrt(np.diag([1.0, -0.1]))
    L = psd_sqrt(np.diag([1.0, -1e-12]))
    np.testing.assert_allclose(L @ L.T, np.diag([1.0, 0.0]), atol=1e-15)
