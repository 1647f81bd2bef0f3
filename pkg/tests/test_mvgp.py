import numpy as np
import pytest
from conftest import pendulum_F, random_model, random_params
from oracles import dense_posterior, model_vec

from mvgp_cbf.kernels import MatrixKernelParams, RbfKernel
from mvgp_cbf.mvgp import (Dataset, DatasetFormatError, MVGPModel, condition, factor_gram, predict_F,
                           predict_Fu, variance_weighted_error, zero_mean)


def linear_mean(x):
    return np.array([[0.2 * x[1], 1.0], [-np.sin(x[0]), 0.5]])


@pytest.mark.parametrize("seed", range(4))
def test_posterior_matches_dense_schur_oracle(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, k=3, mean_fn=linear_mean)
    probes = rng.uniform(-1.5, 1.5, (5, 2))
    mean, cov = dense_posterior(model, probes)
    m2, c2 = model_vec(model, probes)
    np.testing.assert_allclose(m2, mean, atol=1e-8)
    np.testing.assert_allclose(c2, cov, atol=1e-8)


def test_empty_data_gives_prior(rng):
    prior = random_model(rng, k=0, mean_fn=linear_mean)
    post = condition(prior, Dataset.empty(2, 1))
    for x in rng.standard_normal((5, 2)):
        np.testing.assert_array_equal(post.mean(x), linear_mean(x))
        np.testing.assert_array_equal(post.cov(x, x), prior.params.B * prior.kernel.k0(x, x))


def test_huge_noise_leaves_prior_mean(rng):
    kern = RbfKernel.from_lengthscales(1.0, [1.0, 1.0])
    params = random_params(rng, 2, 1, sigma=1e6)
    prior = MVGPModel.prior(linear_mean, kern, params)
    X = rng.standard_normal((3, 2))
    post = condition(prior, Dataset(X, rng.standard_normal((3, 1)), rng.standard_normal((3, 2))))
    for x in rng.standard_normal((10, 2)):
        assert np.linalg.norm(post.mean(x) - linear_mean(x)) <= 1e-3


def test_interpolates_training_data(rng):
    kern = RbfKernel.from_lengthscales(1.0, [0.8, 0.8])
    params = MatrixKernelParams(np.eye(2), np.zeros(2), np.eye(2), 1e-4)
    X = rng.uniform(-1, 1, (6, 2))
    U = rng.uniform(-2, 2, (6, 1))
    Xd = np.stack([pendulum_F(X[i]) @ np.r_[1.0, U[i]] for i in range(6)])
    post = condition(MVGPModel.prior(zero_mean(2, 1), kern, params), Dataset(X, U, Xd))
    for i in range(6):
        assert np.linalg.norm(post.mean(X[i]) @ np.r_[1.0, U[i]] - Xd[i]) <= 1e-2


def test_conditioning_never_inflates_variance(rng):
    model = random_model(rng, k=5)
    for x in rng.uniform(-1, 1, (10, 2)):
        gap = model.params.B * model.kernel.k0(x, x) - model.cov(x, x)
        assert np.linalg.eigvalsh(0.5 * (gap + gap.T)).min() >= -1e-8


def test_predict_F_and_Fu(rng):
    prior = MVGPModel.prior(zero_mean(2, 1), RbfKernel.from_lengthscales(1.0, [1.0, 1.0]),
                            random_params(rng, 2, 1))
    M, _, _ = predict_F(prior, [0.2, 0.3])
    np.testing.assert_array_equal(M, 0.0)
    model = random_model(rng, k=5)
    x, u = rng.standard_normal(2), rng.standard_normal(1)
    M, Bxx, A = predict_F(model, x)
    np.testing.assert_allclose(Bxx, Bxx.T, atol=0)
    g = predict_Fu(model, x, u)
    ub = np.r_[1.0, u]
    # contract vec F with (ubar^T kron I)
    H = np.kron(ub[None, :], np.eye(2))
    np.testing.assert_allclose(g.mean, H @ M.reshape(-1, order="F"), atol=1e-12)
    np.testing.assert_allclose(g.cov, H @ np.kron(Bxx, A) @ H.T, atol=1e-12)
    s = float(ub @ Bxx @ ub)
    assert s >= 0
    np.testing.assert_allclose(g.cov, s * A, atol=1e-12)


def test_zero_row_covariance_gives_zero_prediction_cov(rng):
    kern = RbfKernel.from_lengthscales(1.0, [1.0, 1.0])
    params = MatrixKernelParams(np.zeros((2, 0)), np.zeros(2), np.eye(2), 0.1)
    model = MVGPModel.prior(zero_mean(2, 1), kern, params)
    np.testing.assert_array_equal(predict_Fu(model, [0.1, 0.2], [3.0]).cov, 0.0)


def test_variance_weighted_error(rng):
    model = random_model(rng, k=4)
    X = rng.standard_normal((3, 2))
    exact = [model.mean(x) for x in X]
    assert variance_weighted_error(model, X, exact) == 0.0
    F = [rng.standard_normal((2, 2)) for _ in X]
    total = 0.0
    for x, Ft in zip(X, F):
        r = (model.mean(x) - Ft).reshape(-1, order="F")
        K = np.kron(model.cov(x, x), model.params.A)
        total += r @ np.linalg.solve(0.5 * (K + K.T), r)
    assert variance_weighted_error(model, X, F) == pytest.approx(np.sqrt(total / 3), rel=1e-10)
    # identity covariance reduces to plain RMS Frobenius error
    kern = RbfKernel.from_lengthscales(1.0, [1.0, 1.0])
    unit = MVGPModel.prior(zero_mean(2, 1), kern, MatrixKernelParams(np.zeros((2, 0)), np.ones(2), np.eye(2), 0.1))
    rms = np.sqrt(np.mean([np.sum(f**2) for f in F]))
    assert variance_weighted_error(unit, X, F) == pytest.approx(rms, rel=1e-12)
    with pytest.raises(ValueError):
        variance_weighted_error(model, np.zeros((0, 2)), [])


def test_jitter_ladder_handles_duplicates():
    G = np.ones((3, 3))
    c, _ = factor_gram(G)
    assert np.all(np.isfinite(c))
    with pytest.raises(np.linalg.LinAlgError):
        factor_gram(-np.eye(3))


def test_duplicate_training_points_condition(rng):
    kern = RbfKernel.from_lengthscales(1.0, [1.0, 1.0])
    params = MatrixKernelParams(np.eye(2), np.zeros(2), np.eye(2), 1e-9)
    X = np.array([[0.1, 0.2]] * 3)
    post = condition(MVGPModel.prior(zero_mean(2, 1), kern, params),
                     Dataset(X, np.ones((3, 1)), np.ones((3, 2))))
    assert np.all(np.isfinite(post.mean([0.0, 0.0])))


def test_dataset_validation_and_csv(tmp_path, rng):
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros((2, 1)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros((3, 1)), np.zeros((3, 3)))
    d = Dataset(rng.standard_normal((4, 2)), rng.standard_normal((4, 1)), rng.standard_normal((4, 2)))
    p = tmp_path / "d.csv"
    d.to_csv(p, t=np.arange(4) * 0.01)
    back, t = Dataset.from_csv(p)
    np.testing.assert_array_equal(back.X, d.X)
    np.testing.assert_array_equal(back.U, d.U)
    np.testing.assert_array_equal(back.Xdot, d.Xdot)
    np.testing.assert_array_equal(t, np.arange(4) * 0.01)
    lines = p.read_text().splitlines()
    lines[3] = lines[3].replace(",", ",oops,", 1)
    p.write_text("\n".join(lines))
    with pytest.raises(DatasetFormatError, match=":4:"):
        Dataset.from_csv(p)
    p.write_text("t,x1,u1,xdot2\n")
    with pytest.raises(DatasetFormatError, match=":1:"):
        Dataset.from_csv(p)
    p.write_text("t,x1,u1,xdot1\n0,1,2,bad\n")
    with pytest.raises(DatasetFormatError, match=":2:"):
        Dataset.from_csv(p)


def test_dimension_mismatch_rejected(rng):
    prior = random_model(rng, k=0)
    with pytest.raises(ValueError):
        condition(prior, Dataset(np.zeros((2, 3)), np.zeros((2, 1)), np.zeros((2, 3))))
