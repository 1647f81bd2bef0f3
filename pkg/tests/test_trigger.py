import math

import numpy as np
import pytest
from conftest import random_model

from mvgp_cbf.kernels import MatrixKernelParams, RbfKernel
from mvgp_cbf.lie import BarrierSpec
from mvgp_cbf.mvgp import Dataset, MVGPModel, condition, zero_mean
from mvgp_cbf.systems import PendulumParams, pendulum_barrier
from mvgp_cbf.trigger import (LipschitzMode, RegionBox, grad_h_bound, lipschitz_analytic, lipschitz_numeric,
                              state_deviation_bound, tau_rd1, tau_rdr)


def test_region_box():
    r = RegionBox([0.0, 1.0], [0.5, 0.25])
    g = r.grid(3)
    assert g.shape == (9, 2)
    np.testing.assert_allclose(g[0], [-0.5, 0.75])
    np.testing.assert_allclose(g[1], [-0.5, 1.0])
    np.testing.assert_allclose(r.spacing(3), [0.5, 0.25])
    assert r.diameter == pytest.approx(2 * math.hypot(0.5, 0.25))
    with pytest.raises(ValueError):
        RegionBox([0.0], [0.0])
    with pytest.raises(ValueError):
        RegionBox(np.zeros(5), 1.0).grid(7)
    with pytest.raises(ValueError):
        r.grid(1)


def test_deviation_bound():
    assert state_deviation_bound(2.0, 1.5, 0.0) == 0.0
    assert state_deviation_bound(1.0, 1.0, 1.0) == pytest.approx(math.e - 1, abs=1e-14)
    assert state_deviation_bound(3.0, 0.0, 0.5) == 1.5
    assert state_deviation_bound(3.0, 1e-12, 0.5) == pytest.approx(1.5, rel=1e-9)
    with pytest.raises(ValueError):
        state_deviation_bound(1.0, -1.0, 1.0)


def test_tau_examples():
    assert tau_rd1(1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx(math.log(1.5), abs=1e-14)
    assert tau_rdr(2.0, 1.0, 1.0, 1.0) == pytest.approx(0.5 * math.log(3.0), abs=1e-14)
    assert tau_rd1(1.0, 1.0, 1.0, 0.0, 1.0) == 0.0
    assert tau_rdr(2.0, 1.0, 0.0, 1.0) == 0.0
    assert tau_rd1(1.0, 1.0, 1.0, 1.0, 0.0) == math.inf
    assert tau_rdr(1.0, 1.0, 1.0, 0.0) == math.inf
    with pytest.raises(ValueError):
        tau_rd1(1.0, 1.0, 1.0, -1.0, 1.0)


def test_tau_monotonicity():
    zs = [tau_rd1(0.7, 2.0, 1.0, z, 1.5) for z in (0.01, 0.1, 1.0)]
    assert zs[0] < zs[1] < zs[2]
    vs = [tau_rd1(0.7, 2.0, 1.0, 0.1, v) for v in (0.5, 1.0, 2.0)]
    assert vs[0] > vs[1] > vs[2]


@pytest.mark.parametrize("L_f,L_h,zb,v", [(2.0, 1.0, 1.0, 1.0), (0.3, 4.0, 0.02, 2.5), (0.0, 1.0, 0.5, 2.0)])
def test_tau_is_inverse_of_deviation_bound(L_f, L_h, zb, v):
    tau = tau_rdr(L_f, L_h, zb, v)
    assert L_h * state_deviation_bound(v, L_f, tau) == pytest.approx(zb, rel=1e-12)
    tau1 = tau_rd1(L_f, L_h, 1.0, zb, v)
    assert (L_f + 1.0) * L_h * state_deviation_bound(v, L_f, tau1) == pytest.approx(zb, rel=1e-12)


def zero_model(n=2):
    kern = RbfKernel.from_lengthscales(1.0, np.ones(n))
    params = MatrixKernelParams(np.zeros((2, 0)), np.zeros(2), np.eye(n), 0.1)
    return MVGPModel.prior(zero_mean(n, 1), kern, params)


def test_zero_model_gives_zero():
    region = RegionBox([0.0, 0.0], [0.1, 0.1])
    a = lipschitz_analytic(zero_model(), [1.0], region, 1e-4)
    n = lipschitz_numeric(zero_model(), [1.0], region, samples=3)
    assert a.L_f == 0.0 and n.L_f == 0.0
    assert a.mode is LipschitzMode.ANALYTIC and n.mode is LipschitzMode.NUMERIC


def test_analytic_report_structure_and_delta(rng):
    model = random_model(rng, k=6)
    region = RegionBox([0.1, -0.2], [0.1, 0.1])
    hi = lipschitz_analytic(model, [0.5], region, 1e-2, grid=8)
    lo = lipschitz_analytic(model, [0.5], region, 1e-6, grid=8)
    assert hi.L_f == pytest.approx(math.sqrt(np.sum(hi.per_entry**2) / 4), rel=1e-14)
    assert np.all(lo.per_entry > hi.per_entry)
    with pytest.raises(ValueError):
        lipschitz_analytic(model, [0.5], region, 1.5)


def test_numeric_recovers_linear_mean():
    K = np.array([[0.5, -1.2], [2.0, 0.3]])
    kern = RbfKernel.from_lengthscales(1.0, [1.0, 1.0])
    params = MatrixKernelParams(np.zeros((2, 0)), np.full(2, 1e-12), np.eye(2), 0.1)

    def mean(x):
        return np.column_stack([K @ x, np.zeros(2)])

    model = MVGPModel.prior(mean, kern, params)
    rep = lipschitz_numeric(model, [0.0], RegionBox([0.3, 0.1], [0.2, 0.2]), samples=5)
    np.testing.assert_allclose(rep.per_entry, np.abs(K), rtol=0.1)


def test_numeric_is_deterministic(rng):
    model = random_model(rng, k=6)
    small = RegionBox([0.0, 0.0], [0.1, 0.1])
    a = lipschitz_numeric(model, [1.0], small, grid=9, samples=10, seed=4)
    b = lipschitz_numeric(model, [1.0], small, grid=9, samples=10, seed=4)
    assert a.L_f == b.L_f
    np.testing.assert_array_equal(a.per_entry, b.per_entry)


def test_numeric_monotone_in_region():
    kern = RbfKernel.from_lengthscales(1.0, [1.0, 1.0])
    params = MatrixKernelParams(np.zeros((2, 0)), np.full(2, 1e-14), np.eye(2), 0.1)

    def mean(x):
        return np.array([[x[1], 0.0], [-10 * np.sin(x[0]), 1.0]])

    model = MVGPModel.prior(mean, kern, params)
    prev = 0.0
    # equal spacing, so each grid contains the previous one
    for half, per_axis in ((0.1, 5), (0.2, 9), (0.4, 17), (0.8, 33)):
        rep = lipschitz_numeric(model, [0.0], RegionBox([0.6, 0.0], [half, half]), grid=per_axis,
                                samples=3, seed=4)
        assert rep.L_f >= prev
        prev = rep.L_f


def test_analytic_dominates_numeric(rng):
    truth = lambda x: np.array([[x[1], 0.0], [-10 * np.sin(x[0]), 1.0]])  # noqa: E731
    X = rng.uniform(-1, 1, (15, 2))
    U = rng.uniform(-3, 3, (15, 1))
    Xd = np.stack([truth(X[i]) @ np.r_[1.0, U[i]] for i in range(15)])
    kern = RbfKernel.from_lengthscales(1.0, [1.0, 2.0])
    params = MatrixKernelParams(np.eye(2) * 0.5, np.full(2, 0.01), 0.1 * np.eye(2), 0.05)
    model = condition(MVGPModel.prior(zero_mean(2, 1), kern, params), Dataset(X, U, Xd))
    for x in X[:5]:
        region = RegionBox(x, [0.1, 0.1])
        a = lipschitz_analytic(model, [1.0], region, 1e-4)
        n = lipschitz_numeric(model, [1.0], region, samples=20, seed=1)
        assert a.L_f >= n.L_f
        assert np.all(a.per_entry >= n.per_entry)


def test_grad_h_bound():
    lin = BarrierSpec(lambda x: x @ [3.0, 4.0], lambda x: np.array([3.0, 4.0]), lambda x: np.zeros((2, 2)),
                      alpha_gain=1.0)
    assert grad_h_bound(lin, RegionBox([1.0, 2.0], [0.5, 0.5])) == 5.0
    pp = PendulumParams()
    b = pendulum_barrier(pp, (1.0, 1.0))
    lo, hi = np.radians(50.0), np.radians(80.0)
    region = RegionBox([0.5 * (lo + hi), 0.0], [0.5 * (hi - lo), 0.1])
    exact = max(abs(math.sin(t - pp.theta_c)) for t in (lo, hi))
    assert grad_h_bound(b, region, grid=11) == pytest.approx(exact, rel=1e-12)
    wider = RegionBox(region.center, region.half_widths * 2)
    assert grad_h_bound(b, wider, grid=21) >= grad_h_bound(b, region, grid=11)
