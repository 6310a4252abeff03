import math

import numpy as np
import pytest

from locasso.design import Dataset
from locasso.fixtures import H_FRACTION, SELECTION_L
from locasso.kernels import ball_uniform_kernel, gaussian_trunc_kernel, uniform_kernel
from locasso.lpe import (COND_LIMIT, LpeConfig, PolyFit, default_bandwidth, degree_for,
                         estimate_f, fit_local_polynomial, multi_indices, two_stage_estimate)
from locasso.selection import SelectionConfig, choose_parameters
from locasso.simulation import FunctionSpec, GeneratorSpec, generate


def _data(n=300, d=3, seed=0, f=None):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, d))
    Y = np.zeros(n) if f is None else f(X)
    return Dataset(X, Y)


@pytest.mark.parametrize("beta,l", [(1.5, 1), (2.0, 1), (2.01, 2), (3.0, 2), (3.5, 3)])
def test_degree_is_largest_integer_below_beta(beta, l):
    assert degree_for(beta) == l


def test_degree_rejects_small_beta():
    with pytest.raises(ValueError):
        degree_for(1.0)


def test_multi_index_order():
    assert multi_indices(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert multi_indices(0, 2) == [()]
    assert len(multi_indices(3, 2)) == math.comb(5, 2)


def test_default_bandwidth():
    assert default_bandwidth(1024, 2.0, 2) == pytest.approx(1024 ** (-1 / 6))


@pytest.mark.parametrize("sel", [(1,), (2, 3), (1, 2, 3)])
def test_constant_reproduced(sel):
    data = _data(f=lambda X: np.full(len(X), 2.5))
    fit = fit_local_polynomial(data, np.zeros(3), LpeConfig(2.0, sel, 10.0, bandwidth_star=0.5))
    assert fit.unique
    assert fit.value_at_zero == pytest.approx(2.5, abs=1e-8)


def test_affine_reproduced_with_rescaled_coefficients():
    x = np.array([0.1, -0.2, 0.3])
    data = _data(f=lambda X: 1.0 + 2.0 * X[:, 0] - 3.0 * X[:, 2])
    fit = fit_local_polynomial(data, x, LpeConfig(2.0, (1, 3), 10.0, bandwidth_star=0.4))
    assert fit.value_at_zero == pytest.approx(1.0 + 0.2 - 0.9, abs=1e-8)
    assert fit.coefficients[(1, 0)] == pytest.approx(2.0, abs=1e-8)
    assert fit.coefficients[(0, 1)] == pytest.approx(-3.0, abs=1e-8)


def test_too_few_points_not_unique():
    # 3 points cannot determine the 6 quadratic monomials in 2 variables
    data = _data(n=3, d=2, f=lambda X: np.ones(len(X)))
    fit = fit_local_polynomial(data, np.zeros(2), LpeConfig(3.0, (1, 2), 5.0, bandwidth_star=1.0))
    assert not fit.unique
    assert fit.value_at_zero == 0.0 and all(v == 0.0 for v in fit.coefficients.values())
    assert fit.condition > COND_LIMIT
    assert estimate_f(fit, 5.0) == 0.0


def test_empty_compact_window_warns():
    data = Dataset(np.full((5, 1), 0.9), np.ones(5))
    cfg = LpeConfig(2.0, (1,), 1.0, kernel_star=ball_uniform_kernel(1), bandwidth_star=0.1)
    with pytest.warns(RuntimeWarning):
        fit = fit_local_polynomial(data, [0.0], cfg)
    assert not fit.unique and estimate_f(fit, 1.0) == 0.0


@pytest.mark.parametrize("value,f_max,expect", [(5.0, 2.0, 2.0), (-0.3, 2.0, -0.3),
                                                (-7.0, 2.0, -2.0), (2.0, 2.0, 2.0)])
def test_clamp(value, f_max, expect):
    assert estimate_f(PolyFit({(): value}, True, value), f_max) == expect


def test_non_unique_returns_zero():
    assert estimate_f(PolyFit({(): 9.0}, False, 9.0), 1.0) == 0.0


def test_empty_selection_is_weighted_mean():
    rng = np.random.default_rng(4)
    data = Dataset(rng.uniform(-1, 1, (50, 2)), rng.normal(size=50))
    cfg = LpeConfig(2.0, (), 10.0)
    fit = fit_local_polynomial(data, np.zeros(2), cfg)
    # zero-dimensional kernel is constant, so the weighted mean is the plain mean
    assert fit.unique
    assert fit.value_at_zero == pytest.approx(data.Y.mean(), abs=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        LpeConfig(2.0, (1, 1), 1.0)
    with pytest.raises(ValueError):
        LpeConfig(2.0, (1,), 0.0)
    with pytest.raises(ValueError):
        LpeConfig(2.0, (1,), 1.0, kernel_star=uniform_kernel(1))
    with pytest.raises(ValueError):
        LpeConfig(2.0, (1, 2), 1.0, kernel_star=gaussian_trunc_kernel(1))
    with pytest.raises(ValueError):
        fit_local_polynomial(_data(d=2), np.zeros(2), LpeConfig(2.0, (3,), 1.0))


def test_permutation_equivariance():
    rng = np.random.default_rng(5)
    X = rng.uniform(-1, 1, (400, 3))
    Y = 1 + X[:, 0] ** 2 - X[:, 2] + 0.1 * rng.normal(size=400)
    x = np.array([0.1, 0.2, -0.1])
    perm = np.array([2, 0, 1])  # new column k holds old column perm[k]
    inv = {int(old) + 1: k + 1 for k, old in enumerate(perm)}
    a = fit_local_polynomial(Dataset(X, Y), x, LpeConfig(3.0, (1, 3), 10.0))
    b = fit_local_polynomial(Dataset(X[:, perm], Y), x[perm],
                             LpeConfig(3.0, (inv[1], inv[3]), 10.0))
    assert a.value_at_zero == pytest.approx(b.value_at_zero, abs=1e-10)


def _two_stage_spec(n=4000, intercept=3.0, linear=(2.0, -1.0), sigma=0.0, seed=0):
    return GeneratorSpec(n=n, d=10, function=FunctionSpec("affine", intercept=intercept,
                                                          linear=linear),
                         sigma=sigma, seed=seed)


def _two_stage_cfg(spec, f_max):
    c = spec.design_constants(L=SELECTION_L, C=1.0, d0=2, f_max=f_max, strict=True)
    return choose_parameters(c, H_FRACTION)


def test_two_stage_affine_fixture():
    spec = _two_stage_spec()
    data, truth = generate(spec)
    res = two_stage_estimate(data, np.zeros(10), _two_stage_cfg(spec, 3.0), 2.0, 3.0)
    assert res.selected == (1, 2)
    assert res.fhat == pytest.approx(3.0, abs=1e-6)
    assert res.fit.unique
    assert res.hstar == pytest.approx(4000 ** (-1 / 6))
    d = res.to_dict()
    assert d["selection"]["compliant"] is True


def test_two_stage_zero_function():
    spec = _two_stage_spec(intercept=0.0, linear=())
    data, _ = generate(spec)
    res = two_stage_estimate(data, np.zeros(10), _two_stage_cfg(spec, 1.0), 2.0, 1.0)
    assert res.selected == () and res.fhat == 0.0


@pytest.mark.parametrize("c,f_max", [(0.4, 1.0), (2.5, 1.0), (-3.0, 2.0)])
def test_two_stage_forced_empty_selection(c, f_max):
    spec = _two_stage_spec(n=500, intercept=c, linear=())
    data, _ = generate(spec)
    cfg = SelectionConfig(h=0.9, lam=1e6, constants=spec.design_constants(
        L=SELECTION_L, C=1.0, d0=2, f_max=f_max))
    res = two_stage_estimate(data, np.zeros(10), cfg, 2.0, f_max)
    assert res.selected == ()
    assert res.fhat == pytest.approx(min(max(c, -f_max), f_max), abs=1e-12)
