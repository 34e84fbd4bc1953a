"""Tests for Bonferroni, ridge weights and the volume-of-tube bound."""

import math

import numpy as np
import pytest
from scipy import stats

from conftest import make_fhm, make_nerm
from oracles import max_abs_normal_quantile, tube_p1_closed_form
from spimax.analytic import (
    BISECT_LO,
    RidgeWeights,
    TubeConstants,
    bonferroni_cv,
    ridge_interval_scales,
    ridge_weights,
    tube_alpha_bound,
    tube_cv,
)
from spimax.errors import (
    AlphaOutOfRange,
    BoundUnattainable,
    InvalidConstants,
    NonMonotoneBound,
    ShapeMismatch,
)
from spimax.estimation import eblup, g1_general, g2, reml_fit
from spimax.model import VarianceComponents, cluster_mean_spec


def benign_constants(**overrides):
    base = dict(
        kappa0=2.5, zeta0=3.0, kappa2=0.5, zeta1=0.2, m0=0.3,
        euler=0.5, xi0=1.0, eta0=0.3, nu=25.0,
    )
    base.update(overrides)
    return TubeConstants(**base)


def test_bonferroni_frozen_value():
    cv = bonferroni_cv(30, 0.05)
    assert cv.method == "BO"
    assert abs(cv.value - 3.143980287069073) < 1e-12
    assert abs(bonferroni_cv(1, 0.05).value - stats.norm.ppf(0.975)) < 1e-12


def test_bonferroni_dominates_independent_exact():
    for D in (2, 10, 40):
        for alpha in (0.01, 0.05, 0.2):
            assert bonferroni_cv(D, alpha).value >= max_abs_normal_quantile(D, alpha)


def test_bonferroni_validation():
    with pytest.raises(ShapeMismatch):
        bonferroni_cv(0, 0.05)
    with pytest.raises(AlphaOutOfRange):
        bonferroni_cv(5, 0.0)


@pytest.mark.parametrize("maker", [make_nerm, make_fhm])
def test_ridge_weights_reproduce_predictor(maker):
    data, _ = maker(seed=21)
    fit = eblup(data)
    phi_hat = np.concatenate([fit.beta_hat, fit.u_hat])
    rng = np.random.default_rng(5)
    for _ in range(5):
        c = rng.normal(size=phi_hat.size)
        w = ridge_weights(data, fit.theta, c)
        target = float(c @ phi_hat)
        assert abs(float(w.l @ data.y) - target) <= 1e-10 * (1.0 + abs(target))


def test_ridge_weights_shape_guard():
    data, truth = make_nerm(D=4, seed=1)
    theta = VarianceComponents(sigma2_u=truth["sigma2_u"], sigma2_e=truth["sigma2_e"])
    with pytest.raises(ShapeMismatch):
        ridge_weights(data, theta, np.ones(3))


def test_ridge_norm_matches_prediction_variance():
    # sigma2_e * ||l_M||^2 = g1 + g2 for the mixed-parameter coefficient rows
    data, _ = make_nerm(D=10, seed=13)
    theta = reml_fit(data)
    spec = cluster_mean_spec(data)
    g = g1_general(data, theta, spec) + g2(data, theta, spec)
    for d in range(data.D):
        c = np.zeros(data.p + 1 + data.D)
        c[: data.p + 1] = spec.k[d]
        c[data.p + 1 + d] = spec.m[d]
        w = ridge_weights(data, theta, c)
        assert abs(theta.sigma2_e * w.l_m_norm**2 - g[d]) <= 1e-8 * g[d]
    scales = ridge_interval_scales(data, theta, spec)
    np.testing.assert_allclose(scales, np.sqrt(g), rtol=1e-10)


def test_ridge_norm_undefined_for_area_level():
    data, truth = make_fhm(D=6, seed=2)
    theta = VarianceComponents(sigma2_u=truth["sigma2_u"])
    w = ridge_weights(data, theta, np.ones(data.p + 1 + data.D))
    assert w.l_m_norm is None
    with pytest.raises(ShapeMismatch):
        ridge_interval_scales(data, theta, cluster_mean_spec(data))


def test_tube_constants_validation():
    with pytest.raises(InvalidConstants):
        benign_constants(kappa0=0.0)
    with pytest.raises(InvalidConstants):
        benign_constants(xi0=0.0)
    with pytest.raises(InvalidConstants):
        benign_constants(nu=0.5)
    with pytest.raises(InvalidConstants):
        benign_constants(zeta0=-1.0)
    with pytest.raises(InvalidConstants):
        benign_constants(eta0=float("nan"))
    with pytest.raises(InvalidConstants):
        benign_constants(euler=float("inf"))


def test_tube_bound_validation():
    k = benign_constants()
    with pytest.raises(ShapeMismatch):
        tube_alpha_bound(0, 2.0, k)
    with pytest.raises(ShapeMismatch):
        tube_alpha_bound(1, -1.0, k)


def test_tube_p1_inversion_matches_closed_form():
    for kappa0, nu, xi0 in ((2.5, 30.0, 1.0), (4.0, 12.0, 0.8)):
        k = TubeConstants(
            kappa0=kappa0, zeta0=0.0, kappa2=0.0, zeta1=0.0, m0=0.0,
            euler=0.0, xi0=xi0, eta0=0.0, nu=nu,
        )
        for alpha in (0.01, 0.05, 0.2):
            cv = tube_cv(1, k, alpha)
            assert cv.method == "VT"
            closed = tube_p1_closed_form(alpha, kappa0, nu, xi0)
            assert abs(cv.value - closed) <= 1e-8
            assert tube_alpha_bound(1, cv.value, k) <= alpha


def test_tube_bound_monotone_on_tail_grid():
    grid = np.linspace(1.5, 10.0, 1000)
    for p in (1, 2, 3):
        k = benign_constants(eta0=0.3 if p < 3 else 0.0)
        vals = np.array([tube_alpha_bound(p, c, k) for c in grid])
        assert np.all(np.diff(vals) < 0)
        assert np.all(vals > 0)


def test_tube_gaussian_limit():
    # nu -> inf, kappa0 = pi: bound at height c tends to exp(-c^2/2)
    k = TubeConstants(
        kappa0=math.pi, zeta0=0.0, kappa2=0.0, zeta1=0.0, m0=0.0,
        euler=0.0, xi0=1.0, eta0=0.0, nu=1e4,
    )
    target = math.exp(-2.0)
    assert abs(tube_alpha_bound(1, 2.0, k) - target) / target < 0.01


def test_tube_cv_monotone_in_inputs():
    k = benign_constants()
    k2 = benign_constants(kappa0=5.0)
    for p in (1, 2):
        assert tube_cv(p, k2, 0.05).value > tube_cv(p, k, 0.05).value
        assert tube_cv(p, k, 0.01).value > tube_cv(p, k, 0.05).value


def test_tube_cv_boundary_and_failure_modes():
    # whole bracket already below alpha: left edge comes back
    ksmall = TubeConstants(
        kappa0=0.01, zeta0=0.0, kappa2=0.0, zeta1=0.0, m0=0.0,
        euler=0.0, xi0=1.0, eta0=0.0, nu=30.0,
    )
    assert tube_cv(1, ksmall, 0.05).value == BISECT_LO
    # alpha below the bound's floor on the bracket
    k5 = TubeConstants(
        kappa0=math.pi, zeta0=0.0, kappa2=0.0, zeta1=0.0, m0=0.0,
        euler=0.0, xi0=1.0, eta0=0.0, nu=5.0,
    )
    with pytest.raises(BoundUnattainable):
        tube_cv(1, k5, 1e-30)
    # large centering correction makes the bound rise then fall
    khump = TubeConstants(
        kappa0=2.0, zeta0=1.0, kappa2=0.5, zeta1=0.1, m0=0.2,
        euler=0.0, xi0=1.0, eta0=50.0, nu=10.0,
    )
    with pytest.raises(NonMonotoneBound):
        tube_cv(3, khump, 0.05)


def test_ridge_weights_dataclass_fields():
    w = RidgeWeights(l=np.ones(3), l_m_norm=2.0)
    assert w.l_m_norm == 2.0
