"""Tests for critical values simulated from the joint normal law."""

import numpy as np
import pytest

from conftest import make_fhm, make_nerm
from oracles import max_abs_normal_quantile
from spimax.errors import ShapeMismatch
from spimax.estimation import g1_general, g2, reml_fit
from spimax.mc import (
    JointNormalModel,
    assemble_precision,
    build_joint_normal,
    critical_value_mc,
    loading_matrix,
)
from spimax.model import (
    NERM,
    BlockLmmData,
    ClusterBlock,
    MixedParameterSpec,
    VarianceComponents,
    cluster_mean_spec,
)


def dense_precision(data, theta):
    """C' R^-1 C + blockdiag(0, G^-1) built from the full design."""
    n = data.n_total
    Z = np.zeros((n, data.D))
    for d, sl in enumerate(data.cluster_slices()):
        Z[sl, d] = 1.0
    C = np.hstack([data.X, Z])
    if data.model_tag == NERM:
        r_inv = np.full(n, 1.0 / theta.sigma2_e)
    else:
        r_inv = 1.0 / data.known_error_vars
    K = C.T @ (C * r_inv[:, None])
    q = data.p + 1
    K[q:, q:] += np.eye(data.D) / theta.sigma2_u
    return K, C, r_inv


def tiny_unit_data():
    block = ClusterBlock(cluster_id="a", y=np.array([0.3]), X=np.array([[1.0]]))
    return BlockLmmData(model_tag=NERM, clusters=(block,))


def test_precision_tiny_frozen():
    theta = VarianceComponents(sigma2_u=1.0, sigma2_e=1.0)
    K = assemble_precision(tiny_unit_data(), theta)
    assert np.array_equal(K, np.array([[1.0, 1.0], [1.0, 2.0]]))


def test_precision_matches_dense_nerm():
    data, truth = make_nerm(D=7, n_d=4, seed=3, unbalanced=True)
    theta = VarianceComponents(sigma2_u=truth["sigma2_u"], sigma2_e=truth["sigma2_e"])
    K_dense, _, _ = dense_precision(data, theta)
    np.testing.assert_allclose(assemble_precision(data, theta), K_dense, atol=1e-10)


def test_precision_matches_dense_fhm():
    data, truth = make_fhm(D=9, seed=4)
    theta = VarianceComponents(sigma2_u=truth["sigma2_u"])
    K_dense, _, _ = dense_precision(data, theta)
    np.testing.assert_allclose(assemble_precision(data, theta), K_dense, atol=1e-10)


def test_covariance_matches_empirical_deviations():
    # Cov(phi_hat - phi) = K^-1 when phi_hat solves the mixed-model
    # equations at the true variance components.
    data, truth = make_nerm(D=3, n_d=3, seed=5)
    theta = VarianceComponents(sigma2_u=truth["sigma2_u"], sigma2_e=truth["sigma2_e"])
    model = build_joint_normal(data, theta)
    K, C, r_inv = dense_precision(data, theta)
    W = np.linalg.solve(K, (C * r_inv[:, None]).T)

    rng = np.random.default_rng(123)
    reps = 60_000
    beta = truth["beta"]
    u = rng.normal(0.0, np.sqrt(truth["sigma2_u"]), size=(reps, data.D))
    e = rng.normal(0.0, np.sqrt(truth["sigma2_e"]), size=(reps, data.n_total))
    mean = data.X @ beta
    Y = mean + np.repeat(u, data.sizes, axis=1) + e
    phi_hat = Y @ W.T
    dev = phi_hat - np.concatenate(
        [np.broadcast_to(beta, (reps, data.p + 1)), u], axis=1
    )
    emp = np.cov(dev.T)
    cov = model.covariance
    se = np.sqrt(
        (np.outer(np.diag(cov), np.diag(cov)) + cov**2) / reps
    )
    assert np.all(np.abs(emp - cov) <= 8.0 * se)


def test_joint_normal_shapes_and_factor():
    data, truth = make_fhm(D=6, seed=8)
    theta = VarianceComponents(sigma2_u=truth["sigma2_u"])
    model = build_joint_normal(data, theta)
    assert model.dim == data.p + 1 + data.D
    np.testing.assert_allclose(
        model.cov_factor @ model.cov_factor.T, model.covariance, atol=1e-12
    )
    np.testing.assert_allclose(
        model.covariance @ model.precision, np.eye(model.dim), atol=1e-9
    )


def independent_components_model(D):
    """Synthetic joint law whose mapped components are iid standard normal."""
    eye = np.eye(1 + D)
    model = JointNormalModel(precision=eye, covariance=eye, cov_factor=eye, p=0, D=D)
    spec = MixedParameterSpec(k=np.zeros((D, 1)), m=np.ones(D))
    return model, spec


def test_mc_matches_independent_normal_quantile():
    D, alpha = 30, 0.05
    model, spec = independent_components_model(D)
    L = loading_matrix(model, spec)
    assert np.array_equal(L, np.hstack([np.zeros((D, 1)), np.eye(D)]))
    cv = critical_value_mc(model, spec, k_draws=100_000, alpha=alpha, master_seed=42)
    assert cv.method == "MC"
    assert abs(cv.value - max_abs_normal_quantile(D, alpha)) < 0.02


def test_mc_deterministic_and_thread_invariant():
    model, spec = independent_components_model(12)
    kwargs = dict(k_draws=20_000, alpha=0.1, master_seed=7)
    base = critical_value_mc(model, spec, **kwargs).value
    assert critical_value_mc(model, spec, **kwargs).value == base
    assert critical_value_mc(model, spec, threads=3, **kwargs).value == base
    assert critical_value_mc(model, spec, k_draws=20_000, alpha=0.1, master_seed=8).value != base


def test_mc_alpha_monotone():
    model, spec = independent_components_model(9)
    c_lo = critical_value_mc(model, spec, 30_000, 0.10, master_seed=3).value
    c_hi = critical_value_mc(model, spec, 30_000, 0.02, master_seed=3).value
    assert c_hi > c_lo


def test_mc_contrast_subset_is_exactly_monotone():
    # shared draws make the subset maxima pointwise dominated
    data, truth = make_nerm(D=8, seed=10)
    theta = VarianceComponents(sigma2_u=truth["sigma2_u"], sigma2_e=truth["sigma2_e"])
    model = build_joint_normal(data, theta)
    spec = cluster_mean_spec(data)
    full = np.eye(8)
    cs = [critical_value_mc(model, spec, 10_000, 0.05, 17, contrast=full[:r]).value
          for r in (2, 5, 8)]
    assert cs[0] <= cs[1] <= cs[2]
    c_plain = critical_value_mc(model, spec, 10_000, 0.05, 17).value
    c_eye = critical_value_mc(
        model, spec, 10_000, 0.05, 17, contrast=full,
        scales=np.sqrt(np.einsum("di,ij,dj->d",
                                 loading_matrix(model, spec),
                                 model.covariance,
                                 loading_matrix(model, spec))),
    ).value
    assert c_eye == c_plain


def test_model_scales_equal_prediction_variance_split():
    # diag(L K^-1 L') = g1 + g2 for the mixed-parameter loading rows
    for data, truth in (make_nerm(D=12, seed=2), make_fhm(D=12, seed=2)):
        theta = reml_fit(data)
        spec = cluster_mean_spec(data)
        model = build_joint_normal(data, theta)
        L = loading_matrix(model, spec)
        scales = np.sqrt(np.einsum("di,ij,dj->d", L, model.covariance, L))
        expected = np.sqrt(g1_general(data, theta, spec) + g2(data, theta, spec))
        np.testing.assert_allclose(scales, expected, rtol=1e-9)


def test_mc_scale_choice_changes_threshold_little():
    # studentizing by sqrt(g1) instead of the model scale moves the
    # threshold by well under 2 percent here
    data, _ = make_nerm(D=15, n_d=5, sigma2_e=0.5, sigma2_u=1.0, seed=11)
    theta = reml_fit(data)
    spec = cluster_mean_spec(data)
    model = build_joint_normal(data, theta)
    g1_scales = np.sqrt(g1_general(data, theta, spec))
    c_model = critical_value_mc(model, spec, 100_000, 0.05, 99).value
    c_g1 = critical_value_mc(model, spec, 100_000, 0.05, 99, scales=g1_scales).value
    assert abs(c_model - c_g1) / c_model < 0.02


def test_mc_input_validation():
    model, spec = independent_components_model(4)
    with pytest.raises(ShapeMismatch):
        critical_value_mc(model, spec, 0, 0.05, 1)
    with pytest.raises(ShapeMismatch):
        critical_value_mc(model, spec, 100, 0.05, 1, contrast=np.ones((2, 5)))
    with pytest.raises(ShapeMismatch):
        critical_value_mc(model, spec, 100, 0.05, 1, scales=np.ones(3))
    with pytest.raises(ShapeMismatch):
        bad_spec = MixedParameterSpec(k=np.zeros((5, 1)), m=np.ones(5))
        loading_matrix(model, bad_spec)
    data = tiny_unit_data()
    with pytest.raises(ShapeMismatch):
        assemble_precision(data, VarianceComponents(sigma2_u=1.0))
