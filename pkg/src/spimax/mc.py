"""Critical values from the estimated joint normal law of the predictor.

The stacked coefficient vector phi = (beta, u) solves the mixed-model
equations with precision K = C' R^-1 C + G+, where C = [X Z] and G+ is
block diagonal with a zero block for beta and G^-1 for u.  The deviation
of the predicted mixed parameters from their targets is a fixed linear
map of phi_hat - phi, so max-statistic thresholds can be computed by
direct simulation from N(0, K^-1) at the fitted variance components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CholeskyFailure, ShapeMismatch
from .maxstat import SCALE_FLOOR, CriticalValue
from .model import (
    FHM,
    NERM,
    BlockLmmData,
    MixedParameterSpec,
    VarianceComponents,
    check_spec,
)
from .util import check_seed, derive_rng, deterministic_map, order_statistic, quantile_index

# draws are generated in fixed-size chunks with per-chunk derived streams,
# so the merged result is invariant to the worker count
DRAW_CHUNK = 8192


def assemble_precision(data: BlockLmmData, theta: VarianceComponents) -> np.ndarray:
    """C' R^-1 C + G+ assembled from per-cluster blocks, never via n x n."""
    q = data.p + 1
    D = data.D
    K = np.zeros((q + D, q + D))
    if data.model_tag == NERM:
        if theta.sigma2_e is None:
            raise ShapeMismatch("unit-level model requires sigma2_e")
        se = theta.sigma2_e
        t = np.add.reduceat(data.X, data.offsets, axis=0)
        K[:q, :q] = data.X.T @ data.X / se
        K[:q, q:] = t.T / se
        K[q:, :q] = t / se
        diag = data.sizes / se + 1.0 / theta.sigma2_u
        K[q:, q:] = np.diag(diag)
    elif data.model_tag == FHM:
        s2e = data.known_error_vars
        K[:q, :q] = np.einsum("d,di,dj->ij", 1.0 / s2e, data.X, data.X)
        K[:q, q:] = data.X.T / s2e
        K[q:, :q] = data.X / s2e[:, None]
        K[q:, q:] = np.diag(1.0 / s2e + 1.0 / theta.sigma2_u)
    else:
        raise ShapeMismatch(f"unknown model tag {data.model_tag!r}")
    return K


@dataclass(frozen=True)
class JointNormalModel:
    """Precision, covariance and a sampling factor for phi_hat - phi."""

    precision: np.ndarray
    covariance: np.ndarray
    cov_factor: np.ndarray  # lower triangular, cov = cov_factor @ cov_factor.T
    p: int
    D: int

    @property
    def dim(self) -> int:
        return self.p + 1 + self.D


def build_joint_normal(data: BlockLmmData, theta: VarianceComponents) -> JointNormalModel:
    K = assemble_precision(data, theta)
    try:
        np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise CholeskyFailure("mixed-model precision is not positive definite") from exc
    cov = np.linalg.inv(K)
    cov = 0.5 * (cov + cov.T)
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CholeskyFailure("implied covariance is not positive definite") from exc
    return JointNormalModel(
        precision=K, covariance=cov, cov_factor=factor, p=data.p, D=data.D
    )


def loading_matrix(model: JointNormalModel, spec: MixedParameterSpec) -> np.ndarray:
    """Rows map phi to the mixed parameters: [k_d, m_d e_d]."""
    if spec.k.shape != (model.D, model.p + 1):
        raise ShapeMismatch(
            f"spec k has shape {spec.k.shape}, expected {(model.D, model.p + 1)}"
        )
    return np.hstack([spec.k, np.diag(spec.m)])


def critical_value_mc(
    model: JointNormalModel,
    spec: MixedParameterSpec,
    k_draws: int,
    alpha: float,
    master_seed: int,
    scales: np.ndarray | None = None,
    contrast: np.ndarray | None = None,
    threads: int | None = None,
) -> CriticalValue:
    """Max-statistic threshold simulated from the fitted normal law.

    Numerators are the mapped deviations; the default studentization is
    the model-implied standard deviation of each component.  Pass scales
    to studentize differently (e.g. by sqrt(g1)), or a contrast matrix to
    calibrate linear combinations A mu.
    """
    check_seed(master_seed)
    if k_draws < 1:
        raise ShapeMismatch("need at least one draw")
    L = loading_matrix(model, spec)
    if contrast is not None:
        contrast = np.asarray(contrast, dtype=float)
        if contrast.ndim != 2 or contrast.shape[1] != model.D:
            raise ShapeMismatch(
                f"contrast must have {model.D} columns, got {contrast.shape}"
            )
        L = contrast @ L
    if scales is None:
        scales = np.sqrt(np.einsum("di,ij,dj->d", L, model.covariance, L))
    else:
        scales = np.asarray(scales, dtype=float)
        if scales.shape != (L.shape[0],):
            raise ShapeMismatch(f"scales must have shape {(L.shape[0],)}, got {scales.shape}")
    scales = np.maximum(scales, SCALE_FLOOR)

    LW = L @ model.cov_factor  # draw @ LW.T maps white noise to numerators

    def chunk_max(i: int) -> np.ndarray:
        lo = i * DRAW_CHUNK
        m = min(DRAW_CHUNK, k_draws - lo)
        z = derive_rng(master_seed, i).standard_normal((m, LW.shape[1]))
        return np.abs(z @ LW.T / scales).max(axis=1)

    n_chunks = (k_draws + DRAW_CHUNK - 1) // DRAW_CHUNK
    maxima = np.concatenate(deterministic_map(chunk_max, range(n_chunks), threads))
    value = order_statistic(maxima, quantile_index(k_draws, alpha))
    return CriticalValue(value=value, method="MC", alpha=alpha)
