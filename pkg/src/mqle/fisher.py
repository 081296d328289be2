"""Diagonal-covariance GMM and Fisher-vector aggregation of a query set.

The encoding of a feature x against component g is

    phi_g(x) = gamma_g(x)/sqrt(pi_g)   * (x - mu_g)/sigma_g
    psi_g(x) = gamma_g(x)/sqrt(2*pi_g) * ((x - mu_g)^2/sigma_g^2 - 1)

stacked as [phi_1..phi_G, psi_1..psi_G] in R^(2GD). A set of features is
mean-pooled in encoding space, then signed-square-rooted and scaled by
1/sqrt(l1 norm), which lands the result on the unit l2 sphere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cluster
from .errors import DataError, NumericalError
from .features import FeatureSet, read_features, write_features
from .rng import generator

VAR_FLOOR = 1e-6
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GmmModel:
    pi: np.ndarray      # (G,) mixture weights, sum 1
    mu: np.ndarray      # (G, D) means
    sigma2: np.ndarray  # (G, D) diagonal variances, floored
    ll_trace: list[float] = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return self.pi.shape[0]

    @property
    def dim(self) -> int:
        return self.mu.shape[1]


def _log_gaussians(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """log pi_g + log N(x; mu_g, diag sigma2_g) for each sample/component.

    Expanded quadratic form (three matmuls) so no (n, G, D) temporary is
    materialized even at the paper-scale component count.
    """
    x = np.atleast_2d(x)
    inv = 1.0 / model.sigma2                     # (G, D)
    log_det = np.log(model.sigma2).sum(axis=1)   # (G,)
    mahal = (
        (x * x) @ inv.T
        - 2.0 * x @ (model.mu * inv).T
        + (model.mu * model.mu * inv).sum(axis=1)[None, :]
    )
    mahal = np.maximum(mahal, 0.0)
    return (
        np.log(model.pi)[None, :]
        - 0.5 * (model.dim * LOG_2PI + log_det)[None, :]
        - 0.5 * mahal
    )


def _logsumexp(rows: np.ndarray) -> np.ndarray:
    peak = rows.max(axis=1, keepdims=True)
    return (peak + np.log(np.exp(rows - peak).sum(axis=1, keepdims=True)))[:, 0]


def fit_gmm(
    features: np.ndarray,
    n_components: int,
    seed: int,
    max_iters: int = 200,
    tol: float = 1e-6,
    var_floor: float = VAR_FLOOR,
) -> GmmModel:
    """EM with k-means++-seeded means; stops when the relative log-likelihood
    improvement falls below tol."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise DataError("features must be a 2-D matrix")
    n, d = x.shape
    if n_components < 1:
        raise DataError("component count must be >= 1")
    if n_components > n:
        raise DataError(f"cannot fit {n_components} components to {n} samples")

    rng = generator(seed, "gmm-init")
    mu = cluster.kmeanspp_init(x, n_components, rng).copy()
    global_var = np.maximum(x.var(axis=0), var_floor)
    sigma2 = np.tile(global_var, (n_components, 1))
    pi = np.full(n_components, 1.0 / n_components)
    model = GmmModel(pi=pi, mu=mu, sigma2=sigma2)

    trace: list[float] = []
    for _ in range(max_iters):
        log_joint = _log_gaussians(model, x)      # (n, G)
        log_norm = _logsumexp(log_joint)          # (n,)
        ll = float(log_norm.mean())
        if not np.isfinite(ll):
            raise NumericalError("non-finite log-likelihood during EM")
        trace.append(ll)
        resp = np.exp(log_joint - log_norm[:, None])

        weight = resp.sum(axis=0)                 # (G,)
        pi = weight / n
        mu = (resp.T @ x) / weight[:, None]
        ex2 = (resp.T @ (x * x)) / weight[:, None]
        sigma2 = np.maximum(ex2 - mu * mu, var_floor)
        model = GmmModel(pi=pi, mu=mu, sigma2=sigma2)

        if len(trace) >= 2:
            prev, cur = trace[-2], trace[-1]
            if abs(cur - prev) < tol * max(abs(prev), 1e-12):
                break
    model.ll_trace = trace
    return model


def soft_assign(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """Posterior component responsibilities gamma(x), computed in log space."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.dim:
        raise DataError(f"dimension {x.shape[1]} does not match GMM dim {model.dim}")
    log_joint = _log_gaussians(model, x)
    gamma = np.exp(log_joint - _logsumexp(log_joint)[:, None])
    return gamma[0] if single else gamma


def fisher_encode(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """Unnormalized Fisher encoding of one feature or a batch of rows.

    Batches are processed in blocks to bound the (block, G, D) temporary.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    n = arr.shape[0]
    g, d = model.n_components, model.dim
    sigma = np.sqrt(model.sigma2)                 # (G, D)
    out = np.empty((n, 2 * g * d))
    block = max(1, int(2**22 / max(g * d, 1)))
    for start in range(0, n, block):
        rows = arr[start : start + block]
        gamma = soft_assign(model, rows)          # (b, G)
        diff = (rows[:, None, :] - model.mu[None, :, :]) / sigma[None, :, :]
        coeff1 = gamma / np.sqrt(model.pi)[None, :]
        coeff2 = gamma / np.sqrt(2.0 * model.pi)[None, :]
        b = rows.shape[0]
        out[start : start + b, : g * d] = (coeff1[:, :, None] * diff).reshape(b, -1)
        out[start : start + b, g * d :] = (
            coeff2[:, :, None] * (diff * diff - 1.0)
        ).reshape(b, -1)
    return out[0] if single else out


@dataclass
class FisherVector:
    values: np.ndarray
    normalized: bool


def signed_sqrt_normalize(pooled: np.ndarray) -> FisherVector:
    """sign(v)*sqrt(|v|) / sqrt(||v||_1); unit l2 norm whenever v is nonzero."""
    l1 = float(np.abs(pooled).sum())
    if l1 == 0.0:
        return FisherVector(values=pooled.copy(), normalized=False)
    values = np.sign(pooled) * np.sqrt(np.abs(pooled)) / np.sqrt(l1)
    return FisherVector(values=values, normalized=True)


def pool_and_normalize(model: GmmModel, features: np.ndarray) -> FisherVector:
    """Mean of per-vector encodings, then signed-sqrt + l2 normalization."""
    arr = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if arr.shape[0] == 0:
        raise DataError("cannot pool an empty feature set")
    pooled = fisher_encode(model, arr).mean(axis=0)
    return signed_sqrt_normalize(pooled)


def average_pool(features: np.ndarray) -> np.ndarray:
    """Arithmetic-mean aggregation, the baseline alternative to FV pooling."""
    arr = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if arr.shape[0] == 0:
        raise DataError("cannot pool an empty feature set")
    return arr.mean(axis=0)


def save_gmm(path, model: GmmModel, config_hash: str | None = None) -> None:
    """Header line ``G D`` then pi, mu, sigma2 codec blocks."""
    with open(path, "wb") as fp:
        fp.write(f"{model.n_components} {model.dim}\n".encode())
        write_features(fp, FeatureSet(["pi"], model.pi[None, :].astype(np.float32)))
        write_features(
            fp,
            FeatureSet([f"mu{g}" for g in range(model.n_components)], model.mu.astype(np.float32)),
        )
        write_features(
            fp,
            FeatureSet(
                [f"sigma2_{g}" for g in range(model.n_components)],
                model.sigma2.astype(np.float32),
            ),
            config_hash=config_hash,
        )


def load_gmm(path) -> GmmModel:
    with open(path, "rb") as fp:
        header = fp.readline().decode().split()
        if len(header) != 2:
            raise DataError("malformed GMM header")
        pi = read_features(fp).values[0].astype(np.float64)
        mu = read_features(fp).values.astype(np.float64)
        sigma2 = read_features(fp).values.astype(np.float64)
    if mu.shape != (int(header[0]), int(header[1])):
        raise DataError("GMM header disagrees with matrix shapes")
    return GmmModel(pi=pi, mu=mu, sigma2=np.maximum(sigma2, VAR_FLOOR))
