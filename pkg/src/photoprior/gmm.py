"""Gaussian mixture density over photographic-face features: seeded
k-means++ initialization, EM fitting and numerically stable log-likelihood
scoring. Low log-likelihood at test time flags a sample as AI-generated."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateComponent, DimensionMismatch, InvalidParams, \
    TooFewSamples

logger = logging.getLogger(__name__)

GMM_FILE_VERSION = 1
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GmmModel:
    weights: np.ndarray           # (K,), sums to 1
    means: np.ndarray             # (K, N)
    covariances: np.ndarray       # diag: (K, N); full: (K, N, N)
    cov_type: str = "diag"
    reg: float = 1e-6             # diagonal loading lambda
    standardize: Optional[tuple] = None  # (mean (N,), std (N,)) or None

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def validate(self) -> None:
        if abs(self.weights.sum() - 1.0) > 1e-12 or (self.weights < 0).any():
            raise InvalidParams("mixing weights must form a simplex")
        if self.cov_type == "diag":
            if (self.covariances < self.reg - 1e-15).any():
                raise InvalidParams("diagonal covariance below regularizer")
        elif self.cov_type != "full":
            raise InvalidParams(f"bad cov_type {self.cov_type!r}")


def _apply_standardize(model: GmmModel, z: np.ndarray) -> np.ndarray:
    if model.standardize is None:
        return z
    mean, std = model.standardize
    return (z - mean) / std


def _component_log_pdfs(model: GmmModel, z: np.ndarray) -> np.ndarray:
    """(M, K) log N(z; mu_k, Sigma_k)."""
    m, n = z.shape
    out = np.empty((m, model.k))
    if model.cov_type == "diag":
        for kk in range(model.k):
            var = model.covariances[kk]
            diff = z - model.means[kk]
            out[:, kk] = -0.5 * (n * _LOG_2PI + np.log(var).sum()
                                 + ((diff * diff) / var).sum(axis=1))
    else:
        for kk in range(model.k):
            chol = np.linalg.cholesky(model.covariances[kk])
            diff = (z - model.means[kk]).T
            y = np.linalg.solve(chol, diff)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            out[:, kk] = -0.5 * (n * _LOG_2PI + logdet + (y * y).sum(axis=0))
    return out


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    peak = np.max(a, axis=axis, keepdims=True)
    out = peak + np.log(np.sum(np.exp(a - peak), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def log_density(model: GmmModel, z: np.ndarray):
    """log p(z) under the mixture; accepts one vector (N,) or a batch
    (M, N). Never exponentiates raw log pdfs (log-sum-exp throughout).
    When standardization is stored, the density is that of the
    standardized vector (a constant offset, irrelevant to ranking and
    thresholding)."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None]
    if z.ndim != 2 or z.shape[1] != model.dim:
        raise DimensionMismatch(
            f"expected features of dim {model.dim}, got {z.shape}")
    z = _apply_standardize(model, z)
    logp = _component_log_pdfs(model, z) + np.log(model.weights)[None, :]
    out = _logsumexp(logp, axis=1)
    return float(out[0]) if single else out


def _kmeans_pp_centers(x: np.ndarray, k: int, rng) -> np.ndarray:
    """Seeded k-means++ seeding (D^2 sampling), no Lloyd refinement."""
    m = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    first = int(rng.integers(m))
    centers[0] = x[first]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:  # all points coincide with chosen centers
            idx = int(rng.integers(m))
        else:
            idx = int(rng.choice(m, p=d2 / total))
        centers[i] = x[idx]
        d2 = np.minimum(d2, ((x - centers[i]) ** 2).sum(axis=1))
    return centers


def fit_em(features: np.ndarray, k: int, reg: float = 1e-6, seed: int = 0,
           tol: float = 1e-6, max_iter: int = 200, cov_type: str = "diag",
           standardize: bool = False):
    """EM fit; returns (GmmModel, per-iteration mean log-likelihoods).

    Initialization: k-means++ centers, uniform weights, per-dimension data
    variance as covariance. Components whose responsibility mass collapses
    are reseeded from the lowest-likelihood point (counted in the log).
    Stops when the relative mean log-likelihood improvement drops below
    `tol` or after `max_iter` iterations.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected (M, N) features, got {x.shape}")
    m, n = x.shape
    if m < k:
        raise TooFewSamples(f"{m} samples for {k} components")
    if not np.all(np.isfinite(x)):
        raise InvalidParams("features must be finite")
    if reg <= 0 or tol <= 0 or max_iter < 1:
        raise InvalidParams("reg, tol > 0 and max_iter >= 1 required")

    std_params = None
    if standardize:
        mu = x.mean(axis=0)
        sd = np.maximum(x.std(axis=0), 1e-12)
        std_params = (mu, sd)
        x = (x - mu) / sd

    rng = np.random.default_rng(seed)
    data_var = np.maximum(x.var(axis=0), 0.0) + reg
    means = _kmeans_pp_centers(x, k, rng)
    weights = np.full(k, 1.0 / k)
    if cov_type == "diag":
        covs = np.tile(data_var, (k, 1))
    elif cov_type == "full":
        covs = np.tile(np.diag(data_var), (k, 1, 1))
    else:
        raise InvalidParams(f"bad cov_type {cov_type!r}")

    model = GmmModel(weights=weights, means=means, covariances=covs,
                     cov_type=cov_type, reg=reg, standardize=None)
    history = []
    reseeds = 0
    prev_ll = -np.inf
    for iteration in range(max_iter):
        logp = _component_log_pdfs(model, x) + np.log(model.weights)[None, :]
        sample_ll = _logsumexp(logp, axis=1)
        mean_ll = float(sample_ll.mean())
        history.append(mean_ll)

        resp = np.exp(logp - sample_ll[:, None])
        mass = resp.sum(axis=0)

        starved = np.nonzero(mass < 1e-10 * m)[0]
        if len(starved) > 0:
            reseeds += len(starved)
            worst = int(np.argmin(sample_ll))
            for kk in starved:
                logger.warning("reseeding starved component %d from the "
                               "lowest-likelihood point", kk)
                model.means[kk] = x[worst]
                if cov_type == "diag":
                    model.covariances[kk] = data_var
                else:
                    model.covariances[kk] = np.diag(data_var)
                model.weights[kk] = 1.0 / m
            model.weights /= model.weights.sum()
            prev_ll = mean_ll
            continue

        # M-step: responsibility-weighted MLE with diagonal loading
        model.weights = mass / m
        model.means = (resp.T @ x) / mass[:, None]
        if cov_type == "diag":
            ex2 = (resp.T @ (x * x)) / mass[:, None]
            var = np.maximum(ex2 - model.means ** 2, 0.0) + reg
            model.covariances = var
        else:
            for kk in range(k):
                diff = x - model.means[kk]
                weighted = diff * resp[:, kk:kk + 1]
                cov = (weighted.T @ diff) / mass[kk]
                cov = 0.5 * (cov + cov.T) + reg * np.eye(n)
                model.covariances[kk] = cov

        if iteration > 0 and prev_ll > -np.inf:
            denom = max(abs(prev_ll), 1e-12)
            if (mean_ll - prev_ll) / denom < tol:
                prev_ll = mean_ll
                break
        prev_ll = mean_ll

    if reseeds:
        logger.info("EM finished with %d component reseed(s)", reseeds)
    model.standardize = std_params
    model.validate()
    return model, history


# -- model file I/O ------------------------------------------------------

def save_gmm(path, model: GmmModel, meta: dict = None) -> None:
    """Versioned JSON with full-precision reals (repr round-trips)."""
    obj = {
        "format_version": GMM_FILE_VERSION,
        "k": model.k,
        "dim": model.dim,
        "cov_type": model.cov_type,
        "reg": model.reg,
        "standardize": None if model.standardize is None else {
            "mean": model.standardize[0].tolist(),
            "std": model.standardize[1].tolist(),
        },
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "covariances": model.covariances.tolist(),
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def load_gmm(path):
    """Returns (GmmModel, meta dict)."""
    with open(path) as fh:
        obj = json.load(fh)
    if obj["format_version"] != GMM_FILE_VERSION:
        raise ValueError(f"unsupported GMM file version {obj['format_version']}")
    std = obj["standardize"]
    model = GmmModel(
        weights=np.array(obj["weights"], dtype=np.float64),
        means=np.array(obj["means"], dtype=np.float64),
        covariances=np.array(obj["covariances"], dtype=np.float64),
        cov_type=obj["cov_type"],
        reg=obj["reg"],
        standardize=None if std is None else (
            np.array(std["mean"], dtype=np.float64),
            np.array(std["std"], dtype=np.float64)),
    )
    model.validate()
    return model, obj.get("meta", {})
