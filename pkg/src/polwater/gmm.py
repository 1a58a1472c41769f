"""Gaussian mixture models fitted by EM, and likelihood-ratio classification."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .features import FeatureMap, FeatureSet

MODEL_FORMAT = "polwater-gmm"
MODEL_VERSION = 1
LOG_2PI = np.log(2.0 * np.pi)
# keeps exp(log ratio) finite
MAX_LOG_RATIO = 700.0


class GmmError(ValueError):
    pass


@dataclass
class GmmModel:
    weights: np.ndarray         # (m,)
    means: np.ndarray           # (m, d)
    covariances: np.ndarray     # (m, d, d)
    descriptor: str = "with-azimuth"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.covariances = np.asarray(self.covariances, dtype=np.float64).reshape(
            len(self.weights), self.means.shape[1], self.means.shape[1])
        m = len(self.weights)
        if m < 1 or self.means.shape[0] != m:
            raise GmmError("weights and means disagree on the cluster count")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise GmmError("weights must be positive and sum to 1")
        if not np.allclose(self.covariances, np.swapaxes(self.covariances, 1, 2)):
            raise GmmError("covariances must be symmetric")
        try:
            self._chol = np.linalg.cholesky(self.covariances)
        except np.linalg.LinAlgError as exc:
            raise GmmError("covariance is not positive definite") from exc
        self._log_norm = (np.log(self.weights) - 0.5 * self.dim * LOG_2PI
                          - np.log(np.diagonal(self._chol, axis1=1, axis2=2)).sum(axis=1))

    @property
    def n_clusters(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_density(self, x: np.ndarray) -> np.ndarray:
        """log(pi_k N(x; a_k, S_k)) for every sample and cluster, shape (n, m)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise GmmError(f"expected {self.dim}-D features, got {x.shape[1]}")
        out = np.empty((x.shape[0], self.n_clusters))
        for k in range(self.n_clusters):
            z = solve_triangular(self._chol[k], (x - self.means[k]).T, lower=True, check_finite=False)
            out[:, k] = self._log_norm[k] - 0.5 * np.einsum("ij,ij->j", z, z)
        return out

    def log_density(self, x) -> np.ndarray:
        return logsumexp(self.component_log_density(x), axis=1)

    def density(self, x) -> np.ndarray:
        return np.exp(self.log_density(x))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "descriptor": self.descriptor,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GmmModel":
        if doc.get("format") != MODEL_FORMAT:
            raise GmmError("not a polwater GMM document")
        if doc.get("version") != MODEL_VERSION:
            raise GmmError(f"unsupported model version {doc.get('version')}")
        return cls(np.array(doc["weights"]), np.array(doc["means"]), np.array(doc["covariances"]),
                   doc["descriptor"], doc.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "GmmModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def gmm_density(model: GmmModel, x) -> np.ndarray:
    return model.density(x)


def _kmeans_init(x, m, rng, lloyd_iter=10):
    """k-means++ seeding followed by a few Lloyd steps. Returns labels and the
    number of distinct centers (fewer than m when the data has fewer distinct points)."""
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    while len(centers) < m:
        total = d2.sum()
        if total <= 0:
            break
        i = rng.choice(n, p=d2 / total)
        centers.append(x[i])
        d2 = np.minimum(d2, ((x - x[i]) ** 2).sum(axis=1))
    c = np.array(centers)
    for _ in range(lloyd_iter):
        dist = ((x[:, None, :] - c[None]) ** 2).sum(axis=2)
        labels = dist.argmin(axis=1)
        new = np.array([x[labels == k].mean(axis=0) if np.any(labels == k) else c[k]
                        for k in range(len(c))])
        if np.allclose(new, c):
            break
        c = new
    dist = ((x[:, None, :] - c[None]) ** 2).sum(axis=2)
    return dist.argmin(axis=1), len(c)


def _floor_eigen(cov, floor, diagonal):
    """Closest-in-likelihood covariance with all eigenvalues >= floor."""
    if diagonal:
        return np.diag(np.maximum(np.diag(cov), floor))
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    if w.min() >= floor:
        return 0.5 * (cov + cov.T)
    out = (v * np.maximum(w, floor)) @ v.T
    return 0.5 * (out + out.T)


def _m_step(x, resp, floor, diagonal):
    nk = resp.sum(axis=0)
    weights = nk / nk.sum()
    means = (resp.T @ x) / nk[:, None]
    covs = []
    for k in range(len(nk)):
        diff = x - means[k]
        cov = (resp[:, k, None] * diff).T @ diff / nk[k]
        covs.append(_floor_eigen(cov, floor, diagonal))
    return weights, means, np.array(covs)


def train_gmm(features, m: int = 5, seed: int = 0, descriptor: str = "with-azimuth",
              max_iter: int = 300, tol: float = 1e-6, reg: float = 1e-6,
              covariance: str = "full", min_weight: float = 1e-8) -> GmmModel:
    """Fit an m-cluster mixture by EM.

    The returned model carries the per-iteration mean log-likelihood in
    ``meta["log_likelihood"]``.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise GmmError("features must be an (n, d) array")
    n, d = x.shape
    if m < 1:
        raise GmmError("cluster count must be >= 1")
    if n < 10 * m * d:
        raise GmmError(f"need at least {10 * m * d} samples for m={m}, d={d}; got {n}")
    if not np.all(np.isfinite(x)):
        raise GmmError("features contain non-finite values")
    if covariance not in ("full", "diag"):
        raise GmmError(f"covariance must be 'full' or 'diag', not {covariance!r}")
    diagonal = covariance == "diag"

    rng = np.random.default_rng(seed)
    labels, m_eff = _kmeans_init(x, m, rng)
    if m_eff < m:
        warnings.warn(f"only {m_eff} distinct initial centers; fitting {m_eff} clusters", RuntimeWarning)
    resp = np.zeros((n, m_eff))
    resp[np.arange(n), labels] = 1.0
    # clusters that lost every point in k-means get a share of the nearest ones
    resp = resp[:, resp.sum(axis=0) > 0]

    history = []
    model = None
    for it in range(max_iter):
        weights, means, covs = _m_step(x, resp, reg, diagonal)
        keep = weights >= min_weight
        if not keep.all():
            warnings.warn(f"removing {int((~keep).sum())} collapsed cluster(s)", RuntimeWarning)
            weights, means, covs = weights[keep] / weights[keep].sum(), means[keep], covs[keep]
        model = GmmModel(weights, means, covs, descriptor)
        comp = model.component_log_density(x)
        ll_i = logsumexp(comp, axis=1)
        history.append(float(ll_i.mean()))
        resp = np.exp(comp - ll_i[:, None])
        if it > 0 and abs(history[-1] - history[-2]) <= tol * abs(history[-2]):
            break

    model.meta = {
        "trainer": {"m": m, "seed": seed, "max_iter": max_iter, "tol": tol, "reg": reg,
                    "covariance": covariance},
        "n_samples": int(n),
        "iterations": len(history),
        "log_likelihood": history,
    }
    return model


@dataclass
class LikelihoodRatioMap:
    log_ratio: np.ndarray   # H x W, 0 where invalid
    valid: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        r = np.exp(np.clip(self.log_ratio, -MAX_LOG_RATIO, MAX_LOG_RATIO))
        return np.where(self.valid, r, 0.0)

    def mask(self, threshold: float = 1.0) -> np.ndarray:
        if threshold < 0:
            raise ValueError("threshold must be >= 0")
        if threshold == 0:
            return self.valid.copy()
        return self.valid & (self.log_ratio > np.log(threshold))

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.round(self.ratio), 0, 255).astype(np.uint8)


def classify(features: FeatureMap, water: GmmModel, not_water: GmmModel, threshold: float = 1.0,
             feature_set: FeatureSet | None = None) -> tuple[LikelihoodRatioMap, np.ndarray]:
    if water.descriptor != not_water.descriptor:
        raise GmmError(f"model descriptors differ: {water.descriptor!r} vs {not_water.descriptor!r}")
    fs = feature_set or FeatureSet.from_descriptor(water.descriptor)
    if fs.descriptor != water.descriptor:
        raise GmmError(f"feature set {fs.descriptor!r} does not match models ({water.descriptor!r})")
    x = features.matrix(fs)
    log_ratio = np.zeros(features.shape)
    if x.shape[0]:
        log_ratio[features.valid] = water.log_density(x) - not_water.log_density(x)
    lr = LikelihoodRatioMap(log_ratio, features.valid.copy())
    return lr, lr.mask(threshold)
