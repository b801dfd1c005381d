"""Reference estimators: empirical statistics, Tyler's joint fixed point and
its shrinkage-regularized variant for the N << K regime.

Tyler's scatter is defined only up to scale; outputs are renormalized after
every sweep (trace K by default, unit determinant optionally). Convergence of
the joint mean/scatter recursion has no known proof, so the iteration reports
a convergence flag instead of promising one.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSampleError,
    InvalidInputError,
    SingularMatrixError,
)
from .matrix_core import symmetrize


@dataclass(frozen=True)
class TylerConfig:
    max_iter: int = 200
    tol: float = 1e-8
    normalization: str = "trace_K"
    shrinkage_rho: float = 0.0

    def __post_init__(self):
        if not self.tol > 0.0:
            raise InvalidInputError("tol must be positive")
        if self.normalization not in ("trace_K", "unit_det"):
            raise InvalidInputError(f"unknown normalization {self.normalization!r}")
        if not 0.0 <= self.shrinkage_rho < 1.0:
            raise InvalidInputError("shrinkage_rho must lie in [0, 1)")


def empirical(y: np.ndarray):
    """Sample mean and covariance (1/(N-1) normalization)."""
    y = np.asarray(y, dtype=float)
    k, n = y.shape
    if n < 2:
        raise InvalidInputError("empirical statistics need at least two samples")
    mean = y.mean(axis=1)
    centered = y - mean[:, None]
    cov = symmetrize(centered @ centered.T / (n - 1))
    return mean, cov


def _normalize(c: np.ndarray, normalization: str) -> np.ndarray:
    k = c.shape[0]
    if normalization == "trace_K":
        return c * (k / np.trace(c))
    sign, logdet = np.linalg.slogdet(c)
    if sign <= 0:
        raise SingularMatrixError("scatter iterate lost positive definiteness")
    return c * np.exp(-logdet / k)


def _weights(y: np.ndarray, mu: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distances of every sample under (mu, C)."""
    try:
        chol = np.linalg.cholesky(c)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("scatter iterate is singular") from exc
    half = np.linalg.solve(chol, y - mu[:, None])
    d = np.sum(half * half, axis=0)
    if np.any(d == 0.0):
        idx = int(np.argmin(d))
        raise DegenerateSampleError(f"sample {idx} equals the current mean", index=idx)
    return d


def _tyler_mu_step(y: np.ndarray, mu: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Weighted-mean fixed-point map for the location."""
    d = _weights(y, mu, c)
    w = 1.0 / d
    return (y @ w) / np.sum(w)


def _tyler_c_step(y: np.ndarray, mu: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Scatter fixed-point map ``(K/N) sum_n (y-mu)(y-mu)^T / d_n``."""
    k, n = y.shape
    d = _weights(y, mu, c)
    centered = y - mu[:, None]
    scaled = centered / np.sqrt(d)
    return symmetrize((k / n) * (scaled @ scaled.T))


def tyler_joint(y: np.ndarray, cfg: TylerConfig = TylerConfig()):
    """Joint location/scatter fixed-point iteration (mean first, then scatter).

    Returns ``(mu, C, iterations, converged)``; ``C`` is normalized per config.
    Requires N > K, the existence regime of the plain estimator.
    """
    y = np.asarray(y, dtype=float)
    k, n = y.shape
    if n <= k:
        raise InvalidInputError(f"plain Tyler needs N > K (got N={n}, K={k})")
    mu = y.mean(axis=1)
    c = np.eye(k)
    converged = False
    it = 0
    for it in range(cfg.max_iter):
        mu_new = _tyler_mu_step(y, mu, c)
        c_new = _normalize(_tyler_c_step(y, mu_new, c), cfg.normalization)
        c_change = np.linalg.norm(c_new - c, "fro") / max(np.linalg.norm(c, "fro"), 1e-300)
        mu_change = float(np.linalg.norm(mu_new - mu))
        mu, c = mu_new, c_new
        if c_change < cfg.tol and mu_change < cfg.tol:
            converged = True
            break
    return mu, c, it + 1, converged


def tyler_shrinkage(y: np.ndarray, mu: np.ndarray, rho: float,
                    cfg: TylerConfig = TylerConfig()) -> np.ndarray:
    """Diagonally-loaded Tyler iteration with fixed location:
    ``C <- (1-rho)(K/N) sum_n w_n (y-mu)(y-mu)^T + rho I``, trace-K normalized.

    Well defined for any N, including N < K.
    """
    if not 0.0 < rho < 1.0:
        raise InvalidInputError("rho must lie in (0, 1)")
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    k = y.shape[0]
    c = np.eye(k)
    for _ in range(cfg.max_iter):
        c_new = (1.0 - rho) * _tyler_c_step(y, mu, c) + rho * np.eye(k)
        c_new = _normalize(c_new, "trace_K")
        change = np.linalg.norm(c_new - c, "fro") / max(np.linalg.norm(c, "fro"), 1e-300)
        c = c_new
        if change < cfg.tol:
            break
    return c
