"""Perturbed multivariate generalized Gaussian model.

Samples are generated through the stochastic representation
``x = mu + R A u`` with ``A = C^{1/2}``, ``u`` uniform on the unit sphere and
``R = W^{1/beta}`` where ``W ~ Gamma(shape=K/beta, scale=2)``. That scale
convention reproduces ``E||x||^beta = 2K/beta`` for an identity scatter, which
is the moment the sampler tests pin down. Observations then follow
``y_n = tau_n x_n + mu`` with per-sample positive factors ``tau_n``.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .errors import DegenerateSampleError, InvalidInputError, SingularMatrixError
from .matrix_core import is_spd, matrix_power, symmetrize

# Above this value of K/beta the exact Gamma-ratio factor is replaced by its
# Stirling form to dodge overflow in the Gamma function itself.
_STIRLING_SWITCH = 170.0


@dataclass(frozen=True)
class MggdParams:
    """Ground-truth distribution: shape ``beta`` > 1, mean ``mu``, SPD scatter."""

    beta: float
    mu: np.ndarray
    scatter: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "scatter", symmetrize(self.scatter))
        if not self.beta > 1.0:
            raise InvalidInputError(f"beta must exceed 1, got {self.beta}")
        if self.mu.ndim != 1 or self.mu.shape[0] != self.scatter.shape[0]:
            raise InvalidInputError("mu length must match scatter dimension")
        if not is_spd(self.scatter):
            raise SingularMatrixError("scatter matrix is not positive definite")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class PerturbationSpec:
    """Corruption model: a fraction ``proportion`` of samples gets
    ``tau`` drawn uniformly on ``[1, tau_max]``; the rest keep ``tau = 1``."""

    proportion: float
    tau_max: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.proportion <= 1.0:
            raise InvalidInputError(f"proportion must lie in [0, 1], got {self.proportion}")
        if not self.tau_max >= 1.0:
            raise InvalidInputError(f"tau_max must be >= 1, got {self.tau_max}")


@dataclass(frozen=True)
class SampleSet:
    """Observations ``Y`` (K x N, columns are samples), the true ``tau`` vector
    and the generating parameters."""

    observations: np.ndarray
    tau_true: np.ndarray
    params: MggdParams

    def __post_init__(self):
        object.__setattr__(self, "observations", np.asarray(self.observations, dtype=float))
        object.__setattr__(self, "tau_true", np.asarray(self.tau_true, dtype=float))
        if self.observations.ndim != 2:
            raise InvalidInputError("observations must be a K x N matrix")
        if self.observations.shape[1] != self.tau_true.shape[0]:
            raise InvalidInputError("tau_true length must match the number of columns")
        if self.observations.shape[1] < 1:
            raise InvalidInputError("need at least one observation")
        if np.any(self.tau_true <= 0.0):
            raise InvalidInputError("all tau values must be positive")

    @property
    def dim(self) -> int:
        return self.observations.shape[0]

    @property
    def n_samples(self) -> int:
        return self.observations.shape[1]

    def write_csv(self, path) -> None:
        """CSV layout: header row ``K,N,beta``, the corresponding values,
        then N rows of K observation values, then one row of tau values."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["K", "N", "beta"])
            w.writerow([self.dim, self.n_samples, repr(float(self.params.beta))])
            for n in range(self.n_samples):
                w.writerow([repr(float(v)) for v in self.observations[:, n]])
            w.writerow([repr(float(v)) for v in self.tau_true])


def read_sample_csv(path):
    """Read a :meth:`SampleSet.write_csv` file; returns ``(Y, tau, beta)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3 or rows[0] != ["K", "N", "beta"]:
        raise InvalidInputError(f"{path}: not a sample-set CSV")
    k, n = int(rows[1][0]), int(rows[1][1])
    beta = float(rows[1][2])
    if len(rows) != 2 + n + 1:
        raise InvalidInputError(f"{path}: expected {n} observation rows plus tau row")
    obs = np.array([[float(v) for v in rows[2 + i]] for i in range(n)], dtype=float).T
    if obs.shape != (k, n):
        raise InvalidInputError(f"{path}: observation block is not {k} x {n}")
    tau = np.array([float(v) for v in rows[2 + n]], dtype=float)
    return obs, tau, beta


def sample_mggd(params: MggdParams, n: int, rng_seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. samples, one per column; identical seed, identical output."""
    k = params.dim
    if n == 0:
        return np.empty((k, 0))
    rng = np.random.default_rng(rng_seed)
    z = rng.standard_normal((k, n))
    z /= np.linalg.norm(z, axis=0, keepdims=True)
    w = rng.gamma(shape=k / params.beta, scale=2.0, size=n)
    r = np.power(w, 1.0 / params.beta)
    a = matrix_power(params.scatter, 0.5)
    return params.mu[:, None] + a @ (z * r)


def perturb(samples: np.ndarray, params: MggdParams, spec: PerturbationSpec) -> SampleSet:
    """Apply multiplicative perturbations to centered samples.

    ``samples`` must be drawn with zero mean; the output columns are
    ``tau_n * x_n + mu``. Exactly ``floor(proportion * N)`` uniformly chosen
    columns get ``tau`` drawn uniformly on ``[1, tau_max]``; the rest keep
    ``tau = 1``.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[1]
    col_norms = np.linalg.norm(samples, axis=0)
    if np.any(col_norms == 0.0):
        idx = int(np.argmin(col_norms))
        raise DegenerateSampleError(
            f"sample {idx} is exactly zero, observation would equal mu", index=idx
        )
    rng = np.random.default_rng(spec.seed)
    n_corrupt = int(math.floor(spec.proportion * n))
    tau = np.ones(n)
    if n_corrupt > 0:
        chosen = rng.choice(n, size=n_corrupt, replace=False)
        tau[chosen] = rng.uniform(1.0, spec.tau_max, size=n_corrupt)
    observations = samples * tau + params.mu[:, None]
    return SampleSet(observations, tau, params)


def _mahalanobis_sq(c: np.ndarray, mu: np.ndarray, y: np.ndarray) -> np.ndarray:
    """(y_n - mu)^T C^{-1} (y_n - mu) for every column, via Cholesky."""
    try:
        chol = np.linalg.cholesky(c)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("scatter matrix is not positive definite") from exc
    half = solve_triangular(chol, y - mu[:, None], lower=True)
    return np.sum(half * half, axis=0)


def neg_log_likelihood(c, mu, tau, y, beta: float) -> float:
    """Negative log-likelihood of the perturbed model (additive constant dropped):
    ``0.5 sum_n d_n^{beta/2} / tau_n^beta + (N/2) log det C + K sum_n log tau_n``
    with ``d_n = (y_n - mu)^T C^{-1} (y_n - mu)``.
    """
    c = np.asarray(c, dtype=float)
    mu = np.asarray(mu, dtype=float)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    y = np.asarray(y, dtype=float)
    k, n = y.shape
    if np.any(tau <= 0.0):
        raise InvalidInputError("all tau values must be positive")
    d = _mahalanobis_sq(c, mu, y)
    sign, logdet = np.linalg.slogdet(c)
    if sign <= 0:
        raise SingularMatrixError("scatter matrix is not positive definite")
    data_term = 0.5 * np.sum(np.power(d, beta / 2.0) / np.power(tau, beta))
    return float(data_term + 0.5 * n * logdet + k * np.sum(np.log(tau)))


def tau_hat_concentrated(c, mu, y, beta: float) -> np.ndarray:
    """Per-sample minimizer of the likelihood over tau:
    ``tau_n = (beta d_n^{beta/2} / (2K))^{1/beta}``."""
    y = np.asarray(y, dtype=float)
    k = y.shape[0]
    d = _mahalanobis_sq(np.asarray(c, dtype=float), np.asarray(mu, dtype=float), y)
    if np.any(d == 0.0):
        idx = int(np.argmin(d))
        raise DegenerateSampleError(f"sample {idx} equals mu", index=idx)
    return np.power(beta * np.power(d, beta / 2.0) / (2.0 * k), 1.0 / beta)


def mggd_covariance_factor(beta: float, k: int, method: str = "auto") -> float:
    """Scalar relating scatter to covariance: ``cov = factor * C``.

    Exact value ``2^{2/beta} Gamma((K+2)/beta) / (K Gamma(K/beta))`` evaluated
    through log-Gamma; the Stirling form ``(1/K)(2K/beta)^{2/beta}`` replaces it
    for ``K/beta > 170`` (or on request) to avoid Gamma overflow.
    """
    if method not in ("auto", "exact", "approx"):
        raise InvalidInputError(f"unknown method {method!r}")
    if method == "approx" or (method == "auto" and k / beta > _STIRLING_SWITCH):
        return float((2.0 * k / beta) ** (2.0 / beta) / k)
    log_factor = (
        (2.0 / beta) * math.log(2.0)
        + gammaln((k + 2.0) / beta)
        - math.log(k)
        - gammaln(k / beta)
    )
    return float(math.exp(log_factor))


def scatter_to_covariance(c: np.ndarray, beta: float, k: int) -> np.ndarray:
    """Covariance matrix of an MGGD with scatter ``C``."""
    return mggd_covariance_factor(beta, k) * np.asarray(c, dtype=float)
