"""Proximity operators used by the primal-dual solver.

Scalar root-finding follows one rule everywhere: a guaranteed bracket plus
bisection (optionally Newton-accelerated), since the minimized functions all
have unique roots of their optimality conditions. The perspective prox and
the power penalty accept arrays and solve all per-sample roots in lockstep,
which is what keeps the solver's inner loop cheap.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InvalidInputError
from .matrix_core import eig_sym, symmetrize
from .objective import MReg

_ROOT_ATOL = 1e-12
_MAX_DOUBLINGS = 200
_MAX_BISECT = 500


def prox_log_barrier(xi, gamma: float, weight: float = 1.0):
    """Prox of ``gamma * weight * (-log)``: ``(xi + sqrt(xi^2 + 4 gamma weight)) / 2``.

    Accepts scalars or arrays; the result is always strictly positive.
    """
    if not gamma * weight > 0.0:
        raise InvalidInputError("gamma * weight must be positive")
    xi = np.asarray(xi, dtype=float)
    out = 0.5 * (xi + np.sqrt(xi**2 + 4.0 * gamma * weight))
    return float(out) if out.ndim == 0 else out


def prox_logdet(q: np.ndarray, gamma: float, n_samples: int) -> np.ndarray:
    """Prox of ``gamma * (-n_samples * log det)`` on symmetric matrices.

    Eigenvalue decomposition, scalar log-barrier prox on each eigenvalue,
    reconstruction; output is always positive definite.
    """
    w, u = eig_sym(symmetrize(q))
    w_new = prox_log_barrier(w, gamma, weight=float(n_samples))
    return symmetrize((u * w_new) @ u.T)


def prox_l1_sym(q: np.ndarray, threshold: float) -> np.ndarray:
    """Entrywise soft-thresholding; diagonal treated like any other entry."""
    if threshold < 0.0:
        raise InvalidInputError("threshold must be nonnegative")
    q = np.asarray(q, dtype=float)
    return np.sign(q) * np.maximum(np.abs(q) - threshold, 0.0)


def prox_elastic_net_sym(q: np.ndarray, lam: float, eps: float, gamma: float) -> np.ndarray:
    """Prox of ``gamma * (lam ||.||_1 + eps/2 ||.||_F^2)``."""
    return prox_l1_sym(q, gamma * lam) / (1.0 + gamma * eps)


def prox_gq(q: np.ndarray, gamma: float, reg) -> np.ndarray:
    """Prox of ``gamma * g_Q`` for the catalogue kinds."""
    if reg.kind == "none":
        return np.asarray(q, dtype=float)
    if reg.kind == "l1":
        return prox_l1_sym(q, gamma * reg.lam)
    return prox_elastic_net_sym(q, reg.lam, reg.eps, gamma)


def prox_gm(m: np.ndarray, gamma: float, reg: MReg) -> np.ndarray:
    """Prox of ``gamma * g_m``: identity, projection onto a point, or a box clamp."""
    m = np.asarray(m, dtype=float)
    if reg.kind == "zero":
        return m
    if reg.kind == "fix_at":
        return reg.value.copy()
    return np.clip(m, reg.lower, reg.upper)


def prox_power_penalty(t, gamma: float, eta: float, alpha: float):
    """Prox of ``gamma * |x|^alpha / eta^alpha`` componentwise.

    Closed forms for ``alpha`` in {1, 2}; otherwise the unique root of
    ``x + (gamma alpha / eta^alpha) x^{alpha-1} = |t|`` on ``[0, |t|]`` found by
    Newton steps safeguarded by a bisection bracket (tolerance 1e-12).
    """
    if gamma <= 0.0 or eta <= 0.0 or alpha < 1.0:
        raise InvalidInputError("need gamma > 0, eta > 0, alpha >= 1")
    t_in = np.asarray(t, dtype=float)
    scalar = t_in.ndim == 0
    t_arr = np.atleast_1d(t_in)
    if alpha == 1.0:
        out = np.sign(t_arr) * np.maximum(np.abs(t_arr) - gamma / eta, 0.0)
    elif alpha == 2.0:
        out = t_arr / (1.0 + 2.0 * gamma / eta**2)
    else:
        out = np.sign(t_arr) * _power_root(np.abs(t_arr), gamma * alpha / eta**alpha, alpha)
    return float(out[0]) if scalar else out


def _power_root(s: np.ndarray, c: float, alpha: float) -> np.ndarray:
    """Vectorized root of ``x + c x^{alpha-1} = s`` on ``[0, s]`` for s >= 0."""
    lo = np.zeros_like(s)
    hi = s.copy()
    x = s.copy()
    for it in range(_MAX_DOUBLINGS):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            h = x + c * np.power(x, alpha - 1.0) - s
        hi = np.where(h >= 0.0, np.minimum(hi, x), hi)
        lo = np.where(h < 0.0, np.maximum(lo, x), lo)
        mid = 0.5 * (lo + hi)
        # Stop at the tolerance or when the bracket has no representable midpoint.
        done = ((hi - lo) <= _ROOT_ATOL) | ~((mid > lo) & (mid < hi))
        if np.all(done):
            break
        if it % 2 == 0:
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                dh = 1.0 + c * (alpha - 1.0) * np.power(x, alpha - 2.0)
                newton = x - h / dh
            good = np.isfinite(newton) & (newton > lo) & (newton < hi)
            step = np.where(good, newton, mid)
        else:
            step = mid
        x = np.where(done, x, step)
    else:
        raise ConvergenceError(
            f"power-penalty prox did not converge in {_MAX_DOUBLINGS} iterations",
            last_estimate=x,
        )
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class PerspectiveProxParams:
    """Exponent pair and scale of the perspective prox:
    ``beta_star = beta/(beta-1)``, ``varrho = (2(1 - 1/beta_star))^{beta_star-1}``."""

    beta_star: float
    varrho: float
    gamma: float

    def __post_init__(self):
        if not (self.beta_star > 1.0 and self.varrho > 0.0 and self.gamma > 0.0):
            raise InvalidInputError("need beta_star > 1, varrho > 0, gamma > 0")

    @classmethod
    def from_beta(cls, beta: float, gamma: float) -> "PerspectiveProxParams":
        beta_star = beta / (beta - 1.0)
        varrho = (2.0 * (1.0 - 1.0 / beta_star)) ** (beta_star - 1.0)
        return cls(beta_star=beta_star, varrho=varrho, gamma=gamma)


def _perspective_root(norms: np.ndarray, xi: np.ndarray, pp: PerspectiveProxParams) -> np.ndarray:
    """Positive root of ``s^{2b-1} + (b xi/(g r)) s^{b-1} + (b/r^2) s = (b/(g r^2)) ||u||``
    per column (b = beta_star, g = gamma, r = varrho).

    The left side is ``-(b/(g r^2))||u|| < 0`` at 0 and grows without bound, so a
    doubling bracket followed by bisection always succeeds.
    """
    b, g, r = pp.beta_star, pp.gamma, pp.varrho
    a1 = b * xi / (g * r)
    a2 = b / r**2
    rhs = (b / (g * r**2)) * norms

    def poly(s):
        return s ** (2.0 * b - 1.0) + a1 * s ** (b - 1.0) + a2 * s - rhs

    hi = np.ones_like(norms)
    for _ in range(_MAX_DOUBLINGS):
        mask = poly(hi) <= 0.0
        if not np.any(mask):
            break
        hi[mask] *= 2.0
    else:
        raise ConvergenceError("perspective prox bracket expansion failed")
    lo = np.zeros_like(norms)
    for _ in range(_MAX_BISECT):
        active = (hi - lo) > _ROOT_ATOL
        if not np.any(active):
            break
        mid = 0.5 * (lo + hi)
        # Stop elements whose bracket has no representable midpoint left.
        active &= (mid > lo) & (mid < hi)
        if not np.any(active):
            break
        neg = poly(mid) < 0.0
        lo = np.where(active & neg, mid, lo)
        hi = np.where(active & ~neg, mid, hi)
    return 0.5 * (lo + hi)


def prox_perspective_batch(u: np.ndarray, xi: np.ndarray, pp: PerspectiveProxParams):
    """Perspective prox applied to every column of ``u`` (K x N) with matching
    offsets ``xi`` (length N); returns ``(K x N array, length-N array)``."""
    u = np.asarray(u, dtype=float)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    b, g, r = pp.beta_star, pp.gamma, pp.varrho
    norms = np.linalg.norm(u, axis=0)
    disc = b * g ** (b - 1.0) * xi + r * norms**b
    nontrivial = (norms > 0.0) & (disc > 0.0)
    keep_xi = (norms == 0.0) & (xi > 0.0)

    out_u = np.zeros_like(u)
    out_xi = np.where(keep_xi, xi, 0.0)
    if np.any(nontrivial):
        idx = np.nonzero(nontrivial)[0]
        t = _perspective_root(norms[idx], xi[idx], pp)
        shrink = 1.0 - g * t / norms[idx]
        out_u[:, idx] = u[:, idx] * shrink
        out_xi[idx] = xi[idx] + (g * r / b) * t**b
    return out_u, out_xi


def prox_perspective(u, xi: float, pp: PerspectiveProxParams):
    """Single-sample perspective prox; returns ``(vector, scalar)``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out_u, out_xi = prox_perspective_batch(u[:, None], np.array([xi]), pp)
    return out_u[:, 0], float(out_xi[0])


def _weighted_gamma(gamma1: float, gamma2: float, beta: float) -> float:
    return math.sqrt(gamma1**beta / gamma2 ** (beta - 1.0))


def prox_perspective_weighted_batch(u: np.ndarray, xi: np.ndarray,
                                    gamma1: float, gamma2: float, beta: float):
    """Perspective prox in the metric ``||.||^2/gamma1 + (.)^2/gamma2`` via the
    change of variables with effective scale ``sqrt(gamma1^beta / gamma2^{beta-1})``."""
    if gamma1 <= 0.0 or gamma2 <= 0.0:
        raise InvalidInputError("metric weights must be positive")
    pp = PerspectiveProxParams.from_beta(beta, _weighted_gamma(gamma1, gamma2, beta))
    s1, s2 = math.sqrt(gamma1), math.sqrt(gamma2)
    a, b = prox_perspective_batch(np.asarray(u, dtype=float) / s1,
                                  np.asarray(xi, dtype=float) / s2, pp)
    return s1 * a, s2 * b


def prox_perspective_weighted(u, xi: float, gamma1: float, gamma2: float, beta: float):
    """Single-sample weighted perspective prox; returns ``(vector, scalar)``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out_u, out_xi = prox_perspective_weighted_batch(
        u[:, None], np.array([xi]), gamma1, gamma2, beta
    )
    return out_u[:, 0], float(out_xi[0])
