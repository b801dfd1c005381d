"""Reparametrized convex objective and its regularizer catalogue.

The variable change ``Q = C^{-1/2}``, ``m = Q mu``,
``theta_n = tau_n^{beta/(beta-1)}`` turns the perturbed-model likelihood into

    L~(Q, m, theta) = sum_n ||Q y_n - m||^beta / (2 theta_n^{beta-1})
                      - N log det Q + K (1 - 1/beta) sum_n log theta_n,

whose first two terms are jointly convex. The full objective adds
regularizers on ``Q`` (none / l1 / elastic net), on ``m`` (zero / fixed /
box) and a generalized-Gamma potential on ``theta`` whose log-barrier weight
``kappa`` must exceed ``K (1 - 1/beta)`` so that the rewritten cost is convex
and coercive. Outside its domain (``Q`` not positive definite or some
``theta_n <= 0``) the cost evaluates to ``+inf`` rather than raising.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConvergenceError, InvalidInputError
from .matrix_core import EIG_POSITIVITY_RTOL, eig_sym, matrix_power

# Absolute slack used when testing indicator constraints on m; keeps convex
# combinations of feasible points feasible under floating-point rounding.
_INDICATOR_ATOL = 1e-12

DEFAULT_FBAR_GRID = np.logspace(-2.0, 2.0, 400)

FBAR_CSV_HEADER = ["theta", "fbar", "alpha", "kappa_bar", "beta", "theta_bar"]
THETA_HAT_CSV_HEADER = ["theta_bar", "theta_hat", "alpha", "kappa_bar", "beta"]


@dataclass(frozen=True)
class PrimalPoint:
    """Solver state ``(Q, m, theta)`` in the reparametrized space."""

    q: np.ndarray
    m: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "m", np.asarray(self.m, dtype=float))
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))

    def norm(self) -> float:
        """Product norm ``sqrt(||Q||_F^2 + ||m||^2 + ||theta||^2)``."""
        return math.sqrt(
            float(np.sum(self.q**2) + np.sum(self.m**2) + np.sum(self.theta**2))
        )


@dataclass(frozen=True)
class QReg:
    """Precision-root regularizer: ``none``, ``l1`` or ``elastic_net``."""

    kind: str = "none"
    lam: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "l1", "elastic_net"):
            raise InvalidInputError(f"unknown gQ kind {self.kind!r}")
        if self.kind in ("l1", "elastic_net") and not self.lam > 0.0:
            raise InvalidInputError("l1/elastic_net regularization needs lam > 0")
        if self.eps < 0.0:
            raise InvalidInputError("eps must be nonnegative")


@dataclass(frozen=True)
class MReg:
    """Mean-variable regularizer: ``zero``, ``fix_at`` or ``box``."""

    kind: str = "zero"
    value: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("zero", "fix_at", "box"):
            raise InvalidInputError(f"unknown gm kind {self.kind!r}")
        if self.kind == "fix_at":
            if self.value is None:
                raise InvalidInputError("fix_at requires a target vector")
            object.__setattr__(self, "value", np.asarray(self.value, dtype=float))
        if self.kind == "box":
            if self.lower is None or self.upper is None:
                raise InvalidInputError("box requires lower and upper bounds")
            lo = np.asarray(self.lower, dtype=float)
            hi = np.asarray(self.upper, dtype=float)
            if np.any(lo > hi):
                raise InvalidInputError("box lower bound exceeds upper bound")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)


@dataclass(frozen=True)
class ThetaReg:
    """Generalized-Gamma potential ``(1/eta^alpha) ||theta||_alpha^alpha
    + kappa * sum_n (-log theta_n)``."""

    eta: float
    kappa: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.eta > 0.0:
            raise InvalidInputError("eta must be positive")
        if self.alpha < 1.0:
            raise InvalidInputError("alpha must be >= 1")


@dataclass(frozen=True)
class RegularizerSpec:
    """Bundle of the three regularizer choices.

    ``gtheta=None`` drops the theta potential entirely; the resulting cost is
    the bare reparametrized likelihood (no longer convex), useful only for
    diagnostics and equality checks against the original likelihood.
    """

    gq: QReg = field(default_factory=QReg)
    gm: MReg = field(default_factory=MReg)
    gtheta: Optional[ThetaReg] = None

    @classmethod
    def default(cls, k: int, beta: float, lam: Optional[float] = None,
                gm: Optional[MReg] = None) -> "RegularizerSpec":
        """Benchmark defaults: ``kappa = 1.1 K (1 - 1/beta)``, ``alpha = 1``,
        ``eta = (alpha/kappa)^{1/alpha}``; optional l1 weight on Q."""
        kappa = 1.1 * k * (1.0 - 1.0 / beta)
        alpha = 1.0
        gtheta = ThetaReg(eta=eta_default(alpha, kappa), kappa=kappa, alpha=alpha)
        gq = QReg("l1", lam=lam) if lam is not None else QReg()
        return cls(gq=gq, gm=gm if gm is not None else MReg(), gtheta=gtheta)

    def theta_barrier_weight(self, k: int, beta: float) -> float:
        """Weight ``kappa - K(1 - 1/beta)`` of the residual log barrier."""
        if self.gtheta is None:
            raise InvalidInputError("spec has no theta regularizer")
        return self.gtheta.kappa - k * (1.0 - 1.0 / beta)

    def validate(self, k: int, beta: float) -> None:
        """Check the convexity/coercivity conditions for dimension ``k``."""
        if self.gtheta is None:
            raise InvalidInputError("solver requires a theta regularizer")
        if not self.theta_barrier_weight(k, beta) > 0.0:
            raise InvalidInputError(
                f"kappa = {self.gtheta.kappa} must exceed K(1-1/beta) = "
                f"{k * (1.0 - 1.0 / beta)}"
            )


def eta_default(alpha: float, kappa: float) -> float:
    """Scale that centers the theta potential at 1: ``(alpha/kappa)^{1/alpha}``."""
    if kappa <= 0.0:
        raise InvalidInputError("kappa must be positive")
    return float((alpha / kappa) ** (1.0 / alpha))


def reparam_forward(c, mu, tau, beta: float) -> PrimalPoint:
    """Map ``(C, mu, tau)`` to ``(Q, m, theta)``."""
    q = matrix_power(c, -0.5)
    mu = np.asarray(mu, dtype=float)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    return PrimalPoint(q, q @ mu, np.power(tau, beta / (beta - 1.0)))


def reparam_backward(point: PrimalPoint, beta: float):
    """Map ``(Q, m, theta)`` back to ``(C, mu, tau)``."""
    c = matrix_power(point.q, -2.0)
    mu = matrix_power(point.q, -1.0) @ point.m
    tau = np.power(point.theta, (beta - 1.0) / beta)
    return c, mu, tau


def perspective_phi(u, xi: float, beta: float) -> float:
    """Lower-semicontinuous perspective envelope of ``||.||^beta / 2``.

    ``||u||^beta / (2 xi^{beta-1})`` for ``xi > 0`` (zero at ``u = 0``),
    ``0`` at ``(0, 0)``, ``+inf`` everywhere else.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    nrm = float(np.linalg.norm(u))
    if xi > 0.0:
        return nrm**beta / (2.0 * xi ** (beta - 1.0))
    if xi == 0.0 and nrm == 0.0:
        return 0.0
    return math.inf


def _gq_value(q: np.ndarray, reg: QReg) -> float:
    if reg.kind == "none":
        return 0.0
    val = reg.lam * float(np.sum(np.abs(q)))
    if reg.kind == "elastic_net":
        val += 0.5 * reg.eps * float(np.sum(q**2))
    return val


def _gm_value(m: np.ndarray, reg: MReg) -> float:
    if reg.kind == "zero":
        return 0.0
    if reg.kind == "fix_at":
        scale = max(1.0, float(np.max(np.abs(reg.value))) if reg.value.size else 1.0)
        if np.max(np.abs(m - reg.value), initial=0.0) <= _INDICATOR_ATOL * scale:
            return 0.0
        return math.inf
    scale = max(1.0, float(np.max(np.abs(reg.lower))), float(np.max(np.abs(reg.upper))))
    tol = _INDICATOR_ATOL * scale
    if np.all(m >= reg.lower - tol) and np.all(m <= reg.upper + tol):
        return 0.0
    return math.inf


def _gtheta_tilde_value(theta: np.ndarray, spec: RegularizerSpec, k: int, beta: float) -> float:
    # theta > 0 is guaranteed by the domain gate in cost_f.
    log_sum = float(np.sum(np.log(theta)))
    if spec.gtheta is None:
        return k * (1.0 - 1.0 / beta) * log_sum
    reg = spec.gtheta
    power_term = float(np.sum(np.abs(theta) ** reg.alpha)) / reg.eta**reg.alpha
    return power_term - spec.theta_barrier_weight(k, beta) * log_sum


def cost_f(point: PrimalPoint, y, spec: RegularizerSpec, beta: float) -> float:
    """Regularized objective; ``+inf`` outside the domain, never an error."""
    y = np.asarray(y, dtype=float)
    k, n = y.shape
    theta = point.theta
    if theta.shape[0] != n:
        raise InvalidInputError("theta length must match the number of samples")
    if np.any(theta <= 0.0):
        return math.inf
    w = eig_sym(point.q).eigenvalues
    if w[0] <= EIG_POSITIVITY_RTOL * max(float(w[-1]), 0.0):
        return math.inf
    resid = point.q @ y - point.m[:, None]
    norms = np.linalg.norm(resid, axis=0)
    data = float(np.sum(norms**beta / (2.0 * theta ** (beta - 1.0))))
    log_det = float(np.sum(np.log(w)))
    return (
        data
        - n * log_det
        + _gq_value(point.q, spec.gq)
        + _gm_value(point.m, spec.gm)
        + _gtheta_tilde_value(theta, spec, k, beta)
    )


@dataclass(frozen=True)
class FbarParams:
    """Parameters of the averaged per-sample objective ``fbar``.

    ``kappa_bar = kappa * beta / (K (beta - 1))`` exceeds 1 in the convex
    regime; ``kappa_bar = 0`` is accepted to express the non-regularized
    reference curve (potential removed, only the likelihood terms left).
    """

    beta: float
    alpha: float
    kappa_bar: float
    theta_bar: float

    def __post_init__(self):
        if not self.beta > 1.0:
            raise InvalidInputError("beta must exceed 1")
        if self.alpha < 1.0:
            raise InvalidInputError("alpha must be >= 1")
        if self.kappa_bar < 0.0:
            raise InvalidInputError("kappa_bar must be nonnegative")
        if not self.theta_bar > 0.0:
            raise InvalidInputError("theta_bar must be positive")


def fbar(theta_n: float, fp: FbarParams) -> float:
    """Average per-sample objective at the scale-matched eta:
    ``theta_bar^{b-1}/((b-1) theta^{b-1}) + kbar theta^a / a - (kbar-1) log theta``."""
    if theta_n <= 0.0:
        return math.inf
    b, a, kbar, tbar = fp.beta, fp.alpha, fp.kappa_bar, fp.theta_bar
    return (
        tbar ** (b - 1.0) / ((b - 1.0) * theta_n ** (b - 1.0))
        + kbar * theta_n**a / a
        - (kbar - 1.0) * math.log(theta_n)
    )


def _fbar_stationarity(theta: float, fp: FbarParams) -> float:
    """Scaled first-order condition ``1 - (tbar/theta)^{b-1} + kbar(theta^a - 1)``."""
    return (
        1.0
        - (fp.theta_bar / theta) ** (fp.beta - 1.0)
        + fp.kappa_bar * (theta**fp.alpha - 1.0)
    )


def theta_hat(fp: FbarParams, tol: float = 1e-12) -> float:
    """Unique minimizer of ``fbar``: bracketed bisection on the stationarity
    condition, starting from ``[min(theta_bar,1)/2, 2 max(theta_bar,1)]`` with
    doubling expansion when the endpoints do not straddle the root."""
    lo = min(fp.theta_bar, 1.0) / 2.0
    hi = 2.0 * max(fp.theta_bar, 1.0)
    g_lo = _fbar_stationarity(lo, fp)
    g_hi = _fbar_stationarity(hi, fp)
    for _ in range(200):
        if g_lo <= 0.0:
            break
        lo /= 2.0
        g_lo = _fbar_stationarity(lo, fp)
    else:
        raise ConvergenceError("bracket expansion failed at the lower end")
    for _ in range(200):
        if g_hi >= 0.0:
            break
        hi *= 2.0
        g_hi = _fbar_stationarity(hi, fp)
    else:
        raise ConvergenceError("bracket expansion failed at the upper end")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _fbar_stationarity(mid, fp) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fbar_curve(params_list, theta_grid=None):
    """Rows ``(theta, fbar, alpha, kappa_bar, beta, theta_bar)`` over a grid,
    one block per parameter set; defaults to 400 log-spaced points on
    ``[1e-2, 1e2]``."""
    if theta_grid is None:
        theta_grid = DEFAULT_FBAR_GRID
    rows = []
    for fp in params_list:
        for theta in np.asarray(theta_grid, dtype=float):
            rows.append(
                (float(theta), fbar(float(theta), fp), fp.alpha, fp.kappa_bar,
                 fp.beta, fp.theta_bar)
            )
    return rows


def theta_hat_curve(beta: float, alpha: float, kappa_bar: float, theta_bar_grid):
    """Rows ``(theta_bar, theta_hat, alpha, kappa_bar, beta)`` over a grid of
    true perturbation values."""
    rows = []
    for tbar in np.asarray(theta_bar_grid, dtype=float):
        fp = FbarParams(beta=beta, alpha=alpha, kappa_bar=kappa_bar, theta_bar=float(tbar))
        rows.append((float(tbar), theta_hat(fp), alpha, kappa_bar, beta))
    return rows


def write_curve_csv(rows, header, path) -> None:
    """Write curve rows with the given header; floats at full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
