"""Dense symmetric-matrix primitives: eigendecomposition, powers, norms.

Everything here works on plain ``numpy`` arrays. A "symmetric matrix" is a
square 2-D float array with ``A[i, j] == A[j, i]`` exactly; :func:`symmetrize`
produces one from any square array. Eigen-based routines rely on LAPACK's
symmetric solver (``numpy.linalg.eigh``), which is deterministic for a fixed
input on a fixed platform.
"""

from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, InvalidInputError, SingularMatrixError

# Relative eigenvalue threshold below which a matrix is treated as singular
# for fractional/negative powers.
EIG_POSITIVITY_RTOL = 1e-12

_POWER_ITER_RTOL = 1e-10
_POWER_ITER_CAP = 10_000


class SpectralDecomp(NamedTuple):
    """Eigendecomposition ``A = U diag(eigenvalues) U^T``.

    ``eigenvalues`` are sorted ascending; ``eigenvectors`` holds the
    corresponding orthonormal eigenvectors as columns.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return ``(A + A^T) / 2``; raises on non-square input."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {a.shape}")
    return (a + a.T) / 2.0


def eig_sym(a: np.ndarray) -> SpectralDecomp:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    a = symmetrize(a)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    w, u = np.linalg.eigh(a)
    return SpectralDecomp(w, u)


def matrix_power(a: np.ndarray, p: float) -> np.ndarray:
    """Symmetric matrix power ``A^p`` via spectral calculus.

    For negative or fractional ``p`` every eigenvalue must exceed
    ``EIG_POSITIVITY_RTOL * max(eigenvalues)``; otherwise a
    :class:`SingularMatrixError` reports the offending eigenvalue.
    """
    w, u = eig_sym(a)
    needs_positive = (p < 0) or (float(p) != int(p))
    if needs_positive:
        floor = EIG_POSITIVITY_RTOL * max(float(w[-1]), 0.0)
        if w[0] <= floor:
            raise SingularMatrixError(
                f"eigenvalue {w[0]:.6e} too small for power {p}", eigenvalue=float(w[0])
            )
    return symmetrize((u * np.power(w, p)) @ u.T)


def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value of a rectangular matrix.

    Power iteration on the smaller Gram matrix of ``M``, deterministic start
    vector (normalized all-ones, first coordinate perturbed by 1e-3 to avoid
    orthogonal starts), relative tolerance 1e-10, iteration cap 10 000.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix has non-finite entries")
    if m.size == 0:
        return 0.0
    # Iterate on G = M M^T or M^T M, whichever is smaller.
    g = m @ m.T if m.shape[0] <= m.shape[1] else m.T @ m
    n = g.shape[0]
    v = np.ones(n)
    v[0] += 1e-3
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(_POWER_ITER_CAP):
        gv = g @ v
        norm_gv = np.linalg.norm(gv)
        if norm_gv == 0.0:
            return 0.0
        v = gv / norm_gv
        lam_new = float(v @ (g @ v))
        if abs(lam_new - lam) <= _POWER_ITER_RTOL * max(abs(lam_new), 1e-300):
            return float(np.sqrt(max(lam_new, 0.0)))
        lam = lam_new
    raise ConvergenceError(
        f"power iteration did not converge in {_POWER_ITER_CAP} iterations",
        last_estimate=float(np.sqrt(max(lam, 0.0))),
    )


def min_eigenvalue(a: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(eig_sym(a).eigenvalues[0])


def is_spd(a: np.ndarray) -> bool:
    """True when all eigenvalues clear the relative positivity threshold."""
    w = eig_sym(a).eigenvalues
    return bool(w[0] > EIG_POSITIVITY_RTOL * max(float(w[-1]), 0.0))
