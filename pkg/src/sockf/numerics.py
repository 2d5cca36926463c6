"""Small dense-matrix primitives shared by every filter in this package.

Everything here operates on matrices no larger than ~8x16, so numpy's dense
LAPACK routines are used directly.  Tolerances are module constants because
the downstream test suites pin against them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Relative Frobenius error allowed when a factor is multiplied back.
RECONSTRUCTION_RTOL = 1e-10
# Eigenvalue floor applied by psd_repair.
EIGENVALUE_FLOOR = 1e-12
# A triangular factor with a diagonal entry below this is treated as singular.
RANK_TOL = 1e-14
# Scale of the one-shot diagonal jitter added when a Cholesky attempt fails.
CHOLESKY_JITTER = 1e-10


class NumericsError(Exception):
    """Base class for numeric-kernel failures."""


class NotPositiveDefinite(NumericsError):
    """Cholesky factorization failed even after the jitter retry."""


class RankDeficient(NumericsError):
    """Triangularization produced a numerically singular factor."""


class NonFinite(NumericsError):
    """Input contains NaN or infinite entries."""


class DomainError(NumericsError):
    """Argument outside the mathematical domain of the function."""


@dataclass(frozen=True)
class SquareRootFactor:
    """Lower-triangular factor B with B @ B.T equal to some SPD matrix.

    Above-diagonal entries must be exactly zero and the diagonal strictly
    positive; construction enforces both.
    """

    entries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.entries, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError(f"factor must be square, got shape {b.shape}")
        if not np.all(np.isfinite(b)):
            raise NonFinite("factor contains non-finite entries")
        if np.any(np.triu(b, 1) != 0.0):
            raise ValueError("factor has nonzero entries above the diagonal")
        if np.any(np.diag(b) <= 0.0):
            raise RankDeficient("factor diagonal is not strictly positive")
        object.__setattr__(self, "entries", b)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Return B @ B.T."""
        return self.entries @ self.entries.T


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def cholesky_lower(p) -> SquareRootFactor:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    The input is symmetrized first (fixed-point iterations leave covariances
    mildly asymmetric through roundoff).  If the factorization fails, one
    retry is made after adding ``CHOLESKY_JITTER * trace(P)/n`` to the
    diagonal; a second failure raises :class:`NotPositiveDefinite`, which
    upstream code treats as covariance collapse.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise NonFinite("matrix contains non-finite entries")
    sym = _symmetrize(p)
    try:
        return SquareRootFactor(np.linalg.cholesky(sym))
    except (np.linalg.LinAlgError, RankDeficient):
        pass
    n = sym.shape[0]
    jitter = CHOLESKY_JITTER * max(np.trace(sym) / n, 1.0)
    try:
        return SquareRootFactor(np.linalg.cholesky(sym + jitter * np.eye(n)))
    except (np.linalg.LinAlgError, RankDeficient) as exc:
        raise NotPositiveDefinite(
            f"Cholesky failed after jitter repair (jitter={jitter:.3e})"
        ) from exc


def tria(a) -> SquareRootFactor:
    """General triangularization: lower-triangular S with S @ S.T == A @ A.T.

    Realized through the orthogonal-triangular decomposition of ``A.T``,
    keeping the transposed triangular factor.  The diagonal is normalized to
    be non-negative (any sign convention reconstructs the same product).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {a.shape}")
    n, k = a.shape
    if k < n:
        raise ValueError(f"need at least as many columns as rows, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix contains non-finite entries")
    r = np.linalg.qr(a.T, mode="r")
    s = r.T.copy()
    signs = np.sign(np.diag(s))
    signs[signs == 0.0] = 1.0
    s *= signs[None, :]
    if np.any(np.diag(s) < RANK_TOL):
        raise RankDeficient(
            f"triangular factor diagonal below {RANK_TOL:g}; implied Gram "
            "matrix is numerically singular"
        )
    return SquareRootFactor(s)


def psd_repair(p) -> np.ndarray:
    """Project a square matrix onto the symmetric PSD cone (with a floor).

    Returns ``(P + P.T)/2`` with eigenvalues clamped to at least
    ``EIGENVALUE_FLOOR``.  An input that is already exactly symmetric with
    all eigenvalues above the floor is returned unchanged.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise NonFinite("matrix contains non-finite entries")
    sym = _symmetrize(p)
    w, v = np.linalg.eigh(sym)
    if np.array_equal(sym, p) and w.min() >= EIGENVALUE_FLOOR:
        return p.copy()
    w = np.maximum(w, EIGENVALUE_FLOOR)
    return _symmetrize((v * w) @ v.T)


def gamma_fn(a: float) -> float:
    """Gamma function on the positive reals."""
    if not np.isfinite(a) or a <= 0.0:
        raise DomainError(f"gamma_fn requires a > 0, got {a!r}")
    return math.gamma(a)
