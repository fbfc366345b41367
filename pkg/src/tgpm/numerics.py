"""Dense SPD linear algebra, sample moments and quadratic-form primitives.

Matrices are plain ``numpy`` arrays. Anything treated as symmetric positive
definite goes through :func:`as_spd`, which symmetrizes with ``(M + M.T) / 2``
before use; positive definiteness is checked by the Cholesky pivots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .errors import DimensionMismatch, InsufficientData, NotPositiveDefinite

#: Relative pivot tolerance: every squared pivot must exceed this times max(diag).
PIVOT_RTOL = 1e-12


def as_spd(m: ArrayLike) -> NDArray[np.float64]:
    """Return ``m`` as a symmetrized float matrix (no definiteness check)."""
    m = np.array(m, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] == 0:
        raise DimensionMismatch("matrix must have dim >= 1")
    return 0.5 * (m + m.T)


def cholesky(m: ArrayLike) -> NDArray[np.float64]:
    """Lower-triangular Cholesky factor ``L`` with ``L @ L.T == m``.

    Raises
    ------
    NotPositiveDefinite
        If the factorization breaks down or any squared pivot is at most
        ``1e-12 * max(diag(m))``.
    """
    m = as_spd(m)
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    scale = float(np.max(np.diag(m)))
    if not scale > 0.0:
        raise NotPositiveDefinite("matrix has no positive diagonal entry")
    try:
        L = linalg.cholesky(m, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(L) ** 2
    bad = np.flatnonzero(pivots <= PIVOT_RTOL * scale)
    if bad.size:
        raise NotPositiveDefinite(
            f"pivot {bad[0]} is {pivots[bad[0]]:.3g}, below {PIVOT_RTOL:g} x max diagonal"
        )
    return L


def invert_spd(m: ArrayLike) -> NDArray[np.float64]:
    """Inverse of an SPD matrix through its Cholesky factor."""
    L = cholesky(m)
    inv = linalg.cho_solve((L, True), np.eye(L.shape[0]), check_finite=False)
    return 0.5 * (inv + inv.T)


def inv_sqrt_spd(m: ArrayLike) -> NDArray[np.float64]:
    """Symmetric inverse square root ``R`` such that ``R @ m @ R == I``.

    Uses the symmetric eigendecomposition rather than the Cholesky factor, so
    the result is itself symmetric.
    """
    m = as_spd(m)
    cholesky(m)
    w, v = np.linalg.eigh(m)
    r = (v / np.sqrt(w)) @ v.T
    return 0.5 * (r + r.T)


@dataclass(frozen=True)
class MomentSummary:
    """Column means and (n - 1)-divisor covariance of a sample."""

    mean: NDArray[np.float64]
    covariance: NDArray[np.float64]
    n: int
    demean: bool = True

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _as_panel(r: ArrayLike) -> NDArray[np.float64]:
    x = np.asarray(r, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D (n, d) array, got shape {x.shape}")
    return x


def sample_moments(r: ArrayLike, demean: bool = True) -> MomentSummary:
    """Sample mean and covariance of the rows of ``r``.

    The covariance always centers the data and uses the divisor ``n - 1``.
    ``demean`` is carried along for downstream estimators, which subtract the
    reported mean only when it is set.
    """
    x = _as_panel(r)
    n = x.shape[0]
    if n < 2:
        raise InsufficientData(f"need at least 2 observations, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    return MomentSummary(mean=mean, covariance=0.5 * (cov + cov.T), n=n, demean=demean)


def mahalanobis(x: ArrayLike, mu: ArrayLike, precision: ArrayLike) -> float:
    """Quadratic form ``(x - mu)' P (x - mu)``, clipped at zero."""
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    p = as_spd(precision)
    if x.shape != mu.shape or x.ndim != 1 or p.shape[0] != x.shape[0]:
        raise DimensionMismatch(
            f"x {x.shape}, mu {mu.shape} and precision {p.shape} disagree"
        )
    z = x - mu
    return max(float(z @ p @ z), 0.0)


def quad_forms(x: ArrayLike, precision: ArrayLike) -> NDArray[np.float64]:
    """Row-wise ``x_i' P x_i`` for an ``(n, d)`` array of already-centered rows."""
    x = _as_panel(x)
    p = as_spd(precision)
    if p.shape[0] != x.shape[1]:
        raise DimensionMismatch(f"rows have dim {x.shape[1]}, precision is {p.shape}")
    return np.maximum(np.einsum("ij,jk,ik->i", x, p, x), 0.0)


def frobenius_distance(a: ArrayLike, b: ArrayLike) -> float:
    """``||a - b||_F``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def mori_kurtosis(y: ArrayLike) -> NDArray[np.float64]:
    r"""Empirical Mori kurtosis matrix of standardized rows ``y``.

    .. math:: \hat K = \frac{1}{n}\sum_i (y_i^\top y_i)\, y_i y_i^\top - (d+2) I_d

    It vanishes in expectation for Gaussian data, and
    ``trace(K + (d + 2) I)`` equals the sample mean of ``(y' y)**2`` exactly.
    """
    y = _as_panel(y)
    n, d = y.shape
    if n < 1:
        raise InsufficientData("need at least one observation")
    r2 = np.einsum("ij,ij->i", y, y)
    k = (y * r2[:, None]).T @ y / n - (d + 2) * np.eye(d)
    return 0.5 * (k + k.T)
