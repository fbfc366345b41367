"""Local dependence function (LDF) of t-Student and Gaussian densities.

The LDF at a point ``x`` is the Hessian of ``log f`` there; entry ``(p, q)`` is
the conditional local dependence of ``x_p`` and ``x_q`` given the other
coordinates. For the multivariate t with location ``mu``, scatter ``sigma``
and ``nu`` degrees of freedom, with ``z = sigma^{-1} (x - mu)`` and
``delta = (x - mu)' z``::

    H(x) = -(nu + d)/nu * [ sigma^{-1} / (1 + delta/nu)
                            - 2 z z' / (nu (1 + delta/nu)**2) ]
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from os import PathLike
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import gammaln

from .errors import DimensionMismatch, NonFiniteDensity
from .numerics import as_spd, cholesky, invert_spd


@dataclass(frozen=True)
class TStudentParams:
    """Location ``mu``, scatter ``sigma`` and degrees of freedom ``nu``.

    ``nu`` is any positive real. The covariance ``nu / (nu - 2) * sigma`` only
    exists for ``nu > 2``; see :attr:`has_covariance`.
    """

    mu: NDArray[np.float64]
    sigma: NDArray[np.float64]
    nu: float

    def __post_init__(self):
        sigma = as_spd(self.sigma)
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if mu.shape != (sigma.shape[0],):
            raise DimensionMismatch(f"mu has shape {mu.shape}, sigma is {sigma.shape}")
        nu = float(self.nu)
        if not nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)

    @classmethod
    def bivariate(cls, rho: float, nu: float) -> "TStudentParams":
        """Zero-location bivariate t with unit scales and correlation ``rho``."""
        return cls(np.zeros(2), np.array([[1.0, rho], [rho, 1.0]]), nu)

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    @property
    def has_covariance(self) -> bool:
        return self.nu > 2

    @property
    def covariance(self) -> NDArray[np.float64]:
        if not self.has_covariance:
            raise ValueError(f"covariance is undefined for nu = {self.nu} <= 2")
        return self.nu / (self.nu - 2.0) * self.sigma

    @cached_property
    def precision(self) -> NDArray[np.float64]:
        return invert_spd(self.sigma)

    @cached_property
    def log_norm_const(self) -> float:
        nu, d = self.nu, self.d
        logdet = 2.0 * float(np.sum(np.log(np.diag(cholesky(self.sigma)))))
        return (
            gammaln((nu + d) / 2.0)
            - gammaln(nu / 2.0)
            - 0.5 * d * math.log(nu * math.pi)
            - 0.5 * logdet
        )


def _point(x: ArrayLike, d: int) -> NDArray[np.float64]:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise DimensionMismatch(f"point has shape {x.shape}, expected ({d},)")
    return x


def t_log_density(x: ArrayLike, params: TStudentParams) -> float:
    """Log density of the multivariate t at ``x``."""
    z = _point(x, params.d) - params.mu
    delta = max(float(z @ params.precision @ z), 0.0)
    return params.log_norm_const - 0.5 * (params.nu + params.d) * math.log1p(delta / params.nu)


def gaussian_log_density(x: ArrayLike, mu: ArrayLike, sigma: ArrayLike) -> float:
    sigma = as_spd(sigma)
    d = sigma.shape[0]
    z = _point(x, d) - np.asarray(mu, dtype=float)
    L = cholesky(sigma)
    u = np.linalg.solve(L, z)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return -0.5 * (d * math.log(2 * math.pi) + logdet + float(u @ u))


def _sym(m):
    return 0.5 * (m + m.T)


def ldf_t_exact(x: ArrayLike, params: TStudentParams) -> NDArray[np.float64]:
    """Closed-form LDF matrix of the t density at ``x``."""
    nu, d, prec = params.nu, params.d, params.precision
    z = prec @ (_point(x, d) - params.mu)
    delta = max(float((_point(x, d) - params.mu) @ z), 0.0)
    a = 1.0 + delta / nu
    h = -(nu + d) / nu * (prec / a - 2.0 * np.outer(z, z) / (nu * a * a))
    return _sym(h)


def ldf_t_taylor(x: ArrayLike, params: TStudentParams) -> NDArray[np.float64]:
    """LDF of the third-order expansion of ``log f`` around ``delta = 0``.

    With ``s = delta / nu``, ``delta' = 2 z`` and ``delta'' = 2 sigma^{-1}``::

        H ~ -(nu + d)/2 * [ delta''/nu * (1 - s + s**2)
                            - delta' delta'^T / nu**2 * (1 - 2 s) ]

    Only meaningful for ``delta(x) < 1``; the error against
    :func:`ldf_t_exact` is ``O(|x - mu|**6)``.
    """
    nu, d, prec = params.nu, params.d, params.precision
    xc = _point(x, d) - params.mu
    z = prec @ xc
    s = max(float(xc @ z), 0.0) / nu
    dd = 2.0 * prec
    dp = 2.0 * z
    h = -(nu + d) / 2.0 * (dd / nu * (1.0 - s + s * s) - np.outer(dp, dp) / nu**2 * (1.0 - 2.0 * s))
    return _sym(h)


def ldf_gaussian(sigma: ArrayLike) -> NDArray[np.float64]:
    """The Gaussian LDF, ``-sigma^{-1}``, constant in ``x``."""
    return -invert_spd(sigma)


def ldf_numeric(
    log_density: Callable[[NDArray[np.float64]], float],
    x: ArrayLike,
    h: float = 1e-4,
) -> NDArray[np.float64]:
    """Central-difference Hessian of ``log_density`` at ``x``.

    Off-diagonal entries use the four-point cross stencil
    ``(f++ - f+- - f-+ + f--) / (4 h^2)``, diagonal entries the three-point
    second difference. The result is symmetrized.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.shape[0]

    def f(p):
        v = float(log_density(p))
        if not math.isfinite(v):
            raise NonFiniteDensity(f"log density is {v} at {p}")
        return v

    eye = np.eye(d) * h
    f0 = f(x)
    plus = [f(x + eye[p]) for p in range(d)]
    minus = [f(x - eye[p]) for p in range(d)]
    out = np.empty((d, d))
    for p in range(d):
        out[p, p] = (plus[p] - 2.0 * f0 + minus[p]) / (h * h)
        for q in range(p + 1, d):
            fpp = f(x + eye[p] + eye[q])
            fpm = f(x + eye[p] - eye[q])
            fmp = f(x - eye[p] + eye[q])
            fmm = f(x - eye[p] - eye[q])
            out[p, q] = out[q, p] = (fpp - fpm - fmp + fmm) / (4.0 * h * h)
    return _sym(out)


@dataclass(frozen=True)
class LdfGrid:
    """Entry ``(p, q)`` of the t LDF tabulated over a 2-D grid.

    ``values[i, j]`` is the LDF at ``x_p = x_values[i]``, ``x_q = y_values[j]``
    with every other coordinate held at ``conditioning_point``.
    """

    pair: tuple[int, int]
    x_values: NDArray[np.float64]
    y_values: NDArray[np.float64]
    values: NDArray[np.float64]
    conditioning_point: NDArray[np.float64]

    def to_csv(self, path: str | PathLike) -> None:
        """Write ``x,y,gamma`` rows, x-major, at 17 significant digits."""
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())

    def to_csv_text(self) -> str:
        lines = ["x,y,gamma"]
        for i, xv in enumerate(self.x_values):
            for j, yv in enumerate(self.y_values):
                lines.append("%.17g,%.17g,%.17g" % (xv, yv, self.values[i, j]))
        return "\n".join(lines) + "\n"


def _axis(lo: float, hi: float, steps: int) -> NDArray[np.float64]:
    # Built from an exactly antisymmetric unit grid so that [-a, a] axes are
    # mirror-symmetric to the bit and hit 0 when steps is odd.
    u = np.linspace(-1.0, 1.0, steps)
    u = 0.5 * (u - u[::-1])
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * u


def ldf_grid(
    params: TStudentParams,
    pair: tuple[int, int] = (0, 1),
    axes: tuple[tuple[float, float, int], tuple[float, float, int]] = ((-4.0, 4.0, 101), (-4.0, 4.0, 101)),
    conditioning_point: ArrayLike | None = None,
) -> LdfGrid:
    """Tabulate ``ldf_t_exact(x)[p, q]`` while ``x_p`` and ``x_q`` sweep ``axes``.

    Each axis is ``(min, max, steps)``. Coordinates outside the pair stay at
    ``conditioning_point`` (zeros by default).
    """
    p, q = pair
    d = params.d
    if p == q or not (0 <= p < d and 0 <= q < d):
        raise ValueError(f"pair {pair} must be two distinct indices below {d}")
    (x0, x1, nx), (y0, y1, ny) = axes
    if nx < 2 or ny < 2:
        raise ValueError("each axis needs at least 2 steps")
    xs = _axis(x0, x1, int(nx))
    ys = _axis(y0, y1, int(ny))
    base = np.zeros(d) if conditioning_point is None else _point(conditioning_point, d).copy()
    values = np.empty((xs.size, ys.size))
    point = base.copy()
    for i, xv in enumerate(xs):
        point[p] = xv
        for j, yv in enumerate(ys):
            point[q] = yv
            values[i, j] = ldf_t_exact(point, params)[p, q]
    return LdfGrid((p, q), xs, ys, values, base)
