"""Generalized precision matrix (GPM) estimators for t-Student data.

All estimators share one per-observation term. For a centered observation
``x_i`` with ``z_i = S^{-1} x_i``, ``delta_i = x_i' z_i`` and
``a_i = 1 + delta_i / nu``::

    T_i = S^{-1} / a_i - 2 z_i z_i' / (nu a_i**2)

which is ``-nu/(nu + d)`` times the LDF at ``x_i``. Then

* signed:  ``(nu + d)/nu * mean_i T_i``
* abs:     ``(nu + d)/nu * mean_i |T_i|`` (elementwise)
* region:  ``(nu + d)/nu * (1/n) sum_i T_i 1[x_ip^2 + x_iq^2 >= t]``
* taylor:  minus the sample mean of the third-order expanded LDF.

``S`` is the window sample covariance unless a matrix is supplied.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .data import ReturnsMatrix, as_values
from .errors import EmptyRegion, InsufficientData, DimensionMismatch
from .numerics import (
    MomentSummary,
    as_spd,
    inv_sqrt_spd,
    invert_spd,
    mori_kurtosis,
    quad_forms,
    sample_moments,
)


class GpmKind(str, Enum):
    INVERSE_COVARIANCE = "InverseCovariance"
    SIGNED = "Signed"
    ABS = "Abs"
    REGION = "Region"
    TAYLOR = "Taylor"

    @classmethod
    def parse(cls, name: "str | GpmKind") -> "GpmKind":
        if isinstance(name, GpmKind):
            return name
        key = str(name).strip().lower()
        if key in _KIND_ALIASES:
            return _KIND_ALIASES[key]
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise ValueError(f"unknown estimator kind {name!r}")

    @property
    def flag(self) -> str:
        return _KIND_FLAGS[self]


_KIND_ALIASES = {
    "inv": GpmKind.INVERSE_COVARIANCE,
    "signed": GpmKind.SIGNED,
    "abs": GpmKind.ABS,
    "region": GpmKind.REGION,
    "taylor": GpmKind.TAYLOR,
}
_KIND_FLAGS = {v: k for k, v in _KIND_ALIASES.items()}


@dataclass(frozen=True)
class GpmEstimate:
    """A symmetric ``d x d`` estimate tagged with how it was produced."""

    matrix: NDArray[np.float64]
    kind: GpmKind
    nu: float | None
    n: int
    region_threshold: float | None = None
    pair: tuple[int, int] | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value, "nu": self.nu, "n": self.n}
        if self.kind is GpmKind.REGION:
            out["region_threshold"] = self.region_threshold
            out["pair"] = list(self.pair) if self.pair is not None else None
        out["matrix"] = self.matrix.tolist()
        return out

    def to_json(self) -> str:
        """JSON with every float written at 17 significant digits."""
        head = {k: v for k, v in self.to_dict().items() if k != "matrix"}
        parts = [f"{json.dumps(k)}: {_json_value(v)}" for k, v in head.items()]
        rows = ",\n    ".join(
            "[" + ", ".join(_fmt(v) for v in row) + "]" for row in self.matrix
        )
        parts.append('"matrix": [\n    ' + rows + "\n  ]")
        return "{\n  " + ",\n  ".join(parts) + "\n}\n"

    @classmethod
    def from_json(cls, text: str) -> "GpmEstimate":
        obj = json.loads(text)
        pair = obj.get("pair")
        return cls(
            matrix=np.array(obj["matrix"], dtype=float),
            kind=GpmKind.parse(obj["kind"]),
            nu=None if obj.get("nu") is None else float(obj["nu"]),
            n=int(obj["n"]),
            region_threshold=obj.get("region_threshold"),
            pair=None if pair is None else tuple(pair),
        )


def _fmt(x: float) -> str:
    x = float(x)
    if np.isfinite(x):
        return "%.17g" % x
    return json.dumps(x)  # Infinity / NaN (non-standard JSON, but round-trips in Python)


def _json_value(v) -> str:
    if isinstance(v, float):
        return _fmt(v)
    return json.dumps(v)


def standardize(r: ArrayLike | ReturnsMatrix, moments: MomentSummary):
    """Rows ``y_i = S^{-1/2} (x_i - mean)`` using the given moments."""
    x = as_values(r)
    y = (x - moments.mean) @ inv_sqrt_spd(moments.covariance)
    if isinstance(r, ReturnsMatrix):
        return ReturnsMatrix(r.dates, r.assets, y)
    return y


@dataclass(frozen=True)
class _Window:
    xc: NDArray[np.float64]
    sigma: NDArray[np.float64]
    precision: NDArray[np.float64]
    nu: float

    @property
    def n(self) -> int:
        return self.xc.shape[0]

    @property
    def d(self) -> int:
        return self.xc.shape[1]


def _prepare(r, nu, *, mu=None, sigma=None, demean=True, scatter_rescale=False) -> _Window:
    nu = float(nu)
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    x = as_values(r)
    n, d = x.shape
    if sigma is None:
        if n < d + 1:
            raise InsufficientData(f"window of {n} rows cannot support d = {d} (need n >= d + 1)")
        sigma = sample_moments(x).covariance
    else:
        sigma = as_spd(sigma)
        if sigma.shape[0] != d:
            raise DimensionMismatch(f"sigma is {sigma.shape}, data has {d} columns")
        if n < 1:
            raise InsufficientData("empty window")
    if scatter_rescale:
        if nu <= 2:
            raise ValueError("scatter rescaling needs nu > 2")
        sigma = sigma * (nu - 2.0) / nu
    if mu is not None:
        xc = x - np.asarray(mu, dtype=float)
    elif demean:
        xc = x - x.mean(axis=0)
    else:
        xc = x
    return _Window(xc=xc, sigma=sigma, precision=invert_spd(sigma), nu=nu)


def _weighted_signed_sum(w: _Window, mask: NDArray[np.bool_] | None) -> NDArray[np.float64]:
    """``(nu + d)/nu * (1/n) * sum_i mask_i T_i`` without materializing the ``T_i``."""
    nu, d, n = w.nu, w.d, w.n
    delta = quad_forms(w.xc, w.precision)
    a = 1.0 + delta / nu
    inv_a = 1.0 / a
    inv_a2 = inv_a * inv_a
    if mask is not None:
        inv_a = np.where(mask, inv_a, 0.0)
        inv_a2 = np.where(mask, inv_a2, 0.0)
    z = w.xc @ w.precision
    first = w.precision * (np.sum(inv_a) / n)
    second = (z * (inv_a2 / n)[:, None]).T @ z * (2.0 / nu)
    out = (nu + d) / nu * (first - second)
    return 0.5 * (out + out.T)


def estimate_gpm(
    r: ArrayLike,
    nu: float,
    *,
    mu: ArrayLike | None = None,
    sigma: ArrayLike | None = None,
    demean: bool = True,
    scatter_rescale: bool = False,
) -> GpmEstimate:
    """Signed GPM: minus the sample mean of the t LDF over the window.

    Parameters
    ----------
    r : array_like, shape (n, d)
        Window of returns.
    nu : float
        Degrees of freedom plugged into the t LDF.
    mu, sigma : array_like, optional
        Known location and scatter. By default the window is demeaned by its
        sample mean and ``sigma`` is the ``(n - 1)``-divisor sample covariance.
    demean : bool
        Subtract the sample mean when ``mu`` is not given.
    scatter_rescale : bool
        Use ``(nu - 2)/nu * sigma`` (the t scatter implied by a covariance)
        instead of ``sigma``.

    Notes
    -----
    The result is symmetric but not necessarily positive definite.
    """
    w = _prepare(r, nu, mu=mu, sigma=sigma, demean=demean, scatter_rescale=scatter_rescale)
    return GpmEstimate(_weighted_signed_sum(w, None), GpmKind.SIGNED, w.nu, w.n)


def _chunks(n: int, d: int, budget: int = 2_000_000):
    step = max(1, budget // max(1, d * d))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def estimate_gpm_abs(
    r: ArrayLike,
    nu: float,
    *,
    mu: ArrayLike | None = None,
    sigma: ArrayLike | None = None,
    demean: bool = True,
    scatter_rescale: bool = False,
) -> GpmEstimate:
    """Absolute GPM: sample mean of the elementwise absolute t LDF.

    Zeros of the population version identify conditional independence. Every
    entry dominates the absolute value of the signed estimate.
    """
    w = _prepare(r, nu, mu=mu, sigma=sigma, demean=demean, scatter_rescale=scatter_rescale)
    nu, d, n = w.nu, w.d, w.n
    total = np.zeros((d, d))
    for sl in _chunks(n, d):
        xc = w.xc[sl]
        a = 1.0 + quad_forms(xc, w.precision) / nu
        z = xc @ w.precision
        terms = w.precision[None, :, :] / a[:, None, None] - (2.0 / nu) * (
            z[:, :, None] * z[:, None, :] / (a * a)[:, None, None]
        )
        total += np.abs(terms).sum(axis=0)
    out = (nu + d) / nu * total / n
    return GpmEstimate(0.5 * (out + out.T), GpmKind.ABS, nu, n)


def estimate_gpm_region(
    r: ArrayLike,
    nu: float,
    t: float,
    pair: tuple[int, int] = (0, 1),
    *,
    complement: bool = False,
    mu: ArrayLike | None = None,
    sigma: ArrayLike | None = None,
    demean: bool = True,
    scatter_rescale: bool = False,
) -> GpmEstimate:
    """Signed GPM restricted to the tail region ``x_p^2 + x_q^2 >= t``.

    The sum keeps the ``1/n`` normalization of the full estimator, so the
    region and its complement (``complement=True``) add up to
    :func:`estimate_gpm`. Coordinates are the centered ones used by the
    estimator. An empty region yields a zero matrix and an
    :class:`EmptyRegion` warning.
    """
    t = float(t)
    if not t >= 0:
        raise ValueError(f"region threshold must be >= 0, got {t}")
    w = _prepare(r, nu, mu=mu, sigma=sigma, demean=demean, scatter_rescale=scatter_rescale)
    p, q = pair
    if p == q or not (0 <= p < w.d and 0 <= q < w.d):
        raise ValueError(f"pair {pair} must be two distinct indices below {w.d}")
    radius2 = w.xc[:, p] ** 2 + w.xc[:, q] ** 2
    mask = radius2 >= t
    if complement:
        mask = ~mask
    if not mask.any():
        warnings.warn(
            f"no observation in {'complement of ' if complement else ''}region t={t:g} for pair {pair}",
            EmptyRegion,
            stacklevel=2,
        )
        matrix = np.zeros((w.d, w.d))
    else:
        matrix = _weighted_signed_sum(w, mask)
    return GpmEstimate(matrix, GpmKind.REGION, w.nu, w.n, region_threshold=t, pair=(p, q))


def taylor_gpm(
    precision: ArrayLike,
    precision_sqrt: ArrayLike,
    kurtosis: ArrayLike,
    nu: float,
) -> NDArray[np.float64]:
    """Closed-form Taylor GPM given ``S^{-1}``, ``S^{-1/2}`` and the kurtosis matrix.

    ``(nu + d) [ c/nu * S^{-1} + 4/nu**3 * S^{-1/2} (K + (d+2) I) S^{-1/2} ]``
    with ``c = 1 - 2/nu - d/nu + trace(K + (d+2) I)/nu**2``. This is the
    expectation of the expanded LDF under ``E[x x'] = S``.
    """
    prec = np.asarray(precision, dtype=float)
    root = np.asarray(precision_sqrt, dtype=float)
    d = prec.shape[0]
    m4 = np.asarray(kurtosis, dtype=float) + (d + 2) * np.eye(d)
    c = 1.0 - 2.0 / nu - d / nu + np.trace(m4) / nu**2
    out = (nu + d) * (c / nu * prec + 4.0 / nu**3 * root @ m4 @ root)
    return 0.5 * (out + out.T)


def estimate_gpm_taylor(
    r: ArrayLike,
    nu: float,
    *,
    mu: ArrayLike | None = None,
    sigma: ArrayLike | None = None,
    demean: bool = True,
    scatter_rescale: bool = False,
) -> GpmEstimate:
    """Taylor GPM: minus the sample mean of the third-order expanded LDF.

    With ``S`` the scatter in use, ``Y = X S^{-1/2}`` and ``K`` the Mori
    kurtosis matrix of ``Y``::

        (nu + d)/2 * [ 2/nu * S^{-1} (1 - m1/nu + m2/nu**2)
                       - 4/nu**2 * S^{-1} M S^{-1}
                       + 8/nu**3 * S^{-1/2} (K + (d+2) I) S^{-1/2} ]

    where ``M`` is the sample second moment of the centered window,
    ``m1 = trace(S^{-1} M)`` and ``m2 = trace(K + (d+2) I)``. When ``M``
    equals ``S`` this collapses to :func:`taylor_gpm`.
    """
    w = _prepare(r, nu, mu=mu, sigma=sigma, demean=demean, scatter_rescale=scatter_rescale)
    nu, d, n = w.nu, w.d, w.n
    prec = w.precision
    root = inv_sqrt_spd(w.sigma)
    second = w.xc.T @ w.xc / n
    m1 = float(np.sum(prec * second))
    m4 = mori_kurtosis(w.xc @ root) + (d + 2) * np.eye(d)
    m2 = float(np.trace(m4))
    out = (nu + d) / 2.0 * (
        2.0 / nu * prec * (1.0 - m1 / nu + m2 / nu**2)
        - 4.0 / nu**2 * prec @ second @ prec
        + 8.0 / nu**3 * root @ m4 @ root
    )
    return GpmEstimate(0.5 * (out + out.T), GpmKind.TAYLOR, nu, n)


def gpm_gaussian(moments: MomentSummary) -> GpmEstimate:
    """Inverse sample covariance, the Gaussian GPM."""
    return GpmEstimate(invert_spd(moments.covariance), GpmKind.INVERSE_COVARIANCE, None, moments.n)


def estimate(
    kind: str | GpmKind,
    r: ArrayLike,
    nu: float | None = None,
    *,
    region_threshold: float | None = None,
    pair: tuple[int, int] = (0, 1),
    demean: bool = True,
    scatter_rescale: bool = False,
) -> GpmEstimate:
    """Dispatch to the estimator named by ``kind``."""
    kind = GpmKind.parse(kind)
    if kind is GpmKind.INVERSE_COVARIANCE:
        return gpm_gaussian(sample_moments(r, demean=demean))
    if nu is None:
        raise ValueError(f"{kind.value} estimator needs nu")
    opts = dict(demean=demean, scatter_rescale=scatter_rescale)
    if kind is GpmKind.SIGNED:
        return estimate_gpm(r, nu, **opts)
    if kind is GpmKind.ABS:
        return estimate_gpm_abs(r, nu, **opts)
    if kind is GpmKind.TAYLOR:
        return estimate_gpm_taylor(r, nu, **opts)
    if region_threshold is None:
        raise ValueError("Region estimator needs a region threshold")
    return estimate_gpm_region(r, nu, region_threshold, pair, **opts)
