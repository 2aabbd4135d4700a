"""Moments and value distribution of Lambda_B(1) over Haar SO(2N).

The moments have the closed form

    M_O(N, s) = 2^{2Ns} prod_{j=1}^N Gamma(N+j-1) Gamma(s+j-1/2)
                                    / (Gamma(j-1/2) Gamma(s+j+N-1)),

finite for Re s > -1/2 with a simple pole at s = -1/2 whose residue h(N)
controls the small-value law P_O(N, y) ~ h(N) y^{-1/2}.  The density and
cumulative distribution are recovered by inverting the Mellin transform
along a vertical line.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.special import gammaln, loggamma

from .errors import DomainError, InterpolationRangeError, PoleError

log = logging.getLogger(__name__)

# Glaisher-Kinkelin constant A = exp(1/12 - zeta'(-1)), 30 significant digits
# (OEIS A074962).
GLAISHER = 1.28242712910062263687534256887

PDF_CONTOUR = 1.0
CDF_CONTOUR = -0.25
# Below this y the Re s = 1 integrand cancels catastrophically (relative size
# y^{-3/2}); the density is taken on the CDF contour instead.
SMALL_Y = 1e-3


def _moment_constant(half_dim: int) -> float:
    j = np.arange(1, half_dim + 1)
    return float(np.sum(gammaln(half_dim + j - 1) - gammaln(j - 0.5)))


def log_mo_moment(half_dim: int, s):
    """log M_O(N, s) for real or complex ``s`` (principal branch of each term)."""
    s = np.asarray(s)
    j = np.arange(1, half_dim + 1)
    if np.iscomplexobj(s):
        out = 2 * half_dim * math.log(2.0) * s + _moment_constant(half_dim)
        for jj in j:
            out = out + loggamma(s + jj - 0.5) - loggamma(s + jj + half_dim - 1)
        return out
    sj = s[..., None]
    return (
        2 * half_dim * math.log(2.0) * s
        + _moment_constant(half_dim)
        + np.sum(gammaln(sj + j - 0.5) - gammaln(sj + j + half_dim - 1), axis=-1)
    )


def mo_moment(half_dim: int, s):
    """E[Lambda_B(1)^s] over Haar SO(2N), real ``s > -1/2``."""
    if half_dim < 1:
        raise DomainError("half_dim must be >= 1")
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= -0.5):
        raise PoleError(f"M_O(N, s) diverges for s <= -1/2 (got s={s})")
    out = np.exp(log_mo_moment(half_dim, s_arr))
    return float(out) if out.ndim == 0 else out


def h_residue(half_dim: int) -> float:
    """Residue of M_O(N, s) at s = -1/2."""
    if half_dim < 1:
        raise DomainError("half_dim must be >= 1")
    n = half_dim
    j = np.arange(1, n + 1)
    lg = (
        -n * math.log(2.0)
        - gammaln(n)
        + np.sum(gammaln(n + j - 1) + gammaln(j) - gammaln(j - 0.5) - gammaln(j + n - 1.5))
    )
    return math.exp(lg)


def barnes_g_half() -> float:
    """G(1/2) = 2^{1/24} e^{1/8} pi^{-1/4} A^{-3/2}."""
    return 2.0 ** (1 / 24) * math.exp(1 / 8) * math.pi ** -0.25 * GLAISHER**-1.5


def h_asymptotic(half_dim: float) -> float:
    """Large-N form 2^{-7/8} G(1/2) pi^{-1/4} N^{3/8} of h(N)."""
    return 2.0 ** (-7 / 8) * barnes_g_half() * math.pi**-0.25 * half_dim ** (3 / 8)


def small_value_cdf(half_dim: int, rho):
    """Prob(Lambda_B(1) <= rho) ~ 2 rho^{1/2} h(N); meaningful for rho below ~1e-2."""
    r = np.asarray(rho, dtype=float)
    if np.any(r < 0):
        raise DomainError("rho must be nonnegative")
    out = 2.0 * np.sqrt(r) * h_residue(half_dim)
    return float(out) if out.ndim == 0 else out


# --- Mellin inversion -----------------------------------------------------


def _truncation(half_dim: int, c: float, tol: float, t_max: float) -> float:
    """Smallest T (on a doubling ladder) with |M(c+iT)| <= tol * M(c)."""
    ref = float(np.real(log_mo_moment(half_dim, np.array(c + 0j))))
    t = 1.0
    while t < t_max:
        if float(np.real(log_mo_moment(half_dim, np.array(c + 1j * t)))) - ref < math.log(tol):
            return t
        t *= 1.25
    log.warning("Mellin truncation capped at T=%g for N=%d", t_max, half_dim)
    return t_max


def _t_step(log_span: float) -> float:
    # Trapezoid on the full line aliases the target at y * exp(+-2 pi / dt);
    # keep the alias far outside the support in log-space.
    return min(0.05, 2 * math.pi / (2.0 * log_span + 60.0))


@dataclass(frozen=True)
class _MellinKernel:
    half_dim: int
    contour: float
    t: np.ndarray
    weights: np.ndarray
    log_m: np.ndarray

    @classmethod
    def build(cls, half_dim, contour, log_span, tol=1e-14, t_max=4000.0):
        if contour <= -0.5:
            raise PoleError("contour must lie right of the pole at s = -1/2")
        T = _truncation(half_dim, contour, tol, t_max)
        dt = _t_step(log_span)
        t = np.arange(0.0, T + dt, dt)
        w = np.full(t.size, dt)
        w[0] = 0.5 * dt  # trapezoid of an even integrand over [0, T]
        return cls(half_dim, contour, t, w, log_mo_moment(half_dim, contour + 1j * t))

    @property
    def truncation(self) -> float:
        return float(self.t[-1])

    def integrate(self, log_y: np.ndarray, extra=None, block: int = 512) -> np.ndarray:
        s = self.contour + 1j * self.t
        out = np.empty(log_y.size)
        lm = self.log_m if extra is None else self.log_m + np.log(extra)
        for i in range(0, log_y.size, block):
            ly = log_y[i : i + block, None]
            out[i : i + block] = np.exp(lm[None, :] - s[None, :] * ly).real @ self.weights
        return out / math.pi


def _support_log_span(half_dim: int, y: np.ndarray) -> float:
    lo = min(float(np.log(y.min())), -30.0)
    return 2 * half_dim * math.log(2.0) - lo


def _closed_form_n1_pdf(y):
    # theta uniform on [0, pi]; y = 2 - 2 cos theta.
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    m = (y > 0) & (y < 4)
    out[m] = 1.0 / (math.pi * np.sqrt(y[m] * (4.0 - y[m])))
    return out


def _closed_form_n1_cdf(y):
    y = np.clip(np.asarray(y, dtype=float), 0.0, 4.0)
    return np.arccos(1.0 - y / 2.0) / math.pi


def mellin_pdf(half_dim: int, y, contour: float = PDF_CONTOUR, tol: float = 1e-14):
    """P_O(N, y) = (1 / 2 pi i y) int M_O(N, s) y^{-s} ds along Re s = contour."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y <= 0):
        raise DomainError("density is defined for y > 0")
    if half_dim == 1:
        return _closed_form_n1_pdf(y)
    span = _support_log_span(half_dim, y)
    out = _pdf_on_contours(
        y,
        _MellinKernel.build(half_dim, contour, span, tol),
        _MellinKernel.build(half_dim, CDF_CONTOUR, span, tol),
    )
    out[y >= 4.0**half_dim] = 0.0
    return out


def _pdf_on_contours(y, k_main, k_small):
    out = np.empty(y.size)
    small = y < SMALL_Y
    if (~small).any():
        out[~small] = k_main.integrate(np.log(y[~small])) / y[~small]
    if small.any():
        out[small] = k_small.integrate(np.log(y[small])) / y[small]
    return np.maximum(out, 0.0)


def mellin_cdf(half_dim: int, y, contour: float = CDF_CONTOUR, tol: float = 1e-14):
    """Prob(Lambda_B(1) <= y) from (1/2 pi i) int M_O(N,s) y^{-s} (-1/s) ds, -1/2 < c < 0."""
    if not -0.5 < contour < 0.0:
        raise DomainError("CDF contour must satisfy -1/2 < c < 0")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y <= 0):
        raise DomainError("cdf is evaluated for y > 0")
    if half_dim == 1:
        return _closed_form_n1_cdf(y)
    k = _MellinKernel.build(half_dim, contour, _support_log_span(half_dim, y), tol)
    out = k.integrate(np.log(y), extra=-1.0 / (contour + 1j * k.t))
    out[y >= 4.0**half_dim] = 1.0
    return np.clip(out, 0.0, 1.0)


def default_grid(half_dim: int, points: int = 4000, y_min: float = 1e-12) -> np.ndarray:
    """Log-spaced grid from ``y_min`` to just below the support edge 4^N."""
    return np.geomspace(y_min, 4.0**half_dim * (1 - 1e-9), points)


@dataclass(frozen=True)
class DensityTable:
    """Tabulated P_O(N, y) and its CDF on an ascending positive grid."""

    half_dim: int
    grid: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    contour: float = PDF_CONTOUR
    truncation: float = float("nan")
    normalization_defect: float = float("nan")
    meta: dict = field(default_factory=dict)

    @cached_property
    def _log_pdf_spline(self):
        m = self.density > 0
        return CubicSpline(np.log(self.grid[m]), np.log(self.density[m]))

    @cached_property
    def _cdf_spline(self):
        return PchipInterpolator(np.log(self.grid), self.cdf)

    def _check_range(self, y):
        if np.any(y < self.grid[0]) or np.any(y > self.grid[-1]):
            raise InterpolationRangeError(
                f"y outside tabulated range [{self.grid[0]:.3g}, {self.grid[-1]:.3g}]"
            )

    def pdf(self, y):
        """Cubic interpolation of log P_O in log y."""
        y = np.asarray(y, dtype=float)
        self._check_range(y)
        out = np.exp(self._log_pdf_spline(np.log(y)))
        return float(out) if out.ndim == 0 else out

    def cdf_at(self, y):
        """CDF by monotone interpolation; small-y law below the grid, 1 above it."""
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape)
        small = (y > 0) & (y < self.grid[0])
        big = y > self.grid[-1]
        mid = (y >= self.grid[0]) & ~big
        out[big] = 1.0
        out[small] = small_value_cdf(self.half_dim, y[small])
        out[mid] = self._cdf_spline(np.log(y[mid]))
        out = np.clip(out, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def quantile(self, p):
        """Inverse CDF by monotone interpolation of the tabulated CDF."""
        p = np.asarray(p, dtype=float)
        c, idx = np.unique(self.cdf, return_index=True)
        out = np.exp(np.interp(p, c, np.log(self.grid[idx])))
        return float(out) if out.ndim == 0 else out

    def to_csv(self, path):
        data = np.column_stack([self.grid, self.density, self.cdf])
        np.savetxt(path, data, delimiter=",", header="y,pdf,cdf", comments="", fmt="%.17g")

    def metadata(self) -> dict:
        return {
            "N": self.half_dim,
            "contour": self.contour,
            "truncation": self.truncation,
            "normalization_defect": self.normalization_defect,
            "points": int(self.grid.size),
            **self.meta,
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.metadata(), fh, indent=2)


def p_o_density(half_dim: int, y_grid=None, contour: float = PDF_CONTOUR) -> DensityTable:
    """Tabulate P_O(N, y) and its CDF by Mellin inversion.

    The CDF uses its own contour at Re s = -1/4 rather than integrating the
    tabulated density, so the two columns are independent computations; the
    normalisation defect compares them.
    """
    if half_dim < 1:
        raise DomainError("half_dim must be >= 1")
    y = default_grid(half_dim) if y_grid is None else np.asarray(y_grid, dtype=float)
    if np.any(y <= 0) or np.any(np.diff(y) <= 0):
        raise DomainError("grid must be strictly positive and ascending")
    beyond = y >= 4.0**half_dim
    if beyond.any():
        log.warning("%d grid points at or beyond the support edge 4^N; density set to 0", beyond.sum())
    if half_dim == 1:
        pdf = _closed_form_n1_pdf(y)
        cdf = _closed_form_n1_cdf(y)
        T = float("nan")
    else:
        span = _support_log_span(half_dim, y)
        kp = _MellinKernel.build(half_dim, contour, span)
        kc = _MellinKernel.build(half_dim, CDF_CONTOUR, span)
        pdf = _pdf_on_contours(y, kp, kc)
        cdf = np.clip(kc.integrate(np.log(y), extra=-1.0 / (CDF_CONTOUR + 1j * kc.t)), 0, 1)
        pdf[beyond] = 0.0
        cdf[beyond] = 1.0
        cdf = np.maximum.accumulate(cdf)
        T = kp.truncation
    # Total mass: small-y law below the grid plus trapezoid in log y.
    inside = ~beyond
    yy, pp = y[inside], pdf[inside]
    mass = small_value_cdf(half_dim, yy[0]) if half_dim > 1 else _closed_form_n1_cdf(yy[:1])[0]
    mass += np.trapezoid(pp * yy, np.log(yy))
    return DensityTable(
        half_dim=half_dim,
        grid=y,
        density=pdf,
        cdf=cdf,
        contour=contour,
        truncation=T,
        normalization_defect=float(mass - 1.0),
    )


def polyfit_density(values, degree: int = 20, bins: int = 200, weights=None):
    """Fallback estimator: least-squares polynomial in log y fitted to log bin heights.

    Returns a callable y -> density.  Only bins with counts contribute.
    """
    v = np.asarray(values, dtype=float)
    v = v[v > 0]
    w = None if weights is None else np.asarray(weights, dtype=float)[np.asarray(values) > 0]
    edges = np.geomspace(v.min(), v.max(), bins + 1)
    counts, _ = np.histogram(v, bins=edges, weights=w)
    total = counts.sum()
    width = np.diff(edges)
    centers = np.sqrt(edges[:-1] * edges[1:])
    m = counts > 0
    heights = counts[m] / (total * width[m])
    poly = np.polynomial.Polynomial.fit(np.log(centers[m]), np.log(heights), degree)

    def density(y):
        return np.exp(poly(np.log(np.asarray(y, dtype=float))))

    density.domain = (edges[0], edges[-1])
    return density
