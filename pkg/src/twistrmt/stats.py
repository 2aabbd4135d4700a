"""Comparing lowest-zero data with lowest-eigenangle distributions.

The figure of merit is the RMS difference between cumulative histograms of
two mean-matched samples on a shared bin grid.  Parameter sweeps re-weight a
single frozen pool of Haar draws, so the landscape is a smooth function of
the ensemble parameters.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ensembles import EnsembleSpec, Excised, InverseCubic, TwoParam
from .errors import DomainError
from .rmt import SpectralBatch
from .specfun import DensityTable

log = logging.getLogger(__name__)

DEFAULT_BINS = 100
MIN_EFFECTIVE = 1000


def scale_zero(gamma, d, conductor: float):
    """gamma * log(sqrt(M) |d| / 2 pi): unit mean spacing near the central point."""
    d = np.abs(np.asarray(d, dtype=float))
    factor = np.log(math.sqrt(conductor) * d / (2.0 * math.pi))
    if np.any(factor <= 0):
        warnings.warn("log(sqrt(M)|d|/2pi) <= 0 for some twists; scaling passed through", stacklevel=2)
    out = np.asarray(gamma, dtype=float) * factor
    return float(out) if out.ndim == 0 else out


def _weighted_mean(x, w):
    return float(np.sum(x * w) / np.sum(w)) if w is not None else float(np.mean(x))


def mean_match(model, data, model_weights=None):
    """Rescale ``model`` so its (weighted) mean equals the mean of ``data``.

    Returns ``(scaled_model, factor)``.
    """
    model = np.asarray(model, dtype=float)
    data = np.asarray(data, dtype=float)
    if model.size == 0 or data.size == 0:
        raise DomainError("mean_match needs nonempty samples")
    mm = _weighted_mean(model, None if model_weights is None else np.asarray(model_weights, float))
    md = float(np.mean(data))
    if not (mm > 0 and md > 0):
        raise DomainError(f"means must be positive (model {mm}, data {md})")
    factor = md / mm
    return model * factor, factor


@dataclass(frozen=True)
class ComparisonReport:
    bin_edges: np.ndarray
    cdf_model: np.ndarray
    cdf_data: np.ndarray
    rms: float
    mean_scale: float
    counts: tuple[float, int]

    def recompute_rms(self) -> float:
        return float(np.sqrt(np.mean((self.cdf_model - self.cdf_data) ** 2)))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "cdf_model", "cdf_data"])
            for row in zip(self.bin_edges[:-1], self.bin_edges[1:], self.cdf_model, self.cdf_data):
                w.writerow([repr(float(x)) for x in row])

    def summary(self) -> dict:
        return {
            "rms": self.rms,
            "mean_scale": self.mean_scale,
            "bins": int(self.bin_edges.size - 1),
            "n_model": self.counts[0],
            "n_data": self.counts[1],
        }


def _cumulative(x, w, edges):
    h, _ = np.histogram(x, bins=edges, weights=w)
    c = np.cumsum(h, dtype=float)
    return c / c[-1]


def cumulative_rms(
    model,
    data,
    bins: int = DEFAULT_BINS,
    model_weights=None,
    data_weights=None,
    range: tuple[float, float] | None = None,
    mean_scale: float = 1.0,
) -> ComparisonReport:
    """RMS deviation of cumulative histograms on one shared grid.

    The grid has ``bins`` equal bins over the union of both samples' ranges
    unless ``range`` is given.
    """
    model = np.asarray(model, dtype=float)
    data = np.asarray(data, dtype=float)
    if model.size == 0 or data.size == 0:
        raise DomainError("cumulative_rms needs nonempty samples")
    if bins < 1:
        raise DomainError("bins must be positive")
    if range is None:
        lo = min(model.min(), data.min())
        hi = max(model.max(), data.max())
        if hi <= lo:
            hi = lo + 1.0
    else:
        lo, hi = range
    edges = np.linspace(lo, hi, bins + 1)
    cm = _cumulative(model, model_weights, edges)
    cd = _cumulative(data, data_weights, edges)
    n_model = float(np.sum(model_weights)) if model_weights is not None else model.size
    return ComparisonReport(
        bin_edges=edges,
        cdf_model=cm,
        cdf_data=cd,
        rms=float(np.sqrt(np.mean((cm - cd) ** 2))),
        mean_scale=mean_scale,
        counts=(n_model, int(data.size)),
    )


def compare(
    model, data, bins: int = DEFAULT_BINS, model_weights=None, match_means: bool = True
) -> ComparisonReport:
    """Mean-match ``model`` to ``data`` and report the cumulative RMS.

    Raises :class:`DomainError` when the two samples' ranges do not overlap.
    """
    if match_means:
        scaled, factor = mean_match(model, data, model_weights)
    else:
        scaled, factor = np.asarray(model, dtype=float), 1.0
    data = np.asarray(data, dtype=float)
    if scaled.size and data.size and (scaled.max() < data.min() or data.max() < scaled.min()):
        raise DomainError("model and data supports do not intersect")
    return cumulative_rms(scaled, data, bins, model_weights=model_weights, mean_scale=factor)


def empirical_moment(values, s: float, weights=None) -> tuple[float, float]:
    """Mean of value^s with its standard error."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DomainError("empty sample")
    if s == 0:
        return 1.0, 0.0
    if s < 0 and np.any(v <= 0):
        bad = v[v <= 0][:10].tolist()
        raise DomainError(f"nonpositive values with negative exponent: {bad}")
    x = v**s
    if weights is None:
        se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")
        return float(np.mean(x)), se
    w = np.asarray(weights, dtype=float)
    mean = float(np.sum(w * x) / np.sum(w))
    n_eff = np.sum(w) ** 2 / np.sum(w * w)
    var = float(np.sum(w * (x - mean) ** 2) / np.sum(w))
    return mean, math.sqrt(var / n_eff)


def weighted_ks(model, data, model_weights=None) -> float:
    """Two-sample Kolmogorov-Smirnov distance (auxiliary diagnostic only)."""
    model = np.asarray(model, dtype=float)
    data = np.sort(np.asarray(data, dtype=float))
    w = np.ones(model.size) if model_weights is None else np.asarray(model_weights, float)
    order = np.argsort(model)
    xm, cm = model[order], np.cumsum(w[order]) / w.sum()
    grid = np.union1d(xm, data)
    fm = np.concatenate([[0.0], cm])[np.searchsorted(xm, grid, side="right")]
    fd = np.searchsorted(data, grid, side="right") / data.size
    return float(np.max(np.abs(fm - fd)))


# --- sweeps ---------------------------------------------------------------


@dataclass(frozen=True)
class HaarPool:
    """Frozen Haar draws reused by every sweep point: Lambda_B(1) and lowest angle."""

    half_dim: int
    values: np.ndarray
    first_angles: np.ndarray

    @classmethod
    def from_batch(cls, batch: SpectralBatch) -> "HaarPool":
        return cls(batch.half_dim, batch.values.copy(), batch.first_angles.copy())

    def __len__(self) -> int:
        return self.values.size

    def halves(self) -> tuple["HaarPool", "HaarPool"]:
        k = len(self) // 2
        return (
            HaarPool(self.half_dim, self.values[:k], self.first_angles[:k]),
            HaarPool(self.half_dim, self.values[k:], self.first_angles[k:]),
        )


def pool_rms(pool: HaarPool, spec: EnsembleSpec, density, data, bins: int = DEFAULT_BINS):
    """RMS of the re-weighted pool against ``data``; also the effective sample size."""
    w = np.asarray(spec.weight(pool.values, density), dtype=float)
    total = w.sum()
    if total <= 0:
        return float("nan"), 0.0
    n_eff = total**2 / float(np.sum(w * w))
    keep = w > 0
    rep = compare(pool.first_angles[keep], data, bins, model_weights=w[keep])
    return rep.rms, n_eff


@dataclass
class SweepResult:
    """RMS landscape over a 1-D or 2-D parameter grid.

    For 2-D sweeps ``rms_values`` is a matrix indexed ``[i1, i2]`` over
    ``axes[0] x axes[1]``; entries with chi1 > chi2 are NaN.
    """

    kind: str
    axes: list[np.ndarray]
    rms_values: np.ndarray
    flagged: np.ndarray
    baseline_rms: float | None = None
    markers: dict = field(default_factory=dict)

    @property
    def grid(self) -> list[tuple]:
        if len(self.axes) == 1:
            return [(float(a),) for a in self.axes[0]]
        return [(float(a), float(b)) for a in self.axes[0] for b in self.axes[1]]

    @property
    def argmin_index(self) -> tuple:
        r = np.where(self.flagged | np.isnan(self.rms_values), np.inf, self.rms_values)
        return np.unravel_index(int(np.argmin(r)), r.shape)

    @property
    def argmin(self) -> tuple:
        idx = self.argmin_index
        return tuple(float(ax[i]) for ax, i in zip(self.axes, idx))

    @property
    def min_rms(self) -> float:
        return float(self.rms_values[self.argmin_index])

    @property
    def improvement(self) -> float | None:
        """(baseline - min) / baseline."""
        if not self.baseline_rms:
            return None
        return (self.baseline_rms - self.min_rms) / self.baseline_rms

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "argmin": list(self.argmin),
            "min_rms": self.min_rms,
            "baseline_rms": self.baseline_rms,
            "improvement": self.improvement,
            "flagged_points": int(self.flagged.sum()),
            "markers": self.markers,
        }

    def to_csv(self, path):
        names = ["param"] if len(self.axes) == 1 else ["chi1", "chi2"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["rms", "flagged"])
            flat_r = self.rms_values.ravel()
            flat_f = self.flagged.ravel()
            for g, r, f in zip(self.grid, flat_r, flat_f):
                w.writerow([repr(x) for x in g] + [repr(float(r)), int(f)])

    def matrix_to_csv(self, path):
        """Dense heatmap: first row chi2 values, first column chi1 values."""
        if len(self.axes) != 2:
            raise DomainError("heatmap export needs a 2-D sweep")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["chi1\\chi2"] + [repr(float(b)) for b in self.axes[1]])
            for a, row in zip(self.axes[0], self.rms_values):
                w.writerow([repr(float(a))] + [repr(float(x)) for x in row])

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2)


def _evaluate(specs, pool, density, data, bins, workers):
    def one(spec):
        if spec is None:
            return float("nan"), 0.0
        return pool_rms(pool, spec, density, data, bins)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(one, specs))
    else:
        res = [one(s) for s in specs]
    rms = np.array([r[0] for r in res])
    neff = np.array([r[1] for r in res])
    flagged = (neff < MIN_EFFECTIVE) & np.array([s is not None for s in specs])
    if flagged.any():
        log.warning("%d sweep points have fewer than %d effective samples", flagged.sum(), MIN_EFFECTIVE)
    return rms, flagged


def sweep_cutoff(cutoffs, pool: HaarPool, data, bins: int = DEFAULT_BINS, workers: int = 1) -> SweepResult:
    """Excised-model RMS as the cutoff varies (cutoff 0 is full Haar)."""
    cutoffs = np.asarray(cutoffs, dtype=float)
    specs = [Excised(pool.half_dim, float(t)) for t in cutoffs]
    rms, flagged = _evaluate(specs, pool, None, data, bins, workers)
    return SweepResult("cutoff", [cutoffs], rms, flagged)


def sweep_a(
    a_grid,
    pool: HaarPool,
    density: DensityTable,
    t1: float,
    t2: float,
    data,
    bins: int = DEFAULT_BINS,
    baseline: EnsembleSpec | None = None,
    a1: float | None = None,
    workers: int = 1,
) -> SweepResult:
    """Inverse-cubic RMS over a grid of first-peak heights A on the window [t1, t2)."""
    a_grid = np.asarray(a_grid, dtype=float)
    specs = [InverseCubic(pool.half_dim, float(a), t1, t2) for a in a_grid]
    rms, flagged = _evaluate(specs, pool, density, data, bins, workers)
    res = SweepResult("inverse_cubic_A", [a_grid], rms, flagged, markers={"t1": t1, "t2": t2})
    if baseline is not None:
        res.baseline_rms = pool_rms(pool, baseline, density, data, bins)[0]
        res.markers["baseline"] = baseline.to_dict()
    if a1 is not None:
        res.markers["A1"] = a1
        res.markers["rms_at_A1"] = pool_rms(pool, InverseCubic(pool.half_dim, a1, t1, t2), density, data, bins)[0]
    return res


def sweep_two_param(
    chi1_grid,
    chi2_grid,
    pool: HaarPool,
    density: DensityTable,
    data,
    bins: int = DEFAULT_BINS,
    baseline: EnsembleSpec | None = None,
    workers: int = 1,
) -> SweepResult:
    """Two-parameter RMS landscape; the chi1 = chi2 diagonal is the excised model."""
    c1 = np.asarray(chi1_grid, dtype=float)
    c2 = np.asarray(chi2_grid, dtype=float)
    specs = [
        TwoParam(pool.half_dim, float(a), float(b)) if a <= b else None for a in c1 for b in c2
    ]
    rms, flagged = _evaluate(specs, pool, density, data, bins, workers)
    res = SweepResult(
        "two_param", [c1, c2], rms.reshape(c1.size, c2.size), flagged.reshape(c1.size, c2.size)
    )
    if baseline is not None:
        res.baseline_rms = pool_rms(pool, baseline, density, data, bins)[0]
        res.markers["baseline"] = baseline.to_dict()
    return res
