"""Weighted sub-ensembles of Haar SO(2N) and selection-rejection sampling.

Every variant is described by a window ``[lower, upper)`` on y = Lambda_B(1):
the weight is 0 below the window, ``amplitude * y^-3 / P_O(N, y)`` inside it,
and 1 from ``upper`` on.  So the retained values have density proportional
to 0, amplitude / y^3 and P_O(N, y) on the three pieces.

==============  ===========  ===========  =========================
variant         lower        upper        amplitude
==============  ===========  ===========  =========================
Haar            0            0            (unused)
Excised(t)      t            t            (unused)
InverseCubic    t1           t2           A
TwoParam        chi1         chi2         P_O(N, chi1) chi1^3
==============  ===========  ===========  =========================
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from .errors import DomainError, InvalidSpecError
from .rmt import RngStream, SpectralBatch, SpectralSample, _as_generator, haar_batch
from .specfun import DensityTable


class EnsembleSpec:
    """Common behaviour of the ensemble variants (see module docstring)."""

    half_dim: int
    variant: str = ""

    @property
    def lower(self) -> float:
        return 0.0

    @property
    def upper(self) -> float:
        return self.lower

    def amplitude(self, density: DensityTable | None) -> float:
        return 0.0

    def weight(self, y, density: DensityTable | None = None):
        """Selection weight at y; may exceed 1 inside the window."""
        y = np.asarray(y, dtype=float)
        out = np.where(y >= self.upper, 1.0, 0.0)
        mid = (y >= self.lower) & (y < self.upper)
        if mid.any():
            if density is None:
                raise InvalidSpecError(f"{self.variant} weight needs a density table")
            out[mid] = self._window_weight(y[mid], density)
        return float(out) if out.ndim == 0 else out

    def _window_weight(self, y, density):
        return self.amplitude(density) / (y**3 * density.pdf(y))

    def window_mass(self, density: DensityTable | None) -> float:
        """int_lower^upper W P_O dy = amplitude (lower^-2 - upper^-2) / 2."""
        if self.upper <= self.lower:
            return 0.0
        return 0.5 * self.amplitude(density) * (self.lower**-2 - self.upper**-2)

    def haar_mass_above_window(self, density: DensityTable | None) -> float:
        if self.upper <= 0:
            return 1.0
        return 1.0 - float(density.cdf_at(self.upper))

    def normalization(self, density: DensityTable | None = None) -> float:
        """N_W = 1 / int W P_O dy."""
        mass = self.window_mass(density) + self.haar_mass_above_window(density)
        if not mass > 0:
            raise InvalidSpecError(f"{self!r} selects zero mass")
        return 1.0 / mass

    def cdf(self, y, density: DensityTable | None = None):
        """CDF of Lambda_B(1) under N_W W P_O."""
        y = np.asarray(y, dtype=float)
        nw = self.normalization(density)
        out = np.zeros(y.shape)
        lo, hi = self.lower, self.upper
        if hi > lo:
            a = self.amplitude(density)
            yy = np.clip(y, lo, hi)
            out += np.where(y >= lo, 0.5 * a * (lo**-2 - yy**-2), 0.0)
        if hi > 0:
            out += np.where(y > hi, density.cdf_at(np.maximum(y, hi)) - density.cdf_at(hi), 0.0)
        else:
            out += density.cdf_at(y)
        out = np.clip(nw * out, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"variant": self.variant, **asdict(self)}


@dataclass(frozen=True)
class Haar(EnsembleSpec):
    half_dim: int
    variant = "haar"

    def weight(self, y, density=None):
        out = np.ones(np.shape(y))
        return float(out) if out.ndim == 0 else out

    def cdf(self, y, density=None):
        return density.cdf_at(y)


@dataclass(frozen=True)
class Excised(EnsembleSpec):
    half_dim: int
    threshold: float
    variant = "excised"

    def __post_init__(self):
        if not self.threshold >= 0:
            raise InvalidSpecError("threshold must be nonnegative")

    @property
    def lower(self) -> float:
        return self.threshold


@dataclass(frozen=True)
class InverseCubic(EnsembleSpec):
    half_dim: int
    A: float
    t1: float
    t2: float
    variant = "inverse_cubic"

    def __post_init__(self):
        if not (self.A > 0 and 0 < self.t1 < self.t2):
            raise InvalidSpecError(f"need A > 0 and 0 < t1 < t2, got {self}")

    @classmethod
    def from_family(cls, half_dim: int, A: float, kappa: float, x_bound: float) -> "InverseCubic":
        t1, t2 = first_peak_window(kappa, x_bound)
        return cls(half_dim, A, t1, t2)

    @property
    def lower(self) -> float:
        return self.t1

    @property
    def upper(self) -> float:
        return self.t2

    def amplitude(self, density=None) -> float:
        return self.A


@dataclass(frozen=True)
class TwoParam(EnsembleSpec):
    """Weight 1 at chi1, inverse-cubic decay of W P_O up to chi2, Haar beyond.

    V is defined before normalisation: V(N, chi1) = 1 exactly.
    """

    half_dim: int
    chi1: float
    chi2: float
    variant = "two_param"

    def __post_init__(self):
        if not 0 <= self.chi1 <= self.chi2:
            raise InvalidSpecError(f"need 0 <= chi1 <= chi2, got {self}")

    @property
    def lower(self) -> float:
        return self.chi1

    @property
    def upper(self) -> float:
        return self.chi2

    def amplitude(self, density) -> float:
        # P_O(chi1) chi1^3 -> 0 as chi1 -> 0, where the model is Excised{chi2}.
        if self.chi1 == 0:
            return 0.0
        return float(density.pdf(self.chi1)) * self.chi1**3

    def _window_weight(self, y, density):
        if self.chi1 == 0:
            return np.zeros(np.shape(y))
        return (density.pdf(self.chi1) / density.pdf(y)) * (self.chi1 / y) ** 3


_VARIANTS = {c.variant: c for c in (Haar, Excised, InverseCubic, TwoParam)}


def spec_from_dict(d: dict) -> EnsembleSpec:
    d = dict(d)
    try:
        cls = _VARIANTS[d.pop("variant")]
    except KeyError as exc:
        raise InvalidSpecError(f"unknown ensemble variant in {d}") from exc
    return cls(**d)


def parse_spec(text: str, half_dim: int) -> EnsembleSpec:
    """``haar`` | ``excised:T`` | ``inverse_cubic:A,t1,t2`` | ``two_param:chi1,chi2``."""
    name, _, args = text.partition(":")
    name = name.strip().lower().replace("-", "_")
    try:
        vals = [float(a) for a in args.split(",")] if args else []
        if name == "haar" and not vals:
            return Haar(half_dim)
        if name == "excised" and len(vals) == 1:
            return Excised(half_dim, *vals)
        if name == "inverse_cubic" and len(vals) == 3:
            return InverseCubic(half_dim, *vals)
        if name == "two_param" and len(vals) == 2:
            return TwoParam(half_dim, *vals)
    except ValueError as exc:
        raise InvalidSpecError(f"cannot parse ensemble {text!r}: {exc}") from exc
    raise InvalidSpecError(f"cannot parse ensemble {text!r}")


def weight_w(spec: InverseCubic, y, density: DensityTable):
    return spec.weight(y, density)


def weight_v(spec: TwoParam, y, density: DensityTable):
    return spec.weight(y, density)


def normalization(spec: EnsembleSpec, density: DensityTable | None = None) -> float:
    return spec.normalization(density)


def first_peak_window(kappa: float, x_bound: float) -> tuple[float, float]:
    """(kappa X^{-1/2}, 4 kappa X^{-1/2}): the c_E = 1 peak of the central values."""
    if kappa <= 0 or x_bound <= 0:
        raise DomainError("kappa and X must be positive")
    t1 = kappa / math.sqrt(x_bound)
    return t1, 4.0 * t1


# --- sampling -------------------------------------------------------------


@dataclass(frozen=True)
class WeightedDraw:
    sample: SpectralSample
    multiplicity: int


@dataclass(frozen=True)
class WeightedBatch:
    """Haar proposals with their weights and realised multiplicities."""

    spec: EnsembleSpec
    batch: SpectralBatch
    weights: np.ndarray
    multiplicity: np.ndarray

    def __len__(self) -> int:
        return len(self.batch)

    def __iter__(self) -> Iterator[WeightedDraw]:
        for i in range(len(self)):
            yield WeightedDraw(self.batch[i], int(self.multiplicity[i]))

    @property
    def retained(self) -> SpectralBatch:
        return self.batch.take(self.multiplicity > 0)

    @property
    def retained_multiplicity(self) -> np.ndarray:
        return self.multiplicity[self.multiplicity > 0]

    @property
    def retention_rate(self) -> float:
        return float(self.multiplicity.sum()) / max(len(self), 1)

    def expanded_values(self) -> np.ndarray:
        return np.repeat(self.batch.values, self.multiplicity)

    def expanded_first_angles(self) -> np.ndarray:
        return np.repeat(self.batch.first_angles, self.multiplicity)


def select(spec: EnsembleSpec, density: DensityTable | None, batch: SpectralBatch, rng) -> WeightedBatch:
    """Assign multiplicity floor(W) + Bernoulli(frac W) to each proposal.

    One uniform is consumed per proposal for every variant, so specs with
    equal weight functions give identical multiplicities on a shared stream.
    """
    if batch.half_dim != spec.half_dim:
        raise InvalidSpecError(f"batch has N={batch.half_dim}, spec has N={spec.half_dim}")
    gen = _as_generator(rng)
    u = gen.random(len(batch))
    w = np.asarray(spec.weight(batch.values, density), dtype=float).reshape(len(batch))
    whole = np.floor(w)
    m = whole.astype(np.int64) + (u < (w - whole))
    return WeightedBatch(spec, batch, w, m)


def rejection_sample(
    spec: EnsembleSpec, density: DensityTable | None, rng, count: int, workers: int = 1
) -> WeightedBatch:
    """Draw ``count`` Haar proposals and apply selection-rejection."""
    if count < 1:
        raise DomainError("count must be >= 1")
    if workers > 1:
        if not isinstance(rng, RngStream):
            raise DomainError("parallel sampling needs an RngStream")
        streams = rng.split(workers)
        sizes = [count // workers + (k < count % workers) for k in range(workers)]
        parts = [rejection_sample(spec, density, s, n) for s, n in zip(streams, sizes) if n]
        return WeightedBatch(
            spec,
            SpectralBatch.concat([p.batch for p in parts]),
            np.concatenate([p.weights for p in parts]),
            np.concatenate([p.multiplicity for p in parts]),
        )
    gen = _as_generator(rng)
    batch = haar_batch(spec.half_dim, count, gen)
    return select(spec, density, batch, gen)


# --- masses and calibration ----------------------------------------------


def sample_mass_below(values, threshold: float, weights=None) -> tuple[float, float]:
    """Weighted fraction of values strictly below ``threshold`` and its standard error."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DomainError("mass_below of an empty sample")
    w = np.ones(v.size) if weights is None else np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise DomainError("sample has zero total weight")
    p = float(w[v < threshold].sum() / total)
    n_eff = total**2 / float(np.sum(w * w))
    return p, math.sqrt(p * (1 - p) / n_eff)


def mass_below(obj, threshold: float, density: DensityTable | None = None) -> tuple[float, float]:
    """Proportion below ``threshold`` with standard error (0 for exact quadrature).

    ``obj`` may be an :class:`EnsembleSpec` (needs ``density``), a
    :class:`WeightedBatch`, a family dataset (central values, counting
    measure) or a plain array of values.
    """
    if threshold <= 0:
        raise DomainError("threshold must be positive")
    if isinstance(obj, EnsembleSpec):
        return float(obj.cdf(threshold, density)), 0.0
    if isinstance(obj, WeightedBatch):
        return sample_mass_below(obj.batch.values, threshold, obj.multiplicity)
    if hasattr(obj, "central_value"):
        cv = np.asarray(obj.central_value, dtype=float)
        return sample_mass_below(cv[~np.isnan(cv)], threshold)
    return sample_mass_below(obj, threshold)


@dataclass(frozen=True)
class A1Calibration:
    a1: float
    implied_s_l: float


def compute_a1(s_l: float, s_h: float, kappa: float, x_bound: float) -> A1Calibration:
    """A_1 = 32 S_L S_H kappa^2 / (15 X (1 - S_L)).

    ``implied_s_l`` recomputes the first-peak mass of the resulting ensemble
    from its normalisation and should equal ``s_l``.
    """
    if not 0 < s_l < 1:
        raise DomainError(f"S_L must lie in (0, 1), got {s_l}")
    if not 0 < s_h <= 1 or kappa <= 0 or x_bound <= 0:
        raise DomainError("need 0 < S_H <= 1, kappa > 0, X > 0")
    a1 = 32.0 * s_l * s_h * kappa**2 / (15.0 * x_bound * (1.0 - s_l))
    window = a1 * 15.0 * x_bound / (32.0 * kappa**2)
    return A1Calibration(a1, window / (window + s_h))


def haar_mass_above(density: DensityTable, y: float) -> float:
    """S_H: Haar probability that Lambda_B(1) exceeds y."""
    return 1.0 - float(density.cdf_at(y))
