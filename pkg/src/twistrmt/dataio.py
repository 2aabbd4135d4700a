"""Family datasets, curve files, sample dumps and synthetic families.

File formats (all UTF-8):

* curve file: a ``# {json}`` header line with ``label, M, omega, kappa,
  twist_sign`` followed by CSV rows ``p,lambda_p``;
* twist file: CSV ``d,c,central_value,gamma1,vanishing`` with empty cells
  for absent fields; extra columns are ignored;
* sample dump: CSV ``N,angle_1..angle_N,lambda1`` plus a ``.meta.json``
  sidecar with the seed and stream;
* retained dump: CSV ``lambda1,first_angle,multiplicity``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .arithmetic import CurveFamily, is_prime_fundamental_discriminant, sieve_prime_fundamental_discriminants
from .ensembles import EnsembleSpec, WeightedBatch, rejection_sample
from .errors import DataValidationError, DomainError
from .rmt import SpectralBatch, _as_generator, nearest_dimension
from .specfun import DensityTable

TWIST_COLUMNS = ("d", "c", "central_value", "gamma1", "vanishing")
CENTRAL_VALUE_RTOL = 1e-6

# Loose placeholder for the c_E(|d|) profile of a positive-twist family;
# not fitted to any dataset.
DEFAULT_C_DISTRIBUTION = {
    0: 0.05, 1: 0.15, 2: 0.17, 3: 0.16, 4: 0.13, 5: 0.10,
    6: 0.08, 7: 0.06, 8: 0.04, 9: 0.03, 10: 0.02, 11: 0.01,
}


# --- curve files ----------------------------------------------------------


def read_curve_file(path) -> CurveFamily:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise DataValidationError(f"{path}: missing '# {{json}}' header line")
        try:
            head = json.loads(first[1:])
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"{path}: bad JSON header: {exc}") from exc
        reader = csv.reader(fh)
        cols = next(reader, None)
        if cols is None or [c.strip() for c in cols[:2]] != ["p", "lambda_p"]:
            raise DataValidationError(f"{path}: expected columns p,lambda_p")
        lambdas = {}
        problems = []
        for i, row in enumerate(reader, start=3):
            try:
                lambdas[int(row[0])] = float(row[1])
            except (ValueError, IndexError):
                problems.append((i, f"cannot parse {row!r}"))
        if problems:
            raise DataValidationError(f"{path}: malformed rows", problems)
    missing = [k for k in ("label", "M", "omega") if k not in head]
    if missing:
        raise DataValidationError(f"{path}: header lacks {missing}")
    return CurveFamily(
        label=str(head["label"]),
        conductor=int(head["M"]),
        omega=int(head["omega"]),
        lambdas=lambdas,
        twist_sign=head.get("twist_sign", 1),
        kappa=head.get("kappa"),
        meta={k: v for k, v in head.items() if k not in ("label", "M", "omega", "twist_sign", "kappa")},
    )


def write_curve_file(curve: CurveFamily, path) -> None:
    head = {
        "label": curve.label,
        "M": curve.conductor,
        "omega": curve.omega,
        "kappa": curve.kappa,
        "twist_sign": "positive" if curve.twist_sign > 0 else "negative",
        **curve.meta,
    }
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(head) + "\n")
        w = csv.writer(fh)
        w.writerow(["p", "lambda_p"])
        for p in sorted(curve.lambdas):
            w.writerow([p, repr(float(curve.lambdas[p]))])


def bundled_curve(label: str) -> CurveFamily:
    """Curve files shipped with the package (lambda_p for p <= 10^5, no kappa)."""
    path = Path(__file__).with_name("data") / f"{label}.csv"
    if not path.exists():
        raise DataValidationError(f"no bundled curve file for {label}")
    return read_curve_file(path)


# --- twist datasets -------------------------------------------------------


@dataclass(frozen=True)
class TwistRecord:
    d: int
    c: int | None = None
    central_value: float | None = None
    gamma1: float | None = None
    vanishing: bool = False


@dataclass(frozen=True)
class FamilyDataset:
    """Columns of a twist family, sorted by |d|; NaN marks an absent field."""

    curve: CurveFamily
    x_bound: float
    d: np.ndarray
    c: np.ndarray
    central_value: np.ndarray
    gamma1: np.ndarray
    vanishing: np.ndarray
    provenance: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.d.size

    @property
    def records(self) -> Iterator[TwistRecord]:
        for i in range(len(self)):
            yield TwistRecord(
                int(self.d[i]),
                None if np.isnan(self.c[i]) else int(self.c[i]),
                None if np.isnan(self.central_value[i]) else float(self.central_value[i]),
                None if np.isnan(self.gamma1[i]) else float(self.gamma1[i]),
                bool(self.vanishing[i]),
            )

    @property
    def half_dim(self) -> float:
        from .rmt import matrix_dimension

        return matrix_dimension(self.curve.conductor, self.x_bound)

    def scaled_lowest_zeros(self) -> np.ndarray:
        """Lowest zeros of non-vanishing twists scaled by log(sqrt(M)|d|/2 pi)."""
        from .stats import scale_zero

        m = ~self.vanishing & ~np.isnan(self.gamma1)
        return np.atleast_1d(scale_zero(self.gamma1[m], self.d[m], self.curve.conductor))

    def first_peak_mass(self) -> tuple[float, float]:
        """S_L: share of all twists with kappa X^{-1/2} < L < 4 kappa X^{-1/2}."""
        kappa = self.curve.require_kappa()
        cv = self.central_value
        if np.isnan(cv).any():
            raise DataValidationError("S_L needs central values for every twist")
        t1 = kappa / math.sqrt(self.x_bound)
        p = float(np.mean((cv > t1) & (cv < 4 * t1)))
        return p, math.sqrt(p * (1 - p) / cv.size)


def _parse_optional(text: str, kind):
    text = text.strip()
    if text == "" or text.lower() in ("nan", "none", "null"):
        return math.nan
    return kind(text)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "t", "yes", "y"):
        return True
    if t in ("0", "false", "f", "no", "n", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def validate_columns(curve, x_bound, d, c, cv, g1, van, row_numbers=None) -> list:
    problems = []
    kappa = curve.kappa
    rows = row_numbers if row_numbers is not None else range(1, d.size + 1)
    for i, row in enumerate(rows):
        di = int(d[i])
        if not is_prime_fundamental_discriminant(di, curve.twist_sign):
            problems.append((row, f"d={di} is not a prime fundamental discriminant of the family's sign"))
        if x_bound is not None and abs(di) > x_bound:
            problems.append((row, f"|d|={abs(di)} exceeds X={x_bound}"))
        ci, vi, gi = c[i], cv[i], g1[i]
        if not np.isnan(ci) and (ci < 0 or ci != int(ci)):
            problems.append((row, f"c={ci} is not a nonnegative integer"))
        if not np.isnan(vi) and vi < 0:
            problems.append((row, "negative central value"))
        if not np.isnan(ci) and bool(van[i]) != (ci == 0):
            problems.append((row, f"vanishing={bool(van[i])} inconsistent with c={int(ci)}"))
        if not np.isnan(vi) and bool(van[i]) != (vi == 0):
            problems.append((row, f"vanishing={bool(van[i])} inconsistent with central value {vi}"))
        if kappa is not None and not (np.isnan(ci) or np.isnan(vi)):
            expect = kappa * ci * ci / math.sqrt(abs(di))
            if abs(vi - expect) > CENTRAL_VALUE_RTOL * max(abs(expect), 1e-300):
                problems.append((row, f"central value {vi} != kappa c^2/sqrt|d| = {expect}"))
        if not np.isnan(gi):
            if van[i]:
                problems.append((row, "gamma1 given for a vanishing twist"))
            if gi < 0:
                problems.append((row, "negative gamma1"))
    return problems


def load_family(curve_file, twist_file, x_bound: float | None = None, curve: CurveFamily | None = None) -> FamilyDataset:
    """Read and validate a family; X defaults to max |d|."""
    curve = read_curve_file(curve_file) if curve is None else curve
    with open(twist_file, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        missing = [c for c in TWIST_COLUMNS if c not in header]
        if missing:
            raise DataValidationError(f"{twist_file}: missing columns {missing}")
        idx = [header.index(c) for c in TWIST_COLUMNS]
        rows, nums, problems = [], [], []
        for n, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                f = [row[k] for k in idx]
                rows.append((
                    int(f[0]),
                    _parse_optional(f[1], float),
                    _parse_optional(f[2], float),
                    _parse_optional(f[3], float),
                    _parse_bool(f[4]),
                ))
                nums.append(n)
            except (ValueError, IndexError) as exc:
                problems.append((n, f"cannot parse: {exc}"))
    if problems:
        raise DataValidationError(f"{twist_file}: malformed rows", problems)
    if not rows:
        raise DataValidationError(f"{twist_file}: no records")
    d = np.array([r[0] for r in rows], dtype=np.int64)
    c = np.array([r[1] for r in rows], dtype=float)
    cv = np.array([r[2] for r in rows], dtype=float)
    g1 = np.array([r[3] for r in rows], dtype=float)
    van = np.array([r[4] for r in rows], dtype=bool)
    problems = validate_columns(curve, x_bound, d, c, cv, g1, van, nums)
    if problems:
        raise DataValidationError(f"{twist_file}: invariant violations", problems)
    order = np.argsort(np.abs(d), kind="stable")
    return FamilyDataset(
        curve=curve,
        x_bound=float(x_bound if x_bound is not None else np.abs(d).max()),
        d=d[order], c=c[order], central_value=cv[order], gamma1=g1[order], vanishing=van[order],
        provenance=f"loaded from {twist_file}",
    )


def _fmt(x) -> str:
    return "" if np.isnan(x) else repr(float(x))


def save_family(dataset: FamilyDataset, curve_file, twist_file) -> None:
    write_curve_file(dataset.curve, curve_file)
    with open(twist_file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TWIST_COLUMNS)
        for i in range(len(dataset)):
            c = dataset.c[i]
            w.writerow([
                int(dataset.d[i]),
                "" if np.isnan(c) else int(c),
                _fmt(dataset.central_value[i]),
                _fmt(dataset.gamma1[i]),
                "true" if dataset.vanishing[i] else "false",
            ])


# --- synthetic families ---------------------------------------------------


def synth_family(
    curve: CurveFamily,
    x_bound: int,
    c_distribution: Mapping[int, float] | None = None,
    rng=None,
) -> FamilyDataset:
    """Assign c_E(|d|) independently to every sieved d and apply the central value formula.

    With c drawn independently of d, each c-class is spread uniformly over
    the sieved discriminants.
    """
    kappa = curve.require_kappa()
    dist = dict(DEFAULT_C_DISTRIBUTION if c_distribution is None else c_distribution)
    probs = np.array(list(dist.values()), dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise DomainError("c_distribution must be a probability vector")
    d = sieve_prime_fundamental_discriminants(curve.twist_sign, int(x_bound))
    if d.size == 0:
        raise DomainError(f"no prime fundamental discriminants with |d| <= {x_bound}")
    gen = _as_generator(0 if rng is None else rng)
    keys = np.array(list(dist.keys()), dtype=float)
    c = keys[gen.choice(keys.size, size=d.size, p=probs)]
    cv = kappa * c * c / np.sqrt(np.abs(d).astype(float))
    return FamilyDataset(
        curve=curve,
        x_bound=float(x_bound),
        d=d, c=c, central_value=cv,
        gamma1=np.full(d.size, np.nan),
        vanishing=c == 0,
        provenance="synthetic",
        meta={"c_distribution": {int(k): v for k, v in dist.items()},
              "c_distribution_authoritative": c_distribution is not None},
    )


def expected_first_peak_mass(dataset: FamilyDataset, p_c1: float) -> float:
    """Expected S_L when c = 1 has probability ``p_c1`` independently of d."""
    ad = np.abs(dataset.d).astype(float)
    in_window = (ad < dataset.x_bound) & (ad > dataset.x_bound / 16.0)
    return p_c1 * float(np.mean(in_window))


def synth_zeros(
    spec: EnsembleSpec,
    dataset: FamilyDataset,
    density: DensityTable | None,
    rng,
    chunk: int = 20000,
) -> FamilyDataset:
    """Give each non-vanishing twist a lowest zero drawn from ``spec``.

    gamma1 = theta_1 / log(sqrt(M)|d|/2 pi), so the scaled zeros are exactly
    the ensemble's lowest eigenangles.
    """
    gen = _as_generator(rng)
    target = int(np.sum(~dataset.vanishing))
    angles = []
    have = 0
    while have < target:
        wb = rejection_sample(spec, density, gen, chunk)
        a = wb.expanded_first_angles()
        # Shuffle so copies of one matrix are not assigned to neighbouring d.
        a = a[gen.permutation(a.size)]
        angles.append(a)
        have += a.size
    theta = np.concatenate(angles)[:target] if target else np.empty(0)
    g1 = np.full(len(dataset), np.nan)
    nz = ~dataset.vanishing
    scale = np.log(math.sqrt(dataset.curve.conductor) * np.abs(dataset.d[nz]) / (2 * math.pi))
    g1[nz] = theta / scale
    meta = dict(dataset.meta, generating_spec=spec.to_dict())
    return replace(dataset, gamma1=g1, meta=meta, provenance=dataset.provenance + "+synthetic zeros")


# --- sample dumps ---------------------------------------------------------


def write_sample_dump(batch: SpectralBatch, path, meta: dict | None = None) -> None:
    n = batch.half_dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["N"] + [f"angle_{j}" for j in range(1, n + 1)] + ["lambda1"])
        for a, v in zip(batch.angles, batch.values):
            w.writerow([n] + [repr(float(x)) for x in a] + [repr(float(v))])
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump({"N": n, "count": len(batch), **(meta or {})}, fh, indent=2)


def read_sample_dump(path) -> SpectralBatch:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "N" or header[-1] != "lambda1":
            raise DataValidationError(f"{path}: not a sample dump")
        rows = [list(map(float, r)) for r in reader if r]
    n = len(header) - 2
    arr = np.array(rows, dtype=float).reshape(-1, n + 2)
    return SpectralBatch(n, arr[:, 1:-1], arr[:, -1])


def write_retained_dump(wb: WeightedBatch, path) -> None:
    keep = wb.multiplicity > 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda1", "first_angle", "multiplicity"])
        for v, a, m in zip(wb.batch.values[keep], wb.batch.first_angles[keep], wb.multiplicity[keep]):
            w.writerow([repr(float(v)), repr(float(a)), int(m)])


def read_retained_dump(path):
    """Return ``(lambda1, first_angle, multiplicity)`` arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["lambda1", "first_angle", "multiplicity"]:
            raise DataValidationError(f"{path}: not a retained-sample dump")
        rows = [r for r in reader if r]
    if not rows:
        return np.empty(0), np.empty(0), np.empty(0, dtype=np.int64)
    v = np.array([float(r[0]) for r in rows])
    a = np.array([float(r[1]) for r in rows])
    m = np.array([int(r[2]) for r in rows], dtype=np.int64)
    return v, a, m


def read_observable(path, curve_file=None):
    """Lowest-angle style observable from any supported file.

    Returns ``(values, weights)``; weights is ``None`` for unweighted data.
    Twist files need ``curve_file`` for the conductor scaling.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    if header[:3] == ["lambda1", "first_angle", "multiplicity"]:
        _, a, m = read_retained_dump(path)
        return a, m.astype(float)
    if header and header[0] == "N" and header[-1] == "lambda1":
        return read_sample_dump(path).first_angles, None
    if all(c in header for c in TWIST_COLUMNS):
        if curve_file is None:
            raise DataValidationError(f"{path}: twist files need a curve file for scaling")
        return load_family(curve_file, path).scaled_lowest_zeros(), None
    raise DataValidationError(f"{path}: unrecognised file header {header[:5]}")


def family_dimension(dataset: FamilyDataset) -> int:
    return nearest_dimension(dataset.curve.conductor, dataset.x_bound)
