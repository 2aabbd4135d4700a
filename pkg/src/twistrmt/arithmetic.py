"""Number-theoretic inputs for the twist families.

Prime and fundamental-discriminant sieves, the Euler product a_s(E), the
delta calibration and the excision cutoff c = a_{-1/2}(E)^{-2} delta kappa_E.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DataGapError, DataValidationError, DomainError, SingularLocalFactorError
from .specfun import barnes_g_half

# Limit constant of the normalised vanishing count for positive twists of
# E11.a3 (prime discriminants).
RUBINSTEIN_E11A3_POSITIVE = 0.2834620

HASSE_TOL = 1e-9


def primes_up_to(n: int) -> np.ndarray:
    """Sieve of Eratosthenes; primes <= n as int64."""
    if n < 2:
        return np.array([], dtype=np.int64)
    sieve = np.ones(n + 1, dtype=bool)
    sieve[:2] = False
    for i in range(2, math.isqrt(n) + 1):
        if sieve[i]:
            sieve[i * i :: i] = False
    return np.flatnonzero(sieve).astype(np.int64)


def is_prime(n: int) -> bool:
    n = int(n)
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    # Deterministic Miller-Rabin for n < 3.3e24.
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41):
        if a % n == 0:
            continue
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _sign(sign) -> int:
    if sign in (1, "+", "positive", "pos"):
        return 1
    if sign in (-1, "-", "negative", "neg"):
        return -1
    raise DomainError(f"twist sign must be positive or negative, got {sign!r}")


def is_prime_fundamental_discriminant(d: int, sign=None) -> bool:
    """d = p with p = 1 mod 4, or d = -p with p = 3 mod 4, p prime."""
    d = int(d)
    if sign is not None and (d > 0) != (_sign(sign) > 0):
        return False
    p = abs(d)
    if not is_prime(p):
        return False
    return p % 4 == 1 if d > 0 else p % 4 == 3


def sieve_prime_fundamental_discriminants(sign, x_bound: int) -> np.ndarray:
    """All prime fundamental discriminants of the given sign with |d| <= X, by |d|."""
    sgn = _sign(sign)
    ps = primes_up_to(int(x_bound))
    ps = ps[ps % 4 == (1 if sgn > 0 else 3)]
    return sgn * ps


@dataclass(frozen=True)
class CurveFamily:
    """Arithmetic identity of a twist family.

    ``lambdas`` maps prime p to the normalised coefficient a_p / sqrt(p).
    ``kappa`` is the Kohnen-Zagier constant; it has no default and is
    ``None`` until supplied.
    """

    label: str
    conductor: int
    omega: int
    lambdas: Mapping[int, float]
    twist_sign: int = 1
    kappa: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "twist_sign", _sign(self.twist_sign))
        problems = []
        if not is_prime(self.conductor):
            problems.append((None, f"conductor {self.conductor} is not prime"))
        if self.omega not in (1, -1):
            problems.append((None, f"omega must be +-1, got {self.omega}"))
        if self.kappa is not None and not self.kappa > 0:
            problems.append((None, f"kappa must be positive, got {self.kappa}"))
        for p, lam in self.lambdas.items():
            bound = 1.0 if p == self.conductor else 2.0
            if abs(lam) > bound + HASSE_TOL:
                problems.append((None, f"|lambda_{p}| = {abs(lam):.6g} exceeds {bound:g}"))
        if problems:
            raise DataValidationError(f"invalid curve {self.label}", problems)

    def require_kappa(self) -> float:
        if self.kappa is None:
            raise DataValidationError(
                f"kappa_E for {self.label} is required: add 'kappa' to the curve "
                "file header or pass it explicitly (tabulated values exist for "
                "many families, e.g. Rubinstein's tables)"
            )
        return float(self.kappa)

    def with_kappa(self, kappa: float) -> "CurveFamily":
        return CurveFamily(
            self.label, self.conductor, self.omega, self.lambdas, self.twist_sign, kappa, self.meta
        )

    def with_twist_sign(self, sign) -> "CurveFamily":
        return CurveFamily(
            self.label, self.conductor, self.omega, self.lambdas, sign, self.kappa, self.meta
        )

    @property
    def max_prime(self) -> int:
        return max(self.lambdas) if self.lambdas else 0


def local_factor(lam: float, psi: int, z: float, p: int | None = None) -> float:
    """L_p(z) = (1 - lambda z + psi z^2)^{-1}."""
    den = 1.0 - lam * z + psi * z * z
    if den == 0.0:
        raise SingularLocalFactorError(p)
    return 1.0 / den


@dataclass(frozen=True)
class ArithmeticFactor:
    s: float
    value: float
    prime_bound: int
    tail_estimate: float


def _log_factors(curve: CurveFamily, s: float, primes: np.ndarray) -> np.ndarray:
    """Per-prime log contribution to a_s(E), in the order of ``primes``."""
    lam = np.array([curve.lambdas[int(p)] for p in primes], dtype=float)
    pf = primes.astype(float)
    out = 0.5 * s * (s - 1) * np.log1p(-1.0 / pf)
    good = primes != curve.conductor
    z = 1.0 / np.sqrt(pf[good])
    den_p = 1.0 - lam[good] * z + z * z
    den_m = 1.0 + lam[good] * z + z * z
    bad = (den_p == 0) | (den_m == 0)
    if bad.any():
        raise SingularLocalFactorError(int(primes[good][bad][0]))
    # (p/(p+1)) (1/p + (L+^s + L-^s)/2) written so that s = 0 gives exactly 1.
    pg = pf[good]
    out[good] += np.log((1.0 + 0.5 * pg * (den_p ** (-s) + den_m ** (-s))) / (pg + 1.0))
    return out


def a_s_factor(curve: CurveFamily, s: float, prime_bound: int = 100_000) -> ArithmeticFactor:
    """Truncated Euler product a_s(E) over p <= prime_bound.

    The first bracket runs over all primes and the second over p not dividing
    M in one pass; the conductor contributes L_M(+-omega / sqrt(M))^s with the
    sign of the twist family.  ``tail_estimate`` is the relative change over
    the last decade of primes, |a(P) / a(P/10) - 1|.
    """
    if s <= -1:
        raise DomainError("a_s(E) is evaluated for s > -1")
    primes = primes_up_to(int(prime_bound))
    missing = [int(p) for p in primes if int(p) not in curve.lambdas]
    if missing:
        raise DataGapError(missing[0])
    if curve.conductor not in curve.lambdas:
        raise DataGapError(curve.conductor)
    logs = _log_factors(curve, s, primes)
    lam_m = curve.lambdas[curve.conductor]
    l_m = local_factor(lam_m, 0, curve.twist_sign * curve.omega / math.sqrt(curve.conductor), curve.conductor)
    cond = s * math.log(l_m)
    total = float(np.sum(logs)) + cond
    k = int(np.searchsorted(primes, prime_bound // 10, side="right"))
    earlier = float(np.sum(logs[:k])) + cond
    return ArithmeticFactor(
        s=s,
        value=math.exp(total),
        prime_bound=int(prime_bound),
        tail_estimate=abs(math.expm1(total - earlier)),
    )


_DELTA_PREFACTOR = (8.0 / 3.0) * 2.0 ** (-7 / 8) * math.pi**-0.25


@dataclass(frozen=True)
class DeltaCalibration:
    rubinstein_constant: float
    delta: float


def delta_forward(delta: float) -> float:
    """(8/3) 2^{-7/8} G(1/2) pi^{-1/4} delta^{1/2}."""
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    return _DELTA_PREFACTOR * barnes_g_half() * math.sqrt(delta)


def calibrate_delta(rubinstein_constant: float = RUBINSTEIN_E11A3_POSITIVE) -> DeltaCalibration:
    if rubinstein_constant < 0:
        raise DomainError("constant must be nonnegative")
    delta = (rubinstein_constant / (_DELTA_PREFACTOR * barnes_g_half())) ** 2
    return DeltaCalibration(rubinstein_constant, delta)


def excision_threshold(a_half: float, delta: float, kappa: float, half_dim: float):
    """Return ``(c, c * exp(-N/2))`` with c = a_{-1/2}^{-2} delta kappa.

    ``half_dim`` may be non-integer.
    """
    if a_half <= 0 or kappa <= 0 or not 0 < delta <= 1 or half_dim < 0:
        raise DomainError(
            f"need a_half > 0, 0 < delta <= 1, kappa > 0, N >= 0; "
            f"got {a_half}, {delta}, {kappa}, {half_dim}"
        )
    c = delta * kappa / (a_half * a_half)
    return c, c * math.exp(-half_dim / 2.0)
