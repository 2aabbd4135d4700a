"""Haar-random SO(2N) matrices, their eigenangles and Lambda_B(1).

Eigenvalues of B in SO(2N) come in conjugate pairs exp(+-i theta_j) with
theta_j in [0, pi].  The characteristic polynomial at the symmetry point is

    Lambda_B(1) = prod_j (1 - e^{i theta_j})(1 - e^{-i theta_j})
                = prod_j 4 sin^2(theta_j / 2) = det(I - B).

Bulk sampling is vectorised over stacks of matrices; a chunk of draws is a
:class:`SpectralBatch` rather than a list of per-draw objects.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import ClusteredSpectrumError, DomainError

# Draws whose angles come this close to 0 or pi are resampled.
BOUNDARY_TOL = 1e-10
CHUNK = 4096


@dataclass(frozen=True)
class RngStream:
    """Seed plus worker index; identical pairs replay identical draws."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(ss)

    def split(self, n: int) -> list["RngStream"]:
        """Child streams for ``n`` workers, derived only from this stream."""
        base = self.stream_id * 1_000_003
        return [RngStream(self.seed, base + k + 1) for k in range(n)]


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class SpectralSample:
    half_dim: int
    angles: np.ndarray
    value_at_one: float

    @property
    def first_angle(self) -> float:
        return float(self.angles[0])


@dataclass(frozen=True)
class SpectralBatch:
    """A block of Haar draws: ``angles`` is (count, N), sorted along axis 1."""

    half_dim: int
    angles: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i: int) -> SpectralSample:
        return SpectralSample(self.half_dim, self.angles[i], float(self.values[i]))

    def __iter__(self) -> Iterator[SpectralSample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def first_angles(self) -> np.ndarray:
        return self.angles[:, 0]

    def take(self, index) -> "SpectralBatch":
        return SpectralBatch(self.half_dim, self.angles[index], self.values[index])

    @staticmethod
    def concat(batches: Sequence["SpectralBatch"]) -> "SpectralBatch":
        n = {b.half_dim for b in batches}
        if len(n) != 1:
            raise DomainError(f"cannot concatenate batches with half_dim {sorted(n)}")
        return SpectralBatch(
            n.pop(),
            np.concatenate([b.angles for b in batches]),
            np.concatenate([b.values for b in batches]),
        )


def matrix_dimension(conductor: float, x_bound: float) -> float:
    """Real N equating eigenangle density with zero density: log(sqrt(M) X / 2 pi)."""
    arg = math.sqrt(conductor) * x_bound / (2.0 * math.pi)
    if conductor < 1 or arg <= 1.0:
        raise DomainError(
            f"log(sqrt(M) X / 2pi) must be positive; got M={conductor}, X={x_bound}"
        )
    return math.log(arg)


def nearest_dimension(conductor: float, x_bound: float) -> int:
    return max(1, int(round(matrix_dimension(conductor, x_bound))))


def lambda_at_one(angles) -> np.ndarray | float:
    """prod_j 4 sin^2(theta_j/2) along the last axis."""
    a = np.asarray(angles, dtype=float)
    out = np.prod(4.0 * np.sin(0.5 * a) ** 2, axis=-1)
    return float(out) if out.ndim == 0 else out


def _haar_stack(n2: int, count: int, gen: np.random.Generator) -> np.ndarray:
    z = gen.standard_normal((count, n2, n2))
    q, r = np.linalg.qr(z)
    d = np.sign(np.diagonal(r, axis1=1, axis2=2))
    d[d == 0] = 1.0
    q = q * d[:, None, :]
    # Right-multiplying by diag(-1, 1, ..., 1) maps Haar on O^- onto Haar on SO.
    neg = np.linalg.det(q) < 0
    q[neg, :, 0] *= -1.0
    return q


def haar_orthogonal(half_dim: int, rng, count: int | None = None) -> np.ndarray:
    """Haar-distributed matrices in SO(2N); a stack when ``count`` is given."""
    if half_dim < 1:
        raise DomainError("half_dim must be >= 1")
    gen = _as_generator(rng)
    q = _haar_stack(2 * half_dim, 1 if count is None else count, gen)
    return q[0] if count is None else q


def _angles_from_stack(q: np.ndarray) -> np.ndarray:
    ev = np.linalg.eigvals(q)
    th = np.sort(np.abs(np.angle(ev)), axis=-1)
    # Each theta appears twice (as +theta and -theta).
    return 0.5 * (th[..., 0::2] + th[..., 1::2])


def eigenangles(b: np.ndarray) -> np.ndarray:
    """Sorted eigenangles in [0, pi] of B (or of a stack of B)."""
    b = np.asarray(b, dtype=float)
    if b.shape[-1] % 2 or b.shape[-1] != b.shape[-2]:
        raise DomainError("expected square matrices of even size")
    return _angles_from_stack(b)


def _q_function(b: np.ndarray, theta: float) -> float:
    n = b.shape[0] // 2
    z = np.exp(1j * theta)
    val = np.exp(-1j * n * theta) * np.linalg.det(z * np.eye(2 * n) - b)
    return float(val.real)


def scan_eigenangles(
    b: np.ndarray, points_per_angle: int = 64, max_refine: int = 6, seed=None
) -> np.ndarray:
    """Eigenangles by sign changes of q(theta) = prod_j 2(cos theta - cos theta_j).

    Independent of :func:`eigenangles`: only determinants of e^{i theta} I - B
    are used.  Angles pinned at 0 or pi are counted from the rank of B -+ I.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0] // 2
    eye = np.eye(2 * n)
    tol = 1e-8
    m0 = (2 * n - np.linalg.matrix_rank(eye - b, tol=tol)) // 2
    mpi = (2 * n - np.linalg.matrix_rank(eye + b, tol=tol)) // 2
    interior = n - m0 - mpi
    roots: list[float] = []
    if interior:
        pts = points_per_angle * n
        for _ in range(max_refine + 1):
            grid = np.linspace(0.0, np.pi, pts + 1)[1:-1]
            vals = np.array([_q_function(b, t) for t in grid])
            idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
            if len(idx) >= interior:
                break
            pts *= 2
        if len(idx) < interior:
            raise ClusteredSpectrumError(
                f"found {len(idx)} of {interior} interior eigenangles", seed=seed
            )
        for i in idx:
            lo, hi = grid[i], grid[i + 1]
            flo = vals[i]
            while hi - lo > 1e-12:
                mid = 0.5 * (lo + hi)
                fm = _q_function(b, mid)
                if fm == 0.0:
                    lo = hi = mid
                    break
                if np.sign(fm) == np.sign(flo):
                    lo, flo = mid, fm
                else:
                    hi = mid
            roots.append(0.5 * (lo + hi))
    out = [0.0] * m0 + sorted(roots) + [math.pi] * mpi
    return np.array(out[:n])


def _draw_chunk(half_dim: int, count: int, gen: np.random.Generator):
    q = _haar_stack(2 * half_dim, count, gen)
    angles = _angles_from_stack(q)
    ok = (angles[:, 0] > BOUNDARY_TOL) & (angles[:, -1] < np.pi - BOUNDARY_TOL)
    return angles[ok]


def _haar_batch_single(half_dim: int, count: int, gen: np.random.Generator) -> SpectralBatch:
    parts = []
    remaining = count
    while remaining > 0:
        a = _draw_chunk(half_dim, min(CHUNK, remaining), gen)
        parts.append(a)
        remaining -= a.shape[0]
    angles = np.concatenate(parts) if parts else np.empty((0, half_dim))
    return SpectralBatch(half_dim, angles, lambda_at_one(angles))


def haar_batch(half_dim: int, count: int, rng, workers: int = 1) -> SpectralBatch:
    """``count`` Haar draws from SO(2N).

    With ``workers > 1`` the count is split evenly over child streams of an
    :class:`RngStream`; output is reproducible for a fixed worker count.
    """
    if half_dim < 1:
        raise DomainError("half_dim must be >= 1")
    if count < 0:
        raise DomainError("count must be nonnegative")
    if workers <= 1:
        return _haar_batch_single(half_dim, count, _as_generator(rng))
    if not isinstance(rng, RngStream):
        raise DomainError("parallel sampling needs an RngStream")
    streams = rng.split(workers)
    sizes = [count // workers + (k < count % workers) for k in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(
            pool.map(
                lambda a: _haar_batch_single(half_dim, a[1], a[0].generator()),
                zip(streams, sizes),
            )
        )
    return SpectralBatch.concat(parts)


def haar_sample(half_dim: int, rng) -> SpectralSample:
    return haar_batch(half_dim, 1, rng)[0]
