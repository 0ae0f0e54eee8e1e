"""Seeded generators: block covariances, coefficients, Gaussian samples, outputs.

All randomness flows through the counter-based Philox generator, keyed by an
explicit integer seed plus purpose tags, so every artifact is a pure function
of its seed and sub-streams stay independent (regenerating one block never
shifts another).

The covariance generator draws block sizes uniformly on an integer range and
fills each block with U^T U + epsilon * I where U has independent uniform
entries on [-1, 1]; off-block entries are zero. Every eigenvalue is then at
least epsilon, and within-block covariances are bounded, which keeps the
generated matrices well inside the regime the estimators are built for.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .covariance import BlockCovariance
from .errors import NotPositiveDefiniteError
from .partition import Partition


def _tag_to_int(tag) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    value = int(tag)
    if value < 0:
        raise ValueError(f"seed tags must be non-negative, got {value}")
    return value


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """Philox generator keyed by (seed, *tags); tags may be ints or strings."""
    entropy = tuple(_tag_to_int(t) for t in (seed, *tags))
    return np.random.Generator(np.random.Philox(seed=np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *tags) -> int:
    """A stable 64-bit sub-seed for handing to another seeded generator."""
    entropy = tuple(_tag_to_int(t) for t in (seed, *tags))
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a random block-diagonal covariance.

    Exactly one of ``group_count`` (number of blocks) or ``dim`` (target total
    dimension) must be given. Block sizes are drawn i.i.d. uniform on
    [block_size_min, block_size_max], which must sit at or above 10, the range
    for which the construction provably separates blocks.
    """

    seed: int
    group_count: int | None = None
    dim: int | None = None
    block_size_min: int = 10
    block_size_max: int = 15
    factor_count: int = 5
    epsilon: float = 0.2

    def __post_init__(self):
        if (self.group_count is None) == (self.dim is None):
            raise ValueError("exactly one of group_count or dim must be set")
        if self.group_count is not None and self.group_count < 1:
            raise ValueError("group_count must be >= 1")
        if not 10 <= self.block_size_min <= self.block_size_max:
            raise ValueError(
                "block sizes must satisfy 10 <= block_size_min <= block_size_max, "
                f"got [{self.block_size_min}, {self.block_size_max}]"
            )
        if self.factor_count < 1:
            raise ValueError("factor_count must be >= 1")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.dim is not None and not self._feasible(self.dim):
            raise ValueError(
                f"dim = {self.dim} cannot be tiled by blocks of size "
                f"[{self.block_size_min}, {self.block_size_max}]"
            )

    def _feasible(self, total: int) -> bool:
        q = -(-total // self.block_size_max)  # ceil
        return q * self.block_size_min <= total


def _draw_block_sizes(spec: GeneratorSpec, rng: np.random.Generator) -> list[int]:
    lo, hi = spec.block_size_min, spec.block_size_max
    if spec.group_count is not None:
        return [int(s) for s in rng.integers(lo, hi + 1, size=spec.group_count)]
    target = spec.dim
    sizes: list[int] = []
    while True:
        remaining = target - sum(sizes)
        if remaining == 0:
            return sizes
        if lo <= remaining <= hi:
            sizes.append(remaining)
            return sizes
        if remaining > hi:
            draw = int(rng.integers(lo, hi + 1))
            if remaining - draw >= lo:
                sizes.append(draw)
                continue
        # the tail cannot absorb another full draw: pool trailing blocks until
        # the pooled total splits evenly into in-range sizes (the feasibility
        # check at construction guarantees this terminates)
        pooled = remaining
        while True:
            q = -(-pooled // hi)  # ceil
            if q * lo <= pooled:
                break
            pooled += sizes.pop()
        base, extra = divmod(pooled, q)
        sizes.extend(base + 1 if i < extra else base for i in range(q))
        return sizes


def generate_sigma(spec: GeneratorSpec) -> tuple[np.ndarray, Partition]:
    """Draw a block-diagonal covariance and its ground-truth partition.

    Per block of size m: Sigma_block = U^T U + epsilon * I with U of shape
    (factor_count, m) and independent U(-1, 1) entries. Groups occupy
    consecutive index ranges, so the returned partition is already canonical.
    Deterministic given ``spec.seed``.
    """
    sizes = _draw_block_sizes(spec, derive_rng(spec.seed, "block-sizes"))
    p = sum(sizes)
    sigma = np.zeros((p, p))
    groups = []
    start = 0
    for k, m in enumerate(sizes):
        u = derive_rng(spec.seed, "block-factors", k).uniform(-1.0, 1.0, size=(spec.factor_count, m))
        block = u.T @ u + spec.epsilon * np.eye(m)
        sigma[start : start + m, start : start + m] = block
        groups.append(tuple(range(start, start + m)))
        start += m
    return sigma, Partition(p, tuple(groups))


def generate_beta(p: int, low: float = 1.0, high: float = 2.0, seed: int = 0) -> np.ndarray:
    """I.i.d. uniform coefficients on [low, high]; deterministic per seed."""
    if not low < high:
        raise ValueError(f"need low < high, got [{low}, {high}]")
    return derive_rng(seed, "beta").uniform(low, high, size=p)


def sample_gaussian(mean, cov, n: int, seed: int) -> np.ndarray:
    """Draw n i.i.d. Gaussian rows with the given mean and covariance.

    ``cov`` may be a dense PD matrix or a BlockCovariance; block form samples
    each block from its own sub-stream (independent blocks), which is both
    cheaper and parallel-safe. ``mean`` may be a scalar or a length-p vector.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(cov, BlockCovariance):
        p = cov.p
        x = np.empty((n, p))
        for k, (g, blk) in enumerate(zip(cov.partition.groups, cov.blocks)):
            chol = _cholesky(blk)
            z = derive_rng(seed, "gauss", k).standard_normal((n, len(g)))
            x[:, list(g)] = z @ chol.T
    else:
        cov = np.asarray(cov, dtype=float)
        p = cov.shape[0]
        chol = _cholesky(cov)
        z = derive_rng(seed, "gauss").standard_normal((n, p))
        x = z @ chol.T
    mean = np.asarray(mean, dtype=float)
    if mean.ndim == 0:
        if mean != 0.0:
            x += mean
    else:
        if mean.shape != (p,):
            raise ValueError(f"mean has shape {mean.shape}, expected ({p},)")
        x += mean
    return x


def _cholesky(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            "covariance factorization failed; matrix is not positive definite"
        ) from None


def sample_output(x, beta0: float, beta, noise_sd: float, seed: int) -> np.ndarray:
    """Linear outputs beta0 + x @ beta plus centered Gaussian noise.

    ``noise_sd = 0`` yields exact affine outputs (and consumes no randomness).
    """
    if noise_sd < 0.0:
        raise ValueError(f"noise_sd must be non-negative, got {noise_sd}")
    x = np.asarray(x, dtype=float)
    y = beta0 + x @ np.asarray(beta, dtype=float)
    if noise_sd > 0.0:
        y = y + noise_sd * derive_rng(seed, "output-noise").standard_normal(x.shape[0])
    return y
