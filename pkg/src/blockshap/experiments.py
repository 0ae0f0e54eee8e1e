"""Seeded Monte Carlo harnesses: risk curves, Shapley error curves, recovery
rates, and the covariance-efficiency check.

Every harness derives one sub-seed per (K, N, replication) cell from the
master seed, so results are identical whether replications run serially or on
a thread pool, and any single row can be replayed standalone from the seed it
carries. Rows also time their own execution, but timing stays out of the
result tables (reruns must be byte-identical); it is reported through the run
manifest instead.

The harnesses emit plot-ready tidy rows plus aggregated (mean, standard
error) tables; figure rendering lives in the report layer.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .covariance import (
    StructureConfig,
    empirical_moments,
    estimate_structure,
    project_block,
)
from .crb import crb_block
from .partition import Partition
from .shapley import GaussianLinearModel, shapley_block, shapley_plugin
from .synthdata import (
    GeneratorSpec,
    derive_rng,
    derive_seed,
    generate_beta,
    generate_sigma,
    sample_gaussian,
    sample_output,
)

# Replications per batch in the vectorized efficiency check; fixed so the
# random stream (and thus the output) never depends on memory tuning.
_CRB_BATCH = 256


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid and model settings shared by the curve and recovery harnesses.

    ``k_groups`` are block counts K, ``samples_per_dim`` the factors N with
    sample size n = N * p. Covariances come from the block generator with the
    given size range, factor count, and ridge; structure selection uses the
    given method. ``replications`` rows are produced per (K, N) cell, all
    seeded from ``seed``.
    """

    seed: int
    k_groups: tuple[int, ...] = (4, 16, 36, 64, 100)
    samples_per_dim: tuple[int, ...] = (2, 5, 10)
    replications: int = 20
    block_size_min: int = 10
    block_size_max: int = 15
    factor_count: int = 5
    epsilon: float = 0.2
    method: str = "sgrid"
    delta: float = 0.75
    max_block: int | None = 15
    noise_sd: float = 0.0
    beta_low: float = 1.0
    beta_high: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "k_groups", tuple(int(k) for k in self.k_groups))
        object.__setattr__(
            self, "samples_per_dim", tuple(int(n) for n in self.samples_per_dim)
        )
        if not self.k_groups or min(self.k_groups) < 1:
            raise ValueError("k_groups must be positive integers")
        if not self.samples_per_dim or min(self.samples_per_dim) < 1:
            raise ValueError("samples_per_dim must be positive integers")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.noise_sd < 0.0:
            raise ValueError("noise_sd must be non-negative")
        self.structure_config()  # validate method/delta/max_block eagerly

    def structure_config(self) -> StructureConfig:
        return StructureConfig(
            method=self.method, delta=self.delta, max_block=self.max_block
        )

    def generator_spec(self, k: int, seed: int) -> GeneratorSpec:
        return GeneratorSpec(
            seed=seed,
            group_count=k,
            block_size_min=self.block_size_min,
            block_size_max=self.block_size_max,
            factor_count=self.factor_count,
            epsilon=self.epsilon,
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "k_groups": list(self.k_groups),
            "samples_per_dim": list(self.samples_per_dim),
            "replications": self.replications,
            "block_size_min": self.block_size_min,
            "block_size_max": self.block_size_max,
            "factor_count": self.factor_count,
            "epsilon": self.epsilon,
            "method": self.method,
            "delta": self.delta,
            "max_block": self.max_block,
            "noise_sd": self.noise_sd,
            "beta_low": self.beta_low,
            "beta_high": self.beta_high,
        }


def _default_crb_sigma() -> np.ndarray:
    out = np.zeros((4, 4))
    out[:2, :2] = [[0.5, 0.3], [0.3, 0.6]]
    out[2:, 2:] = [[0.45, -0.25], [-0.25, 0.55]]
    return out


@dataclass(frozen=True)
class CrbCheckConfig:
    """Settings for the efficiency check of the block-projected covariance.

    The default target is a 4-dimensional covariance with two 2-blocks. With
    ``known_structure`` the true partition is imposed on every replication;
    otherwise the structure is re-estimated per replication (grid scan over
    correlation thresholds with the given fixed-dimension ``delta``).
    """

    seed: int
    sigma: np.ndarray = field(default_factory=_default_crb_sigma)
    partition_line: str = "1,2;3,4"
    n: int = 5000
    replications: int = 10000
    known_structure: bool = True
    delta: float = 0.25

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        sigma.flags.writeable = False
        object.__setattr__(self, "sigma", sigma)
        if self.n < 2 or self.replications < 2:
            raise ValueError("need n >= 2 and replications >= 2")
        self.partition()  # validate

    def partition(self) -> Partition:
        part = Partition.from_line(self.partition_line)
        if part.p != self.sigma.shape[0]:
            raise ValueError(
                f"partition covers {part.p} indices but sigma is "
                f"{self.sigma.shape[0]} x {self.sigma.shape[0]}"
            )
        return part

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "sigma": self.sigma.tolist(),
            "partition": self.partition_line,
            "n": self.n,
            "replications": self.replications,
            "known_structure": self.known_structure,
            "delta": self.delta,
        }


@dataclass
class ExperimentResult:
    """Tidy rows from one harness run plus enough context to write outputs."""

    name: str
    columns: tuple[str, ...]
    rows: list[dict]
    config: dict
    elapsed_s: float

    def table(self) -> list[tuple]:
        """Rows restricted to the declared (deterministic) columns."""
        return [tuple(row[c] for c in self.columns) for row in self.rows]

    def aggregated(self) -> tuple[tuple[str, ...], list[tuple]]:
        if self.name == "crb":
            return _aggregate_crb(self.rows)
        return _aggregate_cells(self.rows, self.columns)


_CELL_KEYS = ("k_groups", "n_per_dim")
_NON_METRIC = set(_CELL_KEYS) | {"rep", "seed", "p", "n"}


def _aggregate_cells(rows: list[dict], columns) -> tuple[tuple[str, ...], list[tuple]]:
    metrics = [c for c in columns if c not in _NON_METRIC]
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        cells.setdefault(tuple(row[k] for k in _CELL_KEYS), []).append(row)
    out_cols = list(_CELL_KEYS) + ["replications"]
    for m in metrics:
        out_cols += [f"{m}_mean", f"{m}_se"]
    out_rows = []
    for key in sorted(cells):
        group = cells[key]
        rec: list = list(key) + [len(group)]
        for m in metrics:
            vals = np.array([float(r[m]) for r in group])
            se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
            rec += [float(vals.mean()), se]
        out_rows.append(tuple(rec))
    return tuple(out_cols), out_rows


def _aggregate_crb(
    rows: list[dict], strong: float = 0.1
) -> tuple[tuple[str, ...], list[tuple]]:
    on = [r for r in rows if r["on_pattern"]]
    off = [r for r in rows if not r["on_pattern"]]
    strong_rows = [r for r in on if abs(r["theoretical"]) >= strong]
    max_rel = max((abs(r["rel_dev"]) for r in strong_rows), default=0.0)
    max_off = max((abs(r["empirical"]) for r in off), default=0.0)
    cols = (
        "strong_threshold",
        "n_strong_entries",
        "max_rel_dev_strong",
        "n_off_pattern_entries",
        "max_abs_off_pattern",
    )
    return cols, [(strong, len(strong_rows), max_rel, len(off), max_off)]


def _ordered_map(fn: Callable, tasks: Iterable[tuple], threads: int) -> list:
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: fn(*t), tasks))


def _cell_tasks(cfg: ExperimentConfig, tag: str) -> list[tuple[int, int, int, int]]:
    return [
        (k, n_per_dim, rep, derive_seed(cfg.seed, tag, k, n_per_dim, rep))
        for k in cfg.k_groups
        for n_per_dim in cfg.samples_per_dim
        for rep in range(cfg.replications)
    ]


def _simulate_sample(cfg: ExperimentConfig, k: int, n_per_dim: int, rep_seed: int):
    spec = cfg.generator_spec(k, derive_seed(rep_seed, "sigma"))
    sigma, bstar = generate_sigma(spec)
    n = n_per_dim * bstar.p
    x = sample_gaussian(
        0.0, project_block(sigma, bstar), n, derive_seed(rep_seed, "sample")
    )
    return sigma, bstar, x


def _fig1_rep(cfg: ExperimentConfig, k: int, n_per_dim: int, rep: int, rep_seed: int) -> dict:
    t0 = time.perf_counter()
    sigma, bstar, x = _simulate_sample(cfg, k, n_per_dim, rep_seed)
    moments = empirical_moments(x)
    selected = estimate_structure(moments, cfg.structure_config())
    s = moments.cov_mle
    s_proj = project_block(s, selected).reconstruct()
    d_full = s - sigma
    d_proj = s_proj - sigma
    norm_full = float(np.linalg.norm(d_full))
    norm_proj = float(np.linalg.norm(d_proj))
    p = bstar.p
    return {
        "k_groups": k,
        "n_per_dim": n_per_dim,
        "rep": rep,
        "seed": rep_seed,
        "p": p,
        "n": n_per_dim * p,
        "frob_norm_s": norm_full,
        "frob_norm_sb": norm_proj,
        "risk_s": norm_full**2 / p,
        "risk_sb": norm_proj**2 / p,
        "recovered": int(selected == bstar),
        "wall_time_s": time.perf_counter() - t0,
    }


def run_fig1(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Frobenius error of the raw and block-projected sample covariances.

    Per cell: draw a block covariance, sample n = N * p rows, select a
    structure, and record both the raw Frobenius norms of the errors (what
    the risk curves plot) and the squared norms over p, plus whether the true
    partition was recovered exactly.
    """
    t0 = time.perf_counter()
    rows = _ordered_map(
        lambda k, n_per_dim, rep, s: _fig1_rep(cfg, k, n_per_dim, rep, s),
        _cell_tasks(cfg, "fig1"),
        threads,
    )
    columns = (
        "k_groups", "n_per_dim", "rep", "seed", "p", "n",
        "frob_norm_s", "frob_norm_sb", "risk_s", "risk_sb", "recovered",
    )
    return ExperimentResult("fig1", columns, rows, cfg.to_dict(), time.perf_counter() - t0)


def _fig2_rep(cfg: ExperimentConfig, k: int, n_per_dim: int, rep: int, rep_seed: int) -> dict:
    t0 = time.perf_counter()
    sigma, bstar, x = _simulate_sample(cfg, k, n_per_dim, rep_seed)
    p = bstar.p
    beta = generate_beta(p, cfg.beta_low, cfg.beta_high, derive_seed(rep_seed, "beta"))
    y = sample_output(x, 0.0, beta, cfg.noise_sd, derive_seed(rep_seed, "output"))
    truth = shapley_block(
        GaussianLinearModel(0.0, beta, project_block(sigma, bstar))
    )
    selected, estimate, _ = shapley_plugin(x, y, cfg.structure_config())
    err = float(np.abs(estimate.eta - truth.eta).sum())
    return {
        "k_groups": k,
        "n_per_dim": n_per_dim,
        "rep": rep,
        "seed": rep_seed,
        "p": p,
        "n": n_per_dim * p,
        "shapley_err_sum": err,
        "recovered": int(selected == bstar),
        "wall_time_s": time.perf_counter() - t0,
    }


def run_fig2(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Sum of absolute Shapley-effect estimation errors per cell.

    Per cell: draw (covariance, partition, coefficients), sample inputs and
    (optionally noisy) outputs, run the plug-in estimator, and record the sum
    of absolute deviations from the exact blockwise effects of the true model.
    """
    t0 = time.perf_counter()
    rows = _ordered_map(
        lambda k, n_per_dim, rep, s: _fig2_rep(cfg, k, n_per_dim, rep, s),
        _cell_tasks(cfg, "fig2"),
        threads,
    )
    columns = (
        "k_groups", "n_per_dim", "rep", "seed", "p", "n",
        "shapley_err_sum", "recovered",
    )
    return ExperimentResult("fig2", columns, rows, cfg.to_dict(), time.perf_counter() - t0)


def _recovery_rep(cfg: ExperimentConfig, k: int, n_per_dim: int, rep: int, rep_seed: int) -> dict:
    t0 = time.perf_counter()
    _, bstar, x = _simulate_sample(cfg, k, n_per_dim, rep_seed)
    selected = estimate_structure(empirical_moments(x), cfg.structure_config())
    return {
        "k_groups": k,
        "n_per_dim": n_per_dim,
        "rep": rep,
        "seed": rep_seed,
        "p": bstar.p,
        "n": n_per_dim * bstar.p,
        "recovered": int(selected == bstar),
        "wall_time_s": time.perf_counter() - t0,
    }


def run_recovery(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Exact structure-recovery indicator per replication."""
    t0 = time.perf_counter()
    rows = _ordered_map(
        lambda k, n_per_dim, rep, s: _recovery_rep(cfg, k, n_per_dim, rep, s),
        _cell_tasks(cfg, "recovery"),
        threads,
    )
    columns = ("k_groups", "n_per_dim", "rep", "seed", "p", "n", "recovered")
    return ExperimentResult(
        "recovery", columns, rows, cfg.to_dict(), time.perf_counter() - t0
    )


def _crb_empirical_known(cfg: CrbCheckConfig, part: Partition) -> np.ndarray:
    """Empirical covariance of sqrt(n) * flattened block-projected covariance.

    Vectorized over replications in fixed-size batches; one generator feeds
    all batches sequentially so batching never changes the stream.
    """
    sigma = cfg.sigma
    p = sigma.shape[0]
    n = cfg.n
    chol = np.linalg.cholesky(sigma)
    inside = np.zeros((p, p))
    for g in part.groups:
        inside[np.ix_(g, g)] = 1.0
    rng = derive_rng(cfg.seed, "crb-known")
    total = cfg.replications
    dim = p * p
    sum_v = np.zeros(dim)
    sum_outer = np.zeros((dim, dim))
    done = 0
    root_n = np.sqrt(n)
    while done < total:
        batch = min(_CRB_BATCH, total - done)
        z = rng.standard_normal((batch, n, p))
        x = z @ chol.T
        x -= x.mean(axis=1, keepdims=True)
        s = np.einsum("rni,rnj->rij", x, x, optimize=True) / n
        s *= inside
        v = root_n * s.reshape(batch, dim)
        sum_v += v.sum(axis=0)
        sum_outer += v.T @ v
        done += batch
    mean_v = sum_v / total
    return (sum_outer - total * np.outer(mean_v, mean_v)) / (total - 1)


def _crb_empirical_estimated(cfg: CrbCheckConfig) -> np.ndarray:
    """As above but re-estimating the structure on every replication."""
    sigma = cfg.sigma
    p = sigma.shape[0]
    n = cfg.n
    scan_cfg = StructureConfig(method="cgrid", delta=cfg.delta)
    dim = p * p
    sum_v = np.zeros(dim)
    sum_outer = np.zeros((dim, dim))
    root_n = np.sqrt(n)
    total = cfg.replications
    for rep in range(total):
        x = sample_gaussian(0.0, sigma, n, derive_seed(cfg.seed, "crb-estimated", rep))
        moments = empirical_moments(x)
        selected = estimate_structure(moments, scan_cfg)
        v = root_n * project_block(moments.cov_mle, selected).reconstruct().reshape(dim)
        sum_v += v
        sum_outer += np.outer(v, v)
    mean_v = sum_v / total
    return (sum_outer - total * np.outer(mean_v, mean_v)) / (total - 1)


def run_crb_check(cfg: CrbCheckConfig) -> ExperimentResult:
    """Compare the replication covariance of the projected estimator with the
    closed-form efficiency bound, entry by entry.

    Emits one row per pair of flattened positions with the empirical value,
    the bound, their deviation, and whether the pair lies on the block
    pattern (all four indices in one group; the bound is zero off pattern).
    """
    t0 = time.perf_counter()
    part = cfg.partition()
    p = cfg.sigma.shape[0]
    if cfg.known_structure:
        empirical = _crb_empirical_known(cfg, part)
    else:
        empirical = _crb_empirical_estimated(cfg)
    theo = crb_block(cfg.sigma, part).entries
    labels = part.labels
    rows = []
    for a in range(p * p):
        i, j = divmod(a, p)
        for b_pos in range(p * p):
            i2, j2 = divmod(b_pos, p)
            on = bool(
                labels[i] == labels[j] == labels[i2] == labels[j2]
            )
            t = float(theo[a, b_pos])
            e = float(empirical[a, b_pos])
            rows.append(
                {
                    "row": a,
                    "col": b_pos,
                    "empirical": e,
                    "theoretical": t,
                    "abs_dev": e - t,
                    "rel_dev": (e - t) / abs(t) if t != 0.0 else float("nan"),
                    "on_pattern": int(on),
                }
            )
    columns = ("row", "col", "empirical", "theoretical", "abs_dev", "rel_dev", "on_pattern")
    return ExperimentResult("crb", columns, rows, cfg.to_dict(), time.perf_counter() - t0)
