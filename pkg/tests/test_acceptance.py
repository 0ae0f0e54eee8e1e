"""Acceptance suite: one test per criterion, printed as a pass/fail line.

Every tolerance is fixed here, not calibrated. Monte Carlo tests derive all
randomness from literal seeds chosen up front. Criterion 6 is asserted exactly
as specified; the printed line reports the measured quantities either way.
"""

import time

import numpy as np
import pytest

from blockshap.covariance import (
    BlockCovariance,
    StructureConfig,
    empirical_moments,
    kappa_default,
    neg_loglik,
    penalized_nll,
    project_block,
)
from blockshap.dataio import write_table_csv
from blockshap.experiments import (
    CrbCheckConfig,
    ExperimentConfig,
    run_crb_check,
    run_fig1,
    run_fig2,
    run_recovery,
)
from blockshap.partition import (
    Partition,
    components_of_threshold,
    enumerate_partitions,
    meet,
    refines,
)
from blockshap.regression import ols_fit
from blockshap.shapley import GaussianLinearModel, shapley_block, shapley_full
from blockshap.synthdata import derive_rng, generate_sigma, GeneratorSpec, sample_gaussian

MASTER_SEED = 20260808


def announce(criterion, ok, detail):
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'} - {detail}")


def random_small_block_model(rng):
    """Block-diagonal model with p <= 12 and every block of size <= 4."""
    p_target = int(rng.integers(2, 13))
    sizes = []
    while sum(sizes) < p_target:
        sizes.append(int(rng.integers(1, min(4, p_target - sum(sizes)) + 1)))
    p = sum(sizes)
    groups, blocks, start = [], [], 0
    for s in sizes:
        a = rng.standard_normal((s, s))
        blocks.append(a @ a.T + 0.3 * np.eye(s))
        groups.append(list(range(start, start + s)))
        start += s
    beta = rng.uniform(0.5, 2.0, p) * rng.choice([-1.0, 1.0], p)
    cov = BlockCovariance(Partition.from_groups(p, groups), tuple(blocks))
    return GaussianLinearModel(0.0, beta, cov)


def test_criterion_1_oracle_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    worst_sum = 0.0
    for inst in range(200):
        rng = derive_rng(MASTER_SEED, "accept-oracle", inst)
        model = random_small_block_model(rng)
        eta_block = shapley_block(model).eta
        dense = GaussianLinearModel(model.beta0, model.beta, model.cov.reconstruct())
        eta_full = shapley_full(dense).eta
        worst = max(worst, float(np.abs(eta_block - eta_full).max()))
        worst_sum = max(
            worst_sum, abs(eta_block.sum() - 1.0), abs(eta_full.sum() - 1.0)
        )
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and worst_sum <= 1e-10 and elapsed < 60
    announce(
        1,
        ok,
        f"200 block-vs-full instances: max diff {worst:.2e} (<=1e-10), "
        f"max |sum-1| {worst_sum:.2e} (<=1e-10), {elapsed:.1f}s (<60s)",
    )
    assert worst <= 1e-10
    assert worst_sum <= 1e-10
    assert elapsed < 60


def test_criterion_2_structure_recovery():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        seed=MASTER_SEED,
        k_groups=(10,),
        samples_per_dim=(10,),
        replications=100,
        method="sgrid",
        delta=0.75,
        max_block=15,
    )
    res = run_recovery(cfg)
    rate = float(np.mean([r["recovered"] for r in res.rows]))
    elapsed = time.perf_counter() - t0
    ok = rate >= 0.95 and elapsed < 300
    announce(2, ok, f"recovery rate {rate:.3f} (>=0.95) over 100 reps, {elapsed:.1f}s (<300s)")
    assert rate >= 0.95
    assert elapsed < 300


def test_criterion_3_frobenius_risk_curves():
    t0 = time.perf_counter()
    stated_ks = (4, 16, 36, 64, 100)
    cfg = ExperimentConfig(
        seed=MASTER_SEED,
        k_groups=(4, 16, 25, 36, 64, 100),  # 25 added for the boundedness ratio
        samples_per_dim=(10,),
        replications=20,
        method="sgrid",
        delta=0.75,
        max_block=15,
    )
    res = run_fig1(cfg)
    cols, agg_rows = res.aggregated()
    cells = {dict(zip(cols, r))["k_groups"]: dict(zip(cols, r)) for r in agg_rows}

    # (a) the raw-covariance error follows a line in sqrt(K)
    xs = np.sqrt(np.array(stated_ks, dtype=float))
    ys = np.array([cells[k]["frob_norm_s_mean"] for k in stated_ks])
    slope, intercept = np.polyfit(xs, ys, 1)
    fitted = slope * xs + intercept
    r_squared = 1.0 - np.sum((ys - fitted) ** 2) / np.sum((ys - ys.mean()) ** 2)

    # (b) the projected estimator's error stays bounded
    bounded_ratio = cells[100]["frob_norm_sb_mean"] / cells[25]["frob_norm_sb_mean"]

    # (c) projection beats the raw covariance by a wide margin at K = 100
    rep_ratios = [
        row["frob_norm_s"] / row["frob_norm_sb"]
        for row in res.rows
        if row["k_groups"] == 100
    ]
    mean_ratio = float(np.mean(rep_ratios))

    elapsed = time.perf_counter() - t0
    ok = r_squared >= 0.9 and bounded_ratio <= 1.5 and mean_ratio >= 5 and elapsed < 900
    announce(
        3,
        ok,
        f"sqrt(K) line R^2 {r_squared:.4f} (>=0.9), bounded ratio K100/K25 "
        f"{bounded_ratio:.3f} (<=1.5), mean error ratio at K=100 {mean_ratio:.2f} (>=5), "
        f"{elapsed:.0f}s (<900s)",
    )
    assert r_squared >= 0.9
    assert bounded_ratio <= 1.5
    assert mean_ratio >= 5
    assert elapsed < 900


def test_criterion_4_shapley_error_curve():
    t0 = time.perf_counter()
    ks = (4, 16, 64)
    cfg = ExperimentConfig(
        seed=MASTER_SEED,
        k_groups=ks,
        samples_per_dim=(10,),
        replications=20,
        method="sgrid",
        delta=0.75,
        max_block=15,
        noise_sd=0.0,
    )
    res = run_fig2(cfg)
    assert res.config["noise_sd"] == 0.0  # recorded alongside the outputs
    cols, agg_rows = res.aggregated()
    cells = {dict(zip(cols, r))["k_groups"]: dict(zip(cols, r)) for r in agg_rows}
    means = np.array([cells[k]["shapley_err_sum_mean"] for k in ks])
    decreasing = bool(means[0] > means[1] > means[2])
    slope = float(np.polyfit(np.log(np.array(ks, float)), np.log(means), 1)[0])
    elapsed = time.perf_counter() - t0
    ok = decreasing and -0.75 <= slope <= -0.25 and elapsed < 900
    announce(
        4,
        ok,
        f"mean error by K {np.round(means, 4).tolist()} strictly decreasing: "
        f"{decreasing}, log-log slope {slope:.3f} (in [-0.75,-0.25]), {elapsed:.0f}s (<900s)",
    )
    assert decreasing
    assert -0.75 <= slope <= -0.25
    assert elapsed < 900


def test_criterion_5_efficiency_bound():
    t0 = time.perf_counter()
    cfg = CrbCheckConfig(seed=MASTER_SEED, n=5000, replications=10_000, known_structure=True)
    res = run_crb_check(cfg)
    strong = [r for r in res.rows if r["on_pattern"] and abs(r["theoretical"]) >= 0.1]
    max_rel = max(abs(r["rel_dev"]) for r in strong)
    off = [r for r in res.rows if not r["on_pattern"]]
    max_off = max(abs(r["empirical"]) for r in off)
    elapsed = time.perf_counter() - t0
    ok = max_rel <= 0.10 and max_off <= 0.02 and elapsed < 300
    announce(
        5,
        ok,
        f"{len(strong)} strong entries max rel dev {max_rel:.4f} (<=0.10), "
        f"max off-pattern magnitude {max_off:.4f} (<=0.02), {elapsed:.0f}s (<300s)",
    )
    assert max_rel <= 0.10
    assert max_off <= 0.02
    assert elapsed < 300


def test_criterion_6_logdet_clt_window():
    # Stated window: Var(sqrt(n) (log|S| - log|Sigma|)) in [1.8, 2.2] at
    # Sigma = I_3 with the full (one-block) projection. The delta method gives
    # this statistic the variance 2 tr((Sigma_B^{-1} Sigma)^2) = 2p, which is 6
    # here, so the raw variance cannot fall in the stated window; the window
    # holds for the per-coordinate variance (raw / p). Both numbers are
    # printed; the assertion is the stated one.
    p, n, reps = 3, 5000, 10_000
    rng = derive_rng(MASTER_SEED, "accept-logdet")
    vals = np.empty(reps)
    done = 0
    while done < reps:
        batch = min(250, reps - done)
        x = rng.standard_normal((batch, n, p))
        x -= x.mean(axis=1, keepdims=True)
        s = np.einsum("rni,rnj->rij", x, x, optimize=True) / n
        vals[done : done + batch] = np.sqrt(n) * np.linalg.slogdet(s)[1]
        done += batch
    raw = float(vals.var(ddof=1))
    ok = 1.8 <= raw <= 2.2
    announce(
        6,
        ok,
        f"Var(sqrt(n) dlogdet) = {raw:.3f} vs stated window [1.8, 2.2]; "
        f"2 tr((Sigma_B^-1 Sigma)^2) = 2p = {2 * p}; raw/p = {raw / p:.3f}",
    )
    assert 1.8 <= raw <= 2.2


def test_criterion_7_property_suites():
    t0 = time.perf_counter()
    rng = np.random.default_rng(MASTER_SEED)

    def rand_partition(p):
        return Partition.from_labels(rng.integers(0, rng.integers(1, p + 1), size=p))

    def rand_pd(p):
        a = rng.standard_normal((p, p))
        return a @ a.T + 0.5 * np.eye(p)

    # partition lattice laws
    for _ in range(50):
        p = int(rng.integers(1, 9))
        a, b = rand_partition(p), rand_partition(p)
        assert refines(a, a)
        m = meet(a, b)
        assert refines(m, a) and refines(m, b)
        if refines(a, b) and refines(b, a):
            assert a == b
    for a in enumerate_partitions(4):
        for b in enumerate_partitions(4):
            m = meet(a, b)
            for c in enumerate_partitions(4):
                if refines(c, a) and refines(c, b):
                    assert refines(c, m)

    # threshold monotonicity
    for _ in range(20):
        p = int(rng.integers(2, 10))
        raw = rng.uniform(-1, 1, size=(p, p))
        c = (raw + raw.T) / 2
        np.fill_diagonal(c, 1.0)
        lo, hi = sorted(rng.uniform(0, 1, size=2))
        assert refines(components_of_threshold(c, hi), components_of_threshold(c, lo))

    # projection idempotence + log-det refinement monotonicity + trace identity
    for _ in range(20):
        p = int(rng.integers(2, 9))
        s = rand_pd(p)
        b = rand_partition(p)
        once = project_block(s, b).reconstruct()
        assert np.array_equal(project_block(once, b).reconstruct(), once)
        labels = rng.integers(0, max(1, b.n_groups - 1), size=b.n_groups)
        coarse = Partition.from_labels([labels[lab] for lab in b.labels])
        assert refines(b, coarse)
        assert project_block(s, b).logdet >= project_block(s, coarse).logdet - 1e-9
        blocks = project_block(s, b)
        trace = sum(
            float(np.trace(np.linalg.solve(blk, s[np.ix_(g, g)])))
            for g, blk in zip(b.groups, blocks.blocks)
        )
        assert abs(trace - p) <= 1e-10 * p
        assert abs(neg_loglik(blocks, s) - (blocks.logdet / p + 1.0)) <= 1e-10

    # local-minimum property of the projected covariance
    for _ in range(20):
        p = int(rng.integers(2, 8))
        s = rand_pd(p)
        b = rand_partition(p)
        ref = project_block(s, b)
        noise_blocks = []
        for g, blk in zip(b.groups, ref.blocks):
            w = rng.standard_normal(blk.shape) * 0.15
            noise_blocks.append(blk + w @ w.T + np.diag(rng.uniform(0.01, 0.1, len(g))))
        assert neg_loglik(BlockCovariance(b, tuple(noise_blocks)), s) > neg_loglik(ref, s)

    # Shapley permutation and scale invariances
    for _ in range(8):
        p = int(rng.integers(2, 9))
        sigma = rand_pd(p)
        beta = rng.uniform(0.5, 2.0, p)
        eta = shapley_full(GaussianLinearModel(0.0, beta, sigma)).eta
        pi = rng.permutation(p)
        eta_pi = shapley_full(GaussianLinearModel(0.0, beta[pi], sigma[np.ix_(pi, pi)])).eta
        np.testing.assert_allclose(eta_pi, eta[pi], atol=1e-10)
        eta_scaled = shapley_full(GaussianLinearModel(0.0, -2.5 * beta, 3.0 * sigma)).eta
        np.testing.assert_allclose(eta_scaled, eta, atol=1e-10)

    # least-squares equivariances
    x = rng.standard_normal((60, 4))
    y = x @ rng.uniform(-1, 1, 4) + rng.standard_normal(60)
    base = ols_fit(x, y)
    shifted = ols_fit(x, y + 3.25)
    assert abs(shifted.beta0_hat - (base.beta0_hat + 3.25)) <= 1e-10
    np.testing.assert_allclose(shifted.beta_hat, base.beta_hat, atol=1e-10)
    x2 = x.copy()
    x2[:, 2] *= 5.0
    np.testing.assert_allclose(ols_fit(x2, y).beta_hat[2], base.beta_hat[2] / 5.0, rtol=1e-8)

    # generator and experiment determinism, byte-identical reruns
    spec = GeneratorSpec(seed=MASTER_SEED, group_count=2)
    s1, b1 = generate_sigma(spec)
    s2, b2 = generate_sigma(spec)
    assert np.array_equal(s1, s2) and b1 == b2
    assert np.array_equal(
        sample_gaussian(0.0, s1, 50, seed=1), sample_gaussian(0.0, s1, 50, seed=1)
    )
    import io

    cfg = ExperimentConfig(seed=MASTER_SEED, k_groups=(2,), samples_per_dim=(5,), replications=2)
    blobs = []
    for _ in range(2):
        res = run_fig2(cfg)
        buf = io.StringIO()
        import csv as _csv

        writer = _csv.writer(buf, lineterminator="\n")
        writer.writerow(res.columns)
        writer.writerows(res.table())
        blobs.append(buf.getvalue())
    assert blobs[0] == blobs[1]

    elapsed = time.perf_counter() - t0
    ok = elapsed < 300
    announce(7, ok, f"lattice/threshold/projection/score/effects/ols/determinism properties all hold, {elapsed:.0f}s (<300s)")
    assert elapsed < 300
