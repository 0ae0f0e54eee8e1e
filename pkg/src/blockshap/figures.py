"""Figure rendering for the report path of the CLI.

Each renderer takes an aggregated experiment table and writes one PNG next to
the delimited outputs. The risk and Shapley-error curves put sqrt(K) on the
x-axis, matching how those quantities scale.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _cells(columns, rows):
    idx = {c: i for i, c in enumerate(columns)}
    return idx, [dict(zip(columns, r)) for r in rows]


def render_fig1(columns, rows, path) -> None:
    """Frobenius error of the raw vs block-projected covariance, by sqrt(K)."""
    _, recs = _cells(columns, rows)
    fig, ax = plt.subplots(figsize=(7, 5))
    for n_per_dim in sorted({r["n_per_dim"] for r in recs}):
        sub = sorted((r for r in recs if r["n_per_dim"] == n_per_dim), key=lambda r: r["k_groups"])
        x = np.sqrt([r["k_groups"] for r in sub])
        ax.errorbar(
            x, [r["frob_norm_s_mean"] for r in sub],
            yerr=[r["frob_norm_s_se"] for r in sub],
            color="red", marker="o", linestyle="-", label=f"raw, N={n_per_dim}",
        )
        ax.errorbar(
            x, [r["frob_norm_sb_mean"] for r in sub],
            yerr=[r["frob_norm_sb_se"] for r in sub],
            color="green", marker="s", linestyle="-", label=f"block-projected, N={n_per_dim}",
        )
    ax.set_xlabel(r"$\sqrt{K}$")
    ax.set_ylabel("Frobenius error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_fig2(columns, rows, path) -> None:
    """Sum of absolute Shapley-effect errors, by sqrt(K)."""
    _, recs = _cells(columns, rows)
    fig, ax = plt.subplots(figsize=(7, 5))
    for n_per_dim in sorted({r["n_per_dim"] for r in recs}):
        sub = sorted((r for r in recs if r["n_per_dim"] == n_per_dim), key=lambda r: r["k_groups"])
        x = np.sqrt([r["k_groups"] for r in sub])
        ax.errorbar(
            x, [r["shapley_err_sum_mean"] for r in sub],
            yerr=[r["shapley_err_sum_se"] for r in sub],
            marker="o", linestyle="-", label=f"N={n_per_dim}",
        )
    ax.set_xlabel(r"$\sqrt{K}$")
    ax.set_ylabel("sum of absolute effect errors")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_recovery(columns, rows, path) -> None:
    """Exact recovery rate by K, one curve per N."""
    _, recs = _cells(columns, rows)
    fig, ax = plt.subplots(figsize=(7, 5))
    for n_per_dim in sorted({r["n_per_dim"] for r in recs}):
        sub = sorted((r for r in recs if r["n_per_dim"] == n_per_dim), key=lambda r: r["k_groups"])
        ax.plot(
            [r["k_groups"] for r in sub],
            [r["recovered_mean"] for r in sub],
            marker="o", label=f"N={n_per_dim}",
        )
    ax.set_xlabel("K")
    ax.set_ylabel("recovery rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_crb(columns, rows, path) -> None:
    """Empirical vs theoretical covariance entries with the identity line."""
    _, recs = _cells(columns, rows)
    theo = np.array([r["theoretical"] for r in recs])
    emp = np.array([r["empirical"] for r in recs])
    on = np.array([bool(r["on_pattern"]) for r in recs])
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.scatter(theo[on], emp[on], s=18, label="on pattern")
    if (~on).any():
        ax.scatter(theo[~on], emp[~on], s=18, marker="x", label="off pattern")
    lim = max(1e-9, float(np.abs(theo).max()), float(np.abs(emp).max())) * 1.1
    ax.plot([-lim, lim], [-lim, lim], color="gray", linewidth=0.8)
    ax.set_xlabel("theoretical bound entry")
    ax.set_ylabel("empirical covariance entry")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_eta(eta, labels, path) -> None:
    """Bar chart of per-input variance shares, colored by group."""
    eta = np.asarray(eta, dtype=float)
    fig, ax = plt.subplots(figsize=(max(6, 0.12 * len(eta)), 4))
    ax.bar(np.arange(1, len(eta) + 1), eta, color=plt.cm.tab20(np.asarray(labels) % 20))
    ax.set_xlabel("input index")
    ax.set_ylabel("variance share")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


RENDERERS = {
    "fig1": render_fig1,
    "fig2": render_fig2,
    "recovery": render_recovery,
    "crb": render_crb,
}
