"""File-only figure rendering for run artifacts."""

import numpy as np
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)


def _pad(basis, coeffs):
    full = np.zeros(basis.n_interior)
    full[: len(coeffs)] = coeffs
    return full


def render_eigenfunctions(path, basis, results):
    """Overlay the computed eigenfunctions on a fine grid, zero extension
    visible beyond the domain ends."""
    alpha, beta = basis.omega
    width = beta - alpha
    x = np.linspace(alpha - 0.15 * width, beta + 0.15 * width, 1201)
    fig, ax = plt.subplots(figsize=(7.2, 4.2))
    for res in results:
        y = basis.evaluate(_pad(basis, res.coeffs), x)
        style = "-" if res.converged else ":"
        ax.plot(x, y, style,
                label=f"i={res.index_i}  lambda={res.lambda_:.5g}")
    ax.axvline(alpha, color="0.7", lw=0.8)
    ax.axvline(beta, color="0.7", lw=0.8)
    ax.axhline(0.0, color="0.85", lw=0.8)
    ax.set_xlabel("x")
    ax.set_ylabel("u(x)")
    ax.set_title(f"eigenfunctions, k={results[0].basis_k}" if results else
                 "eigenfunctions")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_spectrum(path, oracle_lambdas, solver_results=None):
    """Oracle spectrum by index, with iterative results overlaid when
    available."""
    idx = np.arange(1, len(oracle_lambdas) + 1)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(idx, oracle_lambdas, "o-", ms=4, label="dense oracle")
    if solver_results:
        si = [r.index_i for r in solver_results]
        sl = [r.lambda_ for r in solver_results]
        ax.plot(si, sl, "x", ms=9, mew=2, label="iterative")
    ax.set_xlabel("index i")
    ax.set_ylabel("lambda_i")
    ax.set_title("generalized spectrum")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_convergence(path, report):
    """Ground level and eigenvalue of the first pair across nested
    subspace dimensions."""
    ks = np.asarray(report.k_list, dtype=float)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.8))
    ax1.plot(ks, report.g_table[0], "o-", ms=4)
    ax1.set_xlabel("subspace dimension k")
    ax1.set_ylabel("g(u_1)")
    ax1.set_title("level surrogate")
    ax2.plot(ks, report.lambda_table[0], "o-", ms=4, label="iterative")
    if report.oracle_lambda1 is not None:
        ax2.plot(ks, [report.oracle_lambda1[k] for k in report.k_list],
                 "s--", ms=4, label="oracle")
        ax2.legend(loc="best", fontsize=8)
    ax2.set_xlabel("subspace dimension k")
    ax2.set_ylabel("lambda_1")
    ax2.set_title("first eigenvalue")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_validation(path, report):
    """Signed worst margins per check; negative bars are failures."""
    names = list(report.checks.keys())
    margins = [report.checks[n].worst_margin for n in names]
    colors = ["#2b7a3f" if report.checks[n].passed else "#a8332f"
              for n in names]
    fig, ax = plt.subplots(figsize=(6.8, 3.8))
    ax.barh(names, margins, color=colors)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlabel("worst margin (negative = violated)")
    ax.set_title(f"structure checks: {report.kernel}")
    ax.set_xscale("symlog", linthresh=1e-12)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
