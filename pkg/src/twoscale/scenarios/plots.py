"""Static PNG figures for scenario runs (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return str(path)


def plot_states(path: Path, t, x, z, x_r, z_star, title: str, x_label="x", z_label="z"):
    fig, axes = plt.subplots(2, 1, figsize=(7, 5.5), sharex=True)
    for i in range(x.shape[1]):
        axes[0].plot(t, x[:, i], lw=1.3, label=f"{x_label}[{i}]")
        axes[0].plot(t, x_r[:, i], lw=1.0, ls="--", label=f"reduced {x_label}[{i}]")
    for i in range(z.shape[1]):
        axes[1].plot(t, z[:, i], lw=1.3, label=f"{z_label}[{i}]")
        axes[1].plot(t, z_star[:, i], lw=1.0, ls="--", label=f"quasi-steady {z_label}[{i}]")
    axes[0].set_ylabel("slow state")
    axes[1].set_ylabel("fast state")
    axes[1].set_xlabel("t")
    for ax in axes:
        ax.grid(alpha=0.3)
        if x.shape[1] + z.shape[1] <= 8:
            ax.legend(fontsize=7, ncol=2)
    axes[0].set_title(title)
    return _finish(fig, path)


def plot_errors(path: Path, t, x_err, z_err, env_x, env_z, title: str):
    fig, axes = plt.subplots(2, 1, figsize=(7, 5.5), sharex=True)
    for ax, err, env, name in ((axes[0], x_err, env_x, "slow error"), (axes[1], z_err, env_z, "fast error")):
        ax.semilogy(t, np.maximum(err, 1e-300), lw=1.3, label="measured")
        if env is not None:
            ax.semilogy(t, np.maximum(env, 1e-300), lw=1.1, ls="--", label="envelope")
        lo = max(1e-14, float(np.min(err[err > 0])) if np.any(err > 0) else 1e-14)
        vals = [err] if env is None else [err, env]
        hi = max(float(np.max(v[np.isfinite(v)])) if np.any(np.isfinite(v)) else lo for v in vals)
        ax.set_ylim(bottom=lo * 0.5, top=max(hi, lo) * 2.0)
        ax.set_ylabel(name)
        ax.grid(alpha=0.3, which="both")
        ax.legend(fontsize=8)
    axes[1].set_xlabel("t")
    axes[0].set_title(title)
    return _finish(fig, path)


def plot_abscissa(path: Path, eps, abscissa, threshold, title: str, ylabel="spectral abscissa"):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogx(eps, abscissa, "o-", lw=1.2)
    ax.axhline(0.0, color="k", lw=0.8)
    if threshold is not None and np.isfinite(threshold):
        ax.axvline(threshold, color="tab:red", ls="--", lw=1.0, label="threshold")
        ax.legend(fontsize=8)
    ax.set_xlabel("eps")
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3, which="both")
    ax.set_title(title)
    return _finish(fig, path)
