"""Figure rendering for the report path.

Every plot lands next to the delimited output it visualizes. Rendering is
optional at the CLI (--figures) and kept deterministic: fixed dpi, no
timestamps in metadata.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_RC = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

_SAVE_KW = {"bbox_inches": "tight", "metadata": {"Software": None}}


def save_loss_curve(losses: list[float], path: str | Path, title: str = "training loss") -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.plot(np.arange(1, len(losses) + 1), losses, lw=0.8)
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.set_title(title)
        fig.savefig(path, **_SAVE_KW)
        plt.close(fig)


def save_samples_figure(
    samples: np.ndarray, path: str | Path, title: str = "samples"
) -> None:
    samples = np.asarray(samples, dtype=float)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        if samples.shape[1] == 1:
            ax.hist(samples[:, 0], bins=60, color="tab:blue", alpha=0.8)
            ax.set_xlabel("x")
        else:
            ax.scatter(samples[:, 0], samples[:, 1], s=4, alpha=0.4, color="tab:blue")
            ax.set_xlabel("dim 0")
            ax.set_ylabel("dim 1")
            ax.set_aspect("equal", adjustable="datalim")
        ax.set_title(title)
        fig.savefig(path, **_SAVE_KW)
        plt.close(fig)


def save_eval_figure(guided: np.ndarray, unguided: np.ndarray, path: str | Path) -> None:
    guided = np.asarray(guided, dtype=float)
    unguided = np.asarray(unguided, dtype=float)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.0), sharex=True, sharey=True)
        for ax, pts, name in ((axes[0], unguided, "unguided"), (axes[1], guided, "guided")):
            if pts.shape[1] == 1:
                ax.hist(pts[:, 0], bins=60, color="tab:blue", alpha=0.8)
            else:
                ax.scatter(pts[:, 0], pts[:, 1], s=4, alpha=0.4, color="tab:blue")
            ax.set_title(name)
            ax.grid(alpha=0.3)
        fig.savefig(path, **_SAVE_KW)
        plt.close(fig)


def save_verify_figure(report: dict, path: str | Path) -> None:
    """One panel per suite that has something worth plotting."""
    panels = []
    t1 = report.get("theorem1")
    if t1 and t1.get("per_chain_max_errors"):
        panels.append(("per-chain max error", t1["per_chain_max_errors"], "chain", True))
    t3 = report.get("theorem3")
    if t3:
        panels.append(("TV vs variance", (t3["sigma2s"], t3["tvs"]), "sigma^2", False))
    if not panels:
        return
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(panels), figsize=(5.0 * len(panels), 4.0))
        axes = np.atleast_1d(axes)
        for ax, (title, data, xlabel, is_series) in zip(axes, panels):
            if is_series:
                ax.semilogy(data, lw=0.8)
            else:
                xs, ys = data
                ax.plot(xs, ys, marker="o")
                ax.set_xscale("log")
            ax.set_title(title)
            ax.set_xlabel(xlabel)
        fig.savefig(path, **_SAVE_KW)
        plt.close(fig)
