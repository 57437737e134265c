"""Matplotlib renderers for the report paths: every delimited output the
CLI writes gets a figure next to it."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _planner_groups(rows, key="planner"):
    order = []
    groups = {}
    for r in rows:
        name = r[key]
        if name not in groups:
            groups[name] = []
            order.append(name)
        groups[name].append(r)
    return [(name, groups[name]) for name in order]


def save_volume_histograms(rows, bin_width: float, path, group_key="planner") -> None:
    """One histogram subplot per planner (or ablation mode)."""
    groups = _planner_groups(rows, group_key) or [("(empty)", [])]
    ncols = 2
    nrows = (len(groups) + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(9, 3 * nrows), squeeze=False)
    for ax, (name, rs) in zip(axes.ravel(), groups):
        vols = [r["volume_cm3"] for r in rs]
        top = max(vols) if vols else bin_width
        bins = np.arange(0.0, top + bin_width, bin_width)
        ax.hist(vols, bins=bins, color="tab:blue", edgecolor="black", linewidth=0.3)
        ax.axvline(134.0, color="red", linewidth=1.0)
        ax.set_title(name)
        ax.set_xlabel("excavated volume (cm$^3$)")
        ax.set_ylabel("excavations")
    for ax in axes.ravel()[len(groups):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_poa_scatter(rows, tray_rect, path, group_key="planner") -> None:
    """Attack-point scatter per planner; the red box is the tray footprint.

    `tray_rect` is (min_x, min_y, width, height) in tray-frame meters.
    """
    groups = _planner_groups(rows, group_key) or [("(empty)", [])]
    ncols = 2
    nrows = (len(groups) + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(8, 4 * nrows), squeeze=False)
    x0, y0, w, h = tray_rect
    for ax, (name, rs) in zip(axes.ravel(), groups):
        xs = [r["x"] for r in rs]
        ys = [r["y"] for r in rs]
        ax.plot(xs, ys, "x", markersize=4, color="tab:blue")
        ax.add_patch(plt.Rectangle((x0, y0), w, h, fill=False, edgecolor="red"))
        ax.set_xlim(x0 - 0.05, x0 + w + 0.05)
        ax.set_ylim(y0 - 0.05, y0 + h + 0.05)
        ax.set_aspect("equal")
        ax.set_title(name)
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
    for ax in axes.ravel()[len(groups):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_training_curve(curve_rows, path) -> None:
    fig, ax1 = plt.subplots(figsize=(7, 4))
    epochs = [r["epoch"] for r in curve_rows]
    ax1.plot(epochs, [r["loss"] for r in curve_rows], color="tab:blue", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    if curve_rows and "val_f1" in curve_rows[0]:
        ax2 = ax1.twinx()
        for key, color in (("val_accuracy", "tab:green"), ("val_f1", "tab:red")):
            ax2.plot(epochs, [r[key] for r in curve_rows], color=color, label=key)
        ax2.set_ylabel("validation metric")
        ax2.set_ylim(0, 1)
        ax2.legend(loc="center right", fontsize=8)
    elif curve_rows and "val_l1_mean" in curve_rows[0]:
        ax2 = ax1.twinx()
        ax2.plot(epochs, [r["val_l1_mean"] for r in curve_rows], color="tab:red",
                 label="val L1 (cm$^3$)")
        ax2.set_ylabel("validation L1 (cm$^3$)")
        ax2.legend(loc="center right", fontsize=8)
    ax1.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_bench_summary(summary_rows, path, group_key="planner") -> None:
    """Mean excavated volume per planner with std error bars."""
    fig, ax = plt.subplots(figsize=(7, 4))
    names = [r[group_key] for r in summary_rows]
    means = [r["volume_mean"] for r in summary_rows]
    stds = [r["volume_std"] for r in summary_rows]
    ax.bar(range(len(names)), means, yerr=stds, capsize=4, color="tab:blue")
    ax.axhline(134.0, color="red", linewidth=1.0)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylabel("mean excavated volume (cm$^3$)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
