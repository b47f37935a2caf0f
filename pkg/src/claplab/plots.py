"""Plot rendering for evaluation reports and sweep CSVs.

Outputs are deterministic: fixed backend, no date/software metadata, and a
fixed SVG hash salt, so replayed runs produce byte-identical images.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "claplab"


def _savefig(fig, out_path: str | Path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fmt = out_path.suffix.lstrip(".").lower() or "png"
    if fmt == "svg":
        metadata = {"Date": None, "Creator": None}
    elif fmt == "png":
        metadata = {"Software": None}
    else:
        metadata = None
    fig.savefig(out_path, format=fmt, metadata=metadata, dpi=120)
    plt.close(fig)
    return out_path


def bar_chart(
    entries: list[tuple[str, float, float]],
    out_path: str | Path,
    ylabel: str = "mean total reward",
    title: str = "",
) -> Path:
    """Bars with 95% CI whiskers; one (label, mean, ci95) per bar."""
    if not entries:
        raise ValueError("no bars to draw")
    labels = [e[0] for e in entries]
    means = np.array([e[1] for e in entries], dtype=float)
    cis = np.array([e[2] for e in entries], dtype=float)
    fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(entries), 3.6))
    x = np.arange(len(entries))
    ax.bar(x, means, yerr=cis, capsize=4, color="#4878d0", edgecolor="black",
           linewidth=0.6)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.axhline(0.0, color="black", linewidth=0.6)
    fig.tight_layout()
    return _savefig(fig, out_path)


def read_sweep_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"empty sweep csv: {path}")
    return rows


def scaling_lines(
    sweep_csv: str | Path,
    out_path: str | Path,
    value: str = "norm_mean",
    ylabel: str = "normalized reward",
) -> Path:
    """One line per method: mean over trials vs collection size, with a
    95% CI whisker per point."""
    rows = read_sweep_csv(sweep_csv)
    methods = sorted({r["method"] for r in rows})
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    colors = {"il": "#d65f5f", "ectl": "#4878d0"}
    for method in methods:
        xs = sorted({int(r["n_collect"]) for r in rows if r["method"] == method})
        means, cis = [], []
        for n in xs:
            vals = np.array(
                [
                    float(r[value])
                    for r in rows
                    if r["method"] == method and int(r["n_collect"]) == n
                ]
            )
            means.append(vals.mean())
            cis.append(1.96 * vals.std(ddof=1) / np.sqrt(len(vals))
                       if len(vals) > 1 else 0.0)
        ax.errorbar(xs, means, yerr=cis, marker="o", capsize=3,
                    label=method.upper(), color=colors.get(method))
    ax.set_xscale("log")
    ax.set_xlabel("collection episodes")
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    return _savefig(fig, out_path)


def occupancy_map(
    hist: np.ndarray,
    out_path: str | Path,
    arena_half: float = 5.0,
    title: str = "",
) -> Path:
    """Heatmap of where agents spent time (histogram from
    evaluation.position_occupancy); axes in arena coordinates."""
    hist = np.asarray(hist, dtype=float)
    if hist.ndim != 2:
        raise ValueError("occupancy histogram must be 2-d")
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    im = ax.imshow(
        hist.T, origin="lower", cmap="viridis",
        extent=(-arena_half, arena_half, -arena_half, arena_half),
    )
    fig.colorbar(im, ax=ax, label="visits")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _savefig(fig, out_path)
