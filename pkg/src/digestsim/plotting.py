"""Figure rendering for the report path; writes PNGs next to the CSVs."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_curves", "render_speedup"]


def _read_csv(path: Path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def render_curves(curves_csv, out_png) -> Path:
    """Mean loss over slots per algorithm, with a one-standard-deviation band."""
    rows = _read_csv(curves_csv)
    by_algo: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        by_algo[r["algo"]][int(r["slot"])].append(float(r["loss"]))
    out = Path(out_png)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for algo in sorted(by_algo):
        slots = np.array(sorted(by_algo[algo]))
        mean = np.array([np.mean(by_algo[algo][s]) for s in slots])
        std = np.array([np.std(by_algo[algo][s]) for s in slots])
        ax.plot(slots, mean, label=algo)
        ax.fill_between(slots, mean - std, mean + std, alpha=0.2)
    ax.set_xlabel("slot")
    ax.set_ylabel("global loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_speedup(rows: list[dict], out_png) -> Path:
    """Speed-up ratio against network size, one line per algorithm."""
    by_algo: dict[str, list[tuple[int, float, float]]] = defaultdict(list)
    for r in rows:
        by_algo[r["algo"]].append((int(r["V"]), float(r["ratio"]),
                                   float(r["stderr"])))
    out = Path(out_png)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for algo in sorted(by_algo):
        pts = sorted(by_algo[algo])
        vs = [p[0] for p in pts]
        ratio = [p[1] for p in pts]
        err = [p[2] for p in pts]
        ax.errorbar(vs, ratio, yerr=err, marker="o", capsize=3, label=algo)
    vs_all = sorted({int(r["V"]) for r in rows})
    ax.plot(vs_all, vs_all, "k--", alpha=0.4, label="linear")
    ax.set_xlabel("nodes")
    ax.set_ylabel("speed-up")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
