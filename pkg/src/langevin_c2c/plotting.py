"""Figures rendered from the scenario CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .statistics import read_csv  # noqa: E402


def plot_moments(csv_path: Path, png_path: Path) -> Path:
    d = read_csv(csv_path)
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
    for ax, key, label in zip(axes, ("xx", "xu", "uu"), ("<X^2>", "<XU>", "<U^2>")):
        ci = d[f"ci_{key}"]
        ex = d[f"{key}_exact"]
        ax.fill_between(d["t_star"], ex - ci, ex + ci, color="0.85", label="99% CI")
        ax.plot(d["t_star"], ex, "k--", lw=1, label="exact")
        ax.plot(d["t_star"], d[key], ".", ms=3, label="particles")
        ax.set_xlabel("t / T_L")
        ax.set_title(label)
    axes[0].legend(fontsize=8)
    return _save(fig, png_path)


def plot_distance(csv_path: Path, png_path: Path) -> Path:
    d = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(d["t_star"], d["d_star_max"], "-")
    ax.axhline(1.0, color="r", ls=":")
    ax.set_xlabel("t / T_L")
    ax.set_ylabel("max d*")
    return _save(fig, png_path)


def plot_concentration(csv_path: Path, png_path: Path) -> Path:
    d = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for tp in np.unique(d["t_plus"]):
        sel = d["t_plus"] == tp
        ax.plot(d["r_center"][sel], d["c_plus"][sel], "o-", ms=3, label=f"t+ = {tp:.4g}")
    ax.axhline(1.0, color="k", ls="--", lw=1)
    ax.set_xlabel("r")
    ax.set_ylabel("c+")
    ax.legend(fontsize=8)
    return _save(fig, png_path)


def plot_radius(csv_path: Path, png_path: Path) -> Path:
    d = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for p in np.unique(d["particle"]):
        sel = d["particle"] == p
        ax.plot(d["t_plus"][sel], d["r"][sel], "-", label=f"r0 = {d['r0'][sel][0]:.3g}")
    ax.set_xlabel("t+")
    ax.set_ylabel("r")
    ax.legend(fontsize=8)
    return _save(fig, png_path)


def plot_convergence(csv_path: Path, png_path: Path) -> Path:
    d = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.loglog(d["dt_plus"], d["mean_error"], "o-", label="mean |c+ - 1|")
    ax.loglog(d["dt_plus"], d["mc_floor"], "k--", lw=1, label="Monte Carlo floor")
    ax.set_xlabel("dt+")
    ax.legend(fontsize=8)
    return _save(fig, png_path)


_PLOTTERS = {
    "moments.csv": plot_moments,
    "distance.csv": plot_distance,
    "concentration.csv": plot_concentration,
    "radius.csv": plot_radius,
    "convergence.csv": plot_convergence,
}


def render_outputs(out_dir: str | Path) -> list[Path]:
    """Render a PNG next to every known CSV in ``out_dir``."""
    out = Path(out_dir)
    made = []
    for name, fn in _PLOTTERS.items():
        src = out / name
        if src.exists():
            made.append(fn(src, src.with_suffix(".png")))
    return made


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)
