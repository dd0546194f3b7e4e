"""Static figures rendered with the Agg backend (no display needed)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


def _save(fig, path) -> Path:
    FigureCanvasAgg(fig)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    return Path(path)


def plot_profiles(path, x, times, fields, ylabel, title=None, max_curves=8):
    fig = Figure(figsize=(6.4, 4.2))
    ax = fig.add_subplot(111)
    idx = np.unique(np.linspace(0, len(times) - 1, min(max_curves, len(times))).astype(int))
    colors = np.linspace(0.15, 0.9, idx.size)
    for shade, k in zip(colors, idx):
        ax.plot(x, fields[k], color=(shade * 0.2, shade * 0.4, 1 - shade * 0.7), label=f"t = {times[k]:.3g}")
    ax.set_xlabel("x")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7, frameon=False)
    return _save(fig, path)


def plot_bounds(path, audit, phi_max, c_b):
    t = [a.t for a in audit]
    fig = Figure(figsize=(6.4, 4.2))
    ax = fig.add_subplot(111)
    ax.plot(t, [a.phi_min for a in audit], label="min phi")
    ax.plot(t, [a.phi_max for a in audit], label="max phi")
    ax.plot(t, [a.c_min for a in audit], "--", label="min c")
    ax.plot(t, [a.c_max for a in audit], "--", label="max c")
    ax.axhline(phi_max, color="0.5", lw=0.8)
    ax.axhline(c_b, color="0.5", lw=0.8, ls=":")
    ax.axhline(0.0, color="0.5", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("field extremes")
    ax.legend(fontsize=7, frameon=False)
    return _save(fig, path)


def plot_stationary(path, x, phi, c):
    fig = Figure(figsize=(6.4, 4.2))
    ax = fig.add_subplot(111)
    ax.plot(x, phi, label="phi")
    ax.plot(x, c, label="c")
    ax.set_xlabel("x")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_history(path, history, ylabel="||phi_k+1 - phi_k||"):
    fig = Figure(figsize=(6.4, 4.2))
    ax = fig.add_subplot(111)
    h = np.asarray(history, dtype=float)
    ax.semilogy(np.arange(1, h.size + 1), np.maximum(h, 1e-300), marker="o", ms=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    return _save(fig, path)


def plot_dependence(path, eps, ratios):
    fig = Figure(figsize=(6.4, 4.2))
    ax = fig.add_subplot(111)
    pts = [(e, r) for e, r in zip(eps, ratios) if r is not None and e > 0]
    if pts:
        e, r = zip(*pts)
        ax.loglog(e, r, marker="o")
    ax.set_xlabel("perturbation amplitude")
    ax.set_ylabel("LHS / RHS")
    return _save(fig, path)


def plot_curves(path, x, curves: dict, xlabel, ylabel=None, logy=False):
    fig = Figure(figsize=(6.4, 4.2))
    ax = fig.add_subplot(111)
    for name, y in curves.items():
        ax.plot(x, y, label=name)
    if logy:
        ax.set_yscale("symlog")
    ax.set_xlabel(xlabel)
    if ylabel:
        ax.set_ylabel(ylabel)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_heatmap(path, x, y, z, xlabel, ylabel, title):
    fig = Figure(figsize=(5.6, 4.4))
    ax = fig.add_subplot(111)
    mesh = ax.pcolormesh(x, y, z, shading="auto", cmap="RdBu_r")
    fig.colorbar(mesh, ax=ax)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _save(fig, path)
