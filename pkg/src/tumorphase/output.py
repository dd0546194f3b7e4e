"""Writers for CSV tables, JSON reports and gnuplot scripts."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__


def _fmt(v) -> str:
    return "%.17g" % (v + 0.0)  # normalises -0


def write_csv(path, header, columns) -> Path:
    """Write equal-length columns with a header row. Numbers use 17 significant digits."""
    path = Path(path)
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    n = {c.size for c in cols}
    if len(n) != 1:
        raise ValueError("columns must have equal length")
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def write_snapshots(path, grid, times, phis, cs) -> Path:
    x = grid.nodes
    t_col = np.concatenate([np.full(x.size, t) for t in times])
    x_col = np.tile(x, len(times))
    return write_csv(path, ("t", "x", "phi", "c"), (t_col, x_col, np.concatenate(phis), np.concatenate(cs)))


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")
    return path


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_metadata(data_path, config_data: dict, extra: dict = None) -> Path:
    """Companion ``<file>.meta.json`` holding the resolved configuration."""
    data_path = Path(data_path)
    meta = {"file": data_path.name, "version": __version__, "config": config_data}
    if extra:
        meta.update(extra)
    return write_json(data_path.with_name(data_path.name + ".meta.json"), meta)


def write_gnuplot(path, csv_name: str, columns, xcol: int = 1, title: str = "", png: str = None) -> Path:
    """Script plotting the given 1-based CSV columns against ``xcol``."""
    path = Path(path)
    lines = ["set datafile separator ','", "set key autotitle columnhead", f"set title '{title}'"]
    if png:
        lines += ["set terminal pngcairo size 900,600", f"set output '{png}'"]
    plots = ", ".join(f"'{csv_name}' using {xcol}:{c} with lines" for c in columns)
    lines.append(f"plot {plots}")
    path.write_text("\n".join(lines) + "\n")
    return path
