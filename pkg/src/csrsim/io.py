"""Deterministic, atomic CSV/JSON serialization.

All writers go through a temp-then-rename step so partially written files
never appear under the final name, and all number formatting uses ``repr``
(shortest round-trip form), so identical data always produces identical
bytes — reruns of any pipeline are byte-for-byte reproducible.
"""

from __future__ import annotations

import configparser
import csv
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np


def _scalar(value):
    """Native Python scalar with round-trip text form."""
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write text to ``path`` via a temp file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
    return path


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    """RFC-4180-style CSV with a mandatory header row and '.' decimals."""
    buffer = _io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_scalar(cell) for cell in row])
    return atomic_write_text(path, buffer.getvalue())


def write_json(path: str | Path, payload: dict) -> Path:
    """Versioned JSON summary (stable key order, trailing newline)."""
    payload = jsonable({"schema": 1, **payload})
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)
    return atomic_write_text(path, text + "\n")


def jsonable(obj):
    """Recursively convert numpy containers/scalars for ``write_json``.

    Non-finite samples (e.g. a fluctuation ratio before the pulse starts)
    become ``null``; the emitted JSON stays strictly standard.
    """
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def read_config(path: str | Path) -> dict[str, str]:
    """Flat key=value defaults from an INI file.

    Keys may live in the ``[csr]`` section or at the top under ``[DEFAULT]``;
    they mirror the CLI flag names (e.g. ``n``, ``alpha``, ``t-cap``).
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    merged: dict[str, str] = dict(parser.defaults())
    if parser.has_section("csr"):
        merged.update(parser.items("csr"))
    return merged


def write_trajectory_csv(path: str | Path, traj) -> Path:
    """Per-time-point dump: t, conservation drift, then state columns.

    Two-level trajectories dump every P_n; cascade trajectories dump the
    three stored marginals (the dense joint state does not fit a flat CSV
    at desk scale — full tables belong to snapshot files).
    """
    if getattr(traj, "marginals", None) is None:  # single-ladder trajectory
        n = traj.params.n_atoms
        header = ["t", "conservation"] + [f"p{k}" for k in range(n + 1)]
        rows = (
            [t, c, *state]
            for t, c, state in zip(traj.times, traj.conservation_log,
                                   traj.states)
        )
        return write_csv(path, header, rows)
    n = traj.params.n_atoms
    header = ["t", "conservation"]
    for kind in ("upper", "intermediate", "lower"):
        header += [f"{kind}{k}" for k in range(n + 1)]
    rows = (
        [traj.times[i], traj.conservation_log[i],
         *traj.marginals["upper"][i], *traj.marginals["intermediate"][i],
         *traj.marginals["lower"][i]]
        for i in range(len(traj.times))
    )
    return write_csv(path, header, rows)


def write_event_log(path: str | Path, ensemble) -> Path:
    """Oracle event dump: one row per event, `trial,event_index,time,mode`."""
    def rows():
        for trial in range(ensemble.n_trials):
            for k in range(ensemble.event_times.shape[1]):
                yield [trial, k, ensemble.event_times[trial, k],
                       ensemble.modes[ensemble.event_tags[trial, k]]]
    return write_csv(path, ["trial", "event_index", "time", "mode"], rows())
