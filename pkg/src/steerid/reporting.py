"""Deterministic JSON/CSV artifact writers and run manifests."""
from __future__ import annotations

import csv
import json
import os
import platform
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy

from . import __version__


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def write_json(obj, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def write_csv(rows: Iterable[Mapping], columns: Sequence[str], path: str | os.PathLike) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([row[c] for c in columns])
    return path


def versions() -> dict:
    return {"steerid": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(out_dir: str | os.PathLike, subcommand: str, config: Mapping, seed: int | None,
                   outputs: Sequence[str | os.PathLike]) -> Path:
    """Record everything needed to rerun a subcommand; contains no wall-clock data."""
    out_dir = Path(out_dir)
    doc = {
        "subcommand": subcommand,
        "seed": seed,
        "config": dict(config),
        "versions": versions(),
        "outputs": sorted(Path(p).name if Path(p).is_absolute() else str(p) for p in outputs),
    }
    return write_json(doc, out_dir / "run_manifest.json")
