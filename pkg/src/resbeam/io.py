"""CSV and JSON artifact writers.

Floats are written with 9 significant digits, in scientific notation when
``0 < |x| < 1e-3``, so that identical runs produce byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .music import SpectrumGrid
from .resonance import TraceRow


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return str(x)
        if x == 0.0:
            return "0"
        if abs(x) < 1e-3:
            return f"{x:.8e}"
        return f"{x:.9g}"
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(fmt(obj)) if math.isfinite(obj) else str(obj)
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


class CsvTraceSink:
    """Collects per-iteration resonance rows; usable as ``run_resonance(trace=...)``."""

    header = ("iteration", "eta", "eta_pt", "pt_out_power_w", "bs_out_power_w")

    def __init__(self, prefix: Sequence = ()):
        self.prefix = tuple(prefix)
        self.rows: list[tuple] = []

    def __call__(self, row: TraceRow) -> None:
        self.rows.append(self.prefix + (row.iteration, row.eta, row.eta_pt, row.pt_out_power, row.bs_out_power))


def spectrum_rows(grid: SpectrumGrid):
    db = grid.values_db
    for i, t in enumerate(grid.thetas_deg):
        for j, p in enumerate(grid.phis_deg):
            yield (float(t), float(p), float(db[i, j]))


def write_spectrum_csv(path, grid: SpectrumGrid) -> Path:
    return write_csv(path, ("theta_deg", "phi_deg", "spectrum_db"), spectrum_rows(grid))
