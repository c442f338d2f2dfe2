"""Column-oriented time series emitted by every solver."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


class Trajectory:
    """Named equal-length columns plus a free-form ``meta`` dict."""

    def __init__(self, columns: dict, meta: dict | None = None):
        self.columns = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"ragged trajectory columns: {lengths}")
        self.meta = dict(meta or {})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def __len__(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def interp(self, name: str, t):
        return np.interp(t, self.columns["t"], self.columns[name])

    def last(self, name: str) -> float:
        return float(self.columns[name][-1])

    def to_csv(self, path) -> Path:
        return write_csv(path, self.names, zip(*self.columns.values()))

    def __repr__(self) -> str:
        return f"Trajectory({len(self)} rows, columns={self.names})"
