"""Trace container and CSV ingestion for battery discharge records.

CSV schema: header ``t_s,current_a,voltage_v,soc_true`` with an optional
trailing ``temp_c`` column; dot-decimal floats, one sample per row.
``soc_true`` may be omitted only when loading for estimation-only use, in
which case accuracy metrics are unavailable.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

DT_JITTER_RTOL = 1e-9
REQUIRED_COLUMNS = ("t_s", "current_a", "voltage_v", "soc_true")


class DataError(Exception):
    """Base class for dataset ingestion failures."""


class ParseError(DataError):
    """Malformed CSV content; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(DataError):
    """Header does not match the trace schema."""


class JitterError(DataError):
    """Time column is not uniformly spaced."""


@dataclass(frozen=True)
class Dataset:
    """Aligned discharge traces plus provenance metadata.

    ``soc_true`` is None for estimation-only data.  ``true_states`` carries
    the full simulated state when the trace is synthetic.
    """

    t: np.ndarray
    current: np.ndarray
    voltage: np.ndarray
    soc_true: Optional[np.ndarray]
    meta: dict = field(default_factory=dict)
    true_states: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.t.size
        if n < 2:
            raise ValueError("a dataset needs at least two samples")
        for name in ("current", "voltage"):
            if getattr(self, name).size != n:
                raise ValueError(f"{name} length {getattr(self, name).size} != t length {n}")
        steps = np.diff(self.t)
        dt = steps[0]
        if dt <= 0 or np.any(np.abs(steps - dt) > DT_JITTER_RTOL * max(abs(dt), 1.0)):
            raise JitterError("time column is not uniformly spaced")
        if self.soc_true is not None:
            if self.soc_true.size != n:
                raise ValueError("soc_true length mismatch")
            if np.any((self.soc_true < 0.0) | (self.soc_true > 1.0)):
                raise ValueError("soc_true must lie within [0, 1]")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def __len__(self) -> int:
        return self.t.size

    @property
    def has_truth(self) -> bool:
        return self.soc_true is not None


def load_dataset_csv(path, allow_missing_soc: bool = False) -> Dataset:
    """Parse and validate a trace CSV.

    Raises :class:`SchemaError` for missing columns (``soc_true`` tolerated
    only with ``allow_missing_soc``), :class:`ParseError` with a line number
    for bad cells, and :class:`JitterError` for a non-uniform time column.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    required = list(REQUIRED_COLUMNS)
    if allow_missing_soc and "soc_true" not in header:
        required.remove("soc_true")
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    idx = {name: header.index(name) for name in header}

    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in ln.split(",")]
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} cells, got {len(cells)}", lineno)
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    data = np.asarray(rows, dtype=float)
    if data.shape[0] < 2:
        raise SchemaError(f"{path}: need at least two data rows")

    soc = data[:, idx["soc_true"]] if "soc_true" in idx else None
    meta = {"source": os.fspath(path)}
    if "temp_c" in idx:
        meta["temp_c"] = float(data[0, idx["temp_c"]])
    ds = Dataset(
        t=data[:, idx["t_s"]],
        current=data[:, idx["current_a"]],
        voltage=data[:, idx["voltage_v"]],
        soc_true=soc,
        meta=meta,
    )
    meta["dt"] = ds.dt
    return ds


def write_dataset_csv(ds: Dataset, path) -> None:
    """Write a trace CSV (atomically) that round-trips through the loader."""
    cols = ["t_s", "current_a", "voltage_v"]
    arrays = [ds.t, ds.current, ds.voltage]
    if ds.soc_true is not None:
        cols.append("soc_true")
        arrays.append(ds.soc_true)
    if "temp_c" in ds.meta:
        cols.append("temp_c")
        arrays.append(np.full(len(ds), float(ds.meta["temp_c"])))
    atomic_write_text(
        path,
        ",".join(cols)
        + "\n"
        + "\n".join(",".join(format(v, ".17g") for v in row) for row in zip(*arrays))
        + "\n",
    )


def atomic_write_text(path, text: str) -> None:
    """Write text via a temp file + rename so readers never see partials."""
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
