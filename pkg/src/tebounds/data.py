"""Observational samples, CSV ingestion and evaluation grids."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Raised when a sample cannot be used for estimation."""


@dataclass(frozen=True)
class ObservationTable:
    """Sample ``{(Y_i, D_i, X_i)}``: outcome, binary treatment, covariates.

    ``x`` is always stored as an ``(n, d_x)`` matrix.
    """

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        d_raw = np.asarray(self.d, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        n = y.shape[0]
        if d_raw.shape[0] != n or x.shape[0] != n:
            raise DataError(
                f"length mismatch: y={n}, d={d_raw.shape[0]}, x={x.shape[0]}"
            )
        if n < 2:
            raise DataError("insufficient sample: need at least 2 rows")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise DataError("non-finite values in y or x")
        if not np.all((d_raw == 0) | (d_raw == 1)):
            raise DataError("non-binary treatment value")
        d = d_raw.astype(np.int64)
        if d.min() == d.max():
            raise DataError("treatment must take both values 0 and 1")
        for name, arr in (("y", y), ("d", d), ("x", x)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class EvalGrids:
    """Outcome grid, treatment-effect grid and the conditioning point."""

    y_grid: np.ndarray
    delta_grid: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        y_grid = np.asarray(self.y_grid, dtype=float).ravel()
        delta_grid = np.asarray(self.delta_grid, dtype=float).ravel()
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float)).ravel()
        for name, g in (("y_grid", y_grid), ("delta_grid", delta_grid)):
            if g.size < 2 or not np.all(np.diff(g) > 0):
                raise DataError(f"{name} must be strictly increasing with >= 2 points")
        for name, arr in (("y_grid", y_grid), ("delta_grid", delta_grid), ("x0", x0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def with_x0(self, x0) -> "EvalGrids":
        return EvalGrids(self.y_grid, self.delta_grid, x0)


def _parse_float(cell: str) -> float | None:
    cell = cell.strip()
    if cell == "" or cell.lower() in {"na", "nan", "null", "none"}:
        return None
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell: {cell!r}") from None


def load_csv(path, column_map: Mapping[str, object]) -> ObservationTable:
    """Read a header-bearing CSV into an :class:`ObservationTable`.

    Parameters
    ----------
    path : path-like
        CSV file with a header row.
    column_map : mapping
        ``{"y": name, "d": name, "x": name or list of names}``.

    Rows with any missing field are dropped with a warning.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    y_col = column_map.get("y", "y")
    d_col = column_map.get("d", "d")
    x_cols = column_map.get("x", "x")
    if isinstance(x_cols, str):
        x_cols = [x_cols]
    x_cols = list(x_cols)

    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError("insufficient sample: empty file")
        header = [h.strip() for h in header]
        for col in [y_col, d_col, *x_cols]:
            if col not in header:
                raise DataError(f"missing column: {col!r}")
        iy, idx_d = header.index(y_col), header.index(d_col)
        ix = [header.index(c) for c in x_cols]

        rows, dropped = [], 0
        for raw in reader:
            if not raw or all(c.strip() == "" for c in raw):
                continue
            raw = raw + [""] * (len(header) - len(raw))
            vals = [_parse_float(raw[i]) for i in [iy, idx_d, *ix]]
            if any(v is None for v in vals):
                dropped += 1
                continue
            if vals[1] not in (0.0, 1.0):
                raise DataError(f"non-binary treatment value: {raw[idx_d]!r}")
            rows.append(vals)

    if dropped:
        logger.warning("dropped %d row(s) with missing fields from %s", dropped, path)
    if len(rows) < 2:
        raise DataError(f"insufficient sample: {len(rows)} usable row(s)")
    arr = np.asarray(rows, dtype=float)
    return ObservationTable(y=arr[:, 0], d=arr[:, 1], x=arr[:, 2:])


def save_csv(table: ObservationTable, path, column_map: Mapping[str, object] | None = None):
    """Write ``table`` as CSV; inverse of :func:`load_csv` for valid rows."""
    column_map = column_map or {}
    x_cols = column_map.get("x")
    if x_cols is None:
        x_cols = ["x"] if table.dim == 1 else [f"x{j + 1}" for j in range(table.dim)]
    elif isinstance(x_cols, str):
        x_cols = [x_cols]
    header = [column_map.get("y", "y"), column_map.get("d", "d"), *x_cols]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for yi, di, xi in zip(table.y, table.d, table.x):
            w.writerow([repr(float(yi)), int(di), *(repr(float(v)) for v in xi)])


def make_grids(
    table: ObservationTable,
    x0,
    m_y: int = 401,
    m_delta: int = 201,
    pad: float = 0.1,
    delta_range: Sequence[float] | None = None,
) -> EvalGrids:
    """Equally spaced outcome and treatment-effect grids.

    The outcome grid covers ``[min(y) - pad*r, max(y) + pad*r]`` with
    ``r = range(y)``; the treatment-effect grid covers
    ``±(1 + 2*pad)*r`` unless ``delta_range`` is given.
    """
    if m_y < 3 or m_delta < 3:
        raise DataError("grid sizes must be at least 3")
    if pad < 0:
        raise DataError("pad must be nonnegative")
    lo, hi = float(np.min(table.y)), float(np.max(table.y))
    r = hi - lo
    if r <= 0:
        raise DataError("degenerate outcome: range(y) = 0")
    y_grid = np.linspace(lo - pad * r, hi + pad * r, m_y)
    if delta_range is None:
        half = (1.0 + 2.0 * pad) * r
        delta_grid = np.linspace(-half, half, m_delta)
    else:
        delta_grid = np.linspace(float(delta_range[0]), float(delta_range[1]), m_delta)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != table.dim:
        raise DataError(f"x0 has {x0.size} entries, covariates have {table.dim}")
    return EvalGrids(y_grid, delta_grid, x0)


def resolve_x0(table: ObservationTable, spec) -> np.ndarray:
    """Resolve a conditioning point, allowing ``"q:tau"`` covariate quantiles.

    ``spec`` may be a number, a ``"q:0.2"`` string (applied to every
    covariate column) or a list mixing both, one entry per column.
    """
    if isinstance(spec, (str, int, float)):
        spec = [spec] * table.dim
    spec = list(spec)
    if len(spec) != table.dim:
        raise DataError(f"x0 has {len(spec)} entries, covariates have {table.dim}")
    out = np.empty(table.dim)
    for j, s in enumerate(spec):
        if isinstance(s, str) and s.strip().lower().startswith("q:"):
            tau = float(s.split(":", 1)[1])
            if not 0.0 <= tau <= 1.0:
                raise DataError(f"quantile level out of range: {tau}")
            out[j] = np.quantile(table.x[:, j], tau)
        else:
            v = float(s)
            if not math.isfinite(v):
                raise DataError("x0 must be finite")
            out[j] = v
    return out
