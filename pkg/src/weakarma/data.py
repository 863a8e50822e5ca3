"""CSV ingestion and return transforms."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from weakarma.errors import DomainError, ParseError

MISSING = {"", "na", "nan", "null", "none", "."}


@dataclass(frozen=True)
class CsvData:
    data: np.ndarray
    columns: tuple
    dropped: int


def load_csv(path, columns: Optional[Sequence[str]] = None) -> CsvData:
    """Numeric matrix from a CSV file with a header row.

    Only ``columns`` are read when given (other columns may be non-numeric).
    Rows with a missing value in a selected column are dropped and counted.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if columns is None:
            idx = list(range(len(header)))
        else:
            missing = [c for c in columns if c not in header]
            if missing:
                raise ParseError(f"{path}: columns not found: {missing}")
            idx = [header.index(c) for c in columns]
        rows, dropped = [], 0
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            cells = [row[i].strip() if i < len(row) else "" for i in idx]
            if any(c.lower() in MISSING for c in cells):
                dropped += 1
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in cells if not _is_float(c))
                raise ParseError(f"{path}: line {line_no}: cannot parse {bad!r} as a number") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return CsvData(np.asarray(rows, dtype=float), tuple(header[i] for i in idx), dropped)


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def write_csv(path, data, columns: Optional[Sequence[str]] = None) -> None:
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if columns is None:
        columns = [f"x{i + 1}" for i in range(data.shape[1])]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


def log_returns(prices) -> np.ndarray:
    """``log(p_t) - log(p_{t-1})``."""
    p = np.asarray(prices, dtype=float).ravel()
    if p.size < 2:
        raise DomainError("need at least two prices")
    bad = np.flatnonzero(~(p > 0))
    if bad.size:
        raise DomainError(f"price at index {int(bad[0])} is not positive: {p[bad[0]]!r}")
    return np.diff(np.log(p))
