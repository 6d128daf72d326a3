from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from defect_harness.errors import InputError


def format_cell(value) -> str:
    """Integers plain, floats with 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    """Tab-delimited UTF-8 table with one header line; returns the row count."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    width = len(header)
    lines = ["\t".join(header)]
    for k, row in enumerate(rows):
        if len(row) != width:
            raise InputError(f"table row {k} has {len(row)} cells, header has {width}", module="reporting")
        lines.append("\t".join(format_cell(v) for v in row))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return len(lines) - 1


def write_columns(path: str | Path, columns: dict[str, np.ndarray]) -> int:
    """Table from named columns; 2D arrays expand to `name1`, `name2`, ..."""
    header: list[str] = []
    cols: list[np.ndarray] = []
    for name, values in columns.items():
        values = np.asarray(values)
        if values.ndim == 1:
            header.append(name)
            cols.append(values)
        else:
            for j in range(values.shape[1]):
                header.append(f"{name}{j + 1}")
                cols.append(values[:, j])
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise InputError(f"columns have different lengths {sorted(lengths)}", module="reporting")
    rows = zip(*[c.tolist() for c in cols]) if cols else iter(())
    return write_table(path, header, list(rows))


def read_table(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Header and a float array of the body."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise InputError(f"empty table {path}", module="reporting")
    header = lines[0].split("\t")
    body = np.array([[float(v) for v in line.split("\t")] for line in lines[1:] if line], dtype=float)
    return header, body.reshape(-1, len(header))
