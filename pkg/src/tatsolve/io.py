"""ASCII field (FGRID), trace (BTRACE) and CSV files.

Writers may put ``#`` provenance lines before the format header; readers skip
them. Floats are written with 17 significant digits so reads are exact.
"""
from __future__ import annotations

import csv
import io as _io

import numpy as np

from .forward import BoundaryTrace
from .grid import Grid2D


class FormatError(ValueError):
    pass


def _fmt(x):
    return format(float(x), ".17g")


def _content_lines(text):
    lines = text.splitlines()
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        start += 1
    return lines[start:]


def _comment(provenance):
    return f"# {provenance}\n" if provenance else ""


def dumps_fgrid(grid, values, provenance=None):
    values = grid.check(values)
    out = [_comment(provenance),
           f"FGRID {grid.nx} {grid.ny} {_fmt(grid.dx)} {_fmt(grid.origin[0])} {_fmt(grid.origin[1])}\n"]
    out.extend(" ".join(_fmt(v) for v in row) + "\n" for row in values)
    return "".join(out)


def loads_fgrid(text):
    lines = _content_lines(text)
    if not lines:
        raise FormatError("empty FGRID file")
    head = lines[0].split()
    if len(head) != 6 or head[0] != "FGRID":
        raise FormatError(f"bad FGRID header: {lines[0]!r}")
    nx, ny = int(head[1]), int(head[2])
    grid = Grid2D(nx, ny, float(head[3]), (float(head[4]), float(head[5])))
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    if len(rows) != ny:
        raise FormatError(f"FGRID declares {ny} rows, found {len(rows)}")
    for j, r in enumerate(rows):
        if len(r) != nx:
            raise FormatError(f"FGRID row {j} has {len(r)} values, expected {nx}")
    return grid, np.array([[float(v) for v in r] for r in rows])


def dumps_btrace(trace, provenance=None):
    out = [_comment(provenance), f"BTRACE {trace.nt} {trace.nb} {_fmt(trace.dt)} {trace.geometry_hash}\n"]
    out.extend(" ".join(_fmt(v) for v in row) + "\n" for row in trace.samples)
    return "".join(out)


def loads_btrace(text):
    lines = _content_lines(text)
    if not lines:
        raise FormatError("empty BTRACE file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "BTRACE":
        raise FormatError(f"bad BTRACE header: {lines[0]!r}")
    nt, nb = int(head[1]), int(head[2])
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    if len(rows) != nt or any(len(r) != nb for r in rows):
        raise FormatError(f"BTRACE declares {nt}x{nb} samples; counts do not match")
    return BoundaryTrace(np.array([[float(v) for v in r] for r in rows]).reshape(nt, nb),
                         float(head[3]), head[4])


def dumps_csv(header, rows, provenance=None):
    buf = _io.StringIO()
    buf.write(_comment(provenance))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def loads_csv(text):
    rows = list(csv.reader(_content_lines(text)))
    return rows[0], rows[1:]


def write_text(path, text):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def read_text(path):
    with open(path, encoding="ascii") as fh:
        return fh.read()
