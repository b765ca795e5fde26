"""Plain-text file helpers shared by the exporters (UTF-8, LF, %.12e)."""

import hashlib
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.12e"


def fmt(x) -> str:
    return FLOAT_FMT % x


def write_table(path, header, columns) -> None:
    """Write equal-length numeric columns as CSV with a header row."""
    cols = [np.asarray(c) for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(str(int(v)) if isinstance(v, (bool, np.bool_)) else fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_matrix(path, row_values, col_values, matrix, corner="t_ps\\nu_ueV") -> None:
    """First row holds col_values, first column row_values."""
    matrix = np.asarray(matrix)
    lines = [",".join([corner] + [fmt(v) for v in col_values])]
    for r, row in zip(row_values, matrix):
        lines.append(",".join([fmt(r)] + [fmt(v) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_table(path):
    """Return (header, 2-D float array) from a file written by write_table."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    header = text[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:] if line], dtype=float)
    return header, data.reshape(-1, len(header))


def write_meta(path, items: dict) -> None:
    lines = [f"{k} = {v}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_meta(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
