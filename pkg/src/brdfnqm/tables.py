"""Structured text tables: the toolkit's diff-able interchange format.

Every file starts with a versioned kind line, optional `# key=value`
metadata lines, a `# col col ...` column header, then whitespace-separated
rows. Floats are written with repr so rereads are bit-exact.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError

FORMAT_VERSION = 1


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, kind: str, columns: list[str], rows, meta: dict | None = None) -> None:
    with open(str(path), "w", encoding="ascii") as f:
        f.write(f"# brdfnqm-{kind} v{FORMAT_VERSION}\n")
        for key, value in (meta or {}).items():
            f.write(f"# {key}={_fmt(value)}\n")
        f.write("# " + " ".join(columns) + "\n")
        for row in rows:
            f.write(" ".join(_fmt(v) for v in row) + "\n")


def read_table(path, kind: str):
    """Returns (meta dict of strings, column names, rows of string fields)."""
    with open(str(path), "r", encoding="ascii") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith(f"# brdfnqm-{kind} v"):
        raise FormatError(f"{path}: not a brdfnqm-{kind} table")
    version = lines[0].rsplit("v", 1)[-1]
    if int(version) != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported table version {version}")
    meta: dict[str, str] = {}
    columns: list[str] = []
    rows: list[list[str]] = []
    for line in lines[1:]:
        if line.startswith("# ") and "=" in line and not columns:
            key, _, value = line[2:].partition("=")
            meta[key] = value
        elif line.startswith("# "):
            columns = line[2:].split()
        elif line.strip():
            rows.append(line.split())
    if not columns:
        raise FormatError(f"{path}: missing column header")
    for r in rows:
        if len(r) != len(columns):
            raise FormatError(f"{path}: row width {len(r)} != {len(columns)} columns")
    return meta, columns, rows
