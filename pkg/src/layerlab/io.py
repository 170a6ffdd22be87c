"""Atomic CSV/JSON writers shared by the command-line studies."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename; no partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_value(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def write_csv(path, schema, columns, rows):
    """CSV with a ``# schema: <name> v1`` comment line, then the header."""
    lines = [f"# schema: {schema} v1", ",".join(columns)]
    for row in rows:
        lines.append(",".join(format_value(row.get(c)) for c in columns))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path):
    """Inverse of :func:`write_csv`; returns (schema, list of dict rows of floats/strings)."""
    with open(path) as fh:
        schema = fh.readline().strip().removeprefix("# schema: ")
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            vals = line.rstrip("\n").split(",")
            row = {}
            for k, v in zip(header, vals):
                try:
                    row[k] = float(v)
                except ValueError:
                    row[k] = v
            rows.append(row)
    return schema, rows


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
