"""Atomic file output (write to a temporary sibling, then rename)."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def _atomic(path, data: bytes) -> Path:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_text(path, text: str) -> Path:
    return _atomic(path, text.encode("utf-8"))


def write_bytes(path, data: bytes) -> Path:
    return _atomic(path, data)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    return write_text(path, json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, rows: list[dict]) -> Path:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in _plain(r).items()})
    return write_text(path, buf.getvalue())


def write_dat(path, rows: list[dict], columns=None) -> Path:
    """Whitespace-separated columns with a ``#`` header line (gnuplot style)."""
    if not rows:
        return write_text(path, "")
    columns = columns or [k for k, v in rows[0].items() if isinstance(v, (int, float, np.number))]
    lines = ["# " + " ".join(columns)]
    for r in rows:
        lines.append(" ".join(repr(float(r[c])) for c in columns))
    return write_text(path, "\n".join(lines) + "\n")
