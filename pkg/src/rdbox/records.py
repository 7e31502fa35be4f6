"""CSV / JSON emission for experiment records.

CSV files start with ``#`` comment lines carrying the run configuration,
followed by a header row naming every column. JSON output is an array of
record objects. Floats are written with ``repr`` so output is byte-stable.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _cell(v) -> str:
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return " ".join(_cell(x) for x in v)
    return str(v)


def normalize(rows: Iterable[Mapping]) -> List[Dict]:
    return [{k: _plain(v) for k, v in r.items()} for r in rows]


def columns(rows: Sequence[Mapping]) -> List[str]:
    cols: List[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    return cols


def to_csv(rows: Sequence[Mapping], meta: Optional[Mapping] = None, cols: Optional[Sequence[str]] = None) -> str:
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={_cell(v)}\n")
    cols = list(cols) if cols else columns(rows)
    w = csv.writer(buf, lineterminator="\n")
    if cols:
        w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def to_json(rows: Sequence[Mapping]) -> str:
    return json.dumps(normalize(rows), indent=1, allow_nan=False) + "\n"


def render(rows: Sequence[Mapping], fmt: str, meta: Optional[Mapping] = None, cols=None) -> str:
    if fmt == "csv":
        return to_csv(rows, meta, cols)
    if fmt == "json":
        return to_json(rows)
    raise ValueError(f"unknown format {fmt!r}")


def read_csv(text: str) -> List[Dict[str, str]]:
    """Inverse of :func:`to_csv` for the record part (values stay strings)."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_meta(text: str) -> Dict[str, str]:
    out = {}
    for ln in text.splitlines():
        if not ln.startswith("# "):
            break
        key, _, value = ln[2:].partition("=")
        out[key] = value
    return out
