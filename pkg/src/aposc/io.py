"""Text records for series and reports, and CSV helpers.

Series are stored one term per line as ``k re im set`` where ``re`` and
``im`` are hexadecimal floats (exact round trip) and ``set`` is the label of
the structure set attaining [[k]].
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .apfun import APSeries, FrequencyBasis, MultiIndex, SpatialStructure

__all__ = ["series_to_records", "series_from_records", "write_csv", "write_records", "read_json"]


def _set_label(A) -> str:
    return "{" + ",".join(str(i) for i in sorted(A)) + "}"


def series_to_records(f: APSeries) -> list[str]:
    """One line per term: multi-index, hex real part, hex imaginary part, set label."""
    if f.has_profiles:
        raise ValueError("profile series are not serialized as text records")
    lines = []
    for k, c in f.terms.items():
        c = complex(c)
        label = _set_label(f.structure.best_set(k))
        lines.append(f"{k if k else '0'} {c.real.hex()} {c.imag.hex()} {label}")
    return lines


def series_from_records(lines, basis: FrequencyBasis, structure: SpatialStructure) -> APSeries:
    terms = {}
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        k, re, im, _label = line.split()
        terms[MultiIndex.parse(k)] = complex(float.fromhex(re), float.fromhex(im))
    return APSeries(basis, structure, terms)


def write_csv(path, header, rows):
    """Write rows (sequences or dicts) with a fixed header; floats in full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(h, "") for h in header]
            w.writerow([_fmt(v) for v in row])
    return path


def write_records(path, records, fields=("kind", "k", "j", "defect", "margin", "K")):
    """Structured text records ``field=value`` separated by tabs, one per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            fh.write("\t".join(f"{name}={_fmt(rec.get(name, ''))}" for name in fields) + "\n")
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
