"""Plot-ready CSV and JSON emission with provenance metadata.

Every file carries the toolkit version, the run seed and a hash of the
configuration that produced it.  Nothing time-dependent is written, so the
same inputs always produce byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import __version__


def config_hash(config: Optional[Mapping]) -> str:
    blob = json.dumps(config or {}, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()


def run_metadata(config: Optional[Mapping] = None, seed: Optional[int] = None) -> dict:
    return {"toolkit_version": __version__, "config_sha256": config_hash(config), "seed": seed}


def _jsonable(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _clean(obj):
    # json cannot carry NaN/inf portably
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path, payload: Mapping, meta: Optional[Mapping] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(payload)
    if meta is not None:
        doc["meta"] = dict(meta)
    doc = json.loads(json.dumps(doc, default=_jsonable))
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], meta: Optional[Mapping] = None) -> Path:
    """Write ``rows`` under ``header``; metadata goes in leading ``#`` lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def read_csv(path):
    """Return ``(meta, header, rows)`` for a file written by :func:`write_csv`."""
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        else:
            lines.append(line)
    reader = list(csv.reader(lines))
    return meta, reader[0], reader[1:]
