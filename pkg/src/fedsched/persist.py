"""Run persistence: JSON-lines records plus a JSON manifest, and CSV tables
with a provenance header."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path

FORMAT_VERSION = 1
MANIFEST_FIELDS = ("format_version", "kind", "seed", "config_hash", "config")
SENTINEL = "non-convergent"


class PersistError(ValueError):
    pass


def _to_jsonable(rec):
    if dataclasses.is_dataclass(rec) and not isinstance(rec, type):
        return {"__type__": type(rec).__name__, **dataclasses.asdict(rec)}
    return rec


def persist_run(records, manifest: dict, path) -> Path:
    """Write ``<path>/manifest.json`` and ``<path>/records.jsonl``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    man = dict(manifest)
    man.setdefault("format_version", FORMAT_VERSION)
    missing = [f for f in MANIFEST_FIELDS if f not in man]
    if missing:
        raise PersistError(f"manifest missing fields {missing}")
    man["record_count"] = len(records)
    with open(path / "manifest.json", "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(path / "records.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(_to_jsonable(rec), sort_keys=True))
            fh.write("\n")
    return path


def load_run(path, record_types=None):
    """Inverse of :func:`persist_run`; returns (records, manifest).

    ``record_types`` maps a dataclass name to its class so typed records
    come back as instances.
    """
    path = Path(path)
    try:
        with open(path / "manifest.json") as fh:
            man = json.load(fh)
    except FileNotFoundError:
        raise PersistError(f"{path}: no manifest.json") from None
    except json.JSONDecodeError as e:
        raise PersistError(f"{path}/manifest.json: corrupt ({e})") from None
    if not isinstance(man, dict):
        raise PersistError(f"{path}/manifest.json: expected an object")
    ver = man.get("format_version")
    if ver != FORMAT_VERSION:
        raise PersistError(f"{path}: format_version {ver!r} unsupported (expected {FORMAT_VERSION})")
    missing = [f for f in MANIFEST_FIELDS if f not in man]
    if missing:
        raise PersistError(f"{path}: manifest (format_version {ver}) missing fields {missing}")
    types = record_types or {}
    records = []
    with open(path / "records.jsonl") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise PersistError(f"{path}/records.jsonl:{lineno}: corrupt record ({e})") from None
            tname = obj.pop("__type__", None) if isinstance(obj, dict) else None
            if tname is not None and tname in types:
                obj = types[tname](**obj)
            elif tname is not None:
                obj["__type__"] = tname
            records.append(obj)
    n = man.get("record_count")
    if n is not None and n != len(records):
        raise PersistError(f"{path}: manifest lists {n} records, found {len(records)} (truncated?)")
    man.pop("record_count", None)
    return records, man


# -- CSV tables -----------------------------------------------------------


def fmt(x):
    if isinstance(x, float):
        if math.isinf(x) or math.isnan(x):
            return SENTINEL
        return repr(x)
    return str(x)


def write_table(path, columns, rows, provenance: dict | None = None):
    """CSV with '# key: value' provenance lines ahead of the header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for k, v in (provenance or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(c, "") for c in columns]
            w.writerow([fmt(x) for x in row])
    return path


def read_table(path):
    """(provenance dict, column names, list of row dicts of strings)."""
    prov = {}
    with open(path, newline="") as fh:
        lines = fh.readlines()
    body = []
    for ln in lines:
        if ln.startswith("#") and not body:
            k, _, v = ln[1:].strip().partition(":")
            prov[k.strip()] = v.strip()
        else:
            body.append(ln)
    reader = csv.reader(body)
    try:
        cols = next(reader)
    except StopIteration:
        raise PersistError(f"{path}: no header row") from None
    rows = [dict(zip(cols, r)) for r in reader if r]
    return prov, cols, rows


def parse_value(s):
    if s == SENTINEL:
        return math.inf
    try:
        return float(s)
    except ValueError:
        return s

