"""Deterministic file formats of the experiment runner.

CSV bodies are reproducible byte-for-byte for a given configuration: fixed
column order, floats printed with 12 significant digits, rows in sweep
order.  Wall-clock information never enters a CSV; it lives in the JSON
manifest next to it.
"""

from __future__ import annotations

import hashlib
import json
import os

MANIFEST_SCHEMA_VERSION = 1


def format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_csv(path: str, columns, rows) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(format_cell(v) for v in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path: str):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    columns = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return columns, rows


def parse_config(path: str) -> dict:
    """Flat key-value config file: one `key = value` per line, # comments."""
    out = {}
    with open(path) as fh:
        for ln_no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln_no}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def canonical_config_text(config: dict) -> str:
    """Sorted, repr-normalized text form used for hashing."""
    parts = []
    for key in sorted(config):
        value = config[key]
        if isinstance(value, float):
            text = repr(value)
        elif isinstance(value, (list, tuple)):
            text = "[" + ",".join(repr(v) if isinstance(v, float) else str(v)
                                  for v in value) + "]"
        elif value is None:
            text = "none"
        else:
            text = str(value)
        parts.append(f"{key}={text}")
    return "\n".join(parts)


def job_hash(config: dict) -> str:
    return hashlib.sha256(canonical_config_text(config).encode()).hexdigest()[:16]


def write_manifest(path: str, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_manifest(path: str) -> dict | None:
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        return json.load(fh)
