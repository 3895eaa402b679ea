"""CSV/JSON artifact writing with a reproducibility header."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, is_dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__


def _plain(x):
    if is_dataclass(x) and not isinstance(x, type):
        return _plain(asdict(x))
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def config_hash(config) -> str:
    text = json.dumps(_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def metadata(config, seed) -> dict:
    return {"config_hash": config_hash(config), "seed": seed, "version": __version__}


def load_schema() -> dict:
    return json.loads(resources.files("ghzforge").joinpath("csv_schema.json").read_text())


def write_csv(path, table: str, rows, meta: dict | None = None):
    """Rows of dicts in the column order the schema lists for ``table``.

    Metadata goes into leading ``# key: value`` comment lines.
    """
    columns = load_schema()[table]["columns"]
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_csv(path) -> tuple[dict, list[dict]]:
    """Inverse of ``write_csv``: (metadata, rows as string dicts)."""
    meta, body = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# "):
                k, _, v = line[2:].rstrip("\n").partition(": ")
                meta[k] = v
            else:
                body.append(line)
    return meta, list(csv.DictReader(body))
