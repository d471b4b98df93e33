"""Delimited and JSON output with an embedded run-manifest hash.

Every file written by the command-line tools carries the hash of the run
manifest (canonical JSON of the effective configuration), so outputs can
be traced back to the exact run that produced them and reruns are
byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json

import numpy as np

#: Full decimal precision so oracle comparisons on re-read values are exact.
FLOAT_FORMAT = ".17g"


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return format(float(v), FLOAT_FORMAT)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"not JSON serializable: {type(v)!r}")


def manifest_hash(manifest: dict) -> str:
    return hashlib.sha256(canonical_json(manifest).encode()).hexdigest()


def write_manifest(path, manifest: dict) -> str:
    digest = manifest_hash(manifest)
    payload = dict(manifest, manifest_hash=digest)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return digest


def write_json(path, obj: dict, digest: str):
    with open(path, "w") as fh:
        json.dump(dict(obj, manifest_hash=digest), fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def write_csv(path, header, rows, digest: str):
    """CSV with a leading ``# manifest_hash=...`` comment line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest_hash={digest}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def read_csv(path):
    """Read back a file written by write_csv. Returns (header, rows, hash)."""
    digest = None
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.startswith("# manifest_hash="):
            digest = first.strip().split("=", 1)[1]
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    return header, rows, digest
