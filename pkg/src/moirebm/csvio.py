"""CSV output with a machine-readable JSON header.

Every file starts with one ``#``-prefixed JSON line carrying the schema
name, the config snapshot and its hash; an optional second ``#`` line may
carry a timestamp.  The body below the comment lines is byte-deterministic
for a fixed config.
"""

from __future__ import annotations

import json
import time

from .config import RunConfig
from .errors import SchemaError

SCHEMAS = {
    "bands": ("k_re", "k_im", "j", "E"),
    "fermi_map": ("alpha", "lambda", "v_F", "im_leak", "kernel_gap", "status"),
    "magic_angles": ("alpha", "v_F_residual", "kernel_gap"),
    "magic_curve": ("lambda", "alpha", "v_F_residual"),
    "taylor": ("alpha0", "c10", "c02", "c11", "c01_check"),
    "touchings": ("k_re", "k_im", "gap", "kind", "winding"),
    "winding": ("center_re", "center_im", "radius", "n", "index",
                "quantization_residual"),
    "cone_profile": ("k_re", "k_im", "ratio"),
}


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    return format(float(value), ".16e")


def write_csv(path, schema: str, rows, config: RunConfig,
              extra_header: dict = None, timestamp: bool = True):
    """Write rows for a documented schema with the JSON provenance header."""
    if schema not in SCHEMAS:
        raise SchemaError(f"unknown schema {schema!r}")
    columns = SCHEMAS[schema]
    header = {
        "schema": schema,
        "columns": list(columns),
        "config": config.to_dict(),
        "config_hash": config.digest(),
    }
    if extra_header:
        header.update(extra_header)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        if timestamp:
            fh.write(f"# written {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            if len(row) != len(columns):
                raise SchemaError(
                    f"row width {len(row)} != {len(columns)} for {schema}")
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_csv(path):
    """Read back a package CSV: returns (header dict, column names, rows)."""
    header = None
    rows = []
    columns = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                if header is None and line[1:].strip().startswith("{"):
                    header = json.loads(line[1:].strip())
                continue
            if columns is None:
                columns = line.split(",")
                continue
            if line:
                rows.append(line.split(","))
    if columns is None:
        raise SchemaError(f"{path} has no column header")
    return header or {}, columns, rows
