"""Versioned CSV emission and parsing.

Every file starts with one metadata comment line

    # schema=<id> source=<pmf hash> unit=<bits|nats> build=<id> seed=<int>

followed by the column header.  Schemas:

    fbsc.bounds.p2p.v1   bound_id,n,M,eps_or_rate,value,value_nats,gamma,notes
    fbsc.bounds.masc.v1  bound_id,n,M1,M2,eps_or_rate,value,value_nats,gamma,notes
    fbsc.region.v1       region_id,n,eps,R1_nats,R2_nats

``value`` is in the display unit named in the metadata; ``value_nats``
always carries the nats figure so no consumer has to re-derive units.
Rate rows set eps_or_rate="rate", error rows "eps" (where value_nats equals
value).  Floats are written with repr so identical runs emit identical
bytes.  Code sizes are written in scientific notation computed from log M,
so blocklength-2000 rates never overflow a float.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import ValidationError

SCHEMA_P2P = "fbsc.bounds.p2p.v1"
SCHEMA_MASC = "fbsc.bounds.masc.v1"
SCHEMA_REGION = "fbsc.region.v1"

COLUMNS = {
    SCHEMA_P2P: ["bound_id", "n", "M", "eps_or_rate", "value", "value_nats",
                 "gamma", "notes"],
    SCHEMA_MASC: ["bound_id", "n", "M1", "M2", "eps_or_rate", "value",
                  "value_nats", "gamma", "notes"],
    SCHEMA_REGION: ["region_id", "n", "eps", "R1_nats", "R2_nats"],
}

BUILD_ID = "fbsc-0.1.0"


def format_exp(ln_x: float) -> str:
    """Scientific-notation string of exp(ln_x) without float overflow."""
    if not math.isfinite(ln_x):
        return "inf" if ln_x > 0 else "0"
    log10 = ln_x / math.log(10.0)
    expo = math.floor(log10)
    mant = 10.0 ** (log10 - expo)
    if mant >= 9.9999995:
        mant /= 10.0
        expo += 1
    return f"{mant:.6f}e{expo:+05d}"


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path, schema: str, rows, *, source_hash: str, unit: str,
              seed: int, force: bool = False) -> None:
    if schema not in COLUMNS:
        raise ValidationError(f"unknown schema {schema!r}")
    if os.path.exists(path) and not force:
        raise ValidationError(f"refusing to overwrite {path} without --force")
    cols = COLUMNS[schema]
    lines = [
        f"# schema={schema} source={source_hash} unit={unit} "
        f"build={BUILD_ID} seed={seed}",
        ",".join(cols),
    ]
    for row in rows:
        if len(row) != len(cols):
            raise ValidationError(f"row width {len(row)} != {len(cols)}")
        lines.append(",".join(fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    """Return (meta dict, columns, list of row dicts) of a versioned CSV."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("# "):
        raise ValidationError(f"{path}: missing metadata line")
    meta = {}
    for tok in lines[0][2:].split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            meta[k] = v
    if len(lines) < 2:
        raise ValidationError(f"{path}: missing column header")
    cols = lines[1].split(",")
    schema = meta.get("schema", "")
    if schema in COLUMNS and cols != COLUMNS[schema]:
        raise ValidationError(f"{path}: columns do not match schema {schema}")
    rows = []
    for ln in lines[2:]:
        if not ln:
            continue
        parts = ln.split(",")
        if len(parts) != len(cols):
            raise ValidationError(f"{path}: ragged row {ln!r}")
        rows.append(dict(zip(cols, parts)))
    return meta, cols, rows


__all__ = [
    "SCHEMA_P2P", "SCHEMA_MASC", "SCHEMA_REGION", "COLUMNS", "BUILD_ID",
    "format_exp", "write_csv", "read_csv",
]
