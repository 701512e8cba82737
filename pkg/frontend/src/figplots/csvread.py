"""Schema-aware CSV reading and sanity validation.

Only the schemas listed in KNOWN_SCHEMAS are accepted; anything else is a
hard error on the render path and a violation on the validate path.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class SchemaError(Exception):
    pass


KNOWN_SCHEMAS = {
    "fbsc.bounds.p2p.v1": ["bound_id", "n", "M", "eps_or_rate", "value",
                           "value_nats", "gamma", "notes"],
    "fbsc.bounds.masc.v1": ["bound_id", "n", "M1", "M2", "eps_or_rate",
                            "value", "value_nats", "gamma", "notes"],
    "fbsc.region.v1": ["region_id", "n", "eps", "R1_nats", "R2_nats"],
}


def parse_notes(notes: str) -> dict:
    out = {}
    for part in notes.split(";"):
        if "=" in part:
            k, v = part.split("=", 1)
            out[k] = v
    return out


def read_csv(path):
    """(meta, columns, row dicts) of a versioned fbsc CSV; raises on an
    unknown schema or malformed layout."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("# "):
        raise SchemaError(f"{path}: missing metadata line")
    meta = {}
    for tok in lines[0][2:].split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            meta[k] = v
    schema = meta.get("schema")
    if schema not in KNOWN_SCHEMAS:
        raise SchemaError(f"{path}: unknown schema {schema!r}")
    if len(lines) < 2:
        raise SchemaError(f"{path}: missing column header")
    cols = lines[1].split(",")
    if cols != KNOWN_SCHEMAS[schema]:
        raise SchemaError(f"{path}: columns {cols} do not match {schema}")
    rows = []
    for ln in lines[2:]:
        if not ln:
            continue
        parts = ln.split(",")
        if len(parts) != len(cols):
            raise SchemaError(f"{path}: ragged row {ln!r}")
        rows.append(dict(zip(cols, parts)))
    return meta, cols, rows


@dataclass
class ValidationReport:
    path: str
    schema: str | None = None
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_csv(path) -> ValidationReport:
    """Schema, range, and monotonicity checks; never raises, only reports."""
    report = ValidationReport(path=str(path))
    try:
        meta, cols, rows = read_csv(path)
    except SchemaError as e:
        report.violations.append(str(e))
        return report
    schema = meta["schema"]
    report.schema = schema
    if schema == "fbsc.region.v1":
        prev_r2 = {}
        for i, r in enumerate(rows):
            try:
                r1 = float(r["R1_nats"])
                r2 = float(r["R2_nats"])
            except ValueError:
                report.violations.append(f"row {i}: non-numeric rate")
                continue
            if r1 < 0 or r2 < 0:
                report.violations.append(f"row {i}: negative rate")
            key = (r["region_id"], r["n"], r["eps"])
            if key in prev_r2 and r2 > prev_r2[key] + 1e-9:
                report.violations.append(
                    f"row {i}: boundary not monotone (R2 increased)")
            prev_r2[key] = r2
        return report
    # bound schemas
    prev_n = {}
    for i, r in enumerate(rows):
        kind = r["eps_or_rate"]
        try:
            val = float(r["value"])
            val_nats = float(r["value_nats"])
        except ValueError:
            report.violations.append(f"row {i}: non-numeric value")
            continue
        if kind == "eps":
            if not 0.0 <= val <= 1.0:
                report.violations.append(
                    f"row {i}: error probability {val} outside [0,1]")
        elif kind == "rate":
            if val < 0 or val_nats < 0:
                report.violations.append(f"row {i}: negative rate")
        else:
            report.violations.append(f"row {i}: unknown kind {kind!r}")
        try:
            n = int(r["n"])
        except ValueError:
            report.violations.append(f"row {i}: non-integer n")
            continue
        key = (r["bound_id"], parse_notes(r.get("notes", "")).get("eps"))
        if key in prev_n and n < prev_n[key]:
            report.violations.append(f"row {i}: n not sorted within a curve")
        prev_n[key] = n
    return report
