"""Deterministic figure rendering.

Three figure kinds mirror the paper's plots:

    rate_blocklength   bound curves vs n (one curve per input CSV)
    region             nested rate-region boundaries (region CSVs)
    rate_dispersion    rate vs per-letter dispersion from a parameter sweep

SVG is the golden format: fonts are kept as text, the hash salt is pinned,
and no timestamps are embedded, so rendering the same inputs twice yields
byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .csvread import SchemaError, parse_notes, read_csv  # noqa: E402

LN2 = math.log(2.0)

_RC = {
    "svg.hashsalt": "figplots",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 9.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 100,
    "path.simplify": False,
}

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f"]


@dataclass
class PlotSpec:
    figure_id: str
    kind: str                      # rate_blocklength | region | rate_dispersion
    inputs: list[str]
    output: str
    format: str = "svg"            # svg (golden) | png (convenience)
    unit: str = "bits"
    eps_filter: float | None = None
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    xlim: tuple | None = None
    ylim: tuple | None = None
    xscale: str = "linear"
    legend_order: list[str] = field(default_factory=list)

    @staticmethod
    def from_json(path) -> "PlotSpec":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        known = {f for f in PlotSpec.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise SchemaError(f"unknown plot spec fields {sorted(extra)}")
        return PlotSpec(**obj)


def _to_unit(value_nats: float, unit: str) -> float:
    return value_nats / LN2 if unit == "bits" else value_nats


def _annotate_empty(ax, label):
    ax.text(0.5, 0.5, f"no data: {label}", transform=ax.transAxes,
            ha="center", va="center", color="#aa0000")


def _curves_from_bounds(path, eps_filter):
    meta, cols, rows = read_csv(path)
    if meta["schema"] not in ("fbsc.bounds.p2p.v1", "fbsc.bounds.masc.v1"):
        raise SchemaError(f"{path}: expected a bounds schema")
    out = {}
    label = None
    for r in rows:
        notes = parse_notes(r["notes"])
        eps = float(notes["eps"]) if "eps" in notes else None
        if eps_filter is not None and (eps is None
                                       or abs(eps - eps_filter) > 1e-15):
            continue
        label = r["bound_id"]
        out.setdefault(r["bound_id"], []).append(
            (int(r["n"]), float(r["value_nats"])))
    return label, out


def render(spec: PlotSpec) -> str:
    """Render one figure; returns the output path."""
    if spec.format not in ("svg", "png"):
        raise SchemaError(f"unknown output format {spec.format!r}")
    if spec.kind not in ("rate_blocklength", "region", "rate_dispersion"):
        raise SchemaError(f"unknown figure kind {spec.kind!r}")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        if spec.kind == "rate_blocklength":
            _render_rate_blocklength(ax, spec)
        elif spec.kind == "region":
            _render_region(ax, spec)
        else:
            _render_rate_dispersion(ax, spec)
        if spec.title:
            ax.set_title(spec.title)
        if spec.xlim:
            ax.set_xlim(*spec.xlim)
        if spec.ylim:
            ax.set_ylim(*spec.ylim)
        ax.set_xscale(spec.xscale)
        fig.tight_layout()
        fig.savefig(spec.output, format=spec.format,
                    metadata=_metadata(spec.format))
        plt.close(fig)
    return spec.output


def _metadata(fmt: str):
    if fmt == "svg":
        return {"Date": None, "Creator": "figplots"}
    return {}


def _render_rate_blocklength(ax, spec: PlotSpec):
    drew = False
    labels = []
    for idx, path in enumerate(spec.inputs):
        label, curves = _curves_from_bounds(path, spec.eps_filter)
        for bound_id, pts in sorted(curves.items()):
            pts.sort()
            xs = [p[0] for p in pts]
            ys = [_to_unit(p[1], spec.unit) for p in pts]
            ax.plot(xs, ys, marker="o", markersize=2.5,
                    color=_COLORS[idx % len(_COLORS)], label=bound_id)
            labels.append(bound_id)
            drew = True
        if not curves:
            labels.append(f"(empty) {path}")
    ax.set_xlabel(spec.xlabel or "blocklength n")
    ax.set_ylabel(spec.ylabel or f"rate ({spec.unit})")
    if drew:
        order = spec.legend_order or labels
        handles, labs = ax.get_legend_handles_labels()
        pairs = {l: h for h, l in zip(handles, labs)}
        ordered = [(pairs[l], l) for l in order if l in pairs]
        ax.legend([h for h, _ in ordered], [l for _, l in ordered],
                  fontsize=7, loc="best")
    else:
        _annotate_empty(ax, spec.figure_id)


def _render_region(ax, spec: PlotSpec):
    drew = False
    for idx, path in enumerate(spec.inputs):
        meta, cols, rows = read_csv(path)
        if meta["schema"] != "fbsc.region.v1":
            raise SchemaError(f"{path}: expected the region schema")
        if not rows:
            continue
        xs = [_to_unit(float(r["R1_nats"]), spec.unit) for r in rows]
        ys = [_to_unit(float(r["R2_nats"]), spec.unit) for r in rows]
        label = f"{rows[0]['region_id']}"
        ax.plot(xs, ys, color=_COLORS[idx % len(_COLORS)], label=label)
        drew = True
    ax.set_xlabel(spec.xlabel or f"R1 ({spec.unit})")
    ax.set_ylabel(spec.ylabel or f"R2 ({spec.unit})")
    if drew:
        ax.legend(fontsize=7, loc="best")
    else:
        _annotate_empty(ax, spec.figure_id)


def _render_rate_dispersion(ax, spec: PlotSpec):
    drew = False
    for idx, path in enumerate(spec.inputs):
        meta, cols, rows = read_csv(path)
        if meta["schema"] != "fbsc.bounds.p2p.v1":
            raise SchemaError(f"{path}: expected the p2p bounds schema")
        pts = []
        bound_id = None
        for r in rows:
            notes = parse_notes(r["notes"])
            if "V_nats" not in notes:
                continue
            if spec.eps_filter is not None and \
                    abs(float(notes.get("eps", "nan")) - spec.eps_filter) > 1e-15:
                continue
            bound_id = r["bound_id"]
            v = float(notes["V_nats"])
            v_disp = v / LN2 ** 2 if spec.unit == "bits" else v
            pts.append((v_disp, _to_unit(float(r["value_nats"]), spec.unit)))
        if pts:
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    markersize=2.5, color=_COLORS[idx % len(_COLORS)],
                    label=bound_id)
            drew = True
    ax.set_xlabel(spec.xlabel or f"varentropy ({spec.unit}^2)")
    ax.set_ylabel(spec.ylabel or f"rate ({spec.unit})")
    if drew:
        ax.legend(fontsize=7, loc="best")
    else:
        _annotate_empty(ax, spec.figure_id)
