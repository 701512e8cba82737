"""Render paper-style figures from fbsc CSV outputs.

This package never computes a bound: it consumes the versioned CSV schemas
documented by the computation toolkit (fbsc.bounds.p2p.v1,
fbsc.bounds.masc.v1, fbsc.region.v1) and renders deterministic SVG (golden
format) or PNG.  Rendering is a pure function of (CSV bytes, plot spec):
repeated runs emit byte-identical SVG.
"""

from .csvread import read_csv, validate_csv
from .render import PlotSpec, render

__version__ = "0.1.0"

__all__ = ["PlotSpec", "render", "read_csv", "validate_csv", "__version__"]
