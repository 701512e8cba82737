"""Finite-blocklength lossless source coding toolkit.

Exact and approximate limits for point-to-point, Slepian-Wolf (multiple
access), and random-access lossless source coding, plus a discrete-event
simulator of the rateless random-access protocol.  Everything internal is in
nats; the CLI converts for display.
"""

from .probcore import JointPmf, fig4_pair_source, info_density, load_pmf, moments

__version__ = "0.1.0"

__all__ = [
    "JointPmf",
    "fig4_pair_source",
    "info_density",
    "load_pmf",
    "moments",
    "__version__",
]
