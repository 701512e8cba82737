"""Small numeric helpers shared across modules."""

from __future__ import annotations

import numpy as np


def logsumexp(a, axis=None):
    """Lean log-sum-exp without scipy's array-API dispatch overhead.

    Handles all-(-inf) slices by returning -inf; inputs are float arrays.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return -np.inf if axis is None else np.full(
            np.delete(a.shape, axis), -np.inf)
    m = np.max(a, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m_safe), axis=axis, keepdims=True)) + m_safe
    out = np.where(np.isfinite(m), out, m)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)
