"""Scaling-and-squaring matrix exponential with a plain Taylor core.

Deliberately independent of the closed-form kernel machinery: used as the
oracle against which pointwise kernel application is checked.
"""

from __future__ import annotations

import numpy as np

_THETA = 0.5  # scale until the 1-norm is below this; Taylor-13 tail < 1e-15
_DEGREE = 13


def expm_taylor(a: np.ndarray) -> np.ndarray:
    """exp(a) for a small dense matrix, Taylor series + repeated squaring."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expm_taylor expects a square matrix")
    n = a.shape[0]
    norm = np.linalg.norm(a, 1)
    s = 0
    if norm > _THETA:
        s = int(np.ceil(np.log2(norm / _THETA)))
    b = a / (2.0**s)
    eye = np.eye(n, dtype=complex)
    out = eye.copy()
    # Horner evaluation of sum_{j<=13} b^j / j!
    for j in range(_DEGREE, 0, -1):
        out = eye + (b @ out) / j
    for _ in range(s):
        out = out @ out
    return out
