"""Cubic Bernstein polynomials and their tensor products.

Trivariate functions are ordered ``i + 4 j + 16 k`` where ``i`` indexes
the first parameter.
"""

from __future__ import annotations

import numpy as np

BINOM3 = np.array([1.0, 3.0, 3.0, 1.0])


def bernstein(t, deriv: int = 0) -> np.ndarray:
    """Values (``deriv = 0``) or first derivatives (``deriv = 1``) of the four cubic Bernstein polynomials.

    ``t`` may be a scalar (returns shape ``(4,)``) or an array (``(m, 4)``).
    """
    t = np.asarray(t, dtype=np.float64)
    scalar = t.ndim == 0
    t = t.reshape(-1, 1)
    s = 1.0 - t
    if deriv == 0:
        out = np.hstack([s ** 3, 3 * s ** 2 * t, 3 * s * t ** 2, t ** 3])
    elif deriv == 1:
        out = np.hstack([-3 * s ** 2, 3 * s ** 2 - 6 * s * t, 6 * s * t - 3 * t ** 2, 3 * t ** 2])
    else:
        raise ValueError("only deriv 0 or 1 is supported")
    return out[0] if scalar else out


def bernstein3(uvw) -> np.ndarray:
    """``(m, 64)`` trivariate values at points ``(m, 3)`` (or ``(64,)`` for one point)."""
    p = np.asarray(uvw, dtype=np.float64)
    single = p.ndim == 1
    p = p.reshape(-1, 3)
    bu, bv, bw = (bernstein(p[:, a]) for a in range(3))
    out = np.einsum("mk,mj,mi->mkji", bw, bv, bu).reshape(len(p), 64)
    return out[0] if single else out


def bernstein3_grad(uvw) -> np.ndarray:
    """``(m, 64, 3)`` parametric gradients of the trivariate basis."""
    p = np.asarray(uvw, dtype=np.float64).reshape(-1, 3)
    b = [bernstein(p[:, a]) for a in range(3)]
    d = [bernstein(p[:, a], 1) for a in range(3)]
    gu = np.einsum("mk,mj,mi->mkji", b[2], b[1], d[0]).reshape(len(p), 64)
    gv = np.einsum("mk,mj,mi->mkji", b[2], d[1], b[0]).reshape(len(p), 64)
    gw = np.einsum("mk,mj,mi->mkji", d[2], b[1], b[0]).reshape(len(p), 64)
    return np.stack([gu, gv, gw], axis=2)


def bezier_index(i: int, j: int, k: int) -> int:
    return i + 4 * j + 16 * k
