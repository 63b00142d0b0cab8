"""Independent reference computations used by the tests.

Nothing here imports the package: univariate B-splines come from the
Cox-de Boor recursion and Bernstein polynomials from their closed form.
"""

from math import comb

import numpy as np


def cox_de_boor(knots, i, p, x):
    """Value of the ``i``-th degree-``p`` B-spline on ``knots`` at points ``x``."""
    x = np.asarray(x, dtype=float)
    if p == 0:
        return np.where((knots[i] <= x) & (x < knots[i + 1]), 1.0, 0.0)
    out = np.zeros_like(x)
    d1 = knots[i + p] - knots[i]
    d2 = knots[i + p + 1] - knots[i + 1]
    if d1 > 0:
        out += (x - knots[i]) / d1 * cox_de_boor(knots, i, p - 1, x)
    if d2 > 0:
        out += (knots[i + p + 1] - x) / d2 * cox_de_boor(knots, i + 1, p - 1, x)
    return out


def bernstein_closed(t):
    t = np.asarray(t, dtype=float)
    return np.column_stack([comb(3, k) * (1 - t) ** (3 - k) * t ** k for k in range(4)])


def uniform_extraction_1d() -> np.ndarray:
    """(4 Bernstein, 4 B-spline) operator of uniform cubic B-splines on one knot span.

    Rows are Bezier points, columns the four B-splines non-zero on ``[0, 1]``
    ordered left to right.
    """
    knots = np.arange(-3.0, 5.0)
    t = np.linspace(0.05, 0.95, 9)
    N = np.column_stack([cox_de_boor(knots, i, 3, t) for i in range(4)])
    Bt = bernstein_closed(t)
    # N = Bt @ M  ->  M = lstsq
    M, *_ = np.linalg.lstsq(Bt, N, rcond=None)
    return M


def uniform_extraction_3d() -> np.ndarray:
    """(64, 64) tensor product, both sides indexed ``i + 4 j + 16 k``."""
    M = uniform_extraction_1d()
    return np.kron(np.kron(M, M), M)


def knot_insertion_1d() -> np.ndarray:
    """Coefficients ``S`` with ``N_coarse_j = sum_i S[i, j] N_fine_i`` for uniform midpoint insertion.

    Coarse knots are integers, fine knots half-integers. Returned rows cover the
    fine B-splines starting at fine knot 0, columns coarse ones starting at 0.
    """
    coarse = np.arange(-4.0, 9.0)
    fine = np.arange(-8.0, 17.0) / 2.0
    x = np.linspace(0.01, 3.99, 200)
    Nc = np.column_stack([cox_de_boor(coarse, j, 3, x) for j in range(len(coarse) - 4)])
    Nf = np.column_stack([cox_de_boor(fine, i, 3, x) for i in range(len(fine) - 4)])
    S, *_ = np.linalg.lstsq(Nf, Nc, rcond=None)
    S[np.abs(S) < 1e-12] = 0.0
    return S
