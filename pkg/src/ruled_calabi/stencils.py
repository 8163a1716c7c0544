"""Finite-difference stencils on uniform grids.

Every node gets a stencil of the requested accuracy order: centered
where it fits, a shifted one-sided window near the ends of the array.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np
from scipy import sparse


@lru_cache(maxsize=None)
def exact_weights(offsets: tuple[int, ...], order: int) -> tuple[Fraction, ...]:
    """Weights w with sum_j w_j f(x + o_j h) ~ h**order * f^(order)(x).

    Solved in rational arithmetic so that the weights annihilate
    polynomials exactly; float weights would leak O(eps / h**order).
    """
    k = len(offsets)
    if k <= order:
        raise ValueError(f"need more than {order} points, got {k}")
    # moment conditions sum_j w_j o_j**p = p! delta_{p, order}
    a = [[Fraction(o) ** p for o in offsets] + [Fraction(factorial(order) if p == order else 0)]
         for p in range(k)]
    for col in range(k):
        piv = next(r for r in range(col, k) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        for r in range(k):
            if r != col and a[r][col] != 0:
                f = a[r][col] / a[col][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return tuple(a[i][k] / a[i][i] for i in range(k))


def fd_weights(offsets, order: int, dtype=float) -> np.ndarray:
    w = exact_weights(tuple(offsets), order)
    return np.array([dtype(x.numerator) / dtype(x.denominator) for x in w], dtype=dtype)


def centered_width(order: int, accuracy: int = 2) -> int:
    return 2 * ((order + 1) // 2) - 1 + accuracy


def onesided_width(order: int, accuracy: int = 2) -> int:
    return order + accuracy


def stencil_offsets(i: int, n: int, order: int, accuracy: int = 2) -> tuple[int, ...]:
    """Offsets used at node ``i`` of an ``n``-node array."""
    half = (centered_width(order, accuracy) - 1) // 2
    if half <= i <= n - 1 - half:
        return tuple(range(-half, half + 1))
    w = onesided_width(order, accuracy)
    if w > n:
        raise ValueError(f"{n} nodes cannot carry a derivative of order {order}")
    if i < half:
        return tuple(range(-i, w - i))
    return tuple(range(n - i - w, n - i))


def derivative(values, h: float, order: int, accuracy: int = 2) -> np.ndarray:
    """Derivative of ``order`` of nodal values with uniform spacing ``h``.

    Long double input stays long double.
    """
    f = np.asarray(values)
    if f.dtype != np.longdouble:
        f = f.astype(float)
    dt = f.dtype.type
    n = f.size
    if n < onesided_width(order, accuracy):
        raise ValueError(f"{n} nodes cannot carry a derivative of order {order}")
    out = np.empty(n, dtype=f.dtype)
    half = (centered_width(order, accuracy) - 1) // 2
    center = tuple(range(-half, half + 1))
    w = fd_weights(center, order, dt)
    interior = np.zeros(max(n - 2 * half, 0), dtype=f.dtype)
    for j, o in enumerate(center):
        interior += w[j] * f[half + o : n - half + o]
    out[half : n - half] = interior
    for i in [*range(min(half, n)), *range(max(n - half, half), n)]:
        offs = stencil_offsets(i, n, order, accuracy)
        out[i] = fd_weights(offs, order, dt) @ f[i + np.asarray(offs)]
    return out / dt(h) ** order


def derivative_matrix(n: int, h: float, order: int, accuracy: int = 2) -> sparse.csr_matrix:
    """Sparse matrix form of :func:`derivative`."""
    rows, cols, vals = [], [], []
    for i in range(n):
        offs = stencil_offsets(i, n, order, accuracy)
        for o, wv in zip(offs, fd_weights(offs, order)):
            rows.append(i)
            cols.append(i + o)
            vals.append(wv / h**order)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def slope_weights(accuracy: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """One-sided first-derivative weights at the left and right end."""
    k = accuracy + 1
    return fd_weights(tuple(range(k)), 1), fd_weights(tuple(range(-k + 1, 1)), 1)
