"""Critical constants, regime classification and explicit Calabi minimizers.

For every m > 0 the minimizer is assembled from closed-form pieces on
which S(phi) is affine:

* ``m < k1``: a single positive extremal profile on [0, m];
* ``k1 <= m <= k2 (k2 + 2)``: two pieces meeting at c = sqrt(m+1) - 1,
  where the profile has a double zero;
* ``m > k2 (k2 + 2)``: pieces on [0, k2] and [c, m] with the profile
  identically zero in between.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cache
from typing import Callable

import numpy as np

from .profile import (
    Grid,
    Profile,
    ProfileKind,
    boundary_residuals,
    curvature_second_derivative,
    piecewise_derivative,
    segments,
)


def _arr(x) -> np.ndarray:
    a = np.asarray(x)
    return a if a.dtype == np.longdouble else a.astype(float)


class RegimeError(ValueError):
    """A closed form was requested outside the range where it is positive."""


def quartic(m):
    return m**4 - 16 * m**3 - 52 * m**2 - 48 * m - 12


def cubic(c):
    return c**3 - 3 * c**2 - 9 * c - 6


def positive_root(f: Callable[[float], float], upper: float = 100.0, tol: float = 1e-12) -> float:
    """The single positive root of ``f`` on (0, upper).

    Scans unit steps for sign changes and bisects the bracket.
    """
    grid = np.arange(0.0, upper + 1.0)
    grid[0] = np.finfo(float).tiny
    try:
        signs = np.sign(np.asarray(f(grid), dtype=float))
    except TypeError:
        signs = np.sign([f(x) for x in grid])
    brackets = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    if brackets.size != 1:
        raise ArithmeticError(f"expected one positive root, found {brackets.size} brackets")
    lo, hi = grid[brackets[0]], grid[brackets[0] + 1]
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    # one Newton polish on the bracket midpoint; the polynomials are well conditioned there
    x = 0.5 * (lo + hi)
    dx = 1e-7 * x
    slope = (f(x + dx) - f(x - dx)) / (2 * dx)
    x_new = x - f(x) / slope
    return x_new if lo <= x_new <= hi and abs(f(x_new)) <= abs(f(x)) else x


@cache
def solve_k1() -> float:
    """Threshold in m below which an extremal metric exists (~18.889)."""
    return positive_root(quartic)


@cache
def solve_k2() -> float:
    """Largest length of a piece carrying a complete extremal metric (~5.0275)."""
    return positive_root(cubic)


def three_piece_threshold() -> float:
    k2 = solve_k2()
    return k2 * (k2 + 2.0)


class Regime(str, enum.Enum):
    EXTREMAL = "extremal"
    TWO_PIECE = "two_piece"
    THREE_PIECE = "three_piece"


@dataclass(frozen=True)
class CaseClassification:
    regime: Regime
    junctions: tuple[float, ...]
    m: float


def classify(m: float) -> CaseClassification:
    if not m > 0:
        raise ValueError(f"m must be positive, got {m}")
    k1, k2 = solve_k1(), solve_k2()
    if m < k1:
        return CaseClassification(Regime.EXTREMAL, (), m)
    if m <= k2 * (k2 + 2.0):
        return CaseClassification(Regime.TWO_PIECE, (np.sqrt(m + 1.0) - 1.0,), m)
    return CaseClassification(Regime.THREE_PIECE, (k2, (m + 1.0) / (k2 + 1.0) - 1.0), m)


# closed forms; every piece has affine scalar curvature slope * tau + intercept

def extremal_values(m: float, tau) -> np.ndarray:
    t = _arr(tau)
    q = m * m + 6 * m + 6
    bracket = t**2 * (2 * m + 2) + t * (-m * m + 4 * m + 6) + q
    return 2 * t * (m - t) / (m * q * (1 + t)) * bracket


def extremal_curvature(m: float) -> tuple[float, float]:
    """Affine S of the formal extremal solution on [0, m], positive or not."""
    q = m * (m * m + 6 * m + 6)
    return 24 * (m + 1) / q, -(18 * m * m + 12 * m - 12) / q


def phi1_values(c: float, tau) -> np.ndarray:
    t = _arr(tau)
    q = c * c + 6 * c + 6
    bracket = t * (-c * c + 2 * c + 3) + q
    return 2 * t * (c - t) ** 2 / (c * c * q * (1 + t)) * bracket


def phi1_curvature(c: float) -> tuple[float, float]:
    q = c * c + 6 * c + 6
    return 12 * (c * c - 2 * c - 3) / (c * c * q), -6 * (2 * c * c - c - 4) / (c * q)


def psi_values(d: float, tau) -> np.ndarray:
    t = _arr(tau)
    q = d * d + 6 * d + 6
    bracket = t * (2 * d * d + 4 * d + 3) - d**3 + 3 * d * d + 9 * d + 6
    return 2 * t * t * (d - t) / (d * d * q * (1 + t)) * bracket


def psi_curvature(d: float) -> tuple[float, float]:
    q = d * d + 6 * d + 6
    return 12 * (2 * d * d + 4 * d + 3) / (d * d * q), -6 * (3 * d * d + 5 * d + 2) / (d * q)


def phi2_values(c: float, d: float, tau) -> np.ndarray:
    t = _arr(tau)
    return (c + 1) * psi_values(d, (t - c) / (c + 1))


def phi2_curvature(c: float, d: float) -> tuple[float, float]:
    a, b = psi_curvature(d)
    return a / (c + 1) ** 2, (b - a * c / (c + 1)) / (c + 1)


def _check_piece_length(x: float, name: str) -> None:
    k2 = solve_k2()
    if not 0 < x <= k2 * (1 + 1e-12):
        raise RegimeError(f"{name}={x} outside (0, k2={k2:.6f}]: piece is not positive")


@dataclass(frozen=True)
class Piece:
    """One closed-form piece of a minimizer on [a, b]."""

    a: float
    b: float
    label: str
    phi: Callable[[np.ndarray], np.ndarray]
    curvature: Callable[[np.ndarray], np.ndarray]
    curvature_slope: Callable[[np.ndarray], np.ndarray]


def _affine(slope, intercept):
    return (lambda t: slope * _arr(t) + intercept,
            lambda t: np.full_like(_arr(t), slope))


def _zero_piece(a, b):
    return Piece(
        a, b, "zero",
        lambda t: np.zeros_like(_arr(t)),
        lambda t: -2.0 / (1.0 + _arr(t)),
        lambda t: 2.0 / (1.0 + _arr(t)) ** 2,
    )


@dataclass(frozen=True)
class Minimizer:
    """Closed-form minimizer for a given m, as a list of pieces."""

    case: CaseClassification
    pieces: tuple[Piece, ...]

    @property
    def m(self) -> float:
        return self.case.m

    @property
    def breaks(self) -> tuple[float, ...]:
        return tuple(p.b for p in self.pieces[:-1])

    def _eval(self, attr: str, tau) -> np.ndarray:
        t = np.atleast_1d(_arr(tau))
        out = np.empty_like(t)
        for k, p in enumerate(self.pieces):
            last = k == len(self.pieces) - 1
            mask = (t >= p.a) if last else ((t >= p.a) & (t < p.b))
            out[mask] = getattr(p, attr)(t[mask])
        return out

    def phi(self, tau) -> np.ndarray:
        return np.maximum(self._eval("phi", tau), 0.0)

    def curvature(self, tau) -> np.ndarray:
        return self._eval("curvature", tau)

    def sample(self, grid: Grid, dtype=float) -> Profile:
        """Nodal profile; ``dtype=np.longdouble`` keeps high-order differences clean."""
        if abs(grid.m - self.m) > 1e-12 * self.m:
            raise ValueError(f"grid is for m={grid.m}, minimizer for m={self.m}")
        vals = self.phi(grid.nodes_as(dtype))
        vals[0] = vals[-1] = 0.0
        for b in self.breaks:
            vals[np.abs(grid.nodes - b) <= 1e-9 * grid.h] = 0.0
        kind = ProfileKind.REGULAR if not self.breaks else ProfileKind.SINGULAR_ALLOWED
        return Profile(grid, vals, kind, self.breaks)


def _extremal_piece(m):
    s, s1 = _affine(*extremal_curvature(m))
    return Piece(0.0, m, "extremal", lambda t: extremal_values(m, t), s, s1)


def _phi1_piece(c):
    s, s1 = _affine(*phi1_curvature(c))
    return Piece(0.0, c, "phi1", lambda t: phi1_values(c, t), s, s1)


def _phi2_piece(c, d, m):
    # (c + 1) d + c equals m up to round-off
    s, s1 = _affine(*phi2_curvature(c, d))
    return Piece(c, m, "phi2", lambda t: phi2_values(c, d, t), s, s1)


@cache
def closed_form_minimizer(m: float) -> Minimizer:
    case = classify(m)
    if case.regime is Regime.EXTREMAL:
        pieces = (_extremal_piece(m),)
    elif case.regime is Regime.TWO_PIECE:
        (c,) = case.junctions
        pieces = (_phi1_piece(c), _phi2_piece(c, c, m))
    else:
        k2, c = case.junctions
        pieces = (_phi1_piece(k2), _zero_piece(k2, c), _phi2_piece(c, k2, m))
    return Minimizer(case, pieces)


def extremal_profile(m: float, grid: Grid, dtype=float) -> Profile:
    k1 = solve_k1()
    if m >= k1:
        raise RegimeError(f"m={m} >= k1={k1:.6f}: extremal profile is not positive")
    return closed_form_minimizer(float(m)).sample(grid, dtype)


def piece_phi1(c: float, tau) -> np.ndarray:
    """Values of the left piece on [0, c] (double zero at c)."""
    _check_piece_length(c, "c")
    return phi1_values(c, tau)


def piece_phi2(c: float, d: float, tau) -> np.ndarray:
    """Values of the right piece on [c, (c+1) d + c] (double zero at c)."""
    _check_piece_length(d, "d")
    return phi2_values(c, d, tau)


def minimizer(m: float, grid: Grid, dtype=float) -> Profile:
    return closed_form_minimizer(float(m)).sample(grid, dtype)


@dataclass(frozen=True)
class OptimalityReport:
    phi_s_residual: float
    concavity_violation: float
    curvature_jump: float
    left_slope_residual: float
    right_slope_residual: float

    def passes(self, tol: float) -> bool:
        return max(self.phi_s_residual, self.concavity_violation) <= tol

    def as_dict(self) -> dict:
        return {
            "phi_s_residual": self.phi_s_residual,
            "concavity_violation": self.concavity_violation,
            "curvature_jump": self.curvature_jump,
            "left_slope_residual": self.left_slope_residual,
            "right_slope_residual": self.right_slope_residual,
        }


def check_optimality(phi: Profile) -> OptimalityReport:
    """Discrete residuals of phi S'' = 0 and of concavity of S.

    Concavity is checked inside every piece through S'' and across each
    break through the jump of S' between the nearest nodes on both sides.
    """
    grid = phi.grid
    sdd = curvature_second_derivative(phi).values
    residual = float(np.max(np.abs(phi.values * sdd)))
    violation = float(max(np.max(sdd), 0.0))
    jump = 0.0
    if phi.breaks:
        w = 1 / (1 + phi.tau)
        g = (1 + phi.tau) * phi.values
        pieces = segments(grid, phi.breaks)
        slopes, values = [], []
        for idx in pieces:
            g2 = piecewise_derivative(g[idx], _sub(grid, idx), 2) if np.any(g[idx]) else np.zeros(idx.size)
            g3 = piecewise_derivative(g[idx], _sub(grid, idx), 3) if np.any(g[idx]) else np.zeros(idx.size)
            ww = w[idx]
            ds = 2 * ww**2 - 0.5 * (g3 * ww - g2 * ww**2)
            sv = -2 * ww - 0.5 * ww * g2
            slopes.append((ds[0], ds[-1]))
            values.append((sv[0], sv[-1]))
        for k in range(len(pieces) - 1):
            violation = max(violation, float(slopes[k + 1][0] - slopes[k][1]))
            jump = max(jump, abs(values[k + 1][0] - values[k][1]))
    left, right = boundary_residuals(phi)
    return OptimalityReport(residual, violation, jump, left, right)


def _sub(grid: Grid, idx: np.ndarray) -> Grid:
    return Grid(grid.h * (idx.size - 1), idx.size)
