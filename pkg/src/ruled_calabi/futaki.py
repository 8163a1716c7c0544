"""Futaki invariants of convex functions on [0, m] and the lower bound they give.

A convex piecewise-linear h on [0, m] defines a test-configuration with

    F(h) = h(0) + (1+m) h(m) - 2 int h d tau - S_hat int h (1+tau) d tau,
    ||h||^2 = int (h - h_hat)^2 (1+tau) d tau,

and every such h bounds the Calabi functional from below through
||S - S_hat|| >= -F(h) / ||h||.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .calabi import curvature_deviation_norm
from .extremal import Minimizer
from .profile import (
    ScalarField,
    average_scalar_curvature,
    integrate_nodal,
    l2_weighted_norm,
    scalar_curvature,
    volume,
)
from .quadrature import piecewise_gauss


class ConvexityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PiecewiseLinearConvex:
    """Convex PL function given by breakpoints (0 = b_0 < ... < b_k = m) and values."""

    breakpoints: np.ndarray
    values: np.ndarray
    tol: float = 1e-9

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float)
        v = np.array(self.values, dtype=float)
        if b.ndim != 1 or b.shape != v.shape or b.size < 2:
            raise ValueError("need matching 1-d breakpoints and values, at least two")
        if b[0] != 0 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must start at 0 and increase strictly")
        slopes = np.diff(v) / np.diff(b)
        scale = max(1.0, float(np.max(np.abs(slopes))))
        if np.any(np.diff(slopes) < -self.tol * scale):
            raise ConvexityError(f"slopes decrease by {-np.diff(slopes).max():.3e}")
        b.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    @property
    def kinks(self) -> np.ndarray:
        """Interior breakpoints where the slope actually changes."""
        jumps = np.diff(self.slopes)
        scale = max(1.0, float(np.max(np.abs(self.slopes))))
        return self.breakpoints[1:-1][np.abs(jumps) > self.tol * scale]

    def __call__(self, tau) -> np.ndarray:
        return np.interp(tau, self.breakpoints, self.values)

    def _segment_simpson(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        # exact for integrands of degree <= 3 on each segment
        a, b = self.breakpoints[:-1], self.breakpoints[1:]
        mid = 0.5 * (a + b)
        return float(np.sum((b - a) / 6 * (f(a) + 4 * f(mid) + f(b))))

    def integral(self) -> float:
        return float(np.sum(np.diff(self.breakpoints) * (self.values[1:] + self.values[:-1]) / 2))

    def weighted_integral(self) -> float:
        return self._segment_simpson(lambda t: self(t) * (1 + t))

    def weighted_mean(self) -> float:
        return self.weighted_integral() / volume(self.m)

    def norm(self) -> float:
        mean = self.weighted_mean()
        return math.sqrt(max(self._segment_simpson(lambda t: (self(t) - mean) ** 2 * (1 + t)), 0.0))

    def scaled(self, a: float, shift: float = 0.0) -> "PiecewiseLinearConvex":
        if a < 0:
            raise ValueError("negative scaling breaks convexity")
        return PiecewiseLinearConvex(self.breakpoints, a * self.values + shift, self.tol)

    def __add__(self, other: "PiecewiseLinearConvex") -> "PiecewiseLinearConvex":
        b = np.union1d(self.breakpoints, other.breakpoints)
        return PiecewiseLinearConvex(b, self(b) + other(b), max(self.tol, other.tol))


@dataclass(frozen=True)
class PiecewiseSmooth:
    """A function smooth between ``edges``, integrated by composite Gauss rules."""

    func: Callable[[np.ndarray], np.ndarray]
    edges: tuple[float, ...]

    @property
    def m(self) -> float:
        return self.edges[-1]

    def __call__(self, tau) -> np.ndarray:
        return self.func(np.asarray(tau, dtype=float))


def _moments(h, m: float) -> tuple[float, float, float, float]:
    """h(0), h(m), int h, int h (1+tau)."""
    if isinstance(h, PiecewiseLinearConvex):
        if abs(h.m - m) > 1e-12 * max(1.0, m):
            raise ValueError(f"h is defined on [0, {h.m}], not [0, {m}]")
        return float(h.values[0]), float(h.values[-1]), h.integral(), h.weighted_integral()
    if isinstance(h, ScalarField):
        v = np.asarray(h.values, dtype=float)
        tau = h.grid.nodes
        return (float(v[0]), float(v[-1]), integrate_nodal(v, h.grid),
                integrate_nodal(v * (1 + tau), h.grid))
    if isinstance(h, PiecewiseSmooth):
        f = h.func
        return (float(f(np.array([0.0]))[0]), float(f(np.array([m]))[0]),
                piecewise_gauss(f, h.edges), piecewise_gauss(lambda t: f(t) * (1 + t), h.edges))
    raise TypeError(f"cannot integrate {type(h).__name__}")


def futaki_invariant(h, m: float) -> float:
    h0, hm, plain, weighted = _moments(h, m)
    return h0 + (1 + m) * hm - 2 * plain - average_scalar_curvature(m) * weighted


def futaki_norm(h, m: float) -> float:
    if isinstance(h, PiecewiseLinearConvex):
        return h.norm()
    _, _, _, weighted = _moments(h, m)
    mean = weighted / volume(m)
    if isinstance(h, ScalarField):
        return l2_weighted_norm(ScalarField(h.grid, np.asarray(h.values, dtype=float) - mean))
    f = h.func
    return math.sqrt(piecewise_gauss(lambda t: (f(t) - mean) ** 2 * (1 + t), h.edges))


def _kinks_of(h) -> np.ndarray:
    if isinstance(h, PiecewiseLinearConvex):
        return h.kinks
    if isinstance(h, PiecewiseSmooth):
        return np.array(h.edges[1:-1])
    return np.array([])


def futaki_via_integral(h, phi) -> float:
    """int h (S(phi) - S_hat) (1+tau) d tau.

    Equals F(h) when h is linear wherever phi does not vanish identically;
    a warning is issued when that fails at one of h's kinks.
    """
    if isinstance(phi, Minimizer):
        m = phi.m
        s_hat = average_scalar_curvature(m)
        kinks = _kinks_of(h)
        if kinks.size and np.any(phi.phi(kinks) > 1e-12):
            warnings.warn("h bends where the profile is positive", stacklevel=2)
        edges = [0.0, *phi.breaks, *kinks, m]
        if isinstance(h, ScalarField):
            raise TypeError("pair a closed-form minimizer with a PL or piecewise-smooth h")
        return piecewise_gauss(lambda t: h(t) * (phi.curvature(t) - s_hat) * (1 + t), edges)
    m = phi.m
    s_hat = average_scalar_curvature(m)
    tau = phi.grid.nodes
    kinks = _kinks_of(h)
    vals = np.asarray(phi.values, dtype=float)
    if kinks.size and np.any(np.interp(kinks, tau, vals) > 10 * phi.grid.h ** 2 * max(1.0, vals.max())):
        warnings.warn("h bends where the profile is positive", stacklevel=2)
    hv = np.asarray(h.values if isinstance(h, ScalarField) else h(tau), dtype=float)
    s = np.asarray(scalar_curvature(phi).values, dtype=float)
    return integrate_nodal(hv * (s - s_hat) * (1 + tau), phi.grid)


def neg_curvature(phi) -> PiecewiseSmooth | ScalarField:
    """-S(phi), exact for a closed-form minimizer and nodal for a profile."""
    if isinstance(phi, Minimizer):
        return PiecewiseSmooth(lambda t: -phi.curvature(t), (0.0, *phi.breaks, phi.m))
    s = scalar_curvature(phi)
    return ScalarField(phi.grid, -np.asarray(s.values, dtype=float), phi.breaks)


def approximate_neg_S(phi, k: int, concavity_tol: float | None = None) -> PiecewiseLinearConvex:
    """PL interpolant of -S(phi) at k uniform breakpoints plus the profile's junctions."""
    if k < 2:
        raise ValueError("need at least two breakpoints")
    m = phi.m
    bps = np.union1d(np.linspace(0.0, m, k), [b for b in phi.breaks if 0 < b < m])
    if isinstance(phi, Minimizer):
        vals = -phi.curvature(bps)
        tol = 1e-9 if concavity_tol is None else concavity_tol
    else:
        tau = phi.grid.nodes
        s = np.asarray(scalar_curvature(phi).values, dtype=float)
        h = phi.grid.h
        tol = 10 * h**2 if concavity_tol is None else concavity_tol
        sdd = np.diff(s, 2) / h**2
        scale = max(1.0, float(np.max(np.abs(s))))
        if np.any(sdd > tol * scale / h**2 + tol):
            raise ConvexityError(f"S is not concave: second difference up to {sdd.max():.3e}")
        vals = -np.interp(bps, tau, s)
    return PiecewiseLinearConvex(bps, vals, tol)


@dataclass(frozen=True)
class SweepRow:
    k: int
    futaki: float
    norm: float
    ratio: float
    limit: float

    @property
    def slack(self) -> float:
        return self.limit - self.ratio

    def as_dict(self) -> dict:
        return {"k": self.k, "F": self.futaki, "norm": self.norm, "ratio": self.ratio,
                "limit": self.limit, "slack": self.slack}


def deviation_norm(phi) -> float:
    """||S(phi) - S_hat||, the value the sweep ratios approach."""
    if isinstance(phi, Minimizer):
        return curvature_deviation_norm(phi)
    s = np.asarray(scalar_curvature(phi).values, dtype=float)
    return l2_weighted_norm(ScalarField(phi.grid, s - average_scalar_curvature(phi.m)))


def lower_bound_sweep(phi, ks: Sequence[int]) -> list[SweepRow]:
    limit = deviation_norm(phi)
    rows = []
    for k in ks:
        h = approximate_neg_S(phi, int(k))
        f = futaki_invariant(h, phi.m)
        nrm = h.norm()
        rows.append(SweepRow(int(k), f, nrm, -f / nrm if nrm > 0 else 0.0, limit))
    return rows


def random_convex(m: float, rng: np.random.Generator, max_pieces: int = 12) -> PiecewiseLinearConvex:
    """Random convex PL function on [0, m] with a random number of pieces."""
    k = int(rng.integers(1, max_pieces + 1))
    inner = np.sort(rng.uniform(0, m, size=k - 1))
    bps = np.concatenate([[0.0], inner, [m]])
    bps = np.unique(bps)
    slopes = np.sort(rng.normal(0, 1, size=bps.size - 1)) * rng.exponential(1.0)
    start = rng.normal()
    vals = np.concatenate([[start], start + np.cumsum(slopes * np.diff(bps))])
    return PiecewiseLinearConvex(bps, vals)
