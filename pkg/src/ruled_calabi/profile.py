"""Momentum profiles on a uniform grid of the moment interval [0, m].

A profile stores nodal values of phi. Scalar curvature is

    S(phi) = -2/(1+tau) - [(1+tau) phi]'' / (2 (1+tau))

and all integrals over [0, m] use either d tau or the volume form
(1+tau) d tau. Profiles assembled from several closed-form pieces carry
their junction points in ``breaks``; derivatives are then taken
separately on each piece so the junction does not smear the stencils.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import integrate

from .stencils import derivative, slope_weights

DEFAULT_NODES = 2049


class ProfileError(ValueError):
    """A profile violates positivity or boundary conditions."""


class ProfileKind(str, enum.Enum):
    REGULAR = "regular"
    SINGULAR_ALLOWED = "singular"


class Weight(str, enum.Enum):
    PLAIN = "plain"
    ONE_PLUS_TAU = "one_plus_tau"


@dataclass(frozen=True)
class Grid:
    m: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.m) or self.m <= 0:
            raise ValueError(f"m must be positive, got {self.m}")
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got {self.n}")

    @cached_property
    def nodes(self) -> np.ndarray:
        tau = np.linspace(0.0, self.m, self.n)
        tau[-1] = self.m
        tau.setflags(write=False)
        return tau

    @property
    def h(self) -> float:
        return self.m / (self.n - 1)

    def nodes_as(self, dtype=float) -> np.ndarray:
        if np.dtype(dtype) != np.longdouble:
            return self.nodes
        tau = np.arange(self.n, dtype=np.longdouble) * (np.longdouble(self.m) / (self.n - 1))
        tau[-1] = np.longdouble(self.m)
        return tau


def make_grid(m: float, n: int = DEFAULT_NODES) -> Grid:
    return Grid(float(m), int(n))


def _frozen(values) -> np.ndarray:
    arr = np.array(values)
    if arr.dtype != np.longdouble:
        arr = arr.astype(float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    breaks: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.shape != (self.grid.n,):
            raise ValueError("values do not match the grid")


@dataclass(frozen=True, eq=False)
class Profile:
    grid: Grid
    values: np.ndarray
    kind: ProfileKind = ProfileKind.REGULAR
    breaks: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "breaks", tuple(sorted(float(b) for b in self.breaks)))
        if self.values.shape != (self.grid.n,):
            raise ValueError("values do not match the grid")

    @property
    def m(self) -> float:
        return self.grid.m

    @property
    def tau(self) -> np.ndarray:
        return self.grid.nodes_as(self.values.dtype)

    def validate(self, slope_tol: float | None = None) -> "Profile":
        """Raise ProfileError unless positivity and boundary conditions hold."""
        v = self.values
        if np.any(v < 0):
            raise ProfileError(f"negative value {v.min():.3e}")
        if v[0] != 0 or v[-1] != 0:
            raise ProfileError("profile must vanish at both endpoints")
        if self.kind is ProfileKind.REGULAR and np.any(v[1:-1] <= 0):
            raise ProfileError("regular profile vanishes in the interior")
        tol = 10 * self.grid.h**2 if slope_tol is None else slope_tol
        left, right = boundary_residuals(self)
        if abs(left) > tol or abs(right) > tol:
            raise ProfileError(
                f"boundary slopes off by {left:.3e}, {right:.3e} (tol {tol:.3e})"
            )
        return self


def segments(grid: Grid, breaks=()) -> list[np.ndarray]:
    """Node indices of each piece between consecutive breaks.

    A node lying on a break belongs to both neighbouring pieces.
    """
    tau = grid.nodes
    eps = 1e-9 * grid.h
    edges = [0.0, *[b for b in breaks if 0 < b < grid.m], grid.m]
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        idx = np.nonzero((tau >= a - eps) & (tau <= b + eps))[0]
        if idx.size:
            out.append(idx)
    return out


def piecewise_derivative(values, grid: Grid, order: int, breaks=(), accuracy: int = 2) -> np.ndarray:
    """Derivative taken piece by piece; shared break nodes get the mean."""
    f = np.asarray(values)
    if not breaks:
        return derivative(f, grid.h, order, accuracy)
    acc = np.zeros(grid.n, dtype=f.dtype)
    count = np.zeros(grid.n, dtype=f.dtype)
    for idx in segments(grid, breaks):
        piece = f[idx]
        if not np.any(piece):
            d = np.zeros(idx.size)
        else:
            d = derivative(piece, grid.h, order, accuracy)
        acc[idx] += d
        count[idx] += 1
    return acc / count


def _g_derivative(phi: Profile, order: int, accuracy: int) -> np.ndarray:
    g = (1 + phi.tau) * phi.values
    return piecewise_derivative(g, phi.grid, order, phi.breaks, accuracy)


def scalar_curvature(phi: Profile, accuracy: int = 2) -> ScalarField:
    """Nodal S(phi)."""
    w = 1 / (1 + phi.tau)
    s = -2 * w - w * _g_derivative(phi, 2, accuracy) / 2
    return ScalarField(phi.grid, s, phi.breaks)


def curvature_second_derivative(phi: Profile, accuracy: int = 2) -> ScalarField:
    """Nodal S(phi)'' expanded through derivatives of g = (1+tau) phi.

    Expanding avoids differencing S twice, whose one-sided end rows
    would otherwise spoil the second-order error.
    """
    w = 1 / (1 + phi.tau)
    g2 = _g_derivative(phi, 2, accuracy)
    g3 = _g_derivative(phi, 3, accuracy)
    g4 = _g_derivative(phi, 4, accuracy)
    sdd = -4 * w**3 - (g4 * w - 2 * g3 * w**2 + 2 * g2 * w**3) / 2
    return ScalarField(phi.grid, sdd, phi.breaks)


def _weight_values(grid: Grid, weight: Weight) -> np.ndarray:
    if Weight(weight) is Weight.ONE_PLUS_TAU:
        return 1.0 + grid.nodes
    return np.ones(grid.n)


def integrate_nodal(values, grid: Grid) -> float:
    """Composite Simpson for odd node counts, trapezoid otherwise."""
    y = np.asarray(values, dtype=float)
    if grid.n % 2 == 1:
        return float(integrate.simpson(y, dx=grid.h))
    return float(integrate.trapezoid(y, dx=grid.h))


def weighted_integral(f: ScalarField, weight: Weight = Weight.ONE_PLUS_TAU) -> float:
    return integrate_nodal(f.values * _weight_values(f.grid, weight), f.grid)


def volume(m: float) -> float:
    """Integral of (1+tau) over [0, m]."""
    return m + 0.5 * m * m


def average_scalar_curvature(m: float) -> float:
    """(1+tau) d tau average of S, the same for every profile."""
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    return 2.0 * (2.0 - m) / (m * (m + 2.0))


def h2_norm(phi: Profile, accuracy: int = 2) -> float:
    d1 = piecewise_derivative(phi.values, phi.grid, 1, phi.breaks, accuracy)
    d2 = piecewise_derivative(phi.values, phi.grid, 2, phi.breaks, accuracy)
    return float(np.sqrt(integrate_nodal(phi.values**2 + d1**2 + d2**2, phi.grid)))


def h2_distance(a: Profile, b: Profile, accuracy: int = 2) -> float:
    if a.grid != b.grid:
        raise ValueError("profiles live on different grids")
    breaks = tuple(sorted(set(a.breaks) | set(b.breaks)))
    diff = Profile(a.grid, a.values - b.values, ProfileKind.SINGULAR_ALLOWED, breaks)
    return h2_norm(diff, accuracy)


def l2_weighted_norm(f: ScalarField) -> float:
    return float(np.sqrt(weighted_integral(
        ScalarField(f.grid, f.values**2), Weight.ONE_PLUS_TAU)))


def boundary_slopes(phi: Profile) -> tuple[float, float]:
    """Second-order one-sided slopes at tau = 0 and tau = m."""
    wl, wr = slope_weights()
    v = phi.values
    h = phi.grid.h
    return float(wl @ v[:3] / h), float(wr @ v[-3:] / h)


def boundary_residuals(phi: Profile) -> tuple[float, float]:
    left, right = boundary_slopes(phi)
    return left - 2.0, right + 2.0


def from_function(func, grid: Grid, kind=ProfileKind.REGULAR, breaks=()) -> Profile:
    vals = np.asarray(func(grid.nodes), dtype=float)
    vals[0] = 0.0
    vals[-1] = 0.0
    return Profile(grid, vals, ProfileKind(kind), tuple(breaks))


# serialization

def write_csv(phi: Profile, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "phi"])
        for t, v in zip(phi.tau, phi.values):
            writer.writerow([repr(float(t)), repr(float(v))])


def read_csv(path, kind=ProfileKind.SINGULAR_ALLOWED) -> Profile:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:2] != ["tau", "phi"]:
            raise ValueError(f"{path}: expected header 'tau,phi'")
        rows = [(float(r["tau"]), float(r["phi"])) for r in reader]
    tau = np.array([r[0] for r in rows])
    grid = make_grid(tau[-1], len(rows))
    if not np.allclose(tau, grid.nodes, rtol=1e-12, atol=1e-12 * grid.m):
        raise ValueError(f"{path}: nodes are not uniform on [0, {tau[-1]}]")
    return Profile(grid, [r[1] for r in rows], ProfileKind(kind))


def to_json(phi: Profile) -> dict:
    return {
        "m": phi.m,
        "n": phi.grid.n,
        "values": [float(v) for v in phi.values],
        "kind": phi.kind.value,
        "breaks": list(phi.breaks),
    }


def from_json(data: dict) -> Profile:
    grid = make_grid(data["m"], data["n"])
    kind = ProfileKind(data.get("kind", ProfileKind.SINGULAR_ALLOWED.value))
    return Profile(grid, data["values"], kind, tuple(data.get("breaks", ())))


def write_json(phi: Profile, path) -> None:
    Path(path).write_text(json.dumps(to_json(phi)))


def read_json(path) -> Profile:
    return from_json(json.loads(Path(path).read_text()))
