"""Energy functionals on momentum profiles.

Cal(phi) = int (S(phi) - S(Phi))^2 (1+tau) d tau, with Phi the formal
extremal solution on [0, m] (affine S whether or not Phi is positive).
The modified Mabuchi functional M and the auxiliary functional F are
Lyapunov-type quantities for the Calabi flow; L is the flow's
dissipation rate.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .extremal import Minimizer, closed_form_minimizer, extremal_curvature
from .profile import (
    Profile,
    ScalarField,
    Weight,
    average_scalar_curvature,
    boundary_slopes,
    curvature_second_derivative,
    integrate_nodal,
    scalar_curvature,
    volume,
    weighted_integral,
)
from .quadrature import piecewise_gauss


def formal_extremal_curvature(phi: Profile) -> ScalarField:
    slope, intercept = extremal_curvature(phi.m)
    return ScalarField(phi.grid, slope * phi.grid.nodes + intercept)


def calabi_functional(phi: Profile, accuracy: int = 2) -> float:
    s = np.asarray(scalar_curvature(phi, accuracy).values, dtype=float)
    diff = s - formal_extremal_curvature(phi).values
    return weighted_integral(ScalarField(phi.grid, diff**2))


def calabi_alternate(phi: Profile, accuracy: int = 2) -> float:
    """Cal as int S(phi)^2 minus int S(Phi)^2, both against (1+tau) d tau."""
    s = np.asarray(scalar_curvature(phi, accuracy).values, dtype=float)
    big = formal_extremal_curvature(phi).values
    return weighted_integral(ScalarField(phi.grid, s**2)) - weighted_integral(
        ScalarField(phi.grid, big**2))


def l_functional(phi: Profile, accuracy: int = 2) -> float:
    """int (phi S(phi)'')^2 (1+tau) d tau."""
    v = np.asarray(phi.values * curvature_second_derivative(phi, accuracy).values, dtype=float)
    return weighted_integral(ScalarField(phi.grid, v**2))


def minimizer_calabi(m: float) -> float:
    """Cal of the closed-form minimizer, integrated piece by piece."""
    mz = closed_form_minimizer(float(m))
    a, b = extremal_curvature(mz.m)
    f = lambda t: (mz.curvature(t) - (a * t + b)) ** 2 * (1 + t)
    return piecewise_gauss(f, [0.0, *mz.breaks, mz.m])


def curvature_deviation_norm(mz: Minimizer) -> float:
    """||S(phi) - S_hat|| in L^2((1+tau) d tau) for a closed-form minimizer."""
    s_hat = average_scalar_curvature(mz.m)
    f = lambda t: (mz.curvature(t) - s_hat) ** 2 * (1 + t)
    return math.sqrt(piecewise_gauss(f, [0.0, *mz.breaks, mz.m]))


# log-singular integrals ---------------------------------------------------

def _log_abs_moment(a: float, b: float, z: float) -> float:
    """int_a^b log|tau - z| (1 + tau) d tau for z outside (a, b) or at an end."""

    def prim(u):
        # antiderivative in u = tau - z of log|u| (1 + z + u)
        if u == 0:
            return 0.0
        lu = math.log(abs(u))
        return (1 + z) * (u * lu - u) + 0.5 * u * u * lu - 0.25 * u * u

    return prim(b - z) - prim(a - z)


def _fill_removable(ratio: np.ndarray, bad: np.ndarray) -> np.ndarray:
    """Replace values at ``bad`` nodes by linear extrapolation from each side."""
    out = ratio.copy()
    n = ratio.size
    for i in np.nonzero(bad)[0]:
        guesses = []
        if i >= 2 and not bad[i - 1] and not bad[i - 2]:
            guesses.append(2 * ratio[i - 1] - ratio[i - 2])
        if i <= n - 3 and not bad[i + 1] and not bad[i + 2]:
            guesses.append(2 * ratio[i + 1] - ratio[i + 2])
        if not guesses:
            raise ValueError(f"cannot resolve removable singularity at node {i}")
        out[i] = sum(guesses) / len(guesses)
    return out


def log_integral(phi: Profile) -> float:
    """int log(phi) (1+tau) d tau, handling the zeros of phi analytically.

    First-order zeros at the ends and double zeros at isolated breaks are
    divided out; the remaining smooth ratio is integrated on the nodes.
    Returns -inf when phi vanishes on an interval.
    """
    v = np.asarray(phi.values, dtype=float)
    tau = phi.grid.nodes
    m = phi.m
    interior_zero = (v[1:-1] <= 0)
    on_break = np.zeros(phi.grid.n, dtype=bool)
    for b in phi.breaks:
        on_break |= np.abs(tau - b) <= 1e-9 * phi.grid.h
    if np.any(interior_zero & ~on_break[1:-1]):
        return -math.inf
    weight = tau * (m - tau)
    for b in phi.breaks:
        weight = weight * (tau - b) ** 2
    bad = weight == 0
    ratio = np.where(bad, 1.0, v / np.where(bad, 1.0, weight))
    left, right = boundary_slopes(phi)
    ratio[0] = left / (m * _prod_sq(0.0, phi.breaks))
    ratio[-1] = -right / (m * _prod_sq(m, phi.breaks))
    inner = bad.copy()
    inner[0] = inner[-1] = False
    if np.any(ratio[~inner] <= 0):
        return -math.inf
    ratio = _fill_removable(ratio, inner)
    smooth = integrate_nodal(np.log(ratio) * (1 + tau), phi.grid)
    singular = _log_abs_moment(0.0, m, 0.0) + _log_abs_moment(0.0, m, m)
    for b in phi.breaks:
        singular += 2 * (_log_abs_moment(0.0, b, b) + _log_abs_moment(b, m, b))
    return smooth + singular


def _prod_sq(t: float, breaks) -> float:
    out = 1.0
    for b in breaks:
        out *= (t - b) ** 2
    return out


def _profile_ratio(num: Profile, den: Profile) -> np.ndarray | None:
    """num / den on the nodes, with derivative ratios at the ends.

    None means den vanishes somewhere num does not: the ratio is infinite.
    """
    if num.grid != den.grid:
        raise ValueError("profiles live on different grids")
    a = np.asarray(num.values, dtype=float)
    b = np.asarray(den.values, dtype=float)
    inner = np.zeros(a.size, dtype=bool)
    inner[1:-1] = b[1:-1] <= 0
    if np.any(inner & (a > 0)):
        return None
    tau = num.grid.nodes
    for brk in den.breaks:
        # a double zero of den between nodes still makes num/den blow up
        if 0 < brk < num.m and np.interp(brk, tau, a) > 10 * num.grid.h**2:
            return None
    ratio = np.where(inner, 0.0, a / np.where(b > 0, b, 1.0))
    na, nb = boundary_slopes(num), boundary_slopes(den)
    ratio[0] = na[0] / nb[0]
    ratio[-1] = na[1] / nb[1]
    if np.any(inner):
        ratio = _fill_removable(ratio, inner)
    return ratio


def mabuchi_modified(phi: Profile, psi_min: Profile) -> float:
    """int (Psi/phi + log phi) (1+tau) d tau with Psi the minimizer."""
    ratio = _profile_ratio(psi_min, phi)
    if ratio is None:
        return math.inf
    log_part = log_integral(Profile(phi.grid, phi.values, phi.kind, phi.breaks))
    return integrate_nodal(ratio * (1 + phi.grid.nodes), phi.grid) + log_part


def f_functional(phi: Profile, theta: Profile) -> float:
    """int (Theta/phi - log(Theta/phi)) d tau."""
    ratio = _profile_ratio(theta, phi)
    if ratio is None or np.any(ratio <= 0):
        return math.inf
    return integrate_nodal(ratio - np.log(ratio), phi.grid)


@dataclass(frozen=True)
class EnergyReport:
    calabi: float
    mabuchi: float
    f_functional: float
    l_functional: float

    def as_dict(self) -> dict:
        return asdict(self)


def energy_report(phi: Profile, psi_min: Profile | None = None,
                  theta: Profile | None = None) -> EnergyReport:
    """All four functionals; Psi defaults to the minimizer, Theta to the parabola."""
    from .extremal import minimizer
    from .flow import default_initial

    psi_min = minimizer(phi.m, phi.grid) if psi_min is None else psi_min
    theta = default_initial(phi.m, phi.grid) if theta is None else theta
    return EnergyReport(
        calabi=calabi_functional(phi),
        mabuchi=mabuchi_modified(phi, psi_min),
        f_functional=f_functional(phi, theta),
        l_functional=l_functional(phi),
    )


def total_curvature(phi: Profile) -> float:
    """int S (1+tau) d tau; equals S_hat times the volume for every profile."""
    return weighted_integral(scalar_curvature(phi), Weight.ONE_PLUS_TAU)


__all__ = [
    "EnergyReport",
    "calabi_alternate",
    "calabi_functional",
    "curvature_deviation_norm",
    "energy_report",
    "f_functional",
    "formal_extremal_curvature",
    "l_functional",
    "log_integral",
    "mabuchi_modified",
    "minimizer_calabi",
    "total_curvature",
    "volume",
]
