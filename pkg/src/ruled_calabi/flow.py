"""Calabi flow of momentum profiles, d phi/dt = phi^2 S(phi)''.

The default step freezes the mobility phi^2 at the current profile and
treats the linear fourth-order part implicitly, which costs one banded
solve per step. The two rows at each end carry the boundary conditions
phi = 0 and phi' = +-2 in place of the equation, which degenerates
there anyway. Steps that raise the Calabi functional are rejected and
retried with half the step size.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy import linalg, sparse

from .calabi import calabi_functional, f_functional, l_functional, mabuchi_modified
from .extremal import minimizer
from .profile import Grid, Profile, ProfileKind, h2_distance, write_csv
from .stencils import derivative_matrix, slope_weights

logger = logging.getLogger(__name__)

FLOW_ACCURACY = 4


class FlowStagnation(RuntimeError):
    """The step size fell below dt_min without an acceptable step."""

    def __init__(self, message: str, state: "FlowState"):
        super().__init__(message)
        self.state = state


class Scheme(str, enum.Enum):
    SEMI_IMPLICIT = "semi_implicit"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class FlowConfig:
    dt_init: float = 1e-4
    dt_min: float = 1e-14
    dt_max: float = 1e4
    accept_tol: float = 1e-10
    conv_tol: float = 1e-4
    t_max: float = 1e5
    scheme: Scheme = Scheme.SEMI_IMPLICIT
    accuracy: int = FLOW_ACCURACY
    grow_after: int = 5
    grow_factor: float = 1.2
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not 0 < self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if self.accept_tol < 0 or self.conv_tol <= 0 or self.t_max <= 0:
            raise ValueError("tolerances and t_max must be positive")
        if self.accuracy not in (2, 4, 6):
            raise ValueError("accuracy must be 2, 4 or 6")
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["scheme"] = self.scheme.value
        return d


@dataclass(frozen=True)
class HistoryEntry:
    t: float
    calabi: float
    mabuchi: float
    l_functional: float
    f_functional: float
    h2_dist_to_minimizer: float
    dt: float = 0.0
    clamp: float = 0.0


@dataclass(frozen=True, eq=False)
class FlowState:
    profile: Profile
    t: float = 0.0
    dt: float = 1e-4
    history: tuple[HistoryEntry, ...] = ()
    calabi: float = math.nan
    last_dt: float = 0.0
    clamp: float = 0.0
    streak: int = 0
    rejects: int = 0


def default_initial(m: float, grid: Grid) -> Profile:
    """The parabola 2 tau (m - tau) / m."""
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    tau = grid.nodes
    vals = 2 * tau * (m - tau) / m
    vals[0] = vals[-1] = 0.0
    return Profile(grid, vals, ProfileKind.REGULAR)


class CurvatureOperator:
    """The affine map phi -> S(phi)'' = D phi + c on the equation rows."""

    def __init__(self, grid: Grid, accuracy: int = FLOW_ACCURACY):
        n, h = grid.n, grid.h
        if n < 2 * (accuracy + 4):
            raise ValueError(f"flow at accuracy {accuracy} needs more than {n} nodes")
        self.grid = grid
        self.accuracy = accuracy
        tau = grid.nodes
        w = 1 / (1 + tau)
        dm = lambda k: derivative_matrix(n, h, k, accuracy)
        # S'' = -4 w^3 - (w g'''' - 2 w^2 g''' + 2 w^3 g'') / 2 with g = (1+tau) phi
        big = -0.5 * (sparse.diags(w) @ dm(4) - 2 * sparse.diags(w**2) @ dm(3)
                      + 2 * sparse.diags(w**3) @ dm(2)) @ sparse.diags(1 + tau)
        big = big.tocsr()
        self.matrix = big
        self.const = -4 * w**3
        self.rows = np.arange(2, n - 2)
        coo = big[2 : n - 2].tocoo()
        self._r = coo.row + 2
        self._c = coo.col
        self._v = coo.data
        wl, wr = slope_weights(accuracy)
        self.wl, self.wr = wl, wr
        k = wl.size
        self.lower = max(int(np.max(self._r - self._c)), k - 2, 2)
        self.upper = max(int(np.max(self._c - self._r)), k - 2, 2)

    def apply(self, phi: np.ndarray) -> np.ndarray:
        """S'' on the equation rows, zero on the boundary rows."""
        out = np.zeros(phi.size)
        out[2:-2] = (self.matrix @ phi)[2:-2] + self.const[2:-2]
        return out

    def _banded(self, coef: np.ndarray, diag: float) -> np.ndarray:
        """Band storage of diag * I + coef * D on the equation rows plus the boundary rows."""
        n = self.grid.n
        h = self.grid.h
        l, u = self.lower, self.upper
        ab = np.zeros((l + u + 1, n))
        np.add.at(ab, (u + self._r - self._c, self._c), coef[self._r] * self._v)
        ab[u, 2 : n - 2] += diag
        k = self.wl.size
        ab[u, 0] = 1.0
        for j in range(k):
            ab[u + 1 - j, j] = self.wl[j] / h
        for j in range(k):
            col = n - k + j
            ab[u + (n - 2) - col, col] = self.wr[j] / h
        ab[u, n - 1] = 1.0
        return ab

    def implicit_solve(self, phi: np.ndarray, dt: float) -> np.ndarray:
        """Solve (I - dt mu D) x = phi + dt mu c with mu = phi^2 frozen."""
        mu = phi**2
        rhs = phi + dt * mu * self.const
        return self._solve(self._banded(-dt * mu, 1.0), rhs)

    def _solve(self, ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        rhs[0], rhs[1], rhs[-2], rhs[-1] = 0.0, 2.0, -2.0, 0.0
        return linalg.solve_banded((self.lower, self.upper), ab, rhs, check_finite=False)

    def equilibrium(self) -> np.ndarray:
        """Profile with S'' = 0 on every equation row (the discrete extremal solution)."""
        return self._solve(self._banded(np.ones(self.grid.n), 0.0), -self.const.copy())

    def explicit_step(self, phi: np.ndarray, dt: float) -> np.ndarray:
        return phi + dt * phi**2 * self.apply(phi)


def impose_boundary(phi: np.ndarray, h: float, accuracy: int = FLOW_ACCURACY) -> np.ndarray:
    """Zero end values and exact one-sided slopes +2 / -2."""
    out = phi.copy()
    wl, wr = slope_weights(accuracy)
    out[0] = out[-1] = 0.0
    k = wl.size
    out[1] = (2.0 * h - wl[2:] @ out[2:k]) / wl[1]
    out[-2] = (-2.0 * h - wr[:-2] @ out[-k:-2]) / wr[-2]
    return out


_operators: dict[tuple[Grid, int], CurvatureOperator] = {}


def operator_for(grid: Grid, accuracy: int = FLOW_ACCURACY) -> CurvatureOperator:
    key = (grid, accuracy)
    if key not in _operators:
        _operators[key] = CurvatureOperator(grid, accuracy)
    return _operators[key]


class Monitor:
    """Evaluates the functionals recorded along a run."""

    def __init__(self, grid: Grid, accuracy: int = FLOW_ACCURACY, theta: Profile | None = None):
        self.grid = grid
        self.accuracy = accuracy
        self.psi = minimizer(grid.m, grid)
        self.theta = default_initial(grid.m, grid) if theta is None else theta

    def entry(self, state: FlowState) -> HistoryEntry:
        phi = state.profile
        cal = state.calabi
        if not math.isfinite(cal):
            cal = calabi_functional(phi, self.accuracy)
        return HistoryEntry(
            t=state.t,
            calabi=cal,
            mabuchi=mabuchi_modified(phi, self.psi),
            l_functional=l_functional(phi, self.accuracy),
            f_functional=f_functional(phi, self.theta),
            h2_dist_to_minimizer=h2_distance(phi, self.psi, self.accuracy),
            dt=state.last_dt,
            clamp=state.clamp,
        )


def initial_state(profile: Profile, config: FlowConfig) -> FlowState:
    """Start a run from ``profile``.

    The flow differentiates across junctions like anywhere else, so any
    breaks are dropped, and the end slopes are made exact for its stencils.
    """
    vals = impose_boundary(np.asarray(profile.values, dtype=float), profile.grid.h, config.accuracy)
    start = Profile(profile.grid, vals, profile.kind)
    return FlowState(start, 0.0, config.dt_init,
                     calabi=calabi_functional(start, config.accuracy))


def trial(state: FlowState, config: FlowConfig, dt: float):
    """Candidate profile after a step of size ``dt``, its Cal and the clamp size."""
    grid = state.profile.grid
    op = operator_for(grid, config.accuracy)
    phi = np.asarray(state.profile.values, dtype=float)
    if config.scheme is Scheme.SEMI_IMPLICIT:
        new = op.implicit_solve(phi, dt)
    else:
        new = op.explicit_step(phi, dt)
    new = impose_boundary(new, grid.h, config.accuracy)
    clamp = float(max(0.0, -new[1:-1].min()))
    new = np.maximum(new, 0.0)
    kind = ProfileKind.SINGULAR_ALLOWED if np.any(new[1:-1] == 0) else ProfileKind.REGULAR
    cand = Profile(grid, new, kind)
    return cand, calabi_functional(cand, config.accuracy), clamp


def step(state: FlowState, config: FlowConfig) -> FlowState:
    """Advance by one accepted step, halving dt on each rejection."""
    dt = state.dt
    cal0 = state.calabi
    if not math.isfinite(cal0):
        cal0 = calabi_functional(state.profile, config.accuracy)
    rejects = 0
    while True:
        if dt < config.dt_min:
            raise FlowStagnation(
                f"dt fell below {config.dt_min:g} at t={state.t:.6g} (Cal={cal0:.6e})",
                replace(state, dt=dt, rejects=state.rejects + rejects),
            )
        cand, cal1, clamp = trial(state, config, dt)
        if math.isfinite(cal1) and cal1 <= cal0 + config.accept_tol * max(1.0, cal0):
            break
        rejects += 1
        dt *= 0.5
    streak = 0 if rejects else state.streak + 1
    next_dt = dt
    if streak >= config.grow_after:
        next_dt = min(dt * config.grow_factor, config.dt_max)
        streak = 0
    if clamp > 1e-12:
        logger.warning("clamped negative undershoot %.3e at t=%.6g", clamp, state.t + dt)
    return FlowState(
        profile=cand,
        t=state.t + dt,
        dt=next_dt,
        history=state.history,
        calabi=cal1,
        last_dt=dt,
        clamp=clamp,
        streak=streak,
        rejects=state.rejects + rejects,
    )


@dataclass
class FlowResult:
    state: FlowState
    converged: bool
    status: str
    steps: int

    @property
    def history(self) -> tuple[HistoryEntry, ...]:
        return self.state.history

    def summary(self) -> dict:
        last = self.history[-1] if self.history else None
        return {
            "converged": self.converged,
            "status": self.status,
            "t_final": self.state.t,
            "steps": self.steps,
            "rejected_steps": self.state.rejects,
            "residuals": None if last is None else {
                "h2_dist_to_minimizer": last.h2_dist_to_minimizer,
                "calabi": last.calabi,
                "l_functional": last.l_functional,
                "max_clamp": max(e.clamp for e in self.history),
            },
        }


TRAJECTORY_FIELDS = ("t", "calabi", "mabuchi", "l", "f", "h2dist")


def _row(e: HistoryEntry) -> list:
    return [e.t, e.calabi, e.mabuchi, e.l_functional, e.f_functional, e.h2_dist_to_minimizer]


def run(m: float, initial: Profile, config: FlowConfig = FlowConfig(),
        out_dir=None, snapshot_ratio: float = 2.0, first_snapshot: float = 1e-3) -> FlowResult:
    """Integrate until the H^2 distance to the minimizer drops below conv_tol.

    With ``out_dir`` the trajectory, geometric-time snapshots and a
    status file are written there.
    """
    if abs(initial.m - m) > 1e-12 * max(1.0, m):
        raise ValueError(f"initial profile lives on [0, {initial.m}], not [0, {m}]")
    monitor = Monitor(initial.grid, config.accuracy)
    state = initial_state(initial, config)
    history = [monitor.entry(state)]
    out = None if out_dir is None else Path(out_dir)
    next_snap = first_snapshot
    if out is not None:
        (out / "snapshots").mkdir(parents=True, exist_ok=True)
        write_csv(initial, out / "snapshots" / "profile_t0.csv")
    steps = 0
    status = "t_max reached"
    converged = history[-1].h2_dist_to_minimizer < config.conv_tol
    try:
        while not converged and state.t < config.t_max and steps < config.max_steps:
            state = step(replace(state, dt=min(state.dt, config.t_max - state.t + config.dt_min)), config)
            steps += 1
            history.append(monitor.entry(state))
            converged = history[-1].h2_dist_to_minimizer < config.conv_tol
            if out is not None and state.t >= next_snap:
                write_csv(state.profile, out / "snapshots" / f"profile_t{state.t:.6g}.csv")
                while next_snap <= state.t:
                    next_snap *= snapshot_ratio
        if converged:
            status = "converged"
        elif steps >= config.max_steps:
            status = "max_steps reached"
    except FlowStagnation as exc:
        status = f"stagnated: {exc}"
        state = exc.state
    state = replace(state, history=tuple(history))
    result = FlowResult(state, converged, status, steps)
    if out is not None:
        write_trajectory(history, out / "trajectory.csv")
        write_csv(state.profile, out / "snapshots" / "profile_final.csv")
        (out / "status.json").write_text(json.dumps(result.summary(), indent=2))
    return result


def write_trajectory(history, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_FIELDS)
        for e in history:
            writer.writerow([repr(float(x)) for x in _row(e)])
