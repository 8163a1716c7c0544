"""Acceptance criteria 1-10.

Each check returns (passed, detail, seconds). Under pytest one PASS/FAIL
line per criterion is printed in the terminal summary; run this file
directly to print the same lines without pytest.
"""

from __future__ import annotations

import math
import sys
import time
import timeit
from functools import cache

import numpy as np
import pytest

from ruled_calabi.calabi import calabi_functional, l_functional, minimizer_calabi
from ruled_calabi.extremal import (
    Regime,
    check_optimality,
    classify,
    closed_form_minimizer,
    minimizer,
    quartic,
    solve_k1,
    solve_k2,
)
from ruled_calabi.flow import FlowConfig, default_initial, initial_state, run, step
from ruled_calabi.futaki import (
    PiecewiseLinearConvex,
    approximate_neg_S,
    deviation_norm,
    futaki_invariant,
    futaki_via_integral,
    lower_bound_sweep,
    random_convex,
)
from ruled_calabi.profile import (
    Profile,
    Weight,
    make_grid,
    scalar_curvature,
    volume,
    weighted_integral,
)

RESULTS: dict[int, tuple[bool, str, float]] = {}
TITLES = {
    1: "constants k1, k2",
    2: "regime table",
    3: "minimizer optimality O(h^2)",
    4: "S_hat profile independence",
    5: "Futaki identities and lower bound",
    6: "lower-bound saturation",
    7: "flow dissipation identity",
    8: "flow convergence m=10",
    9: "flow convergence m=24",
    10: "Mabuchi monotonicity and growth",
}
LONG_T = 1e5


def timed(fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    return bool(ok), detail, time.perf_counter() - t0


@cache
def flow_run(m: float, n: int, t_max: float):
    return run(m, default_initial(m, make_grid(m, n)), FlowConfig(t_max=t_max))


def crit1():
    def cold():
        solve_k1.cache_clear()
        solve_k2.cache_clear()
        return solve_k1(), solve_k2()

    # best of several cold solves, so a stray GC pause does not count
    ms = min(timeit.repeat(cold, number=1, repeat=7)) * 1e3
    k1, k2 = cold()
    res = abs(quartic(k1))
    ok = (abs(k1 - 18.889) < 1e-3 and res < 1e-9 and abs(k2 - 5.0275) < 1e-3
          and abs(k2 * (k2 + 2) - 35.33) < 0.01 and ms < 1.0)
    return ok, f"k1={k1:.6f} k2={k2:.6f} k2(k2+2)={k2 * (k2 + 2):.4f} residual={res:.1e} {ms:.2f}ms"


def crit2():
    k2 = solve_k2()
    table = {
        17.0: (Regime.EXTREMAL, ()),
        18.889: (Regime.EXTREMAL, ()),
        24.0: (Regime.TWO_PIECE, (math.sqrt(25.0) - 1,)),
        35.33: (Regime.TWO_PIECE, (math.sqrt(36.33) - 1,)),
        40.0: (Regime.THREE_PIECE, (k2, 41.0 / (k2 + 1) - 1)),
        53.2: (Regime.THREE_PIECE, (k2, 54.2 / (k2 + 1) - 1)),
    }
    t0 = time.perf_counter()
    got = {m: classify(m) for m in table}
    ms = (time.perf_counter() - t0) * 1e3
    bad = [m for m, (reg, junc) in table.items()
           if got[m].regime is not reg or len(got[m].junctions) != len(junc)
           or any(abs(a - b) > 1e-9 for a, b in zip(got[m].junctions, junc))]
    return not bad and ms < 1.0, f"mismatches={bad} {ms:.3f}ms"


def crit3():
    ratios = []
    for m in (17.0, 24.0, 53.2):
        coarse, fine = (check_optimality(minimizer(m, make_grid(m, n), np.longdouble)) for n in (1025, 2049))
        ratios.append((m, coarse.phi_s_residual / fine.phi_s_residual,
                       coarse.concavity_violation / fine.concavity_violation))
    ok = all(3.5 <= a <= 4.5 and 3.5 <= b <= 4.5 for _, a, b in ratios)
    return ok, " ".join(f"m={m}: {a:.3f}/{b:.3f}" for m, a, b in ratios)


def random_profile(m, grid, rng):
    """Parabola plus a random polynomial bump that keeps the end conditions and positivity."""
    t = grid.nodes / m
    coef = rng.uniform(-1, 1, size=int(rng.integers(1, 5)))
    bump = np.polynomial.polynomial.polyval(t, coef) * (t * (1 - t)) ** 2
    base = 2 * m * t * (1 - t)
    scale = 0.9 * np.min(base[1:-1] / np.maximum(np.abs(bump[1:-1]), 1e-300))
    amp = rng.uniform(-1, 1) * min(scale, m)
    vals = base + amp * bump
    vals[0] = vals[-1] = 0.0
    return Profile(grid, vals)


def crit4():
    m = 10.0
    grid = make_grid(m, 2049)
    rng = np.random.default_rng(4)
    target = 2 * (2 - m) / (m * (m + 2))
    errs = []
    for _ in range(20):
        phi = random_profile(m, grid, rng).validate()
        s = scalar_curvature(phi)
        errs.append(abs(weighted_integral(s, Weight.ONE_PLUS_TAU) / volume(m) - target))
    return max(errs) < 1e-6, f"max |avg S - S_hat| = {max(errs):.2e} over 20 profiles"


def crit5():
    worst_const = max(abs(futaki_invariant(PiecewiseLinearConvex([0.0, m], [c, c]), m))
                      for m in (1.0, 10.0, 24.0, 40.0) for c in (-3.0, 1.0, 7.5))
    worst_via = 0.0
    for m in (17.0, 24.0, 40.0):
        mz = closed_form_minimizer(m)
        hs = [approximate_neg_S(mz, k) for k in (10, 50, 200)]
        hs.append(PiecewiseLinearConvex([0.0, m], [1.0, -2.0]))
        if mz.breaks:
            kink = mz.breaks[0] if len(mz.breaks) == 1 else 0.5 * sum(mz.breaks)
            hs.append(PiecewiseLinearConvex([0.0, kink, m], [0.0, 0.0, m - kink]))
        for h in hs:
            worst_via = max(worst_via, abs(futaki_via_integral(h, mz) - futaki_invariant(h, m)))
    m = 24.0
    bound = deviation_norm(closed_form_minimizer(m))
    rng = np.random.default_rng(5)
    worst_ratio = -math.inf
    for _ in range(1000):
        h = random_convex(m, rng)
        nrm = h.norm()
        if nrm > 1e-12:
            worst_ratio = max(worst_ratio, -futaki_invariant(h, m) / nrm)
    ok = worst_const < 1e-12 and worst_via < 1e-6 and worst_ratio <= bound + 1e-6
    return ok, (f"|F(const)|<={worst_const:.1e} |via-F|<={worst_via:.1e} "
                f"max -F/||h||={worst_ratio:.4f} <= {bound:.4f}")


def crit6():
    parts, ok = [], True
    for m in (24.0, 40.0):
        rows = lower_bound_sweep(closed_form_minimizer(m), [10, 50, 200])
        ratios = [r.ratio for r in rows]
        limit = rows[-1].limit
        mono = all(b >= a - 1e-12 for a, b in zip(ratios, ratios[1:])) and ratios[-1] <= limit + 1e-12
        close = abs(ratios[-1] - limit) <= 1e-2 * limit
        ok &= mono and close
        parts.append(f"m={m}: " + ", ".join(f"{r:.9f}" for r in ratios) + f" -> {limit:.9f}")
    return ok, "; ".join(parts)


def crit7():
    grid = make_grid(10.0, 257)
    cfg = FlowConfig(dt_init=1e-4, dt_max=1e-4)
    state = initial_state(default_initial(10.0, grid), cfg)
    worst = 0.0
    for _ in range(50):
        rate = l_functional(state.profile, cfg.accuracy)
        before = state.calabi
        state = step(state, cfg)
        worst = max(worst, abs((state.calabi - before) / state.last_dt + rate) / rate)
    return worst < 0.05, f"max relative defect {worst:.2e} over 50 steps at dt=1e-4"


def _cal_monotone(res, tol):
    cal = [e.calabi for e in res.history]
    return max(b - a - tol * max(1.0, a) for a, b in zip(cal, cal[1:]))


def crit8():
    res = flow_run(10.0, 513, LONG_T)
    dist = res.history[-1].h2_dist_to_minimizer
    excess = _cal_monotone(res, FlowConfig().accept_tol)
    ok = res.converged and dist < 1e-4 and excess <= 0
    return ok, f"{res.status} t={res.state.t:.4g} H2 dist={dist:.2e} max Cal excess={excess:.1e}"


def crit9():
    m = 24.0
    res = flow_run(m, 513, LONG_T)
    phi = res.state.profile
    tau = phi.grid.nodes
    inner = (tau > 1.0) & (tau < m - 1.0)
    i = np.flatnonzero(inner)[np.argmin(phi.values[inner])]
    cal = res.history[-1].calabi
    ref = calabi_functional(minimizer(m, phi.grid))
    ok = (abs(tau[i] - 4.0) <= 0.05 and phi.values[i] < 1e-3 and abs(cal - ref) <= 1e-2 * ref
          and _cal_monotone(res, FlowConfig().accept_tol) <= 0)
    return ok, (f"t={res.state.t:.3g} min at tau={tau[i]:.4f} value={phi.values[i]:.2e} "
                f"Cal={cal:.6f} vs {ref:.6f} (exact {minimizer_calabi(m):.6f})")


def _decade_slopes(t, y, xform):
    out = []
    for lo in 10.0 ** np.arange(1, int(np.log10(t[-1]))):
        sel = (t >= lo) & (t <= 10 * lo)
        if sel.sum() > 3:
            out.append(np.polyfit(xform(t[sel]), y[sel], 1)[0])
    return out


def crit10():
    notes, ok = [], True
    for m in (10.0, 24.0):
        mab = np.array([e.mabuchi for e in flow_run(m, 513, LONG_T).history])
        rise = float(np.max(np.diff(mab) / np.maximum(1.0, np.abs(mab[:-1]))))
        ok &= rise <= 1e-10
        notes.append(f"m={m:g} max dM/|M|={rise:.1e}")
    res = flow_run(40.0, 513, LONG_T)
    t = np.array([e.t for e in res.history])
    mab = np.array([e.mabuchi for e in res.history])
    ff = np.array([e.f_functional for e in res.history])
    rise = float(np.max(np.diff(mab) / np.maximum(1.0, np.abs(mab[:-1]))))
    ok &= rise <= 1e-10
    # fit on [0, T/10], then check the bounds hold on the remaining decade
    early = t <= t[-1] / 10
    late = ~early
    c = max(_decade_slopes(t[early], -mab[early], np.log1p)[-1], 0.0)
    d = float(np.max(-(mab[early] + c * np.log1p(t[early]))))
    m_gap = float(np.min(mab[late] + c * np.log1p(t[late]) + d))
    pos = early & (t >= 1.0)
    c_prime = float(np.max((ff[pos] - ff[0]) / t[pos]))
    f_gap = float(np.min(ff[0] + c_prime * t[late] - ff[late]))
    slopes = _decade_slopes(t, -mab, np.log1p)
    growth = _decade_slopes(t[t > 0], np.log(np.maximum(ff[t > 0] - ff[0], 1e-300)), np.log)
    sublog = all(b <= a * 1.05 for a, b in zip(slopes, slopes[1:]))
    sublinear = max(growth) <= 1.05
    ok &= m_gap >= 0 and f_gap >= 0 and sublog and sublinear
    notes.append(f"m=40 max dM/|M|={rise:.1e} C={c:.2f} D={d:.1f} bound slack={m_gap:.2f} "
                 f"C'={c_prime:.3f} F slack={f_gap:.1f} "
                 "decade log-slopes=" + "/".join(f"{s:.2f}" for s in slopes)
                 + " F exponents=" + "/".join(f"{g:.3f}" for g in growth))
    return ok, "; ".join(notes)


CHECKS = {1: crit1, 2: crit2, 3: crit3, 4: crit4, 5: crit5,
          6: crit6, 7: crit7, 8: crit8, 9: crit9, 10: crit10}
BUDGET = {1: 1.0, 2: 1.0, 3: 1.0, 4: 1.0, 5: 10.0, 6: 5.0, 7: 60.0, 8: 300.0, 9: 600.0, 10: 900.0}


def evaluate(k):
    if k not in RESULTS:
        ok, detail, secs = timed(CHECKS[k])
        RESULTS[k] = (ok and secs <= BUDGET[k], f"{detail} [{secs:.2f}s]", secs)
    return RESULTS[k]


def line(k):
    ok, detail, _ = RESULTS[k]
    return f"{'PASS' if ok else 'FAIL'} criterion {k:2d} ({TITLES[k]}): {detail}"


@pytest.mark.parametrize("k", sorted(CHECKS))
def test_criterion(k):
    ok, detail, _ = evaluate(k)
    assert ok, line(k)


if __name__ == "__main__":
    for k in sorted(CHECKS):
        evaluate(k)
        print(line(k), flush=True)
    sys.exit(0 if all(RESULTS[k][0] for k in CHECKS) else 1)
