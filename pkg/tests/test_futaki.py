import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ruled_calabi.extremal import closed_form_minimizer, extremal_profile, minimizer
from ruled_calabi.flow import default_initial
from ruled_calabi.futaki import (
    ConvexityError,
    PiecewiseLinearConvex,
    approximate_neg_S,
    deviation_norm,
    futaki_invariant,
    futaki_norm,
    futaki_via_integral,
    lower_bound_sweep,
    neg_curvature,
    random_convex,
)
from ruled_calabi.profile import Profile, average_scalar_curvature, make_grid

ms = st.floats(0.5, 60.0)


def _pl(m, bps, vals):
    return PiecewiseLinearConvex(np.array(bps) * m, vals)


@given(ms, st.floats(-10, 10))
def test_constants_have_zero_invariant(m, c):
    assert abs(futaki_invariant(_pl(m, [0, 1], [c, c]), m)) < 1e-12 * max(1.0, abs(c)) * max(1.0, m)


@given(ms)
def test_linear_function_closed_form(m):
    h = _pl(m, [0, 1], [0.0, m])
    want = m - average_scalar_curvature(m) * (m**2 / 2 + m**3 / 3)
    assert futaki_invariant(h, m) == pytest.approx(want, rel=1e-10, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(ms, st.integers(0, 2**32 - 1), st.floats(0.0, 5.0))
def test_invariant_is_linear(m, seed, a):
    rng = np.random.default_rng(seed)
    h1, h2 = random_convex(m, rng), random_convex(m, rng)
    lhs = futaki_invariant(h1.scaled(a) + h2, m)
    rhs = a * futaki_invariant(h1, m) + futaki_invariant(h2, m)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9 * (1 + abs(a)) * m**2)


@settings(max_examples=50, deadline=None)
@given(ms, st.integers(0, 2**32 - 1), st.floats(0.1, 5.0), st.floats(-5, 5))
def test_norm_ignores_shift_and_scales(m, seed, a, shift):
    h = random_convex(m, np.random.default_rng(seed))
    base = h.norm()
    assert h.scaled(1.0, shift).norm() == pytest.approx(base, rel=1e-7, abs=1e-9)
    assert h.scaled(a).norm() == pytest.approx(a * base, rel=1e-9, abs=1e-12)


def test_norm_of_linear_against_formula():
    m = 4.0
    h = _pl(m, [0, 1], [0.0, m])
    vol = m + m * m / 2
    mean = (m**2 / 2 + m**3 / 3) / vol
    want = (m**3 / 3 + m**4 / 4) - 2 * mean * (m**2 / 2 + m**3 / 3) + mean**2 * vol
    assert futaki_norm(h, m) == pytest.approx(math.sqrt(want), rel=1e-12)


def test_convexity_enforced():
    with pytest.raises(ConvexityError):
        PiecewiseLinearConvex([0.0, 1.0, 2.0], [0.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        PiecewiseLinearConvex([0.0, 2.0, 1.0], [0.0, 1.0, 3.0])


@pytest.mark.parametrize("m", [17.0, 24.0, 40.0])
def test_via_integral_matches_invariant_on_minimizers(m):
    mz = closed_form_minimizer(m)
    for k in (10, 50):
        h = approximate_neg_S(mz, k)
        assert futaki_via_integral(h, mz) == pytest.approx(futaki_invariant(h, m), abs=1e-9)


def test_via_integral_on_sampled_profile():
    m = 10.0
    phi = extremal_profile(m, make_grid(m, 2049))
    h = _pl(m, [0, 1], [1.0, -2.0])
    assert futaki_via_integral(h, phi) == pytest.approx(futaki_invariant(h, m), abs=1e-5)


def test_via_integral_warns_when_h_bends_on_support():
    mz = closed_form_minimizer(24.0)
    h = _pl(24.0, [0, 0.5, 1], [0.0, 0.0, 1.0])
    with pytest.warns(UserWarning):
        futaki_via_integral(h, mz)


def test_piecewise_smooth_neg_curvature_matches_pl_limit():
    mz = closed_form_minimizer(40.0)
    smooth = neg_curvature(mz)
    fine = approximate_neg_S(mz, 2000)
    assert futaki_invariant(fine, 40.0) == pytest.approx(futaki_invariant(smooth, 40.0), rel=1e-6)


def test_lower_bound_for_random_convex_h(rng):
    m = 24.0
    mz = closed_form_minimizer(m)
    bound = deviation_norm(mz)
    for _ in range(200):
        h = random_convex(m, rng)
        nrm = h.norm()
        if nrm < 1e-12:
            continue
        assert -futaki_invariant(h, m) / nrm <= bound + 1e-9


@pytest.mark.parametrize("m", [24.0, 40.0])
def test_sweep_approaches_norm_monotonically(m):
    rows = lower_bound_sweep(closed_form_minimizer(m), [10, 50, 200])
    slacks = [r.slack for r in rows]
    assert all(s >= -1e-12 for s in slacks)
    assert slacks[0] >= slacks[1] - 1e-12 >= slacks[2] - 2e-12
    assert rows[-1].ratio == pytest.approx(rows[-1].limit, rel=1e-2)


def test_sweep_on_sampled_minimizer():
    m = 24.0
    phi = minimizer(m, make_grid(m, 2049))
    row = lower_bound_sweep(phi, [200])[0]
    assert row.ratio == pytest.approx(deviation_norm(closed_form_minimizer(m)), rel=1e-2)


def test_nonconcave_curvature_rejected():
    m = 10.0
    g = make_grid(m, 513)
    t = g.nodes
    wobble = Profile(g, default_initial(m, g).values + 0.3 * np.sin(3 * np.pi * t / m) ** 2 * (t * (m - t)) ** 2 / m**4)
    with pytest.raises(ConvexityError):
        approximate_neg_S(wobble, 20)
