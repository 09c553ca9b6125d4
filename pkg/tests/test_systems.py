"""Phase-space operations: round trips, metrics, brackets, charts, coding."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypeq import systems as S

CAT = S.cat_map()
SOL = S.solenoid()
HS = S.horseshoe(1.0 / 3.0, 3.0)
FS2 = S.full_shift(2)
GM = S.golden_mean_sft()

LAM_U = (3.0 + math.sqrt(5.0)) / 2.0
LAM_S = (3.0 - math.sqrt(5.0)) / 2.0


def test_cat_constants():
    assert CAT.expansion == pytest.approx(LAM_U, abs=1e-15)
    assert CAT.lam_s == pytest.approx(LAM_S, abs=1e-15)
    assert LAM_U * LAM_S == pytest.approx(1.0, abs=1e-12)
    # orthonormal eigenframe of the symmetric matrix
    assert abs(S.CAT_EU @ S.CAT_ES) < 1e-14
    assert np.allclose(S.CAT_L @ S.CAT_EU, LAM_U * S.CAT_EU)


@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True),
       st.integers(1, 12))
@settings(max_examples=200, deadline=None)
def test_cat_roundtrip(x, y, n):
    p = S.torus_point(x, y)
    q = S.apply(CAT, S.apply(CAT, p, n), -n)
    assert S.metric(CAT, p, q) < 1e-9


def test_cat_roundtrip_bulk():
    rng = np.random.default_rng(0)
    pts = rng.random((10_000, 2))
    fwd = S.torus_apply_coords(pts, 6)
    back = S.torus_apply_coords(fwd, -6)
    assert S.torus_metric_coords(pts, back).max() < 1e-10


def test_cat_stable_unstable_rates():
    p = S.torus_point(0.33, 0.41)
    eps = 1e-8
    qs = S.torus_point(p.x + eps * S.CAT_ES[0], p.y + eps * S.CAT_ES[1])
    qu = S.torus_point(p.x + eps * S.CAT_EU[0], p.y + eps * S.CAT_EU[1])
    ds = S.metric(CAT, S.apply(CAT, p), S.apply(CAT, qs))
    du = S.metric(CAT, S.apply(CAT, p), S.apply(CAT, qu))
    assert ds == pytest.approx(eps * LAM_S, rel=1e-6)
    assert du == pytest.approx(eps * LAM_U, rel=1e-6)


def test_dyn_metric_reduces_to_ambient_at_n1():
    p, q = S.torus_point(0.1, 0.2), S.torus_point(0.15, 0.27)
    assert S.dyn_metric(CAT, p, q, 1) == pytest.approx(S.metric(CAT, p, q))


def test_dyn_metric_on_cat_leaf_is_linear():
    # same-leaf pairs expand exactly: d_n = delta * lambda_u^{n-1}
    delta = 1e-6
    p = S.torus_point(0.2, 0.7)
    q = S.torus_point(p.x + delta * S.CAT_EU[0], p.y + delta * S.CAT_EU[1])
    for n in (1, 3, 7, 10):
        assert S.dyn_metric(CAT, p, q, n) == pytest.approx(
            delta * LAM_U ** (n - 1), rel=1e-9)


def test_dyn_metric_words():
    # words agreeing on indices 0..n-1 only; Def of d_n gives 1/2 (the nearest
    # disagreement, at index -1 or n, sits one shift away from the window)
    n = 5
    a = S.word(FS2, (1,) + (0,) * n + (1,), offset=-1)
    b = S.word(FS2, (0,) + (0,) * n + (0,), offset=-1)
    assert S.dyn_metric(FS2, a, b, n) == pytest.approx(0.5)
    assert S.metric(FS2, a, b) == pytest.approx(0.5)  # disagreement at -1


def test_word_metric_examples():
    a = S.word(FS2, (0, 1, 1))
    b = S.word(FS2, (1, 1, 1))
    assert S.metric(FS2, a, b) == 1.0
    c = S.word(FS2, (0, 1, 0))
    assert S.metric(FS2, a, c) == pytest.approx(0.25)
    assert S.metric(FS2, a, a) == 0.0


@given(st.integers(1, 18), st.data())
@settings(max_examples=120, deadline=None)
def test_cylinder_is_bowen_ball(n, data):
    # B_n(w, r) with r in (1/2, 1) is exactly the depth-n cylinder
    r = data.draw(st.floats(0.51, 0.99))
    a = tuple(data.draw(st.lists(st.integers(0, 1), min_size=n + 2, max_size=n + 2)))
    b = tuple(data.draw(st.lists(st.integers(0, 1), min_size=n + 2, max_size=n + 2)))
    wa, wb = S.word(FS2, a), S.word(FS2, b)
    inside = S.bowen_ball_contains(FS2, wa, wb, n, r)
    assert inside == (a[:n] == b[:n])


def test_u_bowen_ball_shift_is_leaf_cylinder():
    base = S.word(FS2, (1, 0, 1, 1, 0, 0), offset=-2)
    same = S.word(FS2, (1, 0, 1, 1, 1, 1), offset=-2)   # same past, same w_0..w_1
    other_past = S.word(FS2, (0, 0, 1, 1, 0, 0), offset=-2)
    assert S.u_bowen_ball_contains(FS2, base, same, 2, 0.7)
    assert not S.u_bowen_ball_contains(FS2, base, same, 3, 0.7)
    assert not S.u_bowen_ball_contains(FS2, base, other_past, 2, 0.7)
    # center is always a member
    for n in (1, 4, 9):
        assert S.u_bowen_ball_contains(FS2, base, base, n, 0.7)


def test_u_bowen_ball_cat_arc():
    p = S.torus_point(0.2, 0.7)
    r, n = 0.05, 6
    half = r * LAM_U ** (-(n - 1))
    for t, expect in ((0.9 * half, True), (1.1 * half, False)):
        q = S.torus_point(p.x + t * S.CAT_EU[0], p.y + t * S.CAT_EU[1])
        assert S.u_bowen_ball_contains(CAT, p, q, n, r) == expect
    off_leaf = S.torus_point(p.x + 0.01 * S.CAT_ES[0], p.y + 0.01 * S.CAT_ES[1])
    assert not S.u_bowen_ball_contains(CAT, p, off_leaf, 1, 0.05)


def test_solenoid_step_example():
    q = S.apply(SOL, S.SolenoidPoint(0.0, 0.0, 0.0), 1)
    assert (q.x, q.y, q.theta) == (0.5, 0.0, 0.0)


def test_solenoid_attractor_roundtrip():
    p = S.solenoid_attractor_point(SOL, 2.1, (0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 1, 0, 0))
    assert math.hypot(p.x, p.y) < 1.0
    back = S.apply(SOL, p, -5)
    again = S.apply(SOL, back, 5)
    assert abs(again.x - p.x) + abs(again.y - p.y) < 1e-10
    assert S._circle_dist(again.theta, p.theta) < 1e-10


def test_solenoid_inverse_undefined_off_image():
    with pytest.raises(S.InverseUndefinedError):
        S.apply(SOL, S.SolenoidPoint(0.99, 0.0, 0.0), -1)


def test_solenoid_disc_sections_contract():
    # two points over the same angle converge at rate 1/4 per step
    a = S.SolenoidPoint(0.1, 0.2, 1.0)
    b = S.SolenoidPoint(-0.3, 0.1, 1.0)
    d0 = math.hypot(a.x - b.x, a.y - b.y)
    fa, fb = S.apply(SOL, a, 3), S.apply(SOL, b, 3)
    assert math.hypot(fa.x - fb.x, fa.y - fb.y) == pytest.approx(d0 / 64.0, rel=1e-12)


def test_horseshoe_escape_and_absorbing():
    mid = S.HorseshoePoint(0.5, 0.5)
    out = S.apply(HS, mid, 1)
    assert out.escaped
    with pytest.raises(S.EscapedPointError):
        S.apply(HS, out, 1)


def test_horseshoe_rejects_bad_params():
    with pytest.raises(ValueError):
        S.horseshoe(0.5, 3.0)
    with pytest.raises(ValueError):
        S.horseshoe(0.3, 2.0)


def test_horseshoe_coding_consistency():
    fut, past = (1, 0, 1, 1, 0, 0, 1), (0, 1, 1)
    p = S.horseshoe_point(HS, fut, past)
    q = S.apply(HS, p, 1)
    # shift of the coding: new future drops the head, new past gains it
    q2 = S.horseshoe_point(HS, fut[1:], (fut[0],) + past)
    assert q.x == pytest.approx(q2.x, abs=3.0 ** (-len(fut)) * 2)
    assert q.y == pytest.approx(q2.y, abs=1e-12)


def test_horseshoe_strips_n12():
    # survivors of n forward steps = 2^n disjoint strips of width beta^-n
    n = 12
    strips = []
    for idx in range(2 ** n):
        w = tuple((idx >> (n - 1 - k)) & 1 for k in range(n))
        strips.append(S.horseshoe_strip(HS, w))
    strips.sort()
    width = 3.0 ** (-n)
    for (lo1, hi1), (lo2, _) in zip(strips, strips[1:]):
        assert hi1 == pytest.approx(lo1 + width, rel=1e-9)
        assert lo2 >= hi1 - 1e-12
    # sampled check: strip members survive n steps, gap points do not
    for w_idx in (0, 517, 2 ** n - 1):
        w = tuple((w_idx >> (n - 1 - k)) & 1 for k in range(n))
        lo, hi = S.horseshoe_strip(HS, w)
        pt = S.HorseshoePoint(lo + 0.3 * (hi - lo), 0.0)
        for _ in range(n):
            pt = S.apply(HS, pt, 1)
        assert not pt.escaped
    gap = S.HorseshoePoint(0.5 * (strips[0][1] + strips[1][0]), 0.0)
    escaped = False
    for _ in range(n):
        gap = S.apply(HS, gap, 1)
        if gap.escaped:
            escaped = True
            break
    assert escaped


def test_bracket_shift_splice():
    x = S.word(FS2, (1, 1, 0, 1), offset=-2)   # ...11.01...
    y = S.word(FS2, (0, 0, 1, 0), offset=-2)   # ...00.10...
    z = S.smale_bracket(FS2, x, y)
    assert z.window(-2, 1) == (0, 0, 0, 1)     # past of y, future of x


def test_bracket_sft_inadmissible():
    x = S.word(GM, (0, 1, 0), offset=0)        # future starts with 1? no: (0,1,0)
    x = S.word(GM, (1, 0, 1), offset=0)
    y = S.word(GM, (0, 1, 0), offset=-3)       # past ends with 0? symbols at -3..-1: 0,1,0
    y_bad = S.word(GM, (0, 0, 1), offset=-3)   # past ends with 1
    z = S.smale_bracket(GM, x, y)
    assert z.window(-1, 0) == (0, 1)
    with pytest.raises(S.BracketError):
        S.smale_bracket(GM, x, y_bad)


def test_bracket_cat_map():
    x = S.torus_point(0.30, 0.40)
    y = S.torus_point(0.32, 0.45)
    z = S.smale_bracket(CAT, x, y)
    # z on the stable leaf of x and the unstable leaf of y
    dzx = S._torus_wrap(np.array([z.x - x.x, z.y - x.y]))
    assert abs(float(dzx @ S.CAT_EU)) < 1e-12
    assert S.same_unstable_leaf(CAT, y, z)
    assert S.metric(CAT, z, x) <= 2 * CAT.eps_bracket
    far = S.torus_point(0.9, 0.9)
    with pytest.raises(S.BracketError):
        S.smale_bracket(CAT, x, far)


def test_bracket_horseshoe_and_solenoid():
    a = S.horseshoe_point(HS, (1, 0, 1), (0, 1))
    b = S.horseshoe_point(HS, (1, 0, 0), (0, 1, 1))
    z = S.smale_bracket(HS, a, b)
    assert (z.x, z.y) == (a.x, b.y)
    pa = S.solenoid_attractor_point(SOL, 1.0)
    pb = S.solenoid_attractor_point(SOL, 1.2)
    zs = S.smale_bracket(SOL, pa, pb)
    assert zs.theta == pytest.approx(pa.theta)
    assert zs.history == pb.history


def test_potential_bernoulli_and_birkhoff():
    phi = S.bernoulli_potential(FS2, (0.3, 0.7))
    w = S.word(FS2, (0, 1, 1, 0, 1))
    assert S.evaluate_potential(FS2, phi, w) == pytest.approx(math.log(0.3))
    expected = math.log(0.3) + 2 * math.log(0.7) + math.log(0.3)
    assert S.birkhoff_sum(FS2, phi, w, 4) == pytest.approx(expected, abs=1e-14)


def test_geometric_potential_constants():
    for sysd, val in ((CAT, LAM_U), (SOL, 2.0), (HS, 3.0), (FS2, 2.0)):
        phi = S.geometric_t(1.0)
        assert S.evaluate_potential(sysd, phi, None) == pytest.approx(-math.log(val))
    phi3 = S.geometric_t(0.5)
    assert S.geometric_constant(S.full_shift(3), phi3) == pytest.approx(-0.5 * math.log(3))


@given(st.integers(0, 6), st.integers(0, 6), st.data())
@settings(max_examples=80, deadline=None)
def test_birkhoff_cocycle(n, m, data):
    syms = tuple(data.draw(st.lists(st.integers(0, 1), min_size=n + m + 2,
                                    max_size=n + m + 2)))
    w = S.word(FS2, syms)
    phi = S.locally_constant(FS2, 2, (0.1, -0.4, 0.7, 0.2))
    lhs = S.birkhoff_sum(FS2, phi, w, n + m)
    rhs = S.birkhoff_sum(FS2, phi, w, n) + S.birkhoff_sum(
        FS2, phi, S.apply(FS2, w, n), m)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_locally_constant_offset_window():
    # depth-2 table reading coordinates -1..0
    phi = S.locally_constant(FS2, 2, (0.0, 1.0, 2.0, 3.0), offset=-1)
    w = S.word(FS2, (1, 0, 1), offset=-1)
    assert S.evaluate_potential(FS2, phi, w) == pytest.approx(2.0)  # (1,0) -> idx 2
    short = S.word(FS2, (0, 1), offset=0)
    with pytest.raises(ValueError):
        S.evaluate_potential(FS2, phi, short)


def test_sft_word_validation():
    with pytest.raises(ValueError):
        S.word(GM, (1, 1, 0))
    w = S.word(GM, (1, 0, 1, 0))
    assert w.symbols == (1, 0, 1, 0)


def test_leaf_chart_arc_and_tree():
    chart = S.leaf_chart(CAT, S.torus_point(0.2, 0.7))
    pts = chart.arc_points(np.array([-0.1, 0.0, 0.1]))
    assert np.allclose(pts[1], [0.2, 0.7])
    assert S.same_unstable_leaf(CAT, chart.base, chart.point_at(0.25))
    assert chart.cell_radius(1, 0.05) == pytest.approx(0.05)
    assert chart.cell_radius(4, 0.05) == pytest.approx(0.05 * LAM_U ** -3)

    base = S.word(FS2, (1, 0), offset=-2)
    tree = S.leaf_chart(FS2, base)
    w = tree.point_at((0, 1, 1))
    assert w.window(-2, 2) == (1, 0, 0, 1, 1)

    hs_chart = S.leaf_chart(HS, S.horseshoe_point(HS, (), (1, 0)))
    hp = hs_chart.point_at((1, 0))
    assert hp.y == pytest.approx(S.horseshoe_s_coord(HS, (1, 0)))
    assert hp.x == pytest.approx(2.0 / 3.0)


def test_leaf_chart_solenoid_follows_branch():
    p = S.solenoid_attractor_point(SOL, 1.0, (0, 1) * 7)
    chart = S.leaf_chart(SOL, p)
    q = chart.point_at(0.2)
    assert q.theta == pytest.approx((1.2) % (2 * math.pi))
    assert S.same_unstable_leaf(SOL, p, q)
    # reconstruction at the base angle reproduces the base point
    q0 = chart.point_at(0.0)
    assert math.hypot(q0.x - p.x, q0.y - p.y) < 1e-12


def test_vectorized_dn_matches_scalar():
    rng = np.random.default_rng(1)
    a = rng.random((50, 2))
    b = a + rng.normal(scale=0.01, size=(50, 2))
    vec = S.torus_dyn_metric_coords(a, b % 1.0, 6)
    for i in range(0, 50, 7):
        pa = S.torus_point(*a[i])
        pb = S.torus_point(*(b[i] % 1.0))
        assert vec[i] == pytest.approx(S.dyn_metric(CAT, pa, pb, 6), rel=1e-9)
