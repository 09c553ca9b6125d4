"""Partition sums, pressure estimates, exact symbolic oracles."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypeq import pressure as P
from hypeq import systems as S

CM = S.cat_map()
FS = S.full_shift(2)
GM = S.golden_mean_sft()
LOG_LAM = math.log(S.CAT_LAMBDA_U)
GOLD = (1 + math.sqrt(5)) / 2


# ---------------------------------------------------------------------------
# separated sets


def test_separated_single_point():
    pt = S.TorusPoint(0.3, 0.4)
    assert P.separated_set(CM, [pt], 3, 0.1) == [pt]


def test_separated_fullshift_cylinders():
    sample = [S.SymbolWord(2, tuple(int(c) for c in w))
              for w in S.admissible_words(FS, 3)]
    out = P.separated_set(FS, sample, 3, 0.7)
    assert len(out) == 8


def test_separated_cat_leaf_count():
    # arc of length 1, n=4, r=0.05: within factor 2 of lam^4 / (2*0.05)
    chart = S.leaf_chart(CM, S.TorusPoint(0.232, 0.577), tau=0.5)
    sample = P.leaf_sample(chart, 4, 0.05)
    out = P.separated_set(CM, sample, 4, 0.05)
    target = S.CAT_LAMBDA_U ** 4 / 0.1
    assert target / 2 <= len(out) <= target * 2


def test_separated_pairwise_and_maximal():
    rng = np.random.default_rng(3)
    pts = [S.TorusPoint(float(a), float(b)) for a, b in rng.random((60, 2))]
    n, r = 3, 0.22
    out = P.separated_set(CM, pts, n, r)
    for i, a in enumerate(out):
        for b in out[i + 1:]:
            assert S.dyn_metric(CM, a, b, n) >= r
    for q in pts:  # maximality: the witnesses (n, r)-span the sample
        assert any(S.dyn_metric(CM, w, q, n) < r for w in out)


def test_separated_monotone_in_sample_on_arcs():
    chart = S.leaf_chart(CM, S.TorusPoint(0.1, 0.2), tau=0.3)
    rng = np.random.default_rng(5)
    ts = np.sort(rng.uniform(-0.3, 0.3, size=120))
    small = [chart.point_at(float(t)) for t in ts[::2]]
    big = [chart.point_at(float(t)) for t in ts]
    n, r = 5, 0.1
    assert len(P.separated_set(CM, big, n, r)) >= len(P.separated_set(CM, small, n, r))


# ---------------------------------------------------------------------------
# partition sums


def test_fullshift_counts():
    for variant in ("span", "sep", "per"):
        rec = P.partition_sum(FS, S.zero_potential(), 3, 0.7, variant)
        assert rec.value == pytest.approx(8.0)
        assert rec.count == 8


def test_cat_periodic_sums():
    rec1 = P.partition_sum(CM, S.zero_potential(), 1, 0.1, "per")
    rec2 = P.partition_sum(CM, S.zero_potential(), 2, 0.1, "per")
    assert rec1.value == pytest.approx(1.0)
    assert rec2.value == pytest.approx(5.0)


def test_bernoulli_sep_sums_are_one():
    phi = S.bernoulli_potential(FS, [0.3, 0.7])
    for n in range(1, 12):
        rec = P.partition_sum(FS, phi, n, 0.7, "sep")
        assert rec.value == pytest.approx(1.0, abs=1e-12)


def test_span_equals_sep_witness():
    # the greedy separated set doubles as the spanning witness
    phi = S.bernoulli_potential(FS, [0.3, 0.7])
    a = P.partition_sum(FS, phi, 5, 0.7, "span")
    b = P.partition_sum(FS, phi, 5, 0.7, "sep")
    assert a.value == b.value and a.count == b.count


def test_per_on_solenoid_unsupported():
    SOL = S.solenoid()
    with pytest.raises(S.DynamicsError, match="unsupported-variant"):
        P.partition_sum(SOL, S.zero_potential(), 3, 0.1, "per")


def test_shift_r_outside_window_rejected():
    with pytest.raises(S.DynamicsError, match="r in"):
        P.partition_sum(FS, S.zero_potential(), 3, 0.3, "sep")


# ---------------------------------------------------------------------------
# pressure estimates


def test_pressure_fullshift_log2():
    est = P.pressure_estimate(FS, S.zero_potential(), 0.7, range(1, 11))
    assert est.value == pytest.approx(math.log(2), abs=1e-9)
    assert est.lower - 1e-12 <= est.value <= est.upper + 1e-12
    assert est.warning is None


def test_pressure_bernoulli_zero():
    phi = S.bernoulli_potential(FS, [0.3, 0.7])
    est = P.pressure_estimate(FS, phi, 0.7, range(1, 11))
    assert est.value == pytest.approx(0.0, abs=1e-9)


def test_pressure_cat_leaf_within_5pct():
    chart = S.leaf_chart(CM, S.TorusPoint(0.232, 0.577))
    est = P.pressure_estimate(CM, S.zero_potential(), 0.05, range(4, 13),
                              domain=chart)
    assert abs(est.value - LOG_LAM) / LOG_LAM < 0.05


def test_pressure_translation_rule():
    base = S.locally_constant(FS, 1, [0.1, -0.4])
    shifted = S.locally_constant(FS, 1, [0.1 + 0.25, -0.4 + 0.25])
    a = P.pressure_estimate(FS, base, 0.7, range(1, 9))
    b = P.pressure_estimate(FS, shifted, 0.7, range(1, 9))
    assert b.value - a.value == pytest.approx(0.25, abs=1e-9)


def test_pressure_estimate_needs_four_points():
    with pytest.raises(ValueError):
        P.pressure_estimate(FS, S.zero_potential(), 0.7, [1, 2, 3])


# ---------------------------------------------------------------------------
# exact symbolic pressure


def test_exact_fullshift_constant():
    eig = P.sft_exact_pressure(FS, S.zero_potential())
    assert eig.value == pytest.approx(math.log(2), abs=1e-12)
    phi = S.locally_constant(FS, 1, [0.37, 0.37])
    eig2 = P.sft_exact_pressure(FS, phi)
    assert eig2.value == pytest.approx(math.log(2) + 0.37, abs=1e-12)


def test_exact_bernoulli():
    phi = S.bernoulli_potential(FS, [0.3, 0.7])
    eig = P.sft_exact_pressure(FS, phi)
    assert eig.value == pytest.approx(0.0, abs=1e-12)
    assert eig.gibbs_lo == pytest.approx(1.0, abs=1e-12)
    assert eig.gibbs_hi == pytest.approx(1.0, abs=1e-12)


def test_exact_golden_mean():
    eig = P.sft_exact_pressure(GM, S.zero_potential())
    assert eig.value == pytest.approx(math.log(GOLD), abs=1e-12)
    assert eig.gibbs_lo <= 1.0 <= eig.gibbs_hi


def test_exact_matches_estimate_to_1e3():
    for sys, phi in [
        (GM, S.zero_potential()),
        (FS, S.locally_constant(FS, 2, [0.2, -0.3, 0.1, 0.4])),
    ]:
        eig = P.sft_exact_pressure(sys, phi)
        est = P.pressure_estimate(sys, phi, 0.7, range(1, 15))
        assert abs(est.value - eig.value) < 1e-3


def test_reducible_matrix_names_symbol():
    bad = S.sft([[1, 1], [0, 1]])  # symbol 1 never returns to 0
    with pytest.raises(S.DynamicsError, match="symbol"):
        P.sft_exact_pressure(bad, S.zero_potential())


def test_depth2_cylinder_masses_are_consistent():
    phi = S.locally_constant(FS, 2, [0.2, -0.3, 0.1, 0.4])
    eig = P.sft_exact_pressure(FS, phi)
    from hypeq.equilibrium import SftGibbsMeasure
    mu = SftGibbsMeasure(FS, phi)
    # additivity: mass of [w] equals the sum over extensions
    for w in [(0,), (1,), (0, 1), (1, 1, 0)]:
        whole = mu.cylinder_mass(w)
        parts = sum(mu.cylinder_mass(w + (b,)) for b in range(2))
        assert whole == pytest.approx(parts, rel=1e-12)
    total = sum(mu.cylinder_mass((a, b)) for a in range(2) for b in range(2))
    assert total == pytest.approx(1.0, abs=1e-12)
    # shift invariance: mu([*b]) summed over first symbol equals mu([b])
    for b in range(2):
        assert sum(mu.cylinder_mass((a, b)) for a in range(2)) == \
            pytest.approx(mu.cylinder_mass((b,)), rel=1e-12)


# ---------------------------------------------------------------------------
# periodic points


def test_cat_periodic_counts():
    lam = S.CAT_LAMBDA_U
    for n in range(1, 9):
        pts = P.periodic_points(CM, n)
        expect = round(lam ** n + lam ** (-n) - 2)
        assert len(pts) == expect
        # verify f^n x = x exactly on a rational sample
        for p in pts[:50]:
            q = S.apply(CM, p, n)
            assert S.metric(CM, p, q) < 1e-9


def test_cat_period_one_is_origin():
    pts = P.periodic_points(CM, 1)
    assert len(pts) == 1 and pts[0].x == 0.0 and pts[0].y == 0.0


def test_shift_periodic_counts_trace():
    A = np.array(S.transition_matrix(GM))
    for n in range(1, 10):
        pts = P.periodic_points(GM, n)
        assert len(pts) == int(round(np.trace(np.linalg.matrix_power(A, n))))


def test_horseshoe_periodic_fixed_points():
    HS = S.horseshoe(1 / 3, 3.0)
    pts = P.periodic_points(HS, 1)
    assert len(pts) == 2
    for p in pts:
        q = S.apply(HS, p, 1)
        assert abs(q.x - p.x) + abs(q.y - p.y) < 1e-10


def test_periodic_orbit_measures():
    mu = P.periodic_orbit_measure(CM, S.zero_potential(), 1)
    assert mu.size == 1 and mu.coords[0].tolist() == [0.0, 0.0]

    mu2 = P.periodic_orbit_measure(FS, S.zero_potential(), 2)
    assert mu2.size == 4
    assert np.allclose(mu2.weights, 0.25)

    phi = S.bernoulli_potential(FS, [0.3, 0.7])
    mu3 = P.periodic_orbit_measure(FS, phi, 1)
    assert sorted(mu3.weights.tolist()) == pytest.approx([0.3, 0.7])


# ---------------------------------------------------------------------------
# multiplicativity and distortion


def test_multiplicativity_exact_cases():
    recs = [P.partition_sum(FS, S.zero_potential(), n, 0.7, "sep")
            for n in range(1, 9)]
    rep = P.multiplicativity_check(recs)
    assert rep.constant == pytest.approx(1.0, abs=1e-9)
    assert not rep.growing

    phi = S.bernoulli_potential(FS, [0.3, 0.7])
    recs = [P.partition_sum(FS, phi, n, 0.7, "sep") for n in range(1, 9)]
    rep = P.multiplicativity_check(recs)
    assert rep.constant == pytest.approx(1.0, abs=1e-9)


def test_multiplicativity_cat_leaf_bounded():
    chart = S.leaf_chart(CM, S.TorusPoint(0.232, 0.577))
    recs = [P.partition_sum(CM, S.zero_potential(), n, 0.1, "sep", domain=chart)
            for n in range(1, 9)]
    rep = P.multiplicativity_check(recs)
    assert rep.constant < 20.0
    assert not rep.growing


def test_multiplicativity_rejects_mixed_records():
    a = P.partition_sum(FS, S.zero_potential(), 2, 0.7, "sep")
    b = P.partition_sum(FS, S.zero_potential(), 3, 0.6, "sep")
    with pytest.raises(ValueError):
        P.multiplicativity_check([a, b])


def test_distortion_zero_potential():
    d = P.bowen_distortion_constant(CM, S.zero_potential())
    assert d.q_u == 0.0 and d.q_s == 0.0 and d.empirical == 0.0


def test_distortion_cat_plugin_value():
    phi = S.tabulated(lambda c: np.cos(2 * np.pi * c[:, 0]),
                      holder_beta=1.0, holder_norm=1.0)
    d = P.bowen_distortion_constant(CM, phi, n=10, pairs=2000)
    lam_s = 1 / S.CAT_LAMBDA_U
    assert d.q_u == pytest.approx(0.3 / (1 - lam_s), rel=1e-12)
    assert d.q_u == pytest.approx(0.4854, abs=5e-4)


def test_distortion_empirical_below_bound():
    func = lambda c: 0.15 * np.cos(2 * np.pi * c[:, 0]) * np.sin(2 * np.pi * c[:, 1])
    # Lipschitz constant <= 0.15 * 2pi * sqrt(2); declare that as the Hoelder norm
    norm = 0.15 * 2 * math.pi * math.sqrt(2)
    phi = S.tabulated(func, 1.0, norm)
    d = P.bowen_distortion_constant(CM, phi, n=12, pairs=10_000)
    assert 0 < d.empirical <= d.q_u


def test_distortion_locally_constant_is_exact():
    phi = S.bernoulli_potential(FS, [0.3, 0.7])
    d = P.bowen_distortion_constant(FS, phi, n=10)
    assert d.empirical == 0.0
    assert d.q_u > 0  # the closed form is a bound, not the exact oscillation


# ---------------------------------------------------------------------------
# record plumbing


def test_record_roundtrip_fields():
    rec = P.partition_sum(FS, S.zero_potential(), 4, 0.7, "sep")
    d = rec.to_dict()
    assert d["n"] == 4 and d["variant"] == "sep" and d["count"] == 16


def test_estimate_bracket_order():
    est = P.pressure_estimate(GM, S.zero_potential(), 0.7, range(1, 13))
    assert est.lower <= est.value <= est.upper
    assert est.value == pytest.approx(math.log(GOLD), abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 12))
def test_cat_periodic_equation_property(n):
    pts = P.periodic_points(CM, n)
    lam = S.CAT_LAMBDA_U
    assert len(pts) == round(lam ** n + lam ** (-n) - 2)
