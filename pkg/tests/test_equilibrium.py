"""Evolution toward equilibrium and the Gibbs/conditional verification suite."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypeq import equilibrium as E
from hypeq import refmeasure as R
from hypeq import systems as S

CM = S.cat_map()
FS = S.full_shift(2)
GM = S.golden_mean_sft()
HS = S.horseshoe(1.0 / 3.0, 3.0)
LAM = S.CAT_LAMBDA_U
GEO = S.geometric_t(1.0)
BERN = S.bernoulli_potential(FS, [0.3, 0.7])
GM2 = S.locally_constant(GM, 2, [0.2, -0.1, 0.4, 0.0])

BERN_MU = E.SftGibbsMeasure(FS, BERN)
GM_MU = E.SftGibbsMeasure(GM, GM2)
LEB = E.LebesgueTorus(CM)


def exact_family(mu, n):
    """The stationary depth-n cylinder family of an SFT Gibbs measure."""
    w = S.admissible_words(mu.sys, n)
    return E.EmpiricalMeasure(mu.sys, mu.cylinder_mass_bulk(w), words=w)


def cat_leaf(x=0.2, y=0.7, tau=10.0, order=3):
    ch = S.leaf_chart(CM, S.torus_point(x, y), tau)
    return R.build_reference_measure(CM, GEO, ch, 0.05, order)


# ---------------------------------------------------------------------------
# empirical measures and test dictionaries


def test_empirical_measure_normalization_records_constant():
    m = E.EmpiricalMeasure(FS, np.array([1.0, 3.0]),
                           words=np.array([[0, 1], [1, 1]]))
    nm = m.normalized()
    assert nm.total() == pytest.approx(1.0)
    assert nm.meta["normalization"] == pytest.approx(4.0)
    with pytest.raises(ValueError, match="needs atoms"):
        E.EmpiricalMeasure(FS, np.array([1.0]))


def test_empirical_roundtrip_through_dict():
    m = E.EmpiricalMeasure(CM, np.array([0.5, 0.5]),
                           coords=np.array([[0.1, 0.2], [0.3, 0.4]]),
                           meta={"n": 3})
    back = E.EmpiricalMeasure.from_dict(m.to_dict())
    assert back.sys.family == "cat_map" and back.meta == {"n": 3}
    assert np.array_equal(back.coords, m.coords)


def test_default_dictionary_shapes():
    # torus modes are deduplicated up to conjugation: half of (2k+1)^2 - 1
    assert len(E.default_dictionary(CM, kmax=8).labels) == 144
    assert len(E.default_dictionary(FS, depth=6).labels) == 126
    assert len(E.default_dictionary(GM, depth=6).labels) == 52  # Fibonacci
    assert E.default_dictionary(HS).kind == "strip"


def test_empirical_moments_match_exact_oracle():
    emp = exact_family(BERN_MU, 9)
    dic = E.default_dictionary(FS, depth=5)
    d = E.weakstar_discrepancy(emp, BERN_MU, dic)
    assert d < 1e-14


def test_cylinder_moment_window_validation():
    future = E.EmpiricalMeasure(FS, np.array([1.0]), words=np.array([[0, 1, 1]]),
                                offset=1)
    with pytest.raises(S.DynamicsError, match="coordinate 0"):
        E.dictionary_moments(future, E.default_dictionary(FS, depth=2))
    past = E.EmpiricalMeasure(FS, np.array([1.0]), words=np.array([[0, 1, 1]]),
                              offset=-1)
    with pytest.raises(S.DynamicsError, match="shorter than"):
        E.dictionary_moments(past, E.default_dictionary(FS, depth=3))
    # a negative offset is fine while the window still reaches depth
    mom = E.dictionary_moments(past, E.default_dictionary(FS, depth=2))
    assert mom.sum() == pytest.approx(1 + 1)          # [1] and [11] hit


# ---------------------------------------------------------------------------
# exact oracles


def test_lebesgue_ball_masses():
    x = S.torus_point(0.3, 0.8)
    assert LEB.ball_mass(x, 1, 0.05) == pytest.approx(math.pi * 0.05 ** 2)
    # by n = 6 the two-ellipse lens area is the flat-strip value 4 r^2 lam^-(n-1)
    assert LEB.ball_mass(x, 6, 0.05) == pytest.approx(
        4 * 0.05 ** 2 * LAM ** -5, rel=5e-5)
    assert LEB.exact_moments(E.default_dictionary(CM, kmax=3)) == pytest.approx(0)


def test_sft_gibbs_cylinder_masses_are_consistent():
    for mu, n in ((BERN_MU, 8), (GM_MU, 8)):
        w = S.admissible_words(mu.sys, n)
        masses = mu.cylinder_mass_bulk(w)
        assert masses.sum() == pytest.approx(1.0, abs=1e-12)
        # mu[w] = sum_a mu[wa], and bulk agrees with the scalar path
        ext = mu.cylinder_mass_bulk(S.admissible_words(mu.sys, n + 1))
        assert ext.sum() == pytest.approx(1.0, abs=1e-12)
        assert masses[0] == pytest.approx(mu.cylinder_mass(w[0]), rel=1e-14)


def test_bernoulli_masses_are_products():
    assert BERN_MU.cylinder_mass((0, 1, 1)) == pytest.approx(0.3 * 0.49)
    assert BERN_MU.pressure == pytest.approx(0.0, abs=1e-12)
    assert GM_MU.cylinder_mass((1, 1)) == 0.0


def test_chain_sampling_respects_structure():
    rng = np.random.default_rng(0)
    w = GM_MU.sample(2000, 10, rng)
    assert not ((w[:, :-1] == 1) & (w[:, 1:] == 1)).any()
    pi, P = GM_MU.chain()
    assert P.sum(axis=1) == pytest.approx(1.0)
    assert pi @ P == pytest.approx(pi)
    # marginal symbol frequency approaches the stationary weight
    p1 = sum(pi[i] for i, s in enumerate(GM_MU.eigen.states) if s[-1] == 1)
    assert abs((w[:, 5] == 1).mean() - p1) < 0.03


def test_gibbs_constants_bracket_one():
    for mu in (BERN_MU, GM_MU):
        lo, hi = mu.gibbs_constants()
        assert 0 < lo <= 1.0 <= hi


# ---------------------------------------------------------------------------
# evolution and averaging


def test_evolution_fixes_the_exact_sft_families():
    # the stationary cylinder family is a fixed point of prefix averaging
    for mu, phi, depth in ((BERN_MU, BERN, 12), (GM_MU, GM2, 12)):
        start = exact_family(mu, depth)
        out = E.evolve_average(mu.sys, phi, start, 5)
        dic = E.default_dictionary(mu.sys, depth=6)
        assert E.weakstar_discrepancy(out, mu, dic) < 1e-12
        assert out.total() == pytest.approx(1.0, abs=1e-12)
        assert out.meta["depth"] == depth - 4


def test_shift_evolution_truncates_exactly():
    # one-step average of a deterministic two-atom family, by hand
    words = np.array([[0, 0, 1], [1, 0, 1]])
    m = E.EmpiricalMeasure(FS, np.array([0.25, 0.75]), words=words)
    out = E.evolve_average(FS, BERN, m, 2)
    table = {tuple(w): v for w, v in zip(out.words, out.weights)}
    assert table[(0, 0)] == pytest.approx(0.125)      # half of [001]
    assert table[(0, 1)] == pytest.approx(0.5)        # shifted halves
    assert table[(1, 0)] == pytest.approx(0.375)
    assert out.total() == pytest.approx(1.0, abs=1e-15)


def test_invariance_residual_shrinks_like_one_over_n():
    rng = np.random.default_rng(7)
    w = S.admissible_words(FS, 12)
    m = E.EmpiricalMeasure(FS, rng.random(len(w)), words=w)
    dic = E.default_dictionary(FS, depth=4)
    for n in (4, 8):
        mu_n = E.evolve_average(FS, BERN, m, n)
        resid = E.weakstar_discrepancy(E.empirical_pushforward(mu_n), mu_n, dic)
        assert 0 < resid <= 2.0 / n


def test_torus_invariance_residual():
    mu_n = E.evolve_average(CM, GEO, cat_leaf(), 10)
    dic = E.default_dictionary(CM, kmax=4)
    resid = E.weakstar_discrepancy(E.empirical_pushforward(mu_n), mu_n, dic)
    assert resid <= 0.2


def test_two_long_cat_leaves_equidistribute():
    # separated start leaves agree with each other and with area by n = 20
    mus = [E.evolve_average(CM, GEO, cat_leaf(0.2, 0.7), 20),
           E.evolve_average(CM, GEO, cat_leaf(0.61, 0.13), 20)]
    dic = E.default_dictionary(CM, kmax=8)
    assert all(m.size <= E.DEFAULT_ATOM_BUDGET for m in mus)
    assert E.weakstar_discrepancy(mus[0], mus[1], dic) < 0.05
    assert E.weakstar_discrepancy(mus[0], LEB, dic) < 0.05


def test_short_leaf_discrepancy_decays_like_one_over_n():
    # resonant modes keep n * disc roughly constant on a short chart
    m = cat_leaf(tau=0.3, order=9)
    dic = E.default_dictionary(CM, kmax=8)
    vals = {n: E.weakstar_discrepancy(E.evolve_average(CM, GEO, m, n), LEB, dic)
            for n in (20, 40)}
    assert 1.5 < 20 * vals[20] < 4.0
    assert vals[40] == pytest.approx(vals[20] / 2, rel=0.15)


def test_budget_triggers_resampling():
    m = cat_leaf(tau=10.0, order=5)                   # 9399 cells
    out = E.evolve_average(CM, GEO, m, 20, budget=50_000, seed=1)
    assert out.size == 50_000
    assert out.meta["resample_seed"] == 1
    assert out.total() == pytest.approx(1.0, abs=1e-9)


def test_resample_preserves_moments():
    rng = np.random.default_rng(0)
    m = E.EmpiricalMeasure(CM, rng.random(300_000),
                           coords=rng.random((300_000, 2))).normalized()
    small = E.resample(m, 100_000, seed=3)
    assert small.size == 100_000
    assert small.total() == pytest.approx(1.0, abs=1e-12)
    d = E.weakstar_discrepancy(m, small, E.default_dictionary(CM, kmax=4))
    assert d < 0.01
    assert E.resample(small, 200_000) is small        # within budget: no-op


def test_horseshoe_strips_evolve_as_atoms():
    pt = S.horseshoe_point(HS, (0, 1, 0), (1, 0))
    m = R.build_reference_measure(HS, S.geometric_t(0.0),
                                  S.leaf_chart(HS, pt), 0.75, 8)
    out = E.evolve_average(HS, S.geometric_t(0.0), m, 4)
    assert out.coords is not None and out.total() == pytest.approx(1.0)
    mom = E.dictionary_moments(out, E.default_dictionary(HS))
    assert np.isfinite(mom).all()


def test_evolve_error_paths():
    w = S.admissible_words(FS, 6)
    m = E.EmpiricalMeasure(FS, np.ones(len(w)), words=w)
    with pytest.raises(S.DynamicsError, match="exceeds the atom depth"):
        E.evolve_average(FS, BERN, m, 9)
    with pytest.raises(ValueError, match="at least 1"):
        E.evolve_average(FS, BERN, m, 0)
    with pytest.raises(ValueError, match="different system"):
        E.evolve_average(GM, GM2, m, 2)
    shifted = E.EmpiricalMeasure(FS, np.ones(1), words=np.array([[0, 1]]),
                                 offset=-1)
    with pytest.raises(S.DynamicsError, match="offset 0"):
        E.evolve_average(FS, BERN, shifted, 1)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 10 - 1))
def test_evolution_conserves_mass(n, bits):
    w = S.admissible_words(FS, 10)
    weights = np.array([(bits >> (i % 10)) & 1 for i in range(len(w))],
                       dtype=float) + 0.5
    m = E.EmpiricalMeasure(FS, weights, words=w)
    out = E.evolve_average(FS, BERN, m, n)
    assert out.total() == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# convergence diagnostics


def test_convergence_report_on_the_cat_map():
    leaves = [cat_leaf(0.2, 0.7), cat_leaf(0.61, 0.13)]
    rep = E.convergence_report(CM, GEO, leaves, [2, 5, 10, 20, 40],
                               reference=LEB)
    assert rep.passed and rep.cauchy_decreasing and rep.independence_decreasing
    assert rep.reference["leaf0"][-1] < rep.reference["leaf0"][1]
    rows = rep.trace_rows()
    assert (40, "independence", rep.independence[-1]) in rows
    assert set(rep.to_dict()) >= {"schedule", "cauchy", "independence",
                                  "burn_in", "passed"}


def test_convergence_report_fixed_point_is_flat():
    leaves = [exact_family(BERN_MU, 14), exact_family(BERN_MU, 14)]
    rep = E.convergence_report(FS, BERN, leaves, [2, 4, 8], reference=BERN_MU)
    assert max(rep.independence) < 1e-12
    assert max(rep.reference["leaf1"]) < 1e-12


def test_convergence_report_validation():
    leaves = [exact_family(BERN_MU, 10)] * 2
    with pytest.raises(ValueError, match="strictly increasing"):
        E.convergence_report(FS, BERN, leaves, [4, 4, 8])
    with pytest.raises(ValueError, match="two starting leaves"):
        E.convergence_report(FS, BERN, leaves[:1], [2, 4])


# ---------------------------------------------------------------------------
# Gibbs property and the variational identity


def test_gibbs_ratio_is_one_on_product_measures():
    rep = E.gibbs_check(BERN_MU, FS, BERN, 0.0, samples=48, seed=2)
    assert abs(rep.max_ratio - 1) < 1e-12 and abs(rep.min_ratio - 1) < 1e-12
    assert rep.skipped == 0


def test_gibbs_ratio_sits_inside_certified_window():
    # depth-2 memory: the ratio depends on the head state and the tail
    # symbol, and ranges over exactly the certified constants
    rep = E.gibbs_check(GM_MU, GM, GM2, GM_MU.pressure, samples=64, seed=2)
    lo, hi = GM_MU.gibbs_constants()
    assert lo - 1e-12 <= rep.min_ratio <= rep.max_ratio <= hi + 1e-12
    assert rep.max_ratio == pytest.approx(hi, rel=1e-9)   # extremes are hit
    assert abs(rep.window_growth) < 0.10


def test_gibbs_ratio_on_exact_empirical_family():
    emp = exact_family(BERN_MU, 14)
    rep = E.gibbs_check(emp, FS, BERN, 0.0, samples=32, seed=3, min_atoms=1)
    assert abs(rep.max_ratio - 1) < 1e-12 and abs(rep.min_ratio - 1) < 1e-12


def test_gibbs_window_on_lebesgue_is_stable():
    rep = E.gibbs_check(LEB, CM, GEO, 0.0, samples=24,
                        n_range=range(8, 15), seed=1)
    # the torus is homogeneous: every sampled ratio agrees at each order
    assert all(s == pytest.approx(1.0, abs=1e-9) for _, s in rep.spread_by_n)
    assert abs(rep.window_growth) < 0.10
    # the common ratio is the flat-strip constant 4 r^2 lam
    assert rep.max_ratio == pytest.approx(4 * 0.05 ** 2 * LAM, rel=1e-3)


def test_gibbs_check_skips_underresolved_balls():
    mu = E.evolve_average(CM, GEO, cat_leaf(), 20)
    rep = E.gibbs_check(mu, CM, GEO, 0.0, samples=12, n_range=(2, 3), seed=4,
                        min_atoms=20)
    assert rep.samples == 12
    tight = E.gibbs_check(mu, CM, GEO, 0.0, samples=12, n_range=(2, 3), seed=4,
                          min_atoms=5000)
    assert tight.skipped >= rep.skipped
    assert rep.min_ratio > 0


def test_gibbs_check_validates_shift_radius():
    with pytest.raises(S.DynamicsError, match="1/2"):
        E.gibbs_check(BERN_MU, FS, BERN, 0.0, r=0.3, samples=4)


def test_variational_identity_is_exact_for_bernoulli():
    emp = exact_family(BERN_MU, 14)
    rep = E.variational_check(emp, FS, BERN, 0.0, samples=128, n=14,
                              seed=5, min_atoms=1)
    assert rep.residual < 1e-6
    # per-sample cancellation is exact; the split into h and int(phi) is a
    # sampled estimate around 0.6109 / -0.6109
    assert rep.entropy == pytest.approx(0.6109, abs=0.03)
    assert rep.energy == pytest.approx(-rep.entropy, abs=1e-12)


def test_variational_residual_on_cat_oracle():
    rep = E.variational_check(LEB, CM, GEO, 0.0, samples=64, n=100, seed=7)
    # ball-boundary transient (log 4r^2 - log lam)/n, about 3.64/n
    assert rep.residual == pytest.approx(3.64 / 100, abs=2e-3)
    assert rep.residual < 0.05 * math.log(LAM)
    with pytest.raises(S.DynamicsError, match="under-resolved"):
        E.variational_check(exact_family(BERN_MU, 8), FS, BERN, 0.0,
                            samples=8, n=6, min_atoms=10 ** 6)


# ---------------------------------------------------------------------------
# conditionals on rectangles and product structure


def test_bernoulli_conditionals_are_flat():
    rect = S.word(FS, (0, 1, 1), offset=-1)
    cond = E.conditional_estimate(BERN_MU, rect, depths=(1, 2, 3, 4))
    assert cond.stabilization.max() < 1e-12
    cmp_ = E.conditional_vs_reference_check(cond, sys=FS, phi=BERN)
    assert abs(cmp_.q3 - 1) < 1e-12 and cmp_.passed


def test_gm_conditional_window_is_depth_stable():
    rect = S.word(GM, (0, 0), offset=-1)
    cond = E.conditional_estimate(GM_MU, rect, depths=(1, 2, 3, 4),
                                  future_depth=4)
    # depth-2 potential: one symbol of memory, so deeper pasts change nothing
    assert cond.stabilization.max() < 1e-12
    cmp_ = E.conditional_vs_reference_check(cond, sys=GM, phi=GM2)
    assert cmp_.q3 > 1.0 and abs(cmp_.window_growth) < 0.10 and cmp_.passed


def test_torus_conditional_is_uniform():
    rect = E.TorusRectangle(S.torus_point(0.4, 0.4), 0.1, 0.05)
    cond = E.conditional_estimate(LEB, rect, depths=(1, 2, 3))
    assert cond.stabilization.max() == 0.0
    cmp_ = E.conditional_vs_reference_check(cond)
    assert cmp_.q3 == pytest.approx(1.0, abs=1e-12) and cmp_.passed
    with pytest.raises(ValueError, match="0.2"):
        E.TorusRectangle(S.torus_point(0.5, 0.5), 0.3, 0.1)


def test_conditional_validation():
    rect = S.word(FS, (1,), offset=0)
    with pytest.raises(ValueError, match="capped at 8"):
        E.conditional_estimate(BERN_MU, rect, depths=(1, 9))
    with pytest.raises(TypeError, match="exact shift measure"):
        E.conditional_estimate(LEB, rect)
    with pytest.raises(ValueError, match="at least 2"):
        E.conditional_estimate(GM_MU, S.word(GM, (0,), 0), depths=(1, 2),
                               leaves=[(1,)], future_depth=2)


def test_product_structure_is_exact_for_products():
    rect = S.word(FS, (0, 1, 1), offset=-1)
    rep = E.product_structure_check(BERN_MU, rect, (1, 1))
    assert rep.window == 1.0                     # past covers the memory
    assert abs(rep.max_ratio - 1) < 1e-12 and abs(rep.min_ratio - 1) < 1e-12
    rep0 = E.product_structure_check(BERN_MU, S.word(FS, (1,), 0), (1,))
    assert abs(rep0.max_ratio - 1) < 1e-12       # independence: exact anyway
    assert rep0.passed and rep0.window > 1.0


def test_gm_product_structure():
    # one remembered symbol makes the Markov cross-ratio telescope exactly
    rep = E.product_structure_check(GM_MU, S.word(GM, (0, 0), -1), (1, 0))
    assert abs(rep.max_ratio - 1) < 1e-12 and rep.passed
    # with no past the junction spread is real but inside the M-entry window
    rep0 = E.product_structure_check(GM_MU, S.word(GM, (), 0), (0,),
                                     future_depth=3)
    assert rep0.max_ratio > 1.01
    assert rep0.max_ratio <= rep0.window == pytest.approx(math.e, rel=1e-12)
    assert rep0.passed and abs(rep0.window_growth) < 0.10
    with pytest.raises(S.DynamicsError, match="misses the rectangle"):
        E.product_structure_check(GM_MU, S.word(GM, (0,), 0), (1, 1))


# ---------------------------------------------------------------------------
# pushforward of conditional slices


def bern_conditional(symbols, depth=8):
    w = S.admissible_words(FS, depth)
    sel = w[(w[:, :len(symbols)] == np.asarray(symbols)).all(axis=1)]
    masses = BERN_MU.cylinder_mass_bulk(sel)
    return E.EmpiricalMeasure(FS, masses / masses.sum(), words=sel)


def test_pushforward_of_heavy_conditional():
    # nu = mu(.|[1]): every moment defect dies after one step, so the
    # running average carries exactly (1 - mu[1]) / n
    rep = E.pushforward_conditional_check(FS, BERN_MU, bern_conditional((1,)),
                                          [1, 5, 10, 20, 40], element=(1,))
    assert rep.values == pytest.approx(tuple(0.3 / n for n in rep.schedule),
                                       abs=1e-12)
    assert rep.final < 0.02 and rep.decreasing
    assert rep.meta["element"] == (1,)


def test_pushforward_of_reweighted_conditional():
    rep = E.pushforward_conditional_check(FS, BERN_MU,
                                          bern_conditional((1, 1)), [30, 40])
    assert rep.final == pytest.approx(0.72 / 40, abs=1e-12)
    assert rep.final < 0.02


def test_pushforward_light_symbol_values():
    # the 0-symbol defects are (1 - mu[0])/n and twice that when reweighted
    rep = E.pushforward_conditional_check(FS, BERN_MU, bern_conditional((0,)),
                                          [30, 40])
    assert rep.values == pytest.approx((0.7 / 30, 0.7 / 40), abs=1e-12)
    rep2 = E.pushforward_conditional_check(FS, BERN_MU,
                                           bern_conditional((0, 0)), [30, 40])
    assert rep2.values == pytest.approx((1.4 / 30, 1.4 / 40), abs=1e-12)


def test_pushforward_window_depth_is_irrelevant():
    # the same conditional carried on deeper windows crosses from the
    # direct branch into the chain branch at a different step
    a = E.pushforward_conditional_check(FS, BERN_MU, bern_conditional((1,), 6),
                                        [1, 4, 8, 16])
    b = E.pushforward_conditional_check(FS, BERN_MU, bern_conditional((1,), 12),
                                        [1, 4, 8, 16])
    assert a.values == pytest.approx(b.values, abs=1e-13)


def test_gm_pushforward_converges():
    w = S.admissible_words(GM, 6)
    sel = w[w[:, 0] == 0]
    masses = GM_MU.cylinder_mass_bulk(sel)
    nu = E.EmpiricalMeasure(GM, masses / masses.sum(), words=sel)
    rep = E.pushforward_conditional_check(GM, GM_MU, nu, [1, 10, 40])
    assert rep.decreasing and rep.final < 0.01
    assert rep.trace_rows()[0][1] == "pushforward_discrepancy"


def test_pushforward_identity_is_immediate():
    nu = exact_family(BERN_MU, 8)
    rep = E.pushforward_conditional_check(FS, BERN_MU, nu, [1, 20])
    assert max(rep.values) < 1e-12


def test_pushforward_validation():
    with pytest.raises(ValueError, match="probability"):
        E.pushforward_conditional_check(
            FS, BERN_MU,
            E.EmpiricalMeasure(FS, np.ones(2), words=np.eye(2, 3, dtype=int)),
            [5])
    bad = np.array([[1, 1, 0, 1]])
    with pytest.raises(S.DynamicsError, match="zero mu-mass"):
        E.pushforward_conditional_check(
            GM, GM_MU, E.EmpiricalMeasure(GM, np.ones(1), words=bad), [5])
    deep = E.SftGibbsMeasure(FS, S.locally_constant(FS, 3,
                                                    list(np.zeros(8))))
    with pytest.raises(S.DynamicsError, match="transfer block"):
        E.pushforward_conditional_check(
            FS, deep, E.EmpiricalMeasure(FS, np.ones(1), words=np.array([[1]])),
            [5])
