"""Spec triples over split contexts.

The demand normal form is pinned against brute-force quantification over
every postcondition, so its bind and order are trusted by construction
before anything is built on them.  The assembled exception carrier is then
compared extensionally with a hand-written single-shot version of the same
transformer, the run-both observation is checked to map unit and sequencing
to unit and sequencing exactly, and each rule's conclusion is re-decided by
the three-clause semantic oracle, including a seeded sweep of random
derivations.
"""

import random
from itertools import product

import pytest
from hypothesis import given, settings, strategies as st

from relwp import generic as G
from relwp import programs as P
from relwp import rules as R
from relwp import specmonads as sm
from relwp.domains import UNIT, UNIT_VAL, Value, domain, product_domain, sum_domain

Z2 = domain("Z2", 2)
Z3 = domain("Z3", 3)
EL = domain("EL", 2)
ER = domain("ER", 2)

XSIG = P.exc_sig(EL)
YSIG = P.exc_sig(ER)

MONAD = G.wrelexc_monad(EL, ER)
TH = G.theta_exc_triple(EL, ER)

SUM1 = sum_domain(Z2, EL)
SUM2 = sum_domain(Z2, ER)
PAIR = product_domain(SUM1, SUM2)


def all_phis(dom):
    return [frozenset(o for o in range(dom.size) if mask >> o & 1)
            for mask in range(1 << dom.size)]


def assert_wp_equiv(w1, w2):
    fwd, back = G.wp_leq(w1, w2), G.wp_leq(w2, w1)
    assert fwd.holds and back.holds, (fwd, back, w1, w2)


def assert_triple_theta_equal(j):
    """The conclusion spec IS the observation of the conclusion programs."""
    for g1 in j.ctx.left.valuations():
        assert j.monad.leq1(j.w1(g1), j.theta.theta1(j.c1(g1))).holds
        assert j.monad.leq1(j.theta.theta1(j.c1(g1)), j.w1(g1)).holds
    for g2 in j.ctx.right.valuations():
        assert j.monad.leq2(j.w2(g2), j.theta.theta2(j.c2(g2))).holds
        assert j.monad.leq2(j.theta.theta2(j.c2(g2)), j.w2(g2)).holds
    for g1 in j.ctx.left.valuations():
        for g2 in j.ctx.right.valuations():
            seen = j.theta.theta_rel(j.c1(g1), j.c2(g2))
            assert j.monad.leq_rel(j.wrel(g1, g2), seen).holds
            assert j.monad.leq_rel(seen, j.wrel(g1, g2)).holds


# ---------------------------------------------------------------------------
# Demand normal form


def test_wp_normalizes_to_a_minimal_antichain():
    d = domain("D", 4)
    w = G.wp(d, [{0, 1}, {0}, {2, 3}, {0, 2, 3}])
    assert w.demands == frozenset({frozenset({0}), frozenset({2, 3})})


def test_wp_accepts_callables_masks_and_iterables():
    d = domain("D", 4)
    w = G.wp(d, [{0}, {2, 3}])
    assert w.at({0})
    assert w.at(lambda o: o >= 2)
    assert w.at(0b1101)
    assert not w.at({1, 2})
    assert not w.at(0)


def test_wp_rejects_out_of_range_outcomes():
    d = domain("D", 2)
    with pytest.raises(ValueError, match="out of range"):
        G.wp(d, [{3}])
    with pytest.raises(ValueError, match="out of range"):
        G.wp_ret(d, 2)


def test_order_extremes():
    d = domain("D", 3)
    mid = G.wp_ret(d, 1)
    assert G.wp_leq(mid, G.wp_unsat(d)).holds
    assert G.wp_leq(G.wp_weakest(d), mid).holds
    assert not G.wp_leq(G.wp_unsat(d), mid).holds
    assert not G.wp_leq(mid, G.wp_weakest(d)).holds


def test_order_failure_carries_a_separating_postcondition():
    d = domain("D", 3)
    v = G.wp_leq(G.wp_ret(d, 2), G.wp_ret(d, 0))
    assert not v.holds
    assert v.phi == frozenset({0})
    # the witness is a postcondition the right accepts and the left does not
    assert G.wp_ret(d, 0).at(v.phi) and not G.wp_ret(d, 2).at(v.phi)


def test_comparing_different_domains_is_an_error():
    with pytest.raises(ValueError, match="cannot compare"):
        G.wp_leq(G.wp_weakest(Z2), G.wp_weakest(Z3))


@settings(deadline=None, max_examples=60)
@given(seed=st.integers(0, 10 ** 9))
def test_order_agrees_with_quantification_over_postconditions(seed):
    rng = random.Random(seed)
    d = domain("D", 5)
    w, w2 = G.random_wp(rng, d), G.random_wp(rng, d)
    brute = all(w.at(phi) for phi in all_phis(d) if w2.at(phi))
    assert G.wp_leq(w, w2).holds == brute


@settings(deadline=None, max_examples=60)
@given(seed=st.integers(0, 10 ** 9))
def test_bind_agrees_with_the_pointwise_composite(seed):
    rng = random.Random(seed)
    d, r = domain("D", 4), domain("R", 3)
    w = G.random_wp(rng, d)
    table = [G.random_wp(rng, r) for _ in range(d.size)]
    got = G.wp_bind(w, table)
    for phi in all_phis(r):
        want = w.at({o for o in range(d.size) if table[o].at(phi)})
        assert got.at(phi) == want, (phi, got)


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 10 ** 9))
def test_bind_is_associative(seed):
    rng = random.Random(seed)
    a, b, c = domain("A", 3), domain("B", 3), domain("C", 3)
    w = G.random_wp(rng, a)
    f = [G.random_wp(rng, b) for _ in range(a.size)]
    g = [G.random_wp(rng, c) for _ in range(b.size)]
    assert_wp_equiv(G.wp_bind(G.wp_bind(w, f), g),
                    G.wp_bind(w, [G.wp_bind(x, g) for x in f]))


def test_bind_unit_laws():
    d = domain("D", 4)
    rng = random.Random(3)
    table = [G.random_wp(rng, d) for _ in range(d.size)]
    for o in range(d.size):
        assert_wp_equiv(G.wp_bind(G.wp_ret(d, o), table), table[o])
    w = G.random_wp(rng, d)
    assert_wp_equiv(G.wp_bind(w, [G.wp_ret(d, o) for o in range(d.size)]), w)


def test_bind_through_an_unsatisfiable_continuation_demands_avoidance():
    # the only surviving demands steer around the dead outcome
    d = domain("D", 2)
    w = G.wp(d, [{0}, {0, 1}])
    got = G.wp_bind(w, [G.wp_ret(d, 1), G.wp_unsat(d)])
    assert got.demands == frozenset({frozenset({1})})


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 10 ** 9))
def test_map_agrees_with_postcondition_composition(seed):
    rng = random.Random(seed)
    d, r = domain("D", 4), domain("R", 6)
    w = G.random_wp(rng, d)
    f = lambda o: (2 * o + 1) % r.size
    got = G.wp_map(w, r, f)
    for phi in all_phis(r):
        assert got.at(phi) == w.at(lambda o: f(o) in phi)


def test_bind_rejects_short_tables_and_mixed_domains():
    d = domain("D", 3)
    with pytest.raises(ValueError, match="must cover"):
        G.wp_bind(G.wp_weakest(d), [G.wp_weakest(d)])
    with pytest.raises(ValueError, match="mixes"):
        G.wp_bind(G.wp_weakest(d), [G.wp_weakest(d), G.wp_weakest(Z2), G.wp_weakest(d)])


# ---------------------------------------------------------------------------
# Carrier law batteries


def test_pure_lift_satisfies_the_triple_laws():
    rep = G.check_triple_laws(G.lift_pure(), random.Random(11), (Z2, Z3), (Z3, Z2),
                              samples=3)
    assert rep.ok, rep.failures
    assert rep.checked > 50


def test_state_lift_satisfies_the_triple_laws():
    rep = G.check_triple_laws(G.lift_state(Z2, Z3), random.Random(12), (Z2,), (Z2,),
                              samples=2)
    assert rep.ok, rep.failures


def test_state_transformer_satisfies_the_triple_laws():
    left = G.stt_rel_transform(G.lift_pure(), Z2, "left")
    rep = G.check_triple_laws(left, random.Random(13), (Z2, Z3), (Z2,), samples=2)
    assert rep.ok, rep.failures
    right = G.stt_rel_transform(G.lift_pure(), Z3, "right")
    rep = G.check_triple_laws(right, random.Random(14), (Z2,), (Z2, Z3), samples=2)
    assert rep.ok, rep.failures


def test_exception_transformer_satisfies_the_triple_laws():
    left = G.exct_rel_transform(G.lift_pure(), EL, "left")
    rep = G.check_triple_laws(left, random.Random(15), (Z2, Z3), (Z2,), samples=2)
    assert rep.ok, rep.failures
    right = G.exct_rel_transform(G.lift_pure(), ER, "right")
    rep = G.check_triple_laws(right, random.Random(16), (Z2,), (Z2, Z3), samples=2)
    assert rep.ok, rep.failures


def test_double_exception_carrier_satisfies_the_triple_laws():
    rep = G.check_triple_laws(MONAD, random.Random(17), (Z2, Z2), (Z2, Z2), samples=3)
    assert rep.ok, rep.failures
    assert rep.checked > 50


def test_transformers_stack_across_effects():
    mixed = G.exct_rel_transform(G.stt_rel_transform(G.lift_pure(), Z2, "left"),
                                 ER, "right")
    rep = G.check_triple_laws(mixed, random.Random(18), (Z2,), (Z2,), samples=1)
    assert rep.ok, rep.failures


def test_transformer_rejects_unknown_side():
    with pytest.raises(ValueError, match="side"):
        G.exct_rel_transform(G.lift_pure(), EL, "middle")
    with pytest.raises(ValueError, match="side"):
        G.stt_rel_transform(G.lift_pure(), Z2, "both")


def test_tau_is_the_identity_on_lifts():
    lp = G.lift_pure()
    w = G.random_wp(random.Random(19), product_domain(Z2, UNIT))
    assert lp.tau1(w, Z2) is w
    ls = G.lift_state(Z2, Z2)
    m = ls.gen2(random.Random(20), Z3)
    assert ls.tau2(m, Z3) is m


def test_state_transformer_unit_is_the_per_state_table():
    # fixing the entry state, the unit pairs the value with that state
    st_ = G.stt_rel_transform(G.lift_pure(), Z3, "left")
    a1, a2 = Z2.value(1), Z2.value(0)
    got = st_.ret_rel(a1, a2)
    paired = product_domain(product_domain(Z2, Z3), Z2)
    for si in range(Z3.size):
        want = G.wp_ret(paired, (a1.index * Z3.size + si) * Z2.size + a2.index)
        assert_wp_equiv(got[si], want)


def test_state_lift_bind_is_plain_spec_bind():
    # the triple bind discards its unary arguments on a lift
    ls = G.lift_state(Z2, Z2)
    rng = random.Random(21)
    space = sm.state_space(Z2, Z2, Z2, Z2)
    m = ls.gen_rel(rng, Z2, Z2)
    frel = [[ls.gen_rel(rng, Z3, Z3) for _ in range(Z2.size)] for _ in range(Z2.size)]
    got = ls.bind_rel(ls.gen1(rng, Z2), ls.gen2(rng, Z2), m,
                      [ls.gen1(rng, Z3)] * Z2.size, [ls.gen2(rng, Z3)] * Z2.size,
                      frel, Z3, Z3)
    want = sm.spec_bind(m, lambda i1, i2: frel[i1][i2])
    assert sm.spec_leq(got, want).holds and sm.spec_leq(want, got).holds
    assert space.tag == m.space.tag


# ---------------------------------------------------------------------------
# Assembled vs hand-written exception carrier


def test_exception_units_agree_with_the_hand_written_carrier():
    for a1 in Z2.values():
        for a2 in Z2.values():
            assert_wp_equiv(MONAD.ret_rel(a1, a2), G.wrelexc_ret(a1, EL, a2, ER))


def _pad1(w):
    return G.wp(product_domain(w.dom, UNIT), w.demands)


def _pad2(w):
    return G.wp(product_domain(UNIT, w.dom), w.demands)


def test_exception_binds_agree_with_the_hand_written_carrier():
    s1b = sum_domain(Z3, EL)
    s2b = sum_domain(Z3, ER)
    pairb = product_domain(s1b, s2b)
    for seed in range(60):
        rng = random.Random(seed)
        wm = G.random_wp(rng, PAIR)
        f1 = [G.random_wp(rng, s1b) for _ in range(Z2.size)]
        f2 = [G.random_wp(rng, s2b) for _ in range(Z2.size)]
        frel = [[G.random_wp(rng, pairb) for _ in range(Z2.size)]
                for _ in range(Z2.size)]
        hand = G.wrelexc_bind(wm, f1, f2, frel, EL, ER, Z3, Z3)
        built = MONAD.bind_rel(MONAD.gen1(rng, Z2), MONAD.gen2(rng, Z2), wm,
                               [_pad1(x) for x in f1], [_pad2(x) for x in f2],
                               frel, Z3, Z3)
        assert_wp_equiv(hand, built)


def test_exception_bind_routes_a_left_raise_through_the_right_continuation():
    # left already raised e0, right still runs: the raise is pinned while
    # the right continuation picks its result
    wm = G.wp(PAIR, [{G.inr_index(Z2, EL, 0) * SUM2.size + 1}])
    f2 = [G.wp_ret(SUM2, 1 - a) for a in range(Z2.size)]
    got = G.wrelexc_bind(wm, [G.wp_weakest(SUM1)] * 2, f2,
                         [[G.wp_weakest(PAIR)] * 2] * 2, EL, ER, Z2, Z2)
    want = G.wp(PAIR, [{G.inr_index(Z2, EL, 0) * SUM2.size + 0}])
    assert_wp_equiv(got, want)


def test_exception_bind_pins_double_raises():
    k = G.inr_index(Z2, EL, 1) * SUM2.size + G.inr_index(Z2, ER, 0)
    wm = G.wp(PAIR, [{k}])
    got = G.wrelexc_bind(wm, [G.wp_unsat(SUM1)] * 2, [G.wp_unsat(SUM2)] * 2,
                         [[G.wp_unsat(PAIR)] * 2] * 2, EL, ER, Z2, Z2)
    assert_wp_equiv(got, G.wp(PAIR, [{k}]))


def test_exception_bind_checks_the_middle_domain():
    with pytest.raises(ValueError, match="outcome pairs"):
        G.wrelexc_bind(G.wp_weakest(SUM1), [G.wp_weakest(SUM1)] * 2,
                       [G.wp_weakest(SUM2)] * 2, [[G.wp_weakest(PAIR)] * 2] * 2,
                       EL, ER, Z2, Z2)


# ---------------------------------------------------------------------------
# Simulation spec


def test_simulation_spec_excludes_exactly_the_left_only_raises():
    w = G.simulation_spec(Z2, EL, Z2, ER)
    (demand,) = w.demands
    for o1 in range(SUM1.size):
        for o2 in range(SUM2.size):
            excluded = o1 >= Z2.size and o2 < Z2.size
            assert ((o1 * SUM2.size + o2) in demand) == (not excluded)


def test_simulation_spec_is_closed_under_sequencing():
    simA = G.simulation_spec(Z2, EL, Z2, ER)
    simB = G.simulation_spec(Z3, EL, Z3, ER)
    rng = random.Random(22)
    f2 = [G.random_wp(rng, sum_domain(Z3, ER)) for _ in range(Z2.size)]
    got = G.wrelexc_bind(simA, [G.wp_weakest(sum_domain(Z3, EL))] * Z2.size, f2,
                         [[simB] * Z2.size for _ in range(Z2.size)],
                         EL, ER, Z3, Z3)
    assert_wp_equiv(got, simB)


def test_simulation_spec_program_instances():
    sim = G.simulation_spec(Z2, EL, Z2, ER)
    both = TH.theta_rel(P.throw(XSIG, EL.value(1), Z2), P.throw(YSIG, ER.value(0), Z2))
    assert G.wp_leq(both, sim).holds
    rets = TH.theta_rel(P.ret(XSIG, Z2.value(0)), P.ret(YSIG, Z2.value(1)))
    assert G.wp_leq(rets, sim).holds
    leaky = TH.theta_rel(P.throw(XSIG, EL.value(0), Z2), P.ret(YSIG, Z2.value(0)))
    v = G.wp_leq(leaky, sim)
    assert not v.holds
    # the separating postcondition is the simulation demand itself
    assert not leaky.at(v.phi) and sim.at(v.phi)


# ---------------------------------------------------------------------------
# The run-both observation


def test_observation_is_strict_for_unit_and_sequencing():
    rep = G.check_exc_strictness(EL, ER, Z2, depth=3)
    assert rep.ok, rep.failures[:5]
    assert rep.checked > 4000


def test_observation_rejects_foreign_signatures():
    with pytest.raises(ValueError, match="exceptions over"):
        TH.theta1(P.ret(P.exc_sig(Z3), Z2.value(0)))
    with pytest.raises(ValueError, match="exceptions over"):
        TH.theta1(P.get_state(P.state_sig(Z2)))


def test_observation_demands_exactly_the_joint_outcome():
    c1 = P.catch(P.throw(XSIG, EL.value(1), Z2), lambda e: P.ret(XSIG, Z2.value(e.index)))
    c2 = P.throw(YSIG, ER.value(0), Z2)
    w = TH.theta_rel(c1, c2)
    k = G.inl_index(Z2, EL, 1) * SUM2.size + G.inr_index(Z2, ER, 0)
    assert w.demands == frozenset({frozenset({k})})


# ---------------------------------------------------------------------------
# Judgments and the three-clause oracle


def _ret_judgment(a1, a2):
    return G.apply_full_rule("Ret", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
                             a1=Z2.value(a1), a2=Z2.value(a2))


def test_judgments_probe_their_families():
    with pytest.raises(ValueError, match="Program families"):
        G.full_judgment(MONAD, TH, lambda g: 42, lambda g: P.ret(YSIG, Z2.value(0)),
                        G.wp_weakest(PAIR), G.wp_weakest(PAIR), G.wp_weakest(PAIR))


def test_oracle_reports_the_failing_clause_and_valuation():
    ctx = G.SplitContext(right=R.Env((("y", Z2),)))
    j = G.full_judgment(
        MONAD, TH,
        lambda g1: P.ret(XSIG, Z2.value(0)),
        lambda g2: P.ret(YSIG, g2[0]),
        lambda g1: TH.theta1(P.ret(XSIG, Z2.value(0))),
        lambda g2: TH.theta2(P.ret(YSIG, Z2.value(0))),  # wrong at y=1
        lambda g1, g2: G.wp_unsat(PAIR),
        ctx,
    )
    v = G.full_oracle_check(j)
    assert not v.holds
    assert v.clause == "right"
    assert v.valuation == ((Z2.value(1),),)
    assert v.order is not None and not v.order.holds


def test_oracle_passes_exact_specs():
    j = _ret_judgment(0, 1)
    v = G.full_oracle_check(j)
    assert v.holds and v.checked == 3
    assert_triple_theta_equal(j)


def test_parts_and_observed_agree_on_axioms():
    j = _ret_judgment(1, 1)
    parts, seen = j.parts(), j.observed()
    assert_wp_equiv(parts.w1, seen.w1)
    assert_wp_equiv(parts.w2, seen.w2)
    assert_wp_equiv(parts.wrel, seen.wrel)


# ---------------------------------------------------------------------------
# Rules: axioms


def test_ret_rule_is_the_observation():
    for a1, a2 in product(range(2), range(2)):
        j = _ret_judgment(a1, a2)
        assert G.full_oracle_check(j).holds
        assert_triple_theta_equal(j)


def test_ret_rule_checks_signatures_against_the_carrier():
    with pytest.raises(R.RuleError, match="carrier's exceptions"):
        G.apply_full_rule("Ret", monad=MONAD, theta=TH, sig1=P.exc_sig(Z3), sig2=YSIG,
                          a1=Z2.value(0), a2=Z2.value(0))


def test_throw_left_rule_is_the_observation():
    for e, a2 in product(range(EL.size), range(Z2.size)):
        j = G.apply_full_rule("ThrowL", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
                              exc=EL.value(e), a2=Z2.value(a2), result1=Z2)
        assert G.full_oracle_check(j).holds
        assert_triple_theta_equal(j)


def test_throw_right_rule_is_the_observation():
    for e, a1 in product(range(ER.size), range(Z2.size)):
        j = G.apply_full_rule("ThrowR", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
                              exc=ER.value(e), a1=Z2.value(a1), result2=Z2)
        assert G.full_oracle_check(j).holds
        assert_triple_theta_equal(j)


def test_throw_rules_run_under_a_context():
    ctx = G.SplitContext(R.Env((("x", EL),)), R.Env((("y", Z2),)))
    j = G.apply_full_rule("ThrowL", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
                          exc=lambda g1: g1[0], a2=lambda g2: g2[0],
                          result1=Z2, ctx=ctx)
    assert G.full_oracle_check(j).holds
    assert_triple_theta_equal(j)


def test_throw_rules_need_the_canonical_carrier():
    with pytest.raises(R.RuleError, match="canonical exception carrier"):
        G.apply_full_rule("ThrowL", monad=G.lift_pure(), theta=TH, sig1=XSIG,
                          sig2=YSIG, exc=EL.value(0), a2=Z2.value(0), result1=Z2)


# ---------------------------------------------------------------------------
# Rules: weakening


def test_weaken_raises_all_three_components():
    j = _ret_judgment(0, 0)
    jw = G.apply_full_rule("Weaken", (j,),
                           w1=G.wp_unsat(product_domain(SUM1, UNIT)),
                           w2=G.wp_unsat(product_domain(UNIT, SUM2)),
                           wrel=G.wp_unsat(PAIR))
    v = G.full_oracle_check(jw)
    assert v.holds


def test_weaken_to_the_simulation_spec():
    j = _ret_judgment(0, 1)
    jw = G.apply_full_rule("Weaken", (j,), wrel=G.simulation_spec(Z2, EL, Z2, ER))
    assert G.full_oracle_check(jw).holds


def test_weaken_rejects_a_non_simulable_premise():
    jl = G.apply_full_rule("ThrowL", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
                           exc=EL.value(0), a2=Z2.value(0), result1=Z2)
    with pytest.raises(R.RuleError, match="not above"):
        G.apply_full_rule("Weaken", (jl,), wrel=G.simulation_spec(Z2, EL, Z2, ER))


def test_weaken_rejects_lowering_a_unary_component():
    j = _ret_judgment(0, 0)
    with pytest.raises(R.RuleError, match="left target"):
        G.apply_full_rule("Weaken", (j,), w1=G.wp_weakest(product_domain(SUM1, UNIT)))


# ---------------------------------------------------------------------------
# Rules: sequencing


def _cont_judgment():
    """x1 ~ x2 with exact specs, one variable per side."""
    ctx = G.SplitContext(R.Env((("x1", Z2),)), R.Env((("x2", Z2),)))
    return G.full_judgment(
        MONAD, TH,
        lambda g1: P.ret(XSIG, g1[0]),
        lambda g2: P.ret(YSIG, g2[0]),
        lambda g1: MONAD.ret1(g1[0]),
        lambda g2: MONAD.ret2(g2[0]),
        lambda g1, g2: MONAD.ret_rel(g1[0], g2[0]),
        ctx,
    )


def test_bind_rule_after_a_left_throw():
    jm = G.apply_full_rule("ThrowL", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
                           exc=EL.value(1), a2=Z2.value(0), result1=Z2)
    jb = G.apply_full_rule("Bind", (jm, _cont_judgment()))
    assert G.full_oracle_check(jb).holds
    assert_triple_theta_equal(jb)
    # the raise skips the left continuation: outcome stays (raise 1, return 0)
    k = G.inr_index(Z2, EL, 1) * SUM2.size + G.inl_index(Z2, ER, 0)
    assert jb.wrel((), ()).demands == frozenset({frozenset({k})})


def test_bind_rule_composes_rets():
    jm = _ret_judgment(1, 0)
    jb = G.apply_full_rule("Bind", (jm, _cont_judgment()))
    assert G.full_oracle_check(jb).holds
    assert_triple_theta_equal(jb)
    k = G.inl_index(Z2, EL, 1) * SUM2.size + G.inl_index(Z2, ER, 0)
    assert jb.wrel((), ()).demands == frozenset({frozenset({k})})


def test_bind_requires_one_fresh_variable_per_side():
    jm = _ret_judgment(0, 0)
    bad_ctx = G.SplitContext(R.Env((("x1", Z2), ("x1b", Z2))), R.Env((("x2", Z2),)))
    jf = G.full_judgment(
        MONAD, TH,
        lambda g1: P.ret(XSIG, g1[0]), lambda g2: P.ret(YSIG, g2[0]),
        lambda g1: MONAD.ret1(g1[0]), lambda g2: MONAD.ret2(g2[0]),
        lambda g1, g2: MONAD.ret_rel(g1[0], g2[0]),
        bad_ctx,
    )
    with pytest.raises(R.RuleError, match="left premise context"):
        G.apply_full_rule("Bind", (jm, jf))


def test_bind_requires_matching_bound_domains():
    jm = G.apply_full_rule("Ret", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
                           a1=Z3.value(0), a2=Z2.value(0))
    with pytest.raises(R.RuleError, match="left results"):
        G.apply_full_rule("Bind", (jm, _cont_judgment()))


def test_bind_rejects_premises_over_different_carriers():
    other = G.wrelexc_monad(EL, EL)
    jm = G.apply_full_rule("Ret", monad=other, theta=G.theta_exc_triple(EL, EL),
                           sig1=XSIG, sig2=P.exc_sig(EL),
                           a1=Z2.value(0), a2=Z2.value(0))
    with pytest.raises(R.RuleError, match="different spec carriers"):
        G.apply_full_rule("Bind", (jm, _cont_judgment()))


def test_left_spec_cannot_serve_two_right_continuations():
    # With a joined context the left premise spec could mention the right
    # variable; the split context makes that unwritable.  Writing the two
    # candidate left specs by hand shows no single choice covers both
    # right-hand continuations, so the split is necessary, not cosmetic.
    borrow0 = TH.theta1(P.ret(XSIG, Z2.value(0)))
    borrow1 = TH.theta1(P.throw(XSIG, EL.value(0), Z2))
    assert not (G.wp_leq(borrow0, borrow1).holds and G.wp_leq(borrow1, borrow0).holds)
    table0 = [borrow0, borrow0]
    table1 = [borrow1, borrow1]
    m = TH.theta1(P.ret(XSIG, Z2.value(0)))
    w_using0 = MONAD.bind1(m, table0, Z2)
    w_using1 = MONAD.bind1(m, table1, Z2)
    assert not (G.wp_leq(w_using0, w_using1).holds and G.wp_leq(w_using1, w_using0).holds)


# ---------------------------------------------------------------------------
# Rules: catch


def _handler_judgment():
    ctx = G.SplitContext(R.Env((("e1", EL),)), R.Env((("e2", ER),)))
    return G.full_judgment(
        MONAD, TH,
        lambda g1: P.ret(XSIG, Z2.value(g1[0].index)),
        lambda g2: P.ret(YSIG, Z2.value(1 - g2[0].index)),
        lambda g1: MONAD.ret1(Z2.value(g1[0].index)),
        lambda g2: MONAD.ret2(Z2.value(1 - g2[0].index)),
        lambda g1, g2: MONAD.ret_rel(Z2.value(g1[0].index), Z2.value(1 - g2[0].index)),
        ctx,
    )


def test_catch_rule_substitutes_handlers_for_raises():
    body = G.apply_full_rule("ThrowL", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
                             exc=EL.value(1), a2=Z2.value(0), result1=Z2)
    jc = G.apply_full_rule("Catch", (body, _handler_judgment()))
    assert G.full_oracle_check(jc).holds
    assert_triple_theta_equal(jc)
    # handler turned (raise 1, return 0) into (return 1, return 0)
    tag, val = P.run_exc(jc.c1(()))
    assert tag == P.OK and val.index == 1
    k = G.inl_index(Z2, EL, 1) * SUM2.size + G.inl_index(Z2, ER, 0)
    assert jc.wrel((), ()).demands == frozenset({frozenset({k})})


def test_catch_rule_passes_normal_results_through():
    body = _ret_judgment(0, 1)
    jc = G.apply_full_rule("Catch", (body, _handler_judgment()))
    assert G.full_oracle_check(jc).holds
    assert_triple_theta_equal(jc)


def test_catch_with_a_double_raise_pairs_both_handlers():
    ctx = G.EMPTY_SPLIT
    body = G.full_judgment(
        MONAD, TH,
        P.throw(XSIG, EL.value(0), Z2), P.throw(YSIG, ER.value(1), Z2),
        TH.theta1(P.throw(XSIG, EL.value(0), Z2)),
        TH.theta2(P.throw(YSIG, ER.value(1), Z2)),
        TH.theta_rel(P.throw(XSIG, EL.value(0), Z2), P.throw(YSIG, ER.value(1), Z2)),
        ctx,
    )
    jc = G.apply_full_rule("Catch", (body, _handler_judgment()))
    assert G.full_oracle_check(jc).holds
    assert_triple_theta_equal(jc)
    k = G.inl_index(Z2, EL, 0) * SUM2.size + G.inl_index(Z2, ER, 0)
    assert jc.wrel((), ()).demands == frozenset({frozenset({k})})


def test_catch_requires_exception_bound_handlers():
    body = _ret_judgment(0, 0)
    bad_ctx = G.SplitContext(R.Env((("e1", Z3),)), R.Env((("e2", ER),)))
    jerr = G.full_judgment(
        MONAD, TH,
        lambda g1: P.ret(XSIG, Z2.value(0)), lambda g2: P.ret(YSIG, Z2.value(0)),
        lambda g1: MONAD.ret1(Z2.value(0)), lambda g2: MONAD.ret2(Z2.value(0)),
        lambda g1, g2: MONAD.ret_rel(Z2.value(0), Z2.value(0)),
        bad_ctx,
    )
    with pytest.raises(R.RuleError, match="one exception per side"):
        G.apply_full_rule("Catch", (body, jerr))


def test_catch_requires_stable_handler_results():
    body = _ret_judgment(0, 0)
    ctx = G.SplitContext(R.Env((("e1", EL),)), R.Env((("e2", ER),)))
    jerr = G.full_judgment(
        MONAD, TH,
        lambda g1: P.ret(XSIG, Z3.value(0)), lambda g2: P.ret(YSIG, Z2.value(0)),
        lambda g1: MONAD.ret1(Z3.value(0)), lambda g2: MONAD.ret2(Z2.value(0)),
        lambda g1, g2: MONAD.ret_rel(Z3.value(0), Z2.value(0)),
        ctx,
    )
    with pytest.raises(R.RuleError, match="left handler result"):
        G.apply_full_rule("Catch", (body, jerr))


# ---------------------------------------------------------------------------
# Rules: case


def _branch_judgment(dom1, dom2, mk):
    ctx = G.SplitContext(R.Env((("u1", dom1),)), R.Env((("u2", dom2),)))
    c1f, c2f = mk
    return G.full_judgment(
        MONAD, TH,
        c1f, c2f,
        lambda g1: TH.theta1(c1f(g1)),
        lambda g2: TH.theta2(c2f(g2)),
        lambda g1, g2: TH.theta_rel(c1f(g1), c2f(g2)),
        ctx,
    )


def test_case_rule_dispatches_on_matching_tags():
    jl = _branch_judgment(Z2, Z2, (lambda g1: P.ret(XSIG, g1[0]),
                                   lambda g2: P.ret(YSIG, g2[0])))
    jr = _branch_judgment(Z3, Z3, (lambda g1: P.throw(XSIG, EL.value(0), Z2),
                                   lambda g2: P.throw(YSIG, ER.value(0), Z2)))
    jc = G.apply_full_rule("Case", (jl, jr), x1="s1", x2="s2")
    v = G.full_oracle_check(jc)
    assert v.holds
    scr1 = sum_domain(Z2, Z3)
    assert jc.ctx.left.vars == (("s1", scr1),)
    # left-tag points reproduce the left branch
    g1 = (Value(scr1, G.inl_index(Z2, Z3, 1)),)
    g2 = (Value(scr1, G.inl_index(Z2, Z3, 0)),)
    assert_wp_equiv(jc.wrel(g1, g2), jl.wrel((Z2.value(1),), (Z2.value(0),)))


def test_case_rule_claims_nothing_across_tags():
    jl = _branch_judgment(Z2, Z2, (lambda g1: P.ret(XSIG, g1[0]),
                                   lambda g2: P.ret(YSIG, g2[0])))
    jr = _branch_judgment(Z3, Z3, (lambda g1: P.throw(XSIG, EL.value(0), Z2),
                                   lambda g2: P.throw(YSIG, ER.value(0), Z2)))
    jc = G.apply_full_rule("Case", (jl, jr), x1="s1", x2="s2")
    scr = sum_domain(Z2, Z3)
    g1 = (Value(scr, G.inl_index(Z2, Z3, 0)),)
    g2 = (Value(scr, G.inr_index(Z2, Z3, 2)),)
    assert_wp_equiv(jc.wrel(g1, g2), MONAD.unsat_rel(Z2, Z2))
    # vacuous points cannot fail the oracle
    assert G.full_oracle_check(jc).holds


def test_case_over_a_unit_sum_is_branch_relabeling():
    # 1 + 1 is the booleans: the case conclusion at each tag is literally
    # the corresponding branch judgment
    jl = _branch_judgment(UNIT, UNIT, (lambda g1: P.ret(XSIG, Z2.value(0)),
                                       lambda g2: P.ret(YSIG, Z2.value(0))))
    jr = _branch_judgment(UNIT, UNIT, (lambda g1: P.throw(XSIG, EL.value(1), Z2),
                                       lambda g2: P.throw(YSIG, ER.value(1), Z2)))
    jc = G.apply_full_rule("Case", (jl, jr), x1="b1", x2="b2")
    assert G.full_oracle_check(jc).holds
    two = sum_domain(UNIT, UNIT)
    for tag in range(2):
        g = (Value(two, tag),)
        src = jl if tag == 0 else jr
        assert_wp_equiv(jc.wrel(g, g), src.wrel((UNIT_VAL,), (UNIT_VAL,)))


def test_case_rejects_mismatched_branch_results():
    jl = _branch_judgment(Z2, Z2, (lambda g1: P.ret(XSIG, g1[0]),
                                   lambda g2: P.ret(YSIG, g2[0])))
    jr = _branch_judgment(Z2, Z2, (lambda g1: P.ret(XSIG, Z3.value(0)),
                                   lambda g2: P.ret(YSIG, g2[0])))
    with pytest.raises(R.RuleError, match="branch result domains"):
        G.apply_full_rule("Case", (jl, jr), x1="s1", x2="s2")


def test_case_rejects_shadowed_scrutinee_names():
    base1 = R.Env((("v", Z2),))
    ctxl = G.SplitContext(base1.extend(("u1", Z2)), R.Env((("u2", Z2),)))
    jl = G.full_judgment(
        MONAD, TH,
        lambda g1: P.ret(XSIG, g1[1]), lambda g2: P.ret(YSIG, g2[0]),
        lambda g1: MONAD.ret1(g1[1]), lambda g2: MONAD.ret2(g2[0]),
        lambda g1, g2: MONAD.ret_rel(g1[1], g2[0]),
        ctxl,
    )
    with pytest.raises(R.RuleError, match="already bound"):
        G.apply_full_rule("Case", (jl, jl), x1="v", x2="s2")


# ---------------------------------------------------------------------------
# Registry plumbing


def test_rule_registry_rejects_unknown_names_arity_and_params():
    with pytest.raises(R.RuleError, match="unknown rule"):
        G.apply_full_rule("Frobnicate")
    with pytest.raises(R.RuleError, match="premises"):
        G.apply_full_rule("Bind", (_ret_judgment(0, 0),))
    with pytest.raises(R.RuleError, match="missing parameter"):
        G.apply_full_rule("Ret", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
                          a1=Z2.value(0))
    with pytest.raises(R.RuleError, match="unknown parameter"):
        G.apply_full_rule("Ret", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
                          a1=Z2.value(0), a2=Z2.value(0), horizon=3)


def test_rule_names_are_stable():
    assert G.full_rule_names() == ("Bind", "Case", "Catch", "Ret", "ThrowL",
                                   "ThrowR", "Weaken")


# ---------------------------------------------------------------------------
# Seeded derivation sweep


def _const_family(rng, env, dom):
    vals = {g: dom.value(rng.randrange(dom.size)) for g in env.valuations()}
    return lambda g: vals[g]


def _relax_wp(rng, w):
    kept = [d for d in w.demands if rng.random() < 0.8]
    grown = [frozenset(d | {rng.randrange(w.dom.size)}) if rng.random() < 0.5 else d
             for d in kept]
    return G.wp(w.dom, grown)


def _random_full_derivation(rng, ctx, depth):
    if depth == 0:
        kind = rng.choice(("ret", "ret", "throwl", "throwr"))
        if kind == "ret":
            return G.apply_full_rule(
                "Ret", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
                a1=_const_family(rng, ctx.left, Z2),
                a2=_const_family(rng, ctx.right, Z2), ctx=ctx)
        if kind == "throwl":
            return G.apply_full_rule(
                "ThrowL", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
                exc=_const_family(rng, ctx.left, EL),
                a2=_const_family(rng, ctx.right, Z2), result1=Z2, ctx=ctx)
        return G.apply_full_rule(
            "ThrowR", monad=MONAD, theta=TH, sig1=XSIG, sig2=YSIG,
            exc=_const_family(rng, ctx.right, ER),
            a1=_const_family(rng, ctx.left, Z2), result2=Z2, ctx=ctx)
    kind = rng.choice(("bind", "catch", "weaken"))
    if kind == "bind":
        jm = _random_full_derivation(rng, ctx, depth - 1)
        n = sum(len(e.vars) for e in (ctx.left, ctx.right))
        ext = G.SplitContext(ctx.left.extend((f"x{n}", Z2)),
                             ctx.right.extend((f"y{n}", Z2)))
        jf = _random_full_derivation(rng, ext, depth - 1)
        return G.apply_full_rule("Bind", (jm, jf))
    if kind == "catch":
        body = _random_full_derivation(rng, ctx, depth - 1)
        n = sum(len(e.vars) for e in (ctx.left, ctx.right))
        ext = G.SplitContext(ctx.left.extend((f"e{n}", EL)),
                             ctx.right.extend((f"f{n}", ER)))
        jerr = _random_full_derivation(rng, ext, depth - 1)
        return G.apply_full_rule("Catch", (body, jerr))
    j = _random_full_derivation(rng, ctx, depth - 1)
    w1 = {g: _relax_wp(rng, j.w1(g)) for g in ctx.left.valuations()}
    w2 = {g: _relax_wp(rng, j.w2(g)) for g in ctx.right.valuations()}
    wrel = {(g1, g2): _relax_wp(rng, j.wrel(g1, g2))
            for g1 in ctx.left.valuations() for g2 in ctx.right.valuations()}
    return G.apply_full_rule("Weaken", (j,),
                             w1=lambda g: w1[g], w2=lambda g: w2[g],
                             wrel=lambda g1, g2: wrel[(g1, g2)])


@settings(deadline=None, max_examples=60)
@given(seed=st.integers(0, 10 ** 9))
def test_random_derivations_are_sound(seed):
    rng = random.Random(seed)
    j = _random_full_derivation(rng, G.EMPTY_SPLIT, rng.choice((1, 2, 2)))
    v = G.full_oracle_check(j)
    assert v.holds, (seed, v)
