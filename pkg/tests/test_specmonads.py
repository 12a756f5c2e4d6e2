"""Spec carriers: units, binds, embeddings, and the comparison procedure.

Reference transformers are written out longhand from their defining
formulas, independently of the library's fast forms, so every check
pins behaviour rather than echoing the implementation.
"""

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from relwp import lp
from relwp import specmonads as sm
from relwp.domains import BOOL, UNIT, Value, domain
from relwp.programs import IN, OUT, bind, get, get_state, put, ret, run_state, state_sig

Z2 = domain("Z2", 2)
Z3 = domain("Z3", 3)
Z4 = domain("Z4", 4)

F = Fraction


# ---------------------------------------------------------------------------
# Outcome spaces


def test_space_size_arithmetic():
    assert sm.pure_space(Z3, Z4).size == 12
    assert sm.state_space(Z3, Z2, Z3, Z2).size == 36
    assert sm.state_space(Z3, Z2, Z3, Z2).point_count == 4
    assert sm.err_space(Z2, Z3).size == 7  # 6 value pairs + the raised outcome
    assert sm.prob_space(Z2, Z2).size == 4
    assert sm.pp_state_space(Z2, Z2, Z2, Z2).size == 64  # (2*2*2) squared


def test_io_outcome_enumeration_counts():
    space = sm.io_space(Z2, Z2, Z2, Z2, Z2, Z2)
    # per side: one empty extension plus 4 one-event extensions
    assert len(space.io_outcomes_at(((), ()), 0)) == 4
    assert len(space.io_outcomes_at(((), ()), 1)) == 4 * 5 * 5


def test_state_outcome_roundtrip():
    space = sm.state_space(Z3, Z2, Z4, Z2)
    for a1 in range(3):
        for s1 in range(2):
            for a2 in range(4):
                for s2 in range(2):
                    o = space.st_outcome(a1, s1, a2, s2)
                    assert space.st_split(o) == (a1, s1, a2, s2)


def test_postcondition_validation():
    space = sm.pure_space(Z2, Z2)
    phi = sm.postcondition(space, [0, 3])
    assert phi(0) and phi(3) and not phi(1)
    with pytest.raises(ValueError):
        sm.postcondition(space, [7])
    prob = sm.prob_space(Z2, Z2)
    with pytest.raises(ValueError):
        sm.postcondition(prob, [F(1, 2)] * 3)
    with pytest.raises(ValueError):
        sm.postcondition(prob, [F(3, 2)] + [F(0)] * 3)


# ---------------------------------------------------------------------------
# Units


def test_ret_state_matches_display():
    # fun phi (s1,s2) -> phi ((a1,s1),(a2,s2)), with a1=1, a2=2
    space = sm.state_space(Z3, Z2, Z3, Z2)
    w = sm.spec_ret(space, Z3.value(1), Z3.value(2))

    def reference(phi, pt):
        s1, s2 = space.point_split(pt)
        return phi(space.st_outcome(1, s1, 2, s2))

    rng = random.Random(7)
    for pt in space.points():
        for _ in range(50):
            phi = frozenset(o for o in space.outcomes() if rng.random() < 0.5)
            assert w.at(phi, pt) == reference(lambda o: o in phi, pt)


def test_ret_pp_pure_matches_display():
    space = sm.pp_pure_space(Z3, Z3)
    w = sm.spec_ret(space, Z3.value(1), Z3.value(2))
    assert w.pre == (True,)
    hit = 1 * 3 + 2
    assert all(w.post[o] == (o == hit) for o in space.outcomes())


def test_ret_pp_state_keeps_state_fixed():
    space = sm.pp_state_space(Z2, Z2, Z2, Z2)
    w = sm.spec_ret(space, Z2.value(1), Z2.value(0))
    assert all(w.pre)
    for o in space.outcomes():
        si1, a1, sf1, si2, a2, sf2 = space.pp_post_split(o)
        expected = a1 == 1 and a2 == 0 and si1 == sf1 and si2 == sf2
        assert w.post[o] == expected


def test_ret_prob_is_point_mass():
    space = sm.prob_space(Z3, Z3)
    w = sm.spec_ret(space, Z3.value(2), Z3.value(2))
    rng = random.Random(3)
    for _ in range(20):
        phi = tuple(F(rng.randrange(5), 4) for _ in space.outcomes())
        assert w.at(phi) == phi[2 * 3 + 2]


def test_ret_err_demands_the_value_pair():
    space = sm.err_space(Z2, Z2)
    w = sm.spec_ret(space, Z2.value(0), Z2.value(1))
    assert w.demonic_at(0) == frozenset({space.err_ok(0, 1)})
    assert w.at({space.err_ok(0, 1)}, 0)
    assert not w.at({space.err_bad()}, 0)


def test_ret_domain_mismatch_rejected():
    space = sm.pure_space(Z2, Z2)
    with pytest.raises(ValueError):
        sm.spec_ret(space, Z3.value(1), Z2.value(0))


# ---------------------------------------------------------------------------
# Binds


def test_bind_left_unit_state():
    space = sm.state_space(Z3, Z2, Z3, Z2)
    wf = lambda i1, i2: sm.spec_ret(space, Z3.value((i1 + 1) % 3), Z3.value(i2))
    w = sm.spec_bind(sm.spec_ret(space, Z3.value(1), Z3.value(2)), wf)
    assert sm.spec_equiv(w, wf(1, 2)).holds


def test_bind_state_against_program_oracle():
    # wm observes (get, get); the continuation is a constant spec.  The
    # composite must equal the transformer read off by running the
    # composed programs directly.
    s_dom = Z2
    sig = state_sig(s_dom)
    c1 = bind(get_state(sig), lambda v: put(sig, s_dom.value(1 - v.index), ret(sig, Value(UNIT, 0))))
    c2 = bind(get_state(sig), lambda v: ret(sig, v))
    space = sm.state_space(UNIT, s_dom, s_dom, s_dom)

    def run_transformer(p1, p2):
        def body(phi, pt):
            s1, s2 = space.point_split(pt)
            v1, f1 = run_state(p1, s_dom.value(s1))
            v2, f2 = run_state(p2, s_dom.value(s2))
            return phi(space.st_outcome(v1.index, f1.index, v2.index, f2.index))
        return sm.closure_spec(space, body)

    mid = sm.state_space(s_dom, s_dom, s_dom, s_dom)
    wm_table = []
    for pt in mid.points():
        s1, s2 = mid.point_split(pt)
        wm_table.append(frozenset({mid.st_outcome(s1, s1, s2, s2)}))
    wm = sm.demonic_spec(mid, wm_table)

    tail1 = lambda v: put(sig, s_dom.value(1 - v.index), ret(sig, Value(UNIT, 0)))
    tail2 = lambda v: ret(sig, v)
    wf = lambda i1, i2: run_transformer(tail1(s_dom.value(i1)), tail2(s_dom.value(i2)))
    composed = sm.spec_bind(wm, wf)
    direct = run_transformer(c1, c2)
    assert sm.spec_equiv(composed, direct, cap=2 ** 16).holds


def test_bind_pp_pure_matches_display():
    space = sm.pp_pure_space(Z2, Z2)
    post = [o in {0 * 2 + 1, 1 * 2 + 0} for o in space.outcomes()]
    w = sm.pp_spec(space, [True], post)

    def f(i1, i2):
        return sm.pp_spec(space, [i1 == 0], [o == i1 * 2 + i2 for o in space.outcomes()])

    out = sm.spec_bind(w, f)
    # pre' = pre and (forall pairs in post, pre of the continuation);
    # the pair (1,0) lands in a continuation with a false precondition.
    assert out.pre == (False,)
    assert tuple(out.post) == tuple(post)


def test_bind_err_routes_raises_past_the_continuation():
    space = sm.err_space(Z2, Z2)
    raised = sm.demonic_spec(space, [frozenset({space.err_bad()})])
    out = sm.spec_bind(raised, lambda i1, i2: sm.spec_ret(space, Z2.value(i1), Z2.value(i2)))
    assert out.demonic_at(0) == frozenset({space.err_bad()})
    mixed = sm.demonic_spec(space, [frozenset({space.err_bad(), space.err_ok(1, 1)})])
    out2 = sm.spec_bind(mixed, lambda i1, i2: sm.spec_ret(space, Z2.value(1 - i1), Z2.value(i2)))
    assert out2.demonic_at(0) == frozenset({space.err_bad(), space.err_ok(0, 1)})


def test_bind_io_threads_histories():
    space = sm.io_space(Z2, Z2, Z2, Z2, Z2, Z2)
    pts = (((), ()),)
    ev = (OUT, Z2.value(1))
    wm = sm.io_demonic_spec(space, lambda pt: {(3, (ev,) + pt[0], pt[1])}, pts, 1)
    wf = lambda i1, i2: sm.spec_ret(space, Z2.value(1 - i1), Z2.value(i2), points=pts)
    out = sm.spec_bind(wm, wf)
    assert out.horizon == 1
    assert out.demonic_at(((), ())) == frozenset({(0 * 2 + 1, (ev,), ())})


# ---------------------------------------------------------------------------
# Monad laws, checked extensionally on small spaces


def _random_demonic(rng, space):
    table = []
    for _ in range(space.point_count):
        if rng.random() < 0.15:
            table.append(sm.VIOLATED)
        else:
            table.append(frozenset(o for o in space.outcomes() if rng.random() < 0.4))
    return sm.demonic_spec(space, table)


def _random_pp(rng, space):
    pre = [rng.random() < 0.8 for _ in range(space.point_count)]
    post = [rng.random() < 0.5 for _ in space.outcomes()]
    return sm.pp_spec(space, pre, post)


def _random_pieces(rng, space):
    # Sparse rows keep bind compositions small; the scaling keeps the
    # minimum within [0,1] so these stay genuine carrier elements.
    def row():
        coeffs = [F(0)] * space.size
        for o in rng.sample(range(space.size), rng.randrange(1, 3)):
            coeffs[o] = F(rng.randrange(1, 4), 4)
        return coeffs
    k = F(rng.randrange(3), 4)
    coeffs = row()
    total = k + sum(coeffs)
    if total > 1:
        coeffs = [c * (1 - k) / (total - k) for c in coeffs]
    pieces = [(k, coeffs)]
    if rng.random() < 0.5:
        pieces.append((F(rng.randrange(3), 4), row()))
    return sm.linear_spec(space, pieces)


def _random_io(rng, space, points, horizon):
    seed = rng.randrange(10 ** 9)
    def fn(pt):
        local = random.Random(f"{seed}:{pt!r}")
        if local.random() < 0.1:
            return sm.VIOLATED
        outs = space.io_outcomes_at(pt, horizon)
        return frozenset(o for o in outs if local.random() < 0.3)
    return sm.io_demonic_spec(space, fn, points, horizon)


def _spaces_for_laws():
    return [
        ("pure", sm.pure_space(Z2, Z2), sm.pure_space(Z2, Z2), _random_demonic),
        ("state", sm.state_space(Z2, Z2, Z2, Z2), sm.state_space(Z2, Z2, Z2, Z2), _random_demonic),
        ("err", sm.err_space(Z2, Z2), sm.err_space(Z2, Z2), _random_demonic),
        ("pp-pure", sm.pp_pure_space(Z2, Z2), sm.pp_pure_space(Z2, Z2), _random_pp),
        ("pp-state", sm.pp_state_space(Z2, Z2, Z2, Z2), sm.pp_state_space(Z2, Z2, Z2, Z2), _random_pp),
        ("prob", sm.prob_space(Z2, Z2), sm.prob_space(Z2, Z2), _random_pieces),
    ]


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 10 ** 9))
def test_monad_laws_fixed_carriers(seed):
    rng = random.Random(seed)
    for name, space, target, make in _spaces_for_laws():
        a1 = Value(space.a1, rng.randrange(space.a1.size))
        a2 = Value(space.a2, rng.randrange(space.a2.size))
        wm = make(rng, space)
        f_table = {(i1, i2): make(rng, target)
                   for i1 in range(space.a1.size) for i2 in range(space.a2.size)}
        g_table = {(i1, i2): make(rng, target)
                   for i1 in range(target.a1.size) for i2 in range(target.a2.size)}
        f = lambda i1, i2: f_table[(i1, i2)]
        g = lambda i1, i2: g_table[(i1, i2)]

        left = sm.spec_bind(sm.spec_ret(space, a1, a2), f)
        assert sm.spec_equiv(left, f(a1.index, a2.index)).holds, name

        unit = lambda i1, i2: sm.spec_ret(space, Value(space.a1, i1), Value(space.a2, i2))
        assert sm.spec_equiv(sm.spec_bind(wm, unit), wm).holds, name

        lhs = sm.spec_bind(sm.spec_bind(wm, f), g)
        rhs = sm.spec_bind(wm, lambda i1, i2: sm.spec_bind(f(i1, i2), g))
        assert sm.spec_equiv(lhs, rhs).holds, name


@settings(deadline=None, max_examples=25)
@given(seed=st.integers(0, 10 ** 9))
def test_monad_laws_io(seed):
    rng = random.Random(seed)
    space = sm.io_space(Z2, Z2, Z2, Z2, Z2, Z2)
    pts = (((), ()), (((IN, Z2.value(0)),), ((OUT, Z2.value(1)),)))
    a1, a2 = Z2.value(rng.randrange(2)), Z2.value(rng.randrange(2))
    wm = _random_io(rng, space, pts, 1)
    f_table = {(i1, i2): _random_io(rng, space, pts, 1) for i1 in range(2) for i2 in range(2)}
    f = lambda i1, i2: f_table[(i1, i2)]

    left = sm.spec_bind(sm.spec_ret(space, a1, a2, points=pts), f)
    assert sm.spec_equiv(left, f(a1.index, a2.index)).holds

    unit = lambda i1, i2: sm.spec_ret(space, Z2.value(i1), Z2.value(i2), points=pts)
    assert sm.spec_equiv(sm.spec_bind(wm, unit), wm).holds

    g_table = {(i1, i2): _random_io(rng, space, pts, 1) for i1 in range(2) for i2 in range(2)}
    g = lambda i1, i2: g_table[(i1, i2)]
    lhs = sm.spec_bind(sm.spec_bind(wm, f), g)
    rhs = sm.spec_bind(wm, lambda i1, i2: sm.spec_bind(f(i1, i2), g))
    assert sm.spec_equiv(lhs, rhs).holds


@settings(deadline=None, max_examples=25)
@given(seed=st.integers(0, 10 ** 9))
def test_monad_laws_closure_instances(seed):
    # Angelic transformers have no demonic form, so these runs force the
    # enumeration path end to end.  Sizes keep every space within reach.
    rng = random.Random(seed)
    space = sm.state_space(Z2, Z2, UNIT, Z2)
    angelic = sm.closure_spec(space, lambda f, pt: any(f(o) for o in space.outcomes()))
    f_table = {(i1, i2): _random_demonic(rng, space) for i1 in range(2) for i2 in range(1)}
    f = lambda i1, i2: f_table[(i1, i2)]

    unit = lambda i1, i2: sm.spec_ret(space, Z2.value(i1), Value(UNIT, i2))
    assert sm.spec_equiv(sm.spec_bind(angelic, unit), angelic, cap=2 ** 16).holds

    lhs = sm.spec_bind(sm.spec_bind(angelic, f), unit)
    rhs = sm.spec_bind(angelic, lambda i1, i2: sm.spec_bind(f(i1, i2), unit))
    assert sm.spec_equiv(lhs, rhs, cap=2 ** 16).holds


# ---------------------------------------------------------------------------
# The comparison procedure


def test_leq_reflexive_on_handmade_specs():
    space = sm.pure_space(Z2, Z2)
    for w in (sm.demonic_spec(space, [frozenset({1, 2})]),
              sm.unsatisfiable(space),
              sm.weakest(space),
              sm.closure_spec(space, lambda f, pt: any(f(o) for o in range(4)))):
        assert sm.spec_leq(w, w).holds


def test_leq_demonic_subset_example():
    space = sm.pure_space(Z2, Z2)
    w1 = sm.demonic_spec(space, [frozenset({3})])
    w2 = sm.demonic_spec(space, [frozenset({3, 0})])
    assert sm.spec_leq(w1, w2).holds
    v = sm.spec_leq(w2, w1)
    assert v.failed
    # witness is re-checkable: the second spec guarantees phi, the first does not
    assert w1.at(v.phi, v.point) and not w2.at(v.phi, v.point)
    # and the full enumeration agrees in both directions
    g1, g2 = sm.drop_fast_form(w1), sm.drop_fast_form(w2)
    assert sm.spec_leq(g1, g2).holds
    assert sm.spec_leq(g2, g1).failed


def test_leq_violated_points():
    space = sm.state_space(UNIT, Z2, UNIT, Z2)
    top = sm.unsatisfiable(space)
    some = sm.spec_ret(space, Value(UNIT, 0), Value(UNIT, 0))
    assert sm.spec_leq(some, top).holds
    v = sm.spec_leq(top, some)
    assert v.failed
    assert some.at(v.phi, v.point) and not top.at(v.phi, v.point)


def test_leq_unknown_without_refutation():
    big = domain("big", 4)
    space = sm.pure_space(big, big)  # 16 outcomes, past the default cap
    w1 = sm.closure_spec(space, lambda f, pt: any(f(o) for o in space.outcomes()))
    w2 = sm.closure_spec(space, lambda f, pt: any(f(o) for o in space.outcomes()))
    assert sm.spec_leq(w1, w2).is_unknown
    demonic_all = sm.demonic_spec(space, [frozenset(space.outcomes())])
    v = sm.spec_leq(demonic_all, w1)  # needs "exists" to imply "forall": false
    assert v.failed
    assert w1.at(v.phi, 0) and not demonic_all.at(v.phi, 0)


def test_leq_prob_exact_and_witnessed():
    space = sm.prob_space(Z2, Z2)
    zero = sm.weakest(space)
    avg = sm.linear_spec(space, [(0, [F(1, 4)] * 4)])
    assert sm.spec_leq(zero, avg).holds
    v = sm.spec_leq(avg, zero)
    assert v.failed
    assert avg.at(v.phi) > zero.at(v.phi)
    # min of the two coordinates vs their average: only one direction holds
    two = domain("two", 2)
    one = domain("one", 1)
    sp2 = sm.prob_space(two, one)
    mins = sm.linear_spec(sp2, [(0, [1, 0]), (0, [0, 1])])
    mean = sm.linear_spec(sp2, [(0, [F(1, 2), F(1, 2)])])
    assert sm.spec_leq(mins, mean).holds
    assert sm.spec_leq(mean, mins).failed


def test_leq_prob_closures_stay_honest():
    space = sm.prob_space(Z2, Z2)
    w = sm.quant_closure_spec(space, lambda vec: min(vec))
    w2 = sm.quant_closure_spec(space, lambda vec: sum(vec) / 4)
    assert sm.spec_leq(w, w2).is_unknown  # true but not confirmable
    v = sm.spec_leq(w2, w)
    assert v.failed
    assert w2.at(v.phi) > w.at(v.phi)


def test_leq_rejects_mismatches():
    with pytest.raises(ValueError):
        sm.spec_leq(sm.weakest(sm.pure_space(Z2, Z2)), sm.weakest(sm.prob_space(Z2, Z2)))
    with pytest.raises(ValueError):
        sm.spec_leq(sm.weakest(sm.pure_space(Z2, Z2)), sm.weakest(sm.pure_space(Z2, Z3)))


@settings(deadline=None, max_examples=60)
@given(seed=st.integers(0, 10 ** 9))
def test_demonic_fast_path_agrees_with_enumeration(seed):
    # Invariant: on every space of size <= 12 the subset shortcut and the
    # brute-force quantification over postconditions give the same answer.
    rng = random.Random(seed)
    spaces = [
        sm.pure_space(Z3, Z4),                      # 12 outcomes
        sm.state_space(Z2, Z2, Z3, UNIT),           # 12 outcomes, 2 points
        sm.err_space(Z3, Z3),                       # 10 outcomes
    ]
    space = spaces[rng.randrange(len(spaces))]
    w1 = _random_demonic(rng, space)
    w2 = _random_demonic(rng, space)

    def brute(lo, hi):
        for pt in space.points():
            for mask in range(2 ** space.size):
                phi = tuple(bool(mask >> o & 1) for o in space.outcomes())
                if hi.at(phi, pt) and not lo.at(phi, pt):
                    return False
        return True

    fast = sm.spec_leq(w1, w2)
    assert fast.kind in ("holds", "fails")
    assert fast.holds == brute(w1, w2)
    if fast.failed:
        assert w2.at(fast.phi, fast.point) and not w1.at(fast.phi, fast.point)


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 10 ** 9))
def test_bind_monotone_and_preorder(seed):
    rng = random.Random(seed)
    space = sm.state_space(Z2, Z2, Z2, Z2)

    def weaken(w):
        table = []
        for pt in space.points():
            entry = w.demonic_at(pt)
            if rng.random() < 0.2:
                table.append(sm.VIOLATED)
            elif entry is sm.VIOLATED:
                table.append(sm.VIOLATED)
            else:
                extra = frozenset(o for o in space.outcomes() if rng.random() < 0.3)
                table.append(entry | extra)
        return sm.demonic_spec(space, table)

    w = _random_demonic(rng, space)
    w_up = weaken(w)
    w_upper = weaken(w_up)
    assert sm.spec_leq(w, w_up).holds
    assert sm.spec_leq(w, w_upper).holds  # transitive closure of two steps

    f_table = {(i1, i2): _random_demonic(rng, space) for i1 in range(2) for i2 in range(2)}
    g_table = {k: weaken(v) for k, v in f_table.items()}
    f = lambda i1, i2: f_table[(i1, i2)]
    g = lambda i1, i2: g_table[(i1, i2)]
    assert sm.spec_leq(sm.spec_bind(w, f), sm.spec_bind(w_up, f)).holds
    assert sm.spec_leq(sm.spec_bind(w, f), sm.spec_bind(w, g)).holds

    # reflexivity on whatever we generated
    for cand in (w, w_up, sm.spec_bind(w, f)):
        assert sm.spec_leq(cand, cand).holds


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 10 ** 9))
def test_preorder_transitive_on_random_triples(seed):
    rng = random.Random(seed)
    space = sm.pure_space(Z2, Z3)
    a, b, c = (_random_demonic(rng, space) for _ in range(3))
    if sm.spec_leq(a, b).holds and sm.spec_leq(b, c).holds:
        assert sm.spec_leq(a, c).holds


# ---------------------------------------------------------------------------
# Pre/post embeddings


def test_from_prepost_low_equivalence_table():
    # States are (low, high) pairs; precondition: low parts agree;
    # postcondition: final low parts agree.  The resulting transformer,
    # written straight from its definition, is compared entry by entry.
    s = domain("LH", 4, tuple(f"l{l}h{h}" for l in range(2) for h in range(2)))
    lo = lambda i: i // 2
    space = sm.state_space(UNIT, s, UNIT, s)
    pre = [lo(s1) == lo(s2) for s1 in range(4) for s2 in range(4)]
    post = []
    for o in range(sm.pp_state_space(UNIT, s, UNIT, s).size):
        si1, a1, sf1, si2, a2, sf2 = space.pp_post_split(o)
        post.append(lo(sf1) == lo(sf2))
    w = sm.from_prepost(space, pre, post)
    for pt in space.points():
        s1, s2 = space.point_split(pt)
        entry = w.demonic_at(pt)
        if lo(s1) != lo(s2):
            assert entry is sm.VIOLATED
        else:
            expected = frozenset(
                space.st_outcome(0, f1, 0, f2)
                for f1 in range(4) for f2 in range(4) if lo(f1) == lo(f2))
            assert entry == expected


def test_from_prepost_trivial_and_vacuous():
    space = sm.state_space(Z2, Z2, Z2, Z2)
    n_post = sm.pp_state_space(Z2, Z2, Z2, Z2).size
    # An always-true pair demands phi of every outcome: the transformer
    # collapses to "forall o. phi o", which only the all-true table meets.
    top_true = sm.from_prepost(space, [True] * 4, [True] * n_post)
    for pt in space.points():
        assert top_true.demonic_at(pt) == frozenset(space.outcomes())
    assert top_true.at(frozenset(space.outcomes()), 0)
    assert not top_true.at(frozenset(), 0)
    vac = sm.from_prepost(space, [False] * 4, [True] * n_post)
    rng = random.Random(1)
    for pt in space.points():
        for _ in range(10):
            phi = frozenset(o for o in space.outcomes() if rng.random() < 0.5)
            assert vac.at(phi, pt) is False


def test_embed_ret_pp_state_is_ret_state():
    pps = sm.pp_state_space(Z2, Z2, Z2, Z2)
    ws = sm.state_space(Z2, Z2, Z2, Z2)
    for a1 in range(2):
        for a2 in range(2):
            emb = sm.embed_pp_in_wp(sm.spec_ret(pps, Z2.value(a1), Z2.value(a2)))
            direct = sm.spec_ret(ws, Z2.value(a1), Z2.value(a2))
            assert sm.spec_equiv(emb, direct).holds


def test_embed_all_true_pair_demands_every_outcome():
    # Same collapse as from_prepost(True, True): the embedding display
    # turns an always-true pair into "forall o. phi o".
    pps = sm.pp_state_space(Z2, Z2, Z2, Z2)
    pair = sm.pp_spec(pps, [True] * 4, [True] * pps.size)
    emb = sm.embed_pp_in_wp(pair)
    ws = sm.state_space(Z2, Z2, Z2, Z2)
    for pt in ws.points():
        assert emb.demonic_at(pt) == frozenset(ws.outcomes())


@settings(deadline=None, max_examples=50)
@given(seed=st.integers(0, 10 ** 9))
def test_embed_monotone(seed):
    rng = random.Random(seed)
    pps = sm.pp_state_space(Z2, Z2, Z2, Z2)
    w1 = _random_pp(rng, pps)
    w2 = _random_pp(rng, pps)
    if sm.spec_leq(w1, w2).holds:
        assert sm.spec_leq(sm.embed_pp_in_wp(w1), sm.embed_pp_in_wp(w2)).holds


def test_pp_order_is_componentwise():
    space = sm.pp_pure_space(Z2, Z2)
    loose = sm.pp_spec(space, [False], [True] * 4)
    tight = sm.pp_spec(space, [True], [o == 0 for o in range(4)])
    assert sm.spec_leq(tight, loose).holds  # pre weakens, post widens
    assert sm.spec_leq(loose, tight).failed
    with pytest.raises(TypeError):
        loose.at(frozenset(), 0)


# ---------------------------------------------------------------------------
# Distinguished elements and reindexing


def test_unsatisfiable_tops_everything():
    rng = random.Random(11)
    for space, make in ((sm.pure_space(Z2, Z2), _random_demonic),
                        (sm.state_space(Z2, Z2, Z2, Z2), _random_demonic),
                        (sm.err_space(Z2, Z2), _random_demonic),
                        (sm.prob_space(Z2, Z2), _random_pieces),
                        (sm.pp_state_space(Z2, Z2, Z2, Z2), _random_pp)):
        top = sm.unsatisfiable(space)
        bottom = sm.weakest(space)
        for _ in range(10):
            w = make(rng, space)
            assert sm.spec_leq(w, top).holds
            assert sm.spec_leq(bottom, w).holds


def test_err_collapse_cannot_tell_sides_apart():
    # Raising on the left against a pure return looks exactly like the
    # mirrored situation: both specs send phi to phi(raised).
    space = sm.err_space(Z2, Z2)
    left_raise = sm.demonic_spec(space, [frozenset({space.err_bad()})])
    right_raise = sm.demonic_spec(space, [frozenset({space.err_bad()})])
    assert sm.spec_equiv(left_raise, right_raise).holds
    for phi in (frozenset({space.err_bad()}), frozenset(), frozenset(space.outcomes())):
        assert left_raise.at(phi, 0) == (space.err_bad() in phi)


def test_reindex_outcomes_state():
    small = sm.pure_space(Z2, Z2)
    big = sm.pure_space(Z3, Z3)
    fn = lambda o: (o // 2) * 3 + (o % 2)
    w = sm.demonic_spec(small, [frozenset({0, 3})])
    out = sm.reindex_outcomes(w, big, fn)
    assert out.demonic_at(0) == frozenset({fn(0), fn(3)})
    wc = sm.drop_fast_form(w)
    outc = sm.reindex_outcomes(wc, big, fn)
    assert sm.spec_equiv(out, outc, cap=2 ** 10).holds


def test_drop_fast_form_preserves_meaning():
    rng = random.Random(5)
    space = sm.state_space(Z2, Z2, Z2, Z2)
    w = _random_demonic(rng, space)
    g = sm.drop_fast_form(w)
    for pt in space.points():
        for _ in range(30):
            phi = frozenset(o for o in space.outcomes() if rng.random() < 0.5)
            assert w.at(phi, pt) == g.at(phi, pt)


# ---------------------------------------------------------------------------
# Exact quantitative comparisons need the box LP, not just its corners


def test_lp_simplex_textbook_instance():
    value, x = lp.simplex_max([3, 2], [[1, 1], [1, 0]], [4, 2])
    assert value == 10 and x == [2, 2]


def test_lp_max_min_affine_peaks_off_the_corners():
    # min(p0 - p1, -p0 + 3 p1) peaks at (1, 1/2) with value 1/2, while
    # every corner of the unit box gives at most 0.
    pieces = [(F(0), (F(1), F(-1))), (F(0), (F(-1), F(3)))]
    value, phi = lp.max_min_affine(pieces, 2)
    assert value == F(1, 2)
    assert phi == (F(1), F(1, 2))
    corners = []
    for cx in (F(0), F(1)):
        for cy in (F(0), F(1)):
            corners.append(min(k + c[0] * cx + c[1] * cy for k, c in pieces))
    assert max(corners) <= 0


def test_lp_coupling_vertices_frozen_cases():
    half = (F(1, 2), F(1, 2))
    vs = lp.coupling_vertices(half, half)
    assert sorted(vs) == sorted([
        (F(1, 2), F(0), F(0), F(1, 2)),
        (F(0), F(1, 2), F(1, 2), F(0)),
    ])
    skew = lp.coupling_vertices((F(1, 4), F(3, 4)), half)
    assert sorted(skew) == sorted([
        (F(1, 4), F(0), F(1, 4), F(1, 2)),
        (F(0), F(1, 4), F(1, 2), F(1, 4)),
    ])
    eq_table = (F(1), F(0), F(0), F(1))
    assert lp.min_coupling_value(half, half, eq_table) == F(0)
    assert lp.min_coupling_value((F(1, 4), F(3, 4)), half, eq_table) == F(1, 4)


def test_lp_is_coupling():
    half = (F(1, 2), F(1, 2))
    assert lp.is_coupling(half, half, (F(1, 2), F(0), F(0), F(1, 2)))
    assert not lp.is_coupling(half, half, (F(1), F(0), F(0), F(0)))


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 10 ** 9))
def test_leq_prob_matches_grid_sampling(seed):
    rng = random.Random(seed)
    space = sm.prob_space(Z2, Z2)
    w1 = _random_pieces(rng, space)
    w2 = _random_pieces(rng, space)
    v = sm.spec_leq(w1, w2)
    assert not v.is_unknown
    grid = [F(0), F(1, 4), F(1, 2), F(3, 4), F(1)]
    if v.holds:
        for _ in range(40):
            phi = tuple(rng.choice(grid) for _ in space.outcomes())
            assert w1.at(phi) <= w2.at(phi)
    else:
        assert w1.at(v.phi) > w2.at(v.phi)
