"""Split-context judgments with componentwise specifications.

The judgments elsewhere in this package keep one relational spec per program
pair.  This module carries a triple instead: a unary spec for each side plus
a relational one, quantified over a context that is itself split into a
left-only part and a right-only part.  The split is load-bearing: in the
Bind rule each premise component only ever sees its own side's variables, so
a left spec cannot depend on the right program's result, which is exactly
what makes sequencing of exception-raising pairs compositional (see the
regression tests for what goes wrong without it).

Carriers are assembled rather than hard-coded.  A base lift turns a simple
relational carrier into a triple whose unary parts run against a unit result
on the opposite side; transformers then add exception or state structure to
one side at a time.  The canonical exception carrier is the base lift with
an exception transformer applied to each side, and a hand-written version of
the same carrier is kept alongside as an oracle for it.

Transformers over finite outcome domains live in demand normal form: a
monotone map (outcomes -> Prop) -> Prop is the upward closure of finitely
many demand sets, so bind, the precision order, and equality are all exact
finite set computations with no postcondition enumeration.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from itertools import product
from typing import Callable, FrozenSet, Optional, Sequence, Tuple

from . import programs as P
from . import specmonads as sm
from .domains import (
    UNIT,
    UNIT_VAL,
    FiniteDomain,
    Value,
    case_index,
    inl_index,
    inr_index,
    product_domain,
    sum_domain,
)
from .programs import Program
from .rules import EMPTY_ENV, Env, RuleError, Valuation


# ---------------------------------------------------------------------------
# Demand normal form


def _phi_set(dom: FiniteDomain, phi) -> FrozenSet[int]:
    if callable(phi):
        return frozenset(o for o in range(dom.size) if phi(o))
    if isinstance(phi, int):
        return frozenset(o for o in range(dom.size) if phi >> o & 1)
    return frozenset(int(o) for o in phi)


def _min_antichain(sets) -> FrozenSet[FrozenSet[int]]:
    sets = list(sets)
    return frozenset(s for s in sets if not any(t < s for t in sets))


@dataclass(frozen=True)
class Wp:
    """Monotone predicate transformer over one finite outcome domain.

    `demands` is an antichain of outcome-index sets: the transformer accepts
    a postcondition exactly when some demand set lies inside it.  Every
    monotone transformer over a finite domain has exactly one such form (its
    minimal accepted postconditions), so comparing demand families compares
    transformers.  The empty family accepts nothing and is the top of the
    precision order; the family containing only the empty set accepts
    everything and is the bottom.
    """

    dom: FiniteDomain
    demands: FrozenSet[FrozenSet[int]]

    def at(self, phi) -> bool:
        """Evaluate at a postcondition given as a callable on outcome
        indices, an int bitmask, or an iterable of indices."""
        s = _phi_set(self.dom, phi)
        return any(d <= s for d in self.demands)

    def __repr__(self):
        shown = sorted(tuple(sorted(d)) for d in self.demands)
        return f"Wp({self.dom.name}, {shown})"


def wp(dom: FiniteDomain, demands) -> Wp:
    """Normalize a demand family to its minimal antichain."""
    sets = []
    for d in demands:
        s = frozenset(int(o) for o in d)
        for o in s:
            if not 0 <= o < dom.size:
                raise ValueError(f"outcome {o} out of range for domain {dom.name!r}")
        sets.append(s)
    return Wp(dom, _min_antichain(sets))


def wp_ret(dom: FiniteDomain, outcome: int) -> Wp:
    if not 0 <= outcome < dom.size:
        raise ValueError(f"outcome {outcome} out of range for domain {dom.name!r}")
    return Wp(dom, frozenset({frozenset({outcome})}))


def wp_weakest(dom: FiniteDomain) -> Wp:
    return Wp(dom, frozenset({frozenset()}))


def wp_unsat(dom: FiniteDomain) -> Wp:
    """The spec that accepts no postcondition; everything sits below it."""
    return Wp(dom, frozenset())


@dataclass(frozen=True)
class OrderVerdict:
    """Outcome of a payload comparison.  `phi` is a separating demand set
    (a postcondition the right spec accepts and the left does not) and
    `where` locates it inside structured carriers such as state tables."""

    holds: bool
    phi: object = None
    where: Tuple = ()


def wp_leq(w: Wp, w2: Wp) -> OrderVerdict:
    """Decide w <= w2: every postcondition w2 accepts, w accepts.

    It is enough to test w at the minimal postconditions of w2, which are
    its demand sets, so the check is exact and never enumerates.
    """
    if w.dom != w2.dom:
        raise ValueError(f"cannot compare transformers over {w.dom.name!r} "
                         f"and {w2.dom.name!r}")
    for d in sorted(w2.demands, key=lambda s: (len(s), sorted(s))):
        if not w.at(d):
            return OrderVerdict(False, phi=d)
    return OrderVerdict(True)


def wp_equiv(w: Wp, w2: Wp) -> bool:
    return wp_leq(w, w2).holds and wp_leq(w2, w).holds


def wp_bind(w: Wp, table: Sequence[Wp]) -> Wp:
    """Sequential composition against a total continuation table.

    A demand of the result picks one demand from each continuation named by
    a demand of `w` and unions them.  Partial unions are pruned to minimal
    ones as the product unrolls; a superset at any stage stays a superset
    under every completion, so the pruning loses nothing.
    """
    table = tuple(table)
    if len(table) != w.dom.size:
        raise ValueError(f"continuation table must cover {w.dom.name!r} "
                         f"({w.dom.size} outcomes, got {len(table)})")
    rdom = table[0].dom
    for t in table:
        if t.dom != rdom:
            raise ValueError("continuation table mixes outcome domains")
    fams = set()
    for d in w.demands:
        pools = [table[o].demands for o in sorted(d)]
        if any(not pool for pool in pools):
            continue
        partial = {frozenset()}
        for pool in pools:
            partial = _min_antichain({u | extra for u in partial for extra in pool})
        fams |= partial
    return Wp(rdom, _min_antichain(fams))


def wp_map(w: Wp, rdom: FiniteDomain, f: Callable[[int], int]) -> Wp:
    """Reindex outcomes: the result accepts phi iff w accepts phi . f."""
    moved = []
    for d in w.demands:
        s = frozenset(f(o) for o in d)
        for o in s:
            if not 0 <= o < rdom.size:
                raise ValueError(f"outcome map leaves domain {rdom.name!r}")
        moved.append(s)
    return Wp(rdom, _min_antichain(moved))


def random_wp(rng: random.Random, dom: FiniteDomain, max_demands: int = 3) -> Wp:
    """Random transformer, small demand sets preferred; includes the top
    (no demands) and bottom (an empty demand) with fair probability."""
    k = rng.randrange(max_demands + 1)
    fams = []
    for _ in range(k):
        fams.append(frozenset(o for o in range(dom.size) if rng.random() < 0.4))
    return wp(dom, fams)


# ---------------------------------------------------------------------------
# Spec triples


@dataclass(frozen=True)
class TripleSpec:
    """One judgment's specs at a fixed pair of valuations."""

    w1: object
    w2: object
    wrel: object


@dataclass(frozen=True)
class FullSpecMonad:
    """A specification carrier in three parts, with componentwise unit and
    sequencing.

    Payload values are opaque; the operations that build them also know how
    to compare them, and `shape` records how the carrier was assembled so
    rule builders can insist on the structure they understand.  tau1 and
    tau2 embed a unary spec as a relational one against a unit result on
    the other side; for base lifts both are the identity, and the
    transformers preserve the embedding along with its morphism laws (the
    law battery checks them).

    bind1/bind2 take the middle spec, a continuation table indexed by the
    bound value, and the continuation result domain.  bind_rel takes all
    three middle specs and all three tables; the relational table is indexed
    [left value][right value].
    """

    name: str
    shape: tuple
    ret1: Callable[[Value], object]
    ret2: Callable[[Value], object]
    ret_rel: Callable[[Value, Value], object]
    bind1: Callable[[object, Sequence, FiniteDomain], object]
    bind2: Callable[[object, Sequence, FiniteDomain], object]
    bind_rel: Callable[..., object]
    leq1: Callable[[object, object], OrderVerdict]
    leq2: Callable[[object, object], OrderVerdict]
    leq_rel: Callable[[object, object], OrderVerdict]
    unsat_rel: Callable[[FiniteDomain, FiniteDomain], object]
    tau1: Callable[[object, FiniteDomain], object]
    tau2: Callable[[object, FiniteDomain], object]
    gen1: Callable[[random.Random, FiniteDomain], object]
    gen2: Callable[[random.Random, FiniteDomain], object]
    gen_rel: Callable[[random.Random, FiniteDomain, FiniteDomain], object]


@dataclass(frozen=True)
class SimpleMonadOps:
    """A plain relational carrier, as needed to lift it to a triple: unit,
    sequencing (with explicit factor sizes, since payloads need not record
    them), the precision order, a top element, and a sampler."""

    name: str
    ret: Callable[[Value, Value], object]
    bind: Callable[[object, Callable[[int, int], object], int, int], object]
    leq: Callable[[object, object], OrderVerdict]
    unsat: Callable[[FiniteDomain, FiniteDomain], object]
    gen: Callable[[random.Random, FiniteDomain, FiniteDomain], object]


def pure_ops() -> SimpleMonadOps:
    def ret(a1: Value, a2: Value) -> Wp:
        dom = product_domain(a1.domain, a2.domain)
        return wp_ret(dom, a1.index * a2.domain.size + a2.index)

    def bind(w: Wp, fn, a1n: int, a2n: int) -> Wp:
        if w.dom.size != a1n * a2n:
            raise ValueError("middle spec does not factor over the stated pair")
        return wp_bind(w, tuple(fn(k // a2n, k % a2n) for k in range(a1n * a2n)))

    return SimpleMonadOps(
        name="pure",
        ret=ret,
        bind=bind,
        leq=wp_leq,
        unsat=lambda d1, d2: wp_unsat(product_domain(d1, d2)),
        gen=lambda rng, d1, d2: random_wp(rng, product_domain(d1, d2)),
    )


def _order_from_leq(v: sm.LeqVerdict) -> OrderVerdict:
    if v.holds:
        return OrderVerdict(True)
    if v.failed:
        return OrderVerdict(False, phi=v.phi, where=("point", v.point))
    return OrderVerdict(False, where=("unknown",))


def state_ops(s1: FiniteDomain, s2: FiniteDomain) -> SimpleMonadOps:
    def gen(rng: random.Random, d1: FiniteDomain, d2: FiniteDomain):
        space = sm.state_space(d1, s1, d2, s2)
        rows = []
        for _ in range(space.point_count):
            if rng.random() < 0.15:
                rows.append(sm.VIOLATED)
            else:
                rows.append(frozenset(o for o in range(space.size) if rng.random() < 0.5))
        return sm.demonic_spec(space, rows)

    return SimpleMonadOps(
        name=f"state[{s1.name},{s2.name}]",
        ret=lambda a1, a2: sm.spec_ret(sm.state_space(a1.domain, s1, a2.domain, s2), a1, a2),
        bind=lambda w, fn, _a1n, _a2n: sm.spec_bind(w, fn),
        leq=lambda w, w2: _order_from_leq(sm.spec_leq(w, w2)),
        unsat=lambda d1, d2: sm.unsatisfiable(sm.state_space(d1, s1, d2, s2)),
        gen=gen,
    )


def lift_simple(ops: SimpleMonadOps) -> FullSpecMonad:
    """Triple over a simple carrier: the unary parts are the carrier at a
    unit result on the opposite side, and every operation simply ignores
    the pieces the simple carrier has no use for."""

    def bind1(w, table, _bdom):
        table = tuple(table)
        return ops.bind(w, lambda i1, _i2: table[i1], len(table), 1)

    def bind2(w, table, _bdom):
        table = tuple(table)
        return ops.bind(w, lambda _i1, i2: table[i2], 1, len(table))

    def bind_rel(_m1, _m2, mrel, f1, f2, frel, _b1dom, _b2dom):
        return ops.bind(mrel, lambda i1, i2: frel[i1][i2], len(f1), len(f2))

    return FullSpecMonad(
        name=f"lift({ops.name})",
        shape=("lift", ops.name),
        ret1=lambda a: ops.ret(a, UNIT_VAL),
        ret2=lambda a: ops.ret(UNIT_VAL, a),
        ret_rel=ops.ret,
        bind1=bind1,
        bind2=bind2,
        bind_rel=bind_rel,
        leq1=ops.leq,
        leq2=ops.leq,
        leq_rel=ops.leq,
        unsat_rel=ops.unsat,
        tau1=lambda w1, _adom: w1,
        tau2=lambda w2, _adom: w2,
        gen1=lambda rng, a: ops.gen(rng, a, UNIT),
        gen2=lambda rng, a: ops.gen(rng, UNIT, a),
        gen_rel=ops.gen,
    )


def lift_pure() -> FullSpecMonad:
    return lift_simple(pure_ops())


def lift_state(s1: FiniteDomain, s2: FiniteDomain) -> FullSpecMonad:
    return lift_simple(state_ops(s1, s2))


# ---------------------------------------------------------------------------
# Transformers

# Both transformers touch one side at a time.  The composite operations are
# spelled out with explicit unit computations and tau embeddings wherever a
# one-sided continuation has to cross to the relational component, so that
# the assembled carrier keeps the projection discipline: the unary parts of
# every composite are the unary binds of the inner carrier.


def exct_rel_transform(inner: FullSpecMonad, e: FiniteDomain, side: str) -> FullSpecMonad:
    """Add exception outcomes `e` to one side.

    On the wrapped side, results become tagged sums: unit injects normally,
    bind threads normal results into the continuation and rethrows
    exceptional ones.  The relational bind additionally routes the mixed
    case (wrapped side raised, other side returned) through the other
    side's continuation via its tau embedding, then pins the pair of a
    rethrown exception with that continuation's result.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")

    def sdom(a: FiniteDomain) -> FiniteDomain:
        return sum_domain(a, e)

    def inl(a: Value) -> Value:
        return Value(sdom(a.domain), inl_index(a.domain, e, a.index))

    def inr(adom: FiniteDomain, j: int) -> Value:
        return Value(sdom(adom), inr_index(adom, e, j))

    if side == "left":
        def ret1(a: Value):
            return inner.ret1(inl(a))

        def bind1(w, table, bdom):
            table = tuple(table)
            full = table + tuple(inner.ret1(inr(bdom, j)) for j in range(e.size))
            return inner.bind1(w, full, sdom(bdom))

        def rethrow(w2, b1dom, j, b2dom):
            # pair a rethrown left exception with whatever the right
            # continuation produces, keeping its effect on the right spec
            bsum = sdom(b1dom)
            f1t = (inner.ret1(Value(bsum, inr_index(b1dom, e, j))),)
            f2t = tuple(inner.ret2(v) for v in b2dom.values())
            frelt = ((tuple(inner.ret_rel(Value(bsum, inr_index(b1dom, e, j)), v)
                            for v in b2dom.values())),)
            return inner.bind_rel(inner.ret1(UNIT_VAL), w2, inner.tau2(w2, b2dom),
                                  f1t, f2t, frelt, bsum, b2dom)

        def bind_rel(m1, m2, mrel, f1, f2, frel, b1dom, b2dom):
            f1 = tuple(f1)
            f2 = tuple(f2)
            bsum = sdom(b1dom)
            f1x = f1 + tuple(inner.ret1(Value(bsum, inr_index(b1dom, e, j)))
                             for j in range(e.size))
            frelx = [tuple(frel[a1][a2] for a2 in range(len(f2))) for a1 in range(len(f1))]
            for j in range(e.size):
                frelx.append(tuple(rethrow(f2[a2], b1dom, j, b2dom)
                                   for a2 in range(len(f2))))
            return inner.bind_rel(m1, m2, mrel, f1x, f2, tuple(frelx), bsum, b2dom)

        def tau2(w2, a2dom):
            usum = sdom(UNIT)
            f1t = (inner.ret1(Value(usum, 0)),)
            f2t = tuple(inner.ret2(v) for v in a2dom.values())
            frelt = (tuple(inner.ret_rel(Value(usum, 0), v) for v in a2dom.values()),)
            return inner.bind_rel(inner.ret1(UNIT_VAL), w2, inner.tau2(w2, a2dom),
                                  f1t, f2t, frelt, usum, a2dom)

        return FullSpecMonad(
            name=f"exct-left[{e.name}]({inner.name})",
            shape=("exct", "left", e, inner.shape),
            ret1=ret1,
            ret2=inner.ret2,
            ret_rel=lambda a1, a2: inner.ret_rel(inl(a1), a2),
            bind1=bind1,
            bind2=inner.bind2,
            bind_rel=bind_rel,
            leq1=inner.leq1,
            leq2=inner.leq2,
            leq_rel=inner.leq_rel,
            unsat_rel=lambda d1, d2: inner.unsat_rel(sdom(d1), d2),
            tau1=lambda w1, adom: inner.tau1(w1, sdom(adom)),
            tau2=tau2,
            gen1=lambda rng, a: inner.gen1(rng, sdom(a)),
            gen2=inner.gen2,
            gen_rel=lambda rng, a1, a2: inner.gen_rel(rng, sdom(a1), a2),
        )

    def ret2(a: Value):
        return inner.ret2(inl(a))

    def bind2(w, table, bdom):
        table = tuple(table)
        full = table + tuple(inner.ret2(inr(bdom, j)) for j in range(e.size))
        return inner.bind2(w, full, sdom(bdom))

    def rethrow(w1, b1dom, j, b2dom):
        bsum = sdom(b2dom)
        f1t = tuple(inner.ret1(v) for v in b1dom.values())
        f2t = (inner.ret2(Value(bsum, inr_index(b2dom, e, j))),)
        frelt = tuple((inner.ret_rel(v, Value(bsum, inr_index(b2dom, e, j))),)
                      for v in b1dom.values())
        return inner.bind_rel(w1, inner.ret2(UNIT_VAL), inner.tau1(w1, b1dom),
                              f1t, f2t, frelt, b1dom, bsum)

    def bind_rel(m1, m2, mrel, f1, f2, frel, b1dom, b2dom):
        f1 = tuple(f1)
        f2 = tuple(f2)
        bsum = sdom(b2dom)
        f2x = f2 + tuple(inner.ret2(Value(bsum, inr_index(b2dom, e, j)))
                         for j in range(e.size))
        frelx = []
        for a1 in range(len(f1)):
            row = tuple(frel[a1][a2] for a2 in range(len(f2)))
            row += tuple(rethrow(f1[a1], b1dom, j, b2dom) for j in range(e.size))
            frelx.append(row)
        return inner.bind_rel(m1, m2, mrel, f1, f2x, tuple(frelx), b1dom, bsum)

    def tau1(w1, a1dom):
        usum = sdom(UNIT)
        f1t = tuple(inner.ret1(v) for v in a1dom.values())
        f2t = (inner.ret2(Value(usum, 0)),)
        frelt = tuple((inner.ret_rel(v, Value(usum, 0)),) for v in a1dom.values())
        return inner.bind_rel(w1, inner.ret2(UNIT_VAL), inner.tau1(w1, a1dom),
                              f1t, f2t, frelt, a1dom, usum)

    return FullSpecMonad(
        name=f"exct-right[{e.name}]({inner.name})",
        shape=("exct", "right", e, inner.shape),
        ret1=inner.ret1,
        ret2=ret2,
        ret_rel=lambda a1, a2: inner.ret_rel(a1, inl(a2)),
        bind1=inner.bind1,
        bind2=bind2,
        bind_rel=bind_rel,
        leq1=inner.leq1,
        leq2=inner.leq2,
        leq_rel=inner.leq_rel,
        unsat_rel=lambda d1, d2: inner.unsat_rel(d1, sdom(d2)),
        tau1=tau1,
        tau2=lambda w2, adom: inner.tau2(w2, sdom(adom)),
        gen1=inner.gen1,
        gen2=lambda rng, a: inner.gen2(rng, sdom(a)),
        gen_rel=lambda rng, a1, a2: inner.gen_rel(rng, a1, sdom(a2)),
    )


def stt_rel_transform(inner: FullSpecMonad, s: FiniteDomain, side: str) -> FullSpecMonad:
    """Thread a state cell through one side.

    Payloads on the wrapped side become tables indexed by the entry state,
    each entry an inner payload whose results carry the exit state.  The
    relational component is a table too: fixing the wrapped side's entry
    state gives an inner relational spec between the paired result and the
    untouched other side.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")

    def pdom(a: FiniteDomain) -> FiniteDomain:
        return product_domain(a, s)

    def paired(a: Value, si: int) -> Value:
        return Value(pdom(a.domain), a.index * s.size + si)

    def leq_table(leq):
        def go(w, w2):
            if len(w) != len(w2):
                raise ValueError("state tables of different size")
            for si, (x, y) in enumerate(zip(w, w2)):
                v = leq(x, y)
                if not v.holds:
                    return OrderVerdict(False, phi=v.phi, where=(si,) + v.where)
            return OrderVerdict(True)
        return go

    if side == "left":
        def bind1(w, table, bdom):
            table = tuple(table)
            def entry(si):
                inner_table = tuple(table[k // s.size][k % s.size]
                                    for k in range(len(table) * s.size))
                return inner.bind1(w[si], inner_table, pdom(bdom))
            return tuple(entry(si) for si in range(s.size))

        def bind_rel(m1, m2, mrel, f1, f2, frel, b1dom, b2dom):
            f1 = tuple(f1)
            f2 = tuple(f2)
            def entry(si):
                f1t = tuple(f1[k // s.size][k % s.size]
                            for k in range(len(f1) * s.size))
                frelt = tuple(tuple(frel[k // s.size][a2][k % s.size]
                                    for a2 in range(len(f2)))
                              for k in range(len(f1) * s.size))
                return inner.bind_rel(m1[si], m2, mrel[si], f1t, f2, frelt,
                                      pdom(b1dom), b2dom)
            return tuple(entry(si) for si in range(s.size))

        def tau2(w2, a2dom):
            udom = pdom(UNIT)
            def entry(si):
                f1t = (inner.ret1(Value(udom, si)),)
                f2t = tuple(inner.ret2(v) for v in a2dom.values())
                frelt = (tuple(inner.ret_rel(Value(udom, si), v)
                               for v in a2dom.values()),)
                return inner.bind_rel(inner.ret1(UNIT_VAL), w2,
                                      inner.tau2(w2, a2dom),
                                      f1t, f2t, frelt, udom, a2dom)
            return tuple(entry(si) for si in range(s.size))

        return FullSpecMonad(
            name=f"stt-left[{s.name}]({inner.name})",
            shape=("stt", "left", s, inner.shape),
            ret1=lambda a: tuple(inner.ret1(paired(a, si)) for si in range(s.size)),
            ret2=inner.ret2,
            ret_rel=lambda a1, a2: tuple(inner.ret_rel(paired(a1, si), a2)
                                         for si in range(s.size)),
            bind1=bind1,
            bind2=inner.bind2,
            bind_rel=bind_rel,
            leq1=leq_table(inner.leq1),
            leq2=inner.leq2,
            leq_rel=leq_table(inner.leq_rel),
            unsat_rel=lambda d1, d2: tuple(inner.unsat_rel(pdom(d1), d2)
                                           for _ in range(s.size)),
            tau1=lambda w1, adom: tuple(inner.tau1(w1[si], pdom(adom))
                                        for si in range(s.size)),
            tau2=tau2,
            gen1=lambda rng, a: tuple(inner.gen1(rng, pdom(a)) for _ in range(s.size)),
            gen2=inner.gen2,
            gen_rel=lambda rng, a1, a2: tuple(inner.gen_rel(rng, pdom(a1), a2)
                                              for _ in range(s.size)),
        )

    def bind2(w, table, bdom):
        table = tuple(table)
        def entry(si):
            inner_table = tuple(table[k // s.size][k % s.size]
                                for k in range(len(table) * s.size))
            return inner.bind2(w[si], inner_table, pdom(bdom))
        return tuple(entry(si) for si in range(s.size))

    def bind_rel(m1, m2, mrel, f1, f2, frel, b1dom, b2dom):
        f1 = tuple(f1)
        f2 = tuple(f2)
        def entry(si):
            f2t = tuple(f2[k // s.size][k % s.size]
                        for k in range(len(f2) * s.size))
            frelt = tuple(tuple(frel[a1][k // s.size][k % s.size]
                                for k in range(len(f2) * s.size))
                          for a1 in range(len(f1)))
            return inner.bind_rel(m1, m2[si], mrel[si], f1, f2t, frelt,
                                  b1dom, pdom(b2dom))
        return tuple(entry(si) for si in range(s.size))

    def tau1(w1, a1dom):
        udom = pdom(UNIT)
        def entry(si):
            f1t = tuple(inner.ret1(v) for v in a1dom.values())
            f2t = (inner.ret2(Value(udom, si)),)
            frelt = tuple((inner.ret_rel(v, Value(udom, si)),)
                          for v in a1dom.values())
            return inner.bind_rel(w1, inner.ret2(UNIT_VAL),
                                  inner.tau1(w1, a1dom),
                                  f1t, f2t, frelt, a1dom, udom)
        return tuple(entry(si) for si in range(s.size))

    return FullSpecMonad(
        name=f"stt-right[{s.name}]({inner.name})",
        shape=("stt", "right", s, inner.shape),
        ret1=inner.ret1,
        ret2=lambda a: tuple(inner.ret2(paired(a, si)) for si in range(s.size)),
        ret_rel=lambda a1, a2: tuple(inner.ret_rel(a1, paired(a2, si))
                                     for si in range(s.size)),
        bind1=inner.bind1,
        bind2=bind2,
        bind_rel=bind_rel,
        leq1=inner.leq1,
        leq2=leq_table(inner.leq2),
        leq_rel=leq_table(inner.leq_rel),
        unsat_rel=lambda d1, d2: tuple(inner.unsat_rel(d1, pdom(d2))
                                       for _ in range(s.size)),
        tau1=tau1,
        tau2=lambda w2, adom: tuple(inner.tau2(w2[si], pdom(adom))
                                    for si in range(s.size)),
        gen1=inner.gen1,
        gen2=lambda rng, a: tuple(inner.gen2(rng, pdom(a)) for _ in range(s.size)),
        gen_rel=lambda rng, a1, a2: tuple(inner.gen_rel(rng, a1, pdom(a2))
                                          for _ in range(s.size)),
    )


def wrelexc_monad(e1: FiniteDomain, e2: FiniteDomain) -> FullSpecMonad:
    """The canonical exception carrier: exceptions added to each side of the
    base lift.  Unary payloads are transformers over one side's tagged
    outcomes, the relational payload over pairs of tagged outcomes."""
    return exct_rel_transform(exct_rel_transform(lift_pure(), e1, "left"), e2, "right")


def _exc_carrier(monad: FullSpecMonad, who: str) -> Tuple[FiniteDomain, FiniteDomain]:
    shape = monad.shape
    if (len(shape) == 4 and shape[:2] == ("exct", "right")
            and isinstance(shape[3], tuple) and len(shape[3]) == 4
            and shape[3][:2] == ("exct", "left") and shape[3][3] == ("lift", "pure")):
        return shape[3][2], shape[2]
    raise RuleError(f"{who}: needs the canonical exception carrier, got {monad.name}")


# ---------------------------------------------------------------------------
# Hand-written exception carrier
#
# The same transformer the assembled carrier is expected to produce, written
# out as one four-way case split.  It exists to pin the assembled version
# down: the two are compared extensionally in the tests.


def wrelexc_ret(a1: Value, e1: FiniteDomain, a2: Value, e2: FiniteDomain) -> Wp:
    s1 = sum_domain(a1.domain, e1)
    s2 = sum_domain(a2.domain, e2)
    return wp_ret(product_domain(s1, s2),
                  inl_index(a1.domain, e1, a1.index) * s2.size
                  + inl_index(a2.domain, e2, a2.index))


def wrelexc_bind(wm: Wp, f1: Sequence[Wp], f2: Sequence[Wp], frel,
                 e1: FiniteDomain, e2: FiniteDomain,
                 b1dom: FiniteDomain, b2dom: FiniteDomain) -> Wp:
    """Sequencing over pairs of tagged outcomes.

    Both normal: the relational continuation.  One side raised: that
    exception is pinned while the other side's unary continuation fills in
    its half of the pair.  Both raised: the exception pair is final.
    """
    f1 = tuple(f1)
    f2 = tuple(f2)
    a1n, a2n = len(f1), len(f2)
    s1 = sum_domain(b1dom, e1)
    s2 = sum_domain(b2dom, e2)
    rdom = product_domain(s1, s2)
    arg2n = a2n + e2.size
    if wm.dom.size != (a1n + e1.size) * arg2n:
        raise ValueError("middle spec does not cover the stated outcome pairs")
    table = []
    for k in range(wm.dom.size):
        ae1, ae2 = divmod(k, arg2n)
        if ae1 < a1n and ae2 < a2n:
            t = frel[ae1][ae2]
        elif ae1 < a1n:
            err2 = b2dom.size + (ae2 - a2n)
            t = wp_map(f1[ae1], rdom, lambda be1, j=err2: be1 * s2.size + j)
        elif ae2 < a2n:
            err1 = b1dom.size + (ae1 - a1n)
            t = wp_map(f2[ae2], rdom, lambda be2, i=err1: i * s2.size + be2)
        else:
            err1 = b1dom.size + (ae1 - a1n)
            err2 = b2dom.size + (ae2 - a2n)
            t = wp_ret(rdom, err1 * s2.size + err2)
        table.append(t)
    return wp_bind(wm, table)


def simulation_spec(a1: FiniteDomain, e1: FiniteDomain,
                    a2: FiniteDomain, e2: FiniteDomain) -> Wp:
    """Accepts postconditions that hold everywhere except where the left
    side raised and the right side returned normally: the right program
    raises whenever the left does."""
    s1 = sum_domain(a1, e1)
    s2 = sum_domain(a2, e2)
    dom = product_domain(s1, s2)
    demand = frozenset(
        o1 * s2.size + o2
        for o1 in range(s1.size) for o2 in range(s2.size)
        if not (o1 >= a1.size and o2 < a2.size)
    )
    return wp(dom, [demand])


# ---------------------------------------------------------------------------
# Observations in three parts


@dataclass(frozen=True)
class ThetaTriple:
    """An effect observation split the same way the specs are: one unary
    observation per side plus a relational one over both programs."""

    name: str
    theta1: Callable[[Program], object]
    theta2: Callable[[Program], object]
    theta_rel: Callable[[Program, Program], object]


def _exc_outcome(c: Program, e: FiniteDomain) -> int:
    if c.sig.effect != P.EXC or c.sig.exc != e:
        raise ValueError(f"program is {c.sig.effect!r}/{getattr(c.sig.exc, 'name', None)!r}, "
                         f"observation wants exceptions over {e.name!r}")
    tag, v = P.run_exc(c)
    if tag == P.OK:
        return inl_index(c.result, e, v.index)
    return inr_index(c.result, e, v.index)


def theta_exc_triple(e1: FiniteDomain, e2: FiniteDomain) -> ThetaTriple:
    """Deterministic exception observation targeting the canonical carrier.

    The unary parts run one program each and demand exactly the tagged
    outcome they saw.  The relational part is the evident diagonal choice:
    run both and demand exactly the joint outcome.  Nothing about the
    carrier forces that choice; the strictness battery is what justifies it
    after the fact, by showing it maps unit to unit and sequencing to
    sequencing on the nose.
    """

    def theta1(c: Program) -> Wp:
        o = _exc_outcome(c, e1)
        return wp_ret(product_domain(sum_domain(c.result, e1), UNIT), o)

    def theta2(c: Program) -> Wp:
        o = _exc_outcome(c, e2)
        return wp_ret(product_domain(UNIT, sum_domain(c.result, e2)), o)

    def theta_rel(c1: Program, c2: Program) -> Wp:
        o1 = _exc_outcome(c1, e1)
        o2 = _exc_outcome(c2, e2)
        s2 = sum_domain(c2.result, e2)
        dom = product_domain(sum_domain(c1.result, e1), s2)
        return wp_ret(dom, o1 * s2.size + o2)

    return ThetaTriple(f"exc-run[{e1.name},{e2.name}]", theta1, theta2, theta_rel)


# ---------------------------------------------------------------------------
# Judgments


@dataclass(frozen=True)
class SplitContext:
    """Variable context in two independent halves; the left programs and
    specs only ever see the left half, and symmetrically."""

    left: Env = EMPTY_ENV
    right: Env = EMPTY_ENV


EMPTY_SPLIT = SplitContext()


def _fam(x):
    return x if callable(x) else (lambda _g, _x=x: _x)


def _fam2(x):
    return x if callable(x) else (lambda _g1, _g2, _x=x: _x)


@dataclass(frozen=True)
class FullJudgment:
    """c1 ~ c2 with a spec triple, over a split context.

    c1 and w1 are families over left valuations, c2 and w2 over right
    valuations, wrel over pairs.  The quantification is the semantics: each
    unary claim binds only its own side's variables.
    """

    ctx: SplitContext
    monad: FullSpecMonad
    theta: ThetaTriple
    c1: Callable[[Valuation], Program]
    c2: Callable[[Valuation], Program]
    w1: Callable[[Valuation], object]
    w2: Callable[[Valuation], object]
    wrel: Callable[[Valuation, Valuation], object]

    def parts(self, g1: Valuation = (), g2: Valuation = ()) -> TripleSpec:
        return TripleSpec(self.w1(g1), self.w2(g2), self.wrel(g1, g2))

    def observed(self, g1: Valuation = (), g2: Valuation = ()) -> TripleSpec:
        return TripleSpec(self.theta.theta1(self.c1(g1)),
                          self.theta.theta2(self.c2(g2)),
                          self.theta.theta_rel(self.c1(g1), self.c2(g2)))


def full_judgment(monad: FullSpecMonad, theta: ThetaTriple, c1, c2, w1, w2, wrel,
                  ctx: SplitContext = EMPTY_SPLIT) -> FullJudgment:
    """Build a judgment from families or plain values; programs are probed
    at the first valuations."""
    j = FullJudgment(ctx, monad, theta, _fam(c1), _fam(c2),
                     _fam(w1), _fam(w2), _fam2(wrel))
    g1 = next(iter(ctx.left.valuations()))
    g2 = next(iter(ctx.right.valuations()))
    if not isinstance(j.c1(g1), Program) or not isinstance(j.c2(g2), Program):
        raise ValueError("judgment sides must be Program families")
    j.parts(g1, g2)
    return j


@dataclass(frozen=True)
class FullVerdict:
    """Semantic check of one judgment, clause by clause: the left unary
    claim over left valuations, the right one over right valuations, the
    relational one over pairs."""

    kind: str                            # "holds" | "fails"
    checked: int
    clause: Optional[str] = None         # "left" | "right" | "relational"
    valuation: Optional[tuple] = None
    order: Optional[OrderVerdict] = None

    @property
    def holds(self) -> bool:
        return self.kind == "holds"


def full_oracle_check(j: FullJudgment) -> FullVerdict:
    checked = 0
    for g1 in j.ctx.left.valuations():
        checked += 1
        v = j.monad.leq1(j.theta.theta1(j.c1(g1)), j.w1(g1))
        if not v.holds:
            return FullVerdict("fails", checked, "left", (g1,), v)
    for g2 in j.ctx.right.valuations():
        checked += 1
        v = j.monad.leq2(j.theta.theta2(j.c2(g2)), j.w2(g2))
        if not v.holds:
            return FullVerdict("fails", checked, "right", (g2,), v)
    for g1 in j.ctx.left.valuations():
        for g2 in j.ctx.right.valuations():
            checked += 1
            v = j.monad.leq_rel(j.theta.theta_rel(j.c1(g1), j.c2(g2)), j.wrel(g1, g2))
            if not v.holds:
                return FullVerdict("fails", checked, "relational", (g1, g2), v)
    return FullVerdict("holds", checked)


# ---------------------------------------------------------------------------
# Rules


_FULL_RULES = {}
_FULL_ARITY = {}


def _full_rule(name: str, arity: int):
    def deco(fn):
        _FULL_RULES[name] = fn
        _FULL_ARITY[name] = arity
        return fn
    return deco


def full_rule_names() -> Tuple[str, ...]:
    return tuple(sorted(_FULL_RULES))


def apply_full_rule(name: str, premises: Sequence[FullJudgment] = (), **params) -> FullJudgment:
    """Compute a rule's conclusion judgment, or raise RuleError when the
    premise shapes disagree with the rule or a side condition fails."""
    fn = _FULL_RULES.get(name)
    if fn is None:
        raise RuleError(f"unknown rule {name!r}")
    premises = tuple(premises)
    if len(premises) != _FULL_ARITY[name]:
        raise RuleError(f"{name} takes {_FULL_ARITY[name]} premises, got {len(premises)}")
    params = dict(params)
    concl = fn(premises, params)
    if params:
        raise RuleError(f"{name}: unknown parameter(s) {', '.join(sorted(params))}")
    return concl


def _need(params: dict, who: str, key: str):
    if key not in params:
        raise RuleError(f"{who}: missing parameter {key!r}")
    return params.pop(key)


def _same_carrier(a: FullSpecMonad, b: FullSpecMonad, who: str) -> None:
    if a.shape != b.shape:
        raise RuleError(f"{who}: premises use different spec carriers")


def _same_triple(a: ThetaTriple, b: ThetaTriple, who: str) -> None:
    if a.name != b.name:
        raise RuleError(f"{who}: premises use different observations")


def _env_extension(base: Env, ext: Env, who: str, side: str) -> Tuple[str, FiniteDomain]:
    k = len(base.vars)
    if ext.vars[:k] != base.vars or len(ext.vars) != k + 1:
        raise RuleError(f"{who}: {side} premise context must bind exactly one variable")
    return ext.vars[-1]


@_full_rule("Ret", 0)
def _full_ret(_prem, params) -> FullJudgment:
    who = "Ret"
    monad = _need(params, who, "monad")
    theta = _need(params, who, "theta")
    sig1, sig2 = _need(params, who, "sig1"), _need(params, who, "sig2")
    a1f, a2f = _fam(_need(params, who, "a1")), _fam(_need(params, who, "a2"))
    ctx = params.pop("ctx", EMPTY_SPLIT)
    if monad.shape[0] == "exct":
        e1, e2 = _exc_carrier(monad, who)
        if sig1.effect != P.EXC or sig1.exc != e1 or sig2.effect != P.EXC or sig2.exc != e2:
            raise RuleError(f"{who}: signatures do not raise the carrier's exceptions")
    return full_judgment(
        monad, theta,
        lambda g1: P.ret(sig1, a1f(g1)),
        lambda g2: P.ret(sig2, a2f(g2)),
        lambda g1: monad.ret1(a1f(g1)),
        lambda g2: monad.ret2(a2f(g2)),
        lambda g1, g2: monad.ret_rel(a1f(g1), a2f(g2)),
        ctx,
    )


@_full_rule("Weaken", 1)
def _full_weaken(prem, params) -> FullJudgment:
    who = "Weaken"
    (j,) = prem
    w1f = _fam(params.pop("w1", j.w1))
    w2f = _fam(params.pop("w2", j.w2))
    wrelf = _fam2(params.pop("wrel", j.wrel))
    for g1 in j.ctx.left.valuations():
        if not j.monad.leq1(j.w1(g1), w1f(g1)).holds:
            raise RuleError(f"{who}: left target is not above the premise spec")
    for g2 in j.ctx.right.valuations():
        if not j.monad.leq2(j.w2(g2), w2f(g2)).holds:
            raise RuleError(f"{who}: right target is not above the premise spec")
    for g1 in j.ctx.left.valuations():
        for g2 in j.ctx.right.valuations():
            if not j.monad.leq_rel(j.wrel(g1, g2), wrelf(g1, g2)).holds:
                raise RuleError(f"{who}: relational target is not above the premise spec")
    return FullJudgment(j.ctx, j.monad, j.theta, j.c1, j.c2, w1f, w2f, wrelf)


@_full_rule("Bind", 2)
def _full_bind(prem, params) -> FullJudgment:
    who = "Bind"
    jm, jf = prem
    _same_carrier(jm.monad, jf.monad, who)
    _same_triple(jm.theta, jf.theta, who)
    monad = jm.monad
    x1, d1 = _env_extension(jm.ctx.left, jf.ctx.left, who, "left")
    x2, d2 = _env_extension(jm.ctx.right, jf.ctx.right, who, "right")
    for g1 in jm.ctx.left.valuations():
        if jm.c1(g1).result != d1:
            raise RuleError(f"{who}: left results do not match the bound variable {x1!r}")
    for g2 in jm.ctx.right.valuations():
        if jm.c2(g2).result != d2:
            raise RuleError(f"{who}: right results do not match the bound variable {x2!r}")
    g1x = next(iter(jf.ctx.left.valuations()))
    g2x = next(iter(jf.ctx.right.valuations()))
    b1dom = jf.c1(g1x).result
    b2dom = jf.c2(g2x).result
    for g1 in jf.ctx.left.valuations():
        if jf.c1(g1).result != b1dom:
            raise RuleError(f"{who}: left continuation changes its result domain")
    for g2 in jf.ctx.right.valuations():
        if jf.c2(g2).result != b2dom:
            raise RuleError(f"{who}: right continuation changes its result domain")

    def c1(g1):
        return P.bind(jm.c1(g1), lambda v: jf.c1(g1 + (v,)))

    def c2(g2):
        return P.bind(jm.c2(g2), lambda v: jf.c2(g2 + (v,)))

    def w1(g1):
        return monad.bind1(jm.w1(g1), tuple(jf.w1(g1 + (v,)) for v in d1.values()), b1dom)

    def w2(g2):
        return monad.bind2(jm.w2(g2), tuple(jf.w2(g2 + (v,)) for v in d2.values()), b2dom)

    def wrel(g1, g2):
        f1 = tuple(jf.w1(g1 + (v,)) for v in d1.values())
        f2 = tuple(jf.w2(g2 + (v,)) for v in d2.values())
        frel = tuple(tuple(jf.wrel(g1 + (v1,), g2 + (v2,)) for v2 in d2.values())
                     for v1 in d1.values())
        return monad.bind_rel(jm.w1(g1), jm.w2(g2), jm.wrel(g1, g2),
                              f1, f2, frel, b1dom, b2dom)

    return FullJudgment(jm.ctx, monad, jm.theta, c1, c2, w1, w2, wrel)


def _throw_params(params, who):
    monad = _need(params, who, "monad")
    theta = _need(params, who, "theta")
    sig1, sig2 = _need(params, who, "sig1"), _need(params, who, "sig2")
    ctx = params.pop("ctx", EMPTY_SPLIT)
    e1, e2 = _exc_carrier(monad, who)
    if sig1.effect != P.EXC or sig1.exc != e1 or sig2.effect != P.EXC or sig2.exc != e2:
        raise RuleError(f"{who}: signatures do not raise the carrier's exceptions")
    return monad, theta, sig1, sig2, ctx, e1, e2


@_full_rule("ThrowL", 0)
def _full_throw_l(_prem, params) -> FullJudgment:
    who = "ThrowL"
    monad, theta, sig1, sig2, ctx, e1, e2 = _throw_params(params, who)
    excf = _fam(_need(params, who, "exc"))
    a2f = _fam(_need(params, who, "a2"))
    result1 = _need(params, who, "result1")
    s1 = sum_domain(result1, e1)

    def w1(g1):
        e = excf(g1)
        if e.domain != e1:
            raise RuleError(f"{who}: exception value lives in {e.domain.name!r}")
        return wp_ret(product_domain(s1, UNIT), inr_index(result1, e1, e.index))

    def wrel(g1, g2):
        e, a2 = excf(g1), a2f(g2)
        s2 = sum_domain(a2.domain, e2)
        return wp_ret(product_domain(s1, s2),
                      inr_index(result1, e1, e.index) * s2.size
                      + inl_index(a2.domain, e2, a2.index))

    return full_judgment(
        monad, theta,
        lambda g1: P.throw(sig1, excf(g1), result1),
        lambda g2: P.ret(sig2, a2f(g2)),
        w1,
        lambda g2: monad.ret2(a2f(g2)),
        wrel,
        ctx,
    )


@_full_rule("ThrowR", 0)
def _full_throw_r(_prem, params) -> FullJudgment:
    who = "ThrowR"
    monad, theta, sig1, sig2, ctx, e1, e2 = _throw_params(params, who)
    excf = _fam(_need(params, who, "exc"))
    a1f = _fam(_need(params, who, "a1"))
    result2 = _need(params, who, "result2")
    s2 = sum_domain(result2, e2)

    def w2(g2):
        e = excf(g2)
        if e.domain != e2:
            raise RuleError(f"{who}: exception value lives in {e.domain.name!r}")
        return wp_ret(product_domain(UNIT, s2), inr_index(result2, e2, e.index))

    def wrel(g1, g2):
        a1, e = a1f(g1), excf(g2)
        s1 = sum_domain(a1.domain, e1)
        return wp_ret(product_domain(s1, s2),
                      inl_index(a1.domain, e1, a1.index) * s2.size
                      + inr_index(result2, e2, e.index))

    return full_judgment(
        monad, theta,
        lambda g1: P.ret(sig1, a1f(g1)),
        lambda g2: P.throw(sig2, excf(g2), result2),
        lambda g1: monad.ret1(a1f(g1)),
        w2,
        wrel,
        ctx,
    )


def _catch_unary(w: Wp, normal: int, handlers: Sequence[Wp]) -> Wp:
    # normal outcomes pass through; exceptional ones defer to their handler
    table = [wp_ret(w.dom, k) for k in range(normal)]
    table += list(handlers)
    return wp_bind(w, table)


def _catch_rel(wrel: Wp, h1: Sequence[Wp], h2: Sequence[Wp], hrel,
               a1n: int, a2n: int) -> Wp:
    s2n = a2n + len(h2)
    table = []
    for k in range(wrel.dom.size):
        ae1, ae2 = divmod(k, s2n)
        if ae1 < a1n and ae2 < a2n:
            table.append(wp_ret(wrel.dom, k))
        elif ae1 >= a1n and ae2 >= a2n:
            table.append(hrel[ae1 - a1n][ae2 - a2n])
        elif ae1 >= a1n:
            # left handler runs, the right side's normal result stands
            table.append(wp_map(h1[ae1 - a1n], wrel.dom,
                                lambda o1, j=ae2: o1 * s2n + j))
        else:
            table.append(wp_map(h2[ae2 - a2n], wrel.dom,
                                lambda o2, i=ae1: i * s2n + o2))
    return wp_bind(wrel, table)


@_full_rule("Catch", 2)
def _full_catch(prem, params) -> FullJudgment:
    who = "Catch"
    j, jerr = prem
    _same_carrier(j.monad, jerr.monad, who)
    _same_triple(j.theta, jerr.theta, who)
    monad = j.monad
    e1, e2 = _exc_carrier(monad, who)
    _x1, d1 = _env_extension(j.ctx.left, jerr.ctx.left, who, "left")
    _x2, d2 = _env_extension(j.ctx.right, jerr.ctx.right, who, "right")
    if d1 != e1 or d2 != e2:
        raise RuleError(f"{who}: handler premise must bind one exception per side")
    g1x = next(iter(j.ctx.left.valuations()))
    g2x = next(iter(j.ctx.right.valuations()))
    a1dom = j.c1(g1x).result
    a2dom = j.c2(g2x).result
    for g1 in j.ctx.left.valuations():
        for e in e1.values():
            if jerr.c1(g1 + (e,)).result != a1dom:
                raise RuleError(f"{who}: left handler result domain differs from the body")
    for g2 in j.ctx.right.valuations():
        for e in e2.values():
            if jerr.c2(g2 + (e,)).result != a2dom:
                raise RuleError(f"{who}: right handler result domain differs from the body")

    def c1(g1):
        return P.catch(j.c1(g1), lambda e: jerr.c1(g1 + (e,)))

    def c2(g2):
        return P.catch(j.c2(g2), lambda e: jerr.c2(g2 + (e,)))

    def w1(g1):
        return _catch_unary(j.w1(g1), a1dom.size,
                            tuple(jerr.w1(g1 + (e,)) for e in e1.values()))

    def w2(g2):
        return _catch_unary(j.w2(g2), a2dom.size,
                            tuple(jerr.w2(g2 + (e,)) for e in e2.values()))

    def wrel(g1, g2):
        h1 = tuple(jerr.w1(g1 + (e,)) for e in e1.values())
        h2 = tuple(jerr.w2(g2 + (e,)) for e in e2.values())
        hrel = tuple(tuple(jerr.wrel(g1 + (ea,), g2 + (eb,)) for eb in e2.values())
                     for ea in e1.values())
        # reuse the unary payloads' pair carrier: drop the unit padding
        h1 = tuple(wp_map(h, sum_domain(a1dom, e1), lambda o: o) for h in h1)
        h2 = tuple(wp_map(h, sum_domain(a2dom, e2), lambda o: o) for h in h2)
        return _catch_rel(j.wrel(g1, g2), h1, h2, hrel, a1dom.size, a2dom.size)

    return FullJudgment(j.ctx, monad, j.theta, c1, c2, w1, w2, wrel)


@_full_rule("Case", 2)
def _full_case(prem, params) -> FullJudgment:
    who = "Case"
    jl, jr = prem
    _same_carrier(jl.monad, jr.monad, who)
    _same_triple(jl.theta, jr.theta, who)
    x1 = _need(params, who, "x1")
    x2 = _need(params, who, "x2")
    base = SplitContext(Env(jl.ctx.left.vars[:-1]), Env(jl.ctx.right.vars[:-1]))
    # both premises must extend the same base, each binding one component
    _al, dal = _env_extension(base.left, jl.ctx.left, who, "left")
    _ar, dar = _env_extension(base.right, jl.ctx.right, who, "right")
    _bl, dbl = _env_extension(base.left, jr.ctx.left, who, "left")
    _br, dbr = _env_extension(base.right, jr.ctx.right, who, "right")
    sum1 = sum_domain(dal, dbl)
    sum2 = sum_domain(dar, dbr)
    g1x = next(iter(jl.ctx.left.valuations()))
    g2x = next(iter(jl.ctx.right.valuations()))
    r1, r2 = jl.c1(g1x).result, jl.c2(g2x).result
    h1x = next(iter(jr.ctx.left.valuations()))
    h2x = next(iter(jr.ctx.right.valuations()))
    if jr.c1(h1x).result != r1 or jr.c2(h2x).result != r2:
        raise RuleError(f"{who}: branch result domains differ")
    monad = jl.monad
    names1 = {n for n, _ in base.left.vars}
    names2 = {n for n, _ in base.right.vars}
    if x1 in names1 or x2 in names2:
        raise RuleError(f"{who}: scrutinee name already bound")
    ctx = SplitContext(base.left.extend((x1, sum1)), base.right.extend((x2, sum2)))

    def split1(g1):
        body, v = g1[:-1], g1[-1]
        is_l, i = case_index(dal, dbl, v.index)
        return (jl, body + (dal.value(i),)) if is_l else (jr, body + (dbl.value(i),))

    def split2(g2):
        body, v = g2[:-1], g2[-1]
        is_l, i = case_index(dar, dbr, v.index)
        return (jl, body + (dar.value(i),)) if is_l else (jr, body + (dbr.value(i),))

    def c1(g1):
        j, g = split1(g1)
        return j.c1(g)

    def c2(g2):
        j, g = split2(g2)
        return j.c2(g)

    def w1(g1):
        j, g = split1(g1)
        return j.w1(g)

    def w2(g2):
        j, g = split2(g2)
        return j.w2(g)

    def wrel(g1, g2):
        ja, ga = split1(g1)
        jb, gb = split2(g2)
        if ja is not jb:
            # the sum relation only relates matching tags: no claim here
            return monad.unsat_rel(r1, r2)
        return ja.wrel(ga, gb)

    return FullJudgment(ctx, monad, jl.theta, c1, c2, w1, w2, wrel)


# ---------------------------------------------------------------------------
# Law batteries


@dataclass(frozen=True)
class TripleLawCase:
    law: str
    part: str
    detail: str


@dataclass(frozen=True)
class TripleLawReport:
    subject: str
    checked: int
    failures: Tuple[TripleLawCase, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


class _LawRun:
    def __init__(self, subject: str):
        self.subject = subject
        self.checked = 0
        self.failures = []

    def equiv(self, leq, x, y, law: str, part: str):
        self.checked += 1
        fwd = leq(x, y)
        back = leq(y, x) if fwd.holds else fwd
        if not (fwd.holds and back.holds):
            bad = fwd if not fwd.holds else back
            self.failures.append(TripleLawCase(law, part,
                                               f"phi={bad.phi!r} where={bad.where!r}"))

    def report(self) -> TripleLawReport:
        return TripleLawReport(self.subject, self.checked, tuple(self.failures))


def check_triple_laws(monad: FullSpecMonad, rng: random.Random,
                      doms1: Sequence[FiniteDomain], doms2: Sequence[FiniteDomain],
                      samples: int = 2) -> TripleLawReport:
    """Unit, sequencing, and associativity for all three components, plus
    the morphism laws of the tau embeddings, on sampled payloads over the
    given result domains (three per side: argument, middle, final)."""
    a1d, b1d, c1d = (tuple(doms1) * 3)[:3]
    a2d, b2d, c2d = (tuple(doms2) * 3)[:3]
    run = _LawRun(monad.name)

    def rets1(dom):
        return tuple(monad.ret1(v) for v in dom.values())

    def rets2(dom):
        return tuple(monad.ret2(v) for v in dom.values())

    for _ in range(samples):
        m1 = monad.gen1(rng, a1d)
        m2 = monad.gen2(rng, a2d)
        mrel = monad.gen_rel(rng, a1d, a2d)
        f1 = tuple(monad.gen1(rng, b1d) for _ in range(a1d.size))
        f2 = tuple(monad.gen2(rng, b2d) for _ in range(a2d.size))
        frel = tuple(tuple(monad.gen_rel(rng, b1d, b2d) for _ in range(a2d.size))
                     for _ in range(a1d.size))
        g1 = tuple(monad.gen1(rng, c1d) for _ in range(b1d.size))
        g2 = tuple(monad.gen2(rng, c2d) for _ in range(b2d.size))
        grel = tuple(tuple(monad.gen_rel(rng, c1d, c2d) for _ in range(b2d.size))
                     for _ in range(b1d.size))

        for a in a1d.values():
            run.equiv(monad.leq1, monad.bind1(monad.ret1(a), f1, b1d), f1[a.index],
                      "unit-left", "left")
        for a in a2d.values():
            run.equiv(monad.leq2, monad.bind2(monad.ret2(a), f2, b2d), f2[a.index],
                      "unit-left", "right")
        run.equiv(monad.leq1, monad.bind1(m1, rets1(a1d), a1d), m1, "unit-right", "left")
        run.equiv(monad.leq2, monad.bind2(m2, rets2(a2d), a2d), m2, "unit-right", "right")
        run.equiv(monad.leq1,
                  monad.bind1(monad.bind1(m1, f1, b1d), g1, c1d),
                  monad.bind1(m1, tuple(monad.bind1(w, g1, c1d) for w in f1), c1d),
                  "assoc", "left")
        run.equiv(monad.leq2,
                  monad.bind2(monad.bind2(m2, f2, b2d), g2, c2d),
                  monad.bind2(m2, tuple(monad.bind2(w, g2, c2d) for w in f2), c2d),
                  "assoc", "right")

        for a1 in a1d.values():
            for a2 in a2d.values():
                run.equiv(monad.leq_rel,
                          monad.bind_rel(monad.ret1(a1), monad.ret2(a2),
                                         monad.ret_rel(a1, a2), f1, f2, frel, b1d, b2d),
                          frel[a1.index][a2.index],
                          "unit-left", "relational")
        retrel = tuple(tuple(monad.ret_rel(v1, v2) for v2 in a2d.values())
                       for v1 in a1d.values())
        run.equiv(monad.leq_rel,
                  monad.bind_rel(m1, m2, mrel, rets1(a1d), rets2(a2d), retrel, a1d, a2d),
                  mrel, "unit-right", "relational")
        lhs = monad.bind_rel(monad.bind1(m1, f1, b1d), monad.bind2(m2, f2, b2d),
                             monad.bind_rel(m1, m2, mrel, f1, f2, frel, b1d, b2d),
                             g1, g2, grel, c1d, c2d)
        comp = tuple(tuple(monad.bind_rel(f1[i], f2[k], frel[i][k], g1, g2, grel, c1d, c2d)
                           for k in range(a2d.size))
                     for i in range(a1d.size))
        rhs = monad.bind_rel(m1, m2, mrel,
                             tuple(monad.bind1(w, g1, c1d) for w in f1),
                             tuple(monad.bind2(w, g2, c2d) for w in f2),
                             comp, c1d, c2d)
        run.equiv(monad.leq_rel, lhs, rhs, "assoc", "relational")

        # tau is a morphism into the relational component
        for a in a1d.values():
            run.equiv(monad.leq_rel, monad.tau1(monad.ret1(a), a1d),
                      monad.ret_rel(a, UNIT_VAL), "tau-unit", "left")
        for a in a2d.values():
            run.equiv(monad.leq_rel, monad.tau2(monad.ret2(a), a2d),
                      monad.ret_rel(UNIT_VAL, a), "tau-unit", "right")
        u2 = (monad.ret2(UNIT_VAL),)
        run.equiv(monad.leq_rel,
                  monad.tau1(monad.bind1(m1, f1, b1d), b1d),
                  monad.bind_rel(m1, monad.ret2(UNIT_VAL), monad.tau1(m1, a1d),
                                 f1, u2,
                                 tuple((monad.tau1(w, b1d),) for w in f1),
                                 b1d, UNIT),
                  "tau-bind", "left")
        u1 = (monad.ret1(UNIT_VAL),)
        run.equiv(monad.leq_rel,
                  monad.tau2(monad.bind2(m2, f2, b2d), b2d),
                  monad.bind_rel(monad.ret1(UNIT_VAL), m2, monad.tau2(m2, a2d),
                                 u1, f2,
                                 (tuple(monad.tau2(w, b2d) for w in f2),),
                                 UNIT, b2d),
                  "tau-bind", "right")
    return run.report()


def check_exc_strictness(e1: FiniteDomain, e2: FiniteDomain, a: FiniteDomain,
                         depth: int = 3, table_limit: int = 16) -> TripleLawReport:
    """Does the exception observation triple map unit to unit and sequencing
    to sequencing exactly?  Checked over one representative per semantic
    class of raise/handle trees up to the given depth, in all three
    components at once."""
    from .genprog import enumerate_classes

    monad = wrelexc_monad(e1, e2)
    th = theta_exc_triple(e1, e2)
    sig1, sig2 = P.exc_sig(e1), P.exc_sig(e2)
    run = _LawRun(th.name)

    for v1 in a.values():
        run.equiv(monad.leq1, th.theta1(P.ret(sig1, v1)), monad.ret1(v1), "ret", "left")
    for v2 in a.values():
        run.equiv(monad.leq2, th.theta2(P.ret(sig2, v2)), monad.ret2(v2), "ret", "right")
    for v1 in a.values():
        for v2 in a.values():
            run.equiv(monad.leq_rel, th.theta_rel(P.ret(sig1, v1), P.ret(sig2, v2)),
                      monad.ret_rel(v1, v2), "ret", "relational")

    ms1 = enumerate_classes(sig1, a, depth)
    ms2 = enumerate_classes(sig2, a, depth)
    pool1 = enumerate_classes(sig1, a, depth - 1)
    pool2 = enumerate_classes(sig2, a, depth - 1)
    tables1 = list(product(pool1, repeat=a.size))[:table_limit]
    tables2 = list(product(pool2, repeat=a.size))[:table_limit]

    for m1 in ms1:
        for f1 in tables1:
            run.equiv(monad.leq1,
                      th.theta1(P.bind(m1, tuple(f1))),
                      monad.bind1(th.theta1(m1), tuple(th.theta1(p) for p in f1), a),
                      "bind", "left")
    for m2 in ms2:
        for f2 in tables2:
            run.equiv(monad.leq2,
                      th.theta2(P.bind(m2, tuple(f2))),
                      monad.bind2(th.theta2(m2), tuple(th.theta2(p) for p in f2), a),
                      "bind", "right")
    for m1 in ms1:
        for m2 in ms2:
            for f1 in tables1:
                for f2 in tables2:
                    frel = tuple(tuple(th.theta_rel(p1, p2) for p2 in f2) for p1 in f1)
                    run.equiv(monad.leq_rel,
                              th.theta_rel(P.bind(m1, tuple(f1)), P.bind(m2, tuple(f2))),
                              monad.bind_rel(th.theta1(m1), th.theta2(m2),
                                             th.theta_rel(m1, m2),
                                             tuple(th.theta1(p) for p in f1),
                                             tuple(th.theta2(p) for p in f2),
                                             frel, a, a),
                              "bind", "relational")
    return run.report()
