"""Effect observations: interpreting pairs of programs as relational specs.

Each observation maps two programs of a fixed effect into one carrier:

    theta_st    state pairs        -> WrelSt    (runs both sides, singleton demand)
    theta_ndet  nondeterminism     -> WrelPure  (forall / exists / forall-exists)
    theta_err   exceptions         -> WrelErr   (collapse every raise to one outcome)
    theta_io    interactive pairs  -> WrelIO    (event histories, per-side recursion)
    theta_part  loops, partial     -> WrelSt    (divergence satisfies everything)
    theta_tot   loops, total       -> WrelSt    (divergence satisfies nothing)
    theta_prob  probabilistic      -> WrelProb  (infimum over couplings, exact LP)

Two generic constructions are provided alongside the catalog:
`from_commuting_pair` combines two unary observations into a strict relational
one (sound when their images commute, which `check_commute` tests), and
`from_relator` turns a relation lifting for finite nondeterminism into a lax
observation.  `check_morphism_laws` classifies any observation's ret and bind
laws as equal, strictly less precise, or violated, with re-checkable witnesses.

Every observation here factors through the reference evaluators in
`programs`, so two programs with equal `semantic_key` get equal specs; the
battery builders rely on that to dedupe enumerated programs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import lp
from . import programs as P
from .domains import BOOL, UNIT, FiniteDomain, Value, boolv
from .genprog import enumerate_classes, enumerate_programs
from .programs import Program, Signature, semantic_key
from .specmonads import (
    DEFAULT_CAP,
    VIOLATED,
    LeqVerdict,
    OutcomeSpace,
    RelSpec,
    closure_spec,
    demonic_spec,
    err_space,
    io_demonic_spec,
    io_space,
    linear_spec,
    prob_space,
    pure_space,
    spec_bind,
    spec_leq,
    spec_ret,
    state_space,
    weakest,
)

FORALL, EXISTS, FORALL_EXISTS = "forall", "exists", "forall-exists"
NDET_MODES = (FORALL, EXISTS, FORALL_EXISTS)

STRICT, LAX = "strict", "lax"

IO_ROOT = (((), ()),)

ZERO, ONE = Fraction(0), Fraction(1)


@dataclass(frozen=True)
class EffectObservation:
    """A named map from program pairs to specs, with a strictness claim.

    `map` must be total on well-formed pairs of the declared effects; the
    claim records whether the ret and bind laws are expected to hold with
    equality (strict) or only as inequalities (lax).
    """

    name: str
    left_effect: str
    right_effect: str
    target: str
    map: Callable[[Program, Program], RelSpec]
    strictness: str

    def __call__(self, c1: Program, c2: Program) -> RelSpec:
        return self.map(c1, c2)


@dataclass(frozen=True)
class UnaryObservation:
    """One-sided observation into a pair carrier.

    `side` says which value slot of the carrier the program's results fill;
    the other slot is the unit domain.  Ambient structure (state components,
    event alphabets) is shared with the eventual pair carrier, so two unary
    observations on opposite sides can be composed by `from_commuting_pair`.
    """

    name: str
    effect: str
    side: int
    target: str
    embed: Callable[[Program], RelSpec]


def _expect_effect(c: Program, allowed, who: str):
    if isinstance(allowed, str):
        allowed = (allowed,)
    if c.sig.effect not in allowed:
        raise ValueError(f"{who} expects {' or '.join(allowed)} programs, got {c.sig.effect!r}")


# ---------------------------------------------------------------------------
# State


def theta_st(c1: Program, c2: Program) -> RelSpec:
    """Run both sides and demand the postcondition of the single outcome pair."""
    _expect_effect(c1, (P.STATE, P.IMP), "theta_st")
    _expect_effect(c2, (P.STATE, P.IMP), "theta_st")
    space = state_space(c1.result, c1.sig.state, c2.result, c2.sig.state)
    table = []
    for pt in space.points():
        s1i, s2i = space.point_split(pt)
        v1, t1 = P.run_state(c1, Value(space.s1, s1i))
        v2, t2 = P.run_state(c2, Value(space.s2, s2i))
        table.append(frozenset({space.st_outcome(v1.index, t1.index, v2.index, t2.index)}))
    return demonic_spec(space, table)


def _theta_st_unary_spec(c: Program, s1: FiniteDomain, s2: FiniteDomain,
                         side: int, comp: int) -> RelSpec:
    a = c.result
    space = state_space(a if side == 1 else UNIT, s1, a if side == 2 else UNIT, s2)
    own = s1 if comp == 1 else s2
    if c.sig.state != own:
        raise ValueError("program state domain does not match the chosen component")
    table = []
    for pt in space.points():
        s1i, s2i = space.point_split(pt)
        cur = Value(own, s1i if comp == 1 else s2i)
        v, t = P.run_state(c, cur)
        n1, n2 = (t.index, s2i) if comp == 1 else (s1i, t.index)
        o = space.st_outcome(v.index if side == 1 else 0, n1,
                             v.index if side == 2 else 0, n2)
        table.append(frozenset({o}))
    return demonic_spec(space, table)


def unary_theta_st(side: int, s1: FiniteDomain, s2: FiniteDomain,
                   component: Optional[int] = None) -> UnaryObservation:
    """Unary state observation into the two-component carrier.

    `component` picks which state slot the program reads and writes; it
    defaults to the value side, giving the commuting left/right pair.  Making
    both sides act on the same component breaks commutation (order shows).
    """
    comp = side if component is None else component
    return UnaryObservation(
        name=f"theta-st/{side}@{comp}",
        effect=P.STATE,
        side=side,
        target="WrelSt",
        embed=lambda c: _theta_st_unary_spec(c, s1, s2, side, comp),
    )


# ---------------------------------------------------------------------------
# Finite nondeterminism


def theta_ndet(mode: str, c1: Program, c2: Program) -> RelSpec:
    """Quantified transformer over the two outcome sets.

    forall demands the postcondition on every pair, exists on at least one,
    and forall-exists asks every left outcome to find some right partner.
    Empty sets behave accordingly: forall of nothing is trivially met.
    """
    _expect_effect(c1, P.NDET, "theta_ndet")
    _expect_effect(c2, P.NDET, "theta_ndet")
    if mode not in NDET_MODES:
        raise ValueError(f"mode must be one of {NDET_MODES}, got {mode!r}")
    space = pure_space(c1.result, c2.result)
    r1, r2 = P.run_ndet(c1), P.run_ndet(c2)
    width = space.a2.size
    pairs1 = sorted(v.index for v in r1)
    pairs2 = sorted(v.index for v in r2)
    if mode == FORALL:
        allp = frozenset(i1 * width + i2 for i1 in pairs1 for i2 in pairs2)
        return demonic_spec(space, [allp])

    if mode == EXISTS:
        def ex(f, _pt):
            return any(f(i1 * width + i2) for i1 in pairs1 for i2 in pairs2)
        return closure_spec(space, ex)

    def fe(f, _pt):
        return all(any(f(i1 * width + i2) for i2 in pairs2) for i1 in pairs1)
    return closure_spec(space, fe)


# ---------------------------------------------------------------------------
# Exceptions


def theta_err(c1: Program, c2: Program) -> RelSpec:
    """Demand the value pair when both sides return; any raise collapses to
    the single exceptional outcome."""
    _expect_effect(c1, P.EXC, "theta_err")
    _expect_effect(c2, P.EXC, "theta_err")
    space = err_space(c1.result, c2.result)
    t1, v1 = P.run_exc(c1)
    t2, v2 = P.run_exc(c2)
    if t1 == P.OK and t2 == P.OK:
        return demonic_spec(space, [frozenset({space.err_ok(v1.index, v2.index)})])
    return demonic_spec(space, [frozenset({space.err_bad()})])


# ---------------------------------------------------------------------------
# Interaction


def _event_depth(p: Program) -> int:
    n = p.node
    if isinstance(n, P.Ret):
        return 0
    if isinstance(n, P.Bind):
        return _event_depth(n.inner) + max(_event_depth(c) for c in n.cont)
    if isinstance(n, P.Input):
        return 1 + max(_event_depth(c) for c in n.cont)
    if isinstance(n, P.Output):
        return 1 + _event_depth(n.then)
    raise TypeError(f"{n.__class__.__name__} under io")


@lru_cache(maxsize=None)
def _one_sided_io_space(dom: FiniteDomain, side: int, i1, o1, i2, o2) -> OutcomeSpace:
    return io_space(dom if side == 1 else UNIT, i1, o1,
                    dom if side == 2 else UNIT, i2, o2)


def _theta_io_spec(c: Program, space: OutcomeSpace, side: int, points) -> RelSpec:
    """Tree recursion: each event node prepends to its own history component."""
    alph = (space.i1, space.o1, space.i2, space.o2)

    def rec(q: Program) -> RelSpec:
        n = q.node
        sp = _one_sided_io_space(q.result, side, *alph)
        if isinstance(n, P.Ret):
            pair = (n.value, Value(UNIT, 0)) if side == 1 else (Value(UNIT, 0), n.value)
            return spec_ret(sp, pair[0], pair[1], points=points, horizon=0)
        if isinstance(n, P.Bind):
            wm = rec(n.inner)
            subs = {v: rec(k) for v, k in enumerate(n.cont)}
            key = (lambda i1, i2: subs[i1]) if side == 1 else (lambda i1, i2: subs[i2])
            return spec_bind(wm, key)
        if isinstance(n, P.Input):
            idom = q.sig.inp
            isp = _one_sided_io_space(idom, side, *alph)

            def read(pt, _d=idom):
                h1, h2 = pt
                if side == 1:
                    return {(i, ((P.IN, Value(_d, i)),) + h1, h2) for i in range(_d.size)}
                return {(i, h1, ((P.IN, Value(_d, i)),) + h2) for i in range(_d.size)}

            prim = io_demonic_spec(isp, read, points, 1)
            subs = {v: rec(k) for v, k in enumerate(n.cont)}
            key = (lambda i1, i2: subs[i1]) if side == 1 else (lambda i1, i2: subs[i2])
            return spec_bind(prim, key)
        if isinstance(n, P.Output):
            usp = _one_sided_io_space(UNIT, side, *alph)
            ev = (P.OUT, n.value)

            def write(pt, _ev=ev):
                h1, h2 = pt
                if side == 1:
                    return {(0, (_ev,) + h1, h2)}
                return {(0, h1, (_ev,) + h2)}

            prim = io_demonic_spec(usp, write, points, 1)
            sub = rec(n.then)
            return spec_bind(prim, lambda _i, _j: sub)
        raise TypeError(f"{n.__class__.__name__} under io")

    return rec(c)


def unary_theta_io(side: int, i1: FiniteDomain, o1: FiniteDomain,
                   i2: FiniteDomain, o2: FiniteDomain, points=IO_ROOT) -> UnaryObservation:
    pts = tuple(points)
    cache: Dict[Program, RelSpec] = {}

    def embed(c: Program) -> RelSpec:
        w = cache.get(c)
        if w is not None:
            return w
        _expect_effect(c, P.IO, "unary_theta_io")
        own_i, own_o = (i1, o1) if side == 1 else (i2, o2)
        if c.sig.inp != own_i or c.sig.out != own_o:
            raise ValueError("program alphabets do not match the declared carrier")
        space = io_space(c.result if side == 1 else UNIT, i1, o1,
                         c.result if side == 2 else UNIT, i2, o2)
        w = _theta_io_spec(c, space, side, pts)
        cache[c] = w
        return w

    return UnaryObservation(
        name=f"theta-io/{side}",
        effect=P.IO,
        side=side,
        target="WrelIO",
        embed=embed,
    )


def theta_io(c1: Program, c2: Program, points=IO_ROOT) -> RelSpec:
    """Pairing of the two one-sided interactive observations."""
    _expect_effect(c1, P.IO, "theta_io")
    _expect_effect(c2, P.IO, "theta_io")
    obs = observation_io(c1.sig.inp, c1.sig.out, c2.sig.inp, c2.sig.out, points)
    return obs.map(c1, c2)


# ---------------------------------------------------------------------------
# Loops: partial and total correctness


def theta_part(c1: Program, c2: Program) -> RelSpec:
    """Partial correctness: quantify over terminating outcomes only.

    Each side contributes its terminating run, if any; a diverging side
    empties the demand at that state pair, so the spec holds there for every
    postcondition.
    """
    _expect_effect(c1, (P.IMP, P.STATE), "theta_part")
    _expect_effect(c2, (P.IMP, P.STATE), "theta_part")
    space = state_space(c1.result, c1.sig.state, c2.result, c2.sig.state)
    table = []
    for pt in space.points():
        s1i, s2i = space.point_split(pt)
        r1 = P.run_imp(c1, Value(space.s1, s1i))
        r2 = P.run_imp(c2, Value(space.s2, s2i))
        if r1 is None or r2 is None:
            table.append(frozenset())
        else:
            (v1, t1), (v2, t2) = r1, r2
            table.append(frozenset({space.st_outcome(v1.index, t1.index, v2.index, t2.index)}))
    return demonic_spec(space, table)


def theta_tot(c1: Program, c2: Program) -> RelSpec:
    """Total correctness: termination on both sides becomes part of the
    demand, so a diverging state pair satisfies no postcondition at all.
    This variant is our reconstruction; `theta_part` is the primary one."""
    _expect_effect(c1, (P.IMP, P.STATE), "theta_tot")
    _expect_effect(c2, (P.IMP, P.STATE), "theta_tot")
    space = state_space(c1.result, c1.sig.state, c2.result, c2.sig.state)
    table = []
    for pt in space.points():
        s1i, s2i = space.point_split(pt)
        r1 = P.run_imp(c1, Value(space.s1, s1i))
        r2 = P.run_imp(c2, Value(space.s2, s2i))
        if r1 is None or r2 is None:
            table.append(VIOLATED)
        else:
            (v1, t1), (v2, t2) = r1, r2
            table.append(frozenset({space.st_outcome(v1.index, t1.index, v2.index, t2.index)}))
    return demonic_spec(space, table)


def _theta_imp_spec(c: Program, s1: FiniteDomain, s2: FiniteDomain,
                    side: int, comp: int) -> RelSpec:
    """Unary partial-correctness transformer by tree recursion.

    Loops take the least fixpoint of w -> bind (body) (continue ? w : done),
    computed by iterating from the everywhere-trivial spec until the demonic
    tables stop changing; the chain only grows, and the lattice of entries is
    finite, so this terminates.
    """
    own = s1 if comp == 1 else s2
    if c.sig.state != own:
        raise ValueError("program state domain does not match the chosen component")

    def sp_for(dom: FiniteDomain) -> OutcomeSpace:
        return state_space(dom if side == 1 else UNIT, s1,
                           dom if side == 2 else UNIT, s2)

    def rec(q: Program) -> RelSpec:
        n = q.node
        space = sp_for(q.result)
        if isinstance(n, P.Ret):
            u = Value(UNIT, 0)
            a1v, a2v = (n.value, u) if side == 1 else (u, n.value)
            return spec_ret(space, a1v, a2v)
        if isinstance(n, P.Bind):
            wm = rec(n.inner)
            subs = {v: rec(k) for v, k in enumerate(n.cont)}
            key = (lambda i1, i2: subs[i1]) if side == 1 else (lambda i1, i2: subs[i2])
            return spec_bind(wm, key)
        if isinstance(n, P.Get):
            subs = [rec(k) for k in n.cont]
            table = []
            for pt in space.points():
                s1i, s2i = space.point_split(pt)
                cur = s1i if comp == 1 else s2i
                table.append(subs[cur].demonic_at(pt))
            return demonic_spec(space, table)
        if isinstance(n, P.Put):
            sub = rec(n.then)
            table = []
            for pt in space.points():
                s1i, s2i = space.point_split(pt)
                npt = (space.point(n.state.index, s2i) if comp == 1
                       else space.point(s1i, n.state.index))
                table.append(sub.demonic_at(npt))
            return demonic_spec(space, table)
        if isinstance(n, P.DoWhile):
            wbody = rec(n.body)
            bsp = sp_for(BOOL)
            u = Value(UNIT, 0)
            fv = boolv(False)
            done = spec_ret(bsp, fv if side == 1 else u, fv if side == 2 else u)
            w = weakest(bsp)
            limit = bsp.point_count * (bsp.size + 2) + 4
            for _ in range(limit):
                def step(i1, i2, _w=w):
                    b = i1 if side == 1 else i2
                    return _w if b == 1 else done
                nxt = spec_bind(wbody, step)
                if nxt.table == w.table:
                    break
                w = nxt
            else:
                raise RuntimeError("loop fixpoint failed to converge")
            sub = rec(n.then)
            return spec_bind(w, lambda _i, _j: sub)
        raise TypeError(f"{n.__class__.__name__} under imp")

    return rec(c)


def theta_part_unary(c: Program) -> RelSpec:
    """One-sided partial-correctness spec over the program's own state.

    The carrier keeps a unit second component, so points are effectively the
    program's initial states and outcomes its (value, final state) pairs.
    """
    _expect_effect(c, (P.IMP, P.STATE), "theta_part_unary")
    return _theta_imp_spec(c, c.sig.state, UNIT, side=1, comp=1)


def unary_theta_part(side: int, s1: FiniteDomain, s2: FiniteDomain,
                     component: Optional[int] = None) -> UnaryObservation:
    comp = side if component is None else component
    return UnaryObservation(
        name=f"theta-part/{side}@{comp}",
        effect=P.IMP,
        side=side,
        target="WrelSt",
        embed=lambda c: _theta_imp_spec(c, s1, s2, side, comp),
    )


def theta_part_slow(c1: Program, c2: Program) -> RelSpec:
    """Fixpoint-based cross check of theta_part (pairing of the two
    one-sided transformers)."""
    _expect_effect(c1, (P.IMP, P.STATE), "theta_part_slow")
    _expect_effect(c2, (P.IMP, P.STATE), "theta_part_slow")
    u1 = unary_theta_part(1, c1.sig.state, c2.sig.state)
    u2 = unary_theta_part(2, c1.sig.state, c2.sig.state)
    return from_commuting_pair(u1, u2, name="theta-part").map(c1, c2)


# ---------------------------------------------------------------------------
# Probability


@lru_cache(maxsize=4096)
def _coupling_pieces(w1: tuple, w2: tuple, width: int):
    sup1 = [i for i, w in enumerate(w1) if w > 0]
    sup2 = [j for j, w in enumerate(w2) if w > 0]
    p = [w1[i] for i in sup1]
    q = [w2[j] for j in sup2]
    size = len(w1) * width
    pieces = []
    for vert in lp.coupling_vertices(p, q):
        coeffs = [ZERO] * size
        for r, i in enumerate(sup1):
            for s, j in enumerate(sup2):
                coeffs[i * width + j] = vert[r * len(sup2) + s]
        pieces.append((ZERO, tuple(coeffs)))
    return tuple(pieces)


def theta_prob(c1: Program, c2: Program) -> RelSpec:
    """Infimum of the expected postcondition over all couplings.

    The infimum of a linear objective over the coupling polytope is attained
    at a vertex, so the spec is exactly the minimum over the polytope's
    vertices, each contributing one affine piece.  Exact rationals
    throughout.
    """
    _expect_effect(c1, P.PROB, "theta_prob")
    _expect_effect(c2, P.PROB, "theta_prob")
    space = prob_space(c1.result, c2.result)
    d1, d2 = P.run_prob(c1), P.run_prob(c2)
    if d1.mass() != d2.mass():
        raise ValueError(f"no coupling exists: masses {d1.mass()} and {d2.mass()} differ")
    pieces = _coupling_pieces(d1.weights, d2.weights, space.a2.size)
    return linear_spec(space, pieces, exact_prune=False)


# ---------------------------------------------------------------------------
# Generic constructions


def _pair_space(sp1: OutcomeSpace, sp2: OutcomeSpace) -> OutcomeSpace:
    if sp1.tag != sp2.tag:
        raise ValueError(f"cannot pair {sp1.tag} with {sp2.tag}")
    if sp1.a2 != UNIT or sp2.a1 != UNIT:
        raise ValueError("one-sided specs must keep the unit domain on the off side")
    for f in ("s1", "s2", "i1", "o1", "i2", "o2"):
        if getattr(sp1, f) != getattr(sp2, f):
            raise ValueError("one-sided specs disagree on the ambient carrier")
    return replace(sp1, a2=sp2.a2)


def _sequence(w1: RelSpec, w2: RelSpec) -> RelSpec:
    """bind w1 (fun a1 -> bind w2 (fun a2 -> ret (a1, a2)))."""
    tspace = _pair_space(w1.space, w2.space)
    a1d, a2d = tspace.a1, tspace.a2
    kw = {}
    if tspace.tag == "WrelIO":
        kw = dict(points=w1.io_points, horizon=0)

    def outer(i1, _u):
        def inner(_v, i2):
            return spec_ret(tspace, Value(a1d, i1), Value(a2d, i2), **kw)
        return spec_bind(w2, inner)

    return spec_bind(w1, outer)


def _sequence_flipped(w1: RelSpec, w2: RelSpec) -> RelSpec:
    """bind w2 (fun a2 -> bind w1 (fun a1 -> ret (a1, a2)))."""
    tspace = _pair_space(w1.space, w2.space)
    a1d, a2d = tspace.a1, tspace.a2
    kw = {}
    if tspace.tag == "WrelIO":
        kw = dict(points=w2.io_points, horizon=0)

    def outer(_u, i2):
        def inner(i1, _v):
            return spec_ret(tspace, Value(a1d, i1), Value(a2d, i2), **kw)
        return spec_bind(w1, inner)

    return spec_bind(w2, outer)


def from_commuting_pair(u1: UnaryObservation, u2: UnaryObservation,
                        name: Optional[str] = None) -> EffectObservation:
    """Pair two one-sided observations by sequencing left before right.

    Sound (and strict) exactly when the embedded specs commute; run
    `check_commute` on the enumeration of interest to certify that.
    """
    if u1.side != 1 or u2.side != 2:
        raise ValueError("expected a left observation and a right observation")
    if u1.target != u2.target:
        raise ValueError(f"targets differ: {u1.target} vs {u2.target}")

    def map_fn(c1: Program, c2: Program) -> RelSpec:
        return _sequence(u1.embed(c1), u2.embed(c2))

    return EffectObservation(
        name=name or f"{u1.name}*{u2.name}",
        left_effect=u1.effect,
        right_effect=u2.effect,
        target=u1.target,
        map=map_fn,
        strictness=STRICT,
    )


@dataclass(frozen=True)
class CommuteVerdict:
    kind: str  # "commutes" | "fails" | "unknown"
    checked: int
    witness: Optional[Tuple[Program, Program, LeqVerdict]] = None

    @property
    def commutes(self) -> bool:
        return self.kind == "commutes"


def check_commute(u1: UnaryObservation, u2: UnaryObservation,
                  pairs: Sequence[Tuple[Program, Program]],
                  cap: int = DEFAULT_CAP, seed: int = 0) -> CommuteVerdict:
    """Compare both sequencing orders extensionally on the given pairs."""
    checked = 0
    for c1, c2 in pairs:
        w1, w2 = u1.embed(c1), u2.embed(c2)
        lhs = _sequence(w1, w2)
        rhs = _sequence_flipped(w1, w2)
        fwd = spec_leq(lhs, rhs, cap, seed)
        back = spec_leq(rhs, lhs, cap, seed) if fwd.holds else fwd
        checked += 1
        if fwd.failed or back.failed:
            bad = fwd if fwd.failed else back
            return CommuteVerdict("fails", checked, (c1, c2, bad))
        if fwd.is_unknown or back.is_unknown:
            bad = fwd if fwd.is_unknown else back
            return CommuteVerdict("unknown", checked, (c1, c2, bad))
    return CommuteVerdict("commutes", checked)


def from_relator(gamma: Callable[[Callable[[Value, Value], bool], frozenset, frozenset], bool],
                 name: str = "relator") -> EffectObservation:
    """Lax observation from a relation lifting for finite nondeterminism.

    `gamma` takes a value-pair relation and the two outcome sets and decides
    whether the lifted relation holds; the observation just swaps arguments.
    """

    def map_fn(c1: Program, c2: Program) -> RelSpec:
        _expect_effect(c1, P.NDET, name)
        _expect_effect(c2, P.NDET, name)
        space = pure_space(c1.result, c2.result)
        r1, r2 = P.run_ndet(c1), P.run_ndet(c2)
        width = space.a2.size

        def body(f, _pt):
            return bool(gamma(lambda v1, v2: f(v1.index * width + v2.index), r1, r2))

        return closure_spec(space, body)

    return EffectObservation(
        name=name,
        left_effect=P.NDET,
        right_effect=P.NDET,
        target="WrelPure",
        map=map_fn,
        strictness=LAX,
    )


# ---------------------------------------------------------------------------
# The named observations


def observation_st() -> EffectObservation:
    return EffectObservation("theta-st", P.STATE, P.STATE, "WrelSt", theta_st, STRICT)


def observation_ndet(mode: str) -> EffectObservation:
    if mode not in NDET_MODES:
        raise ValueError(f"mode must be one of {NDET_MODES}, got {mode!r}")
    claim = LAX if mode == FORALL_EXISTS else STRICT
    return EffectObservation(f"theta-ndet-{mode}", P.NDET, P.NDET, "WrelPure",
                             lambda c1, c2: theta_ndet(mode, c1, c2), claim)


def observation_err() -> EffectObservation:
    return EffectObservation("theta-err", P.EXC, P.EXC, "WrelErr", theta_err, STRICT)


def observation_io(i1: FiniteDomain, o1: FiniteDomain,
                   i2: FiniteDomain, o2: FiniteDomain, points=IO_ROOT) -> EffectObservation:
    u1 = unary_theta_io(1, i1, o1, i2, o2, points)
    u2 = unary_theta_io(2, i1, o1, i2, o2, points)
    return from_commuting_pair(u1, u2, name="theta-io")


def observation_part() -> EffectObservation:
    return EffectObservation("theta-part", P.IMP, P.IMP, "WrelSt", theta_part, STRICT)


def observation_tot() -> EffectObservation:
    return EffectObservation("theta-tot", P.IMP, P.IMP, "WrelSt", theta_tot, STRICT)


def observation_prob() -> EffectObservation:
    return EffectObservation("theta-prob", P.PROB, P.PROB, "WrelProb", theta_prob, LAX)


# ---------------------------------------------------------------------------
# Morphism-law checking


@dataclass(frozen=True)
class LawWitness:
    """Everything needed to re-evaluate one discrepancy by hand."""

    law: str        # "ret" | "bind"
    kind: str       # "strictly-less" | "violation"
    programs: tuple
    lhs: RelSpec
    rhs: RelSpec
    phi: object
    point: object = None


def recheck_witness(w: LawWitness) -> bool:
    """Re-evaluate a witness by direct spec evaluation."""
    if w.lhs.tag == "WrelProb":
        l, r = w.lhs.at(w.phi), w.rhs.at(w.phi)
        return l > r if w.kind == "violation" else l < r
    if w.kind == "violation":
        return bool(w.rhs.at(w.phi, w.point)) and not w.lhs.at(w.phi, w.point)
    return bool(w.lhs.at(w.phi, w.point)) and not w.rhs.at(w.phi, w.point)


@dataclass(frozen=True)
class LawVerdict:
    kind: str                      # "equal" | "strictly-less" | "violation" | "unknown"
    checked: int
    witness: Optional[LawWitness] = None
    definite: bool = True          # False when some comparison was sampled, not decided

    @property
    def equal(self) -> bool:
        return self.kind == "equal"


@dataclass(frozen=True)
class MorphismReport:
    observation: str
    claimed: str
    ret_law: LawVerdict
    bind_law: LawVerdict

    @property
    def consistent(self) -> bool:
        """Does the battery outcome back the strictness claim?"""
        if self.claimed == STRICT:
            return self.ret_law.equal and self.bind_law.equal
        return self.ret_law.kind != "violation" and self.bind_law.kind != "violation"


@dataclass(frozen=True)
class ProgramBattery:
    """Instances a morphism-law check quantifies over.

    `ms` are middle computation pairs, `fs` continuation-table pairs; every
    table is total over the corresponding side's result domain.
    """

    sig1: Signature
    sig2: Signature
    rets: Tuple[Tuple[Value, Value], ...]
    ms: Tuple[Tuple[Program, Program], ...]
    fs: Tuple[Tuple[Tuple[Program, ...], Tuple[Program, ...]], ...]


def _prob_phi_pool(n: int, seed: int, extra: int = 12) -> List[Tuple[Fraction, ...]]:
    rng = random.Random(seed)
    pool = [tuple([ZERO] * n), tuple([ONE] * n)]
    for o in range(n):
        row = [ZERO] * n
        row[o] = ONE
        pool.append(tuple(row))
    grid = (ZERO, Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), ONE)
    for _ in range(extra):
        pool.append(tuple(rng.choice(grid) for _ in range(n)))
    return pool


def _classify(lhs: RelSpec, rhs: RelSpec, cap: int, seed: int,
              phi_pool: Optional[Dict[int, List]] = None):
    """(kind, phi, point, definite) for lhs vs rhs under the spec preorder."""
    if lhs.tag == "WrelProb" and (lhs.pieces is None or rhs.pieces is None):
        n = lhs.space.size
        pool = phi_pool.setdefault(n, _prob_phi_pool(n, seed)) if phi_pool is not None \
            else _prob_phi_pool(n, seed)
        strict_phi = None
        for vec in pool:
            l, r = lhs.at(vec), rhs.at(vec)
            if l > r:
                return "violation", vec, None, True
            if l < r and strict_phi is None:
                strict_phi = vec
        if strict_phi is not None:
            return "strictly-less", strict_phi, None, True
        return "equal", None, None, False
    fwd = spec_leq(lhs, rhs, cap, seed)
    if fwd.failed:
        return "violation", fwd.phi, fwd.point, True
    if fwd.is_unknown:
        return "unknown", None, None, False
    back = spec_leq(rhs, lhs, cap, seed)
    if back.failed:
        return "strictly-less", back.phi, back.point, True
    if back.is_unknown:
        return "unknown", None, None, False
    return "equal", None, None, True


def classify_bind_instance(obs: EffectObservation, m1: Program, m2: Program,
                           f1: Sequence[Program], f2: Sequence[Program],
                           cap: int = DEFAULT_CAP, seed: int = 0):
    """Classify one bind-law instance; returns (kind, LawWitness or None)."""
    f1, f2 = tuple(f1), tuple(f2)
    lhs = obs.map(P.bind(m1, f1), P.bind(m2, f2))
    wm = obs.map(m1, m2)
    conts = {(i, j): obs.map(f1[i], f2[j]) for i in range(len(f1)) for j in range(len(f2))}
    rhs = spec_bind(wm, lambda i, j: conts[(i, j)])
    kind, phi, point, _definite = _classify(lhs, rhs, cap, seed)
    if kind in ("strictly-less", "violation"):
        return kind, LawWitness("bind", kind, (m1, m2, f1, f2), lhs, rhs, phi, point)
    return kind, None


def check_morphism_laws(obs: EffectObservation, battery: ProgramBattery,
                        cap: int = DEFAULT_CAP, seed: int = 0) -> MorphismReport:
    """Classify the ret and bind laws over a battery of instances.

    A violation ends the scan immediately; otherwise the strictest observed
    relation wins (any strict instance makes the law strictly-less).  The
    verdict is definite when every comparison along the way was decided
    exactly rather than sampled.
    """
    phi_pool: Dict[int, List] = {}

    def run(instances) -> LawVerdict:
        checked = 0
        strict_witness = None
        unknown = False
        definite = True
        for law, progs, lhs, rhs in instances:
            checked += 1
            kind, phi, point, dfn = _classify(lhs, rhs, cap, seed, phi_pool)
            definite = definite and dfn
            if kind == "violation":
                return LawVerdict("violation", checked,
                                  LawWitness(law, kind, progs, lhs, rhs, phi, point), definite)
            if kind == "strictly-less" and strict_witness is None:
                strict_witness = LawWitness(law, kind, progs, lhs, rhs, phi, point)
            if kind == "unknown":
                unknown = True
        if strict_witness is not None:
            return LawVerdict("strictly-less", checked, strict_witness, definite)
        if unknown:
            return LawVerdict("unknown", checked, None, False)
        return LawVerdict("equal", checked, None, definite)

    def ret_instances():
        for a1, a2 in battery.rets:
            lhs = obs.map(P.ret(battery.sig1, a1), P.ret(battery.sig2, a2))
            kw = dict(points=lhs.io_points) if lhs.tag == "WrelIO" else {}
            rhs = spec_ret(lhs.space, a1, a2, **kw)
            yield "ret", (a1, a2), lhs, rhs

    def bind_instances():
        wms = [obs.map(m1, m2) for m1, m2 in battery.ms]
        cont_cache: Dict[Tuple[Program, Program], RelSpec] = {}
        for f1, f2 in battery.fs:
            conts = {}
            for i in range(len(f1)):
                for j in range(len(f2)):
                    key = (f1[i], f2[j])
                    if key not in cont_cache:
                        cont_cache[key] = obs.map(*key)
                    conts[(i, j)] = cont_cache[key]
            for (m1, m2), wm in zip(battery.ms, wms):
                lhs = obs.map(P.bind(m1, f1), P.bind(m2, f2))
                rhs = spec_bind(wm, lambda i, j, _c=conts: _c[(i, j)])
                yield "bind", (m1, m2, f1, f2), lhs, rhs

    return MorphismReport(obs.name, obs.strictness, run(ret_instances()), run(bind_instances()))


# ---------------------------------------------------------------------------
# Battery builders


def dedupe_programs(progs: Sequence[Program]) -> List[Program]:
    """First representative of each evaluator-fingerprint class, in order."""
    seen: Dict[object, Program] = {}
    for p in progs:
        seen.setdefault(semantic_key(p), p)
    return list(seen.values())


def _tables(pool: Sequence[Program], arity: int, limit: int) -> List[Tuple[Program, ...]]:
    """Total tables over the pool: exhaustive when they fit the limit,
    otherwise a covering family of constant and strided value-dependent
    tables, taken in diagonal order so both vary early under tight limits."""
    n = len(pool)
    if n == 0:
        raise ValueError("empty continuation pool")
    if n ** arity <= limit:
        return list(product(pool, repeat=arity))
    out: List[Tuple[Program, ...]] = []
    seen = set()
    for d in range(2 * n - 1):
        for j in range(max(0, d - n + 1), min(d, n - 1) + 1):
            k = d - j
            t = tuple(pool[(j + i * k) % n] for i in range(arity))
            key = tuple(semantic_key(p) for p in t)
            if key not in seen:
                seen.add(key)
                out.append(t)
                if len(out) >= limit:
                    return out
    return out


def _battery(sig1: Signature, sig2: Signature, a: FiniteDomain, depth: int,
             cont_depth: int, table_limit: int, m_limit: Optional[int],
             **enum_kw) -> ProgramBattery:
    ms1 = enumerate_classes(sig1, a, depth, **enum_kw)
    ms2 = enumerate_classes(sig2, a, depth, **enum_kw)
    if m_limit is not None:
        ms1, ms2 = ms1[:m_limit], ms2[:m_limit]
    pool1 = enumerate_classes(sig1, a, cont_depth, **enum_kw)
    pool2 = enumerate_classes(sig2, a, cont_depth, **enum_kw)
    fs1 = _tables(pool1, a.size, table_limit)
    fs2 = _tables(pool2, a.size, table_limit)
    rets = tuple((v1, v2) for v1 in a.values() for v2 in a.values())
    return ProgramBattery(
        sig1=sig1, sig2=sig2, rets=rets,
        ms=tuple((m1, m2) for m1 in ms1 for m2 in ms2),
        fs=tuple((f1, f2) for f1 in fs1 for f2 in fs2),
    )


def battery_state(a: FiniteDomain, s1: FiniteDomain, s2: Optional[FiniteDomain] = None,
                  depth: int = 3, cont_depth: int = 2, table_limit: int = 24,
                  m_limit: Optional[int] = None) -> ProgramBattery:
    return _battery(P.state_sig(s1), P.state_sig(s2 or s1), a,
                    depth, cont_depth, table_limit, m_limit)


def battery_imp(a: FiniteDomain, s1: FiniteDomain, s2: Optional[FiniteDomain] = None,
                depth: int = 3, cont_depth: int = 2, table_limit: int = 16,
                m_limit: Optional[int] = None) -> ProgramBattery:
    return _battery(P.imp_sig(s1), P.imp_sig(s2 or s1), a,
                    depth, cont_depth, table_limit, m_limit)


def battery_exc(a: FiniteDomain, e1: FiniteDomain, e2: Optional[FiniteDomain] = None,
                depth: int = 3, cont_depth: int = 2, table_limit: int = 64,
                m_limit: Optional[int] = None) -> ProgramBattery:
    return _battery(P.exc_sig(e1), P.exc_sig(e2 or e1), a,
                    depth, cont_depth, table_limit, m_limit)


def battery_ndet(a: FiniteDomain, depth: int = 3, cont_depth: int = 2,
                 table_limit: int = 64, m_limit: Optional[int] = None) -> ProgramBattery:
    return _battery(P.ndet_sig(), P.ndet_sig(), a, depth, cont_depth, table_limit, m_limit)


def battery_io(a: FiniteDomain, i1: FiniteDomain, o1: FiniteDomain,
               i2: Optional[FiniteDomain] = None, o2: Optional[FiniteDomain] = None,
               depth: int = 3, cont_depth: int = 2, table_limit: int = 4,
               m_limit: Optional[int] = None) -> ProgramBattery:
    return _battery(P.io_sig(i1, o1), P.io_sig(i2 or i1, o2 or o1), a,
                    depth, cont_depth, table_limit, m_limit)


def battery_prob(a: FiniteDomain, depth: int = 3, cont_depth: int = 2,
                 table_limit: int = 6, m_limit: Optional[int] = 12,
                 flips: Sequence[Fraction] = (Fraction(0), Fraction(1, 4), Fraction(1, 2)),
                 ) -> ProgramBattery:
    return _battery(P.prob_sig(), P.prob_sig(), a, depth, cont_depth,
                    table_limit, m_limit, flip_params=tuple(flips))
