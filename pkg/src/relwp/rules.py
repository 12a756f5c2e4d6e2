"""Judgments, inference rules, and derivation checking.

A judgment claims that a pair of programs is related by a spec under a named
effect observation; semantically it means theta(c1, c2) <= w.  Judgments
carry a finite context of typed variables shared by both sides: programs and
specs are tables over context valuations, so a single derivation node covers
every instantiation of its free variables.  Every rule in the catalog is
pointwise in the valuation, which is what makes that representation sound.

Three checkers operate on this material:

    apply_rule        computes a rule's conclusion, enforcing side conditions
    check_derivation  replays a tree bottom-up, reporting the first bad node
    oracle_check      decides theta(c1, c2) <= w directly at every valuation

The catalog covers the generic monadic rules (Ret, Bind, Weaken), the pure
eliminators (BoolElim, ZeroElim, NatElim, the if variants), derived
one-sided binds, and per-effect axioms whose conclusion specs are written
out explicitly; tests confirm the axiom specs coincide with the observation
applied to the axiom programs.  `random_derivation` builds seeded well-formed
trees for the soundness differential: if some rule were unsound, a random
conclusion would eventually flunk its oracle.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

from . import programs as P
from .domains import BOOL, UNIT, UNIT_VAL, FiniteDomain, Value, boolv, domain
from .genprog import random_program
from .observations import (
    EXISTS,
    FORALL,
    FORALL_EXISTS,
    IO_ROOT,
    NDET_MODES,
    EffectObservation,
    observation_err,
    observation_io,
    observation_ndet,
    observation_part,
    observation_prob,
    observation_st,
)
from .programs import Program, Signature
from .specmonads import (
    DEFAULT_CAP,
    VIOLATED,
    LeqVerdict,
    OutcomeSpace,
    RelSpec,
    closure_spec,
    demonic_spec,
    err_space,
    from_prepost,
    io_demonic_spec,
    io_space,
    linear_spec,
    prob_space,
    pure_space,
    spec_bind,
    spec_equiv,
    spec_leq,
    spec_ret,
    state_space,
    unsatisfiable,
    weakest,
)

ZERO, ONE = Fraction(0), Fraction(1)


class RuleError(ValueError):
    """A rule application that does not go through: wrong premise shapes,
    bad parameters, or a failed side condition."""


# ---------------------------------------------------------------------------
# Contexts and judgments


Valuation = Tuple[Value, ...]


@dataclass(frozen=True)
class Env:
    """Finite variable context, shared by both sides of a judgment."""

    vars: Tuple[Tuple[str, FiniteDomain], ...] = ()

    def __post_init__(self):
        names = [n for n, _ in self.vars]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate context variables in {names}")

    def extend(self, *more: Tuple[str, FiniteDomain]) -> "Env":
        return Env(self.vars + tuple(more))

    def drop(self, pos: int) -> "Env":
        return Env(self.vars[:pos] + self.vars[pos + 1:])

    def index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.vars):
            if n == name:
                return i
        raise KeyError(name)

    def valuations(self) -> Iterator[Valuation]:
        return product(*(d.values() for _, d in self.vars))

    @property
    def count(self) -> int:
        n = 1
        for _, d in self.vars:
            n *= d.size
        return n


EMPTY_ENV = Env()


def fresh_name(env: Env, base: str) -> str:
    names = {n for n, _ in env.vars}
    if base not in names:
        return base
    k = 2
    while f"{base}{k}" in names:
        k += 1
    return f"{base}{k}"


def _family(x):
    """Constant or valuation-indexed parameter; families are callables."""
    return x if callable(x) else (lambda _g, _x=x: _x)


def _show_valuation(env: Env, g: Valuation) -> str:
    if not env.vars:
        return "the empty context"
    return ", ".join(f"{n}={v.domain.label_of(v.index)}" for (n, _), v in zip(env.vars, g))


# State programs and loop programs share the stateful carrier, so an
# observation declared for one accepts the other.
_EFFECT_KIN = {P.STATE: (P.STATE, P.IMP), P.IMP: (P.STATE, P.IMP)}


def _effect_matches(effect: str, declared: str) -> bool:
    return effect in _EFFECT_KIN.get(declared, (declared,))


@dataclass(frozen=True)
class Judgment:
    """c1 ~ c2 {w} under an observation, over a context of free variables.

    c1, c2, w are families: callables from context valuations to Program,
    Program, and RelSpec.  Closed judgments use the empty context, whose
    single valuation is ().
    """

    env: Env
    c1: Callable[[Valuation], Program]
    c2: Callable[[Valuation], Program]
    w: Callable[[Valuation], RelSpec]
    observation: EffectObservation

    def left(self, g: Valuation = ()) -> Program:
        return self.c1(g)

    def right(self, g: Valuation = ()) -> Program:
        return self.c2(g)

    def spec(self, g: Valuation = ()) -> RelSpec:
        return self.w(g)


def judgment(observation: EffectObservation, c1, c2, w, env: Env = EMPTY_ENV) -> Judgment:
    """Build a judgment from families or plain values, checking shapes at the
    first valuation: effects against the observation, spec carrier against
    its target, value domains against the program results."""
    j = Judgment(env, _family(c1), _family(c2), _family(w), observation)
    g0 = next(iter(env.valuations()))
    p1, p2, w0 = j.c1(g0), j.c2(g0), j.w(g0)
    if not _effect_matches(p1.sig.effect, observation.left_effect):
        raise ValueError(f"left program is {p1.sig.effect!r}, observation "
                         f"{observation.name} wants {observation.left_effect!r}")
    if not _effect_matches(p2.sig.effect, observation.right_effect):
        raise ValueError(f"right program is {p2.sig.effect!r}, observation "
                         f"{observation.name} wants {observation.right_effect!r}")
    if w0.tag != observation.target:
        raise ValueError(f"spec lives in {w0.tag}, observation {observation.name} "
                         f"targets {observation.target}")
    if (w0.space.a1, w0.space.a2) != (p1.result, p2.result):
        raise ValueError("spec value domains do not match the program results")
    return j


def _same_observation(o1: EffectObservation, o2: EffectObservation) -> bool:
    # Observations built by different constructor calls close over fresh
    # lambdas, so dataclass equality is useless here; the identifying fields
    # are enough, and deeper mismatches surface as carrier errors later.
    return (o1.name, o1.left_effect, o1.right_effect, o1.target, o1.strictness) == \
           (o2.name, o2.left_effect, o2.right_effect, o2.target, o2.strictness)


# ---------------------------------------------------------------------------
# Rule instances and derivations


@dataclass(frozen=True, eq=False)
class RuleInstance:
    rule: str
    params: Dict[str, object] = field(default_factory=dict)

    def need(self, key: str):
        if key not in self.params:
            raise RuleError(f"{self.rule}: missing parameter {key!r}")
        return self.params[key]

    def get(self, key: str, default=None):
        return self.params.get(key, default)


def rule(name: str, **params) -> RuleInstance:
    return RuleInstance(name, params)


@dataclass(frozen=True, eq=False)
class Derivation:
    conclusion: Judgment
    rule: RuleInstance
    premises: Tuple["Derivation", ...] = ()


def derive(name: str, premises: Sequence[Derivation] = (), **params) -> Derivation:
    """Apply a rule to sub-derivations, computing the conclusion."""
    inst = RuleInstance(name, params)
    concl = apply_rule(inst, tuple(d.conclusion for d in premises))
    return Derivation(concl, inst, tuple(premises))


_RULES: Dict[str, Callable[[RuleInstance, Tuple[Judgment, ...]], Judgment]] = {}
_ARITY: Dict[str, Optional[int]] = {}


def _rule(name: str, arity: Optional[int]):
    def deco(fn):
        _RULES[name] = fn
        _ARITY[name] = arity
        return fn
    return deco


def rule_names() -> Tuple[str, ...]:
    return tuple(sorted(_RULES))


def apply_rule(inst: RuleInstance, premises: Sequence[Judgment]) -> Judgment:
    """Compute a rule's conclusion judgment from premise judgments.

    Raises RuleError when premise shapes disagree with the rule or a side
    condition fails; side conditions involving spec comparisons must be
    confirmed, an Unknown verdict also rejects.
    """
    build = _RULES.get(inst.rule)
    if build is None:
        raise RuleError(f"unknown rule {inst.rule!r}")
    arity = _ARITY[inst.rule]
    premises = tuple(premises)
    if arity is not None and len(premises) != arity:
        raise RuleError(f"{inst.rule} takes {arity} premises, got {len(premises)}")
    return build(inst, premises)


def _shared_env(premises: Sequence[Judgment], who: str) -> Env:
    env = premises[0].env
    for j in premises[1:]:
        if j.env != env:
            raise RuleError(f"{who}: premises must share one context")
    return env


def _shared_obs(premises: Sequence[Judgment], who: str) -> EffectObservation:
    obs = premises[0].observation
    for j in premises[1:]:
        if not _same_observation(j.observation, obs):
            raise RuleError(f"{who}: premises must share one observation")
    return obs


def _extension(base: Env, ext: Env, doms: Tuple[FiniteDomain, ...], who: str) -> None:
    k = len(base.vars)
    if ext.vars[:k] != base.vars or len(ext.vars) != k + len(doms):
        raise RuleError(f"{who}: premise context must extend the conclusion "
                        f"context by {len(doms)} variable(s)")
    for (name, d), want in zip(ext.vars[k:], doms):
        if d != want:
            raise RuleError(f"{who}: bound variable {name!r} has domain "
                            f"{d.name!r}, expected {want.name!r}")


def _unsat_like(w: RelSpec) -> RelSpec:
    if w.tag == "WrelIO":
        return unsatisfiable(w.space, points=w.io_points)
    return unsatisfiable(w.space)


# ---------------------------------------------------------------------------
# Generic monadic rules


def _ret_space(target: str, sig1: Signature, sig2: Signature,
               a1: FiniteDomain, a2: FiniteDomain) -> OutcomeSpace:
    if target == "WrelSt":
        return state_space(a1, sig1.state, a2, sig2.state)
    if target == "WrelPure":
        return pure_space(a1, a2)
    if target == "WrelErr":
        return err_space(a1, a2)
    if target == "WrelIO":
        return io_space(a1, sig1.inp, sig1.out, a2, sig2.inp, sig2.out)
    if target == "WrelProb":
        return prob_space(a1, a2)
    raise RuleError(f"no unit spec for carrier {target!r}")


@_rule("Ret", 0)
def _ret_rule(r: RuleInstance, _prem) -> Judgment:
    obs = r.need("observation")
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    a1f, a2f = _family(r.need("a1")), _family(r.need("a2"))
    points = tuple(r.get("points", IO_ROOT))

    def w(g):
        a1, a2 = a1f(g), a2f(g)
        space = _ret_space(obs.target, sig1, sig2, a1.domain, a2.domain)
        return spec_ret(space, a1, a2, points=points)

    return judgment(obs, lambda g: P.ret(sig1, a1f(g)), lambda g: P.ret(sig2, a2f(g)), w, env)


@_rule("Bind", 2)
def _bind_rule(r: RuleInstance, prem) -> Judgment:
    jm, jf = prem
    obs = _shared_obs(prem, "Bind")
    env = jm.env
    if len(jf.env.vars) != len(env.vars) + 2 or jf.env.vars[:len(env.vars)] != env.vars:
        raise RuleError("Bind: second premise context must bind exactly the two result values")
    (x1, dom1), (x2, dom2) = jf.env.vars[-2:]
    for g in env.valuations():
        if jm.c1(g).result != dom1 or jm.c2(g).result != dom2:
            raise RuleError(f"Bind: first premise results do not match the bound "
                            f"variables at {_show_valuation(env, g)}")
        for v1 in dom1.values():
            base = jf.c1(g + (v1, dom2.value(0)))
            for v2 in dom2.values():
                if not P.programs_equal(jf.c1(g + (v1, v2)), base):
                    raise RuleError(f"Bind: left continuation depends on {x2!r}")
        for v2 in dom2.values():
            base = jf.c2(g + (dom1.value(0), v2))
            for v1 in dom1.values():
                if not P.programs_equal(jf.c2(g + (v1, v2)), base):
                    raise RuleError(f"Bind: right continuation depends on {x1!r}")

    def c1(g):
        return P.bind(jm.c1(g), lambda v: jf.c1(g + (v, dom2.value(0))))

    def c2(g):
        return P.bind(jm.c2(g), lambda v: jf.c2(g + (dom1.value(0), v)))

    def w(g):
        return spec_bind(jm.w(g), lambda i1, i2: jf.w(g + (dom1.value(i1), dom2.value(i2))))

    return judgment(obs, c1, c2, w, env)


@_rule("Weaken", 1)
def _weaken_rule(r: RuleInstance, prem) -> Judgment:
    (j,) = prem
    wf = _family(r.need("w"))
    cap, seed = r.get("cap", DEFAULT_CAP), r.get("seed", 0)
    for g in j.env.valuations():
        v = spec_leq(j.w(g), wf(g), cap, seed)
        if v.failed:
            raise RuleError(f"Weaken: target spec is not above the premise spec "
                            f"at {_show_valuation(j.env, g)}: {v.note}")
        if v.is_unknown:
            raise RuleError(f"Weaken: ordering side condition undecided: {v.note}")
    return judgment(j.observation, j.c1, j.c2, wf, j.env)


# ---------------------------------------------------------------------------
# Pure eliminators

# The boolean eliminator commits to the live branch at each valuation; the
# dead branch's judgment is never consulted there, which is what lets the
# one-sided conditional rules fall out as special cases.


@_rule("BoolElim", 2)
def _bool_elim(r: RuleInstance, prem) -> Judgment:
    jt, jf = prem
    b = _family(r.need("b"))
    env = _shared_env(prem, "BoolElim")
    obs = _shared_obs(prem, "BoolElim")

    def pick(g):
        return jt if b(g) else jf

    return judgment(obs, lambda g: pick(g).c1(g), lambda g: pick(g).c2(g),
                    lambda g: pick(g).w(g), env)


@_rule("ZeroElim", 0)
def _zero_elim(r: RuleInstance, _prem) -> Judgment:
    obs = r.need("observation")
    env = r.get("env", EMPTY_ENV)
    c1f, c2f, wf = _family(r.need("c1")), _family(r.need("c2")), _family(r.need("w"))
    cap, seed = r.get("cap", DEFAULT_CAP), r.get("seed", 0)
    for g in env.valuations():
        w0 = wf(g)
        v = spec_leq(_unsat_like(w0), w0, cap, seed)
        if not v.holds:
            raise RuleError("ZeroElim: the spec must be everywhere unsatisfiable "
                            f"(the vacuous claim) but is not at {_show_valuation(env, g)}")
    return judgment(obs, c1f, c2f, wf, env)


@_rule("NatElim", None)
def _nat_elim(r: RuleInstance, prem) -> Judgment:
    env: Env = r.need("env")
    var: str = r.need("var")
    pos = env.index(var)
    dom = env.vars[pos][1]
    if len(prem) != dom.size:
        raise RuleError(f"NatElim on {var!r}: needs one premise per value of "
                        f"{dom.name!r} ({dom.size}), got {len(prem)}")
    inner = env.drop(pos)
    for k, j in enumerate(prem):
        if j.env != inner:
            raise RuleError(f"NatElim: premise {k} must live in the context "
                            f"without {var!r}")
    obs = _shared_obs(prem, "NatElim")

    def strip(g):
        return g[:pos] + g[pos + 1:]

    def at(g):
        return prem[g[pos].index]

    return judgment(obs, lambda g: at(g).c1(strip(g)), lambda g: at(g).c2(strip(g)),
                    lambda g: at(g).w(strip(g)), env)


@_rule("IfLeft", 2)
def _if_left(r: RuleInstance, prem) -> Judgment:
    jt, jf = prem
    b = _family(r.need("b"))
    env = _shared_env(prem, "IfLeft")
    obs = _shared_obs(prem, "IfLeft")
    for g in env.valuations():
        if not P.programs_equal(jt.c2(g), jf.c2(g)):
            raise RuleError(f"IfLeft: premises must share the right program, "
                            f"differ at {_show_valuation(env, g)}")

    def pick(g):
        return jt if b(g) else jf

    return judgment(obs, lambda g: pick(g).c1(g), jt.c2, lambda g: pick(g).w(g), env)


@_rule("IfRight", 2)
def _if_right(r: RuleInstance, prem) -> Judgment:
    jt, jf = prem
    b = _family(r.need("b"))
    env = _shared_env(prem, "IfRight")
    obs = _shared_obs(prem, "IfRight")
    for g in env.valuations():
        if not P.programs_equal(jt.c1(g), jf.c1(g)):
            raise RuleError(f"IfRight: premises must share the left program, "
                            f"differ at {_show_valuation(env, g)}")

    def pick(g):
        return jt if b(g) else jf

    return judgment(obs, jt.c1, lambda g: pick(g).c2(g), lambda g: pick(g).w(g), env)


@_rule("IfSync", 2)
def _if_sync(r: RuleInstance, prem) -> Judgment:
    jt, jf = prem
    b1, b2 = _family(r.need("b1")), _family(r.need("b2"))
    env = _shared_env(prem, "IfSync")
    obs = _shared_obs(prem, "IfSync")
    for g in env.valuations():
        if jt.c1(g).result != jf.c1(g).result or jt.c2(g).result != jf.c2(g).result:
            raise RuleError("IfSync: branch results must agree on both sides")

    def c1(g):
        return (jt if b1(g) else jf).c1(g)

    def c2(g):
        return (jt if b2(g) else jf).c2(g)

    def w(g):
        # Guards that disagree contradict the rule's synchronization claim,
        # so the precondition is false there and the spec claims nothing.
        if b1(g) != b2(g):
            return _unsat_like(jt.w(g))
        return (jt if b1(g) else jf).w(g)

    return judgment(obs, c1, c2, w, env)


# ---------------------------------------------------------------------------
# Derived one-sided binds


def _is_unit_ret(p: Program) -> bool:
    n = P.normalize(p).node
    return isinstance(n, P.Ret) and n.value.domain == UNIT


@_rule("BindLeft", 2)
def _bind_left(r: RuleInstance, prem) -> Judgment:
    jm, jf = prem
    obs = _shared_obs(prem, "BindLeft")
    env = jm.env
    if len(jf.env.vars) != len(env.vars) + 1 or jf.env.vars[:len(env.vars)] != env.vars:
        raise RuleError("BindLeft: second premise context must bind exactly the left result")
    x1, dom1 = jf.env.vars[-1]
    for g in env.valuations():
        if not _is_unit_ret(jm.c2(g)):
            raise RuleError("BindLeft: first premise right side must be the unit return")
        if jm.c1(g).result != dom1:
            raise RuleError("BindLeft: first premise left result does not match the bound variable")
        base = jf.c2(g + (dom1.value(0),))
        for v1 in dom1.values():
            if not P.programs_equal(jf.c2(g + (v1,)), base):
                raise RuleError(f"BindLeft: right program depends on {x1!r}")

    def c1(g):
        return P.bind(jm.c1(g), lambda v: jf.c1(g + (v,)))

    def c2(g):
        return jf.c2(g + (dom1.value(0),))

    def w(g):
        return spec_bind(jm.w(g), lambda i1, _i2: jf.w(g + (dom1.value(i1),)))

    return judgment(obs, c1, c2, w, env)


@_rule("BindRight", 2)
def _bind_right(r: RuleInstance, prem) -> Judgment:
    jm, jf = prem
    obs = _shared_obs(prem, "BindRight")
    env = jm.env
    if len(jf.env.vars) != len(env.vars) + 1 or jf.env.vars[:len(env.vars)] != env.vars:
        raise RuleError("BindRight: second premise context must bind exactly the right result")
    x2, dom2 = jf.env.vars[-1]
    for g in env.valuations():
        if not _is_unit_ret(jm.c1(g)):
            raise RuleError("BindRight: first premise left side must be the unit return")
        if jm.c2(g).result != dom2:
            raise RuleError("BindRight: first premise right result does not match the bound variable")
        base = jf.c1(g + (dom2.value(0),))
        for v2 in dom2.values():
            if not P.programs_equal(jf.c1(g + (v2,)), base):
                raise RuleError(f"BindRight: left program depends on {x2!r}")

    def c1(g):
        return jf.c1(g + (dom2.value(0),))

    def c2(g):
        return P.bind(jm.c2(g), lambda v: jf.c2(g + (v,)))

    def w(g):
        return spec_bind(jm.w(g), lambda _i1, i2: jf.w(g + (dom2.value(i2),)))

    return judgment(obs, c1, c2, w, env)


# ---------------------------------------------------------------------------
# Stateful axioms

# Each axiom writes its conclusion spec as an explicit demonic table; the
# tests confirm these tables coincide with the observation applied to the
# axiom programs, which is how the specs were found in the first place.


def _st_axiom(space: OutcomeSpace, outcome_at) -> RelSpec:
    table = []
    for pt in space.points():
        s1i, s2i = space.point_split(pt)
        table.append(frozenset({outcome_at(s1i, s2i)}))
    return demonic_spec(space, table)


def _state_obs(r: RuleInstance, who: str) -> EffectObservation:
    obs = r.get("observation")
    if obs is None:
        obs = observation_st()
    if obs.target != "WrelSt":
        raise RuleError(f"{who}: observation {obs.name} does not target the stateful carrier")
    return obs


@_rule("GetL", 0)
def _get_l(r: RuleInstance, _prem) -> Judgment:
    obs = _state_obs(r, "GetL")
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    a2f = _family(r.need("a2"))

    def w(g):
        a2 = a2f(g)
        sp = state_space(sig1.state, sig1.state, a2.domain, sig2.state)
        return _st_axiom(sp, lambda s1, s2, _a=a2.index: sp.st_outcome(s1, s1, _a, s2))

    return judgment(obs, lambda g: P.get_state(sig1), lambda g: P.ret(sig2, a2f(g)), w, env)


@_rule("GetR", 0)
def _get_r(r: RuleInstance, _prem) -> Judgment:
    obs = _state_obs(r, "GetR")
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    a1f = _family(r.need("a1"))

    def w(g):
        a1 = a1f(g)
        sp = state_space(a1.domain, sig1.state, sig2.state, sig2.state)
        return _st_axiom(sp, lambda s1, s2, _a=a1.index: sp.st_outcome(_a, s1, s2, s2))

    return judgment(obs, lambda g: P.ret(sig1, a1f(g)), lambda g: P.get_state(sig2), w, env)


@_rule("PutL", 0)
def _put_l(r: RuleInstance, _prem) -> Judgment:
    obs = _state_obs(r, "PutL")
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    sf, a2f = _family(r.need("s")), _family(r.need("a2"))

    def w(g):
        s, a2 = sf(g), a2f(g)
        sp = state_space(UNIT, sig1.state, a2.domain, sig2.state)
        return _st_axiom(sp, lambda _s1, s2, _t=s.index, _a=a2.index: sp.st_outcome(0, _t, _a, s2))

    return judgment(obs, lambda g: P.put_unit(sig1, sf(g), UNIT_VAL),
                    lambda g: P.ret(sig2, a2f(g)), w, env)


@_rule("PutR", 0)
def _put_r(r: RuleInstance, _prem) -> Judgment:
    obs = _state_obs(r, "PutR")
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    a1f, sf = _family(r.need("a1")), _family(r.need("s"))

    def w(g):
        a1, s = a1f(g), sf(g)
        sp = state_space(a1.domain, sig1.state, UNIT, sig2.state)
        return _st_axiom(sp, lambda s1, _s2, _a=a1.index, _t=s.index: sp.st_outcome(_a, s1, 0, _t))

    return judgment(obs, lambda g: P.ret(sig1, a1f(g)),
                    lambda g: P.put_unit(sig2, sf(g), UNIT_VAL), w, env)


@_rule("GetSync", 0)
def _get_sync(r: RuleInstance, _prem) -> Judgment:
    obs = _state_obs(r, "GetSync")
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    sp = state_space(sig1.state, sig1.state, sig2.state, sig2.state)
    w = _st_axiom(sp, lambda s1, s2: sp.st_outcome(s1, s1, s2, s2))
    return judgment(obs, lambda g: P.get_state(sig1), lambda g: P.get_state(sig2), w, env)


@_rule("PutSync", 0)
def _put_sync(r: RuleInstance, _prem) -> Judgment:
    obs = _state_obs(r, "PutSync")
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    s1f, s2f = _family(r.need("s1")), _family(r.need("s2"))

    def w(g):
        t1, t2 = s1f(g), s2f(g)
        sp = state_space(UNIT, sig1.state, UNIT, sig2.state)
        return _st_axiom(sp, lambda _s1, _s2, _t1=t1.index, _t2=t2.index:
                         sp.st_outcome(0, _t1, 0, _t2))

    return judgment(obs, lambda g: P.put_unit(sig1, s1f(g), UNIT_VAL),
                    lambda g: P.put_unit(sig2, s2f(g), UNIT_VAL), w, env)


# ---------------------------------------------------------------------------
# Nondeterminism axioms


def _bool_choice(sig: Signature) -> Program:
    return P.choice(P.ret(sig, boolv(True)), P.ret(sig, boolv(False)))


@_rule("DemonicPickLeft", 0)
def _demonic_pick_left(r: RuleInstance, _prem) -> Judgment:
    obs = observation_ndet(FORALL)
    env = r.get("env", EMPTY_ENV)
    a2f = _family(r.need("a2"))
    sig = P.ndet_sig()

    def w(g):
        a2 = a2f(g)
        sp = pure_space(BOOL, a2.domain)
        return demonic_spec(sp, [frozenset({a2.index, a2.domain.size + a2.index})])

    return judgment(obs, lambda g: _bool_choice(sig), lambda g: P.ret(sig, a2f(g)), w, env)


@_rule("DemonicPickRight", 0)
def _demonic_pick_right(r: RuleInstance, _prem) -> Judgment:
    obs = observation_ndet(FORALL)
    env = r.get("env", EMPTY_ENV)
    a1f = _family(r.need("a1"))
    sig = P.ndet_sig()

    def w(g):
        a1 = a1f(g)
        sp = pure_space(a1.domain, BOOL)
        return demonic_spec(sp, [frozenset({a1.index * 2, a1.index * 2 + 1})])

    return judgment(obs, lambda g: P.ret(sig, a1f(g)), lambda g: _bool_choice(sig), w, env)


@_rule("DemonicFailLeft", 0)
def _demonic_fail_left(r: RuleInstance, _prem) -> Judgment:
    obs = observation_ndet(FORALL)
    env = r.get("env", EMPTY_ENV)
    result: FiniteDomain = r.need("result")
    a2f = _family(r.need("a2"))
    sig = P.ndet_sig()

    def w(g):
        return weakest(pure_space(result, a2f(g).domain))

    return judgment(obs, lambda g: P.fail(sig, result), lambda g: P.ret(sig, a2f(g)), w, env)


@_rule("Angelic", 0)
def _angelic(r: RuleInstance, _prem) -> Judgment:
    obs = observation_ndet(EXISTS)
    env = r.get("env", EMPTY_ENV)
    sig = P.ndet_sig()
    sp = pure_space(BOOL, BOOL)
    w = closure_spec(sp, lambda f, _pt: any(f(o) for o in range(4)))
    return judgment(obs, lambda g: _bool_choice(sig), lambda g: _bool_choice(sig), w, env)


@_rule("Refinement", 0)
def _refinement(r: RuleInstance, _prem) -> Judgment:
    # The selection h names, for each left alternative, the right alternative
    # that answers it; the spec demands the postcondition only on those
    # pairs, which is deliberately coarser than the observation itself.
    obs = observation_ndet(FORALL_EXISTS)
    env = r.get("env", EMPTY_ENV)
    dom1: FiniteDomain = r.need("dom1")
    dom2: FiniteDomain = r.need("dom2")
    hf = _family(r.need("h"))
    sig = P.ndet_sig()
    for g in env.valuations():
        h = tuple(hf(g))
        if len(h) != dom1.size or any(not (0 <= k < dom2.size) for k in h):
            raise RuleError(f"Refinement: h must map {dom1.size} alternatives into "
                            f"{dom2.size}, got {h}")

    def pick_all(d: FiniteDomain) -> Program:
        return P.pick_fin([P.ret(sig, v) for v in d.values()])

    def w(g):
        h = tuple(hf(g))
        sp = pure_space(dom1, dom2)
        return demonic_spec(sp, [frozenset(k * dom2.size + h[k] for k in range(dom1.size))])

    return judgment(obs, lambda g: pick_all(dom1), lambda g: pick_all(dom2), w, env)


# ---------------------------------------------------------------------------
# Exception axioms and the handler rule


@_rule("ThrowL", 0)
def _throw_l(r: RuleInstance, _prem) -> Judgment:
    obs = observation_err()
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    e1f = _family(r.need("e1"))
    result: FiniteDomain = r.need("result1")
    a2f = _family(r.need("a2"))

    def w(g):
        sp = err_space(result, a2f(g).domain)
        return demonic_spec(sp, [frozenset({sp.err_bad()})])

    return judgment(obs, lambda g: P.throw(sig1, e1f(g), result),
                    lambda g: P.ret(sig2, a2f(g)), w, env)


@_rule("ThrowR", 0)
def _throw_r(r: RuleInstance, _prem) -> Judgment:
    obs = observation_err()
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    a1f = _family(r.need("a1"))
    e2f = _family(r.need("e2"))
    result: FiniteDomain = r.need("result2")

    def w(g):
        sp = err_space(a1f(g).domain, result)
        return demonic_spec(sp, [frozenset({sp.err_bad()})])

    return judgment(obs, lambda g: P.ret(sig1, a1f(g)),
                    lambda g: P.throw(sig2, e2f(g), result), w, env)


def catch_spec(w: RelSpec, w_exc: RelSpec) -> RelSpec:
    """Reroute the collapsed exceptional outcome through the handler spec.

    The result transforms a postcondition phi by running w on a new
    postcondition that keeps phi on value pairs and asks w_exc phi of the
    exceptional outcome.
    """
    space = w.space
    if w.tag != "WrelErr" or w_exc.tag != "WrelErr":
        raise ValueError("catch_spec needs errorful specs")
    if (space.a1, space.a2) != (w_exc.space.a1, w_exc.space.a2):
        raise ValueError("handler spec must keep the body's value domains")
    bad = space.err_bad()
    if w.is_demonic and w_exc.is_demonic:
        table = []
        for pt in space.points():
            entry = w.demonic_at(pt)
            if entry is VIOLATED:
                table.append(VIOLATED)
                continue
            acc = set(o for o in entry if o != bad)
            if bad in entry:
                ex = w_exc.demonic_at(pt)
                if ex is VIOLATED:
                    table.append(VIOLATED)
                    continue
                acc |= ex
            table.append(frozenset(acc))
        return demonic_spec(space, table)

    def body(f, pt, _w=w, _wx=w_exc):
        return _w.at(lambda o: _wx.at(f, pt) if o == bad else f(o), pt)

    return closure_spec(space, body)


@_rule("Catch", 4)
def _catch_rule(r: RuleInstance, prem) -> Judgment:
    # One premise for the double-success case and three sharing the handler
    # spec, one per way an exception can show up.  The shared spec cannot
    # name which side raised; that is the price of the collapsed carrier.
    jmain, jee, jea, jae = prem
    obs = _shared_obs(prem, "Catch")
    if obs.target != "WrelErr":
        raise RuleError("Catch: needs the errorful carrier")
    cap, seed = r.get("cap", DEFAULT_CAP), r.get("seed", 0)
    env = jmain.env
    g0 = next(iter(env.valuations()))
    p1, p2 = jmain.c1(g0), jmain.c2(g0)
    e1dom, e2dom = p1.sig.exc, p2.sig.exc
    a1dom, a2dom = p1.result, p2.result
    _extension(env, jee.env, (e1dom, e2dom), "Catch (exceptional premise)")
    _extension(env, jea.env, (e1dom, a2dom), "Catch (left-raise premise)")
    _extension(env, jae.env, (a1dom, e2dom), "Catch (right-raise premise)")
    e0, a10, a20 = e1dom.value(0), a1dom.value(0), a2dom.value(0)

    for g in env.valuations():
        if jmain.c1(g).result != a1dom or jmain.c2(g).result != a2dom:
            raise RuleError("Catch: body results must not vary with the context")
        wx0 = jee.w(g + (e0, e2dom.value(0)))
        for e1 in e1dom.values():
            h1 = jee.c1(g + (e1, e2dom.value(0)))
            for e2 in e2dom.values():
                if not P.programs_equal(jee.c1(g + (e1, e2)), h1):
                    raise RuleError("Catch: left handler depends on the right exception")
                if not spec_equiv(jee.w(g + (e1, e2)), wx0, cap, seed).holds:
                    raise RuleError("Catch: the exceptional premises must share one spec")
            for a2 in a2dom.values():
                if not P.programs_equal(jea.c1(g + (e1, a2)), h1):
                    raise RuleError("Catch: left handler differs between exceptional premises")
                if not P.programs_equal(jea.c2(g + (e1, a2)), P.ret(p2.sig, a2)):
                    raise RuleError("Catch: left-raise premise right side must return its value")
                if not spec_equiv(jea.w(g + (e1, a2)), wx0, cap, seed).holds:
                    raise RuleError("Catch: the exceptional premises must share one spec")
        for e2 in e2dom.values():
            h2 = jee.c2(g + (e0, e2))
            for e1 in e1dom.values():
                if not P.programs_equal(jee.c2(g + (e1, e2)), h2):
                    raise RuleError("Catch: right handler depends on the left exception")
            for a1 in a1dom.values():
                if not P.programs_equal(jae.c2(g + (a1, e2)), h2):
                    raise RuleError("Catch: right handler differs between exceptional premises")
                if not P.programs_equal(jae.c1(g + (a1, e2)), P.ret(p1.sig, a1)):
                    raise RuleError("Catch: right-raise premise left side must return its value")
                if not spec_equiv(jae.w(g + (a1, e2)), wx0, cap, seed).holds:
                    raise RuleError("Catch: the exceptional premises must share one spec")

    def c1(g):
        return P.catch(jmain.c1(g), lambda e: jee.c1(g + (e, e2dom.value(0))))

    def c2(g):
        return P.catch(jmain.c2(g), lambda e: jee.c2(g + (e1dom.value(0), e)))

    def w(g):
        return catch_spec(jmain.w(g), jee.w(g + (e0, e2dom.value(0))))

    return judgment(obs, c1, c2, w, env)


# ---------------------------------------------------------------------------
# Interactive axioms


def _io_obs(sig1: Signature, sig2: Signature, points) -> EffectObservation:
    return observation_io(sig1.inp, sig1.out, sig2.inp, sig2.out, points)


@_rule("InputL", 0)
def _input_l(r: RuleInstance, _prem) -> Judgment:
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    a2f = _family(r.need("a2"))
    points = tuple(r.get("points", IO_ROOT))
    obs = _io_obs(sig1, sig2, points)

    def w(g):
        a2 = a2f(g)
        sp = io_space(sig1.inp, sig1.inp, sig1.out, a2.domain, sig2.inp, sig2.out)

        def fn(pt, _a=a2):
            h1, h2 = pt
            return {(i.index * _a.domain.size + _a.index, ((P.IN, i),) + h1, h2)
                    for i in sig1.inp.values()}

        return io_demonic_spec(sp, fn, points, 1)

    return judgment(obs, lambda g: P.read_input(sig1), lambda g: P.ret(sig2, a2f(g)), w, env)


@_rule("InputR", 0)
def _input_r(r: RuleInstance, _prem) -> Judgment:
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    a1f = _family(r.need("a1"))
    points = tuple(r.get("points", IO_ROOT))
    obs = _io_obs(sig1, sig2, points)

    def w(g):
        a1 = a1f(g)
        sp = io_space(a1.domain, sig1.inp, sig1.out, sig2.inp, sig2.inp, sig2.out)

        def fn(pt, _a=a1):
            h1, h2 = pt
            return {(_a.index * sig2.inp.size + i.index, h1, ((P.IN, i),) + h2)
                    for i in sig2.inp.values()}

        return io_demonic_spec(sp, fn, points, 1)

    return judgment(obs, lambda g: P.ret(sig1, a1f(g)), lambda g: P.read_input(sig2), w, env)


@_rule("OutputL", 0)
def _output_l(r: RuleInstance, _prem) -> Judgment:
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    o1f, a2f = _family(r.need("o1")), _family(r.need("a2"))
    points = tuple(r.get("points", IO_ROOT))
    obs = _io_obs(sig1, sig2, points)

    def w(g):
        o1, a2 = o1f(g), a2f(g)
        sp = io_space(UNIT, sig1.inp, sig1.out, a2.domain, sig2.inp, sig2.out)

        def fn(pt, _o=o1, _a=a2):
            h1, h2 = pt
            return {(_a.index, ((P.OUT, _o),) + h1, h2)}

        return io_demonic_spec(sp, fn, points, 1)

    return judgment(obs, lambda g: P.output(sig1, o1f(g), P.ret(sig1, UNIT_VAL)),
                    lambda g: P.ret(sig2, a2f(g)), w, env)


@_rule("OutputR", 0)
def _output_r(r: RuleInstance, _prem) -> Judgment:
    sig1, sig2 = r.need("sig1"), r.need("sig2")
    env = r.get("env", EMPTY_ENV)
    a1f, o2f = _family(r.need("a1")), _family(r.need("o2"))
    points = tuple(r.get("points", IO_ROOT))
    obs = _io_obs(sig1, sig2, points)

    def w(g):
        a1, o2 = a1f(g), o2f(g)
        sp = io_space(a1.domain, sig1.inp, sig1.out, UNIT, sig2.inp, sig2.out)

        def fn(pt, _o=o2, _a=a1):
            h1, h2 = pt
            return {(_a.index, h1, ((P.OUT, _o),) + h2)}

        return io_demonic_spec(sp, fn, points, 1)

    return judgment(obs, lambda g: P.ret(sig1, a1f(g)),
                    lambda g: P.output(sig2, o2f(g), P.ret(sig2, UNIT_VAL)), w, env)


# ---------------------------------------------------------------------------
# Synchronized loops


def _norm_inv(inv, s1: FiniteDomain, s2: FiniteDomain):
    """Invariant table inv[b1][b2][s1][s2] from a nested sequence or a
    four-argument callable."""
    if callable(inv):
        return tuple(tuple(tuple(tuple(bool(inv(b1, b2, i, j)) for j in range(s2.size))
                                 for i in range(s1.size))
                           for b2 in range(2))
                     for b1 in range(2))
    out = tuple(tuple(tuple(tuple(bool(inv[b1][b2][i][j]) for j in range(s2.size))
                            for i in range(s1.size))
                      for b2 in range(2))
                for b1 in range(2))
    return out


def _pp_table(space: OutcomeSpace, fn) -> List[bool]:
    n = (space.s1.size ** 2 * space.a1.size) * (space.s2.size ** 2 * space.a2.size)
    return [bool(fn(*space.pp_post_split(o))) for o in range(n)]


def loop_premise_spec(inv, s1: FiniteDomain, s2: FiniteDomain) -> RelSpec:
    """Body obligation: from invariant states with both guards pending, the
    guards agree and the invariant indexed by them holds of the new states."""
    space = state_space(BOOL, s1, BOOL, s2)
    pre = [inv[1][1][space.point_split(pt)[0]][space.point_split(pt)[1]]
           for pt in space.points()]
    post = _pp_table(space, lambda _i1, b1, f1, _i2, b2, f2:
                     b1 == b2 and inv[b1][b2][f1][f2])
    return from_prepost(space, pre, post)


def loop_conclusion_spec(inv, s1: FiniteDomain, s2: FiniteDomain) -> RelSpec:
    space = state_space(UNIT, s1, UNIT, s2)
    pre = [inv[1][1][space.point_split(pt)[0]][space.point_split(pt)[1]]
           for pt in space.points()]
    post = _pp_table(space, lambda _i1, _a1, f1, _i2, _a2, f2: inv[0][0][f1][f2])
    return from_prepost(space, pre, post)


@_rule("DoWhileInv", 1)
def _do_while_inv(r: RuleInstance, prem) -> Judgment:
    (jb,) = prem
    obs = jb.observation
    if obs.name != "theta-part":
        raise RuleError("DoWhileInv: sound for the partial-correctness observation only")
    cap, seed = r.get("cap", DEFAULT_CAP), r.get("seed", 0)
    invf = _family(r.need("inv"))
    env = jb.env
    g0 = next(iter(env.valuations()))
    b1p, b2p = jb.c1(g0), jb.c2(g0)
    if b1p.result != BOOL or b2p.result != BOOL:
        raise RuleError("DoWhileInv: loop bodies must produce booleans")
    if b1p.sig.effect != P.IMP or b2p.sig.effect != P.IMP:
        raise RuleError("DoWhileInv: loop bodies must be iterative programs")
    s1dom, s2dom = b1p.sig.state, b2p.sig.state

    def inv_at(g):
        return _norm_inv(invf(g), s1dom, s2dom)

    for g in env.valuations():
        want = loop_premise_spec(inv_at(g), s1dom, s2dom)
        if not spec_equiv(jb.w(g), want, cap, seed).holds:
            raise RuleError(f"DoWhileInv: premise spec is not the invariant "
                            f"obligation at {_show_valuation(env, g)}")

    def c1(g):
        return P.do_while(jb.c1(g), P.ret(b1p.sig, UNIT_VAL))

    def c2(g):
        return P.do_while(jb.c2(g), P.ret(b2p.sig, UNIT_VAL))

    def w(g):
        return loop_conclusion_spec(inv_at(g), s1dom, s2dom)

    return judgment(obs, c1, c2, w, env)


def loop_invariant(body1: Program, body2: Program):
    """A synchronizing invariant for a pair of loop bodies.

    A state pair is included when the joint iteration from it never sees the
    two guards disagree; runs where a body diverges also count as safe,
    because partial correctness demands nothing of them.  Returns a nested
    table inv[b1][b2][s1][s2] whose off-diagonal slices are empty: included
    runs keep the guards synchronized, so mixed guard pairs never arise.
    """
    s1dom, s2dom = body1.sig.state, body2.sig.state
    ok = [[False] * s2dom.size for _ in range(s1dom.size)]
    exits = set()
    for i in range(s1dom.size):
        for j in range(s2dom.size):
            seen = set()
            cur = (i, j)
            good = True
            exit_pair = None
            while cur not in seen:
                seen.add(cur)
                r1 = P.run_imp(body1, Value(s1dom, cur[0]))
                r2 = P.run_imp(body2, Value(s2dom, cur[1]))
                if r1 is None or r2 is None:
                    break
                (b1, t1), (b2, t2) = r1, r2
                if b1.index != b2.index:
                    good = False
                    break
                if b1.index == 0:
                    exit_pair = (t1.index, t2.index)
                    break
                cur = (t1.index, t2.index)
            ok[i][j] = good
            if good and exit_pair is not None:
                exits.add(exit_pair)
    nothing = tuple(tuple(False for _ in range(s2dom.size)) for _ in range(s1dom.size))
    inv_tt = tuple(tuple(ok[i][j] for j in range(s2dom.size)) for i in range(s1dom.size))
    inv_ff = tuple(tuple((i, j) in exits for j in range(s2dom.size))
                   for i in range(s1dom.size))
    return ((inv_ff, nothing), (nothing, inv_tt))


# ---------------------------------------------------------------------------
# Coupled sampling


@_rule("FlipCoupling", 0)
def _flip_coupling(r: RuleInstance, _prem) -> Judgment:
    obs = observation_prob()
    env = r.get("env", EMPTY_ENV)
    pf, qf, df = _family(r.need("p")), _family(r.need("q")), _family(r.need("d"))
    sig = P.prob_sig()

    def coupling_at(g):
        p, q = Fraction(pf(g)), Fraction(qf(g))
        d = tuple(tuple(Fraction(x) for x in row) for row in df(g))
        if len(d) != 2 or any(len(row) != 2 for row in d):
            raise RuleError("FlipCoupling: d must be a 2x2 table over (left, right) guards")
        if any(x < 0 for row in d for x in row):
            raise RuleError("FlipCoupling: coupling weights must be nonnegative")
        if (d[0][0] + d[0][1], d[1][0] + d[1][1]) != (1 - p, p) or \
           (d[0][0] + d[1][0], d[0][1] + d[1][1]) != (1 - q, q):
            raise RuleError(f"FlipCoupling: d is not a coupling of the {p} and {q} draws "
                            f"at {_show_valuation(env, g)}")
        return p, q, d

    for g in env.valuations():
        coupling_at(g)

    def w(g):
        _, _, d = coupling_at(g)
        sp = prob_space(BOOL, BOOL)
        coeffs = [ZERO] * 4
        for b1 in range(2):
            for b2 in range(2):
                coeffs[b1 * 2 + b2] = d[b1][b2]
        return linear_spec(sp, [(ZERO, tuple(coeffs))])

    return judgment(obs, lambda g: P.flip_bool(sig, pf(g)),
                    lambda g: P.flip_bool(sig, qf(g)), w, env)


# ---------------------------------------------------------------------------
# Checking derivations


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    path: Tuple[int, ...] = ()
    message: str = ""

    def __bool__(self):
        return self.ok


_OK = CheckResult(True)


def check_derivation(d: Derivation, cap: int = DEFAULT_CAP, seed: int = 0) -> CheckResult:
    """Replay every node through apply_rule and compare with the stated
    conclusion: programs up to normalization, specs extensionally in both
    directions, per valuation.  Reports the first failing node by its path
    of child indices from the root."""

    def walk(node: Derivation, path: Tuple[int, ...]) -> CheckResult:
        for i, sub in enumerate(node.premises):
            res = walk(sub, path + (i,))
            if not res.ok:
                return res
        try:
            computed = apply_rule(node.rule, tuple(s.conclusion for s in node.premises))
        except RuleError as e:
            return CheckResult(False, path, f"{node.rule.rule}: {e}")
        stated = node.conclusion
        if stated.env != computed.env:
            return CheckResult(False, path, f"{node.rule.rule}: stated context differs "
                                            f"from the rule's conclusion context")
        if not _same_observation(stated.observation, computed.observation):
            return CheckResult(False, path, f"{node.rule.rule}: stated observation "
                                            f"{stated.observation.name} differs from "
                                            f"{computed.observation.name}")
        for g in stated.env.valuations():
            where = _show_valuation(stated.env, g)
            if not P.programs_equal(stated.c1(g), computed.c1(g)):
                return CheckResult(False, path, f"{node.rule.rule}: left program differs at {where}")
            if not P.programs_equal(stated.c2(g), computed.c2(g)):
                return CheckResult(False, path, f"{node.rule.rule}: right program differs at {where}")
            v = spec_equiv(stated.w(g), computed.w(g), cap, seed)
            if not v.holds:
                return CheckResult(False, path, f"{node.rule.rule}: conclusion spec "
                                                f"differs at {where} ({v.kind})")
        return _OK

    return walk(d, ())


# ---------------------------------------------------------------------------
# The semantic oracle


@dataclass(frozen=True)
class OracleVerdict:
    """Aggregated theta(c1,c2) <= w over all valuations.

    Fails dominates Unknown dominates Holds; the valuation and inner verdict
    point at the first refutation (or the first undecided comparison)."""

    kind: str
    checked: int
    valuation: Optional[Valuation] = None
    inner: Optional[LeqVerdict] = None

    @property
    def holds(self) -> bool:
        return self.kind == "holds"

    @property
    def failed(self) -> bool:
        return self.kind == "fails"

    @property
    def is_unknown(self) -> bool:
        return self.kind == "unknown"


def oracle_check(j: Judgment, cap: int = DEFAULT_CAP, seed: int = 0) -> OracleVerdict:
    """Decide the judgment semantically at every context valuation."""
    first_unknown = None
    n = 0
    for g in j.env.valuations():
        n += 1
        theta = j.observation(j.c1(g), j.c2(g))
        v = spec_leq(theta, j.w(g), cap, seed)
        if v.failed:
            return OracleVerdict("fails", n, g, v)
        if v.is_unknown and first_unknown is None:
            first_unknown = (g, v)
    if first_unknown is not None:
        return OracleVerdict("unknown", n, first_unknown[0], first_unknown[1])
    return OracleVerdict("holds", n)


def minimize_failure(d: Derivation, cap: int = DEFAULT_CAP, seed: int = 0
                     ) -> Tuple[Derivation, OracleVerdict]:
    """Smallest subderivation whose conclusion already fails the oracle."""
    for sub in d.premises:
        if oracle_check(sub.conclusion, cap, seed).failed:
            return minimize_failure(sub, cap, seed)
    return d, oracle_check(d.conclusion, cap, seed)


@dataclass
class SoundnessReport:
    total: int = 0
    holds: int = 0
    unknown: int = 0
    fails: int = 0
    failures: List[Tuple[Derivation, OracleVerdict]] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return self.fails == 0

    def __repr__(self):
        return (f"SoundnessReport(total={self.total}, holds={self.holds}, "
                f"unknown={self.unknown}, fails={self.fails})")


def soundness_differential(sampler: Callable[[random.Random], Derivation], n: int,
                           cap: int = DEFAULT_CAP, seed: int = 0,
                           validate: bool = False) -> SoundnessReport:
    """Oracle-check the conclusions of n sampled derivations.

    Every sampled tree is well-formed by construction (the sampler builds
    through apply_rule), so any Fails is a soundness bug in a rule; the
    report carries the smallest failing subderivation.  With validate=True
    each tree is additionally replayed through check_derivation, and a
    replay failure raises, since it means the sampler and checker disagree.
    """
    rng = random.Random(seed)
    rep = SoundnessReport()
    for _ in range(n):
        d = sampler(rng)
        rep.total += 1
        if validate:
            res = check_derivation(d, cap, seed)
            if not res.ok:
                raise RuleError(f"sampled derivation does not replay: {res.message} "
                                f"at path {res.path}")
        v = oracle_check(d.conclusion, cap, seed)
        if v.failed:
            rep.fails += 1
            rep.failures.append(minimize_failure(d, cap, seed))
        elif v.is_unknown:
            rep.unknown += 1
        else:
            rep.holds += 1
    return rep


# ---------------------------------------------------------------------------
# Random derivations

# The sampler leans on bind chains over axiom leaves, since the bind law is
# where a broken observation or a miscomputed spec would surface; the pure
# eliminators, weakening, and the effect-specific compound rules are mixed
# in at lower rates.


def _val_family(rng: random.Random, env: Env, dom: FiniteDomain, allowed):
    """Constant, a context variable read, or a table over one variable.

    `allowed` lists the variable positions this parameter may depend on;
    the bind rules reject families that read across sides, so the sampler
    respects the split up front.
    """
    if allowed and rng.random() < 0.5:
        i = rng.choice(allowed)
        src = env.vars[i][1]
        if src == dom and rng.random() < 0.6:
            return lambda g, _i=i: g[_i]
        tbl = tuple(dom.value(rng.randrange(dom.size)) for _ in range(src.size))
        return lambda g, _i=i, _t=tbl: _t[g[_i].index]
    return _family(dom.value(rng.randrange(dom.size)))


def _bool_family(rng: random.Random, env: Env, allowed):
    if allowed and rng.random() < 0.6:
        i = rng.choice(allowed)
        k = rng.randrange(env.vars[i][1].size)
        return lambda g, _i=i, _k=k: g[_i].index == _k
    return _family(rng.random() < 0.5)


def _grow_demonic(rng: random.Random, w: RelSpec) -> RelSpec:
    """A random spec above w: demands grow, some points become unsatisfiable."""
    if not w.is_demonic or w.tag == "WrelIO":
        return w
    space = w.space
    table = []
    for pt in space.points():
        entry = w.demonic_at(pt)
        roll = rng.random()
        if entry is VIOLATED or roll < 0.1:
            table.append(VIOLATED)
        elif roll < 0.55:
            extra = frozenset(o for o in space.outcomes() if rng.random() < 0.2)
            table.append(entry | extra)
        else:
            table.append(entry)
    return demonic_spec(space, table)


def _grow_io(rng: random.Random, w: RelSpec) -> RelSpec:
    if not w.is_demonic:
        return w
    doomed = frozenset(pt for pt in w.io_points if rng.random() < 0.2)
    if not doomed:
        return w
    return io_demonic_spec(w.space, lambda pt, _w=w: VIOLATED if pt in doomed
                           else _w.demonic_at(pt), w.io_points, w.horizon or 0)


def _raise_prob(rng: random.Random, w: RelSpec) -> RelSpec:
    if w.pieces is None:
        return w
    delta = Fraction(rng.randrange(0, 3), 8)
    if delta == 0:
        return w
    pieces = [(k + delta, cs) for k, cs in w.pieces]
    pieces.append((ONE, (ZERO,) * w.space.size))
    return linear_spec(w.space, pieces)


def _random_coupling(rng: random.Random):
    # d[1][1] can sit anywhere between the Frechet bounds; the rest follows
    # from the marginals.
    grid = (ZERO, Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))
    p, q = rng.choice(grid), rng.choice(grid)
    lo = max(ZERO, p + q - 1)
    hi = min(p, q)
    t = lo + (hi - lo) * Fraction(rng.randrange(3), 2)
    d = ((1 - p - q + t, q - t), (p - t, t))
    return p, q, d


def random_derivation(rng: random.Random, effect: str, depth: int = 4,
                      state_size: int = 2, exc_size: int = 2,
                      io_sizes: Tuple[int, int] = (2, 2),
                      ndet_mode: Optional[str] = None) -> Derivation:
    """One well-formed seeded derivation for the given effect.

    The conclusion context is empty or holds one small variable; every node
    is built through apply_rule, so the tree replays under check_derivation.
    Alongside each context the sampler tracks which side may read each
    variable ("b" both, "l" left, "r" right), mirroring how the bind and
    handler rules split their bound values between the two programs.
    """
    mode = None
    if effect in (P.STATE, P.IMP):
        sdom = domain(f"st{state_size}", state_size)
        sig = P.state_sig(sdom) if effect == P.STATE else P.imp_sig(sdom)
        obs = observation_st() if effect == P.STATE else observation_part()
        pool = [UNIT, BOOL, sdom]
    elif effect == P.EXC:
        edom = domain(f"ex{exc_size}", exc_size)
        sig = P.exc_sig(edom)
        obs = observation_err()
        pool = [UNIT, BOOL, edom]
    elif effect == P.NDET:
        sig = P.ndet_sig()
        mode = ndet_mode if ndet_mode is not None else rng.choice(NDET_MODES)
        obs = observation_ndet(mode)
        pool = [UNIT, BOOL, domain("n3", 3)]
    elif effect == P.IO:
        idom, odom = domain(f"in{io_sizes[0]}", io_sizes[0]), domain(f"out{io_sizes[1]}", io_sizes[1])
        sig = P.io_sig(idom, odom)
        obs = observation_io(idom, odom, idom, odom, IO_ROOT)
        pool = [UNIT, BOOL, idom]
    elif effect == P.PROB:
        sig = P.prob_sig()
        obs = observation_prob()
        pool = [UNIT, BOOL]
    else:
        raise ValueError(f"unknown effect {effect!r}")

    sig1 = sig2 = sig
    grow = {P.IO: _grow_io, P.PROB: _raise_prob}.get(effect, _grow_demonic)

    def readable(sides, side):
        banned = "r" if side == 1 else "l"
        return tuple(i for i, s in enumerate(sides) if s != banned)

    def leaf(env: Env, sides, r1: Optional[FiniteDomain], r2: Optional[FiniteDomain]) -> Derivation:
        lok, rok = readable(sides, 1), readable(sides, 2)
        names = ["Ret"]
        if effect in (P.STATE, P.IMP):
            if r1 in (None, sdom):
                names.append("GetL")
            if r1 in (None, UNIT):
                names.append("PutL")
            if r2 in (None, sdom):
                names.append("GetR")
            if r2 in (None, UNIT):
                names.append("PutR")
            if r1 in (None, sdom) and r2 in (None, sdom):
                names.append("GetSync")
            if r1 in (None, UNIT) and r2 in (None, UNIT):
                names.append("PutSync")
        elif effect == P.EXC:
            names += ["ThrowL", "ThrowR"]
        elif effect == P.NDET:
            if mode == FORALL:
                if r1 in (None, BOOL):
                    names.append("DemonicPickLeft")
                if r2 in (None, BOOL):
                    names.append("DemonicPickRight")
                names.append("DemonicFailLeft")
            elif mode == EXISTS:
                if r1 in (None, BOOL) and r2 in (None, BOOL):
                    names.append("Angelic")
            else:
                names.append("Refinement")
        elif effect == P.IO:
            if r1 in (None, idom):
                names.append("InputL")
            if r1 in (None, UNIT):
                names.append("OutputL")
            if r2 in (None, idom):
                names.append("InputR")
            if r2 in (None, UNIT):
                names.append("OutputR")
        elif effect == P.PROB:
            if r1 in (None, BOOL) and r2 in (None, BOOL):
                names += ["FlipCoupling", "FlipCoupling"]
        name = rng.choice(names)
        d1 = r1 if r1 is not None else rng.choice(pool)
        d2 = r2 if r2 is not None else rng.choice(pool)
        if name == "Ret":
            return derive("Ret", observation=obs, sig1=sig1, sig2=sig2, env=env,
                          a1=_val_family(rng, env, d1, lok),
                          a2=_val_family(rng, env, d2, rok))
        if name in ("GetL", "GetR", "PutL", "PutR", "GetSync", "PutSync"):
            params = dict(observation=obs, sig1=sig1, sig2=sig2, env=env)
            if name == "GetL":
                params["a2"] = _val_family(rng, env, d2, rok)
            elif name == "GetR":
                params["a1"] = _val_family(rng, env, d1, lok)
            elif name == "PutL":
                params.update(s=_val_family(rng, env, sdom, lok),
                              a2=_val_family(rng, env, d2, rok))
            elif name == "PutR":
                params.update(a1=_val_family(rng, env, d1, lok),
                              s=_val_family(rng, env, sdom, rok))
            elif name == "PutSync":
                params.update(s1=_val_family(rng, env, sdom, lok),
                              s2=_val_family(rng, env, sdom, rok))
            return derive(name, **params)
        if name == "ThrowL":
            return derive("ThrowL", sig1=sig1, sig2=sig2, env=env, result1=d1,
                          e1=_val_family(rng, env, edom, lok),
                          a2=_val_family(rng, env, d2, rok))
        if name == "ThrowR":
            return derive("ThrowR", sig1=sig1, sig2=sig2, env=env, result2=d2,
                          a1=_val_family(rng, env, d1, lok),
                          e2=_val_family(rng, env, edom, rok))
        if name == "DemonicPickLeft":
            return derive("DemonicPickLeft", env=env, a2=_val_family(rng, env, d2, rok))
        if name == "DemonicPickRight":
            return derive("DemonicPickRight", env=env, a1=_val_family(rng, env, d1, lok))
        if name == "DemonicFailLeft":
            return derive("DemonicFailLeft", env=env, result=d1,
                          a2=_val_family(rng, env, d2, rok))
        if name == "Angelic":
            return derive("Angelic", env=env)
        if name == "Refinement":
            h = tuple(rng.randrange(d2.size) for _ in range(d1.size))
            return derive("Refinement", env=env, dom1=d1, dom2=d2, h=h)
        if name == "InputL":
            return derive("InputL", sig1=sig1, sig2=sig2, env=env,
                          a2=_val_family(rng, env, d2, rok))
        if name == "InputR":
            return derive("InputR", sig1=sig1, sig2=sig2, env=env,
                          a1=_val_family(rng, env, d1, lok))
        if name == "OutputL":
            return derive("OutputL", sig1=sig1, sig2=sig2, env=env,
                          o1=_val_family(rng, env, odom, lok),
                          a2=_val_family(rng, env, d2, rok))
        if name == "OutputR":
            return derive("OutputR", sig1=sig1, sig2=sig2, env=env,
                          a1=_val_family(rng, env, d1, lok),
                          o2=_val_family(rng, env, odom, rok))
        if name == "FlipCoupling":
            p, q, dd = _random_coupling(rng)
            return derive("FlipCoupling", env=env, p=p, q=q, d=dd)
        raise AssertionError(name)

    def gen(env: Env, sides, d: int, r1: Optional[FiniteDomain],
            r2: Optional[FiniteDomain], exact: bool = False) -> Derivation:
        if d <= 1:
            return leaf(env, sides, r1, r2)
        both = tuple(i for i, s in enumerate(sides) if s == "b")
        options = ["bind", "bind", "bind", "leaf", "boolelim"]
        if not exact:
            options += ["weaken", "zero", "ifsync"]
            # loops conclude at unit on both sides, so only offer them where
            # the surrounding request allows that
            if effect == P.IMP and d >= 3 and r1 in (None, UNIT) and r2 in (None, UNIT):
                options += ["dowhile", "dowhile"]
            if effect == P.EXC and d >= 2:
                options.append("catch")
        if both:
            options.append("natelim")
        kind = rng.choice(options)

        if kind == "leaf":
            return leaf(env, sides, r1, r2)

        if kind == "bind":
            m = gen(env, sides, d - 1, None, None, exact)
            g0 = next(iter(env.valuations()))
            a1dom = m.conclusion.c1(g0).result
            a2dom = m.conclusion.c2(g0).result
            x = fresh_name(env, "x")
            mid = env.extend((x, a1dom))
            env2 = mid.extend((fresh_name(mid, "y"), a2dom))
            f = gen(env2, sides + ("l", "r"), d - 1, r1, r2, exact)
            return derive("Bind", (m, f))

        if kind == "weaken":
            sub = gen(env, sides, d - 1, r1, r2, exact)
            cache: Dict[Valuation, RelSpec] = {}

            def target(g, _sub=sub, _cache=cache, _seed=rng.getrandbits(32)):
                if g not in _cache:
                    _cache[g] = grow(random.Random(f"{_seed}:{g!r}"), _sub.conclusion.w(g))
                return _cache[g]

            return derive("Weaken", (sub,), w=target)

        if kind == "boolelim":
            rr1 = r1 if r1 is not None else rng.choice(pool)
            rr2 = r2 if r2 is not None else rng.choice(pool)
            jt = gen(env, sides, d - 1, rr1, rr2, exact)
            jf = gen(env, sides, d - 1, rr1, rr2, exact)
            return derive("BoolElim", (jt, jf), b=_bool_family(rng, env, both))

        if kind == "ifsync":
            rr1 = r1 if r1 is not None else rng.choice(pool)
            rr2 = r2 if r2 is not None else rng.choice(pool)
            jt = gen(env, sides, d - 1, rr1, rr2, exact)
            jf = gen(env, sides, d - 1, rr1, rr2, exact)
            return derive("IfSync", (jt, jf),
                          b1=_bool_family(rng, env, readable(sides, 1)),
                          b2=_bool_family(rng, env, readable(sides, 2)))

        if kind == "natelim":
            pos = rng.choice(both)
            var, vdom = env.vars[pos]
            rr1 = r1 if r1 is not None else rng.choice(pool)
            rr2 = r2 if r2 is not None else rng.choice(pool)
            inner_sides = sides[:pos] + sides[pos + 1:]
            prem = [gen(env.drop(pos), inner_sides, d - 1, rr1, rr2, exact)
                    for _ in range(vdom.size)]
            return derive("NatElim", prem, env=env, var=var)

        if kind == "zero":
            rr1 = r1 if r1 is not None else rng.choice(pool)
            rr2 = r2 if r2 is not None else rng.choice(pool)
            p1 = random_program(rng, sig1, rr1, min(d, 3))
            p2 = random_program(rng, sig2, rr2, min(d, 3))
            if obs.target == "WrelIO":
                top = unsatisfiable(io_space(rr1, idom, odom, rr2, idom, odom),
                                    points=IO_ROOT)
            else:
                top = unsatisfiable(_ret_space(obs.target, sig1, sig2, rr1, rr2))
            return derive("ZeroElim", observation=obs, env=env, c1=p1, c2=p2, w=top)

        if kind == "dowhile":
            body = gen(env, sides, max(d - 2, 1), BOOL, BOOL, exact=True)
            cache: Dict[Valuation, object] = {}

            def inv_fam(g, _b=body.conclusion, _cache=cache):
                if g not in _cache:
                    _cache[g] = loop_invariant(_b.c1(g), _b.c2(g))
                return _cache[g]

            prem = derive("Weaken", (body,),
                          w=lambda g: loop_premise_spec(inv_fam(g), sdom, sdom))
            return derive("DoWhileInv", (prem,), inv=inv_fam)

        if kind == "catch":
            a1dom = r1 if r1 is not None else rng.choice(pool)
            a2dom = r2 if r2 is not None else rng.choice(pool)
            jmain = gen(env, sides, d - 1, a1dom, a2dom, exact)
            throw_side = rng.choice((0, 1, 2))
            k = len(env.vars)
            h1_vals = tuple(edom.value(rng.randrange(exc_size)) if throw_side == 1
                            else a1dom.value(rng.randrange(a1dom.size))
                            for _ in range(exc_size))
            h2_vals = tuple(edom.value(rng.randrange(exc_size)) if throw_side == 2
                            else a2dom.value(rng.randrange(a2dom.size))
                            for _ in range(exc_size))
            h1f = lambda g: h1_vals[g[k].index]
            h2f = lambda g: h2_vals[g[k + 1].index]
            proj1 = lambda g: g[k]
            proj2 = lambda g: g[k + 1]
            x = fresh_name(env, "e")
            mid = env.extend((x, edom))
            y = fresh_name(mid, "e")
            z = fresh_name(mid, "a")
            env_ee = env.extend((x, edom), (y, edom))
            env_ea = env.extend((x, edom), (z, a2dom))
            env_ae = env.extend((x, a1dom), (y, edom))

            def axiom(envx, left_kind, right_kind, a1fam, e1fam, a2fam, e2fam):
                if left_kind == "throw":
                    return derive("ThrowL", sig1=sig1, sig2=sig2, env=envx,
                                  result1=a1dom, e1=e1fam, a2=a2fam)
                if right_kind == "throw":
                    return derive("ThrowR", sig1=sig1, sig2=sig2, env=envx,
                                  result2=a2dom, a1=a1fam, e2=e2fam)
                return derive("Ret", observation=obs, sig1=sig1, sig2=sig2, env=envx,
                              a1=a1fam, a2=a2fam)

            k1 = "throw" if throw_side == 1 else "ret"
            k2 = "throw" if throw_side == 2 else "ret"
            jee = axiom(env_ee, k1, k2, h1f, h1f, h2f, h2f)
            jea = axiom(env_ea, k1, "ret", h1f, h1f, proj2, None)
            jae = axiom(env_ae, "ret", k2, proj1, None, h2f, h2f)

            wx_cache: Dict[Valuation, RelSpec] = {}

            def wx(g):
                base = g[:k]
                if base not in wx_cache:
                    specs = []
                    for e1 in edom.values():
                        for e2 in edom.values():
                            specs.append(jee.conclusion.w(base + (e1, e2)))
                        for a2 in a2dom.values():
                            specs.append(jea.conclusion.w(base + (e1, a2)))
                    for a1 in a1dom.values():
                        for e2 in edom.values():
                            specs.append(jae.conclusion.w(base + (a1, e2)))
                    wx_cache[base] = _union_demands(specs)
                return wx_cache[base]

            wee = derive("Weaken", (jee,), w=wx)
            wea = derive("Weaken", (jea,), w=wx)
            wae = derive("Weaken", (jae,), w=wx)
            return derive("Catch", (jmain, wee, wea, wae))

        raise AssertionError(kind)

    env, sides = EMPTY_ENV, ()
    if rng.random() < 0.35:
        env, sides = env.extend(("k", rng.choice(pool[1:]))), ("b",)
    return gen(env, sides, depth, None, None)


def _union_demands(specs: Sequence[RelSpec]) -> RelSpec:
    """Least spec above every given demonic spec: pointwise union of demands."""
    space = specs[0].space
    table = []
    for pt in space.points():
        acc = set()
        broken = False
        for w in specs:
            entry = w.demonic_at(pt)
            if entry is VIOLATED:
                broken = True
                break
            acc |= entry
        table.append(VIOLATED if broken else frozenset(acc))
    return demonic_spec(space, table)
