"""Exhaustive and random program generation.

Exhaustive enumeration produces every bind-free tree up to a depth bound;
the law batteries pair these up (grafting binds on top) so Bind nodes never
need enumerating themselves.  Random generation covers Bind nodes and bigger
shapes for property tests and the soundness differential.
"""

from __future__ import annotations

import random
from fractions import Fraction
from typing import List, Sequence, Tuple

from .domains import BOOL, FiniteDomain
from . import programs as P
from .programs import Program, Signature

DEFAULT_FLIPS = (Fraction(0), Fraction(1, 4), Fraction(1, 2))


def enumerate_programs(sig: Signature, result: FiniteDomain, depth: int,
                       flip_params: Sequence[Fraction] = DEFAULT_FLIPS,
                       pick_sizes: Sequence[int] = (2,)) -> List[Program]:
    """All bind-free trees of the given effect with depth <= depth."""
    if depth < 1:
        return []
    eff = sig.effect
    rets = [P.ret(sig, v) for v in result.values()]
    if eff == P.EXC:
        leaves = rets + [P.throw(sig, e, result) for e in sig.exc.values()]
    elif eff == P.NDET:
        leaves = rets + [P.fail(sig, result)]
    else:
        leaves = list(rets)
    if depth == 1:
        return leaves

    prev = enumerate_programs(sig, result, depth - 1, flip_params, pick_sizes)
    out = list(prev)
    seen = set(prev)

    def add(p: Program):
        if p not in seen:
            seen.add(p)
            out.append(p)

    import itertools

    if eff in (P.STATE, P.IMP):
        for tbl in itertools.product(prev, repeat=sig.state.size):
            add(P.get(sig, tbl))
        for s in sig.state.values():
            for t in prev:
                add(P.put(sig, s, t))
        if eff == P.IMP:
            bodies = enumerate_programs(sig, BOOL, depth - 1, flip_params, pick_sizes)
            for b in bodies:
                for t in prev:
                    add(P.do_while(b, t))
    elif eff == P.EXC:
        for body in prev:
            for tbl in itertools.product(prev, repeat=sig.exc.size):
                add(P.catch(body, tbl))
    elif eff == P.NDET:
        for l in prev:
            for r in prev:
                add(P.choice(l, r))
        for n in pick_sizes:
            for tbl in itertools.product(prev, repeat=n):
                add(P.pick_fin(tbl))
    elif eff == P.IO:
        for tbl in itertools.product(prev, repeat=sig.inp.size):
            add(P.inp(sig, tbl))
        for o in sig.out.values():
            for t in prev:
                add(P.output(sig, o, t))
    elif eff == P.PROB:
        for p in flip_params:
            for f in prev:
                for t in prev:
                    add(P.flip(sig, p, f, t))
    return out


def enumerate_classes(sig: Signature, result: FiniteDomain, depth: int,
                      flip_params: Sequence[Fraction] = DEFAULT_FLIPS,
                      pick_sizes: Sequence[int] = (2,)) -> List[Program]:
    """One representative per evaluator-equivalence class of bind-free trees
    with depth <= depth.

    Grows level by level, collapsing each level to class representatives
    before building the next.  The evaluators are compositional (a tree's
    fingerprint is a function of its children's fingerprints), so this loses
    no classes while sidestepping the syntactic blowup of full enumeration.
    Order is deterministic: shallower representatives come first.
    """
    if depth < 1:
        return []
    eff = sig.effect
    doms = [result]
    if eff == P.IMP and BOOL not in doms:
        doms.append(BOOL)

    def leaves(res: FiniteDomain) -> List[Program]:
        rets = [P.ret(sig, v) for v in res.values()]
        if eff == P.EXC:
            return rets + [P.throw(sig, e, res) for e in sig.exc.values()]
        if eff == P.NDET:
            return rets + [P.fail(sig, res)]
        return rets

    def dedupe(ps: List[Program]) -> List[Program]:
        seen = {}
        for p in ps:
            seen.setdefault(P.semantic_key(p), p)
        return list(seen.values())

    import itertools

    cur = {res: dedupe(leaves(res)) for res in doms}
    for _ in range(depth - 1):
        nxt = {}
        for res, prev in cur.items():
            new = list(prev)
            if eff in (P.STATE, P.IMP):
                for tbl in itertools.product(prev, repeat=sig.state.size):
                    new.append(P.get(sig, tbl))
                for s in sig.state.values():
                    for t in prev:
                        new.append(P.put(sig, s, t))
                if eff == P.IMP:
                    for b in cur[BOOL]:
                        for t in prev:
                            new.append(P.do_while(b, t))
            elif eff == P.EXC:
                for body in prev:
                    for tbl in itertools.product(prev, repeat=sig.exc.size):
                        new.append(P.catch(body, tbl))
            elif eff == P.NDET:
                for l in prev:
                    for r in prev:
                        new.append(P.choice(l, r))
                for n in pick_sizes:
                    for tbl in itertools.product(prev, repeat=n):
                        new.append(P.pick_fin(tbl))
            elif eff == P.IO:
                for tbl in itertools.product(prev, repeat=sig.inp.size):
                    new.append(P.inp(sig, tbl))
                for o in sig.out.values():
                    for t in prev:
                        new.append(P.output(sig, o, t))
            elif eff == P.PROB:
                for p in flip_params:
                    for f in prev:
                        for t in prev:
                            new.append(P.flip(sig, p, f, t))
            nxt[res] = dedupe(new)
        cur = nxt
    return cur[result]


def random_program(rng: random.Random, sig: Signature, result: FiniteDomain, depth: int,
                   flip_params: Sequence[Fraction] = DEFAULT_FLIPS,
                   pick_sizes: Sequence[int] = (2, 3),
                   allow_bind: bool = True) -> Program:
    """One random tree with depth <= depth (>= 1); includes explicit Bind nodes."""
    eff = sig.effect

    def leaf() -> Program:
        choices = ["ret"]
        if eff == P.EXC:
            choices.append("throw")
        if eff == P.NDET:
            choices.append("fail")
        kind = rng.choice(choices)
        if kind == "throw":
            return P.throw(sig, rng.choice(list(sig.exc.values())), result)
        if kind == "fail":
            return P.fail(sig, result)
        return P.ret(sig, rng.choice(list(result.values())))

    def go(d: int, res: FiniteDomain) -> Program:
        if d <= 1 or rng.random() < 0.25:
            if res is result:
                return leaf()
            return P.ret(sig, rng.choice(list(res.values())))

        ops = {
            P.STATE: ["get", "put"],
            P.IMP: ["get", "put", "dowhile"],
            P.EXC: ["catch", "throw2"],
            P.NDET: ["choice", "pick"],
            P.IO: ["input", "output"],
            P.PROB: ["flip"],
        }[eff]
        if allow_bind:
            ops = ops + ["bind"]
        kind = rng.choice(ops)
        if kind == "bind":
            mid = rng.choice([dom for dom in (result, BOOL, sig.state, sig.exc, sig.inp)
                              if dom is not None])
            m = go(d - 1, mid)
            return P.bind(m, lambda _v: go(d - m.depth if d - m.depth >= 1 else 1, res))
        if kind == "get":
            return P.get(sig, lambda _s: go(d - 1, res))
        if kind == "put":
            return P.put(sig, rng.choice(list(sig.state.values())), go(d - 1, res))
        if kind == "dowhile":
            return P.do_while(go(d - 1, BOOL), go(d - 1, res))
        if kind == "catch":
            return P.catch(go(d - 1, res), lambda _e: go(d - 1, res))
        if kind == "throw2":
            return P.throw(sig, rng.choice(list(sig.exc.values())), res)
        if kind == "choice":
            return P.choice(go(d - 1, res), go(d - 1, res))
        if kind == "pick":
            n = rng.choice(list(pick_sizes))
            return P.pick_fin([go(d - 1, res) for _ in range(n)])
        if kind == "input":
            return P.inp(sig, lambda _i: go(d - 1, res))
        if kind == "output":
            return P.output(sig, rng.choice(list(sig.out.values())), go(d - 1, res))
        if kind == "flip":
            return P.flip(sig, rng.choice(list(flip_params)), go(d - 1, res), go(d - 1, res))
        raise AssertionError(kind)

    return go(depth, result)


def random_table(rng: random.Random, sig: Signature, arg: FiniteDomain, result: FiniteDomain,
                 depth: int, **kw) -> Tuple[Program, ...]:
    """A random total continuation table arg -> Program."""
    return tuple(random_program(rng, sig, result, depth, **kw) for _ in range(arg.size))
