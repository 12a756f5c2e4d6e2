"""A small imperative language over finite stores, and relational Hoare logic for it.

The language is the classic one: skip, assignment, sequencing, conditionals,
and while loops, with integer expressions over a declared set of locations.
A store signature fixes the locations and a finite value domain; a store is
then a point of a finite domain and the whole language runs inside the
iterative-program carrier.  `translate` is the call-by-value elaboration: an
assignment reads the store and writes the update, a conditional reads the
store and picks a branch, and a while loop becomes `do_while` of the guarded
body combinator

    do_while (bind guard (fun b. if b then bind body (fun (). ret true)
                                 else ret false))

so divergence is owned by the program carrier, not by the translator.

On top of the translation sit two relational front ends.  `ni_judgment`
states noninterference of a command against itself: stores that agree on the
low-labelled locations lead to final stores that again agree on them, under
the partial-correctness observation.  `rhl_rules` is a syntax-directed proof
system whose judgments `{pre} c1 ~ c2 {post}` speak only about store pairs;
conclusions are built by `apply_rhl_rule`, which enforces each rule's shape
and side conditions, and any structurally accepted instance can be handed to
the semantic oracle through `RHLInstance.judgment`.  Arithmetic wraps
modulo the value-domain size, and comparisons and connectives yield 0 or 1,
so every expression denotes a total function on stores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from . import observations as O
from . import programs as P
from . import rules as R
from . import specmonads as sm
from .domains import UNIT, UNIT_VAL, FiniteDomain, Value, boolv, domain
from .rules import RuleError

LOW, HIGH = "low", "high"


# ---------------------------------------------------------------------------
# Store signatures


@dataclass(frozen=True)
class StoreSignature:
    """Declared locations over a shared finite value domain.

    The first location is the most significant digit of the packed store
    index.  `labels`, when present, assigns each location a confidentiality
    label and is required by the noninterference front end only.
    """

    locations: Tuple[str, ...]
    values: FiniteDomain
    labels: Optional[Tuple[Tuple[str, str], ...]] = None

    def index(self, loc: str) -> int:
        try:
            return self.locations.index(loc)
        except ValueError:
            raise ValueError(f"undeclared location {loc!r}") from None

    def label(self, loc: str) -> str:
        if self.labels is None:
            raise ValueError("store signature carries no security labels")
        return dict(self.labels)[loc]


def store_signature(locations: Sequence[str], values: FiniteDomain,
                    labels: Optional[Mapping[str, str]] = None) -> StoreSignature:
    locs = tuple(locations)
    if len(set(locs)) != len(locs):
        raise ValueError("locations must be distinct")
    if not locs:
        raise ValueError("need at least one location")
    lab = None
    if labels is not None:
        extra = sorted(set(labels) - set(locs))
        if extra:
            raise ValueError(f"label for undeclared location {extra[0]!r}")
        missing = [l for l in locs if l not in labels]
        if missing:
            raise ValueError(f"location {missing[0]!r} has no label")
        bad = sorted(v for v in labels.values() if v not in (LOW, HIGH))
        if bad:
            raise ValueError(f"labels must be {LOW!r} or {HIGH!r}, not {bad[0]!r}")
        lab = tuple((l, labels[l]) for l in locs)
    return StoreSignature(locs, values, lab)


def store_domain(sig: StoreSignature) -> FiniteDomain:
    size = sig.values.size ** len(sig.locations)
    name = "store[" + ",".join(sig.locations) + f":{sig.values.size}]"
    labels = None
    if size <= 64:
        labels = tuple(",".join(f"{l}={v}" for l, v in zip(sig.locations, _digits(sig, i)))
                       for i in range(size))
    return domain(name, size, labels)


def _digits(sig: StoreSignature, idx: int) -> Tuple[int, ...]:
    out = []
    for _ in sig.locations:
        out.append(idx % sig.values.size)
        idx //= sig.values.size
    return tuple(reversed(out))


def store_read(sig: StoreSignature, idx: int, loc: str) -> int:
    return _digits(sig, idx)[sig.index(loc)]


def store_write(sig: StoreSignature, idx: int, loc: str, v: int) -> int:
    ds = list(_digits(sig, idx))
    ds[sig.index(loc)] = v % sig.values.size
    out = 0
    for d in ds:
        out = out * sig.values.size + d
    return out


def store_of(sig: StoreSignature, **values: int) -> int:
    """Pack named location values into a store index; unnamed ones are 0."""
    extra = sorted(set(values) - set(sig.locations))
    if extra:
        raise ValueError(f"undeclared location {extra[0]!r}")
    idx = 0
    for loc in sig.locations:
        idx = idx * sig.values.size + values.get(loc, 0) % sig.values.size
    return idx


# ---------------------------------------------------------------------------
# Syntax


@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class Loc:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Lit, Loc, Not, BinOp]


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Assign:
    loc: str
    expr: Expr


@dataclass(frozen=True)
class Seq:
    first: "Stmt"
    second: "Stmt"


@dataclass(frozen=True)
class If:
    cond: Expr
    then: "Stmt"
    els: "Stmt"


@dataclass(frozen=True)
class While:
    cond: Expr
    body: "Stmt"


Stmt = Union[Skip, Assign, Seq, If, While]

_BINOPS = ("+", "-", "*", "=", "<", "<=", "&&", "||")


def expr_locations(e: Expr) -> frozenset:
    if isinstance(e, Lit):
        return frozenset()
    if isinstance(e, Loc):
        return frozenset((e.name,))
    if isinstance(e, Not):
        return expr_locations(e.arg)
    if isinstance(e, BinOp):
        return expr_locations(e.left) | expr_locations(e.right)
    raise TypeError(f"not an expression: {e!r}")


def stmt_locations(s: Stmt) -> frozenset:
    if isinstance(s, Skip):
        return frozenset()
    if isinstance(s, Assign):
        return frozenset((s.loc,)) | expr_locations(s.expr)
    if isinstance(s, Seq):
        return stmt_locations(s.first) | stmt_locations(s.second)
    if isinstance(s, If):
        return expr_locations(s.cond) | stmt_locations(s.then) | stmt_locations(s.els)
    if isinstance(s, While):
        return expr_locations(s.cond) | stmt_locations(s.body)
    raise TypeError(f"not a statement: {s!r}")


# ---------------------------------------------------------------------------
# Concrete syntax

# stmt  ::= "skip" | IDENT ":=" expr | stmt ";" stmt
#         | "if" expr "then" stmt "else" stmt
#         | "while" expr "do" stmt | "(" stmt ")"
# expr  ::= NAT | IDENT | expr OP expr | "!" expr | "(" expr ")"
#
# ";" binds loosest and associates right; if/while bodies extend as far
# right as possible.  Operator precedence, tightest first:
# "!", "*", "+"/"-", comparisons (non-associative), "&&", "||".


class ParseError(ValueError):
    def __init__(self, line: int, col: int, msg: str):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


_KEYWORDS = ("skip", "if", "then", "else", "while", "do")
_SYMBOLS = (":=", "<=", "&&", "||", ";", "(", ")", "+", "-", "*", "=", "<", "!")


@dataclass(frozen=True)
class _Tok:
    kind: str  # "nat" | "ident" | "kw" | "sym" | "eof"
    text: str
    line: int
    col: int


def _lex(text: str) -> List[_Tok]:
    toks: List[_Tok] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "−":  # minus sign, accepted as "-"
            toks.append(_Tok("sym", "-", line, col))
            i, col = i + 1, col + 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(_Tok("nat", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "kw" if word in _KEYWORDS else "ident"
            toks.append(_Tok(kind, word, line, col))
            col += j - i
            i = j
            continue
        for s in _SYMBOLS:
            if text.startswith(s, i):
                toks.append(_Tok("sym", s, line, col))
                i, col = i + len(s), col + len(s)
                break
        else:
            raise ParseError(line, col, f"unexpected character {ch!r}")
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, toks: List[_Tok]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def take(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at_sym(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "sym" and t.text == text

    def at_kw(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "kw" and t.text == word

    def expect_sym(self, text: str) -> None:
        t = self.peek()
        if not self.at_sym(text):
            raise ParseError(t.line, t.col, f"expected {text!r}, found {self._show(t)}")
        self.take()

    def expect_kw(self, word: str) -> None:
        t = self.peek()
        if not self.at_kw(word):
            raise ParseError(t.line, t.col, f"expected {word!r}, found {self._show(t)}")
        self.take()

    @staticmethod
    def _show(t: _Tok) -> str:
        return "end of input" if t.kind == "eof" else repr(t.text)

    # statements

    def stmt(self) -> Stmt:
        first = self.stmt_atom()
        if self.at_sym(";"):
            self.take()
            return Seq(first, self.stmt())
        return first

    def stmt_atom(self) -> Stmt:
        t = self.peek()
        if self.at_kw("skip"):
            self.take()
            return Skip()
        if self.at_kw("if"):
            self.take()
            cond = self.expr()
            self.expect_kw("then")
            then = self.stmt()
            self.expect_kw("else")
            return If(cond, then, self.stmt())
        if self.at_kw("while"):
            self.take()
            cond = self.expr()
            self.expect_kw("do")
            return While(cond, self.stmt())
        if self.at_sym("("):
            self.take()
            inner = self.stmt()
            self.expect_sym(")")
            return inner
        if t.kind == "ident":
            self.take()
            self.expect_sym(":=")
            return Assign(t.text, self.expr())
        raise ParseError(t.line, t.col, f"expected a statement, found {self._show(t)}")

    # expressions, loosest first

    def expr(self) -> Expr:
        left = self.expr_and()
        while self.at_sym("||"):
            self.take()
            left = BinOp("||", left, self.expr_and())
        return left

    def expr_and(self) -> Expr:
        left = self.expr_cmp()
        while self.at_sym("&&"):
            self.take()
            left = BinOp("&&", left, self.expr_cmp())
        return left

    def expr_cmp(self) -> Expr:
        left = self.expr_add()
        for op in ("<=", "<", "="):
            if self.at_sym(op):
                self.take()
                return BinOp(op, left, self.expr_add())
        return left

    def expr_add(self) -> Expr:
        left = self.expr_mul()
        while self.at_sym("+") or self.at_sym("-"):
            op = self.take().text
            left = BinOp(op, left, self.expr_mul())
        return left

    def expr_mul(self) -> Expr:
        left = self.expr_unary()
        while self.at_sym("*"):
            self.take()
            left = BinOp("*", left, self.expr_unary())
        return left

    def expr_unary(self) -> Expr:
        if self.at_sym("!"):
            self.take()
            return Not(self.expr_unary())
        return self.expr_primary()

    def expr_primary(self) -> Expr:
        t = self.peek()
        if t.kind == "nat":
            self.take()
            return Lit(int(t.text))
        if t.kind == "ident":
            self.take()
            return Loc(t.text)
        if self.at_sym("("):
            self.take()
            inner = self.expr()
            self.expect_sym(")")
            return inner
        raise ParseError(t.line, t.col, f"expected an expression, found {self._show(t)}")


def parse_while(text: str) -> Stmt:
    p = _Parser(_lex(text))
    out = p.stmt()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(t.line, t.col, f"trailing input, found {p._show(t)}")
    return out


_PREC = {"||": 1, "&&": 2, "=": 3, "<": 3, "<=": 3, "+": 4, "-": 4, "*": 5}


def show_expr(e: Expr, at: int = 0) -> str:
    if isinstance(e, Lit):
        return str(e.value)
    if isinstance(e, Loc):
        return e.name
    if isinstance(e, Not):
        return "!" + show_expr(e.arg, 6)
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        # comparisons are non-associative, so both sides render one level up
        lk = p if e.op not in ("=", "<", "<=") else p + 1
        body = f"{show_expr(e.left, lk)} {e.op} {show_expr(e.right, p + 1)}"
        return f"({body})" if p < at else body
    raise TypeError(f"not an expression: {e!r}")


def show_stmt(s: Stmt) -> str:
    if isinstance(s, Skip):
        return "skip"
    if isinstance(s, Assign):
        return f"{s.loc} := {show_expr(s.expr)}"
    if isinstance(s, Seq):
        # the left of a ";" must stop there, so compound heads get parens
        head = show_stmt(s.first)
        if isinstance(s.first, (Seq, If, While)):
            head = f"({head})"
        return f"{head}; {show_stmt(s.second)}"
    if isinstance(s, If):
        return (f"if {show_expr(s.cond)} then {show_stmt(s.then)} "
                f"else {show_stmt(s.els)}")
    if isinstance(s, While):
        return f"while {show_expr(s.cond)} do {show_stmt(s.body)}"
    raise TypeError(f"not a statement: {s!r}")


# ---------------------------------------------------------------------------
# Expression evaluation

# Arithmetic wraps modulo the value-domain size; comparisons and the
# connectives return 0 or 1, and any nonzero value counts as true.


def eval_expr(sig: StoreSignature, e: Expr, store: int) -> int:
    m = sig.values.size
    if isinstance(e, Lit):
        return e.value % m
    if isinstance(e, Loc):
        return store_read(sig, store, e.name)
    if isinstance(e, Not):
        return (0 if eval_expr(sig, e.arg, store) else 1) % m
    if isinstance(e, BinOp):
        a = eval_expr(sig, e.left, store)
        b = eval_expr(sig, e.right, store)
        if e.op == "+":
            return (a + b) % m
        if e.op == "-":
            return (a - b) % m
        if e.op == "*":
            return (a * b) % m
        if e.op == "=":
            return (1 if a == b else 0) % m
        if e.op == "<":
            return (1 if a < b else 0) % m
        if e.op == "<=":
            return (1 if a <= b else 0) % m
        if e.op == "&&":
            return (1 if a and b else 0) % m
        if e.op == "||":
            return (1 if a or b else 0) % m
    raise TypeError(f"not an expression: {e!r}")


def truthy(v: int) -> bool:
    return v != 0


# ---------------------------------------------------------------------------
# Elaboration into the iterative carrier


def translate(ast: Stmt, sig: StoreSignature) -> P.Program:
    """Call-by-value elaboration of a statement into a unit-valued program.

    Reads and writes go through the store effect one at a time; a loop
    becomes `do_while` over the combinator that reads the guard, runs the
    body when it holds, and reports whether to go around again.  Parsing is
    signature-free, so undeclared locations surface here.
    """
    missing = sorted(stmt_locations(ast) - set(sig.locations))
    if missing:
        raise ValueError(f"undeclared location {missing[0]!r}")
    sdom = store_domain(sig)
    isig = P.imp_sig(sdom)
    unit = P.ret(isig, UNIT_VAL)

    def go(s: Stmt) -> P.Program:
        if isinstance(s, Skip):
            return unit
        if isinstance(s, Assign):
            def write(st: Value) -> P.Program:
                v = eval_expr(sig, s.expr, st.index)
                nxt = Value(sdom, store_write(sig, st.index, s.loc, v))
                return P.put_unit(isig, nxt, UNIT_VAL)
            return P.bind(P.get_state(isig), write)
        if isinstance(s, Seq):
            first, second = go(s.first), go(s.second)
            return P.bind(first, lambda _u: second)
        if isinstance(s, If):
            then, els = go(s.then), go(s.els)
            return P.bind(P.get_state(isig),
                          lambda st: then if truthy(eval_expr(sig, s.cond, st.index)) else els)
        if isinstance(s, While):
            body = go(s.body)
            guard = P.bind(P.get_state(isig),
                           lambda st: P.ret(isig, boolv(truthy(eval_expr(sig, s.cond, st.index)))))
            once = P.bind(guard,
                          lambda b: P.bind(body, lambda _u: P.ret(isig, boolv(True)))
                          if b.index else P.ret(isig, boolv(False)))
            return P.do_while(once, unit)
        raise TypeError(f"not a statement: {s!r}")

    return go(ast)


def run_stmt(sig: StoreSignature, ast: Stmt, store: int) -> Optional[int]:
    """Final store of a run, or None when the statement diverges.

    Statements are deterministic over a finite store, so a loop diverges
    exactly when a store repeats while its guard still holds; this decides
    termination without fuel.
    """
    if isinstance(ast, Skip):
        return store
    if isinstance(ast, Assign):
        return store_write(sig, store, ast.loc, eval_expr(sig, ast.expr, store))
    if isinstance(ast, Seq):
        mid = run_stmt(sig, ast.first, store)
        return None if mid is None else run_stmt(sig, ast.second, mid)
    if isinstance(ast, If):
        branch = ast.then if truthy(eval_expr(sig, ast.cond, store)) else ast.els
        return run_stmt(sig, branch, store)
    if isinstance(ast, While):
        seen = set()
        cur: Optional[int] = store
        while cur is not None and truthy(eval_expr(sig, ast.cond, cur)):
            if cur in seen:
                return None
            seen.add(cur)
            cur = run_stmt(sig, ast.body, cur)
        return cur
    raise TypeError(f"not a statement: {ast!r}")


# ---------------------------------------------------------------------------
# Noninterference


def low_equal(sig: StoreSignature, i: int, j: int) -> bool:
    return all(store_read(sig, i, l) == store_read(sig, j, l)
               for l in sig.locations if sig.label(l) == LOW)


def ni_prepost(sig: StoreSignature) -> sm.RelSpec:
    """Pre/post form of noninterference: low-equal stores in, low-equal out."""
    sdom = store_domain(sig)
    space = sm.pp_state_space(UNIT, sdom, UNIT, sdom)
    pre = [low_equal(sig, *space.point_split(pt)) for pt in space.points()]
    post = [False] * space.size
    for si1 in range(sdom.size):
        for sf1 in range(sdom.size):
            for si2 in range(sdom.size):
                for sf2 in range(sdom.size):
                    o = space.pp_post_index(si1, 0, sf1, si2, 0, sf2)
                    post[o] = low_equal(sig, sf1, sf2)
    return sm.pp_spec(space, pre, post)


def ni_judgment(ast: Stmt, sig: StoreSignature) -> R.Judgment:
    """The command against itself: low-equivalent runs stay low-equivalent.

    Stated under the partial-correctness observation, so diverging runs
    satisfy the claim vacuously.
    """
    if sig.labels is None:
        raise ValueError("noninterference needs a labelled store signature")
    c = translate(ast, sig)
    w = sm.embed_pp_in_wp(ni_prepost(sig))
    return R.judgment(O.observation_part(), c, c, w)


# ---------------------------------------------------------------------------
# Relational Hoare judgments
#
# Pre- and postconditions are truth tables over store pairs, indexed
# s1 * size + s2.  The judgment {pre} c1 ~ c2 {post} means: under the
# partial-correctness observation, related initial stores that both
# terminate end in related final stores.


def rel_table(sig: StoreSignature, fn: Callable[[int, int], bool]) -> Tuple[bool, ...]:
    n = store_domain(sig).size
    return tuple(bool(fn(i, j)) for i in range(n) for j in range(n))


def guard_table(sig: StoreSignature, e: Expr) -> Tuple[bool, ...]:
    n = store_domain(sig).size
    return tuple(truthy(eval_expr(sig, e, i)) for i in range(n))


@dataclass(frozen=True)
class RHLInstance:
    """One judgment {pre} left ~ right {post} over a shared store signature."""

    sig: StoreSignature
    left: Stmt
    right: Stmt
    pre: Tuple[bool, ...]
    post: Tuple[bool, ...]

    def __post_init__(self):
        n = store_domain(self.sig).size
        if len(self.pre) != n * n:
            raise ValueError("precondition table must cover every store pair")
        if len(self.post) != n * n:
            raise ValueError("postcondition table must cover every store pair")

    def prepost(self) -> sm.RelSpec:
        sdom = store_domain(self.sig)
        n = sdom.size
        space = sm.pp_state_space(UNIT, sdom, UNIT, sdom)
        pre = [self.pre[pt2pair(space, pt, n)] for pt in space.points()]
        post = [False] * space.size
        for si1 in range(n):
            for sf1 in range(n):
                for si2 in range(n):
                    for sf2 in range(n):
                        o = space.pp_post_index(si1, 0, sf1, si2, 0, sf2)
                        post[o] = self.post[sf1 * n + sf2]
        return sm.pp_spec(space, pre, post)

    def judgment(self) -> R.Judgment:
        c1 = translate(self.left, self.sig)
        c2 = translate(self.right, self.sig)
        return R.judgment(O.observation_part(), c1, c2,
                          sm.embed_pp_in_wp(self.prepost()))


def pt2pair(space: sm.OutcomeSpace, pt: int, n: int) -> int:
    i, j = space.point_split(pt)
    return i * n + j


def admissible(inst: RHLInstance, cap: int = sm.DEFAULT_CAP, seed: int = 0):
    """Semantic check of an instance: the oracle decides its judgment."""
    return R.oracle_check(inst.judgment(), cap, seed)


# ---------------------------------------------------------------------------
# The rule catalog

_RHL_RULES: Dict[str, Callable] = {}
_RHL_ARITY: Dict[str, int] = {}


def _rhl_rule(name: str, arity: int):
    def deco(fn):
        _RHL_RULES[name] = fn
        _RHL_ARITY[name] = arity
        return fn
    return deco


def rhl_rule_names() -> Tuple[str, ...]:
    return tuple(sorted(_RHL_RULES))


def apply_rhl_rule(name: str, premises: Sequence[RHLInstance] = (), **params) -> RHLInstance:
    if name not in _RHL_RULES:
        raise RuleError(f"unknown relational rule {name!r}")
    if len(premises) != _RHL_ARITY[name]:
        raise RuleError(f"{name} takes {_RHL_ARITY[name]} premise(s), got {len(premises)}")
    box = dict(params)
    out = _RHL_RULES[name](box, tuple(premises))
    if box:
        extra = sorted(box)[0]
        raise RuleError(f"{name} does not take a parameter {extra!r}")
    return out


def _need(box: Dict, rule: str, key: str):
    if key not in box:
        raise RuleError(f"{rule} is missing parameter {key!r}")
    return box.pop(key)


def _table_param(box: Dict, rule: str, key: str, n: int) -> Tuple[bool, ...]:
    t = tuple(bool(v) for v in _need(box, rule, key))
    if len(t) != n * n:
        raise RuleError(f"{rule}: {key!r} must cover every store pair")
    return t


def _expr_param(box: Dict, rule: str, key: str, sig: StoreSignature) -> Expr:
    e = _need(box, rule, key)
    missing = sorted(expr_locations(e) - set(sig.locations))
    if missing:
        raise RuleError(f"{rule}: {key!r} reads undeclared location {missing[0]!r}")
    return e


def _same_sig(rule: str, premises: Sequence[RHLInstance]) -> StoreSignature:
    sigs = {p.sig for p in premises}
    if len(sigs) != 1:
        raise RuleError(f"{rule}: premises must share one store signature")
    return premises[0].sig


def _and_guards(pre: Sequence[bool], g1: Sequence[bool], g2: Sequence[bool],
                n: int, want1: bool, want2: bool) -> Tuple[bool, ...]:
    return tuple(pre[k] and g1[k // n] == want1 and g2[k % n] == want2
                 for k in range(n * n))


def _and_guard_left(pre: Sequence[bool], g1: Sequence[bool],
                    n: int, want: bool) -> Tuple[bool, ...]:
    return tuple(pre[k] and g1[k // n] == want for k in range(n * n))


def _and_guard_right(pre: Sequence[bool], g2: Sequence[bool],
                     n: int, want: bool) -> Tuple[bool, ...]:
    return tuple(pre[k] and g2[k % n] == want for k in range(n * n))


def _guards_agree(rule: str, sig: StoreSignature, pre: Sequence[bool],
                  g1: Sequence[bool], g2: Sequence[bool]) -> None:
    sdom = store_domain(sig)
    n = sdom.size
    for k in range(n * n):
        if pre[k] and g1[k // n] != g2[k % n]:
            raise RuleError(f"{rule}: the precondition admits stores where the guards "
                            f"disagree, for example {sdom.label_of(k // n)} and "
                            f"{sdom.label_of(k % n)}")


def _assign_pre(sig: StoreSignature, upd1, upd2, post: Sequence[bool]) -> Tuple[bool, ...]:
    # substitution through the update maps: pre = post o (upd1 x upd2)
    n = store_domain(sig).size
    return tuple(post[upd1(k // n) * n + upd2(k % n)] for k in range(n * n))


def _updater(sig: StoreSignature, loc: str, e: Expr):
    return lambda s: store_write(sig, s, loc, eval_expr(sig, e, s))


def _assign_param(box: Dict, rule: str, sig: StoreSignature, loc_key: str, expr_key: str):
    loc = _need(box, rule, loc_key)
    if loc not in sig.locations:
        raise RuleError(f"{rule}: assignment to undeclared location {loc!r}")
    e = _expr_param(box, rule, expr_key, sig)
    return loc, e


@_rhl_rule("Skip", 0)
def _rhl_skip(box: Dict, _prem) -> RHLInstance:
    sig = _need(box, "Skip", "sig")
    n = store_domain(sig).size
    pre = _table_param(box, "Skip", "pre", n)
    return RHLInstance(sig, Skip(), Skip(), pre, pre)


@_rhl_rule("Assign", 0)
def _rhl_assign(box: Dict, _prem) -> RHLInstance:
    sig = _need(box, "Assign", "sig")
    n = store_domain(sig).size
    loc1, e1 = _assign_param(box, "Assign", sig, "loc1", "expr1")
    loc2, e2 = _assign_param(box, "Assign", sig, "loc2", "expr2")
    post = _table_param(box, "Assign", "post", n)
    pre = _assign_pre(sig, _updater(sig, loc1, e1), _updater(sig, loc2, e2), post)
    return RHLInstance(sig, Assign(loc1, e1), Assign(loc2, e2), pre, post)


@_rhl_rule("AssignL", 0)
def _rhl_assign_l(box: Dict, _prem) -> RHLInstance:
    sig = _need(box, "AssignL", "sig")
    n = store_domain(sig).size
    loc1, e1 = _assign_param(box, "AssignL", sig, "loc1", "expr1")
    post = _table_param(box, "AssignL", "post", n)
    pre = _assign_pre(sig, _updater(sig, loc1, e1), lambda s: s, post)
    return RHLInstance(sig, Assign(loc1, e1), Skip(), pre, post)


@_rhl_rule("AssignR", 0)
def _rhl_assign_r(box: Dict, _prem) -> RHLInstance:
    sig = _need(box, "AssignR", "sig")
    n = store_domain(sig).size
    loc2, e2 = _assign_param(box, "AssignR", sig, "loc2", "expr2")
    post = _table_param(box, "AssignR", "post", n)
    pre = _assign_pre(sig, lambda s: s, _updater(sig, loc2, e2), post)
    return RHLInstance(sig, Skip(), Assign(loc2, e2), pre, post)


@_rhl_rule("Seq", 2)
def _rhl_seq(box: Dict, prem) -> RHLInstance:
    j1, j2 = prem
    sig = _same_sig("Seq", prem)
    if j1.post != j2.pre:
        raise RuleError("Seq: the first postcondition must be exactly the second "
                        "precondition; adapt with Consequence first")
    return RHLInstance(sig, Seq(j1.left, j2.left), Seq(j1.right, j2.right),
                       j1.pre, j2.post)


@_rhl_rule("IfSync", 2)
def _rhl_if_sync(box: Dict, prem) -> RHLInstance:
    jt, jf = prem
    sig = _same_sig("IfSync", prem)
    n = store_domain(sig).size
    cond1 = _expr_param(box, "IfSync", "cond1", sig)
    cond2 = _expr_param(box, "IfSync", "cond2", sig)
    pre = _table_param(box, "IfSync", "pre", n)
    g1, g2 = guard_table(sig, cond1), guard_table(sig, cond2)
    _guards_agree("IfSync", sig, pre, g1, g2)
    if jt.pre != _and_guards(pre, g1, g2, n, True, True):
        raise RuleError("IfSync: the first premise must assume the precondition "
                        "with both guards true")
    if jf.pre != _and_guards(pre, g1, g2, n, False, False):
        raise RuleError("IfSync: the second premise must assume the precondition "
                        "with both guards false")
    if jt.post != jf.post:
        raise RuleError("IfSync: the branch postconditions must agree")
    return RHLInstance(sig, If(cond1, jt.left, jf.left), If(cond2, jt.right, jf.right),
                       pre, jt.post)


@_rhl_rule("IfL", 2)
def _rhl_if_l(box: Dict, prem) -> RHLInstance:
    jt, jf = prem
    sig = _same_sig("IfL", prem)
    n = store_domain(sig).size
    cond1 = _expr_param(box, "IfL", "cond1", sig)
    pre = _table_param(box, "IfL", "pre", n)
    if jt.right != jf.right:
        raise RuleError("IfL: the premises must share the right program")
    g1 = guard_table(sig, cond1)
    if jt.pre != _and_guard_left(pre, g1, n, True):
        raise RuleError("IfL: the first premise must assume the precondition "
                        "with the guard true")
    if jf.pre != _and_guard_left(pre, g1, n, False):
        raise RuleError("IfL: the second premise must assume the precondition "
                        "with the guard false")
    if jt.post != jf.post:
        raise RuleError("IfL: the branch postconditions must agree")
    return RHLInstance(sig, If(cond1, jt.left, jf.left), jt.right, pre, jt.post)


@_rhl_rule("IfR", 2)
def _rhl_if_r(box: Dict, prem) -> RHLInstance:
    jt, jf = prem
    sig = _same_sig("IfR", prem)
    n = store_domain(sig).size
    cond2 = _expr_param(box, "IfR", "cond2", sig)
    pre = _table_param(box, "IfR", "pre", n)
    if jt.left != jf.left:
        raise RuleError("IfR: the premises must share the left program")
    g2 = guard_table(sig, cond2)
    if jt.pre != _and_guard_right(pre, g2, n, True):
        raise RuleError("IfR: the first premise must assume the precondition "
                        "with the guard true")
    if jf.pre != _and_guard_right(pre, g2, n, False):
        raise RuleError("IfR: the second premise must assume the precondition "
                        "with the guard false")
    if jt.post != jf.post:
        raise RuleError("IfR: the branch postconditions must agree")
    return RHLInstance(sig, jt.left, If(cond2, jt.right, jf.right), pre, jt.post)


@_rhl_rule("WhileSync", 1)
def _rhl_while_sync(box: Dict, prem) -> RHLInstance:
    (jb,) = prem
    sig = jb.sig
    n = store_domain(sig).size
    cond1 = _expr_param(box, "WhileSync", "cond1", sig)
    cond2 = _expr_param(box, "WhileSync", "cond2", sig)
    inv = _table_param(box, "WhileSync", "inv", n)
    g1, g2 = guard_table(sig, cond1), guard_table(sig, cond2)
    _guards_agree("WhileSync", sig, inv, g1, g2)
    if jb.pre != _and_guards(inv, g1, g2, n, True, True):
        raise RuleError("WhileSync: the body must assume the invariant with both "
                        "guards true")
    if jb.post != inv:
        raise RuleError("WhileSync: the body must reestablish the invariant")
    return RHLInstance(sig, While(cond1, jb.left), While(cond2, jb.right),
                       inv, _and_guards(inv, g1, g2, n, False, False))


@_rhl_rule("Consequence", 1)
def _rhl_consequence(box: Dict, prem) -> RHLInstance:
    (j,) = prem
    n = store_domain(j.sig).size
    pre = _table_param(box, "Consequence", "pre", n)
    post = _table_param(box, "Consequence", "post", n)
    for k in range(n * n):
        if pre[k] and not j.pre[k]:
            raise RuleError("Consequence: the new precondition must entail the "
                            "premise precondition")
    for k in range(n * n):
        if j.post[k] and not post[k]:
            raise RuleError("Consequence: the premise postcondition must entail "
                            "the new postcondition")
    return RHLInstance(j.sig, j.left, j.right, pre, post)
