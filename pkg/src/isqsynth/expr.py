"""Symbolic expression trees over the free variables n, x, y.

Four sublanguages share this module:

* ``NatExpr``  natural-number expressions (bit vectors of unbounded width)
* ``BoolExpr`` Boolean formulas over ``NatExpr`` relations
* magnitude expressions, which are ``NatExpr`` values depending on ``n`` only
* ``PermExpr`` qubit relabelings built from transpositions and cyclic shifts

Every node is immutable and hashable with structural equality.  Bit 0 is the
least significant bit; ``V[hi:lo]`` reads bits ``lo..hi`` inclusive.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping

__all__ = [
    "ExprError", "DivisionByZero", "UnboundVariable", "NonInjective", "ParseError",
    "Node", "NatExpr", "BoolExpr", "PermExpr",
    "Var", "Const", "Delta", "Bit", "Slice", "Unary", "Bin", "Pow2", "Apply",
    "BConst", "And", "Or", "Not", "Rel",
    "PId", "PSwap", "PShift", "PComp",
    "Env", "N", "X", "Y", "TRUE", "FALSE",
    "nat", "var", "const", "delta", "pow2", "ite", "conj", "disj",
    "eval_nat", "eval_bool", "eval_expr", "free_vars", "substitute", "substitute_many",
    "simplify", "is_mag", "size",
    "to_text", "parse_nat", "parse_bool", "parse_perm",
    "eval_perm", "perm_table", "apply_perm_bits", "perm_forward", "perm_inverse",
    "perm_index_expr", "perm_size", "upper_bound", "Unbounded", "eval_vec",
]


class ExprError(Exception):
    pass


class DivisionByZero(ExprError, ZeroDivisionError):
    pass


class UnboundVariable(ExprError, KeyError):
    def __str__(self) -> str:
        return f"unbound variable {self.args[0]!r}"


class NonInjective(ExprError):
    pass


class ParseError(ExprError, ValueError):
    pass


def _node(cls):
    """Frozen dataclass with a cached structural hash."""
    cls = dataclass(frozen=True, eq=False, repr=False)(cls)
    names = tuple(f.name for f in dataclasses.fields(cls))
    tag = cls.__name__

    def __hash__(self):
        h = self.__dict__.get("_h")
        if h is None:
            h = hash((tag,) + tuple(getattr(self, k) for k in names))
            object.__setattr__(self, "_h", h)
        return h

    def __eq__(self, other):
        if self is other:
            return True
        if type(self) is not type(other) or hash(self) != hash(other):
            return False
        return all(getattr(self, k) == getattr(other, k) for k in names)

    cls.__hash__ = __hash__
    cls.__eq__ = __eq__
    cls._fields = names
    return cls


class Node:
    _fields: tuple = ()

    def children(self) -> tuple:
        return tuple(getattr(self, k) for k in self._fields)

    def __repr__(self) -> str:
        return to_text(self)

    __str__ = __repr__


# ---------------------------------------------------------------- naturals


class NatExpr(Node):
    def __add__(self, o): return Bin("+", self, nat(o))
    def __radd__(self, o): return Bin("+", nat(o), self)
    def __sub__(self, o): return Bin("-", self, nat(o))
    def __rsub__(self, o): return Bin("-", nat(o), self)
    def __mul__(self, o): return Bin("*", self, nat(o))
    def __rmul__(self, o): return Bin("*", nat(o), self)
    def __floordiv__(self, o): return Bin("div", self, nat(o))
    def __rfloordiv__(self, o): return Bin("div", nat(o), self)
    def __mod__(self, o): return Bin("mod", self, nat(o))
    def __rmod__(self, o): return Bin("mod", nat(o), self)
    def __and__(self, o): return Bin("&", self, nat(o))
    def __rand__(self, o): return Bin("&", nat(o), self)
    def __or__(self, o): return Bin("|", self, nat(o))
    def __ror__(self, o): return Bin("|", nat(o), self)
    def __xor__(self, o): return Bin("^", self, nat(o))
    def __rxor__(self, o): return Bin("^", nat(o), self)
    def __lshift__(self, o): return Bin("<<", self, nat(o))
    def __rlshift__(self, o): return Bin("<<", nat(o), self)
    def __rshift__(self, o): return Bin(">>", self, nat(o))
    def __rrshift__(self, o): return Bin(">>", nat(o), self)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return Slice(self, nat(k.start), nat(k.stop))
        return Bit(self, nat(k))

    def eq(self, o): return Rel("=", self, nat(o))
    def ne(self, o): return Rel("!=", self, nat(o))
    def lt(self, o): return Rel("<", self, nat(o))
    def le(self, o): return Rel("<=", self, nat(o))
    def gt(self, o): return Rel(">", self, nat(o))
    def ge(self, o): return Rel(">=", self, nat(o))


@_node
class Var(NatExpr):
    name: str


@_node
class Const(NatExpr):
    value: int

    def __post_init__(self):
        if not isinstance(self.value, int) or self.value < 0:
            raise ExprError(f"constant must be a natural number, got {self.value!r}")


@_node
class Delta(NatExpr):
    cond: "BoolExpr"


@_node
class Bit(NatExpr):
    base: NatExpr
    index: NatExpr


@_node
class Slice(NatExpr):
    base: NatExpr
    hi: NatExpr
    lo: NatExpr


UNARY_OPS = ("bnot", "redand", "redor", "redxor", "rev")


@_node
class Unary(NatExpr):
    op: str
    arg: NatExpr
    width: NatExpr


BIN_OPS = ("+", "-", "*", "div", "mod", "&", "|", "^", "<<", ">>")


@_node
class Bin(NatExpr):
    op: str
    left: NatExpr
    right: NatExpr


@_node
class Pow2(NatExpr):
    exp: NatExpr


@_node
class Apply(NatExpr):
    """Application of an uninterpreted unary function (the oracle ``f``)."""
    fn: str
    arg: NatExpr


# ---------------------------------------------------------------- booleans


class BoolExpr(Node):
    def __and__(self, o): return And((self, o))
    def __or__(self, o): return Or((self, o))
    def __invert__(self): return Not(self)

    def implies(self, o): return Or((Not(self), o))


@_node
class BConst(BoolExpr):
    value: bool


@_node
class And(BoolExpr):
    args: tuple


@_node
class Or(BoolExpr):
    args: tuple


@_node
class Not(BoolExpr):
    arg: BoolExpr


REL_OPS = ("=", "!=", "<", "<=", ">", ">=")


@_node
class Rel(BoolExpr):
    op: str
    left: NatExpr
    right: NatExpr


TRUE = BConst(True)
FALSE = BConst(False)

# ---------------------------------------------------------------- permutations


class PermExpr(Node):
    def then(self, other: "PermExpr") -> "PermExpr":
        return PComp(self, other)


@_node
class PId(PermExpr):
    pass


@_node
class PSwap(PermExpr):
    a: NatExpr
    b: NatExpr


@_node
class PShift(PermExpr):
    lo: NatExpr
    hi: NatExpr
    m: NatExpr


@_node
class PComp(PermExpr):
    """``first`` is applied before ``second``."""
    first: PermExpr
    second: PermExpr


# ---------------------------------------------------------------- builders

N = Var("n")
X = Var("x")
Y = Var("y")


def nat(v) -> NatExpr:
    if isinstance(v, NatExpr):
        return v
    if isinstance(v, bool):
        return Const(int(v))
    if isinstance(v, int):
        return Const(v)
    if isinstance(v, str):
        return Var(v)
    raise TypeError(f"cannot coerce {v!r} to NatExpr")


def var(name: str) -> Var:
    return Var(name)


def const(v: int) -> Const:
    return Const(v)


def delta(b: BoolExpr) -> Delta:
    return Delta(b)


def pow2(e) -> Pow2:
    return Pow2(nat(e))


def ite(c: BoolExpr, a, b) -> NatExpr:
    return Delta(c) * nat(a) + Delta(Not(c)) * nat(b)


def conj(parts: Iterable[BoolExpr]) -> BoolExpr:
    parts = tuple(parts)
    if not parts:
        return TRUE
    return parts[0] if len(parts) == 1 else And(parts)


def disj(parts: Iterable[BoolExpr]) -> BoolExpr:
    parts = tuple(parts)
    if not parts:
        return FALSE
    return parts[0] if len(parts) == 1 else Or(parts)


# ---------------------------------------------------------------- evaluation


@dataclass
class Env:
    n: int = 0
    x: int = 0
    y: int = 0
    extra: Mapping[str, int] = dataclasses.field(default_factory=dict)
    fns: Mapping[str, Callable[[int], int]] = dataclasses.field(default_factory=dict)

    def values(self) -> dict:
        d = {"n": self.n, "x": self.x, "y": self.y}
        d.update(self.extra)
        for k, v in d.items():
            if v < 0:
                raise ExprError(f"negative binding {k}={v}")
        return d


def _env_parts(env) -> tuple[dict, Mapping]:
    if isinstance(env, Env):
        return env.values(), env.fns
    if env is None:
        return {}, {}
    env = dict(env)
    fns = env.pop("__fns__", {})
    return env, fns


def _mask(w: int) -> int:
    return (1 << w) - 1


def _ev(e, v: dict, f: Mapping) -> int:
    t = type(e)
    if t is Const:
        return e.value
    if t is Var:
        try:
            return v[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if t is Bin:
        a = _ev(e.left, v, f)
        b = _ev(e.right, v, f)
        op = e.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b if a > b else 0
        if op == "*":
            return a * b
        if op == "div":
            if b == 0:
                raise DivisionByZero(f"division by zero in {e}")
            return a // b
        if op == "mod":
            if b == 0:
                raise DivisionByZero(f"modulo by zero in {e}")
            return a % b
        if op == "&":
            return a & b
        if op == "|":
            return a | b
        if op == "^":
            return a ^ b
        if op == "<<":
            return a << b
        return a >> b
    if t is Bit:
        return (_ev(e.base, v, f) >> _ev(e.index, v, f)) & 1
    if t is Delta:
        return 1 if _evb(e.cond, v, f) else 0
    if t is Slice:
        hi = _ev(e.hi, v, f)
        lo = _ev(e.lo, v, f)
        if hi < lo:
            return 0
        return (_ev(e.base, v, f) >> lo) & _mask(hi - lo + 1)
    if t is Pow2:
        return 1 << _ev(e.exp, v, f)
    if t is Unary:
        a = _ev(e.arg, v, f)
        w = _ev(e.width, v, f)
        a &= _mask(w)
        if e.op == "bnot":
            return _mask(w) - a
        if e.op == "redand":
            return 1 if a == _mask(w) else 0
        if e.op == "redor":
            return 1 if a else 0
        if e.op == "redxor":
            return bin(a).count("1") & 1
        return int(format(a, f"0{w}b")[::-1], 2) if w else 0
    if t is Apply:
        try:
            fn = f[e.fn]
        except KeyError:
            raise UnboundVariable(e.fn) from None
        r = int(fn(_ev(e.arg, v, f)))
        if r < 0:
            raise ExprError(f"function {e.fn} returned a negative value")
        return r
    raise TypeError(f"not a NatExpr: {e!r}")


def _evb(b, v: dict, f: Mapping) -> bool:
    t = type(b)
    if t is Rel:
        l = _ev(b.left, v, f)
        r = _ev(b.right, v, f)
        op = b.op
        if op == "=":
            return l == r
        if op == "!=":
            return l != r
        if op == "<":
            return l < r
        if op == "<=":
            return l <= r
        if op == ">":
            return l > r
        return l >= r
    if t is And:
        return all(_evb(a, v, f) for a in b.args)
    if t is Or:
        return any(_evb(a, v, f) for a in b.args)
    if t is Not:
        return not _evb(b.arg, v, f)
    if t is BConst:
        return b.value
    raise TypeError(f"not a BoolExpr: {b!r}")


def eval_nat(e: NatExpr, env) -> int:
    v, f = _env_parts(env)
    return _ev(e, v, f)


def eval_bool(b: BoolExpr, env) -> bool:
    v, f = _env_parts(env)
    return _evb(b, v, f)


def eval_expr(e, env):
    return eval_bool(e, env) if isinstance(e, BoolExpr) else eval_nat(e, env)


# ---------------------------------------------------------------- traversal


def free_vars(e) -> set[str]:
    out: set[str] = set()
    seen: set[int] = set()
    stack = [e]
    while stack:
        c = stack.pop()
        if id(c) in seen:
            continue
        seen.add(id(c))
        if type(c) is Var:
            out.add(c.name)
            continue
        for ch in c.children():
            if isinstance(ch, Node):
                stack.append(ch)
            elif isinstance(ch, tuple):
                stack.extend(ch)
    return out


def size(e, _memo=None) -> int:
    """Tree size; memoized on node identity so shared DAGs stay linear."""
    if not isinstance(e, Node):
        return 0
    memo = {} if _memo is None else _memo
    got = memo.get(id(e))
    if got is not None:
        return got
    n = 1
    for ch in e.children():
        if isinstance(ch, Node):
            n += size(ch, memo)
        elif isinstance(ch, tuple):
            n += sum(size(c, memo) for c in ch)
    memo[id(e)] = n
    return n


def _rebuild(e, fn):
    vals = []
    changed = False
    for ch in e.children():
        if isinstance(ch, Node):
            nc = fn(ch)
        elif isinstance(ch, tuple):
            nc = tuple(fn(c) for c in ch)
        else:
            nc = ch
        changed |= nc is not ch
        vals.append(nc)
    return type(e)(*vals) if changed else e


def substitute_many(e, mapping: Mapping[str, Any]):
    """Simultaneous capture-free substitution of variables."""
    mapping = {k: nat(v) for k, v in mapping.items()}
    memo: dict[int, Any] = {}

    def go(c):
        r = memo.get(id(c))
        if r is not None:
            return r
        if type(c) is Var:
            r = mapping.get(c.name, c)
        else:
            r = _rebuild(c, go)
        memo[id(c)] = r
        return r

    return go(e)


def substitute(e, name: str, replacement):
    return substitute_many(e, {name: replacement})


def is_mag(e: NatExpr) -> bool:
    return free_vars(e) <= {"n"}


# ---------------------------------------------------------------- simplify


def _c(e) -> int | None:
    return e.value if type(e) is Const else None


def _has_partial(e) -> bool:
    """True if evaluation may raise (division/modulo by a non-constant)."""
    got = e.__dict__.get("_partial")
    if got is not None:
        return got
    r = False
    if type(e) is Bin and e.op in ("div", "mod") and _c(e.right) in (None, 0):
        r = True
    elif type(e) is Apply:
        r = True
    else:
        for ch in e.children():
            if isinstance(ch, Node) and _has_partial(ch):
                r = True
                break
            if isinstance(ch, tuple) and any(_has_partial(c) for c in ch):
                r = True
                break
    object.__setattr__(e, "_partial", r)
    return r


def _split_const(e) -> tuple[NatExpr, int]:
    if type(e) is Bin and e.op == "+" and _c(e.right) is not None:
        return e.left, e.right.value
    if _c(e) is not None:
        return Const(0), e.value
    return e, 0


def _n_minus(e, n_min: int) -> int | None:
    """k if e is n - k with k <= n_min (so the subtraction never saturates)."""
    if (type(e) is Bin and e.op == "-" and type(e.left) is Var and e.left.name == "n"
            and _c(e.right) is not None and e.right.value <= n_min):
        return e.right.value
    return None


def _simp_bin(op, a, b, n_min: int = 0):
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        if op in ("div", "mod") and cb == 0:
            return Bin(op, a, b)
        if op == "<<" and cb > 4096:
            return Bin(op, a, b)
        return Const(_ev(Bin(op, a, b), {}, {}))
    if op == "+":
        if ca == 0:
            return b
        if cb == 0:
            return a
        if cb is not None and type(a) is Bin and a.op == "+" and _c(a.right) is not None:
            return Bin("+", a.left, Const(a.right.value + cb))
        if ca is not None:
            return _simp_bin("+", b, a, n_min)
        k = _n_minus(a, n_min)
        if cb is not None and k is not None:
            return _simp_bin("+", N, Const(cb - k)) if cb >= k else Bin("-", N, Const(k - cb))
    elif op == "-":
        if cb == 0:
            return a
        if a == b and not _has_partial(a):
            return Const(0)
        if cb is not None and type(a) is Bin and a.op == "+" and _c(a.right) is not None:
            k = a.right.value
            if k >= cb:
                return _simp_bin("+", a.left, Const(k - cb), n_min)
            return _simp_bin("-", a.left, Const(cb - k), n_min)
        k = _n_minus(a, n_min)
        if cb is not None and k is not None:
            return Bin("-", N, Const(k + cb))
        if ca == 0 and not _has_partial(b):
            return Const(0)
    elif op == "*":
        if (ca == 0 and not _has_partial(b)) or (cb == 0 and not _has_partial(a)):
            return Const(0)
        if ca == 1:
            return b
        if cb == 1:
            return a
    elif op == "div":
        if cb == 1:
            return a
        if type(a) is Pow2 and cb is not None and cb > 0 and cb & (cb - 1) == 0:
            k = cb.bit_length() - 1
            base, off = _split_const(a.exp)
            if off >= k:
                return Pow2(_simp_bin("+", base, Const(off - k), n_min))
    elif op == "mod":
        if cb == 1 and not _has_partial(a):
            return Const(0)
    elif op in ("|", "^"):
        if ca == 0:
            return b
        if cb == 0:
            return a
        if op == "^" and a == b and not _has_partial(a):
            return Const(0)
    elif op == "&":
        if (ca == 0 and not _has_partial(b)) or (cb == 0 and not _has_partial(a)):
            return Const(0)
    elif op in ("<<", ">>"):
        if cb == 0:
            return a
        if ca == 0 and not _has_partial(b):
            return Const(0)
        if op == "<<" and ca == 1:
            return Pow2(b)
    return Bin(op, a, b)


def _simp(e, memo, n_min):
    r = memo.get(id(e))
    if r is not None:
        return r
    r = _simp_node(_rebuild(e, lambda c: _simp(c, memo, n_min)), n_min)
    memo[id(e)] = r
    return r


def _simp_node(e, n_min=0):
    t = type(e)
    if t is Bin:
        return _simp_bin(e.op, e.left, e.right, n_min)
    if t is Delta:
        if type(e.cond) is BConst:
            return Const(int(e.cond.value))
        return e
    if t is Pow2:
        c = _c(e.exp)
        if c is not None and c <= 4096:
            return Const(1 << c)
        return e
    if t is Bit:
        if _c(e.base) is not None and _c(e.index) is not None:
            return Const((e.base.value >> e.index.value) & 1)
        if _c(e.base) == 0 and not _has_partial(e.index):
            return Const(0)
        return e
    if t is Slice:
        if all(_c(k) is not None for k in (e.base, e.hi, e.lo)):
            return Const(_ev(e, {}, {}))
        return e
    if t is Unary:
        if _c(e.arg) is not None and _c(e.width) is not None:
            return Const(_ev(e, {}, {}))
        return e
    if t is Rel:
        ca, cb = _c(e.left), _c(e.right)
        if ca is not None and cb is not None:
            return BConst(_evb(e, {}, {}))
        if e.left == e.right and not _has_partial(e.left):
            return BConst(e.op in ("=", "<=", ">="))
        if cb == 0 and e.op == "<":
            return FALSE if not _has_partial(e.left) else e
        if cb == 0 and e.op == ">=":
            return TRUE if not _has_partial(e.left) else e
        return e
    if t is Not:
        a = e.arg
        if type(a) is BConst:
            return BConst(not a.value)
        if type(a) is Not:
            return a.arg
        return e
    if t is And or t is Or:
        unit, zero = (True, False) if t is And else (False, True)
        out = []
        for a in e.args:
            parts = a.args if type(a) is t else (a,)
            for p in parts:
                if type(p) is BConst:
                    if p.value == zero:
                        return BConst(zero)
                    continue
                if p not in out:
                    out.append(p)
        if not out:
            return BConst(unit)
        if len(out) == 1:
            return out[0]
        return t(tuple(out))
    return e


def simplify(e, n_min: int = 0):
    """Shallow semantics-preserving normalization.

    ``n_min`` is a lower bound on n that callers may assume; it only licenses
    folding ``(n - k) + c`` when ``k <= n_min``.
    """
    return _simp(e, {}, n_min)


# ---------------------------------------------------------------- text form

_BIN_TEXT = {op: op for op in BIN_OPS}


def to_text(e) -> str:
    t = type(e)
    if t is Var:
        return e.name
    if t is Const:
        return str(e.value)
    if t is Delta:
        return f"(delta {to_text(e.cond)})"
    if t is Bit:
        return f"(bit {to_text(e.base)} {to_text(e.index)})"
    if t is Slice:
        return f"(slice {to_text(e.base)} {to_text(e.hi)} {to_text(e.lo)})"
    if t is Unary:
        return f"({e.op} {to_text(e.width)} {to_text(e.arg)})"
    if t is Bin:
        return f"({e.op} {to_text(e.left)} {to_text(e.right)})"
    if t is Pow2:
        return f"(pow2 {to_text(e.exp)})"
    if t is Apply:
        return f"(app {e.fn} {to_text(e.arg)})"
    if t is BConst:
        return "true" if e.value else "false"
    if t is And or t is Or:
        word = "and" if t is And else "or"
        return f"({word} " + " ".join(to_text(a) for a in e.args) + ")"
    if t is Not:
        return f"(not {to_text(e.arg)})"
    if t is Rel:
        return f"({e.op} {to_text(e.left)} {to_text(e.right)})"
    if t is PId:
        return "id"
    if t is PSwap:
        return f"(swap {to_text(e.a)} {to_text(e.b)})"
    if t is PShift:
        return f"(shift {to_text(e.lo)} {to_text(e.hi)} {to_text(e.m)})"
    if t is PComp:
        return f"(comp {to_text(e.first)} {to_text(e.second)})"
    raise TypeError(f"cannot print {e!r}")


_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_']*\Z")


def _tokenize(text: str) -> list[str]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"bad character at offset {pos}")
        out.append(m.group(m.lastindex))
        pos = m.end()
    return out


def _read(tokens: list[str], i: int):
    if i >= len(tokens):
        raise ParseError("unexpected end of input")
    tok = tokens[i]
    if tok == ")":
        raise ParseError("unexpected ')'")
    if tok != "(":
        return tok, i + 1
    items = []
    i += 1
    while True:
        if i >= len(tokens):
            raise ParseError("missing ')'")
        if tokens[i] == ")":
            return items, i + 1
        item, i = _read(tokens, i)
        items.append(item)


def _sexp(text: str):
    tokens = _tokenize(text)
    tree, i = _read(tokens, 0)
    if i != len(tokens):
        raise ParseError("trailing input")
    return tree


def _to_nat(t) -> NatExpr:
    if isinstance(t, str):
        if t.isdigit():
            return Const(int(t))
        if _IDENT.match(t) and t not in ("true", "false", "id"):
            return Var(t)
        raise ParseError(f"bad atom {t!r}")
    if not t or not isinstance(t[0], str):
        raise ParseError("expected operator")
    head, args = t[0], t[1:]

    def arity(k):
        if len(args) != k:
            raise ParseError(f"{head} takes {k} arguments")

    if head == "delta":
        arity(1)
        return Delta(_to_bool(args[0]))
    if head == "bit":
        arity(2)
        return Bit(_to_nat(args[0]), _to_nat(args[1]))
    if head == "slice":
        arity(3)
        return Slice(*(_to_nat(a) for a in args))
    if head in UNARY_OPS:
        arity(2)
        return Unary(head, _to_nat(args[1]), _to_nat(args[0]))
    if head in BIN_OPS:
        arity(2)
        return Bin(head, _to_nat(args[0]), _to_nat(args[1]))
    if head == "pow2":
        arity(1)
        return Pow2(_to_nat(args[0]))
    if head == "app":
        arity(2)
        if not isinstance(args[0], str):
            raise ParseError("function name expected")
        return Apply(args[0], _to_nat(args[1]))
    raise ParseError(f"unknown natural operator {head!r}")


def _to_bool(t) -> BoolExpr:
    if t == "true":
        return TRUE
    if t == "false":
        return FALSE
    if isinstance(t, str) or not t:
        raise ParseError(f"expected Boolean expression, got {t!r}")
    head, args = t[0], t[1:]
    if head in ("and", "or"):
        if len(args) < 2:
            raise ParseError(f"{head} needs two or more arguments")
        return (And if head == "and" else Or)(tuple(_to_bool(a) for a in args))
    if head == "not":
        if len(args) != 1:
            raise ParseError("not takes 1 argument")
        return Not(_to_bool(args[0]))
    if head in REL_OPS:
        if len(args) != 2:
            raise ParseError(f"{head} takes 2 arguments")
        return Rel(head, _to_nat(args[0]), _to_nat(args[1]))
    raise ParseError(f"unknown Boolean operator {head!r}")


def _to_perm(t) -> PermExpr:
    if t == "id":
        return PId()
    if isinstance(t, str) or not t:
        raise ParseError(f"expected permutation, got {t!r}")
    head, args = t[0], t[1:]
    if head == "swap" and len(args) == 2:
        return PSwap(_to_nat(args[0]), _to_nat(args[1]))
    if head == "shift" and len(args) == 3:
        return PShift(*(_to_nat(a) for a in args))
    if head == "comp" and len(args) == 2:
        return PComp(_to_perm(args[0]), _to_perm(args[1]))
    raise ParseError(f"bad permutation form {head!r}")


def parse_nat(text: str) -> NatExpr:
    return _to_nat(_sexp(text))


def parse_bool(text: str) -> BoolExpr:
    return _to_bool(_sexp(text))


def parse_perm(text: str) -> PermExpr:
    return _to_perm(_sexp(text))


# ---------------------------------------------------------------- permutations


def eval_perm(p: PermExpr, n: int, q: int) -> int:
    t = type(p)
    if t is PId:
        return q
    env = {"n": n}
    if t is PSwap:
        a, b = _ev(p.a, env, {}), _ev(p.b, env, {})
        return b if q == a else a if q == b else q
    if t is PShift:
        lo, hi, m = (_ev(k, env, {}) for k in (p.lo, p.hi, p.m))
        if lo <= q < hi:
            return (q - lo + m) % (hi - lo) + lo
        return q
    if t is PComp:
        return eval_perm(p.second, n, eval_perm(p.first, n, q))
    raise TypeError(f"not a permutation: {p!r}")


def perm_table(p: PermExpr, n: int, width: int) -> list[int]:
    table = [eval_perm(p, n, q) for q in range(width)]
    if sorted(table) != list(range(width)):
        raise NonInjective(f"{p} does not permute [0,{width}) at n={n}")
    return table


def apply_perm_bits(p: PermExpr, n: int, width: int, v: int) -> int:
    """Move bit q of v to bit p(q)."""
    out = 0
    for q, tq in enumerate(perm_table(p, n, width)):
        if (v >> q) & 1:
            out |= 1 << tq
    return out


def _swap_bits(v: NatExpr, a: NatExpr, b: NatExpr) -> NatExpr:
    t = v[a] ^ v[b]
    return v ^ (t << a) ^ (t << b)


def _rotate(v: NatExpr, lo: NatExpr, hi: NatExpr, m: NatExpr, inverse: bool) -> NatExpr:
    length = hi - lo
    guard = length + Delta(length.eq(0))
    r = m % guard
    if inverse:
        r = (length - r) % guard
    field = (v >> lo) % Pow2(length)
    rot = ((field << r) | (field >> (length - r))) % Pow2(length)
    return (v - (field << lo)) + (rot << lo)


def perm_forward(p: PermExpr, v: NatExpr) -> NatExpr:
    """Symbolic bit permutation: bit q of v moves to bit p(q)."""
    t = type(p)
    if t is PId:
        return v
    if t is PSwap:
        return _swap_bits(v, p.a, p.b)
    if t is PShift:
        return _rotate(v, p.lo, p.hi, p.m, inverse=False)
    if t is PComp:
        return perm_forward(p.second, perm_forward(p.first, v))
    raise TypeError(f"not a permutation: {p!r}")


def perm_inverse(p: PermExpr, v: NatExpr) -> NatExpr:
    t = type(p)
    if t is PId:
        return v
    if t is PSwap:
        return _swap_bits(v, p.a, p.b)
    if t is PShift:
        return _rotate(v, p.lo, p.hi, p.m, inverse=True)
    if t is PComp:
        return perm_inverse(p.first, perm_inverse(p.second, v))
    raise TypeError(f"not a permutation: {p!r}")


def perm_index_expr(p: PermExpr, q: NatExpr) -> NatExpr:
    """Symbolic image of qubit index q."""
    t = type(p)
    if t is PId:
        return q
    if t is PSwap:
        return ite(q.eq(p.a), p.b, ite(q.eq(p.b), p.a, q))
    if t is PShift:
        length = p.hi - p.lo
        inside = And((q.ge(p.lo), q.lt(p.hi)))
        rotated = (q - p.lo + p.m) % (length + Delta(length.eq(0))) + p.lo
        return ite(inside, rotated, q)
    if t is PComp:
        return perm_index_expr(p.second, perm_index_expr(p.first, q))
    raise TypeError(f"not a permutation: {p!r}")


def perm_size(p: PermExpr) -> int:
    if type(p) is PComp:
        return 1 + perm_size(p.first) + perm_size(p.second)
    return 1


# ---------------------------------------------------------------- bounds


class Unbounded(ExprError):
    pass


def upper_bound(e, bounds: Mapping[str, int], cap_bits: int = 4096, memo: dict | None = None) -> int:
    """Inclusive upper bound of a natural expression given variable maxima."""
    memo = {} if memo is None else memo

    def ub(c) -> int:
        r = memo.get(id(c))
        if r is not None:
            return r
        r = _ub(c)
        if r.bit_length() > cap_bits:
            raise Unbounded(f"value of {c} may exceed {cap_bits} bits")
        memo[id(c)] = r
        return r

    def _ub(c) -> int:
        t = type(c)
        if t is Const:
            return c.value
        if t is Var:
            if c.name not in bounds:
                raise Unbounded(f"no bound for {c.name}")
            return bounds[c.name]
        if t in (Delta, Bit):
            if t is Bit:
                ub(c.base)
                ub(c.index)
            return 1
        if t is Slice:
            ub(c.base)
            return (1 << (ub(c.hi) + 1)) - 1
        if t is Unary:
            ub(c.arg)
            if c.op in ("redand", "redor", "redxor"):
                ub(c.width)
                return 1
            return (1 << ub(c.width)) - 1
        if t is Pow2:
            return 1 << ub(c.exp)
        if t is Bin:
            a, b = ub(c.left), ub(c.right)
            op = c.op
            if op == "+":
                return a + b
            if op in ("-", "div", ">>"):
                return a
            if op == "*":
                return a * b
            if op == "mod":
                return min(a, max(b - 1, 0))
            if op == "&":
                return min(a, b)
            if op in ("|", "^"):
                return (1 << max(a, b).bit_length()) - 1
            if b > cap_bits:
                raise Unbounded(f"shift amount of {c} unbounded")
            return a << b
        if t is Apply:
            raise Unbounded("uninterpreted function")
        raise TypeError(f"not a NatExpr: {c!r}")

    if isinstance(e, BoolExpr):
        for ch in _nat_children(e):
            ub(ch)
        return 1
    return ub(e)


def _nat_children(b: BoolExpr):
    if type(b) is Rel:
        yield b.left
        yield b.right
    elif type(b) in (And, Or):
        for a in b.args:
            yield from _nat_children(a)
    elif type(b) is Not:
        yield from _nat_children(b.arg)


# ---------------------------------------------------------------- array evaluation


def eval_vec(e, values: Mapping[str, Any], fns: Mapping[str, Callable] | None = None):
    """Evaluate over numpy arrays of naturals (broadcasting).

    Callers pick the dtype: int64 when every intermediate fits in 62 bits,
    object arrays otherwise.
    """
    import numpy as np

    fns = fns or {}
    memo: dict[int, Any] = {}

    def ev(c):
        r = memo.get(id(c))
        if r is not None:
            return r
        r = _vec(c)
        memo[id(c)] = r
        return r

    def scalar(c) -> int:
        r = ev(c)
        if np.ndim(r) != 0:
            raise ExprError(f"{c} must not depend on array variables here")
        return int(r)

    def _vec(c):
        t = type(c)
        if t is Const:
            return c.value
        if t is Var:
            if c.name not in values:
                raise UnboundVariable(c.name)
            return values[c.name]
        if t is Bin:
            a, b = ev(c.left), ev(c.right)
            op = c.op
            if op == "+":
                return a + b
            if op == "-":
                d = a - b
                return np.where(d > 0, d, 0) if np.ndim(d) else max(d, 0)
            if op == "*":
                return a * b
            if op in ("div", "mod"):
                if np.any(np.asarray(b) == 0):
                    raise DivisionByZero(f"division by zero in {c}")
                return a // b if op == "div" else a % b
            if op == "&":
                return a & b
            if op == "|":
                return a | b
            if op == "^":
                return a ^ b
            if op == "<<":
                return a << b
            return a >> b
        if t is Bit:
            return (ev(c.base) >> ev(c.index)) & 1
        if t is Slice:
            hi, lo = ev(c.hi), ev(c.lo)
            base = ev(c.base)
            w = np.maximum(np.asarray(hi) - np.asarray(lo) + 1, 0) if np.ndim(hi) or np.ndim(lo) else max(hi - lo + 1, 0)
            one = base * 0 + 1 if np.ndim(base) else 1
            return (base >> lo) & ((one << w) - 1)
        if t is Delta:
            b = evb(c.cond)
            return b.astype(np.int64) if isinstance(b, np.ndarray) else int(b)
        if t is Pow2:
            e2 = ev(c.exp)
            return (np.ones_like(e2) << e2) if np.ndim(e2) else 1 << int(e2)
        if t is Unary:
            w = scalar(c.width)
            a = ev(c.arg) & ((1 << w) - 1)
            if c.op == "bnot":
                return ((1 << w) - 1) - a
            if c.op == "redand":
                r = a == ((1 << w) - 1)
            elif c.op == "redor":
                r = a != 0
            elif c.op == "redxor":
                acc = a * 0
                for i in range(w):
                    acc = acc ^ ((a >> i) & 1)
                return acc
            else:
                acc = a * 0
                for i in range(w):
                    acc = acc | (((a >> i) & 1) << (w - 1 - i))
                return acc
            return r.astype(np.int64) if isinstance(r, np.ndarray) else int(r)
        if t is Apply:
            if c.fn not in fns:
                raise UnboundVariable(c.fn)
            arg = ev(c.arg)
            if isinstance(arg, np.ndarray):
                # scalar functions are mapped elementwise
                return np.vectorize(fns[c.fn], otypes=[np.int64])(arg)
            return fns[c.fn](arg)
        raise TypeError(f"not a NatExpr: {c!r}")

    def evb(b):
        t = type(b)
        if t is BConst:
            return b.value
        if t is Rel:
            l, r = ev(b.left), ev(b.right)
            op = b.op
            if op == "=":
                return l == r
            if op == "!=":
                return l != r
            if op == "<":
                return l < r
            if op == "<=":
                return l <= r
            if op == ">":
                return l > r
            return l >= r
        if t is Not:
            return np.logical_not(evb(b.arg))
        if t is And:
            acc = True
            for a in b.args:
                acc = np.logical_and(acc, evb(a))
            return acc
        if t is Or:
            acc = False
            for a in b.args:
                acc = np.logical_or(acc, evb(a))
            return acc
        raise TypeError(f"not a BoolExpr: {b!r}")

    if isinstance(e, BoolExpr):
        return evb(e)
    return ev(e)
