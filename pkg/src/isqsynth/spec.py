"""Input-to-output specifications and their compilation to (h, alpha).

Grammar (ASCII aliases in brackets)::

    spec    := [name ':'] input ('->' | '↦') output ['where' bool]
    input   := ket+                      ket forms: |0> |1> |c_L> |A[L]>
    output  := branch (('⊎' | '(+)') branch)*
             | ('⊎' | 'U') '_{' v 'in' '{0,1}^' L '}' ['/sqrt(' E ')'] factor*
    branch  := factor+
    factor  := 'e^{' ['-'] [k] ('pi' | 'π') 'i' ['*' E] '}' | 'delta(' B ')' | '|' E ['_' L] '>'

Registers are laid out from qubit 0 upward in order of appearance.  Inside
expressions ``2^E`` is a power of two, ``xor``/``⊕`` is bitwise exclusive or,
``/`` and ``\\`` are integer division, ``parity(E)`` is the xor-reduction and
``V[i]``, ``V[hi:lo]`` select bits.  Bitwise ``|`` must be parenthesized
inside a ket.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from . import expr as E
from .expr import TRUE, BoolExpr, Const, NatExpr, X, Y, conj, simplify, substitute_many
from .ppsa import HAlpha, Phase, Ppsa, Term


class SpecError(Exception):
    def __init__(self, msg: str, line: int | None = None, col: int | None = None):
        self.line, self.col = line, col
        where = f" at {line}:{col}" if line is not None else ""
        super().__init__(f"{msg}{where}")


class SpecSyntaxError(SpecError):
    pass


class UndeclaredVariable(SpecError):
    pass


class LengthMismatch(SpecError):
    pass


class NonPpsaExpressible(SpecError):
    pass


# ---------------------------------------------------------------- AST


@dataclass(frozen=True)
class ConstKet:
    value: NatExpr
    length: NatExpr


@dataclass(frozen=True)
class VarKet:
    name: str
    length: NatExpr


@dataclass(frozen=True)
class OutKet:
    value: object          # NatExpr over register names
    length: NatExpr | None


@dataclass(frozen=True)
class PhaseFactor:
    num: object
    logden: NatExpr
    negative: bool = False


@dataclass(frozen=True)
class Branch:
    kets: tuple
    phases: tuple = ()
    guards: tuple = ()


@dataclass(frozen=True)
class SumOutput:
    var: str
    length: NatExpr
    body: Branch
    norm: NatExpr | None = None


@dataclass(frozen=True)
class SpecAst:
    name: str
    inputs: tuple
    output: object         # tuple of Branch (binary superposition) or SumOutput
    where: BoolExpr | None = None


@dataclass(frozen=True)
class Segment:
    name: str | None
    lo: NatExpr
    width: NatExpr

    @property
    def hi(self) -> NatExpr:
        return simplify(self.lo + self.width - 1)


@dataclass(frozen=True)
class LayoutMap:
    segments: tuple
    q_count: NatExpr

    def lookup(self, name: str) -> Segment:
        for s in self.segments:
            if s.name == name:
                return s
        raise UndeclaredVariable(f"register {name!r} is not declared in the input")


@dataclass(frozen=True)
class CompiledSpec:
    name: str
    q_count: NatExpr
    hypothesis: BoolExpr
    alpha: Ppsa
    layout: LayoutMap

    def halpha(self) -> HAlpha:
        return HAlpha(self.hypothesis, self.alpha, None, self.q_count)


# ---------------------------------------------------------------- lexer

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>\d+)
  | (?P<op>->|\(\+\)|>>|<<|>=|<=|!=|==|[-+*/\\%^&|<>=()\[\]{}:,_⊕⊎⊗↦δπ]|\.)
  | (?P<id>[^\W\d_][^\W_]*'?)
""", re.VERBOSE)

_KEYWORDS = {"and", "or", "not", "xor", "in", "where", "pi", "delta", "parity", "sqrt", "e", "i", "U"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _lex(text: str) -> list[_Tok]:
    out, pos, line, lstart = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise SpecSyntaxError(f"unexpected character {text[pos]!r}", line, pos - lstart + 1)
        kind = m.lastgroup
        if kind != "ws":
            out.append(_Tok(kind, m.group(), line, pos - lstart + 1))
        else:
            for i, ch in enumerate(m.group()):
                if ch == "\n":
                    line += 1
                    lstart = pos + i + 1
        pos = m.end()
    return out


# ---------------------------------------------------------------- parser


class _Parser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.i = 0
        self.ket_depth = 0     # >0 while inside |...> at paren depth 0
        self.paren = 0

    # -- helpers
    def peek(self, k: int = 0) -> _Tok | None:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def at(self, *texts: str) -> bool:
        t = self.peek()
        return t is not None and t.text in texts

    def err(self, msg: str) -> SpecSyntaxError:
        t = self.peek()
        if t is None:
            return SpecSyntaxError(msg + " (end of input)")
        return SpecSyntaxError(f"{msg}, got {t.text!r}", t.line, t.col)

    def take(self, text: str | None = None) -> _Tok:
        t = self.peek()
        if t is None or (text is not None and t.text != text):
            raise self.err(f"expected {text!r}" if text else "unexpected end")
        self.i += 1
        return t

    def ket_stop(self) -> bool:
        return self.ket_depth > 0 and self.paren == 0 and self.at(">", "|")

    # -- top level
    def spec(self) -> SpecAst:
        name = "spec"
        if self.peek(1) is not None and self.peek(1).text == ":" and self.peek().kind == "id":
            name = self.take().text
            self.take(":")
        inputs = []
        while self.at("|"):
            inputs.append(self.in_ket())
            if self.at("⊗"):
                self.take()
        if not inputs:
            raise self.err("expected an input ket")
        if not self.at("->", "↦"):
            raise self.err("expected '->'")
        self.take()
        output = self.output()
        where = None
        if self.at("where"):
            self.take()
            where = self.bool_expr()
        if self.peek() is not None:
            raise self.err("trailing input")
        return SpecAst(name, tuple(inputs), output, where)

    def in_ket(self):
        self.take("|")
        t = self.peek()
        if t is not None and t.kind == "id" and t.text not in _KEYWORDS and self.peek(1) and self.peek(1).text == "[":
            name = self.take().text
            self.take("[")
            length = self.nat_expr()
            self.take("]")
            self.take(">")
            return VarKet(name, length)
        self.ket_depth += 1
        val = self.nat_expr()
        self.ket_depth -= 1
        length: NatExpr = Const(1)
        if self.at("_"):
            self.take()
            length = self.length()
        elif not (isinstance(val, Const) and val.value in (0, 1)):
            raise self.err("constant kets wider than one bit need a length subscript")
        self.take(">")
        return ConstKet(val, length)

    def length(self) -> NatExpr:
        if self.at("{"):
            self.take()
            e = self.nat_expr()
            self.take("}")
            return e
        if self.at("("):
            self.take()
            self.paren += 1
            e = self.nat_expr()
            self.paren -= 1
            self.take(")")
            return e
        t = self.take()
        if t.kind == "num":
            return Const(int(t.text))
        if t.kind == "id":
            return E.Var(t.text)
        raise SpecSyntaxError(f"bad length {t.text!r}", t.line, t.col)

    def output(self):
        if self.at("⊎", "U") and self.peek(1) is not None and self.peek(1).text == "_":
            return self.sum_output()
        branches = [self.branch()]
        while self.at("(+)", "⊎"):
            self.take()
            branches.append(self.branch())
        return tuple(branches)

    def sum_output(self) -> SumOutput:
        self.take()
        self.take("_")
        self.take("{")
        v = self.take()
        if v.kind != "id":
            raise SpecSyntaxError("expected a bound variable", v.line, v.col)
        self.take("in")
        self.take("{")
        self.take("0")
        self.take(",")
        self.take("1")
        self.take("}")
        self.take("^")
        length = self.length()
        self.take("}")
        norm = None
        if self.at("/"):
            self.take()
            self.take("sqrt")
            self.take("(")
            self.paren += 1
            norm = self.nat_expr()
            self.paren -= 1
            self.take(")")
        return SumOutput(v.text, length, self.branch(), norm)

    def branch(self) -> Branch:
        kets, phases, guards = [], [], []
        while True:
            if self.at("|"):
                kets.append(self.out_ket())
            elif self.at("e") and self.peek(1) is not None and self.peek(1).text == "^":
                phases.append(self.phase())
            elif self.at("delta", "δ"):
                self.take()
                self.take("(")
                self.paren += 1
                guards.append(self.bool_expr())
                self.paren -= 1
                self.take(")")
            elif self.at("⊗"):
                self.take()
            elif self.at("("):
                raise self.err("parenthesized output branches are not supported")
            else:
                break
        if not kets:
            raise self.err("expected an output ket")
        return Branch(tuple(kets), tuple(phases), tuple(guards))

    def out_ket(self) -> OutKet:
        self.take("|")
        self.ket_depth += 1
        saved = self.paren
        self.paren = 0
        val = self.nat_expr()
        self.paren = saved
        self.ket_depth -= 1
        length = None
        if self.at("_"):
            self.take()
            length = self.length()
        self.take(">")
        return OutKet(val, length)

    def phase(self) -> PhaseFactor:
        self.take("e")
        self.take("^")
        self.take("{")
        neg = False
        if self.at("-"):
            self.take()
            neg = True
        k = 1
        if self.peek() is not None and self.peek().kind == "num":
            k = int(self.take().text)
        if k not in (1, 2):
            raise NonPpsaExpressible("phase coefficient must be pi or 2pi")
        if self.at("*"):
            self.take()
        self.take("pi" if self.at("pi") else "π")
        if self.at("*"):
            self.take()
        self.take("i")
        num: NatExpr = Const(1)
        w: NatExpr = Const(0)
        if self.at("*"):
            self.take()
            self.paren += 1
            e = self.nat_expr()
            self.paren -= 1
            if isinstance(e, E.Bin) and e.op == "div" and isinstance(e.right, E.Pow2):
                num, w = e.left, e.right.exp
            elif isinstance(e, E.Bin) and e.op == "div" and isinstance(e.right, Const) and e.right.value & (e.right.value - 1) == 0:
                num, w = e.left, Const(e.right.value.bit_length() - 1)
            else:
                num = e
        self.take("}")
        if k == 1:
            w = simplify(w + 1)
        return PhaseFactor(num, w, neg)

    # -- expressions (precedence climbing)
    def bool_expr(self) -> BoolExpr:
        left = self.bool_and()
        parts = [left]
        while self.at("or"):
            self.take()
            parts.append(self.bool_and())
        return parts[0] if len(parts) == 1 else E.Or(tuple(parts))

    def bool_and(self) -> BoolExpr:
        parts = [self.bool_not()]
        while self.at("and", "∧"):
            self.take()
            parts.append(self.bool_not())
        return parts[0] if len(parts) == 1 else E.And(tuple(parts))

    def bool_not(self) -> BoolExpr:
        if self.at("not"):
            self.take()
            return E.Not(self.bool_not())
        if self.at("(") and self._paren_is_bool():
            self.take("(")
            self.paren += 1
            b = self.bool_expr()
            self.paren -= 1
            self.take(")")
            return b
        if self.at("true"):
            self.take()
            return TRUE
        if self.at("false"):
            self.take()
            return E.FALSE
        a = self.nat_expr()
        ops = {"=": "=", "==": "=", "!=": "!=", "<": "<", "<=": "<=", ">": ">", ">=": ">="}
        t = self.peek()
        if t is None or t.text not in ops:
            raise self.err("expected a comparison")
        self.take()
        return E.Rel(ops[t.text], a, self.nat_expr())

    def _paren_is_bool(self) -> bool:
        depth = 0
        for t in self.toks[self.i:]:
            if t.text == "(":
                depth += 1
            elif t.text == ")":
                depth -= 1
                if depth == 0:
                    return False
            elif depth == 1 and t.text in ("=", "==", "!=", "<", "<=", ">", ">=", "and", "or", "not"):
                return True
        return False

    _LEVELS = [("|",), ("xor", "⊕"), ("&",), ("<<", ">>"), ("+", "-"), ("*", "/", "\\", "%")]
    _BIN = {"|": "|", "xor": "^", "⊕": "^", "&": "&", "<<": "<<", ">>": ">>", "+": "+", "-": "-",
            "*": "*", "/": "div", "\\": "div", "%": "mod"}

    def nat_expr(self, level: int = 0) -> NatExpr:
        if level == len(self._LEVELS):
            return self.power()
        left = self.nat_expr(level + 1)
        while self.at(*self._LEVELS[level]) and not self.ket_stop() and not self._phase_slash():
            op = self.take().text
            left = E.Bin(self._BIN[op], left, self.nat_expr(level + 1))
        return left

    def _phase_slash(self) -> bool:
        # '/sqrt(' after a sum binder is not a division
        return self.at("/") and self.peek(1) is not None and self.peek(1).text == "sqrt"

    def power(self) -> NatExpr:
        base = self.postfix()
        if self.at("^"):
            self.take()
            exp = self.power()
            if base != Const(2):
                raise NonPpsaExpressible("only powers of two are supported")
            return E.Pow2(exp)
        return base

    def postfix(self) -> NatExpr:
        e = self.atom()
        while self.at("["):
            self.take()
            saved = self.paren
            self.paren = 1
            hi = self.nat_expr()
            if self.at(":"):
                self.take()
                lo = self.nat_expr()
                self.paren = saved
                self.take("]")
                e = E.Slice(e, hi, lo)
            else:
                self.paren = saved
                self.take("]")
                e = E.Bit(e, hi)
        return e

    def atom(self) -> NatExpr:
        t = self.peek()
        if t is None:
            raise self.err("expected an expression")
        if t.kind == "num":
            self.take()
            return Const(int(t.text))
        if t.text == "(":
            self.take()
            self.paren += 1
            e = self.nat_expr()
            self.paren -= 1
            self.take(")")
            return e
        if t.text in ("delta", "δ"):
            self.take()
            self.take("(")
            self.paren += 1
            b = self.bool_expr()
            self.paren -= 1
            self.take(")")
            return E.Delta(b)
        if t.text == "parity":
            self.take()
            self.take("(")
            self.paren += 1
            a = self.nat_expr()
            self.paren -= 1
            self.take(")")
            return E.Unary("redxor", a, E.Var("__width__"))
        if t.kind == "id" and t.text not in _KEYWORDS:
            self.take()
            return E.Var(t.text)
        raise self.err("expected an expression")


def parse_spec(text: str) -> SpecAst:
    return _Parser(text).spec()


# ---------------------------------------------------------------- compilation


def _field(v: NatExpr, lo: NatExpr, width: NatExpr) -> NatExpr:
    if width == Const(1):
        return simplify(E.Bit(v, lo))
    return simplify((v >> lo) % E.Pow2(width)) if lo != Const(0) else simplify(v % E.Pow2(width))


def _sum_width(ws: Sequence[NatExpr]) -> NatExpr:
    out: NatExpr = Const(0)
    for w in ws:
        out = out + w
    return simplify(out)


def _same_for_small_n(a: NatExpr, b: NatExpr, ns=range(0, 9)) -> bool:
    return all(E.eval_nat(a, {"n": n}) == E.eval_nat(b, {"n": n}) for n in ns)


def _check_lengths(e, where: str) -> None:
    bad = E.free_vars(e) - {"n"}
    if bad:
        raise LengthMismatch(f"{where} length uses {sorted(bad)}; only n and constants are allowed")


def derive_layout(inputs: Sequence) -> tuple[LayoutMap, BoolExpr]:
    segs, conds = [], []
    lo: NatExpr = Const(0)
    names = set()
    for k in inputs:
        _check_lengths(k.length, "input")
        if isinstance(k, VarKet):
            if k.name in names or k.name == "n":
                raise SpecError(f"register name {k.name!r} is reserved or repeated")
            names.add(k.name)
            segs.append(Segment(k.name, lo, k.length))
        else:
            if E.free_vars(k.value) - {"n"}:
                raise UndeclaredVariable(f"input constant uses {sorted(E.free_vars(k.value) - {'n'})}")
            segs.append(Segment(None, lo, k.length))
            conds.append(_field(X, lo, k.length).eq(simplify(k.value)))
        lo = simplify(lo + k.length)
    q = lo
    lim = E.Pow2(q)
    h = conj(conds + [X.lt(lim), Y.lt(lim)])
    return LayoutMap(tuple(segs), q), h


def _register_map(layout: LayoutMap, var: NatExpr = X) -> dict:
    return {s.name: _field(var, s.lo, s.width) for s in layout.segments if s.name}


def _bind(e, regs: dict, widths: dict, q: NatExpr):
    """Replace register names by x-fields and fill xor-reduction widths."""
    def width_of(arg):
        if isinstance(arg, E.Var) and arg.name in widths:
            return widths[arg.name]
        return q

    def fill(node):
        if isinstance(node, E.Unary) and node.width == E.Var("__width__"):
            return E.Unary(node.op, fill(node.arg), width_of(node.arg))
        if isinstance(node, E.Node):
            return E._rebuild(node, fill)
        return node

    e = fill(e)
    unknown = E.free_vars(e) - set(regs) - {"n"}
    if unknown:
        raise UndeclaredVariable(f"undeclared variable(s) {sorted(unknown)}")
    return simplify(substitute_many(e, regs))


def _phase_of(factors: Sequence[PhaseFactor], regs, widths, q) -> Phase:
    total = Phase()
    for f in factors:
        num = _bind(f.num, regs, widths, q)
        w = simplify(f.logden)
        if f.negative:
            mod = E.Pow2(w)
            num = simplify(mod - num % mod)
        total = total + Phase(num, w)
    return total.simplified()


def compile_output(output, layout: LayoutMap, widths_in: dict) -> Ppsa:
    q = layout.q_count
    regs = _register_map(layout)
    widths = dict(widths_in)
    if isinstance(output, SumOutput):
        _check_lengths(output.length, "binder")
        branches = [output.body]
        bound = output.var
        if bound in regs or bound == "n":
            raise SpecError(f"bound variable {bound!r} shadows a register")
        widths[bound] = output.length
    else:
        branches = list(output)
        bound = None
    terms = []
    for br in branches:
        kets = br.kets
        ket_widths = []
        for j, k in enumerate(kets):
            if k.length is not None:
                _check_lengths(k.length, "output")
                ket_widths.append(k.length)
            elif isinstance(k.value, E.Var) and k.value.name in widths:
                ket_widths.append(widths[k.value.name])
            elif isinstance(k.value, Const) and k.value.value in (0, 1) and len(kets) != len(layout.segments):
                ket_widths.append(Const(1))
            elif len(kets) == len(layout.segments):
                ket_widths.append(layout.segments[j].width)
            else:
                raise LengthMismatch(f"cannot infer the width of output ket {j}")
        if not _same_for_small_n(_sum_width(ket_widths), q):
            raise LengthMismatch("output width differs from input width")
        offs, lo = [], Const(0)
        for w in ket_widths:
            offs.append(lo)
            lo = simplify(lo + w)
        binding = dict(regs)
        if bound is not None:
            hits = [j for j, k in enumerate(kets) if k.value == E.Var(bound)]
            if not hits:
                raise NonPpsaExpressible(f"bound variable {bound} must appear alone in an output ket")
            j = hits[0]
            if not _same_for_small_n(ket_widths[j], output.length):
                raise LengthMismatch(f"ket holding {bound} has the wrong width")
            binding[bound] = _field(Y, offs[j], ket_widths[j])
        guards = []
        for j, k in enumerate(kets):
            if bound is not None and k.value == E.Var(bound):
                continue
            val = _bind(k.value, binding, widths, q)
            w = ket_widths[j]
            plain = isinstance(val, Const) or (
                isinstance(k.value, E.Var) and k.value.name in widths
                and _same_for_small_n(widths[k.value.name], w))
            if not plain:
                val = simplify(val % E.Pow2(w))
            guards.append(_field(Y, offs[j], w).eq(val))
        guards += [_bind(g, binding, widths, q) for g in br.guards]
        phase = _phase_of(br.phases, binding, widths, q)
        terms.append(Term(simplify(conj(guards)), phase))
    if isinstance(output, SumOutput):
        beta = output.norm if output.norm is not None else E.Pow2(output.length)
        if E.free_vars(beta) - {"n"}:
            raise NonPpsaExpressible("normalization may only depend on n")
    else:
        beta = Const(len(branches))
    return Ppsa(simplify(beta), tuple(terms))


def compile_spec(text: str) -> CompiledSpec:
    ast = parse_spec(text)
    layout, h = derive_layout(ast.inputs)
    widths = {k.name: k.length for k in ast.inputs if isinstance(k, VarKet)}
    alpha = compile_output(ast.output, layout, widths)
    if ast.where is not None:
        regs = _register_map(layout)
        extra = _bind(ast.where, regs, widths, layout.q_count)
        if "y" in E.free_vars(extra):
            raise SpecError("where-clause may only mention input registers")
        h = simplify(conj([extra, h]))
    return CompiledSpec(ast.name, layout.q_count, h, alpha, layout)


compile = compile_spec


def load_spec(path: str) -> CompiledSpec:
    with open(path, encoding="utf-8") as fh:
        return compile_spec(fh.read())


def column_norms(cs: CompiledSpec, n: int, max_qubits: int = 10) -> dict[int, float]:
    """Squared 2-norm of column x for every x admitted by the hypothesis."""
    q = E.eval_nat(cs.q_count, {"n": n})
    if q > max_qubits:
        raise ValueError(f"{q} qubits is too many for a dense norm check")
    import numpy as np
    from .ppsa import amplitude_grid, eval_hypothesis_grid
    idx = np.arange(1 << q)
    hx = eval_hypothesis_grid(cs.hypothesis, n, idx, idx).any(axis=0)
    cols = idx[hx]
    if cols.size == 0:
        return {}
    m = amplitude_grid(cs.alpha, n, cols, idx)
    return {int(x): float(v) for x, v in zip(cols, (np.abs(m) ** 2).sum(axis=0))}
