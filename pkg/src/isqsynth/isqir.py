"""ISQIR programs: recursive families of gate sequences.

Textual form::

    const [H 0; CX (- n 1) n]
    seq S1 S2
    relabel PERM S
    fix_k PERM [[base_0]; ...; [base_k-1]] SL SR
    oracle f

Gate arguments and permutations use the S-expression syntax of ``expr``.  A
gate name may carry a size parameter in braces (``SUB{2} 0 1 2 3 4 5``), which
fixes the member of a registered component family to use.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from . import expr as E
from .expr import NatExpr, PermExpr


class IsqirError(Exception):
    pass


class IllTyped(IsqirError):
    pass


class RecursionUnderflow(IsqirError):
    pass


@dataclass(frozen=True)
class Gate:
    name: str
    args: tuple = ()
    size: NatExpr | None = None

    def text(self) -> str:
        head = self.name if self.size is None else f"{self.name}{{{E.to_text(self.size)}}}"
        return " ".join([head] + [E.to_text(a) for a in self.args])


@dataclass(frozen=True)
class CGate:
    """Gate at a concrete size: integer qubits and the family index it was instantiated at."""
    name: str
    qubits: tuple
    param: int = 0

    def __str__(self) -> str:
        return f"{self.name} " + " ".join(map(str, self.qubits)) if self.qubits else self.name


class Program:
    pass


@dataclass(frozen=True)
class ConstProg(Program):
    gates: tuple


@dataclass(frozen=True)
class SeqProg(Program):
    first: Program
    second: Program


@dataclass(frozen=True)
class RelabelProg(Program):
    perm: PermExpr
    body: Program


@dataclass(frozen=True)
class FixProg(Program):
    k: int
    perm: PermExpr
    bases: tuple
    left: Program
    right: Program

    def __post_init__(self):
        if self.k not in (1, 2, 3) or len(self.bases) != self.k:
            raise IsqirError(f"fix_{self.k} needs {self.k} base programs")
        if contains_fix(self.left) or contains_fix(self.right):
            raise IsqirError("nested fixpoints are not supported")


@dataclass(frozen=True)
class OracleCall(Program):
    name: str = "f"


def const(*gates) -> ConstProg:
    return ConstProg(tuple(_gate(g) for g in gates))


def _gate(g) -> Gate:
    if isinstance(g, Gate):
        return g
    name, *args = g
    return Gate(name, tuple(E.nat(a) for a in args))


def contains_fix(p: Program) -> bool:
    if isinstance(p, FixProg):
        return True
    if isinstance(p, SeqProg):
        return contains_fix(p.first) or contains_fix(p.second)
    if isinstance(p, RelabelProg):
        return contains_fix(p.body)
    return False


def seq(*parts: Program) -> Program:
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = SeqProg(p, out)
    return out


def program_size(p: Program) -> int:
    """Count of gate and constructor nodes."""
    if isinstance(p, ConstProg):
        return max(len(p.gates), 1)
    if isinstance(p, SeqProg):
        return 1 + program_size(p.first) + program_size(p.second)
    if isinstance(p, RelabelProg):
        return 1 + E.perm_size(p.perm) + program_size(p.body)
    if isinstance(p, FixProg):
        return (1 + E.perm_size(p.perm) + sum(max(len(b), 1) for b in p.bases)
                + program_size(p.left) + program_size(p.right))
    return 1


# ---------------------------------------------------------------- semantics


def _eval_gates(gates: Sequence[Gate], n: int, widths=None) -> list[CGate]:
    """Concrete gates at level n.

    ``widths(name, param)`` gives the qubit count of gates written without
    arguments (registered component families); they then act on 0..w-1.
    """
    env = {"n": n}
    out = []
    for g in gates:
        if g.name == "ID":
            continue
        qs = tuple(E.eval_nat(a, env) for a in g.args)
        param = n if g.size is None else E.eval_nat(g.size, env)
        if not qs and widths is not None:
            w = widths(g.name, param)
            if w is not None:
                qs = tuple(range(w))
        out.append(CGate(g.name, qs, param))
    return out


def map_qb(table, gates: Sequence[CGate]) -> list[CGate]:
    """Relabel qubits by a concrete map (callable or sequence)."""
    f = table if callable(table) else table.__getitem__
    out = []
    for g in gates:
        if not g.qubits and not g.name.startswith("oracle:"):
            raise IsqirError(f"{g.name} has implicit qubits; instantiate with gate widths")
        qs = tuple(f(q) for q in g.qubits)
        if len(set(qs)) != len(set(g.qubits)):
            raise E.NonInjective(f"relabeling collapses qubits of {g}")
        out.append(CGate(g.name, qs, g.param))
    return out


def _perm_map(p: PermExpr, n: int):
    return lambda q: E.eval_perm(p, n, q)


def instantiate(s: Program, n: int, oracle: Sequence[CGate] | None = None, widths=None) -> list[CGate]:
    if n < 0:
        raise RecursionUnderflow(f"n={n}")
    if isinstance(s, ConstProg):
        return _eval_gates(s.gates, n, widths)
    if isinstance(s, SeqProg):
        return instantiate(s.first, n, oracle, widths) + instantiate(s.second, n, oracle, widths)
    if isinstance(s, RelabelProg):
        return map_qb(_perm_map(s.perm, n), instantiate(s.body, n, oracle, widths))
    if isinstance(s, FixProg):
        if n < s.k:
            return _eval_gates(s.bases[n], n, widths)
        # iterative unrolling keeps deep families linear in circuit size
        cur = [_eval_gates(b, i, widths) for i, b in enumerate(s.bases)]
        for m in range(s.k, n + 1):
            inner = map_qb(_perm_map(s.perm, m), cur[m - 1])
            cur.append(instantiate(s.left, m, oracle, widths) + inner + instantiate(s.right, m, oracle, widths))
        return cur[n]
    if isinstance(s, OracleCall):
        if oracle is None:
            return [CGate(f"oracle:{s.name}", (), n)]
        return list(oracle)
    raise TypeError(s)


def validate_well_typed(p: Sequence[CGate], dim: int, arity=None) -> bool:
    """All indices below dim, distinct per gate, and matching declared arity."""
    for g in p:
        if any(q >= dim or q < 0 for q in g.qubits):
            return False
        if len(set(g.qubits)) != len(g.qubits):
            return False
        if arity is not None:
            a = arity(g)
            if a is not None and a != len(g.qubits):
                return False
    return True


# ---------------------------------------------------------------- text


def to_text(p: Program) -> str:
    if isinstance(p, ConstProg):
        return "const " + _gates_text(p.gates)
    if isinstance(p, SeqProg):
        return f"seq ({to_text(p.first)}) ({to_text(p.second)})"
    if isinstance(p, RelabelProg):
        return f"relabel {E.to_text(p.perm)} ({to_text(p.body)})"
    if isinstance(p, FixProg):
        bases = "[" + "; ".join(_gates_text(b) for b in p.bases) + "]"
        return f"fix_{p.k} {E.to_text(p.perm)} {bases} ({to_text(p.left)}) ({to_text(p.right)})"
    if isinstance(p, OracleCall):
        return f"oracle {p.name}"
    raise TypeError(p)


def _gates_text(gates) -> str:
    return "[" + "; ".join(g.text() for g in gates) + "]"


_TOK = re.compile(r"\s*(?:([()\[\];{}])|([^\s()\[\];{}]+))")


def _tokens(text: str) -> list[str]:
    out, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _TOK.match(text, pos)
        if not m or m.end() == pos:
            raise E.ParseError(f"unexpected character at offset {pos}")
        out.append(m.group(1) or m.group(2))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokens(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, want=None):
        t = self.peek()
        if t is None:
            raise E.ParseError("unexpected end of program text")
        if want is not None and t != want:
            raise E.ParseError(f"expected {want!r}, got {t!r}")
        self.i += 1
        return t

    def sexp(self):
        t = self.take()
        if t != "(":
            return t
        items = []
        while self.peek() != ")":
            if self.peek() is None:
                raise E.ParseError("missing ')'")
            items.append(self.sexp())
        self.take(")")
        return items

    def nat(self) -> NatExpr:
        return E._to_nat(self.sexp())

    def perm(self) -> PermExpr:
        return E._to_perm(self.sexp())

    def program(self) -> Program:
        if self.peek() == "(":
            self.take("(")
            p = self.program()
            self.take(")")
            return p
        head = self.take()
        if head == "const":
            return ConstProg(self.gate_list())
        if head == "seq":
            return SeqProg(self.program(), self.program())
        if head == "relabel":
            return RelabelProg(self.perm(), self.program())
        if head.startswith("fix_"):
            if not head[4:].isdigit():
                raise E.ParseError(f"bad fixpoint form {head!r}")
            k = int(head[4:])
            perm = self.perm()
            self.take("[")
            bases = [self.gate_list()]
            while self.peek() == ";":
                self.take(";")
                bases.append(self.gate_list())
            self.take("]")
            return FixProg(k, perm, tuple(bases), self.program(), self.program())
        if head == "oracle":
            return OracleCall(self.take())
        raise E.ParseError(f"unknown program form {head!r}")

    def gate_list(self) -> tuple:
        self.take("[")
        gates = []
        while self.peek() != "]":
            gates.append(self.gate())
            if self.peek() == ";":
                self.take(";")
            elif self.peek() != "]":
                raise E.ParseError(f"expected ';' or ']', got {self.peek()!r}")
        self.take("]")
        return tuple(gates)

    def gate(self) -> Gate:
        name = self.take()
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
            raise E.ParseError(f"bad gate name {name!r}")
        size = None
        if self.peek() == "{":
            self.take("{")
            size = self.nat()
            self.take("}")
        args = []
        while self.peek() not in (";", "]", None):
            args.append(self.nat())
        return Gate(name, tuple(args), size)


def parse_program(text: str) -> Program:
    p = _Parser(text)
    prog = p.program()
    if p.peek() is not None:
        raise E.ParseError(f"trailing input at token {p.peek()!r}")
    return prog
