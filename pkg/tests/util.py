"""Shared paths and loaders for the test suite."""

import os
import random
import shutil
from pathlib import Path

import pytest

from isqsynth import expr as E
from isqsynth import gates as G
from isqsynth import isqir as I
from isqsynth import ppsa as P
from isqsynth import smt
from isqsynth import spec as S

BENCH = Path(__file__).resolve().parent.parent / "benchmarks"

HAVE_SOLVER = bool(os.environ.get(smt.SOLVER_ENV) or shutil.which("z3"))

needs_solver = pytest.mark.skipif(not HAVE_SOLVER, reason="no SMT solver on PATH")


def spec_path(name: str) -> str:
    return str(BENCH / "specs" / f"{name}.spec")


def load_spec(name: str) -> S.CompiledSpec:
    return S.load_spec(spec_path(name))


def load_program(name: str) -> I.Program:
    return I.parse_program((BENCH / "programs" / f"{name}.isqir").read_text())


def zc_halpha() -> P.HAlpha:
    return P.halpha_from_json((BENCH / "halpha" / "zc.halpha.json").read_text())


def db_with_zc() -> G.GateDatabase:
    db = G.default_db()
    db.register_component(G.Component("ZC", load_program("zc"), zc_halpha()))
    return db


def db_with_hl() -> G.GateDatabase:
    db = G.default_db()
    db.register_component(G.Component("HL", load_program("hlayer"), load_spec("hlayer").halpha()))
    return db


# ---------------------------------------------------------------- random terms

_LEAF_VARS = ("n", "x", "y")


def random_nat(rng: random.Random, depth: int, vars_=_LEAF_VARS) -> E.NatExpr:
    """Random natural-number term; shifts and powers keep small right operands."""
    if depth <= 0 or rng.random() < 0.25:
        if vars_ and rng.random() < 0.5:
            return E.Var(rng.choice(vars_))
        return E.Const(rng.randrange(0, 20))
    kind = rng.randrange(9)
    sub = lambda: random_nat(rng, depth - 1, vars_)
    small = lambda: E.Const(rng.randrange(0, 6))
    if kind == 0:
        return E.Bin(rng.choice(("+", "-", "*", "&", "|", "^")), sub(), sub())
    if kind == 1:
        return E.Bin(rng.choice(("div", "mod")), sub(), E.Bin("+", sub(), E.Const(1)))
    if kind == 2:
        return E.Bin(rng.choice(("<<", ">>")), sub(), small())
    if kind == 3:
        return E.Bit(sub(), small())
    if kind == 4:
        lo = rng.randrange(0, 4)
        return E.Slice(sub(), E.Const(lo + rng.randrange(0, 4)), E.Const(lo))
    if kind == 5:
        return E.Pow2(small())
    if kind == 6:
        return E.Unary(rng.choice(E.UNARY_OPS), sub(), E.Const(rng.randrange(0, 6)))
    if kind == 7:
        return E.Delta(random_bool(rng, depth - 1, vars_))
    return E.Bin("+", sub(), sub())


def random_bool(rng: random.Random, depth: int, vars_=_LEAF_VARS) -> E.BoolExpr:
    if depth <= 0 or rng.random() < 0.5:
        return E.Rel(rng.choice(E.REL_OPS), random_nat(rng, depth - 1, vars_), random_nat(rng, depth - 1, vars_))
    k = rng.randrange(3)
    if k == 0:
        return E.Not(random_bool(rng, depth - 1, vars_))
    parts = tuple(random_bool(rng, depth - 1, vars_) for _ in range(2))
    return E.And(parts) if k == 1 else E.Or(parts)


# ---------------------------------------------------------------- reference evaluator
# Works on the printed S-expression with binary strings, sharing no code with expr.


def _sx(text):
    toks = text.replace("(", " ( ").replace(")", " ) ").split()

    def rd(i):
        if toks[i] != "(":
            return toks[i], i + 1
        out, i = [], i + 1
        while toks[i] != ")":
            t, i = rd(i)
            out.append(t)
        return out, i + 1

    return rd(0)[0]


def _bits(v: int, w: int) -> str:
    """w low bits of v, most significant first."""
    return "".join("1" if (v >> k) & 1 else "0" for k in reversed(range(w)))


def ref_eval(text: str, env: dict) -> int:
    def nat(t):
        if isinstance(t, str):
            return int(t) if t.isdigit() else env[t]
        h, a = t[0], t[1:]
        if h == "+":
            return nat(a[0]) + nat(a[1])
        if h == "-":
            return max(nat(a[0]) - nat(a[1]), 0)
        if h == "*":
            return nat(a[0]) * nat(a[1])
        if h == "div":
            return nat(a[0]) // nat(a[1])
        if h == "mod":
            return nat(a[0]) % nat(a[1])
        if h in ("&", "|", "^"):
            l, r = nat(a[0]), nat(a[1])
            w = max(l.bit_length(), r.bit_length(), 1)
            op = {"&": lambda p, q: p & q, "|": lambda p, q: p | q, "^": lambda p, q: p ^ q}[h]
            return int("".join(str(op(int(p), int(q))) for p, q in zip(_bits(l, w), _bits(r, w))), 2)
        if h == "<<":
            return nat(a[0]) * 2 ** nat(a[1])
        if h == ">>":
            return nat(a[0]) // 2 ** nat(a[1])
        if h == "bit":
            v, i = nat(a[0]), nat(a[1])
            s = bin(v)[2:][::-1]
            return int(s[i]) if i < len(s) else 0
        if h == "slice":
            v, hi, lo = nat(a[0]), nat(a[1]), nat(a[2])
            if hi < lo:
                return 0
            s = bin(v)[2:][::-1] + "0" * (hi + 1)
            return int(s[lo:hi + 1][::-1], 2)
        if h == "pow2":
            return 2 ** nat(a[0])
        if h == "delta":
            return 1 if boolean(a[0]) else 0
        if h in ("bnot", "redand", "redor", "redxor", "rev"):
            w, v = nat(a[0]), nat(a[1])
            s = _bits(v, w) if w else ""
            if h == "bnot":
                return int("".join("1" if c == "0" else "0" for c in s) or "0", 2)
            if h == "redand":
                return 1 if "0" not in s else 0
            if h == "redor":
                return 1 if "1" in s else 0
            if h == "redxor":
                return s.count("1") % 2
            return int(s[::-1] or "0", 2)
        raise ValueError(h)

    def boolean(t):
        if t in ("true", "false"):
            return t == "true"
        h, a = t[0], t[1:]
        if h == "and":
            return all(boolean(x) for x in a)
        if h == "or":
            return any(boolean(x) for x in a)
        if h == "not":
            return not boolean(a[0])
        l, r = nat(a[0]), nat(a[1])
        return {"=": l == r, "!=": l != r, "<": l < r, "<=": l <= r, ">": l > r, ">=": l >= r}[h]

    tree = _sx(text)
    if isinstance(tree, list) and tree[0] in ("and", "or", "not", "=", "!=", "<", "<=", ">", ">="):
        return int(boolean(tree))
    return nat(tree)
