"""Validity checking through an external SMT-LIB2 solver process.

Two encodings are provided:

``bounded``  n is instantiated for each value up to ``n_max`` and every
             variable becomes a fixed-width bit-vector wide enough that no
             intermediate value overflows.
``symbolic`` naturals become non-negative integers, ``2^e`` an uninterpreted
             function constrained by recursion axioms.
"""

from __future__ import annotations

import itertools
import os
import select
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping

from . import expr as E
from .expr import (
    And, Apply, BConst, Bin, Bit, BoolExpr, Const, Delta, NatExpr, Not, Or, Pow2,
    Slice, Unary, Var,
)

SOLVER_ENV = "ISQSYNTH_SOLVER"


class Verdict(str, Enum):
    VALID = "valid"
    INVALID = "invalid"
    UNKNOWN = "unknown"


@dataclass
class SolverResult:
    verdict: Verdict
    counterexample: dict | None = None
    detail: str = ""
    scripts: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.verdict is Verdict.VALID

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "counterexample": self.counterexample, "detail": self.detail}


@dataclass
class SolverConfig:
    mode: str = "bounded"
    n_max: int = 8
    timeout_ms: int = 60_000
    command: list | None = None
    dump_dir: str | None = None
    keep_scripts: bool = False
    max_bits: int = 4096

    def launch(self) -> list[str]:
        if self.command:
            return list(self.command)
        path = os.environ.get(SOLVER_ENV) or shutil.which("z3")
        if not path:
            raise SolverMissing(f"no solver found; set {SOLVER_ENV}")
        return [path, "-in", "-smt2"]


class SmtError(Exception):
    pass


class SolverMissing(SmtError):
    pass


class UnsupportedConstruct(SmtError):
    pass


# ---------------------------------------------------------------- solver process


class Session:
    """One solver process; not shared between threads."""

    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        self.proc = subprocess.Popen(cfg.launch(), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     stderr=subprocess.STDOUT, text=True, bufsize=1)
        self._buf = ""
        self.log: list[str] = []
        self.send("(set-option :print-success false)")

    def send(self, text: str) -> None:
        self.log.append(text)
        try:
            self.proc.stdin.write(text + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SmtError(f"solver died: {exc}") from exc

    def _read_sexpr(self, deadline: float) -> str:
        fd = self.proc.stdout.fileno()
        while True:
            text = self._buf.lstrip()
            if text:
                if text[0] != "(":
                    line, sep, rest = text.partition("\n")
                    if sep:
                        self._buf = rest
                        return line.strip()
                else:
                    depth = 0
                    for i, ch in enumerate(text):
                        depth += ch == "("
                        depth -= ch == ")"
                        if depth == 0:
                            self._buf = text[i + 1:]
                            return text[:i + 1]
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError("solver did not answer in time")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise TimeoutError("solver did not answer in time")
            chunk = os.read(fd, 65536).decode()
            if not chunk:
                raise SmtError("solver closed its output: " + self._buf.strip())
            self._buf += chunk

    def ask(self, command: str, slack_s: float = 5.0) -> str:
        self.send(command)
        deadline = time.monotonic() + self.cfg.timeout_ms / 1000 + slack_s
        out = self._read_sexpr(deadline)
        if out.startswith("(error"):
            raise SmtError(out)
        return out

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.write("(exit)\n")
                self.proc.stdin.flush()
                self.proc.wait(timeout=1)
            except Exception:
                self.proc.kill()
                self.proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# ---------------------------------------------------------------- shared-term emission


class _Emitter:
    """Emits terms with common subterms hoisted into define-fun."""

    def __init__(self, term_fn):
        self.term_fn = term_fn
        self.defs: list[str] = []
        self.names: dict[Any, str] = {}
        self.counts: dict[Any, int] = {}
        self._k = itertools.count()

    def count(self, e) -> None:
        stack = [e]
        while stack:
            c = stack.pop()
            k = self.counts.get(c, 0)
            self.counts[c] = k + 1
            if k:
                continue
            for ch in c.children():
                if isinstance(ch, E.Node):
                    stack.append(ch)
                elif isinstance(ch, tuple):
                    stack.extend(ch)

    def emit(self, e) -> str:
        name = self.names.get(e)
        if name is not None:
            return name
        text, sort = self.term_fn(e, self.emit)
        if self.counts.get(e, 0) > 1 and len(text) > 24:
            name = f"_t{next(self._k)}"
            self.defs.append(f"(define-fun {name} () {sort} {text})")
            self.names[e] = name
            return name
        return text


# ---------------------------------------------------------------- bit-vector encoding


def _bv(v: int, w: int) -> str:
    return f"(_ bv{v} {w})"


def bv_term_fn(width: int):
    one, zero = _bv(1, width), _bv(0, width)

    def fn(e, rec):
        t = type(e)
        if isinstance(e, BoolExpr):
            sort = "Bool"
            if t is BConst:
                return ("true" if e.value else "false"), sort
            if t is Not:
                return f"(not {rec(e.arg)})", sort
            if t is And or t is Or:
                word = "and" if t is And else "or"
                return f"({word} " + " ".join(rec(a) for a in e.args) + ")", sort
            l, r = rec(e.left), rec(e.right)
            op = {"=": "=", "<": "bvult", "<=": "bvule", ">": "bvugt", ">=": "bvuge"}.get(e.op)
            if op is None:
                return f"(not (= {l} {r}))", sort
            return f"({op} {l} {r})", sort
        sort = f"(_ BitVec {width})"
        if t is Const:
            return _bv(e.value, width), sort
        if t is Var:
            return e.name, sort
        if t is Delta:
            return f"(ite {rec(e.cond)} {one} {zero})", sort
        if t is Bin:
            l, r = rec(e.left), rec(e.right)
            op = e.op
            if op == "-":
                return f"(ite (bvuge {l} {r}) (bvsub {l} {r}) {zero})", sort
            name = {"+": "bvadd", "*": "bvmul", "div": "bvudiv", "mod": "bvurem", "&": "bvand",
                    "|": "bvor", "^": "bvxor", "<<": "bvshl", ">>": "bvlshr"}[op]
            return f"({name} {l} {r})", sort
        if t is Bit:
            return f"(bvand (bvlshr {rec(e.base)} {rec(e.index)}) {one})", sort
        if t is Slice:
            hi, lo = rec(e.hi), rec(e.lo)
            mask = f"(bvsub (bvshl {one} (bvadd (bvsub {hi} {lo}) {one})) {one})"
            return f"(ite (bvuge {hi} {lo}) (bvand (bvlshr {rec(e.base)} {lo}) {mask}) {zero})", sort
        if t is Pow2:
            return f"(bvshl {one} {rec(e.exp)})", sort
        if t is Unary:
            return _bv_unary(e, rec, width), sort
        if t is Apply:
            raise UnsupportedConstruct("uninterpreted function application")
        raise TypeError(e)

    return fn


def _bv_unary(e: Unary, rec, width: int) -> str:
    one, zero = _bv(1, width), _bv(0, width)
    v = rec(e.arg)
    if isinstance(e.width, Const):
        w = e.width.value
        if w > width:
            raise UnsupportedConstruct("reduction width exceeds encoding width")
        mask = _bv((1 << w) - 1, width)
        if e.op == "bnot":
            return f"(bvsub {mask} (bvand {v} {mask}))"
        if e.op == "redand":
            return f"(ite (= (bvand {v} {mask}) {mask}) {one} {zero})"
        if e.op == "redor":
            return f"(ite (= (bvand {v} {mask}) {zero}) {zero} {one})"
        if w == 0:
            return zero
        bits = [f"((_ extract {i} {i}) {v})" for i in range(w)]
        if e.op == "redxor":
            body = bits[0] if w == 1 else "(bvxor " + " ".join(bits) + ")"
            return f"((_ zero_extend {width - 1}) {body})"
        body = bits[0] if w == 1 else "(concat " + " ".join(bits) + ")"
        return body if w == width else f"((_ zero_extend {width - w}) {body})"
    w = rec(e.width)
    mask = f"(bvsub (bvshl {one} {w}) {one})"
    if e.op == "bnot":
        return f"(bvsub {mask} (bvand {v} {mask}))"
    if e.op == "redand":
        return f"(ite (= (bvand {v} {mask}) {mask}) {one} {zero})"
    if e.op == "redor":
        return f"(ite (= (bvand {v} {mask}) {zero}) {zero} {one})"
    terms = []
    for i in range(width):
        bit = f"(bvand (bvlshr {v} {_bv(i, width)}) {one})"
        live = f"(bvult {_bv(i, width)} {w})"
        if e.op == "redxor":
            terms.append(f"(ite {live} {bit} {zero})")
        else:
            pos = f"(bvsub (bvsub {w} {one}) {_bv(i, width)})"
            terms.append(f"(ite {live} (bvshl {bit} {pos}) {zero})")
    op = "bvxor" if e.op == "redxor" else "bvor"
    return terms[0] if len(terms) == 1 else f"({op} " + " ".join(terms) + ")"


# ---------------------------------------------------------------- integer encoding

POW2_AXIOMS = (
    "(declare-fun pow2 (Int) Int)",
    "(assert (= (pow2 0) 1))",
    "(assert (forall ((m Int)) (! (=> (>= m 0) (= (pow2 (+ m 1)) (* 2 (pow2 m)))) :pattern ((pow2 (+ m 1))))))",
    "(assert (forall ((m Int)) (! (=> (>= m 0) (>= (pow2 m) 1)) :pattern ((pow2 m)))))",
)

POW2_REC = "(define-fun-rec pow2 ((m Int)) Int (ite (<= m 0) 1 (* 2 (pow2 (- m 1)))))"


def _bitlike(e) -> bool:
    """Value provably in {0, 1}."""
    t = type(e)
    if t in (Bit, Delta):
        return True
    if t is Const:
        return e.value in (0, 1)
    if t is Unary and e.op in ("redand", "redor", "redxor"):
        return True
    if t is Bin and e.op in ("&", "*"):
        return _bitlike(e.left) and _bitlike(e.right)
    if t is Bin and e.op in ("^", "|"):
        return _bitlike(e.left) and _bitlike(e.right)
    return False


def _shifted_bit(e):
    """(b, k) if e = b << k with b bit-like."""
    if type(e) is Bin and e.op == "<<" and _bitlike(e.left):
        return e.left, e.right
    if _bitlike(e):
        return e, Const(0)
    return None


def int_term_fn(e, rec):
    t = type(e)
    if isinstance(e, BoolExpr):
        sort = "Bool"
        if t is BConst:
            return ("true" if e.value else "false"), sort
        if t is Not:
            return f"(not {rec(e.arg)})", sort
        if t is And or t is Or:
            word = "and" if t is And else "or"
            return f"({word} " + " ".join(rec(a) for a in e.args) + ")", sort
        l, r = rec(e.left), rec(e.right)
        if e.op == "!=":
            return f"(not (= {l} {r}))", sort
        return f"({e.op} {l} {r})", sort
    sort = "Int"
    if t is Const:
        return str(e.value), sort
    if t is Var:
        return e.name, sort
    if t is Delta:
        return f"(ite {rec(e.cond)} 1 0)", sort
    if t is Pow2:
        return f"(pow2 {rec(e.exp)})", sort
    if t is Bit:
        return f"(mod (div {rec(e.base)} (pow2 {rec(e.index)})) 2)", sort
    if t is Slice:
        hi, lo = rec(e.hi), rec(e.lo)
        body = f"(mod (div {rec(e.base)} (pow2 {lo})) (pow2 (+ (- {hi} {lo}) 1)))"
        return f"(ite (>= {hi} {lo}) {body} 0)", sort
    if t is Unary:
        if e.op == "bnot":
            w = rec(e.width)
            return f"(- (- (pow2 {w}) 1) (mod {rec(e.arg)} (pow2 {w})))", sort
        raise UnsupportedConstruct(f"{e.op} has no integer encoding")
    if t is Apply:
        raise UnsupportedConstruct("uninterpreted function application")
    op = e.op
    l, r = rec(e.left), rec(e.right)
    if op == "+":
        return f"(+ {l} {r})", sort
    if op == "-":
        return f"(ite (>= {l} {r}) (- {l} {r}) 0)", sort
    if op == "*":
        return f"(* {l} {r})", sort
    if op == "div":
        return f"(div {l} {r})", sort
    if op == "mod":
        return f"(mod {l} {r})", sort
    if op == "<<":
        return f"(* {l} (pow2 {r}))", sort
    if op == ">>":
        return f"(div {l} (pow2 {r}))", sort
    if _bitlike(e.left) and _bitlike(e.right):
        if op == "&":
            return f"(* {l} {r})", sort
        if op == "|":
            return f"(- (+ {l} {r}) (* {l} {r}))", sort
        return f"(- (+ {l} {r}) (* 2 {l} {r}))", sort
    for a, b in ((e.left, e.right), (e.right, e.left)):
        sb = _shifted_bit(b)
        if sb is None:
            continue
        bit, k = sb
        av, bv, kv = rec(a), rec(bit), rec(k)
        abit = f"(mod (div {av} (pow2 {kv})) 2)"
        val = f"(* {bv} (pow2 {kv}))"
        if op == "&":
            return f"(* {val} {abit})", sort
        if op == "|":
            return f"(- (+ {av} {val}) (* {val} {abit}))", sort
        return f"(- (+ {av} {val}) (* 2 {val} {abit}))", sort
    raise UnsupportedConstruct(f"bitwise {op} between wide operands")


# ---------------------------------------------------------------- validity


_dump_counter = itertools.count()


def _widthfn(w) -> Callable[[int], int]:
    if w is None:
        return lambda n: None
    if callable(w):
        return w
    if isinstance(w, int):
        return lambda n: w
    return lambda n: E.eval_nat(w, {"n": n})


def _dump(cfg: SolverConfig, script: str, tag: str) -> None:
    if cfg.dump_dir:
        d = Path(cfg.dump_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"obligation_{next(_dump_counter):05d}_{tag}.smt2").write_text(script + "\n")


def _parse_value(text: str) -> int | bool:
    text = text.strip()
    if text in ("true", "false"):
        return text == "true"
    if text.startswith("#b"):
        return int(text[2:], 2)
    if text.startswith("#x"):
        return int(text[2:], 16)
    if text.startswith("(_ bv"):
        return int(text[5:].split()[0])
    if text.startswith("(-"):
        return -_parse_value(text[2:-1])
    return int(text)


def _parse_model(text: str, names: list[str]) -> dict:
    tree, _ = E._read(E._tokenize(text), 0)
    out = {}
    for item in tree:
        name = item[0]
        val = item[1]
        out[name] = _parse_value(_flatten(val))
    return {k: out[k] for k in names if k in out}


def _replay(f: BoolExpr, model: dict) -> bool | None:
    """True if the model falsifies f; None if evaluation fails."""
    try:
        return not E.eval_bool(f, model)
    except E.ExprError:
        return None


def check_valid(f: BoolExpr, cfg: SolverConfig | None = None, width=None,
                n_range: tuple[int, int | None] = (0, None),
                var_widths: Mapping[str, Any] | None = None) -> SolverResult:
    """Decide whether f holds for all values of its free variables.

    ``width`` gives the bit width of x and y (int, callable of n, or NatExpr);
    ``var_widths`` does the same for auxiliary variables.  ``n_range`` is the
    range of n; the bounded mode caps the upper end at ``cfg.n_max``.
    """
    cfg = cfg or SolverConfig()
    if cfg.mode == "symbolic":
        return _check_symbolic(f, cfg, n_range)
    return _check_bounded(f, cfg, width, n_range, var_widths or {})


def _check_bounded(f, cfg, width, n_range, var_widths) -> SolverResult:
    lo, hi = n_range
    hi = cfg.n_max if hi is None else min(hi, cfg.n_max)
    wx = _widthfn(width)
    extra = {k: _widthfn(v) for k, v in var_widths.items()}
    scripts = []
    session = None
    try:
        for n in range(lo, hi + 1):
            g = E.simplify(E.substitute(f, "n", Const(n)))
            if g == E.TRUE:
                continue
            fv = sorted(E.free_vars(g))
            widths = {}
            for v in fv:
                if v in ("x", "y"):
                    w = wx(n)
                elif v in extra:
                    w = extra[v](n)
                else:
                    return SolverResult(Verdict.UNKNOWN, detail=f"no width for variable {v}")
                if w is None:
                    return SolverResult(Verdict.UNKNOWN, detail=f"no width for variable {v}")
                widths[v] = w
            bounds = {v: (1 << w) - 1 for v, w in widths.items()}
            try:
                subs = _max_subterm(g, bounds, cfg.max_bits)
            except E.Unbounded as exc:
                return SolverResult(Verdict.UNKNOWN, detail=f"n={n}: {exc}")
            W = max([subs.bit_length(), *widths.values(), 1]) + 1
            em = _Emitter(bv_term_fn(W))
            em.count(g)
            try:
                body = em.emit(g)
            except UnsupportedConstruct as exc:
                return SolverResult(Verdict.UNKNOWN, detail=str(exc))
            lines = [f"(declare-const {v} (_ BitVec {W}))" for v in fv]
            lines += [f"(assert (bvult {v} {_bv(1 << widths[v], W)}))" for v in fv if widths[v] < W]
            lines += em.defs
            lines.append(f"(assert (not {body}))")
            script = "\n".join(lines)
            _dump(cfg, "(set-logic QF_BV)\n" + script + "\n(check-sat)", f"n{n}")
            if cfg.keep_scripts:
                scripts.append(script)
            if session is None:
                session = Session(cfg)
                session.send("(set-logic QF_BV)")
                session.send(f"(set-option :timeout {cfg.timeout_ms})")
            session.send("(push 1)")
            session.send(script)
            ans = session.ask("(check-sat)")
            if ans == "sat":
                model = _parse_model(session.ask("(get-value (" + " ".join(fv) + "))"), fv) if fv else {}
                model["n"] = n
                bad = _replay(f, model)
                if bad:
                    return SolverResult(Verdict.INVALID, model, f"counterexample at n={n}", scripts)
                return SolverResult(Verdict.UNKNOWN, model, "counterexample failed replay", scripts)
            if ans != "unsat":
                return SolverResult(Verdict.UNKNOWN, detail=f"n={n}: solver said {ans}", scripts=scripts)
            session.send("(pop 1)")
    except (SmtError, TimeoutError) as exc:
        return SolverResult(Verdict.UNKNOWN, detail=str(exc), scripts=scripts)
    finally:
        if session is not None:
            session.close()
    return SolverResult(Verdict.VALID, detail=f"bounded n in [{lo},{hi}]", scripts=scripts)


def _max_subterm(g, bounds, cap) -> int:
    best = 0
    seen = set()
    memo: dict = {}
    stack = [g]
    while stack:
        c = stack.pop()
        if id(c) in seen:
            continue
        seen.add(id(c))
        if isinstance(c, NatExpr):
            best = max(best, E.upper_bound(c, bounds, cap, memo))
            if type(c) is Slice:
                best = max(best, 1 << (E.upper_bound(c.hi, bounds, cap, memo) + 1))
            if type(c) is Unary:
                best = max(best, 1 << E.upper_bound(c.width, bounds, cap, memo))
        for ch in c.children():
            if isinstance(ch, E.Node):
                stack.append(ch)
            elif isinstance(ch, tuple):
                stack.extend(ch)
    return best


def _check_symbolic(f, cfg, n_range) -> SolverResult:
    lo, hi = n_range
    fv = sorted(E.free_vars(f))
    em = _Emitter(int_term_fn)
    em.count(f)
    try:
        body = em.emit(f)
    except UnsupportedConstruct as exc:
        return SolverResult(Verdict.UNKNOWN, detail=str(exc))
    uses_pow2 = "(pow2 " in body or any("(pow2 " in d for d in em.defs)
    # quantified axioms push the solver to "unknown" on satisfiable queries
    lines = ["(set-logic ALL)", *(POW2_AXIOMS if uses_pow2 else ())]
    lines += [f"(declare-const {v} Int)" for v in fv]
    lines += [f"(assert (>= {v} 0))" for v in fv]
    if "n" in fv:
        lines.append(f"(assert (>= n {lo}))")
        if hi is not None:
            lines.append(f"(assert (<= n {hi}))")
    lines += em.defs
    lines.append(f"(assert (not {body}))")
    script = "\n".join(lines)
    _dump(cfg, script + "\n(check-sat)", "sym")
    try:
        with Session(cfg) as s:
            s.send(f"(set-option :timeout {cfg.timeout_ms})")
            s.send(script)
            ans = s.ask("(check-sat)")
            if ans == "unsat":
                return SolverResult(Verdict.VALID, detail="symbolic",
                                    scripts=[script] if cfg.keep_scripts else [])
            if ans == "sat" and fv:
                model = _parse_model(s.ask("(get-value (" + " ".join(fv) + "))"), fv)
                if _replay(f, model):
                    return SolverResult(Verdict.INVALID, model, "symbolic counterexample")
                return SolverResult(Verdict.UNKNOWN, model, "counterexample failed replay")
            return SolverResult(Verdict.UNKNOWN, detail=f"solver said {ans}")
    except (SmtError, TimeoutError) as exc:
        return SolverResult(Verdict.UNKNOWN, detail=str(exc))


# ---------------------------------------------------------------- ground evaluation


def solver_eval(terms: list, env: Mapping[str, int] | None = None, cfg: SolverConfig | None = None,
                encoding: str = "bv", batch: int = 200) -> list:
    """Evaluate expressions inside the solver under a concrete assignment."""
    cfg = cfg or SolverConfig()
    env = dict(env or {})
    results: list = []
    with Session(cfg) as s:
        s.send("(set-logic ALL)")
        if encoding == "int":
            s.send(POW2_REC)
        for start in range(0, len(terms), batch):
            chunk = terms[start:start + batch]
            s.send("(push 1)")
            texts = []
            for t in chunk:
                fixed = E.substitute_many(t, {k: Const(v) for k, v in env.items()})
                if encoding == "int":
                    em = _Emitter(int_term_fn)
                else:
                    bounds = {}
                    W = max(_max_subterm(fixed, bounds, cfg.max_bits).bit_length(), 1) + 1
                    em = _Emitter(bv_term_fn(W))
                texts.append(em.emit(fixed))
            ans = s.ask("(check-sat)")
            if ans != "sat":
                raise SmtError(f"ground evaluation context is {ans}")
            out = s.ask("(get-value (" + " ".join(texts) + "))")
            tree, _ = E._read(E._tokenize(out), 0)
            for item in tree:
                val = item[1]
                if isinstance(val, list):
                    val = _flatten(val)
                results.append(_parse_value(val))
            s.send("(pop 1)")
    return results


def _flatten(tree) -> str:
    if isinstance(tree, str):
        return tree
    return "(" + " ".join(_flatten(t) for t in tree) + ")"
