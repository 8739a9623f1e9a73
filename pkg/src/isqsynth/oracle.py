"""Programs that call an oracle f : {0,1}^m -> {0,1}.

Verification covers the Deutsch-Jozsa class: for a fixed matrix entry, the
amplitude of ``pre; oracle; post`` is a sum over oracle inputs i of a
pointwise term that depends on i only through f(i).  Such a sum is affine in
S_f = sum_i f(i), so f disappears before anything reaches the solver.

Layout: qubit 0 is the oracle's target, qubits 1..m its input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as E
from . import smt
from .expr import TRUE, And, BoolExpr, Const, N, NatExpr, Rel, Var, X, Y, conj, simplify
from .gates import GateDatabase, GateDef, default_db
from .isqir import CGate, OracleCall, Program, SeqProg, contains_fix, instantiate
from .ppsa import HAlpha, Ppsa, SparsityWitness, Term, Unsupported, add_phases, halpha_from_dict
from .verifier import ProofTrace, VerificationError, _implies, _run, amplitude_equality, derive_halpha

I = Var("i")
S = Var("S")


class NotAffine(Unsupported):
    pass


# ---------------------------------------------------------------- the oracle itself


def oracle_halpha(n_in: NatExpr = N, m_out: int = 1, name: str = "f") -> HAlpha:
    """|x_in>|t> -> |x_in>|t xor f(x_in)> with f uninterpreted."""
    if m_out != 1:
        raise Unsupported("only single-bit oracles are supported")
    n_in = E.nat(n_in)
    fx = E.Apply(name, X >> 1)
    guard = conj([(X >> 1).eq(Y >> 1), Y[0].eq(fx ^ X[0])])
    wit = SparsityWitness((Y, Y ^ 1), (X, X ^ 1))
    return HAlpha(TRUE, Ppsa(Const(1), (Term(guard),)), wit, simplify(n_in + 1))


def oracle_matrix(table: Sequence[int], n_in: int) -> np.ndarray:
    """Permutation matrix of the oracle for a concrete truth table."""
    if len(table) != 1 << n_in:
        raise ValueError("truth table length must be 2^n_in")
    d = 1 << (n_in + 1)
    m = np.zeros((d, d))
    for x in range(d):
        m[x ^ (table[x >> 1] & 1), x] = 1
    return m


def bind_oracle(db: GateDatabase, table: Sequence[int], n_in: int, name: str = "ORACLE") -> tuple:
    """Database copy with the concrete oracle as a gate, and the gate list replacing the call."""
    m = oracle_matrix(table, n_in)
    db2 = db.copy()
    db2.register(GateDef(name, n_in + 1, lambda _p, m=m: m, None))
    return db2, [CGate(name, tuple(range(n_in + 1)), n_in)]


def dense_with_oracle(prog: Program, n: int, table: Sequence[int], n_in: int,
                      db: GateDatabase | None = None) -> np.ndarray:
    from .sim import sqir_to_unitary
    db2, call = bind_oracle(db or default_db(), table, n_in)
    gates = instantiate(prog, n, oracle=call, widths=db2.family_width)
    return sqir_to_unitary(gates, n_in + 1, db2)


# ---------------------------------------------------------------- affine sums


def affine_witness(g: Callable[[int], object]) -> tuple:
    """(a, b) with g(z) = a*z + b on z in {0, 1}."""
    g0, g1 = g(0), g(1)
    try:
        return g1 - g0, g0
    except TypeError as exc:
        raise NotAffine(f"pointwise term is not numeric: {exc}") from None


@dataclass(frozen=True)
class SymbolicSum:
    """(1/scale) * sum_{i < count} (pos[f(i)] - neg[f(i)]).

    pos and neg hold natural-valued expressions in n for f(i) = 0 and 1.
    """
    pos: tuple
    neg: tuple
    count: NatExpr
    scale: NatExpr

    def pointwise(self, n: int) -> Callable[[int], int]:
        env = {"n": n}
        return lambda v: E.eval_nat(self.pos[v], env) - E.eval_nat(self.neg[v], env)

    def evaluate(self, n: int, table: Sequence[int]) -> Fraction:
        """The unabstracted sum for a concrete f."""
        g = self.pointwise(n)
        total = sum(g(table[i]) for i in range(E.eval_nat(self.count, {"n": n})))
        return Fraction(total, E.eval_nat(self.scale, {"n": n}))


def sum_abstraction(s: SymbolicSum) -> tuple[NatExpr, NatExpr]:
    """(plus, minus) over n and S with plus - minus = a*S + b*count."""
    p0, p1 = s.pos
    n0, n1 = s.neg
    plus = simplify(s.count * p0 + S * (p1 + n0))
    minus = simplify(s.count * n0 + S * (n1 + p0))
    return plus, minus


def abstraction_value(s: SymbolicSum, n: int, s_f: int) -> Fraction:
    plus, minus = sum_abstraction(s)
    env = {"n": n, "S": s_f}
    return Fraction(E.eval_nat(plus, env) - E.eval_nat(minus, env), E.eval_nat(s.scale, env))


# ---------------------------------------------------------------- specifications


@dataclass(frozen=True)
class Promise:
    """coeff * S_f = rhs, for n >= n_min."""
    coeff: int
    rhs: NatExpr
    n_min: int = 0

    def formula(self) -> BoolExpr:
        return (Const(self.coeff) * S).eq(self.rhs)

    def holds(self, n: int, s_f: int) -> bool:
        return n >= self.n_min and self.coeff * s_f == E.eval_nat(self.rhs, {"n": n})


@dataclass(frozen=True)
class OracleTuple:
    promise: Promise
    h: BoolExpr
    alpha: Ppsa


@dataclass(frozen=True)
class OracleSpec:
    name: str
    tuples: tuple
    n_in: NatExpr = N
    q_count: NatExpr = N + 1
    oracle: str = "f"


def _ppsa_from(d: Mapping) -> Ppsa:
    return halpha_from_dict({"beta": d.get("beta", "1"), "terms": d.get("terms", [])}).alpha


def oracle_spec_from_dict(d) -> OracleSpec:
    if isinstance(d, list):
        d = {"tuples": d}
    tuples = []
    for t in d["tuples"]:
        p = t["promise"]
        tuples.append(OracleTuple(Promise(int(p.get("coeff_Sf", 1)), E.parse_nat(str(p["rhs"])),
                                          int(p.get("n_min", 0))),
                                  E.parse_bool(t.get("h", "true")), _ppsa_from(t["alpha"])))
    return OracleSpec(d.get("name", "oracle"), tuple(tuples),
                      E.parse_nat(d.get("n_in", "n")), E.parse_nat(d.get("q_count", "(+ n 1)")),
                      d.get("oracle", "f"))


def load_oracle_spec(path: str) -> OracleSpec:
    with open(path, encoding="utf-8") as fh:
        return oracle_spec_from_dict(json.load(fh))


def oracle_spec_to_dict(spec: OracleSpec) -> dict:
    def ppsa_d(a: Ppsa) -> dict:
        return {"beta": E.to_text(a.beta),
                "terms": [{"guard": E.to_text(t.guard),
                           "phase": {"num": E.to_text(t.phase.num), "logden": E.to_text(t.phase.logden)}}
                          for t in a.terms]}
    return {"name": spec.name, "oracle": spec.oracle, "n_in": E.to_text(spec.n_in),
            "q_count": E.to_text(spec.q_count),
            "tuples": [{"promise": {"coeff_Sf": t.promise.coeff, "rhs": E.to_text(t.promise.rhs),
                                    "n_min": t.promise.n_min},
                        "h": E.to_text(t.h), "alpha": ppsa_d(t.alpha)} for t in spec.tuples]}


# ---------------------------------------------------------------- program analysis


def _flatten(s: Program) -> list[Program]:
    if isinstance(s, SeqProg):
        return _flatten(s.first) + _flatten(s.second)
    return [s]


def _seq(parts: list[Program]) -> Program | None:
    if not parts:
        return None
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = SeqProg(p, out)
    return out


def split_at_oracle(s: Program) -> tuple[Program | None, str, Program | None]:
    parts = _flatten(s)
    calls = [j for j, p in enumerate(parts) if isinstance(p, OracleCall)]
    if len(calls) != 1:
        raise Unsupported("exactly one oracle call is supported")
    j = calls[0]
    pre, post = _seq(parts[:j]), _seq(parts[j + 1:])
    for part in (pre, post):
        if part is not None and contains_fix(part):
            raise Unsupported("fixpoints around the oracle must be registered as components")
    return pre, parts[j].name, post


def _pins(h: BoolExpr) -> dict[str, NatExpr]:
    """x and y values fixed by the hypothesis; any other constraint is unsupported."""
    parts = list(h.args) if isinstance(h, And) else [h]
    out = {}
    for p in parts:
        if p == TRUE:
            continue
        if (isinstance(p, Rel) and p.op == "=" and isinstance(p.left, Var) and p.left.name in ("x", "y")
                and not E.free_vars(p.right) & {"x", "y"} and p.left.name not in out):
            out[p.left.name] = p.right
            continue
        raise Unsupported(f"hypothesis conjunct {E.to_text(p)} does not fix a single entry")
    if set(out) != {"x", "y"}:
        raise Unsupported("the hypothesis must fix both x and y")
    return out


def _product(a: Ppsa, b: Ppsa) -> Ppsa:
    terms = tuple(Term(conj([t1.guard, t2.guard]), add_phases(t1.phase, t2.phase))
                  for t1 in a.terms for t2 in b.terms)
    return Ppsa(simplify(a.beta * b.beta), terms)


def _signs(a: Ppsa) -> tuple[NatExpr, NatExpr, list[BoolExpr]]:
    """Natural (pos, neg) with a * sqrt(beta) = pos - neg, plus side conditions."""
    pos, neg, side = [], [], []
    for t in a.terms:
        w = simplify(t.phase.logden)
        if not isinstance(w, Const):
            raise Unsupported("symbolic phase denominators are outside the affine fragment")
        num = t.phase.num
        if w.value == 0:
            pos.append(E.delta(t.guard))
            continue
        if w.value > 1:
            side.append(_implies(t.guard, (num % Const(1 << (w.value - 1))).eq(0)))
        sign = (num >> Const(w.value - 1)) % 2
        pos.append(E.delta(conj([t.guard, sign.eq(0)])))
        neg.append(E.delta(conj([t.guard, sign.eq(1)])))
    total = lambda xs: simplify(sum(xs[1:], xs[0])) if xs else Const(0)
    return total(pos), total(neg), side


def _factors(e: NatExpr) -> list[NatExpr]:
    if isinstance(e, E.Bin) and e.op == "*":
        return _factors(e.left) + _factors(e.right)
    return [e]


def _sqrt_expr(beta: NatExpr, samples=range(0, 6)) -> NatExpr:
    """Closed square root of a product of constants, powers of two and repeated factors."""
    const, exps, rest, paired = 1, [], [], []
    for f in _factors(simplify(beta)):
        if isinstance(f, Const):
            const *= f.value
        elif isinstance(f, E.Pow2):
            exps.append(f.exp)
        elif f in rest:
            rest.remove(f)
            paired.append(f)
        else:
            rest.append(f)
    if rest:
        raise Unsupported(f"normalisation {E.to_text(beta)} has no closed square root")
    r = int(round(const ** 0.5))
    if r * r != const:
        raise Unsupported(f"normalisation {E.to_text(beta)} has no closed square root")
    out: NatExpr = Const(r)
    for f in paired:
        out = out * f
    if exps:
        total = simplify(sum(exps[1:], exps[0]))
        if any(E.eval_nat(total, {"n": n}) % 2 for n in samples):
            raise Unsupported(f"normalisation {E.to_text(beta)} has no closed square root")
        out = simplify(out * E.Pow2(simplify(E.Bin("div", total, Const(2)))))
    return out


@dataclass
class _Pointwise:
    by_value: tuple          # Ppsa per oracle value, summed over the target bit
    general: tuple           # same with symbolic i


def _pointwise(pre: HAlpha | None, post: HAlpha | None, pins: Mapping[str, NatExpr]) -> _Pointwise:
    x0, y0 = pins["x"], pins["y"]
    by_value, general = [], []
    for v in (0, 1):
        acc_terms, beta = [], None
        acc_gen = []
        for z0 in (0, 1):
            for ival, store in ((Const(0), acc_terms), (I, acc_gen)):
                z = (ival << 1) + Const(z0)
                zp = (ival << 1) + Const(z0 ^ v)
                a = pre.alpha.subst({"x": x0, "y": z}) if pre else Ppsa(Const(1), (Term(x0.eq(z)),))
                b = post.alpha.subst({"x": zp, "y": y0}) if post else Ppsa(Const(1), (Term(zp.eq(y0)),))
                p = _product(a, b)
                beta = p.beta
                store.extend(p.terms)
        by_value.append(Ppsa(beta, tuple(acc_terms)).simplified())
        general.append(Ppsa(beta, tuple(acc_gen)).simplified())
    return _Pointwise(tuple(by_value), tuple(general))


def oracle_sum(s: Program, h: BoolExpr, n_in: NatExpr = N,
               db: GateDatabase | None = None) -> tuple[SymbolicSum, _Pointwise, list[BoolExpr]]:
    """Sum form of the program's amplitude at the entry fixed by h."""
    db = db or default_db()
    pre_p, _, post_p = split_at_oracle(s)
    pre = derive_halpha(pre_p, db) if pre_p is not None else None
    post = derive_halpha(post_p, db) if post_p is not None else None
    pins = _pins(h)
    pw = _pointwise(pre, post, pins)
    pos, neg, side = [], [], []
    for a in pw.by_value:
        p, q, sd = _signs(a)
        pos.append(p)
        neg.append(q)
        side += sd
    if simplify(pw.by_value[0].beta) != simplify(pw.by_value[1].beta):
        raise Unsupported("pointwise terms disagree on normalisation")
    ss = SymbolicSum(tuple(pos), tuple(neg), simplify(E.Pow2(n_in)), _sqrt_expr(pw.by_value[0].beta))
    return ss, pw, side


def check_oracle_judgement(spec: OracleSpec, s: Program, db: GateDatabase | None = None,
                           cfg: smt.SolverConfig | None = None) -> ProofTrace:
    cfg = cfg or smt.SolverConfig()
    db = db or default_db()
    tr = ProofTrace("ORACLE")
    q = spec.q_count
    s_bits = lambda n: E.eval_nat(spec.n_in, {"n": n}) + 1
    i_bits = lambda n: max(E.eval_nat(spec.n_in, {"n": n}), 1)
    for j, t in enumerate(spec.tuples):
        n_lo = t.promise.n_min
        try:
            ss, pw, side = oracle_sum(s, t.h, spec.n_in, db)
            pins = _pins(t.h)
            target = t.alpha.subst(pins).simplified()
            r_pos, r_neg, t_side = _signs(target)
            root_t = _sqrt_expr(target.beta)
        except (Unsupported, VerificationError) as exc:
            tr.error = f"Unsupported: {exc}"
            return tr
        in_range = I.lt(E.Pow2(spec.n_in))
        for v in (0, 1):
            f = _implies(in_range, amplitude_equality(pw.general[v], pw.by_value[v]))
            tr.obligations.append(_run("equiv", f"ORACLE pointwise f(i)={v} (tuple {j})", f, cfg, q, n_lo,
                                       var_widths={"i": i_bits}))
        for k, c in enumerate(side + t_side):
            tr.obligations.append(_run("side", f"ORACLE sign condition {k} (tuple {j})", c, cfg, q, n_lo))
        plus, minus = sum_abstraction(ss)
        # plus/scale - minus/scale = (r_pos - r_neg)/root_t, cross-multiplied over naturals
        lhs = root_t * plus + ss.scale * r_neg
        rhs = root_t * minus + ss.scale * r_pos
        pre = conj([t.promise.formula(), S.le(E.Pow2(spec.n_in))])
        tr.obligations.append(_run("equiv", f"ORACLE promise {j}", _implies(pre, lhs.eq(rhs)), cfg, q, n_lo,
                                   var_widths={"S": s_bits}))
        if any(not o.ok for o in tr.obligations):
            return tr
    return tr
