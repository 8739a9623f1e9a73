"""Judgement checking for ISQIR programs against hypothesis-amplitude pairs.

Fix-free programs are derived bottom-up (gate templates folded by
composition and relabeling).  A root fixpoint is checked by exhaustive
simulation of its base cases plus one inductive obligation in which the
recursive call is replaced by the target shifted to n-1, frame-extended and
relabeled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from . import expr as E
from . import smt
from .expr import FALSE, TRUE, BoolExpr, Const, N, NatExpr, Not, Or, X, Y, conj, simplify
from .gates import GateDatabase, GateError, UnknownGate, default_db, derive_gate_halpha
from .isqir import (
    ConstProg, FixProg, OracleCall, Program, RelabelProg, SeqProg, contains_fix,
)
from .ppsa import (
    IDENTITY, HAlpha, Ppsa, PpsaError, SparsityWitness, Term,
    _split_conjuncts, bound_conjuncts, compose, extend, pred, relabel,
)
from .sim import DimensionTooLarge, first_mismatch, sqir_to_unitary

BASE_CASE_MAX_QUBITS = 12


# ---------------------------------------------------------------- traces


@dataclass
class Obligation:
    kind: str                  # equiv | subset | base | typing
    rule: str
    formula: str = ""
    verdict: str = "unknown"
    counterexample: dict | None = None
    detail: str = ""
    scripts: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.verdict == "valid"

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "rule": self.rule, "verdict": self.verdict}
        if self.formula:
            d["formula"] = self.formula
        if self.counterexample is not None:
            d["counterexample"] = self.counterexample
        if self.detail:
            d["detail"] = self.detail
        if self.scripts:
            d["smt"] = self.scripts
        return d


@dataclass
class ProofTrace:
    rule: str
    obligations: list = field(default_factory=list)
    children: list = field(default_factory=list)
    error: str | None = None

    @property
    def accepted(self) -> bool:
        return (self.error is None and all(o.ok for o in self.obligations)
                and all(c.accepted for c in self.children))

    def failures(self) -> list[Obligation]:
        out = [o for o in self.obligations if not o.ok]
        for c in self.children:
            out += c.failures()
        return out

    def to_dict(self) -> dict:
        d = {"rule": self.rule, "accepted": self.accepted,
             "obligations": [o.to_dict() for o in self.obligations]}
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        if self.error:
            d["error"] = self.error
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class VerificationError(Exception):
    pass


# ---------------------------------------------------------------- derivation


def derive_halpha(s: Program, db: GateDatabase | None = None,
                  oracle: HAlpha | None = None) -> HAlpha:
    """Amplitude of a fix-free program, with the full hypothesis."""
    db = db or default_db()
    if isinstance(s, ConstProg):
        gates = [g for g in s.gates if db.lookup(g.name).name != "ID"]
        if not gates:
            return HAlpha(TRUE, IDENTITY, SparsityWitness((Y,), (X,)))
        ha = derive_gate_halpha(gates[0], db)
        for g in gates[1:]:
            ha = compose(ha, derive_gate_halpha(g, db))
        return ha
    if isinstance(s, SeqProg):
        return compose(derive_halpha(s.first, db, oracle), derive_halpha(s.second, db, oracle))
    if isinstance(s, RelabelProg):
        return relabel(derive_halpha(s.body, db, oracle), s.perm)
    if isinstance(s, OracleCall):
        if oracle is None:
            raise VerificationError("oracle call without an oracle amplitude")
        return oracle
    if isinstance(s, FixProg):
        raise VerificationError("derive_halpha does not unfold fixpoints")
    raise TypeError(s)


# ---------------------------------------------------------------- equivalence encoding


def _emax(a: NatExpr, b: NatExpr) -> NatExpr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(max(a.value, b.value))
    if a == b:
        return a
    return E.ite(a.ge(b), a, b)


def _common_logden(terms: Sequence[Term]) -> NatExpr:
    consts = [t.phase.logden.value for t in terms if isinstance(t.phase.logden, Const)]
    out: NatExpr = Const(max(consts + [1]))
    for w in dict.fromkeys(simplify(t.phase.logden) for t in terms if not isinstance(t.phase.logden, Const)):
        out = _emax(out, w)
    return out


def _sample_ratio(b1: NatExpr, b2: NatExpr, ns: Sequence[int]) -> Fraction | None:
    """beta2/beta1 when it is the same rational at every sample n."""
    vals = set()
    for n in ns:
        try:
            v1, v2 = E.eval_nat(b1, {"n": n}), E.eval_nat(b2, {"n": n})
        except E.ExprError:
            return None
        if v1 == 0 or v2 == 0:
            return None
        vals.add(Fraction(v2, v1))
    return vals.pop() if len(vals) == 1 else None


def _sqrt_fraction(r: Fraction) -> tuple[int, int] | None:
    p, q = math.isqrt(r.numerator), math.isqrt(r.denominator)
    if p * p == r.numerator and q * q == r.denominator:
        return p, q
    return None


def amplitude_equality(a1: Ppsa, a2: Ppsa, sample_ns: Sequence[int] = (0, 1, 2, 3, 4, 5)) -> BoolExpr:
    """Formula in (n, x, y) stating a1 and a2 agree entrywise.

    With beta2/beta1 = (p/q)^2 the sums must satisfy p*S1 = q*S2.  Phases are
    lifted to a common power-of-two denominator 2^Wc and each term is split
    into a class (phase mod 2^(Wc-1)) and a sign; the sums agree iff, for
    every class, p*(pos1-neg1) = q*(pos2-neg2), which is exact because the
    roots of unity of those classes are linearly independent over the
    integers.
    """
    ratio = _sample_ratio(a1.beta, a2.beta, sample_ns)
    pq = _sqrt_fraction(ratio) if ratio is not None else None
    p, q = pq if pq else (1, 1)
    beta_eq = (a2.beta * Const(q * q)).eq(a1.beta * Const(p * p))
    tagged = [(1, t) for t in a1.terms] + [(2, t) for t in a2.terms]
    if not tagged:
        return beta_eq
    wc = _common_logden([t for _, t in tagged])
    mod = E.Pow2(wc)
    half = E.Pow2(wc - 1)
    infos = []
    for side, t in tagged:
        w = t.phase.logden
        lift = t.phase.num if w == wc else t.phase.num * E.Pow2(wc - w)
        e = simplify(lift % mod) if t.phase.num != Const(0) else Const(0)
        infos.append((side, simplify(t.guard), simplify(e % half), e.ge(half) if e != Const(0) else FALSE))
    parts = [beta_eq]
    for i, (_, gi, ki, _) in enumerate(infos):
        lhs: list[NatExpr] = []
        rhs: list[NatExpr] = []
        for side, gj, kj, sj in infos:
            same = conj([gj, kj.eq(ki)]) if kj != ki else gj
            pos = E.Delta(conj([same, Not(sj)]) if sj != FALSE else same)
            neg = E.Delta(conj([same, sj])) if sj != FALSE else None
            # p*pos1 + q*neg2 = q*pos2 + p*neg1
            if side == 1:
                lhs.append(pos * Const(p) if p != 1 else pos)
                if neg is not None:
                    rhs.append(neg * Const(p) if p != 1 else neg)
            else:
                rhs.append(pos * Const(q) if q != 1 else pos)
                if neg is not None:
                    lhs.append(neg * Const(q) if q != 1 else neg)
        total = lambda xs: sum(xs[1:], xs[0]) if xs else Const(0)
        parts.append(Or((Not(gi), total(lhs).eq(total(rhs)))))
    return conj(parts)


def _implies(a: BoolExpr, b: BoolExpr) -> BoolExpr:
    if a == TRUE:
        return b
    return Or((Not(a), b))


def _run(kind: str, rule: str, f: BoolExpr, cfg: smt.SolverConfig, width, n_lo: int,
         var_widths=None) -> Obligation:
    ob = Obligation(kind, rule, formula=E.to_text(f) if E.size(f) < 4000 else "")
    f = simplify(f)
    if f == TRUE:
        ob.verdict = "valid"
        ob.detail = "trivial"
        return ob
    res = smt.check_valid(f, cfg, width=width, n_range=(n_lo, None), var_widths=var_widths)
    ob.verdict = res.verdict.value
    ob.counterexample = res.counterexample
    ob.detail = res.detail
    ob.scripts = res.scripts
    return ob


def check_equiv(h: BoolExpr, a1: Ppsa, a2: Ppsa, n_constraint: BoolExpr = TRUE,
                cfg: smt.SolverConfig | None = None, width=None, n_lo: int = 0) -> smt.SolverResult:
    """Decide whether a1 = a2 on every (n, x, y) satisfying h and the n constraint.

    ``width`` bounds x and y in bounded mode (defaults to the largest qubit
    count the hypothesis mentions being unknown, so it must be given there).
    """
    cfg = cfg or smt.SolverConfig()
    f = _implies(conj([n_constraint, h]), amplitude_equality(a1, a2))
    f = simplify(f)
    if f == TRUE:
        return smt.SolverResult(smt.Verdict.VALID, detail="trivial")
    return smt.check_valid(f, cfg, width=width, n_range=(n_lo, None))


# ---------------------------------------------------------------- obligations


def _strip_bounds(h: BoolExpr, q: NatExpr | None) -> BoolExpr:
    if q is None:
        return h
    drop = {simplify(c) for c in bound_conjuncts(q)}
    return conj(c for c in _split_conjuncts(h) if c not in drop)


def _typing_formula(gates, q: NatExpr, db: GateDatabase) -> BoolExpr:
    parts = []
    for g in gates:
        gd = db.lookup(g.name)
        if gd.component is not None and not g.args:
            size = g.size if g.size is not None else N
            parts.append(simplify(E.substitute(gd.component.q_count, "n", size)).le(q))
            continue
        for i, a in enumerate(g.args):
            parts.append(a.lt(q))
            for b in g.args[:i]:
                parts.append(a.ne(b))
    return conj(parts)


def _program_gates(p: Program) -> list:
    if isinstance(p, ConstProg):
        return list(p.gates)
    if isinstance(p, SeqProg):
        return _program_gates(p.first) + _program_gates(p.second)
    if isinstance(p, RelabelProg):
        return _program_gates(p.body)
    return []


def _qbits(q: NatExpr) -> Callable[[int], int]:
    return lambda n: max(E.eval_nat(q, {"n": n}).bit_length(), 1) + 1


def _base_case(i: int, gates_prog: ConstProg, target: HAlpha, db: GateDatabase,
               fix_at: Callable[[int], list] | None = None) -> Obligation:
    ob = Obligation("base", f"FIX base n={i}")
    if target.q_count is None:
        ob.detail = "target has no qubit count"
        return ob
    width = E.eval_nat(target.q_count, {"n": i})
    try:
        circ = fix_at(i) if fix_at else db.instantiate(gates_prog, i)
        u = sqir_to_unitary(circ, width, db, cap=BASE_CASE_MAX_QUBITS)
    except DimensionTooLarge as exc:
        ob.detail = str(exc)
        return ob
    except Exception as exc:  # ill-typed bases, unknown gates
        ob.verdict = "invalid"
        ob.detail = f"{type(exc).__name__}: {exc}"
        return ob
    h_i = simplify(E.substitute(target.h, "n", Const(i)))
    bad = first_mismatch(u, target.alpha.subst({"n": Const(i)}).simplified(), h_i, i)
    if bad is None:
        ob.verdict = "valid"
        ob.detail = f"exhaustive on {width} qubits"
    else:
        ob.verdict = "invalid"
        ob.counterexample = {"n": i, "x": bad[0], "y": bad[1]}
    return ob


def inductive_halpha(s: FixProg, target: HAlpha, db: GateDatabase | None = None) -> HAlpha:
    """S_L ; relabel(pi, frame-extended target at n-1) ; S_R."""
    db = db or default_db()
    hx = _strip_bounds(target.h, target.q_count)
    core = HAlpha(hx, target.alpha, None, target.q_count)
    prev = pred(core, n_min=s.k)
    mid = relabel(extend(prev), s.perm)
    left = derive_halpha(s.left, db)
    right = derive_halpha(s.right, db)
    return compose(compose(left, mid), right)


def check_fix(s: FixProg, target: HAlpha, cfg: smt.SolverConfig | None = None,
              db: GateDatabase | None = None) -> ProofTrace:
    cfg = cfg or smt.SolverConfig()
    db = db or default_db()
    tr = ProofTrace(f"FIX_{s.k}")
    if target.q_count is None:
        tr.error = "target needs a qubit count"
        return tr
    for i, b in enumerate(s.bases):
        tr.obligations.append(_base_case(i, ConstProg(b), target, db))
        if not tr.obligations[-1].ok:
            return tr
    q = target.q_count
    qprev = simplify(E.substitute(q, "n", N - 1), s.k)
    typing = [_typing_formula(_program_gates(s.left) + _program_gates(s.right), q, db),
              _implies(E.var("q").lt(qprev), E.perm_index_expr(s.perm, E.var("q")).lt(q))]
    tr.obligations.append(_run("typing", "FIX well-typed step", conj(typing), cfg, q, s.k,
                               var_widths={"q": _qbits(q)}))
    if not tr.obligations[-1].ok:
        return tr
    try:
        step = inductive_halpha(s, target, db)
    except (PpsaError, GateError, UnknownGate, VerificationError) as exc:
        tr.error = f"{type(exc).__name__}: {exc}"
        return tr
    ncon = N.ge(s.k)
    tr.obligations.append(_run("subset", "FIX hypothesis", _implies(conj([ncon, target.h]), step.h),
                               cfg, q, s.k))
    if not tr.obligations[-1].ok:
        return tr
    f = _implies(conj([ncon, target.h]), amplitude_equality(target.alpha, step.alpha))
    tr.obligations.append(_run("equiv", "FIX inductive step", f, cfg, q, s.k))
    return tr


def check_weaken(h: BoolExpr, a: Ppsa, inv: HAlpha, cfg: smt.SolverConfig, n_lo: int = 0) -> list[Obligation]:
    q = inv.q_count
    obs = [_run("subset", "WEAKEN", _implies(h, inv.h), cfg, q, n_lo)]
    if obs[0].ok:
        obs.append(_run("equiv", "REPLACE", _implies(h, amplitude_equality(a, inv.alpha)), cfg, q, n_lo))
    return obs


def check_judgement(h: BoolExpr, s: Program, a: Ppsa | HAlpha, q_count: NatExpr | None = None,
                    cfg: smt.SolverConfig | None = None, db: GateDatabase | None = None,
                    invariant: HAlpha | None = None, oracle: HAlpha | None = None) -> ProofTrace:
    """Check that every entry of the program under h equals a.

    ``invariant`` is a stronger pair proved for a fixpoint first and then
    weakened to (h, a).
    """
    cfg = cfg or smt.SolverConfig()
    db = db or default_db()
    if isinstance(a, HAlpha):
        q_count = q_count if q_count is not None else a.q_count
        a = a.alpha
    target = HAlpha(h, a, None, q_count)
    if isinstance(s, FixProg):
        inv = invariant if invariant is not None else target
        if inv.q_count is None:
            inv = HAlpha(inv.h, inv.alpha, inv.witness, q_count)
        tr = ProofTrace("JUDGEMENT")
        tr.children.append(check_fix(s, inv, cfg, db))
        if invariant is not None and tr.children[0].accepted:
            tr.obligations += check_weaken(h, a, inv, cfg, s.k)
        return tr
    if contains_fix(s):
        tr = ProofTrace("JUDGEMENT")
        tr.error = "a fixpoint is only supported at the root"
        return tr
    tr = ProofTrace("CONST/SEQ/RELABEL")
    if q_count is None:
        tr.error = "a qubit count is needed"
        return tr
    tr.obligations.append(_run("typing", "CONST well-typed", _typing_formula(_program_gates(s), q_count, db),
                               cfg, q_count, 0))
    if not tr.obligations[-1].ok:
        return tr
    try:
        ha = derive_halpha(s, db, oracle)
    except (PpsaError, GateError, UnknownGate, VerificationError) as exc:
        tr.error = f"{type(exc).__name__}: {exc}"
        return tr
    tr.obligations.append(_run("equiv", "REPLACE", _implies(h, amplitude_equality(a, ha.alpha)),
                               cfg, q_count, 0))
    return tr
