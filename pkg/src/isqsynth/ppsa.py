"""Hypothesis-amplitude pairs and their algebra.

An amplitude is a parameterized path sum

    alpha(n, x, y) = (1/sqrt(beta(n))) * sum_i delta(g_i) * exp(2*pi*i * P_i / 2^W_i)

Hypotheses are Boolean expressions over n, x, y.  Gate-derived pairs use the
full hypothesis ``TRUE``.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from . import expr as E
from .expr import (
    FALSE, TRUE, And, BoolExpr, Const, N, NatExpr, Not, Or, PermExpr, X, Y,
    conj, disj, free_vars, simplify, substitute_many,
)

Hypothesis = BoolExpr


class PpsaError(Exception):
    pass


class NoWitness(PpsaError):
    pass


class Unsupported(PpsaError):
    pass


@dataclass(frozen=True)
class Phase:
    """exp(2*pi*i * num / 2^logden)."""
    num: NatExpr = Const(0)
    logden: NatExpr = Const(0)

    def __add__(self, other: "Phase") -> "Phase":
        return add_phases(self, other)

    def subst(self, m: Mapping[str, NatExpr]) -> "Phase":
        return Phase(substitute_many(self.num, m), substitute_many(self.logden, m))

    def simplified(self, n_min: int = 0) -> "Phase":
        return Phase(simplify(self.num, n_min), simplify(self.logden, n_min))

    def is_zero(self) -> bool:
        return self.num == Const(0)


ZERO_PHASE = Phase()


def add_phases(p: Phase, q: Phase) -> Phase:
    if p.is_zero():
        return q
    if q.is_zero():
        return p
    if p.logden == q.logden:
        return Phase(p.num + q.num, p.logden)
    a, b = p.logden, q.logden
    if isinstance(a, Const) and isinstance(b, Const):
        w = max(a.value, b.value)
        return Phase(p.num * Const(1 << (w - a.value)) + q.num * Const(1 << (w - b.value)), Const(w))
    return Phase(p.num * E.Pow2(b) + q.num * E.Pow2(a), a + b)


@dataclass(frozen=True)
class Term:
    guard: BoolExpr
    phase: Phase = ZERO_PHASE


@dataclass(frozen=True)
class Ppsa:
    beta: NatExpr
    terms: tuple

    def subst(self, m: Mapping[str, NatExpr]) -> "Ppsa":
        return Ppsa(substitute_many(self.beta, m),
                    tuple(Term(substitute_many(t.guard, m), t.phase.subst(m)) for t in self.terms))

    def simplified(self, n_min: int = 0) -> "Ppsa":
        terms = []
        for t in self.terms:
            g = simplify(t.guard, n_min)
            if g == FALSE:
                continue
            terms.append(Term(g, t.phase.simplified(n_min)))
        return Ppsa(simplify(self.beta, n_min), tuple(terms))


@dataclass(frozen=True)
class SparsityWitness:
    """xs are expressions in (n, y) covering nonzero rows; ys in (n, x) for columns."""
    xs: tuple
    ys: tuple

    def subst(self, m: Mapping[str, NatExpr]) -> "SparsityWitness":
        return SparsityWitness(tuple(substitute_many(e, m) for e in self.xs),
                               tuple(substitute_many(e, m) for e in self.ys))

    def simplified(self, n_min: int = 0) -> "SparsityWitness":
        return SparsityWitness(tuple(simplify(e, n_min) for e in self.xs),
                               tuple(simplify(e, n_min) for e in self.ys))


@dataclass(frozen=True)
class HAlpha:
    h: BoolExpr
    alpha: Ppsa
    witness: SparsityWitness | None = None
    q_count: NatExpr | None = None


def ppsa(beta, terms: Iterable) -> Ppsa:
    out = []
    for t in terms:
        if isinstance(t, Term):
            out.append(t)
        elif isinstance(t, BoolExpr):
            out.append(Term(t))
        else:
            g, ph = t
            out.append(Term(g, ph if isinstance(ph, Phase) else Phase(*ph)))
    return Ppsa(E.nat(beta), tuple(out))


IDENTITY = Ppsa(Const(1), (Term(X.eq(Y)),))


# ---------------------------------------------------------------- evaluation

_QUARTER = {Fraction(0): 1 + 0j, Fraction(1, 4): 1j, Fraction(1, 2): -1 + 0j, Fraction(3, 4): -1j}


def phase_value(num: int, logden: int) -> complex:
    den = 1 << logden
    fr = Fraction(num % den, den)
    q = _QUARTER.get(fr)
    if q is not None:
        return q
    return cmath.exp(2j * math.pi * float(fr))


def eval_entry(a: Ppsa, n: int, x: int, y: int, fns=None, extra=None) -> complex:
    env = E.Env(n=n, x=x, y=y, extra=extra or {}, fns=fns or {})
    total = 0j
    for t in a.terms:
        if E.eval_bool(t.guard, env):
            total += phase_value(E.eval_nat(t.phase.num, env), E.eval_nat(t.phase.logden, env))
    if total == 0:
        return 0j
    beta = E.eval_nat(a.beta, env)
    if beta <= 0:
        raise PpsaError(f"magnitude {a.beta} evaluates to {beta} at n={n}")
    return total / math.sqrt(beta)


def _dtype_for(exprs, bounds) -> type:
    try:
        ub = max((E.upper_bound(e, bounds) for e in exprs), default=0)
    except E.Unbounded:
        return object
    return np.int64 if ub < (1 << 62) else object


def amplitude_grid(a: Ppsa, n: int, xs, ys, fns=None, extra=None) -> np.ndarray:
    """Matrix of alpha(n, x, y) with rows indexed by ys and columns by xs."""
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    bx = int(xs.max(initial=0))
    by = int(ys.max(initial=0))
    bounds = {"n": n, "x": bx, "y": by}
    extra = dict(extra or {})
    bounds.update(extra)
    exprs = [a.beta] + [t.guard for t in a.terms] + [t.phase.num for t in a.terms]
    dt = _dtype_for(exprs, bounds)
    vals = {"n": n, "x": xs.astype(dt)[None, :], "y": ys.astype(dt)[:, None]}
    vals.update(extra)
    out = np.zeros((len(ys), len(xs)), dtype=complex)
    for t in a.terms:
        g = np.broadcast_to(E.eval_vec(t.guard, vals, fns), out.shape)
        if not g.any():
            continue
        w = E.eval_nat(t.phase.logden, E.Env(n=n, extra=extra))
        num = np.broadcast_to(E.eval_vec(t.phase.num, vals, fns), out.shape)
        den = 1 << w
        if dt is object or den > (1 << 62):
            frac = np.vectorize(lambda v: float(Fraction(int(v) % den, den)), otypes=[float])(num)
        else:
            frac = (num.astype(np.int64) % den) / den
        val = np.exp(2j * np.pi * frac)
        # exact quarter turns keep real/imaginary zeros clean
        for q, z in ((0.0, 1), (0.25, 1j), (0.5, -1), (0.75, -1j)):
            val = np.where(frac == q, z, val)
        out += np.where(g, val, 0)
    beta = E.eval_nat(a.beta, E.Env(n=n, extra=extra))
    if beta <= 0:
        raise PpsaError(f"magnitude {a.beta} evaluates to {beta} at n={n}")
    return out / math.sqrt(beta)


def eval_hypothesis_grid(h: BoolExpr, n: int, xs, ys, extra=None) -> np.ndarray:
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    bounds = {"n": n, "x": int(xs.max(initial=0)), "y": int(ys.max(initial=0))}
    dt = _dtype_for([h], bounds)
    vals = {"n": n, "x": xs.astype(dt)[None, :], "y": ys.astype(dt)[:, None]}
    vals.update(extra or {})
    return np.broadcast_to(np.asarray(E.eval_vec(h, vals), dtype=bool), (len(ys), len(xs)))


# ---------------------------------------------------------------- transformations


def _subst_halpha(ha: HAlpha, m: Mapping[str, NatExpr], w_map=None, n_min: int = 0) -> HAlpha:
    wit = ha.witness
    if wit is not None:
        wit = (w_map(wit) if w_map else wit.subst(m)).simplified(n_min)
    q = ha.q_count
    return HAlpha(simplify(substitute_many(ha.h, m), n_min), ha.alpha.subst(m).simplified(n_min), wit, q)


def relabel(ha: HAlpha, p: PermExpr) -> HAlpha:
    """Amplitude of the program with every qubit q moved to p(q)."""
    if isinstance(p, E.PId):
        return ha
    m = {"x": E.perm_inverse(p, X), "y": E.perm_inverse(p, Y)}

    def wmap(w: SparsityWitness) -> SparsityWitness:
        xs = tuple(E.perm_forward(p, substitute_many(e, {"y": m["y"]})) for e in w.xs)
        ys = tuple(E.perm_forward(p, substitute_many(e, {"x": m["x"]})) for e in w.ys)
        return SparsityWitness(xs, ys)

    return _subst_halpha(ha, m, wmap)


def pred(ha: HAlpha, n_min: int = 1) -> HAlpha:
    """Shift the family by one index: n becomes n - 1.

    ``n_min`` is the smallest n the result will be used at; it licenses
    folding ``(n-1)+1`` back to ``n``.
    """
    m = {"n": N - 1}
    out = _subst_halpha(ha, m, n_min=n_min)
    q = ha.q_count
    if q is not None:
        q = simplify(substitute_many(q, m), n_min)
    return replace(out, q_count=q)


def _split_conjuncts(h: BoolExpr) -> list[BoolExpr]:
    h = simplify(h)
    if h == TRUE:
        return []
    return list(h.args) if isinstance(h, And) else [h]


def split_hypothesis(h: BoolExpr) -> tuple[BoolExpr, BoolExpr]:
    """Split h into (x-part, y-part); conjuncts mixing x and y are unsupported."""
    xs, ys = [], []
    for c in _split_conjuncts(h):
        fv = free_vars(c)
        if "x" in fv and "y" in fv:
            raise Unsupported(f"hypothesis conjunct {c} mixes x and y")
        (ys if "y" in fv else xs).append(c)
    return conj(xs), conj(ys)


def comp_hypothesis(h1: BoolExpr, a1: HAlpha, h2: BoolExpr, a2: HAlpha) -> BoolExpr:
    """Hypothesis of the sequential composition (a1 first, then a2).

    Supported when h1 has no y-conjunct (witness of a1 needed unless h2 has
    no x-conjunct) or symmetrically when h2 has no x-conjunct.
    """
    h1x, h1y = split_hypothesis(h1)
    h2x, h2y = split_hypothesis(h2)
    parts = [h1x, h2y]
    if h1y == TRUE:
        if h2x != TRUE:
            if a1.witness is None:
                raise NoWitness("restricted right hypothesis needs a witness on the left")
            parts += _reach(a1, a1.witness.ys, h2x, left=True)
    elif h2x == TRUE:
        if a2.witness is None:
            raise NoWitness("restricted left hypothesis needs a witness on the right")
        parts += _reach(a2, a2.witness.xs, h1y, left=False)
    else:
        raise Unsupported("both hypotheses constrain the intermediate index")
    return simplify(conj(parts))


def _reach(a: HAlpha, zs, hz: BoolExpr, left: bool) -> list[BoolExpr]:
    out = []
    for z in zs:
        if left:
            g = disj(substitute_many(t.guard, {"y": z}) for t in a.alpha.terms)
            target = substitute_many(hz, {"x": z})
        else:
            g = disj(substitute_many(t.guard, {"x": z}) for t in a.alpha.terms)
            target = substitute_many(hz, {"y": z})
        out.append(Or((Not(g), target)))
    return out


def compose(a1: HAlpha, a2: HAlpha) -> HAlpha:
    """a1 applied first, then a2 (matrix product M2 * M1)."""
    if a2.witness is not None:
        zs = a2.witness.xs
    elif a1.witness is not None:
        zs = a1.witness.ys
    else:
        raise NoWitness("neither side of the composition carries a sparsity witness")
    terms = []
    for j, z in enumerate(zs):
        distinct = [z.ne(zs[i]) for i in range(j)]
        for t1 in a1.alpha.terms:
            g1 = substitute_many(t1.guard, {"y": z})
            p1 = t1.phase.subst({"y": z})
            for t2 in a2.alpha.terms:
                g2 = substitute_many(t2.guard, {"x": z})
                p2 = t2.phase.subst({"x": z})
                g = simplify(conj([g1, g2] + distinct))
                if g == FALSE:
                    continue
                terms.append(Term(g, (p1 + p2).simplified()))
    alpha = Ppsa(simplify(a1.alpha.beta * a2.alpha.beta), tuple(terms))
    wit = None
    if a1.witness is not None and a2.witness is not None:
        xs = tuple(simplify(substitute_many(e1, {"y": e2})) for e2 in a2.witness.xs for e1 in a1.witness.xs)
        ys = tuple(simplify(substitute_many(e2, {"x": e1})) for e1 in a1.witness.ys for e2 in a2.witness.ys)
        wit = SparsityWitness(xs, ys)
    h = comp_hypothesis(a1.h, a1, a2.h, a2)
    q = a1.q_count if a1.q_count == a2.q_count else None
    return HAlpha(h, alpha, wit, q)


def bound_conjuncts(q_count: NatExpr) -> list[BoolExpr]:
    lim = E.Pow2(q_count)
    return [X.lt(lim), Y.lt(lim)]


def extend(ha: HAlpha, q_count: NatExpr | None = None) -> HAlpha:
    """Lift a pair stated on Q(n) qubits to all of N^2 by framing higher bits.

    The bound conjuncts x < 2^Q, y < 2^Q are dropped; the remaining
    hypothesis must be x-only.  Entries whose bits at or above Q differ get
    amplitude 0, which is what any circuit well-typed on Q qubits does.
    """
    q = q_count if q_count is not None else ha.q_count
    if q is None:
        raise PpsaError("extend needs a qubit count")
    drop = {simplify(c) for c in bound_conjuncts(q)}
    rest = [c for c in _split_conjuncts(ha.h) if c not in drop]
    hx = conj(rest)
    if "y" in free_vars(hx):
        raise Unsupported(f"hypothesis {hx} constrains y; cannot frame-extend")
    lim = E.Pow2(q)
    m = {"x": X % lim, "y": Y % lim}
    frame = (X >> q).eq(Y >> q)
    terms = tuple(Term(simplify(And((substitute_many(t.guard, m), frame))), t.phase.subst(m).simplified())
                  for t in ha.alpha.terms)
    wit = None
    if ha.witness is not None:
        hx_y = (Y >> q) << q
        hx_x = (X >> q) << q
        wit = SparsityWitness(
            tuple(simplify(substitute_many(e, {"y": Y % lim}) + hx_y) for e in ha.witness.xs),
            tuple(simplify(substitute_many(e, {"x": X % lim}) + hx_x) for e in ha.witness.ys))
    return HAlpha(simplify(substitute_many(hx, {"x": X % lim})), Ppsa(ha.alpha.beta, terms), wit, q)


# ---------------------------------------------------------------- checks


def disjointness_formula(a: Ppsa) -> BoolExpr:
    gs = [t.guard for t in a.terms]
    pairs = [Not(And((gs[i], gs[j]))) for i in range(len(gs)) for j in range(i + 1, len(gs))]
    return conj(pairs)


def wellformed(a: Ppsa, cfg=None, h: BoolExpr = TRUE, width=None):
    """Guard disjointness, decided by the solver backend."""
    from . import smt
    cfg = cfg or smt.SolverConfig()
    return smt.check_valid(Or((Not(h), disjointness_formula(a))), cfg, width=width)


def witness_formula(a: Ppsa, w: SparsityWitness) -> BoolExpr:
    fired = disj(t.guard for t in a.terms)
    in_xs = disj(X.eq(e) for e in w.xs)
    in_ys = disj(Y.eq(e) for e in w.ys)
    return Or((Not(fired), And((in_xs, in_ys))))


def validate_witness(a: Ppsa, w: SparsityWitness, cfg=None, width=None):
    from . import smt
    cfg = cfg or smt.SolverConfig()
    return smt.check_valid(witness_formula(a, w), cfg, width=width)


# ---------------------------------------------------------------- JSON


def _t(e) -> str | None:
    return None if e is None else E.to_text(e)


def halpha_to_dict(ha: HAlpha) -> dict:
    d = {
        "q_count": _t(ha.q_count),
        "hypothesis": _t(ha.h),
        "beta": _t(ha.alpha.beta),
        "terms": [{"guard": _t(t.guard), "phase": {"num": _t(t.phase.num), "logden": _t(t.phase.logden)}}
                  for t in ha.alpha.terms],
    }
    if ha.witness is not None:
        d["witness"] = {"xs": [_t(e) for e in ha.witness.xs], "ys": [_t(e) for e in ha.witness.ys]}
    return d


def halpha_from_dict(d: Mapping) -> HAlpha:
    terms = tuple(Term(E.parse_bool(t["guard"]),
                       Phase(E.parse_nat(t["phase"]["num"]), E.parse_nat(t["phase"]["logden"])))
                  for t in d["terms"])
    wit = None
    if d.get("witness"):
        wit = SparsityWitness(tuple(E.parse_nat(s) for s in d["witness"]["xs"]),
                              tuple(E.parse_nat(s) for s in d["witness"]["ys"]))
    q = d.get("q_count")
    return HAlpha(E.parse_bool(d.get("hypothesis") or "true"),
                  Ppsa(E.parse_nat(d["beta"]), terms), wit,
                  E.parse_nat(q) if q else None)


def halpha_to_json(ha: HAlpha) -> str:
    return json.dumps(halpha_to_dict(ha), indent=2)


def halpha_from_json(text: str) -> HAlpha:
    return halpha_from_dict(json.loads(text))
