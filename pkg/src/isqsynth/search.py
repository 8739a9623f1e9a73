"""Enumerative top-down synthesis of ISQIR programs.

Candidates are generated in nondecreasing size (gate and constructor nodes,
see ``isqir.program_size``), cheap dense fingerprints reject most of them, and
the survivors go to the verifier in order.  The first accepted program wins.
"""

from __future__ import annotations

import itertools
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import expr as E
from . import smt
from .expr import N, NatExpr, PermExpr, simplify
from .gates import Component, GateDatabase, UnknownGate, default_db
from .isqir import CGate, ConstProg, FixProg, Gate, Program, instantiate, map_qb
from .ppsa import HAlpha, validate_witness
from .sim import DimensionTooLarge, apply_circuit, hypothesis_mask, ppsa_to_matrix, sqir_to_unitary
from .verifier import ProofTrace, check_judgement

SELF_INVERSE = frozenset({"H", "X", "Y", "Z", "CX", "CZ", "SWAP", "CCX"})


class VerificationFailed(Exception):
    pass


class WitnessInvalid(Exception):
    pass


@dataclass(frozen=True)
class SearchBounds:
    max_program_length: int = 10
    fix_k_choices: tuple = (1, 2, 3)
    perm_derivation_depth: int = 4
    const_range: tuple = (0, 3)
    wall_clock_limit: float | None = None
    # fixed gate lists cannot track a growing register, so keep them short
    max_const_length: int = 2
    fingerprint_levels: int = 3
    fingerprint_width: int = 10
    dedup_levels: int = 4


@dataclass(frozen=True)
class GateSet:
    names: tuple

    @classmethod
    def parse(cls, text: str) -> "GateSet":
        return cls(tuple(t.strip() for t in text.split(",") if t.strip()))

    def resolve(self, db: GateDatabase) -> list[tuple[str, int]]:
        """(canonical name, arity) pairs; arity 0 marks a component family."""
        out = []
        for name in self.names:
            gd = db.lookup(name)
            if gd.name == "ID":
                continue
            out.append((gd.name, 0 if gd.component is not None else gd.arity))
        return out


@dataclass
class SearchReport:
    generated: int = 0
    verified: int = 0
    rejections: Counter = field(default_factory=Counter)
    elapsed: float = 0.0
    accepted: Program | None = None
    exhausted: bool = False
    timed_out: bool = False

    def to_dict(self) -> dict:
        from .isqir import to_text
        return {"generated": self.generated, "verified": self.verified,
                "rejections": dict(sorted(self.rejections.items())),
                "elapsed": round(self.elapsed, 3),
                "accepted": to_text(self.accepted) if self.accepted is not None else None,
                "exhausted": self.exhausted, "timed_out": self.timed_out}


@dataclass
class SearchResult:
    program: Program
    trace: ProofTrace
    report: SearchReport
    ok = True


@dataclass
class Failure:
    report: SearchReport
    ok = False


# ---------------------------------------------------------------- candidate space


def _values(e: NatExpr, ns) -> tuple | None:
    try:
        return tuple(E.eval_nat(e, {"n": n}) for n in ns)
    except E.ExprError:
        return None


class _Space:
    """All building blocks of candidates, deduplicated per recursion arity k."""

    def __init__(self, gs: GateSet, b: SearchBounds, db: GateDatabase,
                 q_count: NatExpr, anchors: Sequence[NatExpr] = ()):
        self.b = b
        self.db = db
        self.q = q_count
        self.gates = gs.resolve(db)
        self.anchors = tuple(anchors)
        self._cache: dict = {}

    def width(self, n: int) -> int:
        return E.eval_nat(self.q, {"n": n})

    def levels(self, k: int) -> range:
        return range(k, k + self.b.dedup_levels)

    # -- expressions

    def arg_pool(self, k: int) -> list[NatExpr]:
        key = ("args", k)
        if key in self._cache:
            return self._cache[key]
        lo, hi = self.b.const_range
        # n - c only where it never saturates
        rel = [N - c for c in range(min(hi, k), 0, -1)] + [N] + [N + c for c in range(1, hi + 1)]
        rel += [simplify(a) for a in self.anchors] + [simplify(self.q - 1)]
        rel = [e for e in rel if E.free_vars(e)]
        consts = [E.Const(c) for c in range(lo, hi + 1)]
        ns = self.levels(k)
        widths = [self.width(n) for n in ns]
        out, seen = [], set()
        # n-relative positions first: a recursive step usually touches the new qubit
        for e in sorted(rel, key=lambda e: (E.size(e), E.to_text(e))) + consts:
            v = _values(e, ns)
            if v is None or v in seen or any(x >= w for x, w in zip(v, widths)):
                continue
            seen.add(v)
            out.append(e)
        self._cache[key] = out
        return out

    def bound_pool(self, k: int) -> list[NatExpr]:
        ns = self.levels(k)
        out, seen = [], set()
        for e in self.arg_pool(k) + [simplify(self.q)]:
            v = _values(e, ns)
            if v not in seen:
                seen.add(v)
                out.append(e)
        return out

    # -- permutations

    def _table(self, p: PermExpr, n: int) -> tuple | None:
        w = self.width(n)
        try:
            t = tuple(E.eval_perm(p, n, q) for q in range(w))
        except E.ExprError:
            return None
        if sorted(t) != list(range(w)):
            return None
        return t

    def _perm_key(self, tables, k: int) -> tuple:
        # only the image of the recursive call's qubits matters
        return tuple(t[:self.width(n - 1)] for t, n in zip(tables, self.levels(k)))

    def perm_atoms(self, k: int) -> list[tuple[PermExpr, tuple]]:
        key = ("patoms", k)
        if key in self._cache:
            return self._cache[key]
        pool = self.bound_pool(k)
        ns = list(self.levels(k))
        cands: list[PermExpr] = [E.PId()]
        cands += [E.PSwap(a, c) for a, c in itertools.combinations(pool, 2)]
        ms = [E.Const(m) for m in range(max(self.b.const_range[0], 1), self.b.const_range[1] + 1)]
        cands += [E.PShift(a, c, m) for a, c in itertools.permutations(pool, 2) for m in ms]
        out = []
        for p in cands:
            tables = tuple(self._table(p, n) for n in ns)
            if any(t is None for t in tables):
                continue
            if isinstance(p, E.PShift) and any(
                    E.eval_nat(p.lo, {"n": n}) >= E.eval_nat(p.hi, {"n": n}) for n in ns):
                continue
            out.append((p, tables))
        self._cache[key] = out
        return out

    def perms(self, k: int, size: int) -> list[PermExpr]:
        """Semantically distinct permutations of a given expression size."""
        key = ("perms", k)
        if key not in self._cache:
            self._cache[key] = ({}, set())
        by_size, seen = self._cache[key]
        if size in by_size:
            return by_size[size]
        atoms = self.perm_atoms(k)
        n_atoms = (size + 1) // 2
        if size % 2 == 0 or n_atoms > self.b.perm_derivation_depth:
            by_size[size] = []
            return []
        for s in range(1, size, 2):
            self.perms(k, s)
        out = []
        if size == 1:
            pairs = [(p, t) for p, t in atoms]
        else:
            prev = by_size.get(("tab", size - 2), [])
            pairs = []
            for (p, t) in prev:
                for (a, ta) in atoms:
                    if isinstance(a, E.PId):
                        continue
                    tables = tuple(tuple(tb[i] for i in tp) for tp, tb in zip(t, ta))
                    pairs.append((E.PComp(p, a), tables))
        keep = []
        for p, tables in pairs:
            pk = self._perm_key(tables, k)
            if pk in seen:
                continue
            seen.add(pk)
            keep.append((p, tables))
            out.append(p)
        by_size[("tab", size)] = keep
        by_size[size] = out
        return out

    # -- gates and gate lists

    def _cg(self, g: Gate, n: int) -> list[CGate]:
        return instantiate(ConstProg((g,)), n, widths=self.db.family_width)

    def _cg_list(self, gl: tuple, n: int) -> list[CGate]:
        return [c for g in gl for c in self._cg(g, n)]

    def step_atoms(self, k: int) -> list[Gate]:
        key = ("atoms", k)
        if key not in self._cache:
            pool = self.arg_pool(k)
            out = []
            for name, arity in self.gates:
                if arity == 0:
                    out.append(Gate(name))
                else:
                    out += [Gate(name, args) for args in itertools.permutations(pool, arity)]
            self._cache[key] = out
        return self._cache[key]

    def base_atoms(self, i: int) -> list[Gate]:
        key = ("batoms", i)
        if key not in self._cache:
            lo, hi = self.b.const_range
            w = self.width(i)
            pool = [E.Const(c) for c in range(lo, min(hi, w - 1) + 1)]
            out = []
            for name, arity in self.gates:
                if arity == 0:
                    out.append(Gate(name, (), E.Const(i)))
                else:
                    out += [Gate(name, args) for args in itertools.permutations(pool, arity)]
            self._cache[key] = out
        return self._cache[key]

    def _well_typed(self, gl: tuple, ns) -> tuple | None:
        """Concrete instantiation at each level, or None when ill-typed."""
        out = []
        for n in ns:
            w = self.width(n)
            try:
                cg = [c for g in gl for c in self._cg(g, n)]
            except Exception:
                return None
            for c in cg:
                if any(q >= w for q in c.qubits) or len(set(c.qubits)) != len(c.qubits):
                    return None
            out.append(tuple(cg))
        return tuple(out)

    @staticmethod
    def _canonical(inst: tuple) -> bool:
        """Reject adjacent self-inverse pairs and out-of-order commuting pairs."""
        for level in inst:
            for g1, g2 in zip(level, level[1:]):
                if g1 == g2 and g1.name in SELF_INVERSE:
                    return False
        first = inst[0]
        for j in range(len(first) - 1):
            if all(not set(lv[j].qubits) & set(lv[j + 1].qubits) for lv in inst):
                if (first[j].name, first[j].qubits) > (first[j + 1].name, first[j + 1].qubits):
                    return False
        return True

    def gate_lists(self, tag: str, k: int, length: int) -> list[tuple]:
        """Distinct well-typed gate lists; length 1 includes the empty list (ID)."""
        key = ("lists", tag, k, length)
        if key in self._cache:
            return self._cache[key]
        if tag == "step":
            atoms, ns = self.step_atoms(k), self.levels(k)
        else:
            atoms, ns = self.base_atoms(k), (k,)
        seen = self._cache.setdefault(("seen", tag, k), set())
        out = []
        if length == 1:
            seen.add(((),) * len(ns))
            out.append(())
        for gl in itertools.product(atoms, repeat=length):
            inst = self._well_typed(gl, ns)
            if inst is None or inst in seen or not self._canonical(inst):
                continue
            seen.add(inst)
            out.append(gl)
        self._cache[key] = out
        return out


def _const(gl: tuple) -> ConstProg:
    return ConstProg(gl if gl else (Gate("ID"),))


def _compositions(total: int, parts: int) -> Iterator[tuple]:
    """Ordered tuples of positive integers summing to total."""
    if parts == 1:
        if total >= 1:
            yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _fix_shapes(size: int, b: SearchBounds) -> Iterator[tuple]:
    """(k, perm size, base lengths, left length, right length) for one total size."""
    for k in sorted(b.fix_k_choices):
        for split in _compositions(size - 1, k + 3):
            p, bases, l, r = split[0], split[1:1 + k], split[1 + k], split[2 + k]
            if p % 2 == 1:
                yield k, p, bases, l, r


def _anchors(spec) -> list[NatExpr]:
    if spec is None or getattr(spec, "layout", None) is None:
        return []
    out = []
    for seg in spec.layout.segments:
        out += [seg.lo, seg.hi]
    return out


def enumerate_candidates(gs: GateSet, b: SearchBounds | None = None, db: GateDatabase | None = None,
                         q_count: NatExpr | None = None, spec=None) -> Iterator[Program]:
    """All well-typed, canonically distinct candidates in nondecreasing size.

    Without a qubit count the family is assumed to act on n+1 qubits.
    """
    b = b or SearchBounds()
    db = db or default_db()
    q = q_count if q_count is not None else (spec.q_count if spec is not None else N + 1)
    sp = _Space(gs, b, db, q, _anchors(spec))
    for size in range(1, b.max_program_length + 1):
        if size <= b.max_const_length:
            for gl in sp.gate_lists("step", 0, size):
                yield _const(gl)
        for k, p, blens, l, r in _fix_shapes(size, b):
            for perm in sp.perms(k, p):
                for bases in itertools.product(*(sp.gate_lists("base", i, bl) for i, bl in enumerate(blens))):
                    for left in sp.gate_lists("step", k, l):
                        for right in sp.gate_lists("step", k, r):
                            yield FixProg(k, perm, tuple(g if g else (Gate("ID"),) for g in bases),
                                          _const(left), _const(right))


# ---------------------------------------------------------------- fingerprints


class _Fingerprint:
    """Dense target columns per level, restricted to the hypothesis."""

    def __init__(self, target: HAlpha, db: GateDatabase, max_width: int):
        self.target = target
        self.db = db
        self.max_width = max_width
        self._lv: dict = {}

    def level(self, n: int):
        if n not in self._lv:
            w = E.eval_nat(self.target.q_count, {"n": n})
            if w > self.max_width:
                self._lv[n] = None
            else:
                mask = hypothesis_mask(self.target.h, n, w)
                cols = np.flatnonzero(mask.any(axis=0))
                t = ppsa_to_matrix(self.target.alpha, n, w)[:, cols]
                full = bool(mask[:, cols].all())
                self._lv[n] = (w, mask[:, cols], cols, t, full)
        return self._lv[n]

    def start(self, n: int) -> np.ndarray | None:
        lv = self.level(n)
        if lv is None:
            return None
        w, _, cols, _, _ = lv
        s = np.zeros((1 << w, len(cols)), dtype=complex)
        s[cols, np.arange(len(cols))] = 1
        return s

    def run(self, gates, n: int, state=None) -> np.ndarray | None:
        lv = self.level(n)
        if lv is None:
            return None
        s = self.start(n) if state is None else state
        return apply_circuit(s, gates, lv[0], self.db)

    def matches(self, state: np.ndarray, n: int, tol: float = 1e-9) -> bool:
        _, mask, _, t, _ = self.level(n)
        return bool(np.all(np.abs(state - t)[mask] <= tol))

    def check(self, gates, n: int) -> bool | None:
        st = self.run(gates, n)
        return None if st is None else self.matches(st, n)


def _key(m: np.ndarray) -> bytes:
    r = np.round(m, 7) + 0.0
    return np.ascontiguousarray(r).tobytes()


# ---------------------------------------------------------------- synthesis


def synthesize(spec, gs: GateSet, b: SearchBounds | None = None, cfg: smt.SolverConfig | None = None,
               db: GateDatabase | None = None, invariant: HAlpha | None = None) -> SearchResult | Failure:
    """Return the first candidate the verifier accepts.

    ``spec`` is a compiled spec (or anything with hypothesis, alpha, q_count).
    With an invariant, fixpoints are proved against it and then weakened.
    """
    b = b or SearchBounds()
    cfg = cfg or smt.SolverConfig()
    db = db or default_db()
    rep = SearchReport()
    t0 = time.monotonic()
    target = spec.halpha() if hasattr(spec, "halpha") else spec
    fix_target = invariant if invariant is not None else target
    if fix_target.q_count is None:
        fix_target = HAlpha(fix_target.h, fix_target.alpha, fix_target.witness, target.q_count)
    sp = _Space(gs, b, db, target.q_count, _anchors(spec))
    fp_plain = _Fingerprint(target, db, b.fingerprint_width)
    fp_fix = _Fingerprint(fix_target, db, b.fingerprint_width)

    def out_of_time() -> bool:
        if b.wall_clock_limit is not None and time.monotonic() - t0 > b.wall_clock_limit:
            rep.timed_out = True
            return True
        return False

    def verify(prog: Program):
        rep.verified += 1
        tr = check_judgement(target.h, prog, target.alpha, target.q_count, cfg, db,
                             invariant=invariant if isinstance(prog, FixProg) else None)
        if tr.accepted:
            rep.accepted = prog
            rep.elapsed = time.monotonic() - t0
            return SearchResult(prog, tr, rep)
        fails = tr.failures()
        rep.rejections["verifier:" + (fails[0].verdict if fails else "error")] += 1
        return None

    for size in range(1, b.max_program_length + 1):
        if size <= b.max_const_length:
            for gl in sp.gate_lists("step", 0, size):
                rep.generated += 1
                if out_of_time():
                    break
                prog = _const(gl)
                if not _const_fingerprint(prog, sp, fp_plain, b, rep):
                    continue
                res = verify(prog)
                if res:
                    return res
        for k, p, blens, l, r in _fix_shapes(size, b):
            if out_of_time():
                break
            res = _search_fix(sp, fp_fix, k, p, blens, l, r, rep, verify, out_of_time, b)
            if res:
                return res
        if rep.timed_out:
            break
    rep.exhausted = not rep.timed_out
    rep.elapsed = time.monotonic() - t0
    return Failure(rep)


def _const_fingerprint(prog, sp: _Space, fp: _Fingerprint, b: SearchBounds, rep: SearchReport) -> bool:
    for n in range(b.fingerprint_levels):
        try:
            ok = fp.check(sp.db.instantiate(prog, n), n)
        except (DimensionTooLarge, E.ExprError, UnknownGate, ValueError):
            ok = False
        if ok is False:
            rep.rejections[f"fingerprint n={n}"] += 1
            return False
    return True


def _valid_bases(sp: _Space, fp: _Fingerprint, i: int, length: int, rep: SearchReport) -> list[tuple]:
    key = ("valid_bases", i, length)
    if key not in sp._cache:
        good = []
        for gl in sp.gate_lists("base", i, length):
            cg = sp.db.instantiate(_const(gl), i)
            ok = fp.check(cg, i)
            if ok is None or ok:
                good.append((gl, cg))
        sp._cache[key] = good
    return sp._cache[key]


def _search_fix(sp: _Space, fp: _Fingerprint, k, p, blens, l, r, rep, verify, out_of_time, b):
    base_sets = [_valid_bases(sp, fp, i, bl, rep) for i, bl in enumerate(blens)]
    lefts = sp.gate_lists("step", k, l)
    rights = sp.gate_lists("step", k, r)
    per = len(lefts) * len(rights)
    lv = fp.level(k)
    if lv is None:
        return None
    w, _, _, t, full = lv
    right_index = None
    if full:
        # M·S_L = S_R^dagger·T on the hypothesis columns; index the right side
        right_index = {}
        for j, gl in enumerate(rights):
            u = sqir_to_unitary(sp.db.expand(list(sp._cg_list(gl, k))), w, sp.db)
            right_index.setdefault(_key(u.conj().T @ t), []).append(j)
    for perm in sp.perms(k, p):
        for bases in itertools.product(*base_sets):
            if out_of_time():
                return None
            circuits = [cg for _, cg in bases]
            try:
                rec = map_qb(lambda q: E.eval_perm(perm, k, q), circuits[k - 1])
            except E.ExprError:
                rep.generated += per
                rep.rejections["ill-typed"] += per
                continue
            for left in lefts:
                lcg = sp._cg_list(left, k)
                st = fp.run(list(lcg) + rec, k)
                if right_index is not None:
                    hits = right_index.get(_key(st), [])
                    rep.generated += len(rights)
                    rep.rejections["fingerprint n=%d" % k] += len(rights) - len(hits)
                    cands = [rights[j] for j in hits]
                else:
                    cands = []
                    for right in rights:
                        rep.generated += 1
                        s2 = fp.run(sp._cg_list(right, k), k, st)
                        if fp.matches(s2, k):
                            cands.append(right)
                        else:
                            rep.rejections["fingerprint n=%d" % k] += 1
                for right in cands:
                    prog = FixProg(k, perm, tuple(gl if gl else (Gate("ID"),) for gl, _ in bases),
                                   _const(left), _const(right))
                    if not _deep_fingerprint(prog, sp, fp, k, rep, b):
                        continue
                    res = verify(prog)
                    if res:
                        return res
    return None


def _deep_fingerprint(prog, sp: _Space, fp: _Fingerprint, k: int, rep: SearchReport, b: SearchBounds) -> bool:
    for n in range(k, k + b.fingerprint_levels):
        try:
            ok = fp.check(sp.db.instantiate(prog, n), n)
        except (E.ExprError, ValueError):
            ok = False
        if ok is False:
            rep.rejections[f"fingerprint n={n}"] += 1
            return False
    return True


# ---------------------------------------------------------------- components


def register_component(db: GateDatabase, name: str, program: Program, ha: HAlpha,
                       cfg: smt.SolverConfig | None = None, invariant: HAlpha | None = None) -> ProofTrace:
    """Verify a program against its pair and witness, then expose it as a gate family."""
    cfg = cfg or smt.SolverConfig()
    if ha.witness is None:
        raise WitnessInvalid(f"{name}: no sparsity witness supplied")
    if ha.q_count is None:
        raise VerificationFailed(f"{name}: the pair needs a qubit count")
    tr = check_judgement(ha.h, program, ha, cfg=cfg, db=db, invariant=invariant)
    if not tr.accepted:
        raise VerificationFailed(f"{name}: program does not meet its pair")
    res = validate_witness(ha.alpha, ha.witness, cfg, width=ha.q_count)
    if res.verdict != smt.Verdict.VALID:
        raise WitnessInvalid(f"{name}: witness check {res.verdict.value} {res.detail}")
    db.register_component(Component(name, program, ha))
    return tr
