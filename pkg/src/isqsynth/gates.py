"""Gate database: concrete matrices, amplitude templates and sparsity witnesses.

Local matrix convention: bit j of a local basis index belongs to the j-th
gate argument.  Templates take symbolic qubit arguments, so a gate placed on
``(n-1, n)`` yields its amplitude directly without a relabeling pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as E
from .expr import TRUE, BoolExpr, Const, N, NatExpr, X, Y, conj, simplify, substitute_many
from .isqir import CGate, Gate, Program, instantiate, map_qb
from .ppsa import HAlpha, Phase, Ppsa, SparsityWitness, Term, extend, split_hypothesis


class UnknownGate(KeyError):
    def __str__(self) -> str:
        return f"unknown gate {self.args[0]!r}"


class GateError(Exception):
    pass


@dataclass
class Component:
    """A verified program registered as a pseudo-gate."""
    name: str
    program: Program
    ha: HAlpha

    @property
    def q_count(self) -> NatExpr:
        return self.ha.q_count


@dataclass
class GateDef:
    name: str
    arity: int | None
    matrix: Callable[[int], np.ndarray] | None
    template: Callable[[tuple, NatExpr], HAlpha]
    parameterized: bool = False
    decomposition: Callable[[tuple], list] | None = None
    component: Component | None = None

    def arity_at(self, param: int, fixed: bool) -> int | None:
        if self.component is None:
            return self.arity
        if not fixed:
            return 0
        return E.eval_nat(self.component.q_count, {"n": param})


# ---------------------------------------------------------------- template helpers


def _perm_ha(forward: NatExpr, backward: NatExpr, phase: Phase | None = None) -> HAlpha:
    """Permutation gate y = forward(x), x = backward(y)."""
    term = Term(Y.eq(forward), phase or Phase())
    return HAlpha(TRUE, Ppsa(Const(1), (term,)), SparsityWitness((backward,), (forward,)))


def _diag_ha(num: NatExpr, logden: NatExpr) -> HAlpha:
    return HAlpha(TRUE, Ppsa(Const(1), (Term(X.eq(Y), Phase(num, logden)),)),
                  SparsityWitness((Y,), (X,)))


def _flip(v: NatExpr, bit: NatExpr, pos: NatExpr) -> NatExpr:
    return v ^ (bit << pos)


def _update(v: NatExpr, new_bits: Sequence[tuple[NatExpr, NatExpr]]) -> NatExpr:
    """Replace bit ``pos`` of v by ``b`` for each (pos, b); positions distinct."""
    out = v
    for pos, b in new_bits:
        out = out ^ ((v[pos] ^ b) << pos)
    return out


def _t_id(args, p):
    return HAlpha(TRUE, Ppsa(Const(1), (Term(X.eq(Y)),)), SparsityWitness((Y,), (X,)))


def _t_x(args, p):
    (q,) = args
    return _perm_ha(_flip(X, Const(1), q), _flip(Y, Const(1), q))


def _t_y(args, p):
    (q,) = args
    return _perm_ha(_flip(X, Const(1), q), _flip(Y, Const(1), q), Phase(Const(1) + Const(2) * X[q], Const(2)))


def _t_phase(k: int):
    def t(args, p):
        (q,) = args
        return _diag_ha(X[q], Const(k))
    return t


def _t_cphase(k: int | None):
    def t(args, p):
        a, b = args
        return _diag_ha(X[a] * X[b], Const(k) if k is not None else p + 1)
    return t


def _t_h(args, p):
    (q,) = args
    guard = _flip(X, X[q], q).eq(_flip(Y, Y[q], q))
    return HAlpha(TRUE, Ppsa(Const(2), (Term(guard, Phase(X[q] * Y[q], Const(1))),)),
                  SparsityWitness((Y, _flip(Y, Const(1), q)), (X, _flip(X, Const(1), q))))


def _t_cx(args, p):
    c, t = args
    return _perm_ha(_flip(X, X[c], t), _flip(Y, Y[c], t))


def _t_swap(args, p):
    a, b = args
    return _perm_ha(_update(X, [(a, X[b]), (b, X[a])]), _update(Y, [(a, Y[b]), (b, Y[a])]))


def _t_ccx(args, p):
    c1, c2, t = args
    return _perm_ha(_flip(X, X[c1] & X[c2], t), _flip(Y, Y[c1] & Y[c2], t))


def _maj_forward(v, c, b, a):
    b1 = v[b] ^ v[a]
    c1 = v[c] ^ v[a]
    return _update(v, [(b, b1), (c, c1), (a, v[a] ^ (c1 & b1))])


def _maj_backward(v, c, b, a):
    a1 = v[a] ^ (v[c] & v[b])
    return _update(v, [(a, a1), (c, v[c] ^ a1), (b, v[b] ^ a1)])


def _uma_forward(v, c, b, a):
    a1 = v[a] ^ (v[c] & v[b])
    c1 = v[c] ^ a1
    return _update(v, [(a, a1), (c, c1), (b, v[b] ^ c1)])


def _uma_backward(v, c, b, a):
    b1 = v[b] ^ v[c]
    c1 = v[c] ^ v[a]
    return _update(v, [(b, b1), (c, c1), (a, v[a] ^ (c1 & b1))])


def _t_maj(args, p):
    return _perm_ha(_maj_forward(X, *args), _maj_backward(Y, *args))


def _t_uma(args, p):
    return _perm_ha(_uma_forward(X, *args), _uma_backward(Y, *args))


# ---------------------------------------------------------------- matrices


def _perm_matrix(arity: int, f: Callable[[int], int], phase: Callable[[int], complex] | None = None) -> np.ndarray:
    d = 1 << arity
    m = np.zeros((d, d), dtype=complex)
    for l in range(d):
        m[f(l), l] = phase(l) if phase else 1
    return m


def _bit(l: int, j: int) -> int:
    return (l >> j) & 1


def _maj_local(l: int) -> int:
    c, b, a = _bit(l, 0), _bit(l, 1), _bit(l, 2)
    b ^= a
    c ^= a
    a ^= c & b
    return c | (b << 1) | (a << 2)


def _uma_local(l: int) -> int:
    c, b, a = _bit(l, 0), _bit(l, 1), _bit(l, 2)
    a ^= c & b
    c ^= a
    b ^= c
    return c | (b << 1) | (a << 2)


_S2 = 1 / math.sqrt(2)


def _phase(k: int):
    return lambda p: np.diag([1, np.exp(2j * np.pi / 2 ** k)])


def _cphase(k: int | None):
    def m(p):
        w = k if k is not None else p + 1
        return np.diag([1, 1, 1, np.exp(2j * np.pi / 2 ** w)])
    return m


_MATRICES = {
    "ID": lambda p: np.eye(2, dtype=complex),
    "X": lambda p: np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": lambda p: np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": lambda p: np.diag([1, -1]).astype(complex),
    "H": lambda p: np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "S": _phase(2),
    "T": _phase(3),
    "CZ": _cphase(1),
    "CS": _cphase(2),
    "CT": _cphase(3),
    "CP": _cphase(None),
    "CX": lambda p: _perm_matrix(2, lambda l: l ^ (_bit(l, 0) << 1)),
    "SWAP": lambda p: _perm_matrix(2, lambda l: (_bit(l, 0) << 1) | _bit(l, 1)),
    "CCX": lambda p: _perm_matrix(3, lambda l: l ^ ((_bit(l, 0) & _bit(l, 1)) << 2)),
    "MAJ": lambda p: _perm_matrix(3, _maj_local),
    "UMA": lambda p: _perm_matrix(3, _uma_local),
}

_DECOMP = {
    "MAJ": lambda q: [("CX", (q[2], q[1])), ("CX", (q[2], q[0])), ("CCX", (q[0], q[1], q[2]))],
    "UMA": lambda q: [("CCX", (q[0], q[1], q[2])), ("CX", (q[2], q[0])), ("CX", (q[0], q[1]))],
}


def _builtin_defs() -> dict[str, GateDef]:
    spec = {
        "ID": (1, _t_id), "X": (1, _t_x), "Y": (1, _t_y), "Z": (1, _t_phase(1)),
        "H": (1, _t_h), "S": (1, _t_phase(2)), "T": (1, _t_phase(3)),
        "CZ": (2, _t_cphase(1)), "CS": (2, _t_cphase(2)), "CT": (2, _t_cphase(3)),
        "CP": (2, _t_cphase(None)), "CX": (2, _t_cx), "SWAP": (2, _t_swap),
        "CCX": (3, _t_ccx), "MAJ": (3, _t_maj), "UMA": (3, _t_uma),
    }
    return {name: GateDef(name, a, _MATRICES[name], t, parameterized=(name == "CP"),
                          decomposition=_DECOMP.get(name))
            for name, (a, t) in spec.items()}


ALIASES = {"CNOT": "CX", "TOFFOLI": "CCX", "I": "ID"}


# ---------------------------------------------------------------- matrix-defined gates


def _dyadic(z: complex, mag: float, max_log: int = 16) -> tuple[int, int] | None:
    if abs(abs(z) - mag) > 1e-9:
        return None
    turns = (math.atan2(z.imag, z.real) / (2 * math.pi)) % 1.0
    for w in range(max_log + 1):
        num = round(turns * (1 << w))
        if abs(num / (1 << w) - turns) < 1e-9:
            return num % (1 << w), w
    return None


def matrix_gate(name: str, matrix) -> GateDef:
    """Gate from an explicit unitary with uniform magnitudes and dyadic phases."""
    m = np.asarray(matrix, dtype=complex)
    d = m.shape[0]
    arity = d.bit_length() - 1
    if m.shape != (d, d) or d != 1 << arity:
        raise GateError("matrix must be square with power-of-two dimension")
    if not np.allclose(m.conj().T @ m, np.eye(d), atol=1e-9):
        raise GateError(f"{name} is not unitary")
    nz = np.abs(m) > 1e-12
    mag = float(np.abs(m[nz]).max())
    beta = round(1 / mag ** 2)
    if abs(1 / math.sqrt(beta) - mag) > 1e-9:
        raise GateError(f"{name}: magnitude {mag} is not 1/sqrt of an integer")
    entries = []
    for r in range(d):
        for c in range(d):
            if nz[r, c]:
                ph = _dyadic(complex(m[r, c]), mag)
                if ph is None:
                    raise GateError(f"{name}: entry ({r},{c}) has a non-dyadic phase or magnitude")
                entries.append((c, r, ph))

    def template(args, p):
        if len(args) != arity:
            raise GateError(f"{name} takes {arity} qubits")
        gx = sum((X[q] << j for j, q in enumerate(args)), Const(0))
        gy = sum((Y[q] << j for j, q in enumerate(args)), Const(0))
        rest_x = X ^ sum((X[q] << q for q in args), Const(0))
        rest_y = Y ^ sum((Y[q] << q for q in args), Const(0))
        frame = rest_x.eq(rest_y)
        terms = tuple(Term(conj([gx.eq(c), gy.eq(r), frame]), Phase(Const(num), Const(w)))
                      for c, r, (num, w) in entries)
        scat = lambda rest, v: rest + sum((Const((v >> j) & 1) << q for j, q in enumerate(args)), Const(0))
        wit = SparsityWitness(tuple(scat(rest_y, v) for v in range(d)), tuple(scat(rest_x, v) for v in range(d)))
        return HAlpha(TRUE, Ppsa(Const(beta), terms), wit)

    return GateDef(name, arity, lambda p: m, template)


# ---------------------------------------------------------------- components


def _component_template(comp: Component):
    ha = comp.ha

    def template(args, size):
        if not args:
            fam = extend(ha) if size == N else extend(_at(ha, size))
            return replace(fam, q_count=None)
        m = size
        a = E.eval_nat(comp.q_count, {"n": E.eval_nat(m, {})}) if not E.free_vars(m) else None
        if a is None or a != len(args):
            raise GateError(f"{comp.name}{{{m}}} acts on {a} qubits, got {len(args)} arguments")
        inst = _at(ha, m)
        hx, _ = split_hypothesis(_strip_bounds(inst))
        gx = sum((X[q] << j for j, q in enumerate(args)), Const(0))
        gy = sum((Y[q] << j for j, q in enumerate(args)), Const(0))
        rest_x = X ^ sum((X[q] << q for q in args), Const(0))
        rest_y = Y ^ sum((Y[q] << q for q in args), Const(0))
        sub = {"x": gx, "y": gy}
        frame = rest_x.eq(rest_y)
        terms = tuple(Term(conj([substitute_many(t.guard, sub), frame]), t.phase.subst(sub))
                      for t in inst.alpha.terms)
        wit = None
        if inst.witness is not None:
            def scat(rest, v):
                return rest + sum(((v[j]) << q for j, q in enumerate(args)), Const(0))
            wit = SparsityWitness(
                tuple(simplify(scat(rest_y, substitute_many(e, {"y": gy}))) for e in inst.witness.xs),
                tuple(simplify(scat(rest_x, substitute_many(e, {"x": gx}))) for e in inst.witness.ys))
        h = simplify(substitute_many(hx, {"x": gx}))
        return HAlpha(h, Ppsa(inst.alpha.beta, terms), wit)

    return template


def _at(ha: HAlpha, m: NatExpr) -> HAlpha:
    sub = {"n": m}
    wit = ha.witness.subst(sub) if ha.witness else None
    return HAlpha(simplify(substitute_many(ha.h, sub)), ha.alpha.subst(sub).simplified(), wit,
                  simplify(substitute_many(ha.q_count, sub)) if ha.q_count is not None else None)


def _strip_bounds(ha: HAlpha) -> BoolExpr:
    from .ppsa import _split_conjuncts, bound_conjuncts
    drop = {simplify(c) for c in bound_conjuncts(ha.q_count)} if ha.q_count is not None else set()
    return conj(c for c in _split_conjuncts(ha.h) if c not in drop)


def component_def(comp: Component) -> GateDef:
    return GateDef(comp.name, None, None, _component_template(comp), component=comp)


# ---------------------------------------------------------------- database


class GateDatabase:
    def __init__(self, defs: Mapping[str, GateDef] | None = None):
        self._defs: dict[str, GateDef] = dict(defs if defs is not None else _builtin_defs())

    def copy(self) -> "GateDatabase":
        return GateDatabase(self._defs)

    def names(self) -> list[str]:
        return list(self._defs)

    def lookup(self, name: str) -> GateDef:
        key = ALIASES.get(name.upper(), name) if name.upper() in ALIASES else name
        try:
            return self._defs[key]
        except KeyError:
            raise UnknownGate(name) from None

    def __contains__(self, name: str) -> bool:
        try:
            self.lookup(name)
            return True
        except UnknownGate:
            return False

    def register(self, gd: GateDef) -> None:
        self._defs[gd.name] = gd

    def register_component(self, comp: Component) -> None:
        if comp.ha.q_count is None:
            raise GateError("component amplitude needs a qubit count")
        self.register(component_def(comp))

    def family_width(self, name: str, param: int) -> int | None:
        """Qubit count of an argument-free use of a component family."""
        if name.startswith("oracle:"):
            return None
        gd = self.lookup(name)
        if gd.component is None:
            return None
        return E.eval_nat(gd.component.q_count, {"n": param})

    def instantiate(self, prog: Program, n: int, oracle=None) -> list[CGate]:
        return instantiate(prog, n, oracle, widths=self.family_width)

    def arity(self, g: CGate) -> int | None:
        if g.name.startswith("oracle:"):
            return None
        gd = self.lookup(g.name)
        if gd.component is not None:
            return None
        return gd.arity if not (gd.name == "ID" and not g.qubits) else 0

    # ------------------------------------------------------------ expansion

    def expand(self, gates: Sequence[CGate], primitive: bool = False) -> list[CGate]:
        """Replace components (and, if ``primitive``, MAJ/UMA) by their gate lists."""
        out: list[CGate] = []
        for g in gates:
            if g.name.startswith("oracle:"):
                out.append(g)
                continue
            gd = self.lookup(g.name)
            if gd.component is not None:
                inner = self.instantiate(gd.component.program, g.param)
                if g.qubits:
                    a = E.eval_nat(gd.component.q_count, {"n": g.param})
                    if len(g.qubits) != a:
                        raise GateError(f"{g.name}{{{g.param}}} acts on {a} qubits")
                    inner = map_qb(g.qubits, inner)
                out.extend(self.expand(inner, primitive))
            elif primitive and gd.decomposition is not None:
                out.extend(CGate(n, qs, g.param) for n, qs in gd.decomposition(g.qubits))
            elif gd.name == "ID":
                continue
            else:
                if gd.name != self.lookup(g.name).name or g.name != gd.name:
                    g = CGate(gd.name, g.qubits, g.param)
                out.append(g)
        return out

    def matrix(self, g: CGate) -> np.ndarray:
        gd = self.lookup(g.name)
        if gd.matrix is None:
            raise GateError(f"{g.name} has no direct matrix; expand it first")
        return gd.matrix(g.param)


def default_db() -> GateDatabase:
    return GateDatabase()


def derive_gate_halpha(g: Gate, db: GateDatabase | None = None) -> HAlpha:
    """Amplitude of one gate placed on symbolic qubits."""
    db = db or default_db()
    gd = db.lookup(g.name)
    if gd.component is None and gd.name != "ID" and len(g.args) != gd.arity:
        raise GateError(f"{g.name} takes {gd.arity} qubits, got {len(g.args)}")
    size = g.size if g.size is not None else N
    ha = gd.template(tuple(g.args), size)
    return HAlpha(ha.h, ha.alpha.simplified(), ha.witness.simplified() if ha.witness else None, ha.q_count)


def load_extension(path: str, db: GateDatabase) -> None:
    """Register matrix-defined gates from a JSON file.

    Format: ``[{"name": ..., "matrix": [[[re, im], ...], ...]}, ...]``.
    """
    with open(path) as fh:
        items = json.load(fh)
    for item in items:
        m = np.array([[complex(*v) if isinstance(v, list) else complex(v) for v in row] for row in item["matrix"]])
        db.register(matrix_gate(item["name"], m))
