import numpy as np
import pytest

from isqsynth import expr as E
from isqsynth import isqir as I
from isqsynth import ppsa as P
from isqsynth import sim
from isqsynth import spec as S
from isqsynth.verifier import amplitude_equality, check_judgement, derive_halpha

from .util import db_with_zc, load_program, load_spec, needs_solver

pytestmark = needs_solver


def _check(spec, prog, invariant=None, db=None):
    cs = load_spec(spec)
    p = prog if isinstance(prog, I.Program) else load_program(prog)
    inv = load_spec(invariant).halpha() if invariant else None
    return check_judgement(cs.hypothesis, p, cs.halpha(), db=db, invariant=inv)


@pytest.mark.parametrize("spec,prog,inv", [
    ("ghz", "ghz", None),
    ("uniform", "uniform", None),
    ("zc", "zc", None),
    ("hlayer", "hlayer", None),
    ("cuccaro", "cuccaro", "cuccaro_carry"),
    ("subtractor", "subtractor", "subtractor_borrow"),
    ("inversion", "inversion", "inversion_step"),
])
def test_benchmarks_accepted(spec, prog, inv):
    tr = _check(spec, prog, inv)
    assert tr.accepted, [o.to_dict() for o in tr.failures()]


def test_qft_with_registered_component():
    assert _check("qft", "qft", db=db_with_zc()).accepted


def test_literal_cuccaro_is_not_inductive():
    tr = _check("cuccaro", "cuccaro")
    assert not tr.accepted
    assert tr.failures()


GHZ_MUTANTS = [
    "fix_1 id [[H 0]] (const [ID]) (const [CX n (- n 1)])",
    "fix_1 id [[X 0]] (const [ID]) (const [CX (- n 1) n])",
    "fix_1 id [[H 0]] (const [CX (- n 1) n]) (const [ID])",
    "fix_1 id [[H 0]] (const [ID]) (const [CX 0 n; Z n])",
    "fix_1 (shift 0 (+ n 1) 1) [[H 0]] (const [ID]) (const [CX (- n 1) n])",
    "fix_1 id [[H 0]] (const [ID]) (const [CZ (- n 1) n])",
]


@pytest.mark.parametrize("text", GHZ_MUTANTS)
def test_ghz_mutants_rejected(db, text):
    cs = load_spec("ghz")
    p = I.parse_program(text)
    tr = check_judgement(cs.hypothesis, p, cs.halpha(), db=db)
    dense_ok = all(
        sim.first_mismatch(sim.sqir_to_unitary(db.instantiate(p, n), n + 1, db), cs.alpha, cs.hypothesis, n) is None
        for n in range(6))
    assert not dense_ok
    assert not tr.accepted


def test_counterexample_is_genuine(db):
    cs = load_spec("ghz")
    p = I.parse_program(GHZ_MUTANTS[0])
    tr = check_judgement(cs.hypothesis, p, cs.halpha(), db=db)
    cx = next(o.counterexample for o in tr.failures() if o.counterexample)
    n, x, y = cx["n"], cx["x"], cx["y"]
    u = sim.sqir_to_unitary(db.instantiate(p, n), n + 1, db)
    assert abs(u[y, x] - P.eval_entry(cs.alpha, n, x, y)) > 1e-9


def test_teleport_corrected_accepted_literal_rejected():
    assert _check("teleport", "teleport").accepted
    tr = _check("teleport_literal", "teleport")
    assert not tr.accepted
    cx = next(o.counterexample for o in tr.failures() if o.counterexample)
    assert cx["n"] == 0


def test_const_program_against_bell_pair(db):
    cs = S.compile_spec("Bell : |0_2> -> |0_2> (+) |3_2>")
    n_free = I.parse_program("const [H 0; CX 0 1]")
    assert check_judgement(cs.hypothesis, n_free, cs.halpha(), db=db).accepted
    assert not check_judgement(cs.hypothesis, I.parse_program("const [H 1; CX 0 1]"), cs.halpha(),
                               db=db).accepted


def test_seq_and_relabel_derivation(db):
    p = I.parse_program("seq (const [H 0]) (relabel (swap 0 n) (const [CX n 0]))")
    ha = derive_halpha(p, db)
    for n in (1, 2, 3):
        u = sim.sqir_to_unitary(db.instantiate(p, n), n + 1, db)
        assert np.allclose(sim.ppsa_to_matrix(ha.alpha, n, n + 1, h=ha.h), u)


def test_amplitude_equality_ground_truth():
    a = load_spec("qft").alpha
    assert E.eval_bool(E.substitute_many(amplitude_equality(a, a), {"n": E.Const(2), "x": E.Const(3),
                                                                    "y": E.Const(5)}), {})
    b = load_spec("hlayer").alpha
    f = amplitude_equality(a, b)
    assert not all(E.eval_bool(f, {"n": 1, "x": x, "y": y}) for x in range(4) for y in range(4))


def test_ill_typed_program_rejected(db):
    cs = load_spec("ghz")
    p = I.parse_program("fix_1 id [[H 0]] (const [ID]) (const [CX (- n 1) (+ n 1)])")
    assert not check_judgement(cs.hypothesis, p, cs.halpha(), db=db).accepted


def test_trace_json_shape():
    tr = _check("ghz", "ghz")
    d = tr.to_dict()
    assert d["accepted"] is True and d["rule"] == "JUDGEMENT"
    rules = [o["rule"] for c in d["children"] for o in c["obligations"]]
    assert any(r.startswith("FIX base") for r in rules) and any("inductive" in r for r in rules)
