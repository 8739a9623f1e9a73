"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed at the end of the pytest run (see conftest.py) and
also when this file is executed directly.  Criteria that cannot be met are
reported as FAIL and marked ``xfail(strict=True)``, so an unexpected pass
breaks the run.
"""

import cmath
import itertools
import math
import random
import time

import numpy as np
import pytest

from isqsynth import emit as EM
from isqsynth import expr as E
from isqsynth import isqir as I
from isqsynth import oracle as O
from isqsynth import ppsa as P
from isqsynth import search as Q
from isqsynth import sim
from isqsynth import smt
from isqsynth.gates import default_db, derive_gate_halpha
from isqsynth.verifier import check_judgement, derive_halpha

from .conftest import CRITERIA
from .util import BENCH, db_with_hl, load_program, load_spec, needs_solver, random_nat, ref_eval, zc_halpha

pytestmark = needs_solver

TOL = 1e-9


def report(k: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA[k] = line
    print(line)
    assert ok, line


def _unitary(db, prog, n, width=None):
    gates = db.instantiate(prog, n)
    return sim.sqir_to_unitary(gates, width if width is not None else n + 1, db)


def _perm_of(u: np.ndarray) -> list:
    return [int(np.argmax(np.abs(u[:, x]))) for x in range(u.shape[0])]


# ---------------------------------------------------------------- 1


def test_c01_ghz_synthesis(db):
    t0 = time.monotonic()
    res = Q.synthesize(load_spec("ghz"), Q.GateSet.parse("H,CX"), Q.SearchBounds(wall_clock_limit=120), db=db)
    dt = time.monotonic() - t0
    ok = res.ok and res.program == load_program("ghz") and dt <= 120
    if res.ok:
        for n in range(6):
            state = sim.simulate(db.instantiate(res.program, n), n + 1, 0, db)
            want = np.zeros(1 << (n + 1))
            want[0] = want[-1] = 1 / math.sqrt(2)
            ok = ok and np.allclose(state, want, atol=TOL, rtol=0)
    report(1, ok, f"GHZ found in {dt:.1f}s: {I.to_text(res.program) if res.ok else 'none'}")


# ---------------------------------------------------------------- 2


def test_c02_uniform_synthesis(db):
    t0 = time.monotonic()
    res = Q.synthesize(load_spec("uniform"), Q.GateSet.parse("H,X,Y,Z"), Q.SearchBounds(wall_clock_limit=120),
                       db=db)
    dt = time.monotonic() - t0
    ok = res.ok and dt <= 120
    if res.ok:
        for n in range(6):
            state = sim.simulate(db.instantiate(res.program, n), n + 1, 0, db)
            ok = ok and np.allclose(state, np.full(1 << (n + 1), 2 ** (-(n + 1) / 2)), atol=TOL, rtol=0)
    report(2, ok, f"uniform found in {dt:.1f}s: {I.to_text(res.program) if res.ok else 'none'}")


# ---------------------------------------------------------------- 3


def _parity(perm: list) -> int:
    seen, swaps = [False] * len(perm), 0
    for i in range(len(perm)):
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        swaps += max(length - 1, 0)
    return swaps % 2


@pytest.mark.xfail(strict=True, reason="{CCX, CX, X} generate only even permutations on four or more qubits")
def test_c03_toffoli(db):
    # every placement of every allowed gate on m >= 4 qubits is an even permutation,
    # while the target flips a single pair of basis states
    all_even = True
    for m in (4, 5):
        for name, arity in (("X", 1), ("CX", 2), ("CCX", 3)):
            for qs in itertools.permutations(range(m), arity):
                u = sim.sqir_to_unitary([I.CGate(name, qs)], m, db)
                all_even &= _parity(_perm_of(u)) == 0
    cs = load_spec("toffoli")
    target_odd = all(_parity(_perm_of(sim.ppsa_to_matrix(cs.alpha, n, n + 1, h=cs.hypothesis))) == 1
                     for n in (3, 4))
    res = Q.synthesize(cs, Q.GateSet.parse("CCX,CX,X"), Q.SearchBounds(wall_clock_limit=120), db=db)
    ok = res.ok
    if res.ok:
        for n in (2, 3, 4):
            u = _unitary(db, res.program, n)
            ok = ok and sim.first_mismatch(u, cs.alpha, cs.hypothesis, n) is None
    why = "generated group is even" if all_even and target_odd else "parity argument did not apply"
    report(3, ok, f"no program for n >= 3 ({why}); search {res.report.to_dict()['generated']} candidates,"
                  f" timed_out={res.report.timed_out}")


# ---------------------------------------------------------------- 4


def test_c04_two_step_qft():
    db = default_db()
    t0 = time.monotonic()
    zc = Q.synthesize(load_spec("zc"), Q.GateSet.parse("H,CP,SWAP"), Q.SearchBounds(wall_clock_limit=450), db=db)
    assert zc.ok, zc.report.to_dict()
    ha = zc_halpha()
    Q.register_component(db, "ZC", zc.program, ha)
    qft = Q.synthesize(load_spec("qft"), Q.GateSet.parse("H,ZC,SWAP"), Q.SearchBounds(wall_clock_limit=450), db=db)
    dt = time.monotonic() - t0
    ok = qft.ok and dt <= 900
    worst = float("nan")
    if qft.ok:
        errs = []
        for n in range(1, 5):
            d = 1 << (n + 1)
            dft = np.array([[cmath.exp(2j * math.pi * x * y / d) for x in range(d)] for y in range(d)]) / math.sqrt(d)
            errs.append(np.abs(_unitary(db, qft.program, n) - dft).max())
        worst = max(errs)
        ok = ok and worst <= TOL
    report(4, ok, f"ZC then QFT in {dt:.1f}s, max |U - DFT| = {worst:.1e}: "
                  f"{I.to_text(qft.program) if qft.ok else 'none'}")


# ---------------------------------------------------------------- 5


def test_c05_cuccaro(db):
    cs = load_spec("cuccaro")
    prog = load_program("cuccaro")
    tr = check_judgement(cs.hypothesis, prog, cs.halpha(), db=db, invariant=load_spec("cuccaro_carry").halpha())
    perm = _perm_of(_unitary(db, prog, 2, 6))
    bad = 0
    for a, b in itertools.product(range(4), repeat=2):
        y = perm[(a << 1) | (b << 3)]
        bad += not (y & 1 == 0 and (y >> 1) & 3 == a and (y >> 3) & 3 == (a + b) % 4 and y >> 5 == (a + b) // 4)
    report(5, tr.accepted and bad == 0, f"verified={tr.accepted}, n=2 table mismatches={bad}/16")


# ---------------------------------------------------------------- 6


def test_c06_subtractor(db):
    cs = load_spec("subtractor")
    prog = load_program("subtractor")
    tr = check_judgement(cs.hypothesis, prog, cs.halpha(), db=db,
                         invariant=load_spec("subtractor_borrow").halpha())
    n = 2
    width, gates = EM.parse_qasm(EM.emit_qasm(prog, n, db=db))
    assert {g.name for g in gates} <= {"X", "CX", "CCX"}
    emitted = _perm_of(sim.sqir_to_unitary(gates, width, db))
    direct = _perm_of(_unitary(db, prog, n, 2 * n + 1))
    mask = (1 << n) - 1
    bad = 0
    for a, b in itertools.product(range(4), repeat=2):
        x = (a << 1) | (b << (n + 1))
        for perm in (emitted, direct):
            y = perm[x]
            nb = y >> (n + 1)
            bad += not (y & 1 == 0 and (y >> 1) & mask == a and nb == (b - a) % 4
                        and nb == ~((~b + a) & mask) & mask)
    report(6, tr.accepted and bad == 0,
           f"verified={tr.accepted}, n=2 table and emitted NOT(NOT B + A) mismatches={bad}/32")


# ---------------------------------------------------------------- 7


@pytest.mark.xfail(strict=True, reason="the stated phase (-1)^parity(a) omits the dependence on phi")
def test_c07_teleport(db):
    n = 1
    prog = load_program("teleport")
    corrected = load_spec("teleport")
    accepted = check_judgement(corrected.hypothesis, prog, corrected.halpha(), db=db).accepted
    u = _unitary(db, prog, n, 3 * n + 3)
    lo = (1 << (n + 1)) - 1
    amp = 1 / math.sqrt(2 ** (2 * n + 2))
    literal_bad = corrected_bad = 0
    for phi in range(1 << (n + 1)):
        for z in np.nonzero(np.abs(u[:, phi]) > TOL)[0]:
            a, b, c = int(z) & lo, (int(z) >> (n + 1)) & lo, int(z) >> (2 * n + 2)
            v = u[z, phi]
            if phi != b ^ c:
                literal_bad += 1
                corrected_bad += 1
                continue
            literal_bad += abs(v - amp * (-1) ** bin(a).count("1")) > TOL
            corrected_bad += abs(v - amp * (-1) ** bin(phi & a).count("1")) > TOL
    report(7, literal_bad == 0,
           f"stated phase wrong on {literal_bad} entries; with phase (-1)^parity(phi & a): "
           f"{corrected_bad} mismatches, verifier accepts={accepted}")


# ---------------------------------------------------------------- 8


def test_c08_inversion(db):
    cs = load_spec("inversion")
    prog = load_program("inversion")
    tr = check_judgement(cs.hypothesis, prog, cs.halpha(), db=db, invariant=load_spec("inversion_step").halpha())
    n = 2
    perm = _perm_of(_unitary(db, prog, n, n + 6))
    bad = 0
    for lam in range(1, 4):
        y = perm[(lam << 1) | (1 << (3 + n))]
        bad += not (y & 1 == 0 and (y >> 1) & 3 == lam and (y >> 3) & 3 == (1 << n) % lam
                    and y >> 5 == (1 << n) // lam)
    report(8, tr.accepted and bad == 0, f"verified={tr.accepted}, n=2 mismatches={bad}/3")


# ---------------------------------------------------------------- 9


def _flip_sign(ha: P.HAlpha) -> P.HAlpha:
    t0, *rest = ha.alpha.terms
    t0 = P.Term(t0.guard, P.add_phases(t0.phase, P.Phase(E.Const(1), E.Const(1))))
    return P.HAlpha(ha.h, P.Ppsa(ha.alpha.beta, (t0, *rest)), ha.witness, ha.q_count)


def _bit_flip_target(rng) -> P.HAlpha:
    pos = rng.choice([E.Const(0), E.N, E.N - 1])
    alpha = P.Ppsa(E.Const(1), (P.Term(E.Y.eq(E.X ^ E.Pow2(pos)), P.Phase(E.Const(0), E.Const(0))),))
    return P.HAlpha(E.TRUE, alpha, None, E.N + 1)


def test_c09_soundness_fuzz(db):
    rng = random.Random(2024)
    pool = list(itertools.islice(Q.enumerate_candidates(Q.GateSet.parse("H,X,Z,CX")), 4000))
    consts = [p for p in pool if isinstance(p, I.ConstProg)]
    benchmarks = [load_spec("ghz").halpha(), load_spec("uniform").halpha()]
    accepted = contradictions = 0
    for i in range(200):
        kind = i % 4
        cand = rng.choice(pool)
        if kind in (0, 1):
            src = rng.choice(consts)
            d = derive_halpha(src, db)
            target = P.HAlpha(d.h, d.alpha, None, E.N + 1)
            if kind == 1:
                target = _flip_sign(target)
            if rng.random() < 0.5:
                cand = src
        elif kind == 2:
            target = rng.choice(benchmarks)
        else:
            target = _bit_flip_target(rng)
        tr = check_judgement(target.h, cand, target.alpha, target.q_count, db=db)
        if not tr.accepted:
            continue
        accepted += 1
        for n in range(5):
            try:
                u = _unitary(db, cand, n)
            except Exception:
                contradictions += 1
                break
            if sim.first_mismatch(u, target.alpha, target.h, n, TOL) is not None:
                contradictions += 1
                break
    report(9, contradictions == 0 and accepted > 0,
           f"200 candidates, {accepted} accepted, {contradictions} contradict dense simulation")


# ---------------------------------------------------------------- 10

PLACEMENT = {1: "n", 2: "n 0", 3: "0 n 1"}


def _witness_covers(ha: P.HAlpha, u: np.ndarray, n: int) -> bool:
    ys_nz, xs_nz = np.nonzero(np.abs(u) > TOL)
    for y, x in zip(ys_nz.tolist(), xs_nz.tolist()):
        if x not in {E.eval_nat(e, {"n": n, "y": y}) for e in ha.witness.xs}:
            return False
        if y not in {E.eval_nat(e, {"n": n, "x": x}) for e in ha.witness.ys}:
            return False
    return True


def test_c10_sparsity(db):
    names = [g for g in db.names() if db.lookup(g).component is None]
    texts = [f"{g} {PLACEMENT[db.lookup(g).arity]}" for g in names]
    cfg = smt.SolverConfig(mode="bounded", n_max=8)
    invalid, not_multiplied, uncovered = [], [], []
    for t1, t2 in itertools.product(texts, repeat=2):
        g1, g2 = (derive_gate_halpha(I.parse_program(f"const [{t}]").gates[0], db) for t in (t1, t2))
        ha = P.compose(g1, g2)
        if len(ha.witness.xs) != len(g1.witness.xs) * len(g2.witness.xs) or \
                len(ha.witness.ys) != len(g1.witness.ys) * len(g2.witness.ys):
            not_multiplied.append((t1, t2))
        # the placements are well-typed once n + 1 covers the largest arity
        n_min = max(db.lookup(t.split()[0]).arity for t in (t1, t2)) - 1
        if not smt.check_valid(P.witness_formula(ha.alpha, ha.witness), cfg, width=E.N + 1,
                               n_range=(n_min, None)).valid:
            invalid.append((t1, t2))
        prog = I.parse_program(f"const [{t1}; {t2}]")
        for n in range(n_min, 7):
            if not _witness_covers(ha, _unitary(db, prog, n), n):
                uncovered.append((t1, t2, n))
                break
    # control: dropping a row candidate from a dense pair must be caught
    ha = P.compose(*(derive_gate_halpha(I.parse_program(f"const [{t}]").gates[0], db) for t in ("H n", "H 0")))
    cut = P.SparsityWitness(ha.witness.xs[1:], ha.witness.ys)
    control = not P.validate_witness(ha.alpha, cut, cfg, width=E.N + 1).valid
    pairs = len(texts) ** 2
    report(10, control and not (invalid or not_multiplied or uncovered),
           f"{pairs} gate pairs: invalid witnesses={len(invalid)}, length mismatches={len(not_multiplied)}, "
           f"dense coverage failures (n <= 6)={len(uncovered)}, truncated witness rejected={control}")


# ---------------------------------------------------------------- 11


def test_c11_deutsch_jozsa():
    db = db_with_hl()
    spec = O.load_oracle_spec(str(BENCH / "oracle" / "dj.oracle.json"))
    prog = load_program("dj")
    tr = O.check_oracle_judgement(spec, prog, db)
    n = 3
    balanced_bad = constant_bad = 0
    for ones in itertools.combinations(range(8), 4):
        table = [int(i in ones) for i in range(8)]
        balanced_bad += abs(O.dense_with_oracle(prog, n, table, n, db)[1, 0]) > TOL
    for c in (0, 1):
        amp = O.dense_with_oracle(prog, n, [c] * 8, n, db)[1, 0]
        constant_bad += not (abs(abs(amp) - 1) <= TOL and abs(amp.imag) <= TOL)
    report(11, tr.accepted and balanced_bad == 0 and constant_bad == 0,
           f"verified={tr.accepted}, balanced nonzero={balanced_bad}/70, constant not +-1={constant_bad}/2")


# ---------------------------------------------------------------- 12


def test_c12_smt_faithfulness():
    rng = random.Random(12)
    terms = [random_nat(rng, 4, ()) for _ in range(10_000)]
    want = [E.eval_nat(t, {}) for t in terms]
    got = smt.solver_eval(terms, {}, encoding="bv")
    # the reference evaluator shares no code with expr
    ref = [ref_eval(E.to_text(t), {}) for t in terms]
    agree = sum(g == w for g, w in zip(got, want))
    ref_agree = sum(r == w for r, w in zip(ref, want))
    report(12, agree == len(terms) and ref_agree == len(terms),
           f"solver agrees on {agree}/{len(terms)} ground terms, reference evaluator on {ref_agree}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
