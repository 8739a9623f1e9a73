import itertools
import random

import numpy as np
import pytest

from isqsynth import expr as E
from isqsynth.expr import N, X, Y

from .util import random_bool, random_nat, ref_eval


def test_text_round_trip_random_terms():
    rng = random.Random(11)
    for _ in range(500):
        e = random_nat(rng, 4)
        assert E.parse_nat(E.to_text(e)) == e
        b = random_bool(rng, 3)
        assert E.parse_bool(E.to_text(b)) == b


def test_eval_matches_string_reference():
    rng = random.Random(12)
    for _ in range(2000):
        e = random_nat(rng, 4)
        env = {"n": rng.randrange(8), "x": rng.randrange(512), "y": rng.randrange(512)}
        assert E.eval_nat(e, env) == ref_eval(E.to_text(e), env), E.to_text(e)


def test_simplify_preserves_value():
    rng = random.Random(13)
    for _ in range(1500):
        e = random_nat(rng, 4)
        s = E.simplify(e)
        for _ in range(4):
            env = {"n": rng.randrange(8), "x": rng.randrange(512), "y": rng.randrange(512)}
            assert E.eval_nat(s, env) == E.eval_nat(e, env), E.to_text(e)


def test_truncated_subtraction_and_euclidean_division():
    assert E.eval_nat(E.parse_nat("(- 3 5)"), {}) == 0
    assert E.eval_nat(E.parse_nat("(div 7 2)"), {}) == 3
    assert E.eval_nat(E.parse_nat("(mod 7 4)"), {}) == 3
    with pytest.raises(E.DivisionByZero):
        E.eval_nat(E.parse_nat("(div x 0)"), {"x": 3})


def test_bits_and_slices():
    v = 0b1011_0110
    assert [E.eval_nat(E.Bit(X, E.Const(i)), {"x": v}) for i in range(8)] == [0, 1, 1, 0, 1, 1, 0, 1]
    assert E.eval_nat(E.Slice(X, E.Const(5), E.Const(2)), {"x": v}) == 0b1101
    assert E.eval_nat(E.Slice(X, E.Const(1), E.Const(3)), {"x": v}) == 0


def test_unbound_variable_and_parse_errors():
    with pytest.raises(E.UnboundVariable):
        E.eval_nat(X + 1, {})
    for bad in ("(+ 1)", "(frob x)", "(+ x 1", "x)", "(bit x)"):
        with pytest.raises(E.ParseError):
            E.parse_nat(bad)


def test_substitution():
    e = E.parse_nat("(+ (* x n) (bit y 0))")
    s = E.substitute_many(e, {"x": N + 1, "y": E.Const(3)})
    assert E.eval_nat(s, {"n": 4}) == 21
    assert E.free_vars(s) == {"n"}


# ---------------------------------------------------------------- permutations


def _brute_shift(a, b, m, q):
    return a + (q - a + m) % (b - a) if a <= q < b else q


@pytest.mark.parametrize("n", range(0, 5))
def test_perm_eval_against_definition(n):
    p = E.parse_perm("(comp (shift 0 (+ n 2) 1) (swap 0 (+ n 1)))")
    for q in range(n + 3):
        mid = _brute_shift(0, n + 2, 1, q)
        want = n + 1 if mid == 0 else 0 if mid == n + 1 else mid
        assert E.eval_perm(p, n, q) == want


def test_perm_bit_actions_agree_with_tables():
    rng = random.Random(3)
    perms = ["id", "(swap 0 n)", "(shift 0 (+ n 1) 1)", "(shift 1 (+ n 2) 2)",
             "(comp (shift 0 (+ n 1) 1) (swap 0 (+ n 1)))"]
    for text, n in itertools.product(perms, range(1, 5)):
        p = E.parse_perm(text)
        width = n + 2
        for _ in range(30):
            v = rng.randrange(1 << width)
            moved = E.apply_perm_bits(p, n, width, v)
            assert E.eval_nat(E.perm_forward(p, X), {"x": v, "n": n}) == moved
            assert E.eval_nat(E.perm_inverse(p, X), {"x": moved, "n": n}) == v
        for q in range(width):
            assert E.eval_nat(E.perm_index_expr(p, E.Const(q)), {"n": n}) == E.eval_perm(p, n, q)


def test_non_injective_table():
    with pytest.raises(E.NonInjective):
        E.perm_table(E.parse_perm("(swap 0 n)"), 5, 3)


def test_upper_bound_is_sound():
    rng = random.Random(5)
    bounds = {"n": 7, "x": 255, "y": 255}
    for _ in range(400):
        e = random_nat(rng, 4)
        try:
            ub = E.upper_bound(e, bounds)
        except E.Unbounded:
            continue
        for _ in range(10):
            env = {k: rng.randrange(v + 1) for k, v in bounds.items()}
            assert E.eval_nat(e, env) <= ub, E.to_text(e)


def test_vectorized_eval_matches_scalar():
    e = E.parse_nat("(+ (* (bit x 0) (>> y 1)) (mod (^ x y) (pow2 n)))")
    xs, ys = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
    got = E.eval_vec(e, {"x": xs, "y": ys, "n": 3})
    for x, y in itertools.product(range(16), repeat=2):
        assert got[x, y] == E.eval_nat(e, {"x": x, "y": y, "n": 3})


def test_operator_sugar_builds_expected_nodes():
    e = (X >> 1) % E.Pow2(N)
    assert E.to_text(e) == "(mod (>> x 1) (pow2 n))"
    assert E.eval_bool(Y.lt(E.Pow2(N)), {"y": 3, "n": 2}) is True
