import cmath
import itertools
import math

import numpy as np
import pytest

from isqsynth import expr as E
from isqsynth import ppsa as P
from isqsynth import sim
from isqsynth import spec as S

from .util import load_spec


def _matrix(cs, n):
    q = E.eval_nat(cs.q_count, {"n": n})
    return sim.ppsa_to_matrix(cs.alpha, n, q, h=cs.hypothesis), sim.hypothesis_mask(cs.hypothesis, n, q)


@pytest.mark.parametrize("n", range(0, 5))
def test_ghz_column_zero(n):
    m, mask = _matrix(load_spec("ghz"), n)
    col = m[:, 0]
    want = np.zeros(1 << (n + 1))
    want[0] = want[-1] = 1 / math.sqrt(2)
    assert np.allclose(col, want, atol=1e-12)
    assert mask[:, 0].all() and not mask[:, 1:].any()


@pytest.mark.parametrize("n", range(0, 4))
def test_qft_is_the_dft(n):
    m, mask = _matrix(load_spec("qft"), n)
    d = 1 << (n + 1)
    dft = np.array([[cmath.exp(2j * math.pi * x * y / d) for x in range(d)] for y in range(d)]) / math.sqrt(d)
    assert mask.all()
    assert np.allclose(m, dft, atol=1e-12)


def test_cuccaro_truth_table_n2():
    cs = load_spec("cuccaro")
    n = 2
    m, mask = _matrix(cs, n)
    for a, b in itertools.product(range(4), repeat=2):
        x = (a << 1) | (b << 3)
        s = a + b
        y = (a << 1) | ((s % 4) << 3) | ((s >> 2) << 5)
        assert mask[y, x]
        assert m[y, x] == pytest.approx(1)
        assert np.count_nonzero(np.abs(m[:, x]) > 1e-12) == 1


def test_subtractor_truth_table_n2():
    m, mask = _matrix(load_spec("subtractor"), 2)
    for a, b in itertools.product(range(4), repeat=2):
        x = (a << 1) | (b << 3)
        y = (a << 1) | (((b - a) % 4) << 3)
        assert mask[y, x] and m[y, x] == pytest.approx(1)


def test_inversion_truth_table_n2():
    cs = load_spec("inversion")
    n = 2
    m, mask = _matrix(cs, n)
    # layout: 0 | L[1..2] | 0_n | 1 | 0_2  -> 0 | L | rem_2 | quot_(n+1)
    for lam in range(1, 4):
        x = (lam << 1) | (1 << (3 + n))
        rem, quo = (1 << n) % lam, (1 << n) // lam
        y = (lam << 1) | (rem << 3) | (quo << 5)
        assert mask[y, x] and m[y, x] == pytest.approx(1)
    assert not mask[:, 1 << (3 + n)].any()  # L = 0 is excluded


@pytest.mark.parametrize("name", ["ghz", "uniform", "qft", "zc", "cuccaro", "subtractor", "teleport",
                                  "inversion", "toffoli", "hlayer"])
def test_benchmark_columns_have_unit_norm(name):
    cs = load_spec(name)
    for n in range(1, 3):
        for x, norm in S.column_norms(cs, n).items():
            assert norm == pytest.approx(1, abs=1e-9), (name, n, x)


def test_toffoli_spec_flips_top_bit_when_low_bits_set():
    cs = load_spec("toffoli")
    for n in range(1, 4):
        m, _ = _matrix(cs, n)
        d = 1 << (n + 1)
        for x in range(d):
            y = x ^ (1 << n) if x % (1 << n) == (1 << n) - 1 else x
            assert m[y, x] == pytest.approx(1)


@pytest.mark.parametrize("text,err", [
    ("F : |A[n]> -> |B>", S.UndeclaredVariable),
    ("F : |A[n]> -> |A> |A>", S.LengthMismatch),
    ("F : |A[n]> -> |A", S.SpecSyntaxError),
    ("F : |A[n]> -> |A_(n+1)>", S.LengthMismatch),
    ("F : |A[n]> -> |(3^A)_n>", S.NonPpsaExpressible),
    ("F : |A[n]> -> e^{3 pi i * A} |A>", S.NonPpsaExpressible),
])
def test_spec_errors(text, err):
    with pytest.raises(err):
        S.compile_spec(text)


def test_layout_segments():
    cs = load_spec("cuccaro")
    a = cs.layout.lookup("A")
    b = cs.layout.lookup("B")
    assert E.eval_nat(a.lo, {"n": 3}) == 1 and E.eval_nat(b.lo, {"n": 3}) == 4
    assert E.eval_nat(cs.q_count, {"n": 3}) == 8
    with pytest.raises(S.UndeclaredVariable):
        cs.layout.lookup("C")


def test_halpha_json_round_trip():
    cs = load_spec("zc")
    ha = cs.halpha()
    back = P.halpha_from_json(P.halpha_to_json(ha))
    for n in range(3):
        q = n + 1
        assert np.allclose(sim.ppsa_to_matrix(back.alpha, n, q), sim.ppsa_to_matrix(ha.alpha, n, q))
