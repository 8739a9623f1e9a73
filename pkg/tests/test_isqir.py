import pytest

from isqsynth import expr as E
from isqsynth import isqir as I

from .util import BENCH, load_program


@pytest.mark.parametrize("path", sorted((BENCH / "programs").glob("*.isqir")), ids=lambda p: p.stem)
def test_text_round_trip(path):
    p = I.parse_program(path.read_text())
    assert I.parse_program(I.to_text(p)) == p


def test_ghz_instances():
    p = load_program("ghz")
    assert [str(g) for g in I.instantiate(p, 0)] == ["H 0"]
    assert [str(g) for g in I.instantiate(p, 3)] == ["H 0", "CX 0 1", "CX 1 2", "CX 2 3"]


def test_relabel_and_fix_unrolling():
    # fix_1 with a shift: each level moves the previous circuit up by one qubit
    p = I.parse_program("fix_1 (shift 0 (+ n 1) 1) [[H 0]] (const [X 0]) (const [ID])")
    assert [str(g) for g in I.instantiate(p, 2)] == ["X 0", "X 1", "H 2"]


def test_fix_2_bases():
    p = I.parse_program("fix_2 id [[H 0]; [X 1]] (const [Z n]) (const [ID])")
    assert [str(g) for g in I.instantiate(p, 1)] == ["X 1"]
    assert [str(g) for g in I.instantiate(p, 3)] == ["Z 3", "Z 2", "X 1"]


def test_recursion_underflow():
    with pytest.raises(I.RecursionUnderflow):
        I.instantiate(load_program("ghz"), -1)


def test_nested_fix_rejected():
    with pytest.raises(I.IsqirError):
        I.parse_program("fix_1 id [[H 0]] (fix_1 id [[H 0]] (const [ID]) (const [ID])) (const [ID])")


def test_base_count_must_match_k():
    with pytest.raises(I.IsqirError):
        I.parse_program("fix_2 id [[H 0]] (const [ID]) (const [ID])")


def test_relabel_collapsing_qubits():
    p = I.parse_program("relabel (swap 0 1) (const [CX 0 1])")
    assert [str(g) for g in I.instantiate(p, 0)] == ["CX 1 0"]
    with pytest.raises(E.NonInjective):
        I.map_qb(lambda q: 0, [I.CGate("CX", (0, 1))])


@pytest.mark.parametrize("bad", ["const [H 0", "fix_x id [[H 0]] (const []) (const [])", "seq (const [H 0])",
                                 "const [H (+ 0]", "frob"])
def test_parse_errors(bad):
    with pytest.raises(E.ParseError):
        I.parse_program(bad)


def test_sized_gate_text():
    p = I.parse_program("const [SUB{2} 0 1 2; ZC{(- n 1)}]")
    assert I.to_text(p) == "const [SUB{2} 0 1 2; ZC{(- n 1)}]"
    gates = I.instantiate(p, 4)
    assert gates[0].param == 2 and gates[1].param == 3


def test_well_typed():
    gates = I.instantiate(load_program("ghz"), 2)
    assert I.validate_well_typed(gates, 3)
    assert not I.validate_well_typed(gates, 2)
    assert not I.validate_well_typed([I.CGate("CX", (1, 1))], 3)


def test_program_size():
    assert I.program_size(load_program("ghz")) == 5  # fix + id + base + 2 consts
    assert I.program_size(I.parse_program("seq (const [H 0; X 1]) (const [ID])")) == 4
