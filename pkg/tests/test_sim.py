import importlib
import math

import numpy as np
import pytest

from isqsynth import _kernels_py
from isqsynth import isqir as I
from isqsynth import sim

from .util import load_program, load_spec

try:
    from isqsynth import _kernels as compiled
except ImportError:
    compiled = None


def test_ghz_state(db):
    v = sim.simulate(db.instantiate(load_program("ghz"), 2), 3, 0, db)
    want = np.zeros(8)
    want[0] = want[7] = 1 / math.sqrt(2)
    assert np.allclose(v, want, atol=1e-12)


def test_unitary_is_unitary(db):
    u = sim.sqir_to_unitary(db.instantiate(load_program("uniform"), 3), 4, db)
    assert np.allclose(u.conj().T @ u, np.eye(16), atol=1e-12)


def test_dimension_cap():
    with pytest.raises(sim.DimensionTooLarge):
        sim.sqir_to_unitary([], 13)


def test_ill_typed_circuit(db):
    with pytest.raises(I.IllTyped):
        sim.sqir_to_unitary([I.CGate("CX", (0, 5))], 3, db)


def test_unbound_oracle(db):
    with pytest.raises(sim.OracleGateUnbound):
        sim.sqir_to_unitary(I.instantiate(I.parse_program("oracle f"), 1), 2, db)


@pytest.mark.skipif(compiled is None, reason="compiled kernels not built")
def test_backends_agree():
    rng = np.random.default_rng(1)
    for width in (3, 6, 9):
        state = rng.standard_normal((1 << width, 3)) + 1j * rng.standard_normal((1 << width, 3))
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        a, b = state.copy(), state.copy()
        _kernels_py.apply_gate(a, width, [width - 1, 0], m)
        compiled.apply_gate(b, width, [width - 1, 0], m)
        assert np.allclose(a, b)
        local = np.array([0, 1, 2, 7, 4, 5, 6, 3])
        ta = _kernels_py.basis_perm_table(width, [0, 2, 1], local)
        tb = compiled.basis_perm_table(width, [0, 2, 1], local)
        assert np.array_equal(np.asarray(ta), np.asarray(tb))
        a, b = state.copy(), state.copy()
        _kernels_py.apply_perm(a, ta)
        compiled.apply_perm(b, tb)
        assert np.allclose(a, b)


def test_pure_backend_selected_by_env(monkeypatch):
    monkeypatch.setenv("ISQSYNTH_PURE", "1")
    mod = importlib.reload(sim)
    try:
        assert mod.BACKEND == "numpy"
        u = mod.sqir_to_unitary(I.instantiate(load_program("ghz"), 2), 3)
        assert abs(u[7, 0] - 1 / math.sqrt(2)) < 1e-12
    finally:
        monkeypatch.delenv("ISQSYNTH_PURE")
        importlib.reload(sim)


def test_first_mismatch_finds_wrong_entry(db):
    cs = load_spec("ghz")
    good = sim.sqir_to_unitary(db.instantiate(load_program("ghz"), 2), 3, db)
    assert sim.first_mismatch(good, cs.alpha, cs.hypothesis, 2) is None
    bad = sim.sqir_to_unitary(I.instantiate(I.parse_program("const [H 0; CX 0 1]"), 2), 3, db)
    assert sim.first_mismatch(bad, cs.alpha, cs.hypothesis, 2) == (0, 3)


@pytest.mark.parametrize("fmt", ["bin", "csv"])
def test_dump_round_trip(tmp_path, fmt):
    m = np.arange(16).reshape(4, 4) * (1 + 0.5j)
    path = tmp_path / f"m.{fmt}"
    sim.dump_matrix(m, str(path), fmt)
    assert np.array_equal(sim.load_matrix(str(path)), m)
