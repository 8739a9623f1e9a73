"""Dense-matrix oracle: exact unitaries of flat circuits and of amplitudes.

The compiled kernels are used when the extension module is importable;
``ISQSYNTH_PURE=1`` forces the numpy fallback.
"""

from __future__ import annotations

import csv
import os
import struct
from typing import Sequence

import numpy as np

from .expr import TRUE, BoolExpr
from .gates import GateDatabase, default_db
from .isqir import CGate, IllTyped, validate_well_typed
from .ppsa import HAlpha, Ppsa, amplitude_grid, eval_hypothesis_grid

if os.environ.get("ISQSYNTH_PURE") == "1":
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels

BACKEND = "compiled" if kernels.__name__.endswith("_kernels") else "numpy"

MAX_WIDTH = 12


class DimensionTooLarge(ValueError):
    pass


class OracleGateUnbound(ValueError):
    pass


def _check_width(width: int, cap: int) -> None:
    if width > cap:
        raise DimensionTooLarge(f"{width} qubits exceeds the cap of {cap}")


def _is_permutation(m: np.ndarray) -> np.ndarray | None:
    nz = np.abs(m) > 1e-12
    if not (nz.sum(axis=0) == 1).all() or not np.allclose(m[nz], 1):
        return None
    return np.argmax(nz, axis=0)


def apply_circuit(state: np.ndarray, gates: Sequence[CGate], width: int,
                  db: GateDatabase | None = None) -> np.ndarray:
    """Apply a flat circuit to a (2^width, cols) array (copied)."""
    db = db or default_db()
    flat = db.expand(gates)
    if not validate_well_typed(flat, width, db.arity):
        raise IllTyped(f"circuit is not well typed on {width} qubits")
    out = np.array(state, dtype=np.complex128, order="C", copy=True)
    vec = out.ndim == 1
    if vec:
        out = out.reshape(-1, 1)
    if out.shape[0] != 1 << width:
        raise ValueError("state dimension does not match width")
    perm_cache: dict = {}
    for g in flat:
        if g.name.startswith("oracle:"):
            raise OracleGateUnbound(f"{g.name} has no concrete circuit")
        m = db.matrix(g)
        key = (g.name, g.qubits, g.param)
        local = _is_permutation(m)
        if local is not None:
            table = perm_cache.get(key)
            if table is None:
                table = perm_cache[key] = kernels.basis_perm_table(width, list(g.qubits), local)
            kernels.apply_perm(out, table)
        else:
            kernels.apply_gate(out, width, list(g.qubits), m)
    return out.ravel() if vec else out


def sqir_to_unitary(gates: Sequence[CGate], width: int, db: GateDatabase | None = None,
                    cap: int = MAX_WIDTH) -> np.ndarray:
    _check_width(width, cap)
    return apply_circuit(np.eye(1 << width, dtype=np.complex128), gates, width, db)


def simulate(gates: Sequence[CGate], width: int, inp: int = 0, db: GateDatabase | None = None,
             cap: int = 24) -> np.ndarray:
    _check_width(width, cap)
    v = np.zeros(1 << width, dtype=np.complex128)
    v[inp] = 1
    return apply_circuit(v, gates, width, db)


def ppsa_to_matrix(a: Ppsa | HAlpha, n: int, width: int, cap: int = MAX_WIDTH, fns=None,
                   h: BoolExpr | None = None) -> np.ndarray:
    """Dense matrix of an amplitude; with h, columns outside it are left zero.

    An HAlpha supplies its own hypothesis unless h is given.
    """
    _check_width(width, cap)
    if isinstance(a, HAlpha):
        h = a.h if h is None else h
        a = a.alpha
    idx = np.arange(1 << width)
    if h is None or h == TRUE:
        return amplitude_grid(a, n, idx, idx, fns=fns)
    cols = np.nonzero(hypothesis_mask(h, n, width).any(axis=0))[0]
    out = np.zeros((1 << width, 1 << width), dtype=np.complex128)
    if cols.size:
        out[:, cols] = amplitude_grid(a, n, cols, idx, fns=fns)
    return out


def hypothesis_mask(h: BoolExpr, n: int, width: int, extra=None) -> np.ndarray:
    idx = np.arange(1 << width)
    if h == TRUE:
        return np.ones((1 << width, 1 << width), dtype=bool)
    return eval_hypothesis_grid(h, n, idx, idx, extra=extra)


def first_mismatch(u: np.ndarray, a: Ppsa, h: BoolExpr, n: int, tol: float = 1e-9):
    """(x, y) of the first entry under h where u and a differ, else None."""
    width = u.shape[0].bit_length() - 1
    mask = hypothesis_mask(h, n, width)
    cols = np.nonzero(mask.any(axis=0))[0]
    if cols.size == 0:
        return None
    idx = np.arange(u.shape[0])
    m = amplitude_grid(a, n, cols, idx)
    bad = (np.abs(u[:, cols] - m) > tol) & mask[:, cols]
    if not bad.any():
        return None
    y, j = np.argwhere(bad)[0]
    return int(cols[j]), int(y)


def compare_on_hypothesis(u: np.ndarray, a: Ppsa, h: BoolExpr, n: int, tol: float = 1e-9) -> bool:
    return first_mismatch(u, a, h, n, tol) is None


# ---------------------------------------------------------------- dumps

_MAGIC = b"ISQM"


def dump_matrix(m: np.ndarray, path: str, fmt: str = "bin") -> None:
    """``bin``: magic, rows, cols (uint32 LE), then re/im float64 LE pairs row-major."""
    m = np.asarray(m, dtype=np.complex128)
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<II", *m.shape))
            fh.write(m.astype("<c16").tobytes())
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in m:
                w.writerow([f"{z.real:.17g}{z.imag:+.17g}j" for z in row])
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")


def load_matrix(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == _MAGIC:
            r, c = struct.unpack("<II", fh.read(8))
            return np.frombuffer(fh.read(), dtype="<c16").reshape(r, c).copy()
    with open(path, newline="") as fh:
        return np.array([[complex(v) for v in row] for row in csv.reader(fh)])
