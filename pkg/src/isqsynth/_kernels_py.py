"""numpy implementations of the simulation kernels."""

from __future__ import annotations

import numpy as np


def apply_gate(state: np.ndarray, nq: int, qubits, mat: np.ndarray) -> None:
    """In-place: apply a local matrix to ``qubits`` of a (2^nq, cols) array.

    Bit j of the local index belongs to ``qubits[j]``.
    """
    k = len(qubits)
    cols = state.shape[1]
    t = state.reshape((2,) * nq + (cols,))
    # axis of qubit q in C order is nq-1-q; local MSB first
    axes = [nq - 1 - q for q in reversed(qubits)]
    rest = [a for a in range(nq + 1) if a not in axes]
    moved = np.transpose(t, axes + rest)
    shape = moved.shape
    block = moved.reshape(1 << k, -1)
    out = (mat @ block).reshape(shape)
    inv = np.argsort(axes + rest)
    state[...] = np.transpose(out, inv).reshape(state.shape)


def apply_perm(state: np.ndarray, table: np.ndarray) -> None:
    """In-place: row i of the input moves to row table[i]."""
    state[table] = state.copy()


def basis_perm_table(nq: int, qubits, local_map) -> np.ndarray:
    idx = np.arange(1 << nq, dtype=np.int64)
    local = np.zeros_like(idx)
    for j, q in enumerate(qubits):
        local |= ((idx >> q) & 1) << j
    img = np.asarray(local_map, dtype=np.int64)[local]
    out = idx.copy()
    for j, q in enumerate(qubits):
        out &= ~(np.int64(1) << q)
        out |= ((img >> j) & 1) << q
    return out
