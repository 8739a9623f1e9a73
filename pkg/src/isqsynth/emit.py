"""Output formats: ISQIR text, OpenQASM 3 per size, and JSON for amplitudes and proofs."""

from __future__ import annotations

import re
from typing import Sequence

from .gates import GateDatabase, default_db
from .isqir import CGate, Program, parse_program, to_text
from .ppsa import HAlpha, halpha_to_json
from .verifier import ProofTrace

QASM_MAX_WIDTH = 24

TARGETS = ("isqir", "qasm", "halpha", "trace")


class EmitError(Exception):
    pass


def emit_isqir(prog: Program) -> str:
    return to_text(prog) + "\n"


def parse_isqir(text: str) -> Program:
    return parse_program(text)


# ---------------------------------------------------------------- OpenQASM 3

_PLAIN = {"X": "x", "Y": "y", "Z": "z", "H": "h", "S": "s", "T": "t",
          "CX": "cx", "CZ": "cz", "SWAP": "swap", "CCX": "ccx"}
_CTRL = {"CS": "ctrl @ s", "CT": "ctrl @ t"}


def _qasm_line(g: CGate) -> str:
    qs = ",".join(f"q[{q}]" for q in g.qubits)
    if g.name in _PLAIN:
        return f"{_PLAIN[g.name]} {qs};"
    if g.name in _CTRL:
        return f"{_CTRL[g.name]} {qs};"
    if g.name == "CP":
        # phase 2*pi / 2^(p+1) = pi / 2^p
        angle = "pi" if g.param == 0 else f"pi/{1 << g.param}"
        return f"cp({angle}) {qs};"
    raise EmitError(f"no OpenQASM form for gate {g.name}")


def emit_qasm(prog: Program | Sequence[CGate], n: int | None = None, width: int | None = None,
              db: GateDatabase | None = None) -> str:
    """Circuit of the family member at size n (or an already flat circuit).

    Components and MAJ/UMA are flattened into the standard gate library.
    ``width`` defaults to one past the highest qubit touched.
    """
    db = db or default_db()
    if isinstance(prog, Program):
        if n is None:
            raise EmitError("OpenQASM emission needs a concrete n")
        gates = db.instantiate(prog, n)
    else:
        gates = list(prog)
    flat = db.expand(gates, primitive=True)
    for g in flat:
        if g.name.startswith("oracle:"):
            raise EmitError("oracle calls have no OpenQASM form; bind the oracle first")
    used = max((q for g in flat for q in g.qubits), default=-1) + 1
    width = used if width is None else width
    if width < used:
        raise EmitError(f"circuit touches qubit {used - 1} but width is {width}")
    if width > QASM_MAX_WIDTH:
        raise EmitError(f"{width} qubits exceeds the emission cap of {QASM_MAX_WIDTH}")
    lines = ["OPENQASM 3.0;", 'include "stdgates.inc";', f"qubit[{max(width, 1)}] q;"]
    lines += [_qasm_line(g) for g in flat]
    return "\n".join(lines) + "\n"


_LINE = re.compile(r"^(ctrl @ [st]|cp\(pi(?:/(\d+))?\)|[a-z]+)\s+(.*);$")
_QREF = re.compile(r"q\[(\d+)\]")
_INV_PLAIN = {v: k for k, v in _PLAIN.items()}
_INV_CTRL = {v: k for k, v in _CTRL.items()}


def parse_qasm(text: str) -> tuple[int, list[CGate]]:
    """Read back the subset produced by ``emit_qasm``: (width, gates)."""
    width, gates = None, []
    for raw in text.splitlines():
        line = raw.split("//")[0].strip()
        if not line or line.startswith(("OPENQASM", "include")):
            continue
        m = re.fullmatch(r"qubit\[(\d+)\]\s+q;", line)
        if m:
            width = int(m.group(1))
            continue
        m = _LINE.match(line)
        if not m:
            raise EmitError(f"unsupported OpenQASM line: {line}")
        head, den, rest = m.groups()
        qs = tuple(int(q) for q in _QREF.findall(rest))
        if head.startswith("cp("):
            d = int(den) if den else 1
            if d & (d - 1):
                raise EmitError(f"non-dyadic angle in {line}")
            gates.append(CGate("CP", qs, d.bit_length() - 1))
        elif head in _INV_CTRL:
            gates.append(CGate(_INV_CTRL[head], qs))
        elif head in _INV_PLAIN:
            gates.append(CGate(_INV_PLAIN[head], qs))
        else:
            raise EmitError(f"unknown gate {head!r}")
    if width is None:
        raise EmitError("missing qubit declaration")
    return width, gates


# ---------------------------------------------------------------- JSON


def emit_halpha(ha: HAlpha) -> str:
    return halpha_to_json(ha) + "\n"


def emit_trace(trace: ProofTrace) -> str:
    return trace.to_json() + "\n"


def emit(target: str, prog: Program | None = None, *, n: int | None = None,
         ha: HAlpha | None = None, trace: ProofTrace | None = None,
         db: GateDatabase | None = None) -> str:
    """Dispatch on a target name; ``qasm:N`` carries the size inline."""
    name, _, arg = target.partition(":")
    if name == "isqir":
        return emit_isqir(prog)
    if name == "qasm":
        return emit_qasm(prog, int(arg) if arg else n, db=db)
    if name == "halpha":
        if ha is None:
            raise EmitError("no amplitude to emit")
        return emit_halpha(ha)
    if name == "trace":
        if trace is None:
            raise EmitError("no proof trace to emit")
        return emit_trace(trace)
    raise EmitError(f"unknown emission target {target!r}; expected one of {', '.join(TARGETS)}")

