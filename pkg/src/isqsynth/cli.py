"""Command-line front end.

Exit status: 0 success, 1 rejected program or failed search, 2 usage or
input error.  Output is deterministic; timings appear only with ``--timing``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Sequence

from . import emit as EM
from . import expr as E
from . import gates as G
from . import isqir as I
from . import oracle as O
from . import ppsa as P
from . import search as Q
from . import sim
from . import smt
from . import spec as SP
from .verifier import ProofTrace, check_judgement

DEFAULT_DB = "isqsynth-components.json"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- inputs


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _load_program(path: str) -> I.Program:
    return I.parse_program(_read(path))


def _load_pair(path: str) -> P.HAlpha:
    """A .spec file or an amplitude JSON file."""
    text = _read(path)
    if path.endswith(".json"):
        return P.halpha_from_json(text)
    return SP.compile_spec(text).halpha()


def _load_db(args) -> G.GateDatabase:
    db = G.default_db()
    for ext in args.extension or []:
        G.load_extension(ext, db)
    path = args.db
    if path and os.path.exists(path):
        for item in json.loads(_read(path)).get("components", []):
            db.register_component(G.Component(item["name"], I.parse_program(item["program"]),
                                              P.halpha_from_dict(item["halpha"])))
    return db


def _save_component(path: str, name: str, prog: I.Program, ha: P.HAlpha) -> None:
    data = {"components": []}
    if os.path.exists(path):
        data = json.loads(_read(path))
    items = [c for c in data.get("components", []) if c["name"] != name]
    items.append({"name": name, "program": I.to_text(prog), "halpha": P.halpha_to_dict(ha)})
    data["components"] = sorted(items, key=lambda c: c["name"])
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def _solver_cfg(args) -> smt.SolverConfig:
    cfg = smt.SolverConfig(mode=args.mode, n_max=args.n_bound, timeout_ms=args.timeout_ms,
                           dump_dir=args.dump_smt, keep_scripts=args.explain)
    if args.solver:
        cfg.command = args.solver.split()
    return cfg


def _int_pair(text: str) -> tuple:
    try:
        lo, hi = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI") from None
    return lo, hi


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers") from None


# ---------------------------------------------------------------- output


def _out(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _explain(trace: ProofTrace | None, extra: dict | None = None) -> None:
    d = dict(extra or {})
    if trace is not None:
        d["trace"] = trace.to_dict()
    sys.stderr.write(json.dumps(d, indent=2) + "\n")


def _report(rep: Q.SearchReport, timing: bool) -> dict:
    d = rep.to_dict()
    if not timing:
        d.pop("elapsed")
    return d


def _fmt_amp(z: complex) -> str:
    re_, im = round(z.real, 4) + 0.0, round(z.imag, 4) + 0.0
    if im == 0:
        return f"{re_:.4f}"
    if re_ == 0:
        return f"{im:.4f}i"
    return f"{re_:.4f}{im:+.4f}i"


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    db = _load_db(args)
    cs = SP.compile_spec(_read(args.spec))
    inv = _load_pair(args.invariant) if args.invariant else None
    b = Q.SearchBounds(max_program_length=args.max_length, fix_k_choices=args.fix_k,
                       perm_derivation_depth=args.perm_depth, const_range=args.const_range,
                       wall_clock_limit=args.time_limit, max_const_length=args.max_const_length)
    gs = Q.GateSet.parse(args.gates)
    gs.resolve(db)
    res = Q.synthesize(cs, gs, b, _solver_cfg(args), db, invariant=inv)
    rep = _report(res.report, args.timing)
    if not res.ok:
        if args.json:
            _out(json.dumps({"ok": False, "report": rep}, indent=2))
        else:
            sys.stderr.write("no program found: " + json.dumps(rep) + "\n")
        return 1
    if args.explain:
        _explain(res.trace, {"report": rep})
    text = EM.emit(args.emit, res.program, ha=cs.halpha(), trace=res.trace, db=db)
    if args.json:
        _out(json.dumps({"ok": True, "program": I.to_text(res.program), "output": text, "report": rep},
                        indent=2))
    else:
        _out(text)
    return 0


def cmd_verify(args) -> int:
    db = _load_db(args)
    prog = _load_program(args.program)
    cfg = _solver_cfg(args)
    if args.oracle_spec:
        tr = O.check_oracle_judgement(O.oracle_spec_from_dict(json.loads(_read(args.oracle_spec))),
                                      prog, db, cfg)
    else:
        src = args.halpha or args.spec
        if not src:
            raise UsageError("verify needs --halpha, --spec or --oracle-spec")
        ha = _load_pair(src)
        inv = _load_pair(args.invariant) if args.invariant else None
        tr = check_judgement(ha.h, prog, ha, cfg=cfg, db=db, invariant=inv)
    if args.explain:
        _explain(tr)
    verdict = "accept" if tr.accepted else "reject"
    if args.json:
        d = {"ok": tr.accepted, "verdict": verdict}
        if not tr.accepted:
            d["failures"] = [o.to_dict() for o in tr.failures()]
            if tr.error or any(c.error for c in tr.children):
                d["error"] = tr.error or next(c.error for c in tr.children if c.error)
        _out(json.dumps(d, indent=2))
    else:
        _out(verdict)
        for o in tr.failures():
            sys.stderr.write(f"{o.rule}: {o.verdict}"
                             + (f" {json.dumps(o.counterexample, sort_keys=True)}" if o.counterexample else "")
                             + "\n")
    return 0 if tr.accepted else 1


def cmd_simulate(args) -> int:
    db = _load_db(args)
    prog = _load_program(args.program)
    gates = db.instantiate(prog, args.n)
    flat = db.expand(gates)
    used = max((q for g in flat for q in g.qubits), default=-1) + 1
    width = args.width if args.width is not None else max(used, 1)
    if width < used:
        raise UsageError(f"program touches qubit {used - 1}; width {width} is too small")
    inp = int(args.input, 0)
    if inp >= 1 << width:
        raise UsageError(f"input {inp} does not fit in {width} qubits")
    state = sim.simulate(gates, width, inp, db)
    rows = [(i, z) for i, z in enumerate(state) if abs(z) > 1e-9]
    if args.json:
        _out(json.dumps({"width": width, "amplitudes": [
            {"basis": format(i, f"0{width}b"), "re": round(z.real, 12) + 0.0, "im": round(z.imag, 12) + 0.0}
            for i, z in rows]}, indent=2))
    else:
        for i, z in rows:
            _out(f"|{format(i, f'0{width}b')}> {_fmt_amp(complex(z))}")
    return 0


def cmd_register(args) -> int:
    db = _load_db(args)
    prog = _load_program(args.program)
    ha = _load_pair(args.halpha)
    inv = _load_pair(args.invariant) if args.invariant else None
    cfg = _solver_cfg(args)
    try:
        if args.no_witness:
            tr = _register_unwitnessed(db, args.name, prog, ha, cfg, inv)
        else:
            tr = Q.register_component(db, args.name, prog, ha, cfg, inv)
    except (Q.VerificationFailed, Q.WitnessInvalid) as exc:
        if args.json:
            _out(json.dumps({"ok": False, "error": type(exc).__name__, "message": str(exc)}, indent=2))
        else:
            sys.stderr.write(f"{type(exc).__name__}: {exc}\n")
        return 1
    _save_component(args.db, args.name, prog, ha)
    if args.explain:
        _explain(tr)
    _out(json.dumps({"ok": True, "registered": args.name}) if args.json else f"registered {args.name}")
    return 0


def _register_unwitnessed(db, name, prog, ha, cfg, inv) -> ProofTrace:
    # dense components: compositions that need a witness will reject later
    if ha.q_count is None:
        raise Q.VerificationFailed(f"{name}: the pair needs a qubit count")
    tr = check_judgement(ha.h, prog, ha, cfg=cfg, db=db, invariant=inv)
    if not tr.accepted:
        raise Q.VerificationFailed(f"{name}: program does not meet its pair")
    db.register_component(G.Component(name, prog, P.HAlpha(ha.h, ha.alpha, None, ha.q_count)))
    return tr


def cmd_emit(args) -> int:
    db = _load_db(args)
    prog = _load_program(args.program)
    _out(EM.emit(args.target, prog, n=args.n, db=db))
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output and errors")
    common.add_argument("--db", default=DEFAULT_DB, help="component database file (default: %(default)s)")
    common.add_argument("--extension", action="append", help="JSON file of matrix-defined gates")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--mode", choices=("bounded", "symbolic"), default="bounded")
    solver.add_argument("--n-bound", type=int, default=8, help="largest n checked in bounded mode")
    solver.add_argument("--timeout-ms", type=int, default=60_000)
    solver.add_argument("--solver", help="solver command line (default: $%s or z3 on PATH)" % smt.SOLVER_ENV)
    solver.add_argument("--dump-smt", metavar="DIR", help="write every obligation to DIR/*.smt2")
    solver.add_argument("--explain", action="store_true", help="print the proof trace as JSON on stderr")

    ap = argparse.ArgumentParser(prog="isqsynth", description="Synthesize and verify recursive quantum programs.")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common, solver], help="search for a program meeting a spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--gates", required=True, help="comma-separated gate names, e.g. H,CX")
    s.add_argument("--invariant", help="stronger pair (.spec or .json) to prove the fixpoint against")
    s.add_argument("--emit", default="isqir", help="isqir | qasm:N | halpha | trace")
    s.add_argument("--max-length", type=int, default=10)
    s.add_argument("--fix-k", type=_int_list, default=(1, 2, 3))
    s.add_argument("--perm-depth", type=int, default=4)
    s.add_argument("--const-range", type=_int_pair, default=(0, 3))
    s.add_argument("--max-const-length", type=int, default=2)
    s.add_argument("--time-limit", type=float, help="wall-clock limit in seconds")
    s.add_argument("--timing", action="store_true", help="include elapsed time in reports")
    s.set_defaults(func=cmd_synth)

    v = sub.add_parser("verify", parents=[common, solver], help="check a program against a pair")
    v.add_argument("--program", required=True)
    g = v.add_mutually_exclusive_group()
    g.add_argument("--halpha")
    g.add_argument("--spec")
    g.add_argument("--oracle-spec")
    v.add_argument("--invariant")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("simulate", parents=[common], help="state vector of one family member")
    m.add_argument("--program", required=True)
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--input", default="0", help="basis index, decimal or with a 0b/0x prefix")
    m.add_argument("--width", type=int)
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("register", parents=[common, solver], help="verify and store a component")
    r.add_argument("--name", required=True)
    r.add_argument("--program", required=True)
    r.add_argument("--halpha", required=True, help="pair with a sparsity witness (.json or .spec)")
    r.add_argument("--invariant")
    r.add_argument("--no-witness", action="store_true",
                   help="accept a pair without a sparsity witness (dense components)")
    r.set_defaults(func=cmd_register)

    e = sub.add_parser("emit", parents=[common], help="print a program in another format")
    e.add_argument("--program", required=True)
    e.add_argument("--target", default="qasm", help="isqir | qasm:N")
    e.add_argument("--n", type=int)
    e.set_defaults(func=cmd_emit)
    return ap


_INPUT_ERRORS = (UsageError, E.ExprError, I.IsqirError, SP.SpecError, P.PpsaError, G.UnknownGate,
                 G.GateError, EM.EmitError, sim.DimensionTooLarge, smt.SolverMissing,
                 json.JSONDecodeError, KeyError, ValueError)


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing key {exc}"
        if getattr(args, "json", False):
            sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": msg}) + "\n")
        else:
            sys.stderr.write(f"isqsynth: {type(exc).__name__}: {msg}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
