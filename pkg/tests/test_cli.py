import json

import pytest

from isqsynth.cli import main

from .util import BENCH, needs_solver, spec_path

PROG = BENCH / "programs"


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


@pytest.fixture
def dbfile(tmp_path):
    return tmp_path / "components.json"


def test_simulate_ghz(capsys, dbfile):
    rc, out, _ = run(capsys, "simulate", "--program", PROG / "ghz.isqir", "--n", 2, "--db", dbfile)
    assert rc == 0
    assert out == "|000> 0.7071\n|111> 0.7071\n"


def test_simulate_json_and_input(capsys, dbfile):
    rc, out, _ = run(capsys, "simulate", "--program", PROG / "cuccaro.isqir", "--n", 2, "--input", "0b001110",
                     "--json", "--db", dbfile)
    assert rc == 0
    d = json.loads(out)
    # a = 3 (bits 1,2), b = 1 (bits 3,4): sum 4 leaves b = 0 and sets the carry
    assert d["width"] == 6 and [a["basis"] for a in d["amplitudes"]] == ["100110"]


def test_simulate_width_too_small(capsys, dbfile):
    rc, _, err = run(capsys, "simulate", "--program", PROG / "ghz.isqir", "--n", 3, "--width", 2, "--db", dbfile)
    assert rc == 2 and "too small" in err


def test_emit_qasm(capsys, dbfile):
    rc, out, _ = run(capsys, "emit", "--program", PROG / "ghz.isqir", "--target", "qasm:2", "--db", dbfile)
    assert rc == 0 and out.endswith("h q[0];\ncx q[0],q[1];\ncx q[1],q[2];\n")


def test_usage_errors(capsys, dbfile, tmp_path):
    assert main(["frobnicate"]) == 2
    capsys.readouterr()
    rc, _, err = run(capsys, "verify", "--program", tmp_path / "missing.isqir", "--spec", spec_path("ghz"),
                     "--db", dbfile)
    assert rc == 2 and "cannot read" in err
    bad = tmp_path / "bad.isqir"
    bad.write_text("fix_1 id [[H 0]")
    rc, _, err = run(capsys, "verify", "--program", bad, "--spec", spec_path("ghz"), "--json", "--db", dbfile)
    assert rc == 2
    assert json.loads(err)["error"]


def test_unknown_emit_target(capsys, dbfile):
    rc, _, err = run(capsys, "emit", "--program", PROG / "ghz.isqir", "--target", "svg", "--db", dbfile)
    assert rc == 2 and "EmitError" in err


@needs_solver
def test_synth_ghz(capsys, dbfile):
    rc, out, _ = run(capsys, "synth", "--spec", spec_path("ghz"), "--gates", "H,CX", "--db", dbfile)
    assert rc == 0
    assert out == (PROG / "ghz.isqir").read_text().strip() + "\n"


@needs_solver
def test_synth_output_is_deterministic(capsys, dbfile):
    args = ("synth", "--spec", spec_path("ghz"), "--gates", "H,CX", "--json", "--emit", "qasm:3", "--db", dbfile)
    first = run(capsys, *args)
    second = run(capsys, *args)
    assert first == second and first[0] == 0
    assert "elapsed" not in first[1]


@needs_solver
def test_verify_accept_and_reject(capsys, dbfile, tmp_path):
    rc, out, _ = run(capsys, "verify", "--program", PROG / "ghz.isqir", "--spec", spec_path("ghz"), "--db", dbfile)
    assert (rc, out) == (0, "accept\n")
    mutant = tmp_path / "m.isqir"
    mutant.write_text("fix_1 id [[H 0]] (const [ID]) (const [CX n (- n 1)])\n")
    rc, out, err = run(capsys, "verify", "--program", mutant, "--spec", spec_path("ghz"), "--db", dbfile)
    assert (rc, out) == (1, "reject\n") and err
    rc, out, _ = run(capsys, "verify", "--program", mutant, "--spec", spec_path("ghz"), "--json", "--db", dbfile)
    d = json.loads(out)
    assert rc == 1 and d["verdict"] == "reject" and d["failures"]


@needs_solver
def test_invariant_flag(capsys, dbfile):
    base = ("verify", "--program", PROG / "cuccaro.isqir", "--spec", spec_path("cuccaro"), "--db", dbfile)
    assert run(capsys, *base)[0] == 1
    assert run(capsys, *base, "--invariant", spec_path("cuccaro_carry"))[0] == 0


@needs_solver
def test_dump_smt_and_explain(capsys, dbfile, tmp_path):
    d = tmp_path / "smt"
    d.mkdir()
    rc, _, err = run(capsys, "verify", "--program", PROG / "ghz.isqir", "--spec", spec_path("ghz"),
                     "--dump-smt", d, "--explain", "--db", dbfile)
    assert rc == 0
    assert list(d.glob("*.smt2"))
    assert json.loads(err)["trace"]["accepted"] is True


@needs_solver
def test_register_requires_witness_for_dense_pair(capsys, dbfile):
    args = ("register", "--name", "HL", "--program", PROG / "hlayer.isqir", "--halpha", spec_path("hlayer"),
            "--db", dbfile)
    rc, _, err = run(capsys, *args)
    assert rc == 1 and "WitnessInvalid" in err and not dbfile.exists()
    rc, out, _ = run(capsys, *args, "--no-witness")
    assert rc == 0 and out == "registered HL\n"
    assert [c["name"] for c in json.loads(dbfile.read_text())["components"]] == ["HL"]


@needs_solver
def test_dj_through_registered_layer(capsys, dbfile):
    assert run(capsys, "register", "--name", "HL", "--program", PROG / "hlayer.isqir", "--halpha",
               spec_path("hlayer"), "--no-witness", "--db", dbfile)[0] == 0
    rc, out, _ = run(capsys, "verify", "--program", PROG / "dj.isqir", "--oracle-spec",
                     BENCH / "oracle" / "dj.oracle.json", "--db", dbfile)
    assert (rc, out) == (0, "accept\n")


@needs_solver
def test_register_zc_then_synthesize_qft(capsys, dbfile):
    rc, _, _ = run(capsys, "register", "--name", "ZC", "--program", PROG / "zc.isqir",
                   "--halpha", BENCH / "halpha" / "zc.halpha.json", "--db", dbfile)
    assert rc == 0
    rc, out, _ = run(capsys, "synth", "--spec", spec_path("qft"), "--gates", "H,ZC,SWAP", "--db", dbfile,
                     "--time-limit", 300)
    assert rc == 0
    rc2, out2, _ = run(capsys, "verify", "--program", PROG / "qft.isqir", "--spec", spec_path("qft"),
                       "--db", dbfile)
    assert rc2 == 0
    # the found program must itself verify
    found = dbfile.parent / "found.isqir"
    found.write_text(out)
    assert run(capsys, "verify", "--program", found, "--spec", spec_path("qft"), "--db", dbfile)[0] == 0
