import shutil
import stat
import textwrap

import pytest

from latchproof import pure
from latchproof.parser import parse_pure
from latchproof.pure import Status, is_sat
from latchproof.smt import SmtBackend, parse_model, render_query


def S(s):
    return parse_pure(s)


def test_render_query_shape():
    q = render_query(S("n>0 & n=m+1"), want_model=True)
    assert "(declare-fun n () Int)" in q
    assert "(check-sat)" in q
    assert "(get-model)" in q
    assert "(assert" in q


def test_parse_model():
    text = """
    (
      (define-fun n () Int 2)
      (define-fun m () Int (- 1))
    )
    """
    model = parse_model(text, {"n", "m"})
    assert model == {"n": 2, "m": -1}


@pytest.fixture
def stub_solver(tmp_path):
    """A fake SMT-LIB responder: sat with a fixed model when the query
    mentions 'n', unsat otherwise. Exercises the child-process protocol."""
    script = tmp_path / "fakesmt"
    script.write_text(textwrap.dedent("""\
        #!/bin/sh
        query=$(cat)
        case "$query" in
          *"declare-fun n"*)
            echo sat
            echo "((define-fun n () Int 3))"
            ;;
          *)
            echo unsat
            ;;
        esac
    """))
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    return str(script)


def test_stub_protocol_sat(stub_solver):
    backend = SmtBackend(stub_solver)
    r = backend.is_sat(S("n>0"))
    assert r.status == Status.SAT
    assert r.model["n"] == 3


def test_stub_protocol_unsat(stub_solver):
    backend = SmtBackend(stub_solver)
    r = backend.is_sat(S("x>0 & x<0"))
    assert r.status == Status.UNSAT


def test_backend_pluggable(stub_solver):
    backend = SmtBackend(stub_solver)
    pure.set_external_backend(backend)
    try:
        r = is_sat(S("n = 1"))
        assert r.status == Status.SAT
    finally:
        pure.set_external_backend(None)


Z3 = shutil.which("z3")


@pytest.mark.skipif(Z3 is None, reason="no external solver installed")
def test_agreement_with_real_solver():
    backend = SmtBackend(Z3)
    corpus = [
        "n>0 & n<=0", "n=n1+n2 & n1>=0 & n2>=0 & n=2", "m>=n & n>0 & m<=0",
        "v=5 & !(v>2)", "3*x-3*y=1", "x>100",
    ]
    for s in corpus:
        f = S(s)
        internal = is_sat(f).status
        external = backend.is_sat(f).status
        assert internal == external, s
