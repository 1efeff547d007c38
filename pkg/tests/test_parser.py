from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from latchproof.parser import (
    ParseError, SourceFile, parse_formula, parse_program,
    unparse_formula, unparse_program,
)
from latchproof.syntax import (
    Cnt, Dead, Disjunct, Formula, LatchIn, LatchOut, Par, Perm, PointsTo,
    ResVarAtom, RForm, Seq, Term, ThreadNode, ThreadSpec, Wait, TRUE,
)


def test_trivial_program():
    p = parse_program(SourceFile("t", "void main() requires emp ensures emp; { skip; }"))
    assert len(p.proc_decls) == 1
    assert p.proc_decls[0].name == "main"


def test_barrier_par_shape():
    src = """
    void main() requires emp ensures emp;
    { c = create_latch(2); ( countDown(c); await(c) || countDown(c); await(c) ) }
    """
    p = parse_program(SourceFile("t", src))
    body = p.proc_decls[0].body
    assert isinstance(body, Seq)
    assert isinstance(body.second, Par)
    assert isinstance(body.second.left, Seq)
    assert isinstance(body.second.right, Seq)


def test_two_spec_pairs():
    src = """
    void f(CountDownLatch i)
      requires LatchIn(i, P) * P * CNT(i, n) & n > 0
      ensures  CNT(i, n - 1);
      requires CNT(i, -1)
      ensures  CNT(i, -1);
    { skip; }
    void main() requires emp ensures emp; { skip; }
    """
    p = parse_program(SourceFile("t", src))
    assert len(p.proc_decls[0].specs) == 2


def test_formula_atoms_and_pure():
    f = parse_formula("LatchIn(c, x::cell(v) & v>2) * CNT(c,n) & n>0")
    d = f.single()
    assert len(d.heap) == 2
    assert isinstance(d.heap[0], LatchIn)
    assert isinstance(d.heap[1], Cnt)
    assert d.pure != TRUE


def test_emp_true():
    f = parse_formula("emp & true")
    assert f.single().heap == ()
    assert unparse_formula(f) == "emp & true"


def test_fractional_cnt_pair():
    f = parse_formula("CNT(c,n1)@1/2 * CNT(c,n2)@1/2 & n=n1+n2")
    a, b = f.single().heap
    assert a.perm.frac == Fraction(1, 2) and b.perm.frac == Fraction(1, 2)


def test_decimal_permission_becomes_exact():
    f = parse_formula("x::cell(1)@0.6")
    assert f.single().heap[0].perm.frac == Fraction(3, 5)
    assert unparse_formula(f) == "x::cell(1)@3/5"


def test_frac_printed_in_lowest_terms():
    f = parse_formula("x::cell(1)@2/4")
    assert unparse_formula(f) == "x::cell(1)@1/2"


def test_wait_arcs_and_thread_atoms():
    f = parse_formula("WAIT{a->b, c->d}@1/2 * thread(t, Q) * threadspec(u, P, Q) * dead(t)")
    kinds = {type(a) for a in f.single().heap}
    assert kinds == {Wait, ThreadNode, ThreadSpec, Dead}


def test_parse_error_position():
    with pytest.raises(ParseError) as e:
        parse_formula("x::cell(")
    assert e.value.line == 1


def test_print_parse_fixpoint_on_corpus(load):
    for name in ["cdl2", "race", "cone", "barrier", "multicast", "sender_receiver",
                 "deadlock_intra", "deadlock_inter"]:
        p = load(name)
        text = unparse_program(p)
        p2 = parse_program(SourceFile("rt", text))
        assert unparse_program(p2) == text, name


def test_print_parse_print_fixpoint_formula():
    for s in [
        "LatchIn(c, x::cell(v) & v>2) * CNT(c,n)@f & n>0",
        "x::cell(1)@3/5 * y::cell(2)@3/5",
        "ex v. x::cell(v) & v>0 | emp & n=1",
        "WAIT{a->b}@1 * dead(t)",
    ]:
        once = unparse_formula(parse_formula(s))
        assert unparse_formula(parse_formula(once)) == once


# -- grammar coverage: every production reachable from an accepted input ----

GRAMMAR_SAMPLES = [
    # data / proc / spec / params
    "data cell { int val; } void main() requires emp ensures emp; { skip; }",
    # all statement forms
    """
    data cell { int val; }
    void f(int n) requires emp ensures emp; { skip; }
    int g() requires emp ensures res = 1; { res = 1; }
    void main() requires emp ensures emp;
    {
      x = new cell(0);
      x.val = 2;
      y = x.val;
      z = 1;
      w = z;
      f(3);
      u = g();
      c = create_latch(1) with x::cell(2);
      t = create_thread(f) with emp & true, emp & true;
      atomic { skip; };
      if (z = 1) { countDown(c); } else { skip; };
      ( await(c) || skip );
      assert x::cell(2);
      fork(t, 0);
      join(t);
    }
    """,
]


@pytest.mark.parametrize("src", GRAMMAR_SAMPLES)
def test_grammar_coverage(src):
    p = parse_program(SourceFile("t", src))
    assert p.proc_decls


# -- fuzzed round trip -------------------------------------------------------

_ident = st.sampled_from(["x", "y", "z", "c", "t"])
_resvar = st.sampled_from(["P", "Q", "R"])
_term = st.one_of(
    st.integers(-5, 5).map(Term.of),
    _ident.map(Term.var),
)
_perm = st.one_of(
    st.just(Perm.one()),
    st.sampled_from([Perm.of(Fraction(1, 2)), Perm.of(Fraction(3, 5))]),
    st.sampled_from(["f", "g"]).map(Perm.pvar),
)


@st.composite
def _atom(draw, depth=1):
    kind = draw(st.sampled_from(
        ["pts", "cnt", "wait", "dead", "resvar"] + (["latchin", "latchout"] if depth else [])))
    if kind == "pts":
        return PointsTo(draw(_ident), "cell", (draw(_term),), draw(_perm))
    if kind == "cnt":
        return Cnt(draw(_ident), draw(_term), draw(_perm))
    if kind == "wait":
        arcs = frozenset(draw(st.sets(st.tuples(_ident, _ident), max_size=2)))
        return Wait(arcs, draw(_perm))
    if kind == "dead":
        return Dead(draw(_ident))
    if kind == "resvar":
        return ResVarAtom(draw(_resvar))
    payload = draw(_formula(depth - 1))
    cls = LatchIn if kind == "latchin" else LatchOut
    return cls(draw(_ident), RForm(payload))


@st.composite
def _formula(draw, depth=1):
    atoms = draw(st.lists(_atom(depth), min_size=0, max_size=3))
    return Formula((Disjunct((), tuple(atoms), TRUE),))


@settings(max_examples=200, deadline=None)
@given(_formula(depth=1))
def test_fuzzed_round_trip(f):
    text = unparse_formula(f)
    reparsed = parse_formula(text)
    assert unparse_formula(reparsed) == text
