import itertools
import random

from hypothesis import given, settings, strategies as st

from latchproof.parser import parse_pure
from latchproof.pure import Status, eliminate, implies, is_sat
from latchproof.syntax import Cmp, PNot, Term, pand, por, pure_eval


def S(s):
    return parse_pure(s)


def test_contradiction_unsat():
    assert is_sat(S("n>0 & n<=0")).status == Status.UNSAT


def test_sat_with_model():
    r = is_sat(S("n=n1+n2 & n1>=0 & n2>=0 & n=2"))
    assert r.status == Status.SAT
    assert pure_eval(S("n=n1+n2 & n1>=0 & n2>=0 & n=2"), r.model)


def test_chained_unsat():
    # brute force over n,m in [-4,4] confirms no model; monotone beyond
    f = S("m>=n & n>0 & m<=0")
    for n, m in itertools.product(range(-4, 5), repeat=2):
        assert not pure_eval(f, {"n": n, "m": m})
    assert is_sat(f).status == Status.UNSAT


def test_implies_examples():
    assert implies(S("v=5"), S("v>2"))
    assert implies(S("v>2"), S("v>1"))
    assert not implies(S("v>1"), S("v>2"))


def test_implies_reflexive():
    for s in ["n>0", "n=n1+n2 & n1>=0", "x<y | y<x", "!(a=b)"]:
        assert implies(S(s), S(s))


def test_eliminate_successor():
    e = eliminate(S("n=n1+1 & n1>=0"), {"n1"})
    for n in range(-3, 6):
        assert pure_eval(e, {"n": n}) == (n >= 1)


def test_eliminate_trivial():
    e = eliminate(S("x=x"), {"x"})
    assert pure_eval(e, {})


def test_eliminate_alias():
    e = eliminate(S("n=k & k>0"), {"k"})
    for n in range(-3, 6):
        assert pure_eval(e, {"n": n}) == (n > 0)


def test_gcd_unsat():
    assert is_sat(S("3*x-3*y=1")).status == Status.UNSAT


def test_quantifiers():
    assert is_sat(S("(ex k. n=2*k) & n=3")).status == Status.UNSAT
    assert is_sat(S("(ex k. n=2*k) & n=4")).status == Status.SAT


def _rand_term(r):
    t = Term.of(r.randint(-5, 5))
    for v in ("x", "y", "z"):
        t = t + Term.var(v).scale(r.randint(-3, 3))
    return t


def _rand_formula(r, depth=2):
    if depth == 0 or r.random() < 0.4:
        return Cmp(r.choice(["eq", "ne", "lt", "le"]), _rand_term(r), _rand_term(r))
    kind = r.choice(["and", "or", "not"])
    if kind == "not":
        return PNot(_rand_formula(r, depth - 1))
    parts = [_rand_formula(r, depth - 1) for _ in range(2)]
    return pand(parts) if kind == "and" else por(parts)


def _brute_model(f):
    import numpy as np
    grid = np.arange(-10, 11)
    X, Y, Z = np.meshgrid(grid, grid, grid, indexing="ij")

    def ev_term(t):
        acc = np.full(X.shape, t.const, dtype=np.int64)
        for v, c in t.coeffs:
            acc = acc + c * {"x": X, "y": Y, "z": Z}[v]
        return acc

    def ev(p):
        from latchproof.syntax import PAnd, POr, PNot as N, PTrue, PFalse
        if isinstance(p, PTrue):
            return np.ones(X.shape, bool)
        if isinstance(p, PFalse):
            return np.zeros(X.shape, bool)
        if isinstance(p, Cmp):
            a, b = ev_term(p.lhs), ev_term(p.rhs)
            return {"eq": a == b, "ne": a != b, "lt": a < b, "le": a <= b}[p.op]
        if isinstance(p, PAnd):
            out = np.ones(X.shape, bool)
            for q in p.parts:
                out &= ev(q)
            return out
        if isinstance(p, POr):
            out = np.zeros(X.shape, bool)
            for q in p.parts:
                out |= ev(q)
            return out
        if isinstance(p, N):
            return ~ev(p.body)
        raise TypeError(p)

    mask = ev(f)
    idx = np.argwhere(mask)
    if idx.size == 0:
        return None
    i, j, k = idx[0]
    return {"x": int(grid[i]), "y": int(grid[j]), "z": int(grid[k])}


def test_grid_agreement_sample():
    """is_sat agrees with brute force on 1000 random formulas (the acceptance
    suite runs the full 10000)."""
    r = random.Random(7)
    for _ in range(1000):
        f = _rand_formula(r)
        brute = _brute_model(f)
        res = is_sat(f)
        if brute is not None:
            assert res.status == Status.SAT, f
            assert pure_eval(f, res.model)
        elif res.status == Status.SAT:
            assert pure_eval(f, res.model)  # model lies outside the grid


@settings(max_examples=100, deadline=None)
@given(st.integers(-8, 8), st.integers(-8, 8))
def test_model_soundness(a, b):
    f = S(f"x+y={a} & x-y<={b}")
    r = is_sat(f)
    if r.status == Status.SAT:
        assert pure_eval(f, r.model)
