"""Abstract syntax for programs and specification formulas.

Terms are kept in a canonical linear form (sum of integer-scaled
variables plus a constant); permissions are exact rationals, optionally
symbolic. Formulas are disjunctions of (existentials, heap atoms, pure
constraint). All values are immutable and hashable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

from .diagnostics import Diagnostic, Span, NO_SPAN
from . import names


# ---------------------------------------------------------------------------
# Linear integer terms


@dataclass(frozen=True)
class Term:
    """Linear term: sum of coeff*var plus a constant, in canonical order."""

    coeffs: tuple[tuple[str, int], ...] = ()
    const: int = 0

    @staticmethod
    def of(k: int) -> "Term":
        return Term((), k)

    @staticmethod
    def var(v: str) -> "Term":
        return Term(((v, 1),), 0)

    @staticmethod
    def _norm(d: dict[str, int], const: int) -> "Term":
        items = tuple(sorted((v, c) for v, c in d.items() if c != 0))
        return Term(items, const)

    def __add__(self, other: "Term") -> "Term":
        d = dict(self.coeffs)
        for v, c in other.coeffs:
            d[v] = d.get(v, 0) + c
        return Term._norm(d, self.const + other.const)

    def __sub__(self, other: "Term") -> "Term":
        return self + other.scale(-1)

    def scale(self, k: int) -> "Term":
        return Term._norm({v: c * k for v, c in self.coeffs}, self.const * k)

    def neg(self) -> "Term":
        return self.scale(-1)

    @property
    def is_const(self) -> bool:
        return not self.coeffs

    def vars(self) -> set[str]:
        return {v for v, _ in self.coeffs}

    def is_var(self) -> Optional[str]:
        if self.const == 0 and len(self.coeffs) == 1 and self.coeffs[0][1] == 1:
            return self.coeffs[0][0]
        return None

    def subst(self, rho: dict[str, "Term"]) -> "Term":
        out = Term.of(self.const)
        for v, c in self.coeffs:
            out = out + (rho[v].scale(c) if v in rho else Term(((v, c),), 0))
        return out

    def eval(self, env: dict[str, int]) -> int:
        return self.const + sum(c * env.get(v, 0) for v, c in self.coeffs)

    def __str__(self):
        if not self.coeffs:
            return str(self.const)
        parts = []
        for v, c in self.coeffs:
            if not parts:
                if c == 1:
                    parts.append(v)
                elif c == -1:
                    parts.append(f"-{v}")
                else:
                    parts.append(f"{c}*{v}")
            else:
                sign = "+" if c > 0 else "-"
                mag = abs(c)
                parts.append(f"{sign}{v}" if mag == 1 else f"{sign}{mag}*{v}")
        if self.const > 0:
            parts.append(f"+{self.const}")
        elif self.const < 0:
            parts.append(f"-{-self.const}")
        return "".join(parts)


# ---------------------------------------------------------------------------
# Permissions: exact fraction plus an optional bag of symbolic parts


@dataclass(frozen=True)
class Perm:
    frac: Fraction = Fraction(1)
    vars: tuple[str, ...] = ()

    @staticmethod
    def one() -> "Perm":
        return Perm(Fraction(1), ())

    @staticmethod
    def of(f: Fraction) -> "Perm":
        if not (0 < f <= 1):
            raise ValueError(f"permission {f} outside (0, 1]")
        return Perm(f, ())

    @staticmethod
    def pvar(name: str) -> "Perm":
        return Perm(Fraction(0), (name,))

    @property
    def is_concrete(self) -> bool:
        return not self.vars

    @property
    def is_one(self) -> bool:
        return self.is_concrete and self.frac == 1

    def __add__(self, other: "Perm") -> "Perm":
        return Perm(self.frac + other.frac, tuple(sorted(self.vars + other.vars)))

    def minus(self, other: "Perm") -> "Perm":
        if not (self.is_concrete and other.is_concrete):
            raise ValueError("cannot subtract symbolic permissions")
        return Perm.of(self.frac - other.frac)

    def divide(self, k: int) -> "Perm":
        if not self.is_concrete:
            raise ValueError("cannot divide a symbolic permission")
        return Perm.of(self.frac / k)

    def single_var(self) -> Optional[str]:
        if self.frac == 0 and len(self.vars) == 1:
            return self.vars[0]
        return None

    def subst(self, rho: dict[str, "Perm"]) -> "Perm":
        out = Perm(self.frac, ())
        for v in self.vars:
            out = out + rho.get(v, Perm.pvar(v))
        return out

    def __str__(self):
        parts = [str(v) for v in self.vars]
        if self.frac != 0 or not parts:
            parts.append(str(self.frac))
        return "+".join(parts)


FULL = Perm.one()


# ---------------------------------------------------------------------------
# Pure formulas (linear integer arithmetic with =, !=, <, <=)


class Pure:
    pass


@dataclass(frozen=True)
class PTrue(Pure):
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class PFalse(Pure):
    def __str__(self):
        return "false"


TRUE = PTrue()
FALSE = PFalse()

CMP_OPS = ("eq", "ne", "lt", "le")
_OP_TEXT = {"eq": "=", "ne": "!=", "lt": "<", "le": "<="}


@dataclass(frozen=True)
class Cmp(Pure):
    op: str  # eq | ne | lt | le
    lhs: Term
    rhs: Term

    def __str__(self):
        return f"{self.lhs}{_OP_TEXT[self.op]}{self.rhs}"


@dataclass(frozen=True)
class PAnd(Pure):
    parts: tuple[Pure, ...]

    def __str__(self):
        return " & ".join(_pure_atom_str(p) for p in self.parts)


@dataclass(frozen=True)
class POr(Pure):
    parts: tuple[Pure, ...]

    def __str__(self):
        return " | ".join(_pure_atom_str(p) for p in self.parts)


@dataclass(frozen=True)
class PNot(Pure):
    body: Pure

    def __str__(self):
        return f"!({self.body})"


@dataclass(frozen=True)
class PExists(Pure):
    vars: tuple[str, ...]
    body: Pure

    def __str__(self):
        return f"(ex {','.join(self.vars)}. {self.body})"


@dataclass(frozen=True)
class PForall(Pure):
    vars: tuple[str, ...]
    body: Pure

    def __str__(self):
        return f"(all {','.join(self.vars)}. {self.body})"


def _pure_atom_str(p: Pure) -> str:
    if isinstance(p, (POr,)):
        return f"({p})"
    return str(p)


def pand(parts: Iterable[Pure]) -> Pure:
    out: list[Pure] = []
    for p in parts:
        if isinstance(p, PTrue):
            continue
        if isinstance(p, PFalse):
            return FALSE
        if isinstance(p, PAnd):
            out.extend(p.parts)
        else:
            out.append(p)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return PAnd(tuple(out))


def por(parts: Iterable[Pure]) -> Pure:
    out: list[Pure] = []
    for p in parts:
        if isinstance(p, PFalse):
            continue
        if isinstance(p, PTrue):
            return TRUE
        if isinstance(p, POr):
            out.extend(p.parts)
        else:
            out.append(p)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return POr(tuple(out))


def eq(a: Term, b: Term) -> Pure:
    return Cmp("eq", a, b)


def lt(a: Term, b: Term) -> Pure:
    return Cmp("lt", a, b)


def le(a: Term, b: Term) -> Pure:
    return Cmp("le", a, b)


def pure_free_vars(p: Pure) -> set[str]:
    if isinstance(p, (PTrue, PFalse)):
        return set()
    if isinstance(p, Cmp):
        return p.lhs.vars() | p.rhs.vars()
    if isinstance(p, (PAnd, POr)):
        return set().union(*(pure_free_vars(q) for q in p.parts)) if p.parts else set()
    if isinstance(p, PNot):
        return pure_free_vars(p.body)
    if isinstance(p, (PExists, PForall)):
        return pure_free_vars(p.body) - set(p.vars)
    raise TypeError(p)


def pure_subst(p: Pure, rho: dict[str, Term], gen: names.FreshGen | None = None) -> Pure:
    if isinstance(p, (PTrue, PFalse)):
        return p
    if isinstance(p, Cmp):
        return Cmp(p.op, p.lhs.subst(rho), p.rhs.subst(rho))
    if isinstance(p, PAnd):
        return pand(pure_subst(q, rho, gen) for q in p.parts)
    if isinstance(p, POr):
        return por(pure_subst(q, rho, gen) for q in p.parts)
    if isinstance(p, PNot):
        return PNot(pure_subst(p.body, rho, gen))
    if isinstance(p, (PExists, PForall)):
        gen = gen or names.default_gen()
        range_vars = set().union(*(t.vars() for t in rho.values())) if rho else set()
        ren: dict[str, Term] = {}
        new_vars = []
        for v in p.vars:
            if v in rho or v in range_vars:
                w = gen.fresh(v.split("#")[0])
                ren[v] = Term.var(w)
                new_vars.append(w)
            else:
                new_vars.append(v)
        body = pure_subst(p.body, ren, gen) if ren else p.body
        inner = {k: v for k, v in rho.items() if k not in p.vars}
        body = pure_subst(body, inner, gen)
        cls = PExists if isinstance(p, PExists) else PForall
        return cls(tuple(new_vars), body)
    raise TypeError(p)


def pure_eval(p: Pure, env: dict[str, int]) -> bool:
    if isinstance(p, PTrue):
        return True
    if isinstance(p, PFalse):
        return False
    if isinstance(p, Cmp):
        a, b = p.lhs.eval(env), p.rhs.eval(env)
        return {"eq": a == b, "ne": a != b, "lt": a < b, "le": a <= b}[p.op]
    if isinstance(p, PAnd):
        return all(pure_eval(q, env) for q in p.parts)
    if isinstance(p, POr):
        return any(pure_eval(q, env) for q in p.parts)
    if isinstance(p, PNot):
        return not pure_eval(p.body, env)
    raise TypeError(f"cannot evaluate quantified formula {p}")


# ---------------------------------------------------------------------------
# Heap atoms and formulas


class ResArg:
    """Payload of a resource predicate: a formula or an instantiable variable."""


@dataclass(frozen=True)
class RVar(ResArg):
    name: str


@dataclass(frozen=True)
class RForm(ResArg):
    formula: "Formula"


class HeapAtom:
    pass


@dataclass(frozen=True)
class PointsTo(HeapAtom):
    root: str
    ctor: str
    args: tuple[Term, ...]
    perm: Perm = FULL


@dataclass(frozen=True)
class LatchIn(HeapAtom):
    latch: str
    payload: ResArg


@dataclass(frozen=True)
class LatchOut(HeapAtom):
    latch: str
    payload: ResArg


@dataclass(frozen=True)
class Cnt(HeapAtom):
    latch: str
    count: Term
    perm: Perm = FULL


@dataclass(frozen=True)
class Wait(HeapAtom):
    arcs: frozenset[tuple[str, str]]
    perm: Perm = FULL


@dataclass(frozen=True)
class ThreadNode(HeapAtom):
    tid: str
    post: "Formula"


@dataclass(frozen=True)
class ThreadSpec(HeapAtom):
    tid: str
    bound: tuple[str, ...]
    pre: "Formula"
    post: "Formula"


@dataclass(frozen=True)
class Dead(HeapAtom):
    tid: str


@dataclass(frozen=True)
class ResVarAtom(HeapAtom):
    name: str


@dataclass(frozen=True)
class Disjunct:
    exists: tuple[str, ...] = ()
    heap: tuple[HeapAtom, ...] = ()
    pure: Pure = TRUE


@dataclass(frozen=True)
class Formula:
    disjuncts: tuple[Disjunct, ...]
    span: Span = field(default=NO_SPAN, compare=False)

    def is_emp(self) -> bool:
        return all(not d.heap for d in self.disjuncts)

    def single(self) -> Disjunct:
        if len(self.disjuncts) != 1:
            raise ValueError("expected a single-disjunct formula")
        return self.disjuncts[0]


def emp(pure: Pure = TRUE) -> Formula:
    return Formula((Disjunct((), (), pure),))


EMP = emp()


def of_atoms(atoms: Iterable[HeapAtom], pure: Pure = TRUE, exists: tuple[str, ...] = ()) -> Formula:
    return Formula((Disjunct(exists, tuple(atoms), pure),))


def star(f1: Formula, f2: Formula, gen: names.FreshGen | None = None) -> Formula:
    """Separating conjunction, distributing over disjuncts."""
    gen = gen or names.default_gen()
    out = []
    for d1 in f1.disjuncts:
        for d2 in f2.disjuncts:
            d2r = d2
            clash = set(d2.exists) & (set(d1.exists) | free_vars_disjunct(d1))
            if clash:
                ren = {v: Term.var(gen.fresh(v.split("#")[0])) for v in clash}
                d2r = subst_disjunct(
                    Disjunct((), d2.heap, d2.pure), ren, gen
                )
                d2r = Disjunct(
                    tuple(ren[v].is_var() if v in ren else v for v in d2.exists),
                    d2r.heap,
                    d2r.pure,
                )
            out.append(
                Disjunct(d1.exists + d2r.exists, d1.heap + d2r.heap, pand([d1.pure, d2r.pure]))
            )
    return Formula(tuple(out))


def conj_pure(f: Formula, p: Pure) -> Formula:
    return Formula(tuple(Disjunct(d.exists, d.heap, pand([d.pure, p])) for d in f.disjuncts))


def disj(fs: Iterable[Formula]) -> Formula:
    ds: list[Disjunct] = []
    for f in fs:
        ds.extend(f.disjuncts)
    if not ds:
        ds = [Disjunct()]
    return Formula(tuple(ds))


# ---------------------------------------------------------------------------
# Free variables

def _resarg_fv(arg: ResArg) -> set[str]:
    if isinstance(arg, RVar):
        return {arg.name}
    return free_vars(arg.formula)


def atom_free_vars(a: HeapAtom) -> set[str]:
    if isinstance(a, PointsTo):
        fv = {a.root}
        for t in a.args:
            fv |= t.vars()
        return fv
    if isinstance(a, (LatchIn, LatchOut)):
        return {a.latch} | _resarg_fv(a.payload)
    if isinstance(a, Cnt):
        return {a.latch} | a.count.vars()
    if isinstance(a, Wait):
        return {v for arc in a.arcs for v in arc}
    if isinstance(a, ThreadNode):
        return {a.tid} | free_vars(a.post)
    if isinstance(a, ThreadSpec):
        return {a.tid} | ((free_vars(a.pre) | free_vars(a.post)) - set(a.bound))
    if isinstance(a, Dead):
        return {a.tid}
    if isinstance(a, ResVarAtom):
        return {a.name}
    raise TypeError(a)


def free_vars_disjunct(d: Disjunct) -> set[str]:
    fv: set[str] = set()
    for a in d.heap:
        fv |= atom_free_vars(a)
    fv |= pure_free_vars(d.pure)
    return fv - set(d.exists)


def free_vars(f: Formula) -> set[str]:
    out: set[str] = set()
    for d in f.disjuncts:
        out |= free_vars_disjunct(d)
    return out


# ---------------------------------------------------------------------------
# Substitution (capture-avoiding; identifier positions need Var images)


def _subst_id(name: str, rho: dict[str, Term]) -> str:
    if name not in rho:
        return name
    v = rho[name].is_var()
    if v is None:
        raise ValueError(f"cannot substitute non-variable term for identifier {name}")
    return v


def _subst_resarg(arg: ResArg, rho: dict[str, Term], gen) -> ResArg:
    if isinstance(arg, RVar):
        return RVar(_subst_id(arg.name, rho))
    return RForm(substitute(arg.formula, rho, gen))


def subst_atom(a: HeapAtom, rho: dict[str, Term], gen=None) -> HeapAtom:
    if isinstance(a, PointsTo):
        return PointsTo(_subst_id(a.root, rho), a.ctor, tuple(t.subst(rho) for t in a.args), a.perm)
    if isinstance(a, LatchIn):
        return LatchIn(_subst_id(a.latch, rho), _subst_resarg(a.payload, rho, gen))
    if isinstance(a, LatchOut):
        return LatchOut(_subst_id(a.latch, rho), _subst_resarg(a.payload, rho, gen))
    if isinstance(a, Cnt):
        return Cnt(_subst_id(a.latch, rho), a.count.subst(rho), a.perm)
    if isinstance(a, Wait):
        return Wait(
            frozenset((_subst_id(x, rho), _subst_id(y, rho)) for x, y in a.arcs), a.perm
        )
    if isinstance(a, ThreadNode):
        return ThreadNode(_subst_id(a.tid, rho), substitute(a.post, rho, gen))
    if isinstance(a, ThreadSpec):
        inner = {k: v for k, v in rho.items() if k not in a.bound}
        return ThreadSpec(
            _subst_id(a.tid, rho),
            a.bound,
            substitute(a.pre, inner, gen),
            substitute(a.post, inner, gen),
        )
    if isinstance(a, Dead):
        return Dead(_subst_id(a.tid, rho))
    if isinstance(a, ResVarAtom):
        return ResVarAtom(_subst_id(a.name, rho))
    raise TypeError(a)


def subst_disjunct(d: Disjunct, rho: dict[str, Term], gen=None) -> Disjunct:
    gen = gen or names.default_gen()
    rho = {k: v for k, v in rho.items() if k not in d.exists}
    range_vars = set().union(*(t.vars() for t in rho.values())) if rho else set()
    ren: dict[str, Term] = {}
    new_exists = []
    for v in d.exists:
        if v in range_vars:
            w = gen.fresh(v.split("#")[0])
            ren[v] = Term.var(w)
            new_exists.append(w)
        else:
            new_exists.append(v)
    heap = d.heap
    pure = d.pure
    if ren:
        heap = tuple(subst_atom(a, ren, gen) for a in heap)
        pure = pure_subst(pure, ren, gen)
    if rho:
        heap = tuple(subst_atom(a, rho, gen) for a in heap)
        pure = pure_subst(pure, rho, gen)
    return Disjunct(tuple(new_exists), heap, pure)


def substitute(f: Formula, rho: dict[str, Term], gen=None) -> Formula:
    if not rho:
        return f
    return Formula(tuple(subst_disjunct(d, rho, gen) for d in f.disjuncts), f.span)


def subst_perms(f: Formula, rho: dict[str, Perm]) -> Formula:
    """Replace symbolic permission variables throughout a formula."""
    if not rho:
        return f

    def fix_arg(arg: ResArg) -> ResArg:
        if isinstance(arg, RForm):
            return RForm(subst_perms(arg.formula, rho))
        return arg

    def fix(a: HeapAtom) -> HeapAtom:
        if isinstance(a, PointsTo):
            return PointsTo(a.root, a.ctor, a.args, a.perm.subst(rho))
        if isinstance(a, Cnt):
            return Cnt(a.latch, a.count, a.perm.subst(rho))
        if isinstance(a, Wait):
            return Wait(a.arcs, a.perm.subst(rho))
        if isinstance(a, LatchIn):
            return LatchIn(a.latch, fix_arg(a.payload))
        if isinstance(a, LatchOut):
            return LatchOut(a.latch, fix_arg(a.payload))
        if isinstance(a, ThreadNode):
            return ThreadNode(a.tid, subst_perms(a.post, rho))
        if isinstance(a, ThreadSpec):
            return ThreadSpec(a.tid, a.bound, subst_perms(a.pre, rho), subst_perms(a.post, rho))
        return a

    return Formula(
        tuple(Disjunct(d.exists, tuple(fix(a) for a in d.heap), d.pure) for d in f.disjuncts),
        f.span,
    )


def is_resvar(name: str) -> bool:
    return bool(name) and name[0].isupper()


# ---------------------------------------------------------------------------
# Program syntax


class Expr:
    pass


@dataclass(frozen=True)
class Skip(Expr):
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class VarRead(Expr):
    name: str
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class ConstE(Expr):
    value: int
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class FieldRead(Expr):
    base: str
    fieldname: str
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class New(Expr):
    ctor: str
    args: tuple[Term, ...]
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class CreateLatch(Expr):
    count: Term
    payload: Optional[Formula]
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class CreateThread(Expr):
    proc: str
    pre: Formula
    post: Formula
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple[Term, ...]
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class CountDown(Expr):
    var: str
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class Await(Expr):
    var: str
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class Fork(Expr):
    var: str
    args: tuple[Term, ...]
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class Join(Expr):
    var: str
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class Seq(Expr):
    first: Expr
    second: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class Par(Expr):
    left: Expr
    right: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class Atomic(Expr):
    body: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class If(Expr):
    cond: Pure
    then: Expr
    els: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class Assign(Expr):
    lhs: str
    rhs: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class FieldWrite(Expr):
    base: str
    fieldname: str
    rhs: Term
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class Assert(Expr):
    formula: Formula
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class SpecPair:
    pre: Formula
    post: Formula
    ghost_resource: Optional[Formula] = None


@dataclass(frozen=True)
class DataDecl:
    name: str
    fields: tuple[tuple[str, str], ...]  # (type, field name)
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class ProcDecl:
    name: str
    ret: str
    params: tuple[tuple[str, str], ...]  # (type, name)
    specs: tuple[SpecPair, ...]
    body: Optional[Expr]
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(frozen=True)
class Program:
    data_decls: tuple[DataDecl, ...]
    proc_decls: tuple[ProcDecl, ...]

    def proc(self, name: str) -> Optional[ProcDecl]:
        for p in self.proc_decls:
            if p.name == name:
                return p
        return None

    def data(self, name: str) -> Optional[DataDecl]:
        for d in self.data_decls:
            if d.name == name:
                return d
        return None


BUILTIN_PROCS = {"countDown", "await", "create_latch", "create_thread", "fork", "join"}


def _expr_children(e: Expr) -> list[Expr]:
    if isinstance(e, Seq):
        return [e.first, e.second]
    if isinstance(e, Par):
        return [e.left, e.right]
    if isinstance(e, Atomic):
        return [e.body]
    if isinstance(e, If):
        return [e.then, e.els]
    if isinstance(e, Assign):
        return [e.rhs]
    return []


def walk_expr(e: Expr):
    yield e
    for c in _expr_children(e):
        yield from walk_expr(c)


def _used_vars(e: Expr) -> set[str]:
    used: set[str] = set()
    for node in walk_expr(e):
        if isinstance(node, VarRead):
            used.add(node.name)
        elif isinstance(node, FieldRead):
            used.add(node.base)
        elif isinstance(node, (New, Call, Fork)):
            for t in node.args:
                used |= t.vars()
            if isinstance(node, Fork):
                used.add(node.var)
        elif isinstance(node, CreateLatch):
            used |= node.count.vars()
        elif isinstance(node, (CountDown, Await, Join)):
            used.add(node.var)
        elif isinstance(node, FieldWrite):
            used.add(node.base)
            used |= node.rhs.vars()
        elif isinstance(node, If):
            used |= pure_free_vars(node.cond)
    return used


def _assigned_vars(e: Expr) -> set[str]:
    return {n.lhs for n in walk_expr(e) if isinstance(n, Assign)}


def check_wellformed(p: Program) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    seen: dict[str, ProcDecl] = {}
    for proc in p.proc_decls:
        if proc.name in seen:
            diags.append(Diagnostic("DuplicateProc", f"duplicate procedure {proc.name!r}", proc.span))
        seen[proc.name] = proc
    if "main" not in seen:
        diags.append(Diagnostic("NoMain", "no procedure called main", NO_SPAN))
    data_seen: set[str] = set()
    for d in p.data_decls:
        if d.name in data_seen:
            diags.append(Diagnostic("DuplicateData", f"duplicate data declaration {d.name!r}", d.span))
        data_seen.add(d.name)
    for proc in p.proc_decls:
        if proc.body is None:
            continue
        param_names = [v for _, v in proc.params]
        if len(set(param_names)) != len(param_names):
            diags.append(Diagnostic("DuplicateParam", f"duplicate parameter in {proc.name}", proc.span))
        if not proc.specs:
            diags.append(Diagnostic("NoSpec", f"procedure {proc.name} lacks a specification", proc.span))
        scope = set(param_names) | _assigned_vars(proc.body)
        loose = {v for v in _used_vars(proc.body) - scope if not is_resvar(v)}
        if loose:
            diags.append(
                Diagnostic(
                    "FreeVar",
                    f"variables {sorted(loose)} used in {proc.name} are neither parameters nor locals",
                    proc.span,
                )
            )
        for node in walk_expr(proc.body):
            if isinstance(node, (Call,)):
                callee = p.proc(node.name)
                if callee is None and node.name not in BUILTIN_PROCS:
                    diags.append(Diagnostic("UndeclaredProc", f"call to undeclared procedure {node.name!r}", node.span))
                elif callee is not None and len(callee.params) != len(node.args):
                    diags.append(
                        Diagnostic(
                            "ArityMismatch",
                            f"call to {node.name}: {len(node.args)} args, {len(callee.params)} params",
                            node.span,
                        )
                    )
            elif isinstance(node, CreateThread):
                callee = p.proc(node.proc)
                if callee is None:
                    diags.append(Diagnostic("UndeclaredProc", f"create_thread of undeclared procedure {node.proc!r}", node.span))
            elif isinstance(node, New):
                dd = p.data(node.ctor)
                if dd is None:
                    diags.append(Diagnostic("UnknownData", f"new of undeclared data type {node.ctor!r}", node.span))
                elif len(dd.fields) != len(node.args):
                    diags.append(
                        Diagnostic(
                            "ArityMismatch",
                            f"new {node.ctor}: {len(node.args)} args, {len(dd.fields)} fields",
                            node.span,
                        )
                    )
            elif isinstance(node, Atomic):
                if any(isinstance(m, Par) for m in walk_expr(node.body)):
                    diags.append(Diagnostic("ParInAtomic", "atomic body contains a parallel composition", node.span))
    return diags
