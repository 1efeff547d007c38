"""Lemma-based rewriting: normalization to fixpoint, inconsistency detection,
demand-driven splitting at par/fork points, and the resource-preservation
(RS) accounting that validates the lemma table at startup.

Normalization applies, per disjunct: count combination, final-state
absorption, trapped-resource release, dead-thread collapsing/release, and
wait-for union/reset; consistency is checked after every pass, turning the
inconsistency patterns into race/deadlock verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import names
from . import pure as solver
from .entail import entail, subst as apply_bindings
from .parser import parse_formula, unparse_atom
from .pure import SolverUnknown, Status
from .syntax import (
    Cnt, Dead, Disjunct, Formula, HeapAtom, LatchIn, LatchOut, Perm,
    Pure, PTrue, ResArg, ResVarAtom, RForm, RVar, Term, ThreadNode, ThreadSpec, Wait,
    TRUE, pand, star, substitute, eq as peq, le as ple, lt as plt,
)
from .waitgraph import is_cyclic
from .diagnostics import Diagnostic


@dataclass(frozen=True)
class Inconsistency:
    kind: str                      # RaceError | DeadlockError | SpecFailure
    lemma: Optional[str]           # E1 | E2 | E3 | None
    message: str
    state: Optional[Formula] = None


class SplitFailure(Exception):
    def __init__(self, diag: Diagnostic):
        self.diag = diag
        super().__init__(diag.message)


class NormalizationDiverged(Exception):
    pass


# ---------------------------------------------------------------------------
# Resource-preservation accounting (RS)


@dataclass(frozen=True)
class RSItem:
    polarity: str      # 'in' (consumed by the abstraction) | 'out'
    payload: str       # canonical rendering of one *-component

    def flipped(self) -> "RSItem":
        return RSItem("out" if self.polarity == "in" else "in", self.payload)


def _components(arg) -> list[str]:
    if isinstance(arg, RVar):
        return [arg.name]
    f = arg.formula if isinstance(arg, RForm) else arg
    out = []
    for d in f.disjuncts:
        for a in d.heap:
            out.append(a.name if isinstance(a, ResVarAtom) else unparse_atom(a))
    return out


def rs(phi: Formula) -> list[RSItem]:
    """Net resource components of a formula: plain resources flow out of the
    owning state; LatchIn payloads flow into the abstraction."""
    items: list[RSItem] = []
    for d in phi.disjuncts:
        for a in d.heap:
            if isinstance(a, (Cnt, Wait, Dead)):
                continue
            if isinstance(a, LatchIn):
                items += [RSItem("in", c) for c in _components(a.payload)]
            elif isinstance(a, LatchOut):
                items += [RSItem("out", c) for c in _components(a.payload)]
            elif isinstance(a, ThreadNode):
                items += [RSItem("out", c) for c in _components(a.post)]
            elif isinstance(a, ThreadSpec):
                items += [RSItem("in", c) for c in _components(a.pre)]
                items += [RSItem("out", c) for c in _components(a.post)]
            elif isinstance(a, ResVarAtom):
                items.append(RSItem("out", a.name))
            else:
                items.append(RSItem("out", unparse_atom(a)))
    return items


def rs_net(pre: Formula, post: Formula) -> list[RSItem]:
    """RS(post) - RS(pre) with polarity-flipping subtraction and cancellation;
    empty means resource-preserving."""
    bag = rs(post) + [i.flipped() for i in rs(pre)]
    out: list[RSItem] = []
    for item in bag:
        partner = item.flipped()
        if partner in out:
            out.remove(partner)
        else:
            out.append(item)
    return out


# ---------------------------------------------------------------------------
# The lemma table (declarative forms drive the startup RS check; the
# executable rewrites live in normalize/check_consistency/split_for)


@dataclass(frozen=True)
class Lemma:
    name: str
    lhs: Formula
    rhs: Optional[Formula]         # None for inconsistency lemmas
    error: Optional[str] = None    # verdict kind for inconsistency lemmas


def _lemma_table() -> tuple[Lemma, ...]:
    F = parse_formula
    return (
        Lemma("N1", F("CNT(c,n)@f1 * CNT(c,-1)@f2 & n<=0"), F("CNT(c,-1)@f3")),
        Lemma("N2", F("CNT(c,n1)@f1 * CNT(c,n2)@f2 & n1>=0 & n2>=0"),
              F("CNT(c,n1+n2)@f3")),
        Lemma("N3", F("LatchOut(c, P) * CNT(c,-1)@f"), F("CNT(c,-1)@f * P")),
        Lemma("S1", F("LatchOut(i, P * Q)"), F("LatchOut(i, P) * LatchOut(i, Q)")),
        Lemma("S2", F("LatchIn(i, P * Q)"), F("LatchIn(i, P) * LatchIn(i, Q)")),
        Lemma("S3", F("CNT(c,n)@1 & n=n1+n2 & n1>=0 & n2>=0"),
              F("CNT(c,n1)@1/2 * CNT(c,n2)@1/2")),
        Lemma("W1", F("WAIT{a->b}@1"), F("WAIT{}@1")),
        Lemma("W2", F("CNT(c1,a)@f1 * CNT(c2,-1)@f2 * WAIT{s1->s2}@f & a>0"),
              F("CNT(c1,a)@f1 * CNT(c2,-1)@f2 * WAIT{s1->s2, c2->c1}@f & a>0")),
        Lemma("W3", F("WAIT{s1->s2}@f1 * WAIT{s3->s4}@f2"),
              F("WAIT{s1->s2, s3->s4}@f3")),
        Lemma("DeadIdem", F("dead(t)"), F("dead(t) * dead(t)")),
        Lemma("DeadRelease", F("thread(t, Q) * dead(t)"), F("dead(t) * Q")),
        Lemma("ThrdSplit", F("thread(t, Q1 * Q2)"), F("thread(t, Q1) * thread(t, Q2)")),
        Lemma("E1", F("LatchIn(c, P) * CNT(c,-1)@f"), None, "RaceError"),
        Lemma("E2", F("CNT(c,a)@f1 * CNT(c,-1)@f2 & a>0"), None, "DeadlockError"),
        Lemma("E3", F("WAIT{s1->s2, s2->s1}@f"), None, "DeadlockError"),
    )


LEMMAS = _lemma_table()


def verify_lemma_table() -> None:
    """Startup check: every non-error lemma must be resource-preserving."""
    for lemma in LEMMAS:
        if lemma.rhs is None:
            continue
        net = rs_net(lemma.lhs, lemma.rhs)
        if net:
            raise AssertionError(
                f"lemma {lemma.name} is not resource-preserving: {net}")


# ---------------------------------------------------------------------------
# Normalization to fixpoint


def _implied(pi: Pure, p: Pure) -> bool:
    try:
        return solver.implies(pi, p)
    except SolverUnknown:
        return False


def _count_is(pi: Pure, t: Term, k: int) -> bool:
    if t.is_const:
        return t.const == k
    return _implied(pi, peq(t, Term.of(k)))


def _concretize_counts(d: Disjunct) -> Disjunct:
    """Replace symbolic CNT counts that the pure part pins to a constant."""
    changed = False
    atoms = list(d.heap)
    for i, a in enumerate(atoms):
        if isinstance(a, Cnt) and not a.count.is_const:
            res = solver.is_sat(d.pure)
            if res.status != Status.SAT or res.model is None:
                break
            k = a.count.eval(res.model)
            if _implied(d.pure, peq(a.count, Term.of(k))):
                atoms[i] = Cnt(a.latch, Term.of(k), a.perm)
                changed = True
    return Disjunct(d.exists, tuple(atoms), d.pure) if changed else d


def _merge_payload(d: Disjunct, atoms: list[HeapAtom], payload: ResArg,
                   gen) -> list[Disjunct]:
    """Replace a released predicate by its payload, distributing disjunctive
    payloads over the host disjunct."""
    host = Formula((Disjunct(d.exists, tuple(atoms), d.pure),))
    if isinstance(payload, RVar):
        extra = Formula((Disjunct((), (ResVarAtom(payload.name),), TRUE),))
    else:
        extra = payload.formula
    return list(star(host, extra, gen).disjuncts)


def _is_trivial_payload(arg: ResArg) -> bool:
    if isinstance(arg, RVar):
        return False
    f = arg.formula
    return all(not dd.heap and isinstance(dd.pure, PTrue) for dd in f.disjuncts)


def _rewrite_once(d: Disjunct, gen) -> Optional[list[Disjunct]]:
    """Apply the first applicable normalization lemma; None at fixpoint."""
    atoms = list(d.heap)
    pi = d.pure

    # Latch predicates with nothing to carry are units and disappear
    for i, a in enumerate(atoms):
        if isinstance(a, (LatchIn, LatchOut)) and _is_trivial_payload(a.payload):
            rest = [x for k, x in enumerate(atoms) if k != i]
            return [Disjunct(d.exists, tuple(rest), pi)]

    # N2: combine counter shares that are both provably non-negative
    for i in range(len(atoms)):
        if not isinstance(atoms[i], Cnt):
            continue
        for j in range(i + 1, len(atoms)):
            a, b = atoms[i], atoms[j]
            if not (isinstance(b, Cnt) and b.latch == a.latch):
                continue
            if _implied(pi, pand([ple(Term.of(0), a.count), ple(Term.of(0), b.count)])):
                merged = Cnt(a.latch, a.count + b.count, a.perm + b.perm)
                rest = [x for k, x in enumerate(atoms) if k not in (i, j)]
                return [_concretize_counts(Disjunct(d.exists, tuple(rest + [merged]), pi))]

    # N1: absorb an exhausted share into the final state
    for i in range(len(atoms)):
        if not isinstance(atoms[i], Cnt):
            continue
        for j in range(len(atoms)):
            if i == j or not isinstance(atoms[j], Cnt):
                continue
            a, b = atoms[i], atoms[j]
            if b.latch != a.latch or not _count_is(pi, b.count, -1):
                continue
            if _implied(pi, ple(a.count, Term.of(0))):
                merged = Cnt(a.latch, Term.of(-1), a.perm + b.perm)
                rest = [x for k, x in enumerate(atoms) if k not in (i, j)]
                return [Disjunct(d.exists, tuple(rest + [merged]), pi)]

    # N3: an expired latch releases the resource trapped in its out-flow
    for i, a in enumerate(atoms):
        if not isinstance(a, LatchOut):
            continue
        if any(isinstance(b, Cnt) and b.latch == a.latch and _count_is(pi, b.count, -1)
               for b in atoms):
            rest = [x for k, x in enumerate(atoms) if k != i]
            return _merge_payload(d, rest, a.payload, gen)

    # dead(t) * dead(t) -> dead(t)
    seen: dict[str, int] = {}
    for i, a in enumerate(atoms):
        if isinstance(a, Dead):
            if a.tid in seen:
                rest = [x for k, x in enumerate(atoms) if k != i]
                return [Disjunct(d.exists, tuple(rest), pi)]
            seen[a.tid] = i

    # thread(t, Q) * dead(t) -> dead(t) * Q
    for i, a in enumerate(atoms):
        if isinstance(a, ThreadNode) and any(
                isinstance(b, Dead) and b.tid == a.tid for b in atoms):
            rest = [x for k, x in enumerate(atoms) if k != i]
            return _merge_payload(d, rest, RForm(a.post), gen)

    # W3: union wait-for shares
    waits = [i for i, a in enumerate(atoms) if isinstance(a, Wait)]
    if len(waits) >= 2:
        i, j = waits[0], waits[1]
        a, b = atoms[i], atoms[j]
        merged = Wait(a.arcs | b.arcs, a.perm + b.perm)
        rest = [x for k, x in enumerate(atoms) if k not in (i, j)]
        return [Disjunct(d.exists, tuple(rest + [merged]), pi)]

    # W1: a complete acyclic wait-for view resets
    for i, a in enumerate(atoms):
        if isinstance(a, Wait) and a.arcs and a.perm.is_one and not is_cyclic(a.arcs):
            rest = [x for k, x in enumerate(atoms) if k != i]
            return [Disjunct(d.exists, tuple(rest + [Wait(frozenset(), a.perm)]), pi)]

    return None


def check_consistency(delta: Formula) -> Optional[Inconsistency]:
    """Fire the inconsistency lemmas on each disjunct."""
    for d in delta.disjuncts:
        pi = d.pure
        sat = None
        # E1: resource still flowing in while the latch already expired
        for a in d.heap:
            if not isinstance(a, LatchIn):
                continue
            for b in d.heap:
                if isinstance(b, Cnt) and b.latch == a.latch and _count_is(pi, b.count, -1):
                    if sat is None:
                        sat = solver.is_sat(pi, want_model=False).status == Status.SAT
                    if sat:
                        return Inconsistency(
                            "RaceError", "E1",
                            f"latch {a.latch} expired while resource still in-flight",
                            delta)
        # E2: a positive share coexists with the final state
        for a in d.heap:
            if not isinstance(a, Cnt):
                continue
            for b in d.heap:
                if b is a or not isinstance(b, Cnt) or b.latch != a.latch:
                    continue
                if _count_is(pi, b.count, -1) and _implied(pi, plt(Term.of(0), a.count)):
                    return Inconsistency(
                        "DeadlockError", "E2",
                        f"latch {a.latch}: pending countdowns can never complete",
                        delta)
        # E3: cycle in the wait-for graph
        for a in d.heap:
            if isinstance(a, Wait) and is_cyclic(a.arcs):
                cycle = ", ".join(f"{x}->{y}" for x, y in sorted(a.arcs))
                return Inconsistency(
                    "DeadlockError", "E3", f"cyclic wait-for graph {{{cycle}}}", delta)
        # thread usage protocol: an unstarted descriptor cannot be dead
        for a in d.heap:
            if isinstance(a, ThreadSpec) and any(
                    isinstance(b, Dead) and b.tid == a.tid for b in d.heap):
                return Inconsistency(
                    "SpecFailure", None,
                    f"thread {a.tid} joined before it was forked", delta)
    return None


def normalize(delta: Formula, gen=None):
    """Rewrite to fixpoint; returns the normal form or an Inconsistency."""
    gen = gen or names.default_gen()
    out: list[Disjunct] = []
    for d0 in delta.disjuncts:
        queue = [_concretize_counts(d0)]
        cap = 10 * (len(d0.heap) + 1) + 10
        while queue:
            d = queue.pop(0)
            rounds = 0
            while True:
                step = _rewrite_once(d, gen)
                if step is not None:
                    rounds += 1
                    if rounds > cap:
                        raise NormalizationDiverged(f"no fixpoint after {rounds} rounds")
                    d = step[0]
                    queue.extend(step[1:])
                bad = check_consistency(Formula((d,)))
                if bad is not None:
                    return bad
                if step is None:
                    break
            out.append(d)
    return Formula(tuple(out), delta.span)


# ---------------------------------------------------------------------------
# Demand-driven splitting at par/fork points


@dataclass
class SplitTarget:
    formula: Formula               # required pre-state of one branch
    E: set[str] = field(default_factory=set)


@dataclass
class SplitResult:
    branches: list[Formula]
    frame: Formula


def _min_count(target_pure: Pure, count: Term, available: int) -> Optional[int]:
    if count.is_const:
        return count.const if count.const <= available else None
    for k in range(0, available + 1):
        probe = pand([target_pure, peq(count, Term.of(k))])
        if solver.is_sat(probe, want_model=False).status == Status.SAT:
            return k
    return None


def split_for(delta: Formula, targets: list[SplitTarget], variance: bool = False,
              gen=None) -> SplitResult:
    """Partition a (single-disjunct) state among branch targets, splitting
    counters by demanded amounts, payload predicates by need, and wait-for
    permissions evenly; leftovers form the continuation frame."""
    gen = gen or names.default_gen()
    if len(delta.disjuncts) != 1:
        raise SplitFailure(Diagnostic("SpecFailure", "cannot split a disjunctive state"))
    d = delta.single()
    pi = d.pure
    k = len(targets)

    pool: list[HeapAtom] = []
    waits: list[Wait] = []
    deads: list[Dead] = []
    cnts: dict[tuple[str, bool], list[Cnt]] = {}
    for a in d.heap:
        if isinstance(a, Wait):
            waits.append(a)
        elif isinstance(a, Dead):
            deads.append(a)
        elif isinstance(a, Cnt):
            final = _count_is(pi, a.count, -1)
            cnts.setdefault((a.latch, final), []).append(a)
        else:
            pool.append(a)

    # Resolve every target's counter demands first.
    demands: list[list[tuple[str, int, Perm, Optional[str]]]] = []
    avail: dict[tuple[str, bool], tuple[Term, Perm]] = {}
    for key, group in cnts.items():
        count = group[0].count
        perm = group[0].perm
        for extra in group[1:]:
            count = count + extra.count if not key[1] else count
            perm = perm + extra.perm
        avail[key] = (count, perm)

    rest_targets: list[Disjunct] = []
    for t in targets:
        if len(t.formula.disjuncts) != 1:
            raise SplitFailure(Diagnostic("SpecFailure", "disjunctive branch target"))
        td = t.formula.single()
        my: list[tuple[str, int, Perm, Optional[str]]] = []
        rest_atoms = []
        rho_counts: dict[str, Term] = {}
        for a in td.heap:
            if isinstance(a, Cnt):
                if _count_is(td.pure, a.count, -1):
                    key = (a.latch, True)
                    if key not in avail:
                        raise SplitFailure(Diagnostic(
                            "SpecFailure", f"branch needs expired latch {a.latch}"))
                    my.append((a.latch, -1, a.perm, a.count.is_var()))
                    v = a.count.is_var()
                    if v is not None:
                        rho_counts[v] = Term.of(-1)
                    continue
                key = (a.latch, False)
                if key not in avail:
                    raise SplitFailure(Diagnostic(
                        "SpecFailure", f"no counter available for latch {a.latch}"))
                have, _ = avail[key]
                if not have.is_const:
                    raise SplitFailure(Diagnostic(
                        "SpecFailure", f"cannot split symbolic count for {a.latch}"))
                need = _min_count(td.pure, a.count, have.const)
                if need is None:
                    raise SplitFailure(Diagnostic(
                        "SpecFailure",
                        f"latch {a.latch}: demanded count exceeds available {have.const}"))
                my.append((a.latch, need, a.perm, a.count.is_var()))
                v = a.count.is_var()
                if v is not None:
                    rho_counts[v] = Term.of(need)
            else:
                rest_atoms.append(a)
        demands.append(my)
        td_rest = Disjunct(td.exists, tuple(rest_atoms), td.pure)
        if rho_counts:
            from .syntax import subst_disjunct
            td_rest = subst_disjunct(td_rest, rho_counts, gen)
        rest_targets.append(td_rest)

    # Check totals and compute permission shares per latch.
    shares: dict[tuple[str, bool], Perm] = {}
    remainders: dict[tuple[str, bool], int] = {}
    for key, (count, perm) in avail.items():
        wanted = [dm for my in demands for dm in my if (dm[0], dm[1] == -1) == key]
        named = [dm[2] for dm in wanted if dm[2].is_concrete]
        unnamed = len(wanted) - len(named)
        if not key[1]:
            total = sum(dm[1] for dm in wanted)
            if total > count.const:
                raise SplitFailure(Diagnostic(
                    "SpecFailure",
                    f"latch {key[0]}: branches demand {total} countdowns, "
                    f"only {count.const} available"))
            remainders[key] = count.const - total
        if not perm.is_concrete:
            if wanted and (unnamed > 0 or named):
                raise SplitFailure(Diagnostic(
                    "SpecFailure", f"cannot split symbolic permission of {key[0]}"))
            continue
        left = perm
        for p in named:
            left = left.minus(p)
        shares[key] = left.divide(unnamed + 1)

    wait_share = None
    if waits:
        merged = waits[0]
        for w in waits[1:]:
            merged = Wait(merged.arcs | w.arcs, merged.perm + w.perm)
        if not merged.perm.is_concrete:
            raise SplitFailure(Diagnostic("SpecFailure", "symbolic wait-for permission"))
        wait_share = Wait(merged.arcs, merged.perm.divide(k + 1))

    # Consume each target's remaining atoms by entailment.
    remaining = Formula((Disjunct((), tuple(pool), pi),))
    branches: list[Formula] = []
    for t, td, my in zip(targets, rest_targets, demands):
        target_f = Formula((td,))
        r = entail(set(t.E), remaining, target_f, variance=variance, gen=gen)
        if not r.success:
            raise SplitFailure(Diagnostic(
                "SpecFailure",
                f"no partition satisfies a branch precondition: "
                f"{r.failure_reason.message if r.failure_reason else ''}"))
        remaining = r.residue
        consumed = substitute(target_f, r.var_bindings, gen) if r.var_bindings else target_f
        consumed = apply_bindings(r.bindings, consumed, gen)
        branch_atoms = list(consumed.single().heap)
        branch_pure = [pi, consumed.single().pure]
        for latch, need, perm_spec, count_var in my:
            key = (latch, need == -1)
            share = perm_spec if perm_spec.is_concrete else shares[key]
            branch_atoms.append(Cnt(latch, Term.of(need), share))
        if wait_share is not None:
            branch_atoms.append(wait_share)
        branch_atoms.extend(deads)
        branches.append(Formula((Disjunct(consumed.single().exists,
                                          tuple(branch_atoms), pand(branch_pure)),)))

    frame_atoms = list(remaining.single().heap)
    for key, (count, perm) in avail.items():
        if key[1]:
            if key in shares:
                frame_atoms.append(Cnt(key[0], Term.of(-1), shares[key]))
            else:
                frame_atoms.append(Cnt(key[0], count, perm))
        else:
            share = shares.get(key)
            if share is not None:
                frame_atoms.append(Cnt(key[0], Term.of(remainders.get(key, 0)), share))
            else:
                frame_atoms.append(Cnt(key[0], count, perm))
    if wait_share is not None:
        frame_atoms.append(wait_share)
    frame_atoms.extend(deads)
    frame = Formula((Disjunct(remaining.single().exists, tuple(frame_atoms),
                              remaining.single().pure),))
    return SplitResult(branches, frame)


# ---------------------------------------------------------------------------
# Precision lint


def ambiguous_disjuncts(f: Formula) -> list[tuple[int, int]]:
    """Pairs of disjuncts whose conjunction is satisfiable: such a disjunction
    is not resource-precise."""
    out = []
    ds = f.disjuncts
    for i in range(len(ds)):
        for j in range(i + 1, len(ds)):
            a, b = ds[i], ds[j]
            ska = sorted((type(x).__name__, getattr(x, "latch", getattr(x, "root", getattr(x, "tid", getattr(x, "name", ""))))) for x in a.heap)
            skb = sorted((type(x).__name__, getattr(x, "latch", getattr(x, "root", getattr(x, "tid", getattr(x, "name", ""))))) for x in b.heap)
            if ska != skb:
                continue
            try:
                co_sat = solver.is_sat(pand([a.pure, b.pure]), want_model=False).status == Status.SAT
            except SolverUnknown:
                co_sat = True
            if co_sat:
                out.append((i, j))
    return out
