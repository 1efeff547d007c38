"""Optional external decision procedure over the SMT-LIB 2 text protocol.

Disabled by default; enabled with `--smt PATH`. The child process must
accept SMT-LIB 2 on stdin (`z3 -in` style). Results must agree with the
internal solver; the test suite checks this when a solver is available.
"""

from __future__ import annotations

import subprocess

from .syntax import (
    Cmp, PAnd, PExists, PForall, PNot, POr, PTrue, PFalse, Pure, Term,
    pure_free_vars,
)
from .pure import SolverResult, Status


def term_to_sexp(t: Term) -> str:
    parts = []
    for v, c in t.coeffs:
        if c == 1:
            parts.append(v)
        else:
            parts.append(f"(* {c} {v})")
    if t.const != 0 or not parts:
        parts.append(str(t.const))
    if len(parts) == 1:
        return parts[0]
    return "(+ " + " ".join(parts) + ")"


def pure_to_sexp(p: Pure) -> str:
    if isinstance(p, PTrue):
        return "true"
    if isinstance(p, PFalse):
        return "false"
    if isinstance(p, Cmp):
        op = {"eq": "=", "ne": "distinct", "lt": "<", "le": "<="}[p.op]
        return f"({op} {term_to_sexp(p.lhs)} {term_to_sexp(p.rhs)})"
    if isinstance(p, PAnd):
        return "(and " + " ".join(pure_to_sexp(q) for q in p.parts) + ")"
    if isinstance(p, POr):
        return "(or " + " ".join(pure_to_sexp(q) for q in p.parts) + ")"
    if isinstance(p, PNot):
        return f"(not {pure_to_sexp(p.body)})"
    if isinstance(p, PExists):
        binds = " ".join(f"({v} Int)" for v in p.vars)
        return f"(exists ({binds}) {pure_to_sexp(p.body)})"
    if isinstance(p, PForall):
        binds = " ".join(f"({v} Int)" for v in p.vars)
        return f"(forall ({binds}) {pure_to_sexp(p.body)})"
    raise TypeError(p)


def render_query(p: Pure, want_model: bool) -> str:
    lines = []
    for v in sorted(pure_free_vars(p)):
        lines.append(f"(declare-fun {v.replace('#', '!')} () Int)")
    body = pure_to_sexp(p)
    for v in pure_free_vars(p):
        body = body.replace(v, v.replace("#", "!"))
    lines.append(f"(assert {body})")
    lines.append("(check-sat)")
    if want_model:
        lines.append("(get-model)")
    return "\n".join(lines) + "\n"


def parse_model(text: str, vars: set[str]) -> dict[str, int]:
    """Minimal reader for `(define-fun v () Int k)` entries."""
    model: dict[str, int] = {}
    toks = text.replace("(", " ( ").replace(")", " ) ").split()
    i = 0
    while i < len(toks):
        if toks[i] == "define-fun" and i + 4 < len(toks):
            name = toks[i + 1].replace("!", "#")
            j = i + 2
            # skip "( )" argument list and sort
            while j < len(toks) and toks[j] != "Int":
                j += 1
            j += 1
            if j < len(toks):
                val_toks = []
                depth = 0
                while j < len(toks):
                    if toks[j] == "(":
                        depth += 1
                    elif toks[j] == ")":
                        if depth == 0:
                            break
                        depth -= 1
                    else:
                        val_toks.append(toks[j])
                    j += 1
                try:
                    if val_toks == ["-"] or (len(val_toks) == 2 and val_toks[0] == "-"):
                        model[name] = -int(val_toks[-1])
                    else:
                        model[name] = int(val_toks[0])
                except (ValueError, IndexError):
                    pass
            i = j
        i += 1
    return {v: model.get(v, 0) for v in vars}


class SmtBackend:
    def __init__(self, path: str, timeout: float = 10.0):
        self.path = path
        self.timeout = timeout

    def is_sat(self, p: Pure, want_model: bool = True) -> SolverResult:
        query = render_query(p, want_model)
        try:
            proc = subprocess.run(
                [self.path, "-in"] if self.path.endswith("z3") else [self.path],
                input=query, capture_output=True, text=True, timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as e:
            return SolverResult(Status.UNKNOWN, None, f"external solver: {e}")
        out = proc.stdout.strip().splitlines()
        if not out:
            return SolverResult(Status.UNKNOWN, None, "external solver produced no output")
        verdict = out[0].strip()
        if verdict == "unsat":
            return SolverResult(Status.UNSAT)
        if verdict == "sat":
            model = None
            if want_model:
                model = parse_model("\n".join(out[1:]), pure_free_vars(p))
            return SolverResult(Status.SAT, model)
        return SolverResult(Status.UNKNOWN, None, f"external solver said {verdict!r}")
