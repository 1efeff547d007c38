"""Wait-for graph bookkeeping: arc insertion, union/split, acyclicity."""

from __future__ import annotations

from dataclasses import dataclass

from .syntax import Perm


class PermissionOverflow(Exception):
    pass


@dataclass(frozen=True)
class WaitGraph:
    arcs: frozenset[tuple[str, str]]
    perm: Perm

    @staticmethod
    def empty(perm: Perm = Perm.one()) -> "WaitGraph":
        return WaitGraph(frozenset(), perm)


def add_arc(g: WaitGraph, frm: str, to: str) -> WaitGraph:
    return WaitGraph(g.arcs | {(frm, to)}, g.perm)


def is_cyclic(g: WaitGraph | frozenset) -> bool:
    arcs = g.arcs if isinstance(g, WaitGraph) else g
    succ: dict[str, list[str]] = {}
    for a, b in arcs:
        succ.setdefault(a, []).append(b)
        succ.setdefault(b, [])
    WHITE, GREY, BLACK = 0, 1, 2
    color = {v: WHITE for v in succ}
    for start in succ:
        if color[start] != WHITE:
            continue
        stack = [(start, iter(succ[start]))]
        color[start] = GREY
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GREY:
                    return True
                if color[nxt] == WHITE:
                    color[nxt] = GREY
                    stack.append((nxt, iter(succ[nxt])))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return False


def combine(g1: WaitGraph, g2: WaitGraph) -> WaitGraph:
    perm = g1.perm + g2.perm
    if perm.is_concrete and perm.frac > 1:
        raise PermissionOverflow(f"combined wait-for permission {perm} exceeds 1")
    return WaitGraph(g1.arcs | g2.arcs, perm)


def split(g: WaitGraph, k: int) -> list[WaitGraph]:
    """Split into k parts: arcs duplicate, the permission partitions evenly."""
    share = g.perm.divide(k)
    return [WaitGraph(g.arcs, share) for _ in range(k)]


def try_reset(g: WaitGraph) -> WaitGraph:
    if g.perm.is_one and not is_cyclic(g):
        return WaitGraph(frozenset(), g.perm)
    return g
