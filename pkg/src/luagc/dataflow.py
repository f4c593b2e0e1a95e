"""Program points, control flow, and reaching definitions.

The analyzer works on a desugared, alpha-renamed tree: every local binder
gets a unique name so definitions can be tracked globally.  Each AST node
is a program point (numbered pre-order); statements are the CFG nodes and
every expression shares the point set of its enclosing statement.

Reaching definitions are the classic forward dataflow: in-sets are unions
of predecessors' out-sets, ``out = gen + (in - kill)``, iterated to a
fixed point (the lattice is finite).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

from . import ast as A

Definition = Tuple[str, int]  # (unique var name, defining point)


class OutOfScopeConstruct(Exception):
    """The program uses a form outside the analyzer's supported fragment."""

    def __init__(self, message: str, pos: Optional[A.Pos] = None):
        where = f"{pos.line}:{pos.col}: " if pos else ""
        super().__init__(where + message)
        self.message = message
        self.pos = pos


# ---------------------------------------------------------------------------
# Alpha renaming
# ---------------------------------------------------------------------------


def alpha_rename(t: A.Term) -> A.Term:
    """Make every bound name unique (``x``, ``x#2``, ...)."""
    counts: Dict[str, int] = {}

    def fresh(name: str) -> str:
        n = counts.get(name, 0)
        counts[name] = n + 1
        return name if n == 0 else f"{name}#{n + 1}"

    def go(t: A.Term, env: Dict[str, str]) -> A.Term:
        if isinstance(t, A.Name):
            return A.Name(env.get(t.ident, t.ident), pos=t.pos)
        if isinstance(t, A.Local):
            exprs = tuple(go(e, env) for e in t.exprs)
            new = {n: fresh(n) for n in t.names}
            inner = dict(env)
            inner.update(new)
            return A.Local(
                tuple(new[n] for n in t.names), exprs, go(t.body, inner), pos=t.pos
            )
        if isinstance(t, A.Function):
            new = {n: fresh(n) for n in t.params}
            inner = dict(env)
            inner.update(new)
            return A.Function(tuple(new[n] for n in t.params),
                              go(t.body, inner), pos=t.pos)
        return A._rebuild(t, lambda c: go(c, env))

    return go(t, {})


def original_name(name: str) -> str:
    return name.split("#", 1)[0]


# ---------------------------------------------------------------------------
# Program points
# ---------------------------------------------------------------------------


@dataclass
class Points:
    """Pre-order numbering of one (shared, never rebuilt) tree."""

    number: Dict[int, int] = field(default_factory=dict)  # id(node) -> point
    node: Dict[int, A.Term] = field(default_factory=dict)

    def of(self, n: A.Term) -> int:
        return self.number[id(n)]

    def pos(self, n: A.Term) -> Optional[A.Pos]:
        return getattr(n, "pos", None)


def number_points(t: A.Term) -> Points:
    pts = Points()
    counter = 0
    for n in A.walk(t):
        pts.number[id(n)] = counter
        pts.node[counter] = n
        counter += 1
    return pts


# ---------------------------------------------------------------------------
# CFG + reaching definitions
# ---------------------------------------------------------------------------


@dataclass
class ReachingDefs:
    """Definitions valid on entry to each statement point."""

    in_sets: Dict[int, FrozenSet[Definition]] = field(default_factory=dict)
    #: expression point -> enclosing statement point
    stmt_of: Dict[int, int] = field(default_factory=dict)

    def at(self, point: int) -> FrozenSet[Definition]:
        stmt = self.stmt_of.get(point, point)
        return self.in_sets.get(stmt, frozenset())


class _CfgBuilder:
    def __init__(self, points: Points):
        self.points = points
        self.succ: Dict[int, Set[int]] = {}
        self.gen: Dict[int, Set[Definition]] = {}
        self.kill: Dict[int, Set[str]] = {}
        self.nodes: List[int] = []

    def add_node(self, p: int) -> None:
        if p not in self.succ:
            self.succ[p] = set()
            self.gen[p] = set()
            self.kill[p] = set()
            self.nodes.append(p)

    def edge(self, a: int, b: int) -> None:
        self.succ[a].add(b)

    # Returns the entry point and the set of exit points of a statement.
    def build(self, t: A.Stat, breaks: Optional[List[int]]) -> Tuple[Optional[int], List[int]]:
        p = self.points.of(t)
        if isinstance(t, (A.Empty, A.ExprStat, A.Assign, A.Return, A.Break)):
            self.add_node(p)
            if isinstance(t, A.Assign):
                for x in t.targets:
                    if isinstance(x, A.Name):
                        self.gen[p].add((x.ident, p))
                        self.kill[p].add(x.ident)
            if isinstance(t, A.Break):
                if breaks is None:
                    raise OutOfScopeConstruct("break outside a loop", t.pos)
                breaks.append(p)
                return p, []
            if isinstance(t, A.Return):
                return p, []
            return p, [p]
        if isinstance(t, A.Seq):
            e1, x1 = self.build(t.first, breaks)
            e2, x2 = self.build(t.rest, breaks)
            if e1 is None:
                return e2, x2
            if e2 is not None:
                for x in x1:
                    self.edge(x, e2)
                return e1, x2
            return e1, x1
        if isinstance(t, A.Local):
            self.add_node(p)
            for n in t.names:
                self.gen[p].add((n, p))
                self.kill[p].add(n)
            e, xs = self.build(t.body, breaks)
            if e is not None:
                self.edge(p, e)
                return p, xs
            return p, [p]
        if isinstance(t, A.If):
            self.add_node(p)
            e1, x1 = self.build(t.then_body, breaks)
            e2, x2 = self.build(t.else_body, breaks)
            exits: List[int] = []
            for e, xs in ((e1, x1), (e2, x2)):
                if e is None:
                    exits.append(p)
                else:
                    self.edge(p, e)
                    exits.extend(xs)
            return p, exits
        if isinstance(t, A.While):
            self.add_node(p)
            inner_breaks: List[int] = []
            e, xs = self.build(t.body, inner_breaks)
            if e is not None:
                self.edge(p, e)
                for x in xs:
                    self.edge(x, p)  # back edge
            else:
                self.edge(p, p)
            exits = [p] + inner_breaks
            return p, exits
        raise OutOfScopeConstruct(
            f"statement not supported by the analyzer: {type(t).__name__}", t.pos
        )


def build_cfg(t: A.Stat, points: Points) -> ReachingDefs:
    """Reaching definitions for every statement point, worklist fixpoint."""
    b = _CfgBuilder(points)
    entry, _ = b.build(t, None)

    preds: Dict[int, Set[int]] = {p: set() for p in b.nodes}
    for a, succs in b.succ.items():
        for s in succs:
            preds[s].add(a)

    in_sets: Dict[int, Set[Definition]] = {p: set() for p in b.nodes}
    out_sets: Dict[int, Set[Definition]] = {p: set() for p in b.nodes}
    work = list(b.nodes)
    while work:
        p = work.pop()
        new_in: Set[Definition] = set()
        for q in preds[p]:
            new_in |= out_sets[q]
        in_sets[p] = new_in
        new_out = set(b.gen[p]) | {
            (v, dp) for (v, dp) in new_in if v not in b.kill[p]
        }
        if new_out != out_sets[p]:
            out_sets[p] = new_out
            work.extend(b.succ[p])

    rd = ReachingDefs({p: frozenset(s) for p, s in in_sets.items()})
    # map every nested point (expressions, sub-statements of Local bodies
    # evaluated within the statement) to its closest enclosing CFG node
    cfg_nodes = set(b.nodes)

    def assign(node: A.Term, owner: Optional[int]) -> None:
        p = points.of(node)
        here = p if p in cfg_nodes else owner
        if here is not None:
            rd.stmt_of[p] = here
        for c in A.children(node):
            assign(c, here)

    assign(t, entry)
    return rd
