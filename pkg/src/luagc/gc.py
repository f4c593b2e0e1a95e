"""Garbage-collection mathematics.

Reachability comes in two flavours:

* plain reachability — transitive access from the locations literally in
  the program term, through value-store dereference, table fields,
  metatables, and closure environments;
* strong reachability — the weak-table-aware notion: fields of weak tables
  only contribute their non-weak side, and ephemeron (weak-keys) fields
  contribute their value only while the key is strongly reachable from the
  root with that field removed.

Both have a production implementation (worklist fixed point over the heap
graph) and a reference implementation (the literal recursion that consumes
store bindings / field occurrences as it descends, so it terminates).  The
test suite checks the two agree.

On top of reachability sit the three collection cycles: ``gc_simple``
(drop an unreachable subset), ``gc_fin`` (additionally protect tables
marked for finalization and pick the next finalizer by priority), and
``gc_fin_weak`` (strong reachability plus clearing of weak fields).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, FrozenSet, Iterable, List, Optional, Set, Tuple, Union

from .ast import (
    Cid,
    Location,
    Nil,
    Term,
    Tid,
    Value,
    is_collectible,
    term_locations,
    value_locations,
)
from .heap import (
    FORBIDDEN,
    UNSET,
    Configuration,
    Mark,
    ObjectStore,
    ValueStore,
    index_metatable,
    is_marked,
    weak_keys,
    weak_values,
    weakness,
)

Selector = Optional[Callable[[List[Location]], Iterable[Location]]]


def _bound(loc: Location, sigma: ValueStore, theta: ObjectStore) -> bool:
    kind, i = loc
    if kind == "ref":
        return i in sigma
    if kind == "tid":
        return theta.has_table(i)
    return theta.has_closure(i)


def _value_loc(v: Value) -> Optional[Location]:
    if isinstance(v, Tid):
        return ("tid", v.n)
    if isinstance(v, Cid):
        return ("cid", v.n)
    return None


def all_locations(sigma: ValueStore, theta: ObjectStore) -> List[Location]:
    locs: List[Location] = [("ref", r) for r in sigma.bindings]
    locs.extend(("tid", i) for i in theta.tables)
    locs.extend(("cid", i) for i in theta.closures)
    return locs


def _neighbors(loc: Location, sigma: ValueStore, theta: ObjectStore) -> List[Location]:
    """Outgoing heap-graph edges under plain reachability."""
    kind, i = loc
    out: List[Location] = []
    if kind == "ref":
        if i in sigma:
            out.extend(value_locations(sigma.bindings[i]))
    elif kind == "tid":
        if theta.has_table(i):
            out.extend(theta.table(i).locations())
    else:
        if theta.has_closure(i):
            out.extend(theta.closure(i).locations())
    return out


# ---------------------------------------------------------------------------
# Plain reachability
# ---------------------------------------------------------------------------


def reach_set_from(
    roots: Iterable[Location], sigma: ValueStore, theta: ObjectStore
) -> Set[Location]:
    seen: Set[Location] = set()
    stack = [l for l in roots if _bound(l, sigma, theta)]
    while stack:
        l = stack.pop()
        if l in seen:
            continue
        seen.add(l)
        for n in _neighbors(l, sigma, theta):
            if n not in seen and _bound(n, sigma, theta):
                stack.append(n)
    return seen


def reach_set(t: Term, sigma: ValueStore, theta: ObjectStore) -> Set[Location]:
    """All locations reachable from the term's root set (worklist BFS)."""
    return reach_set_from(term_locations(t), sigma, theta)


def reach_oracle(l: Location, t: Term, sigma: ValueStore, theta: ObjectStore) -> bool:
    """BFS-over-the-heap-graph answer; the independent check for ``reach``."""
    return _bound(l, sigma, theta) and l in reach_set(t, sigma, theta)


def reach(l: Location, t: Term, sigma: ValueStore, theta: ObjectStore) -> bool:
    """Reference implementation: the recursion that removes visited
    bindings from the stores so cycles cannot recurse forever.

    An unbound location is never reachable, even if it occurs literally.
    """
    if not _bound(l, sigma, theta):
        return False
    return _rec_reach(l, list(term_locations(t)), dict(sigma.bindings),
                      dict(theta.tables), dict(theta.closures))


def _rec_reach(l: Location, locs: List[Location], sigma: dict,
               tables: dict, closures: dict) -> bool:
    if l in locs:
        return True
    for kind, i in locs:
        if kind == "ref" and i in sigma:
            rest = dict(sigma)
            v = rest.pop(i)
            if _rec_reach(l, list(value_locations(v)), rest, tables, closures):
                return True
        elif kind == "tid" and i in tables:
            obj = tables[i]
            rest = dict(tables)
            del rest[i]
            content = []
            for k, v in obj.fields:
                content.extend(value_locations(k))
                content.extend(value_locations(v))
            if _rec_reach(l, content, sigma, rest, closures):
                return True
            if obj.meta is not None and _rec_reach(
                l, [("tid", obj.meta)], sigma, rest, closures
            ):
                return True
        elif kind == "cid" and i in closures:
            obj = closures[i]
            rest = dict(closures)
            del rest[i]
            if _rec_reach(l, list(obj.locations()), sigma, tables, rest):
                return True
    return False


# ---------------------------------------------------------------------------
# Strong (weak-table-aware) reachability
# ---------------------------------------------------------------------------

SOItem = Union[Tuple[str, Value], Tuple[str, Value, Value]]


def strong_occurrences(tid: int, theta: ObjectStore) -> List[SOItem]:
    """The non-weak collectible occurrences of a table, per its weakness.

    Weak-values tables contribute their collectible keys; strong tables
    all collectible keys and values; weak-keys (ephemeron) tables a
    ``("pair", key, value)`` for each collectible value; fully weak tables
    nothing.
    """
    w = weakness(tid, theta)
    fields = theta.table(tid).fields
    if w == "wv":
        return [("plain", k) for k, _ in fields if is_collectible(k)]
    if w == "strong":
        out: List[SOItem] = []
        for k, v in fields:
            if is_collectible(k):
                out.append(("plain", k))
            if is_collectible(v):
                out.append(("plain", v))
        return out
    if w == "wk":
        return [("pair", k, v) for k, v in fields if is_collectible(v)]
    return []


def strong_reach_set(t: Term, sigma: ValueStore, theta: ObjectStore) -> Set[Location]:
    """Strongly reachable locations: iterated to a fixed point so that an
    ephemeron value joins only once its key has joined."""
    roots = [l for l in term_locations(t) if _bound(l, sigma, theta)]
    reached: Set[Location] = set()
    frontier = list(roots)
    pending_eph: List[Tuple[Location, Location]] = []  # (key loc, value loc)

    def push(loc: Location) -> None:
        if loc not in reached and _bound(loc, sigma, theta):
            frontier.append(loc)

    while True:
        while frontier:
            l = frontier.pop()
            if l in reached:
                continue
            reached.add(l)
            kind, i = l
            if kind == "ref":
                for n in value_locations(sigma.bindings[i]):
                    push(n)
            elif kind == "tid":
                obj = theta.table(i)
                if obj.meta is not None:
                    push(("tid", obj.meta))
                for item in strong_occurrences(i, theta):
                    if item[0] == "plain":
                        n = _value_loc(item[1])
                        if n is not None:
                            push(n)
                    else:
                        _, k, v = item
                        vloc = _value_loc(v)
                        if vloc is None:
                            continue
                        kloc = _value_loc(k)
                        if kloc is None:  # non-collectible key: value is strong
                            push(vloc)
                        else:
                            pending_eph.append((kloc, vloc))
            else:
                for n in theta.closure(i).locations():
                    push(n)
        activated = False
        still: List[Tuple[Location, Location]] = []
        for kloc, vloc in pending_eph:
            if kloc in reached:
                push(vloc)
                activated = True
            else:
                still.append((kloc, vloc))
        pending_eph = still
        if not activated and not frontier:
            return reached


def reach_cte(
    l: Location, t: Term, sigma: ValueStore, theta: ObjectStore, rt: Term
) -> bool:
    """Reference implementation of strong reachability of a collectible.

    ``rt`` is the root term that ephemeron key checks restart from, each
    with its gating field removed from the store view (so a value cannot
    justify its own key).  Field removals accumulate only across nested
    key checks; ordinary traversal prunes cycles per path, which keeps the
    recursion well-founded without losing paths.
    """
    if not _bound(l, sigma, theta):
        return False
    rt_locs = list(term_locations(rt))
    return _rec_cte(
        l, list(term_locations(t)), sigma, theta, rt_locs,
        frozenset(), frozenset(),
    )


def _rec_cte(
    l: Location,
    locs: List[Location],
    sigma: ValueStore,
    theta: ObjectStore,
    rt_locs: List[Location],
    removed_fields: FrozenSet[Tuple[int, int]],
    path: FrozenSet[Location],
) -> bool:
    if l in locs:
        return True
    for loc in locs:
        if loc in path or not _bound(loc, sigma, theta):
            continue
        deeper = path | {loc}
        kind, i = loc
        if kind == "ref":
            vlocs = list(value_locations(sigma.bindings[i]))
            if _rec_cte(l, vlocs, sigma, theta, rt_locs, removed_fields,
                        deeper):
                return True
        elif kind == "tid":
            obj = theta.table(i)
            if obj.meta is not None:
                if _rec_cte(l, [("tid", obj.meta)], sigma, theta, rt_locs,
                            removed_fields, deeper):
                    return True
            w = weakness(i, theta)
            for idx, (k, v) in enumerate(obj.fields):
                if (i, idx) in removed_fields:
                    continue
                kloc, vloc = _value_loc(k), _value_loc(v)
                if w in ("strong", "wv") and kloc is not None:
                    if _rec_cte(l, [kloc], sigma, theta, rt_locs,
                                removed_fields, deeper):
                        return True
                if w == "strong" and vloc is not None:
                    if _rec_cte(l, [vloc], sigma, theta, rt_locs,
                                removed_fields, deeper):
                        return True
                if w == "wk" and vloc is not None:
                    key_ok = kloc is None or _rec_cte(
                        kloc, rt_locs, sigma, theta, rt_locs,
                        removed_fields | {(i, idx)}, frozenset(),
                    )
                    if key_ok and _rec_cte(l, [vloc], sigma, theta, rt_locs,
                                           removed_fields, deeper):
                        return True
        else:
            body = list(theta.closure(i).locations())
            if _rec_cte(l, body, sigma, theta, rt_locs, removed_fields,
                        deeper):
                return True
    return False


# ---------------------------------------------------------------------------
# Finalization marks
# ---------------------------------------------------------------------------


def set_fin(tid: int, v: Value, theta: ObjectStore) -> Mark:
    """New finalization mark for ``setmetatable(tid, v)``.

    Case split: a forbidden mark is sticky; a nil metatable unmarks;
    re-setting the same metatable keeps the mark; a metatable without a
    ``__gc`` field unmarks; a new metatable with ``__gc`` marks with the
    next priority (chronological order).
    """
    table = theta.table(tid)
    if table.pos is FORBIDDEN:
        return FORBIDDEN
    if isinstance(v, Nil):
        return UNSET
    assert isinstance(v, Tid)
    if table.meta == v.n:
        return table.pos
    from .ast import Str

    if not theta.table(v.n).has(Str("__gc")):
        return UNSET
    return next_priority(theta)


def next_priority(theta: ObjectStore) -> int:
    best = 0
    for i in theta.table_ids():
        pos = theta.table(i).pos
        if isinstance(pos, int) and pos > best:
            best = pos
    return best + 1


def marked_tables(theta: ObjectStore) -> List[int]:
    return [i for i in theta.table_ids() if is_marked(theta.table(i).pos)]


def not_fin_val(tid: int, theta: ObjectStore) -> bool:
    """A table sitting as a value of some weak table may not be finalized
    this cycle; its weak fields must be cleared first."""
    target = Tid(tid)
    for i in theta.table_ids():
        w = weakness(i, theta)
        if w == "strong":
            continue
        for _, v in theta.table(i).fields:
            if v == target:
                return False
    return True


# ---------------------------------------------------------------------------
# Collection cycles
# ---------------------------------------------------------------------------


@dataclass
class GcOutcome:
    kept_sigma: ValueStore
    kept_theta: ObjectStore
    pending_finalizer: Optional[Tuple[int, int]] = None  # (cid, tid)
    cleared_weak_fields: List[Tuple[int, Value, Value]] = dc_field(default_factory=list)
    discarded: Tuple[Location, ...] = ()
    marked_forbidden: Optional[int] = None

    @property
    def changed(self) -> bool:
        return bool(
            self.discarded
            or self.cleared_weak_fields
            or self.pending_finalizer
            or self.marked_forbidden is not None
        )


def _restrict(
    sigma: ValueStore, theta: ObjectStore, discard: Set[Location]
) -> Tuple[ValueStore, ObjectStore]:
    s = {r: v for r, v in sigma.bindings.items() if ("ref", r) not in discard}
    drop_t = {i for kind, i in discard if kind == "tid"}
    drop_c = {i for kind, i in discard if kind == "cid"}
    tables = {i: o for i, o in theta.tables.items() if i not in drop_t}
    closures = {i: o for i, o in theta.closures.items() if i not in drop_c}
    return (
        ValueStore(s, sigma.next_id),
        ObjectStore(tables, closures, theta.next_tid, theta.next_cid),
    )


def _consistent_discard(
    proposal: Set[Location],
    sigma: ValueStore,
    theta: ObjectStore,
    edge_fn: Callable[[Location], List[Location]],
) -> Set[Location]:
    """Shrink a discard proposal until no kept location points into it."""
    discard = set(proposal)
    changed = True
    while changed:
        changed = False
        kept = [l for l in all_locations(sigma, theta) if l not in discard]
        for l in kept:
            for n in edge_fn(l):
                if n in discard:
                    discard.remove(n)
                    changed = True
    return discard


def _select(garbage: Set[Location], selector: Selector) -> Set[Location]:
    if selector is None:
        return set(garbage)
    ordered = sorted(garbage)
    return set(selector(ordered)) & garbage


def gc_simple(c: Configuration, selector: Selector = None,
              allow_finalizer: bool = True) -> GcOutcome:
    """One simple collection cycle: drop a (by default maximal) subset of
    the unreachable bindings."""
    reached = reach_set(c.term, c.sigma, c.theta)
    garbage = set(all_locations(c.sigma, c.theta)) - reached
    discard = _consistent_discard(
        _select(garbage, selector), c.sigma, c.theta,
        lambda l: _neighbors(l, c.sigma, c.theta),
    )
    kept_sigma, kept_theta = _restrict(c.sigma, c.theta, discard)
    return GcOutcome(kept_sigma, kept_theta, discarded=tuple(sorted(discard)))


def gc_fin(c: Configuration, selector: Selector = None,
           allow_finalizer: bool = True) -> GcOutcome:
    """Collection cycle aware of finalization marks.

    Marked tables are never discarded and everything they reach is kept
    alive for their finalizer.  Among unreachable marked tables the one
    with the highest priority is selected; its ``__gc`` metafield is the
    pending finalizer if it is a function (otherwise it is skipped
    silently), and either way the table's mark becomes forbidden.
    """
    reached = reach_set(c.term, c.sigma, c.theta)
    marked = marked_tables(c.theta)
    protected: Set[Location] = set()
    for tid in marked:
        protected |= reach_set_from([("tid", tid)], c.sigma, c.theta)
    keep_base = reached | protected
    garbage = set(all_locations(c.sigma, c.theta)) - keep_base
    discard = _consistent_discard(
        _select(garbage, selector), c.sigma, c.theta,
        lambda l: _neighbors(l, c.sigma, c.theta),
    )
    kept_sigma, kept_theta = _restrict(c.sigma, c.theta, discard)

    pending = None
    forbidden = None
    candidates = [tid for tid in marked if ("tid", tid) not in reached]
    if candidates and allow_finalizer:
        best = max(candidates, key=lambda tid: c.theta.table(tid).pos)
        v = index_metatable(best, "__gc", kept_theta)
        table = kept_theta.table(best)
        kept_theta = kept_theta.put_table(best, replace(table, pos=FORBIDDEN))
        forbidden = best
        if isinstance(v, Cid):
            pending = (v.n, best)
    return GcOutcome(
        kept_sigma, kept_theta, pending, [], tuple(sorted(discard)), forbidden
    )


def gc_fin_weak(c: Configuration, selector: Selector = None,
                allow_finalizer: bool = True) -> GcOutcome:
    """Full cycle: strong reachability, weak-field clearing, finalization.

    Weak fields whose collectible key (weak-keys side) or value
    (weak-values side) is not strongly reachable are cleared, except that
    a field whose key is still marked for finalization is retained until
    that finalizer ran.  A table sitting as a value of a weak table is not
    selected for finalization this cycle (its field gets cleared first).
    """
    strong = strong_reach_set(c.term, c.sigma, c.theta)
    marked = marked_tables(c.theta)

    keep: Set[Location] = set(strong)
    for tid in marked:
        keep |= reach_set_from([("tid", tid)], c.sigma, c.theta)
    # values of finalizer-retained ephemeron fields stay alive too
    while True:
        extra: Set[Location] = set()
        for kind, i in list(keep):
            if kind != "tid":
                continue
            if not weak_keys(weakness(i, c.theta)):
                continue
            for k, v in c.theta.table(i).fields:
                if isinstance(k, Tid) and is_marked(c.theta.table(k.n).pos):
                    vloc = _value_loc(v)
                    if vloc is not None and vloc not in keep:
                        extra |= reach_set_from([vloc], c.sigma, c.theta)
        extra -= keep
        if not extra:
            break
        keep |= extra

    garbage = set(all_locations(c.sigma, c.theta)) - keep

    # clearing: decided against the pre-collection stores
    cleared: List[Tuple[int, Value, Value]] = []
    cleared_index: Set[Tuple[int, int]] = set()
    for i in c.theta.table_ids():
        w = weakness(i, c.theta)
        if w == "strong":
            continue
        for idx, (k, v) in enumerate(c.theta.table(i).fields):
            kloc, vloc = _value_loc(k), _value_loc(v)
            eligible = (
                weak_keys(w) and kloc is not None and kloc not in strong
            ) or (
                weak_values(w) and vloc is not None and vloc not in strong
            )
            if not eligible:
                continue
            if weak_keys(w) and isinstance(k, Tid) and is_marked(c.theta.table(k.n).pos):
                continue  # retained until the key's finalizer ran
            cleared_index.add((i, idx))
            cleared.append((i, k, v))

    def edges_after_clear(l: Location) -> List[Location]:
        kind, i = l
        if kind == "tid":
            if c.theta.has_table(i):
                obj = c.theta.table(i)
                out: List[Location] = []
                for idx, (k, v) in enumerate(obj.fields):
                    if (i, idx) in cleared_index:
                        continue
                    out.extend(value_locations(k))
                    out.extend(value_locations(v))
                if obj.meta is not None:
                    out.append(("tid", obj.meta))
                return out
        return _neighbors(l, c.sigma, c.theta)

    discard = _consistent_discard(
        _select(garbage, selector), c.sigma, c.theta, edges_after_clear
    )
    kept_sigma, kept_theta = _restrict(c.sigma, c.theta, discard)

    # apply clearing to surviving tables (meta and pos untouched)
    actually_cleared: List[Tuple[int, Value, Value]] = []
    for i, k, v in cleared:
        if kept_theta.has_table(i):
            table = kept_theta.table(i)
            if table.has(k):
                kept_theta = kept_theta.put_table(i, table.without(k))
                actually_cleared.append((i, k, v))

    pending = None
    forbidden = None
    candidates = [tid for tid in marked if ("tid", tid) not in strong]
    if candidates and allow_finalizer:
        best = max(candidates, key=lambda tid: c.theta.table(tid).pos)
        if not_fin_val(best, c.theta):
            v = index_metatable(best, "__gc", kept_theta)
            table = kept_theta.table(best)
            kept_theta = kept_theta.put_table(best, replace(table, pos=FORBIDDEN))
            forbidden = best
            if isinstance(v, Cid):
                pending = (v.n, best)
    return GcOutcome(
        kept_sigma, kept_theta, pending, actually_cleared,
        tuple(sorted(discard)), forbidden,
    )


CYCLES = {"simple": gc_simple, "fin": gc_fin, "fin_weak": gc_fin_weak}


def run_cycle(c: Configuration, mode: str, selector: Selector = None,
              allow_finalizer: bool = True) -> GcOutcome:
    try:
        fn = CYCLES[mode]
    except KeyError:
        raise ValueError(f"unknown gc mode {mode!r}") from None
    return fn(c, selector, allow_finalizer)


def enumerate_gc_steps(
    c: Configuration,
    mode: str = "simple",
    granularity: str = "maximal",
    subset_cap: int = 12,
    allow_finalizer: bool = True,
) -> List[GcOutcome]:
    """All candidate GC steps at a configuration.

    ``maximal`` yields at most one outcome (the maximal cycle, if it makes
    progress).  ``subsets`` enumerates every valid discard subset of the
    garbage; weak-field clearing stays maximal within each outcome.  With
    more garbage locations than ``subset_cap`` it falls back to maximal.
    """
    maximal = run_cycle(c, mode, allow_finalizer=allow_finalizer)
    if granularity == "maximal" or not maximal.discarded:
        return [maximal] if maximal.changed else []
    garbage = sorted(maximal.discarded)
    if len(garbage) > subset_cap:
        return [maximal] if maximal.changed else []
    outcomes: List[GcOutcome] = []
    for n in range(len(garbage) + 1):
        for combo in itertools.combinations(garbage, n):
            chosen = set(combo)
            o = run_cycle(c, mode, selector=lambda g, ch=chosen: ch,
                          allow_finalizer=allow_finalizer)
            if set(o.discarded) == chosen and o.changed:
                outcomes.append(o)
    return outcomes
