"""The two stores and the objects they hold.

A running program is a configuration ``sigma : theta : term``:

* ``sigma`` (ValueStore) maps references to values — the imperative
  variables introduced by locals and parameter passing;
* ``theta`` (ObjectStore) maps table ids to table objects and closure ids
  to closure objects.

Tables are triples (fields, metatable, finalization mark).  The mark is
``UNSET`` until a metatable with a ``__gc`` field is attached, then an
integer priority recording chronological order, and ``FORBIDDEN`` once the
finalizer ran (or was skipped), so no object is ever finalized twice.

Allocation counters live inside the stores: ids are never reused within an
execution, even after collection, so traces stay comparable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, Optional, Tuple, Union

from .ast import (
    Location,
    Nil,
    Num,
    Stat,
    Str,
    Term,
    Value,
    term_locations,
    to_source,
    value_locations,
    _value_json,
)


class HeapError(Exception):
    """An operation violated a store invariant (interpreter-level bug)."""


class _MarkSentinel:
    __slots__ = ("_name",)

    def __init__(self, name: str):
        self._name = name

    def __repr__(self) -> str:
        return self._name


#: no finalizer set
UNSET = _MarkSentinel("unset")
#: finalization already happened (or was skipped); may never be re-marked
FORBIDDEN = _MarkSentinel("forbidden")

Mark = Union[_MarkSentinel, int]


def is_marked(mark: Mark) -> bool:
    """Marked for finalization: has a pending priority."""
    return isinstance(mark, int)


@dataclass(frozen=True)
class TableObject:
    fields: Tuple[Tuple[Value, Value], ...]  # insertion ordered, no nils
    meta: Optional[int] = None  # tid of the metatable
    pos: Mark = UNSET

    def get(self, key: Value) -> Value:
        for k, v in self.fields:
            if k == key:
                return v
        return Nil()

    def has(self, key: Value) -> bool:
        return any(k == key for k, _ in self.fields)

    def set(self, key: Value, value: Value) -> "TableObject":
        if isinstance(value, Nil):
            return replace(
                self, fields=tuple((k, v) for k, v in self.fields if k != key)
            )
        out = []
        found = False
        for k, v in self.fields:
            if k == key:
                out.append((k, value))
                found = True
            else:
                out.append((k, v))
        if not found:
            out.append((key, value))
        return replace(self, fields=tuple(out))

    def without(self, key: Value) -> "TableObject":
        return replace(
            self, fields=tuple((k, v) for k, v in self.fields if k != key)
        )

    def locations(self) -> Iterator[Location]:
        for k, v in self.fields:
            yield from value_locations(k)
            yield from value_locations(v)
        if self.meta is not None:
            yield ("tid", self.meta)


@dataclass(frozen=True)
class ClosureObject:
    params: Tuple[str, ...]
    body: Stat

    def locations(self) -> Iterator[Location]:
        yield from term_locations(self.body)

    @property
    def captured_refs(self) -> Tuple[int, ...]:
        """References the body closed over (its environment)."""
        return tuple(i for kind, i in term_locations(self.body) if kind == "ref")


HeapObject = Union[TableObject, ClosureObject]


@dataclass(frozen=True)
class ValueStore:
    bindings: Dict[int, Value] = field(default_factory=dict)
    next_id: int = 1

    def __contains__(self, r: int) -> bool:
        return r in self.bindings

    def lookup(self, r: int) -> Value:
        try:
            return self.bindings[r]
        except KeyError:
            raise HeapError(f"dangling value reference $r{r}") from None

    def bind(self, r: int, v: Value) -> "ValueStore":
        if r not in self.bindings:
            raise HeapError(f"update of unbound reference $r{r}")
        b = dict(self.bindings)
        b[r] = v
        return ValueStore(b, self.next_id)


@dataclass(frozen=True)
class ObjectStore:
    """Tables and closures; the two id spaces are disjoint."""

    tables: Dict[int, TableObject] = field(default_factory=dict)
    closures: Dict[int, ClosureObject] = field(default_factory=dict)
    next_tid: int = 1
    next_cid: int = 1

    def table(self, tid: int) -> TableObject:
        try:
            return self.tables[tid]
        except KeyError:
            raise HeapError(f"dangling table id #{tid}") from None

    def closure(self, cid: int) -> ClosureObject:
        try:
            return self.closures[cid]
        except KeyError:
            raise HeapError(f"dangling closure id #{cid}") from None

    def has_table(self, tid: int) -> bool:
        return tid in self.tables

    def has_closure(self, cid: int) -> bool:
        return cid in self.closures

    def put_table(self, tid: int, obj: TableObject) -> "ObjectStore":
        b = dict(self.tables)
        b[tid] = obj
        return ObjectStore(b, self.closures, self.next_tid, self.next_cid)

    def table_ids(self) -> Iterator[int]:
        yield from self.tables


@dataclass(frozen=True)
class Configuration:
    sigma: ValueStore
    theta: ObjectStore
    term: Term

    def with_term(self, term: Term) -> "Configuration":
        return Configuration(self.sigma, self.theta, term)


# ---------------------------------------------------------------------------
# Allocation / lookup operations
# ---------------------------------------------------------------------------


def alloc_value(sigma: ValueStore, v: Value) -> Tuple[ValueStore, int]:
    r = sigma.next_id
    b = dict(sigma.bindings)
    b[r] = v
    return ValueStore(b, r + 1), r


def check_key(key: Value) -> None:
    if isinstance(key, Nil):
        raise InvalidKey("table index is nil")
    if isinstance(key, Num) and math.isnan(key.x):
        raise InvalidKey("table index is NaN")


class InvalidKey(Exception):
    pass


def alloc_table(
    theta: ObjectStore, fields: Tuple[Tuple[Value, Value], ...]
) -> Tuple[ObjectStore, int]:
    """Allocate a fresh table: no metatable, finalization mark unset."""
    cleaned = []
    seen = []
    for k, v in fields:
        check_key(k)
        if isinstance(v, Nil):
            continue
        if k in seen:  # later constructor entries win, order of first wins
            cleaned = [(ck, (v if ck == k else cv)) for ck, cv in cleaned]
        else:
            seen.append(k)
            cleaned.append((k, v))
    tid = theta.next_tid
    b = dict(theta.tables)
    b[tid] = TableObject(tuple(cleaned), None, UNSET)
    return ObjectStore(b, theta.closures, tid + 1, theta.next_cid), tid


def alloc_closure(
    theta: ObjectStore, params: Tuple[str, ...], body: Stat
) -> Tuple[ObjectStore, int]:
    cid = theta.next_cid
    b = dict(theta.closures)
    b[cid] = ClosureObject(params, body)
    return ObjectStore(theta.tables, b, theta.next_tid, cid + 1), cid


def index_metatable(tid: int, key: str, theta: ObjectStore) -> Value:
    """Look up ``key`` in a table's metatable; nil when absent."""
    t = theta.table(tid)
    if t.meta is None:
        return Nil()
    return theta.table(t.meta).get(Str(key))


WEAKNESS = ("strong", "wk", "wv", "wkv")


def weakness(tid: int, theta: ObjectStore) -> str:
    """Derive a table's weakness from its metatable's ``__mode`` string."""
    mode = index_metatable(tid, "__mode", theta)
    if not isinstance(mode, Str):
        return "strong"
    k = "k" in mode.s
    v = "v" in mode.s
    if k and v:
        return "wkv"
    if k:
        return "wk"
    if v:
        return "wv"
    return "strong"


def weak_keys(w: str) -> bool:
    return w in ("wk", "wkv")


def weak_values(w: str) -> bool:
    return w in ("wv", "wkv")


# ---------------------------------------------------------------------------
# Well-formedness
# ---------------------------------------------------------------------------


def _bound(loc: Location, sigma: ValueStore, theta: ObjectStore) -> bool:
    kind, i = loc
    if kind == "ref":
        return i in sigma
    if kind == "tid":
        return theta.has_table(i)
    return theta.has_closure(i)


def validate(c: Configuration) -> None:
    """Check store well-formedness; raises HeapError on violation.

    Every location mentioned in the term or inside a stored object must be
    bound, table fields must contain no nils, metatable slots must point at
    tables, and pending finalization priorities must be pairwise distinct.
    """
    for loc in term_locations(c.term):
        if not _bound(loc, c.sigma, c.theta):
            raise HeapError(f"term mentions unbound location {loc}")
    for r, v in c.sigma.bindings.items():
        for loc in value_locations(v):
            if not _bound(loc, c.sigma, c.theta):
                raise HeapError(f"$r{r} holds unbound location {loc}")
    priorities = []
    for i, obj in c.theta.tables.items():
        for k, v in obj.fields:
            if isinstance(k, Nil) or isinstance(v, Nil):
                raise HeapError(f"table #{i} stores a nil key or value")
        for loc in obj.locations():
            if not _bound(loc, c.sigma, c.theta):
                raise HeapError(f"table #{i} holds unbound location {loc}")
        if obj.meta is not None and not c.theta.has_table(obj.meta):
            raise HeapError(f"table #{i} has a non-table metatable")
        if is_marked(obj.pos):
            priorities.append(obj.pos)
    for i, clo in c.theta.closures.items():
        for loc in clo.locations():
            if not _bound(loc, c.sigma, c.theta):
                raise HeapError(f"closure #{i} holds unbound location {loc}")
    if len(priorities) != len(set(priorities)):
        raise HeapError("finalization priorities are not pairwise distinct")


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------


def snapshot(c: Configuration) -> dict:
    """JSON-ready dump of both stores with stable ordering."""
    sigma = {f"r{r}": _value_json(v) for r, v in sorted(c.sigma.bindings.items())}
    theta = {}
    for i, obj in sorted(c.theta.tables.items()):
        theta[f"t{i}"] = {
            "fields": [[_value_json(k), _value_json(v)] for k, v in obj.fields],
            "meta": obj.meta,
            "pos": repr(obj.pos) if not isinstance(obj.pos, int) else obj.pos,
        }
    for i, clo in sorted(c.theta.closures.items()):
        theta[f"c{i}"] = {
            "params": list(clo.params),
            "body": to_source(clo.body),
            "captured": list(clo.captured_refs),
        }
    return {"sigma": sigma, "theta": theta, "term": to_source(c.term)}


def snapshot_json(c: Configuration) -> str:
    return json.dumps(snapshot(c), sort_keys=True)
