import json

import pytest

from luagc import ast as A
from luagc.ast import Cid, Nil, Num, Str, Tid
from luagc.heap import (
    UNSET,
    Configuration,
    HeapError,
    InvalidKey,
    ObjectStore,
    TableObject,
    ValueStore,
    alloc_closure,
    alloc_table,
    alloc_value,
    index_metatable,
    snapshot_json,
    validate,
    weakness,
)


def empty_config(term=None):
    return Configuration(ValueStore(), ObjectStore(), term or A.Empty())


class TestAllocValue:
    def test_first_allocation(self):
        sigma, r = alloc_value(ValueStore(), Num(5))
        assert sigma.bindings == {r: Num(5)}

    def test_freshness(self):
        sigma, r1 = alloc_value(ValueStore(), Num(1))
        sigma, r2 = alloc_value(sigma, Num(2))
        assert r1 != r2

    def test_no_reuse_after_removal(self):
        sigma, r1 = alloc_value(ValueStore(), Num(1))
        shrunk = ValueStore({}, sigma.next_id)
        _, r2 = alloc_value(shrunk, Num(2))
        assert r2 != r1

    def test_alloc_of_table_id_aliases(self):
        theta, tid = alloc_table(ObjectStore(), ())
        sigma, r1 = alloc_value(ValueStore(), Tid(tid))
        sigma, r2 = alloc_value(sigma, Tid(tid))
        # mutate through one alias, observe through the other
        theta = theta.put_table(tid, theta.table(tid).set(Num(1), Str("x")))
        seen_via_r2 = theta.table(sigma.lookup(r2).n).get(Num(1))
        assert seen_via_r2 == Str("x")


class TestAllocTable:
    def test_fresh_table_unset_mark_no_meta(self):
        theta, tid = alloc_table(ObjectStore(), ())
        t = theta.table(tid)
        assert t.meta is None and t.pos is UNSET and t.fields == ()

    def test_distinct_ids(self):
        theta, t1 = alloc_table(ObjectStore(), ())
        theta, t2 = alloc_table(theta, ())
        assert t1 != t2

    def test_table_and_closure_id_spaces_disjoint(self):
        theta, tid = alloc_table(ObjectStore(), ())
        theta, cid = alloc_closure(theta, (), A.Empty())
        assert theta.has_table(tid) and theta.has_closure(cid)

    def test_nested_reference_stays_well_formed(self):
        theta, t0 = alloc_table(ObjectStore(), ())
        theta, t1 = alloc_table(theta, ((Num(1), Tid(t0)),))
        cfg = Configuration(ValueStore(), theta, A.ExprStat(A.Const(Tid(t1))))
        validate(cfg)

    def test_nil_key_rejected(self):
        with pytest.raises(InvalidKey):
            alloc_table(ObjectStore(), ((Nil(), Num(1)),))

    def test_nan_key_rejected(self):
        with pytest.raises(InvalidKey):
            alloc_table(ObjectStore(), ((Num(float("nan")), Num(1)),))

    def test_nil_valued_fields_skipped(self):
        theta, tid = alloc_table(ObjectStore(), ((Num(1), Nil()),))
        assert theta.table(tid).fields == ()


class TestMetatableLookup:
    def build(self, meta_fields):
        theta, meta = alloc_table(ObjectStore(), tuple(meta_fields))
        theta, tid = alloc_table(theta, ())
        table = theta.table(tid)
        theta = theta.put_table(tid, TableObject(table.fields, meta, table.pos))
        return theta, tid

    def test_no_metatable(self):
        theta, tid = alloc_table(ObjectStore(), ())
        assert index_metatable(tid, "__gc", theta) == Nil()

    def test_gc_field(self):
        theta, cid = ObjectStore(), None
        theta, cid = alloc_closure(theta, (), A.Empty())
        theta, meta = alloc_table(theta, ((Str("__gc"), Cid(cid)),))
        theta, tid = alloc_table(theta, ())
        t = theta.table(tid)
        theta = theta.put_table(tid, TableObject(t.fields, meta, t.pos))
        assert index_metatable(tid, "__gc", theta) == Cid(cid)

    def test_mode_field(self):
        theta, tid = self.build([(Str("__mode"), Str("v"))])
        assert index_metatable(tid, "__mode", theta) == Str("v")


class TestWeakness:
    def tagged(self, mode):
        theta, meta = alloc_table(
            ObjectStore(),
            ((Str("__mode"), mode),) if mode is not None else (),
        )
        theta, tid = alloc_table(theta, ())
        t = theta.table(tid)
        theta = theta.put_table(tid, TableObject(t.fields, meta, t.pos))
        return weakness(tid, theta)

    def test_no_metatable_strong(self):
        theta, tid = alloc_table(ObjectStore(), ())
        assert weakness(tid, theta) == "strong"

    def test_mode_v(self):
        assert self.tagged(Str("v")) == "wv"

    def test_mode_k(self):
        assert self.tagged(Str("k")) == "wk"

    def test_mode_kv(self):
        assert self.tagged(Str("kv")) == "wkv"

    def test_non_string_mode_strong(self):
        assert self.tagged(Num(1)) == "strong"


class TestValidate:
    def test_dangling_term_location(self):
        cfg = Configuration(ValueStore(), ObjectStore(),
                            A.ExprStat(A.Const(Tid(9))))
        with pytest.raises(HeapError):
            validate(cfg)

    def test_dangling_field(self):
        theta, tid = alloc_table(ObjectStore(), ((Num(1), Tid(99)),))
        cfg = Configuration(ValueStore(), theta, A.ExprStat(A.Const(Tid(tid))))
        with pytest.raises(HeapError):
            validate(cfg)

    def test_duplicate_priorities(self):
        theta, t1 = alloc_table(ObjectStore(), ())
        theta, t2 = alloc_table(theta, ())
        theta = theta.put_table(t1, TableObject((), None, 1))
        theta = theta.put_table(t2, TableObject((), None, 1))
        cfg = Configuration(ValueStore(), theta, A.Empty())
        with pytest.raises(HeapError):
            validate(cfg)


class TestTableObject:
    def test_assigning_nil_deletes(self):
        t = TableObject(((Num(1), Str("a")),))
        assert t.set(Num(1), Nil()).fields == ()

    def test_insertion_order_preserved(self):
        t = TableObject(())
        t = t.set(Str("b"), Num(1))
        t = t.set(Str("a"), Num(2))
        t = t.set(Str("b"), Num(3))
        assert [k for k, _ in t.fields] == [Str("b"), Str("a")]

    def test_bool_and_number_keys_distinct(self):
        t = TableObject(())
        t = t.set(A.Bool(True), Str("bool"))
        t = t.set(Num(1), Str("one"))
        assert t.get(A.Bool(True)) == Str("bool")
        assert t.get(Num(1)) == Str("one")


def test_snapshot_roundtrips_as_json():
    theta, tid = alloc_table(ObjectStore(), ((Num(1), Str("x")),))
    sigma, r = alloc_value(ValueStore(), Tid(tid))
    cfg = Configuration(sigma, theta, A.ExprStat(A.Ref(r)))
    dumped = snapshot_json(cfg)
    parsed = json.loads(dumped)
    assert parsed["sigma"]["r1"] == {"t": "tid", "v": tid}
    assert snapshot_json(cfg) == dumped


def test_final_heap_snapshot_matches_golden():
    from pathlib import Path

    from luagc.heap import snapshot
    from luagc.interp import Finished, load_program, step

    from conftest import corpus_text

    cfg = load_program(corpus_text("deterministic/table_fields.lua"))
    while True:
        r = step(cfg)
        if isinstance(r, Finished):
            break
        cfg = r.config
    dumped = json.dumps(snapshot(cfg), indent=1, sort_keys=True) + "\n"
    golden = Path(__file__).parent / "golden" / "table_fields_final_heap.json"
    assert dumped == golden.read_text()
