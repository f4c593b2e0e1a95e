import pytest
from hypothesis import given, settings, strategies as st

from luagc import ast as A
from luagc.ast import Bool, Nil, Num, Str
from luagc.checker import check_program
from luagc.dataflow import build_cfg
from luagc.desugar import desugar
from luagc.inference import InferenceFailure, infer, prepare
from luagc.parser import parse
from luagc.statictypes import (
    BOOL_T,
    DYN,
    FuncType,
    NUM_T,
    PrimType,
    STR_T,
    TableType,
    join,
    singleton_of,
    subtype,
)

from conftest import corpus_text, safe_programs


def analyzed(text):
    renamed, points = prepare(desugar(parse(text)))
    return infer(renamed, points), renamed, points


# ---------------------------------------------------------------------------
# Subtyping
# ---------------------------------------------------------------------------

types_leaf = st.sampled_from([
    NUM_T, STR_T, BOOL_T, PrimType("nil"), DYN,
    singleton_of(Num(5)), singleton_of(Num(1)), singleton_of(Str("v")),
    singleton_of(Bool(True)), singleton_of(Nil()),
])


def types_of_depth(depth):
    if depth == 0:
        return types_leaf
    sub = types_of_depth(depth - 1)
    tables = st.builds(
        lambda fields, weak: TableType(
            {Num(float(i + 1)): t for i, t in enumerate(fields)}, weak
        ),
        st.lists(sub, max_size=3),
        st.sampled_from(["strong", "wk", "wv", "wkv"]),
    )
    funcs = st.builds(
        lambda dom, res: FuncType(tuple(dom), res),
        st.lists(sub, max_size=2),
        sub,
    )
    return st.one_of(sub, tables, funcs)


any_type = types_of_depth(4)


class TestSubtype:
    def test_singleton_under_primitive(self):
        assert subtype(singleton_of(Num(5)), NUM_T)
        assert not subtype(NUM_T, singleton_of(Num(5)))

    def test_dyn_is_top(self):
        assert subtype(NUM_T, DYN)
        assert subtype(TableType({}), DYN)
        assert not subtype(DYN, NUM_T)

    def test_width_depth_permutation(self):
        wide = TableType({Num(1.0): singleton_of(Num(5)), Num(2.0): STR_T})
        narrow = TableType({Num(1.0): NUM_T})
        assert subtype(wide, narrow)
        assert not subtype(narrow, wide)

    def test_weakness_ignored(self):
        a = TableType({Num(1.0): NUM_T}, "strong")
        b = TableType({Num(1.0): NUM_T}, "wv")
        assert subtype(a, b) and subtype(b, a)

    def test_function_reflexivity_only(self):
        f = FuncType((NUM_T,), NUM_T)
        g = FuncType((singleton_of(Num(1)),), NUM_T)
        assert subtype(f, f)
        assert not subtype(f, g) and not subtype(g, f)

    def test_recursive_table(self):
        t = TableType({})
        t.fields[Str("self")] = t
        assert subtype(t, t)

    @settings(max_examples=300, deadline=None)
    @given(any_type)
    def test_reflexive(self, t):
        assert subtype(t, t)

    @settings(max_examples=300, deadline=None)
    @given(any_type, any_type, any_type)
    def test_transitive(self, a, b, c):
        if subtype(a, b) and subtype(b, c):
            assert subtype(a, c)

    @settings(max_examples=200, deadline=None)
    @given(any_type, any_type)
    def test_join_is_upper_bound(self, a, b):
        j = join(a, b)
        assert subtype(a, j) and subtype(b, j)


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


class TestInference:
    def test_literal_gives_singleton(self):
        typed, renamed, _ = analyzed("local x = 1 in ; end")
        (decl,) = typed.decls.values()
        assert decl["x"] == singleton_of(Num(1))

    def test_parameter_widened_by_arithmetic(self):
        typed, _, _ = analyzed(
            'local t1 = {}\n'
            't1["attr1"] = 1\n'
            't1["method"] = function(x) return x + t1["attr1"] end\n'
            't1["attr2"] = (t1["method"] (t1["attr1"]))\n'
        )
        (fn,) = typed.functions.values()
        assert fn.domain == (NUM_T,)
        assert fn.result == NUM_T

    def test_identity_function_domain_compatible_with_call(self):
        typed, _, _ = analyzed(
            "local f = function(x) return x end in local y = f(1) in ; end end"
        )
        (fn,) = typed.functions.values()
        assert subtype(singleton_of(Num(1)), fn.domain[0])
        assert not isinstance(fn.domain[0], type(DYN))

    def test_rerun_is_stable(self):
        text = corpus_text("weak/field_tracking.lua")
        renamed, points = prepare(desugar(parse(text)))
        a = infer(renamed, points).describe()
        renamed2, points2 = prepare(desugar(parse(text)))
        b = infer(renamed2, points2).describe()
        assert a == b

    def test_unsatisfiable_constraints_fail(self):
        with pytest.raises(InferenceFailure):
            analyzed('local f = function(x) return x + 1 end in '
                     'local y = f("nope") in ; end end')

    def test_table_self_reference_through_method(self):
        typed, _, _ = analyzed(corpus_text("weak/field_tracking.lua"))
        (decl,) = [d for d in typed.decls.values() if "t1" in d]
        t1 = decl["t1"]
        assert isinstance(t1, TableType)
        method = t1.fields[Str("method")]
        assert isinstance(method, FuncType)


# ---------------------------------------------------------------------------
# Reaching definitions
# ---------------------------------------------------------------------------


def defs_by_original_name(defs, point):
    return {name.split("#")[0] for name, _ in defs.at(point)}


class TestReachingDefs:
    def prep(self, text):
        renamed, points = prepare(desugar(parse(text)))
        return renamed, points, build_cfg(renamed, points)

    def test_straight_line(self):
        renamed, points, defs = self.prep(
            "local a = 1 in local b = 2 in print(a) end end"
        )
        locals_ = [n for n in A.walk(renamed) if isinstance(n, A.Local)]
        inner = locals_[1]
        assert defs_by_original_name(defs, points.of(inner)) == {"a"}
        call = [n for n in A.walk(renamed) if isinstance(n, A.ExprStat)][0]
        assert defs_by_original_name(defs, points.of(call)) == {"a", "b"}

    def test_loop_definition_reaches_condition(self):
        renamed, points, defs = self.prep(corpus_text(
            "weak/nondet_weak_loop.lua"
        ))
        loop = [n for n in A.walk(renamed) if isinstance(n, A.While)][0]
        names = defs_by_original_name(defs, points.of(loop))
        assert "t" in names and "i" in names

    def test_reassignment_kills_previous_definition(self):
        renamed, points, defs = self.prep(
            "local x = 1 in x = 2 print(x) end"
        )
        call = [n for n in A.walk(renamed) if isinstance(n, A.ExprStat)][0]
        at = [d for d in defs.at(points.of(call))
              if d[0].split("#")[0] == "x"]
        assert len(at) == 1  # only the assignment's definition survives
        assigns = [n for n in A.walk(renamed) if isinstance(n, A.Assign)]
        assert at[0][1] == points.of(assigns[0])

    def test_branches_merge_definitions(self):
        renamed, points, defs = self.prep(
            "local x = 1 in if x > 0 then x = 2 else x = 3 end print(x) end"
        )
        call = [n for n in A.walk(renamed) if isinstance(n, A.ExprStat)][0]
        xdefs = [d for d in defs.at(points.of(call))
                 if d[0].split("#")[0] == "x"]
        assert len(xdefs) == 2


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


class TestVerdicts:
    def test_weak_loop_unsafe(self):
        r = check_program(corpus_text("weak/nondet_weak_loop.lua"))
        assert r.verdict == "UNSAFE"
        (d,) = r.unsafe
        assert d.access == "t[1]"
        assert d.table == "t"
        assert d.witness  # carries the reaching-definitions witness

    def test_weak_cache_exact_lines(self):
        r = check_program(corpus_text("weak/weak_cache.lua"))
        assert r.verdict == "UNSAFE"
        assert [(d.line, d.access) for d in r.unsafe] == [
            (9, "cache1[2]"),
            (10, "cache1[3]"),
        ]

    def test_field_tracking_only_method_flagged(self):
        r = check_program(corpus_text("weak/field_tracking.lua"))
        assert r.verdict == "UNSAFE"
        (d,) = r.unsafe
        assert d.line == 6 and d.access == 't1["method"]'

    @pytest.mark.parametrize("path", safe_programs(), ids=lambda p: p.stem)
    def test_safe_corpus(self, path):
        r = check_program(path.read_text(), str(path))
        assert r.verdict == "SAFE", (r.reason, [d.message for d in r.diagnostics])

    def test_no_weak_tables_no_unsafe(self):
        r = check_program("local t = {} t[1] = {} print(t[1])")
        assert r.verdict == "SAFE"

    def test_retag_to_strong_clears_weakness(self):
        r = check_program(
            'local t = {[1] = {}}\n'
            'setmetatable(t, {__mode = "v"})\n'
            'setmetatable(t, {})\n'
            'local x = t[1]\n'
        )
        assert r.verdict == "SAFE"

    def test_retag_to_weak_after_strong(self):
        r = check_program(
            'local t = {[1] = {}}\n'
            'local x = t[1]\n'
            'setmetatable(t, {__mode = "v"})\n'
            'local y = t[1]\n'
        )
        # x still holds the value strongly at line 4
        assert r.verdict == "SAFE"

    def test_unknown_on_multi_local(self):
        r = check_program("local a, b = 1, 2 print(a)")
        assert r.verdict == "UNKNOWN"

    def test_unknown_on_multi_return(self):
        r = check_program("local f = function() return 1, 2 end f()")
        assert r.verdict == "UNKNOWN"

    def test_unknown_on_collectible_key(self):
        r = check_program("local k = {} local t = {[k] = 1} print(t[k])")
        assert r.verdict == "UNKNOWN"

    def test_unknown_on_non_literal_index(self):
        r = check_program(
            "local t = {[1] = 2} local i = 1 i = i + 1 print(t[i])"
        )
        assert r.verdict == "UNKNOWN"

    def test_dyn_mode_warns_conservatively(self):
        r = check_program(
            'local t = {[1] = 5}\n'
            'local m = getmetatable({})\n'
            'setmetatable(t, m)\n'
            'print(t[1])\n'
        )
        assert any(d.reason == "weak-table-nondeterminism"
                   for d in r.diagnostics)

    def test_mtch_failure_reports_type_error(self):
        r = check_program("local t = {[1] = 2} print(t[2])")
        assert any(d.reason == "type-error" for d in r.diagnostics)

    def test_ephemeron_literal_keys_never_unsafe(self):
        r = check_program(corpus_text("safe/ephemeron_literal_keys.lua"))
        assert r.verdict == "SAFE"

    def test_syntax_error_propagates(self):
        from luagc.parser import LuaSyntaxError

        with pytest.raises(LuaSyntaxError):
            check_program("local = 1")


class TestRobustness:
    def test_analyzer_total_on_corpus(self):
        from conftest import CORPUS

        for sub in ("deterministic", "weak", "finalizers", "safe"):
            for path in sorted((CORPUS / sub).glob("*.lua")):
                r = check_program(path.read_text(), str(path))
                assert r.verdict in ("SAFE", "UNSAFE", "UNKNOWN"), path

    def test_weakness_free_programs_never_unsafe(self):
        from conftest import deterministic_programs

        for path in deterministic_programs():
            text = path.read_text()
            if "__mode" in text:
                continue
            r = check_program(text, str(path))
            assert r.verdict in ("SAFE", "UNKNOWN"), (path, r.verdict)
