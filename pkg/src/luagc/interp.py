"""Small-step reduction for the Lua subset.

Execution is classic reduction semantics: decompose the program into an
evaluation context and a redex, reduce the redex, plug the result back.
``decompose`` returns the unique context/redex split (or a terminal
classification), and ``step`` performs exactly one reduction.

Control effects (errors, break, return, pcall) unwind the context in a
single step by searching the frame stack for the matching delimiter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple, Union

from . import ast as A
from .ast import (
    And, Assign, BinOp, Break, Call, CallFrame, Cid, Const, Empty, ErrTerm,
    ExprStat, FinStat, FinWrap, Function, Globals, If, Index, Local,
    LoopFrame, Name, Neg, Nil, Not, Num, Or, ProtectedFrame, Ref, Return,
    Seq, Stat, Str, TableCtor, Term, Tid, Value, ValueTuple, While,
    format_number, truthy, type_name,
)
from .heap import (
    Configuration, InvalidKey, ObjectStore, ValueStore, alloc_closure,
    alloc_table, alloc_value, check_key, index_metatable,
)
from .gc import set_fin
from .parser import parse
from .desugar import desugar


class StuckTerm(Exception):
    """Decomposition failed: an interpreter invariant was broken."""


class LuaError(Exception):
    """A runtime error carrying its Lua-level error value."""

    def __init__(self, value: Value):
        super().__init__(repr(value))
        self.value = value

    @classmethod
    def msg(cls, text: str) -> "LuaError":
        return cls(Str(text))


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    node: Term
    slot: str
    idx: int = 0


@dataclass(frozen=True)
class Redex:
    frames: Tuple[Frame, ...]
    term: Term
    rule: str


@dataclass(frozen=True)
class Finished:
    kind: str  # "return" | "error" | "empty"
    values: Tuple[Value, ...] = ()
    error_value: Value = field(default_factory=Nil)


def _is_value(e: Term) -> bool:
    return isinstance(e, Const)


def _el_done(e: Term, last: bool) -> bool:
    """Is this expression-list element fully evaluated?

    A trailing value tuple stays splicable; anywhere else it must still be
    truncated (and is itself the redex).
    """
    if isinstance(e, Const):
        return True
    return last and isinstance(e, ValueTuple)


def flatten_el(exprs: Tuple[A.Expr, ...]) -> List[Value]:
    """Expression list -> value list; a trailing tuple splices."""
    vals: List[Value] = []
    for i, e in enumerate(exprs):
        if isinstance(e, Const):
            vals.append(e.value)
        elif isinstance(e, ValueTuple) and i == len(exprs) - 1:
            vals.extend(e.values)
        else:  # pragma: no cover - guarded by decompose
            raise StuckTerm(f"unevaluated expression list element {e!r}")
    return vals


def adjust(vals: List[Value], n: int) -> List[Value]:
    out = list(vals[:n])
    while len(out) < n:
        out.append(Nil())
    return out


def decompose(term: Term) -> Union[Redex, Finished]:
    """Unique context/redex split, or the terminal classification."""
    frames: List[Frame] = []
    t = term
    while True:
        res = _inspect(t, frames)
        if isinstance(res, (Redex, Finished)):
            return res
        slot, idx, child = res
        frames.append(Frame(t, slot, idx))
        t = child


def _el_descend(node, slot: str, exprs: Tuple[A.Expr, ...]):
    for i, e in enumerate(exprs):
        if not _el_done(e, i == len(exprs) - 1):
            if isinstance(e, ValueTuple):
                return None  # tuple in non-final slot: redex at the tuple
            return (slot, i, e)
    return "done"


def _inspect(t: Term, frames: List[Frame]):
    """One dispatch step: redex here, terminal here, or descend."""
    # ---- statements -----------------------------------------------------
    if isinstance(t, Empty):
        if not frames:
            return Finished("empty")
        raise StuckTerm("empty statement in context position")
    if isinstance(t, ErrTerm):
        if not frames:
            return Finished("error", error_value=t.value)
        raise StuckTerm("error object in context position")
    if isinstance(t, Seq):
        if isinstance(t.first, Empty):
            return Redex(tuple(frames), t, "seq")
        return ("first", 0, t.first)
    if isinstance(t, Local):
        d = _el_descend(t, "exprs", t.exprs)
        if d == "done":
            return Redex(tuple(frames), t, "local")
        if d is None:
            i = _tuple_slot(t.exprs)
            return ("exprs", i, t.exprs[i])
        return d
    if isinstance(t, Assign):
        for i, x in enumerate(t.targets):
            if isinstance(x, Ref):
                continue
            if isinstance(x, Index):
                if not _is_value(x.obj):
                    return ("target_obj", i, x.obj)
                if not _is_value(x.key):
                    return ("target_key", i, x.key)
                continue
            raise StuckTerm(f"unresolved assignment target {x!r}")
        d = _el_descend(t, "exprs", t.exprs)
        if d == "done":
            return Redex(tuple(frames), t, "assign")
        if d is None:
            i = _tuple_slot(t.exprs)
            return ("exprs", i, t.exprs[i])
        return d
    if isinstance(t, ExprStat):
        if _is_value(t.expr) or isinstance(t.expr, ValueTuple):
            return Redex(tuple(frames), t, "discard")
        return ("expr", 0, t.expr)
    if isinstance(t, If):
        if _is_value(t.cond):
            return Redex(tuple(frames), t, "if")
        return ("cond", 0, t.cond)
    if isinstance(t, While):
        return Redex(tuple(frames), t, "loop-enter")
    if isinstance(t, LoopFrame):
        if isinstance(t.inner, While):
            return Redex(tuple(frames), t, "loop-restart")
        if isinstance(t.inner, Empty):
            return Redex(tuple(frames), t, "loop-exit")
        return ("inner", 0, t.inner)
    if isinstance(t, Break):
        return Redex(tuple(frames), t, "break")
    if isinstance(t, Return):
        d = _el_descend(t, "exprs", t.exprs)
        if d == "done":
            if any(isinstance(f.node, CallFrame) for f in frames):
                return Redex(tuple(frames), t, "return")
            return Finished("return", values=tuple(flatten_el(t.exprs)))
        if d is None:
            i = _tuple_slot(t.exprs)
            return ("exprs", i, t.exprs[i])
        return d
    if isinstance(t, FinStat):
        if isinstance(t.inner, Empty):
            return Redex(tuple(frames), t, "fin-done")
        return ("inner", 0, t.inner)

    # ---- expressions ----------------------------------------------------
    if isinstance(t, Const):
        raise StuckTerm("a bare value is not a program")
    if isinstance(t, ValueTuple):
        return Redex(tuple(frames), t, "truncate")
    if isinstance(t, Ref):
        return Redex(tuple(frames), t, "deref")
    if isinstance(t, (Name, Globals)):
        raise StuckTerm(f"unresolved name {A.to_source(t)}")
    if isinstance(t, Index):
        if not _is_value(t.obj):
            return ("obj", 0, t.obj)
        if not _is_value(t.key):
            return ("key", 0, t.key)
        return Redex(tuple(frames), t, "index")
    if isinstance(t, Call):
        if not _is_value(t.fn):
            return ("fn", 0, t.fn)
        d = _el_descend(t, "args", t.args)
        if d == "done":
            return Redex(tuple(frames), t, "call")
        if d is None:
            i = _tuple_slot(t.args)
            return ("args", i, t.args[i])
        return d
    if isinstance(t, Function):
        return Redex(tuple(frames), t, "closure")
    if isinstance(t, TableCtor):
        for i, (k, v) in enumerate(t.fields):
            if k is not None and not _is_value(k):
                return ("field_key", i, k)
            if not _is_value(v):
                return ("field_value", i, v)
        return Redex(tuple(frames), t, "table")
    if isinstance(t, BinOp):
        if not _is_value(t.lhs):
            return ("lhs", 0, t.lhs)
        if not _is_value(t.rhs):
            return ("rhs", 0, t.rhs)
        return Redex(tuple(frames), t, "binop")
    if isinstance(t, (And, Or)):
        if not _is_value(t.lhs):
            return ("lhs", 0, t.lhs)
        return Redex(tuple(frames), t, "shortcut")
    if isinstance(t, (Not, Neg)):
        if not _is_value(t.operand):
            return ("operand", 0, t.operand)
        return Redex(tuple(frames), t, "unop")
    if isinstance(t, CallFrame):
        if isinstance(t.body, Empty):
            return Redex(tuple(frames), t, "call-finish")
        return ("body", 0, t.body)
    if isinstance(t, ProtectedFrame):
        if _is_value(t.inner) or isinstance(t.inner, ValueTuple):
            return Redex(tuple(frames), t, "pcall-ok")
        return ("inner", 0, t.inner)
    if isinstance(t, FinWrap):
        if _is_value(t.inner) or isinstance(t.inner, ValueTuple):
            return Redex(tuple(frames), t, "fin-done")
        return ("inner", 0, t.inner)
    raise StuckTerm(f"cannot decompose {t!r}")  # pragma: no cover


def _tuple_slot(exprs: Tuple[A.Expr, ...]) -> int:
    for i, e in enumerate(exprs):
        if isinstance(e, ValueTuple) and i != len(exprs) - 1:
            return i
    raise StuckTerm("no tuple slot")  # pragma: no cover


# ---------------------------------------------------------------------------
# Plugging
# ---------------------------------------------------------------------------


def _replace_child(node: Term, slot: str, idx: int, child: Term) -> Term:
    if isinstance(node, Seq) and slot == "first":
        return replace(node, first=child)
    if isinstance(node, (Local, Assign, Return, Call)) and slot in ("exprs", "args"):
        seq = node.exprs if slot == "exprs" else node.args
        new = tuple(child if i == idx else e for i, e in enumerate(seq))
        return replace(node, **{slot: new})
    if isinstance(node, Assign) and slot in ("target_obj", "target_key"):
        tgt = node.targets[idx]
        assert isinstance(tgt, Index)
        tgt = replace(tgt, obj=child) if slot == "target_obj" else replace(tgt, key=child)
        targets = tuple(tgt if i == idx else x for i, x in enumerate(node.targets))
        return replace(node, targets=targets)
    if isinstance(node, ExprStat) and slot == "expr":
        return replace(node, expr=child)
    if isinstance(node, (If, While)) and slot == "cond":
        return replace(node, cond=child)
    if isinstance(node, (LoopFrame, FinStat, ProtectedFrame, FinWrap)) and slot == "inner":
        return replace(node, inner=child)
    if isinstance(node, Index) and slot in ("obj", "key"):
        return replace(node, **{slot: child})
    if isinstance(node, Call) and slot == "fn":
        return replace(node, fn=child)
    if isinstance(node, TableCtor) and slot in ("field_key", "field_value"):
        k, v = node.fields[idx]
        pair = (child, v) if slot == "field_key" else (k, child)
        fields = tuple(pair if i == idx else f for i, f in enumerate(node.fields))
        return replace(node, fields=fields)
    if isinstance(node, (BinOp, And, Or)) and slot in ("lhs", "rhs"):
        return replace(node, **{slot: child})
    if isinstance(node, (Not, Neg)) and slot == "operand":
        return replace(node, operand=child)
    if isinstance(node, CallFrame) and slot == "body":
        return replace(node, body=child)
    raise StuckTerm(f"cannot plug {slot} of {type(node).__name__}")


def plug(frames: Tuple[Frame, ...], t: Term) -> Term:
    for f in reversed(frames):
        t = _replace_child(f.node, f.slot, f.idx, t)
    return t


# ---------------------------------------------------------------------------
# One reduction step
# ---------------------------------------------------------------------------


@dataclass
class StepResult:
    config: Configuration
    rule: str
    output: List[str] = field(default_factory=list)
    gc_request: bool = False
    redex_src: str = ""


BUILTINS = (
    "print", "error", "pcall", "setmetatable", "getmetatable",
    "tostring", "collectgarbage",
)


def render(v: Value) -> str:
    """print-style rendering; table/closure identities are canonical ids."""
    if isinstance(v, Str):
        return v.s
    if isinstance(v, Num):
        return format_number(v.x)
    return repr(v)


def step(config: Configuration) -> Union[StepResult, Finished]:
    """Apply exactly one reduction to a well-formed configuration."""
    d = decompose(config.term)
    if isinstance(d, Finished):
        return d
    sigma, theta = config.sigma, config.theta
    t = d.term
    out: List[str] = []

    def unwind_error(v: Value) -> StepResult:
        for i in range(len(d.frames) - 1, -1, -1):
            if isinstance(d.frames[i].node, ProtectedFrame):
                term = plug(d.frames[:i], ValueTuple((A.FALSE, v)))
                cfg = Configuration(sigma, theta, term)
                return StepResult(cfg, "raise", out, False, A.to_source(t))
        cfg = Configuration(sigma, theta, ErrTerm(v))
        return StepResult(cfg, "raise", out, False, A.to_source(t))

    try:
        return _apply(d, config, out)
    except LuaError as e:
        return unwind_error(e.value)


def _apply(d: Redex, config: Configuration, out: List[str]):
    t = d.term
    rule = d.rule
    sigma, theta = config.sigma, config.theta

    def done_with(new_term, new_sigma=None, new_theta=None, rule_name=None,
                  gc_request=False):
        nonlocal sigma, theta
        s = new_sigma if new_sigma is not None else sigma
        th = new_theta if new_theta is not None else theta
        cfg = Configuration(s, th, plug(d.frames, new_term))
        return StepResult(cfg, rule_name or rule, out, gc_request,
                          A.to_source(t))

    # ---- statements -----------------------------------------------------
    if rule == "seq":
        assert isinstance(t, Seq)
        return done_with(t.rest)
    if rule == "local":
        assert isinstance(t, Local)
        vals = adjust(flatten_el(t.exprs), len(t.names))
        mapping = {}
        for name, v in zip(t.names, vals):
            sigma, r = alloc_value(sigma, v)
            mapping[name] = r
        return done_with(A.subst(t.body, mapping), new_sigma=sigma)
    if rule == "assign":
        assert isinstance(t, Assign)
        vals = adjust(flatten_el(t.exprs), len(t.targets))
        for target, v in zip(t.targets, vals):
            if isinstance(target, Ref):
                sigma = sigma.bind(target.r, v)
            else:
                assert isinstance(target, Index)
                obj = target.obj.value  # type: ignore[union-attr]
                key = target.key.value  # type: ignore[union-attr]
                theta = _table_write(theta, obj, key, v)
        return done_with(Empty(), new_sigma=sigma, new_theta=theta)
    if rule == "discard":
        return done_with(Empty())
    if rule == "if":
        assert isinstance(t, If)
        cond = t.cond.value  # type: ignore[union-attr]
        return done_with(
            t.then_body if truthy(cond) else t.else_body,
            rule_name="if-true" if truthy(cond) else "if-false",
        )
    if rule == "loop-enter":
        assert isinstance(t, While)
        return done_with(LoopFrame(t, pos=t.pos))
    if rule == "loop-restart":
        assert isinstance(t, LoopFrame) and isinstance(t.inner, While)
        w = t.inner
        unrolled = If(w.cond, Seq(w.body, w, pos=w.pos), Empty(), pos=w.pos)
        return done_with(LoopFrame(unrolled, pos=t.pos))
    if rule == "loop-exit":
        return done_with(Empty())
    if rule == "break":
        for i in range(len(d.frames) - 1, -1, -1):
            if isinstance(d.frames[i].node, LoopFrame):
                term = plug(d.frames[:i], Empty())
                cfg = Configuration(sigma, theta, term)
                return StepResult(cfg, "break", out, False, "break")
        raise StuckTerm("break outside any loop")
    if rule == "return":
        assert isinstance(t, Return)
        vals = tuple(flatten_el(t.exprs))
        for i in range(len(d.frames) - 1, -1, -1):
            if isinstance(d.frames[i].node, CallFrame):
                term = plug(d.frames[:i], ValueTuple(vals))
                cfg = Configuration(sigma, theta, term)
                return StepResult(cfg, "return", out, False, A.to_source(t))
        raise StuckTerm("return-unwind without a call frame")
    if rule == "fin-done":
        if isinstance(t, FinStat):
            return done_with(Empty())
        assert isinstance(t, FinWrap)
        return done_with(t.inner)

    # ---- expressions ----------------------------------------------------
    if rule == "deref":
        assert isinstance(t, Ref)
        return done_with(Const(sigma.lookup(t.r)))
    if rule == "truncate":
        assert isinstance(t, ValueTuple)
        v = t.values[0] if t.values else Nil()
        return done_with(Const(v))
    if rule == "index":
        assert isinstance(t, Index)
        obj = t.obj.value  # type: ignore[union-attr]
        key = t.key.value  # type: ignore[union-attr]
        new_term, rname = _index_read(theta, obj, key, t.pos)
        return done_with(new_term, rule_name=rname)
    if rule == "call":
        assert isinstance(t, Call)
        fn = t.fn.value  # type: ignore[union-attr]
        args = flatten_el(t.args)
        if isinstance(fn, Cid):
            clo = theta.closure(fn.n)
            vals = adjust(args, len(clo.params))
            mapping = {}
            for name, v in zip(clo.params, vals):
                sigma, r = alloc_value(sigma, v)
                mapping[name] = r
            body = A.subst(clo.body, mapping)
            return done_with(CallFrame(body, pos=t.pos), new_sigma=sigma)
        if isinstance(fn, A.Builtin):
            return _call_builtin(fn.name, args, t, d, config, done_with, out)
        raise LuaError.msg(f"attempt to call a {type_name(fn)} value")
    if rule == "closure":
        assert isinstance(t, Function)
        theta2, cid = alloc_closure(theta, t.params, t.body)
        return done_with(Const(Cid(cid)), new_theta=theta2)
    if rule == "table":
        assert isinstance(t, TableCtor)
        pairs = []
        for k, v in t.fields:
            assert k is not None
            pairs.append((k.value, v.value))  # type: ignore[union-attr]
        try:
            theta2, tid = alloc_table(theta, tuple(pairs))
        except InvalidKey as e:
            raise LuaError.msg(str(e)) from None
        return done_with(Const(Tid(tid)), new_theta=theta2)
    if rule == "binop":
        assert isinstance(t, BinOp)
        lhs = t.lhs.value  # type: ignore[union-attr]
        rhs = t.rhs.value  # type: ignore[union-attr]
        return done_with(Const(_binop(t.op, lhs, rhs)))
    if rule == "shortcut":
        lhs = t.lhs.value  # type: ignore[union-attr]
        if isinstance(t, And):
            return done_with(t.rhs if truthy(lhs) else Const(lhs), rule_name="and")
        assert isinstance(t, Or)
        return done_with(Const(lhs) if truthy(lhs) else t.rhs, rule_name="or")
    if rule == "unop":
        v = t.operand.value  # type: ignore[union-attr]
        if isinstance(t, Not):
            return done_with(Const(A.Bool(not truthy(v))), rule_name="not")
        if not isinstance(v, Num):
            raise LuaError.msg(
                f"attempt to perform arithmetic on a {type_name(v)} value"
            )
        return done_with(Const(Num(-v.x)), rule_name="neg")
    if rule == "call-finish":
        return done_with(ValueTuple(()))
    if rule == "pcall-ok":
        assert isinstance(t, ProtectedFrame)
        if isinstance(t.inner, Const):
            vals: Tuple[Value, ...] = (t.inner.value,)
        else:
            assert isinstance(t.inner, ValueTuple)
            vals = t.inner.values
        return done_with(ValueTuple((A.TRUE,) + vals))
    raise StuckTerm(f"no rule for {rule}")  # pragma: no cover


def _table_write(theta: ObjectStore, obj: Value, key: Value, v: Value) -> ObjectStore:
    if not isinstance(obj, Tid):
        raise LuaError.msg(f"attempt to index a {type_name(obj)} value")
    try:
        check_key(key)
    except InvalidKey as e:
        raise LuaError.msg(str(e)) from None
    table = theta.table(obj.n)
    return theta.put_table(obj.n, table.set(key, v))


def _index_read(theta: ObjectStore, obj: Value, key: Value, pos):
    if not isinstance(obj, Tid):
        raise LuaError.msg(f"attempt to index a {type_name(obj)} value")
    table = theta.table(obj.n)
    if table.has(key):
        return Const(table.get(key)), None
    handler = index_metatable(obj.n, "__index", theta)
    if isinstance(handler, Nil):
        return Const(Nil()), None
    if isinstance(handler, Tid):
        # repeat the access on the handler table
        return Index(Const(handler), Const(key), pos=pos), "index-meta"
    raise LuaError.msg("'__index' handler is not a table")


def _binop(op: str, a: Value, b: Value) -> Value:
    if op == "==":
        return A.Bool(a == b)
    if op == "~=":
        return A.Bool(a != b)
    if op in ("<", "<=", ">", ">="):
        if isinstance(a, Num) and isinstance(b, Num):
            x, y = a.x, b.x
        elif isinstance(a, Str) and isinstance(b, Str):
            x, y = a.s, b.s  # type: ignore[assignment]
        else:
            raise LuaError.msg(
                f"attempt to compare {type_name(a)} with {type_name(b)}"
            )
        res = {"<": x < y, "<=": x <= y, ">": x > y, ">=": x >= y}[op]
        return A.Bool(res)
    if not (isinstance(a, Num) and isinstance(b, Num)):
        bad = a if not isinstance(a, Num) else b
        raise LuaError.msg(
            f"attempt to perform arithmetic on a {type_name(bad)} value"
        )
    x, y = a.x, b.x
    try:
        if op == "+":
            return Num(x + y)
        if op == "-":
            return Num(x - y)
        if op == "*":
            return Num(x * y)
        if op == "/":
            if y == 0:
                return Num(x * math.copysign(math.inf, y))
            return Num(x / y)
        if op == "%":
            if y == 0:
                return Num(math.nan)
            return Num(x - math.floor(x / y) * y)
        if op == "^":
            try:
                return Num(math.pow(x, y))
            except ValueError:
                return Num(math.nan)
    except OverflowError:
        return Num(math.inf)
    raise StuckTerm(f"unknown operator {op}")  # pragma: no cover


def _call_builtin(name: str, args: List[Value], t, d, config, done_with, out):
    sigma, theta = config.sigma, config.theta
    rule_name = f"builtin:{name}"
    if name == "print":
        out.append("\t".join(render(v) for v in args))
        return done_with(ValueTuple(()), rule_name=rule_name)
    if name == "tostring":
        v = args[0] if args else Nil()
        if isinstance(v, (Tid, Cid, A.Builtin)):
            raise LuaError.msg(
                f"{type_name(v)} identity is not observable in this model"
            )
        return done_with(Const(Str(render(v))), rule_name=rule_name)
    if name == "error":
        raise LuaError(args[0] if args else Nil())
    if name == "pcall":
        if not args:
            raise LuaError.msg("bad argument #1 to 'pcall' (value expected)")
        inner = Call(Const(args[0]), tuple(Const(a) for a in args[1:]), pos=t.pos)
        return done_with(ProtectedFrame(inner, pos=t.pos), rule_name=rule_name)
    if name == "setmetatable":
        if not args or not isinstance(args[0], Tid):
            raise LuaError.msg(
                "bad argument #1 to 'setmetatable' (table expected)"
            )
        meta = args[1] if len(args) > 1 else Nil()
        if not isinstance(meta, (Tid, Nil)):
            raise LuaError.msg(
                "bad argument #2 to 'setmetatable' (nil or table expected)"
            )
        tid = args[0].n
        if not isinstance(index_metatable(tid, "__metatable", theta), Nil):
            raise LuaError.msg("cannot change a protected metatable")
        table = theta.table(tid)
        mark = set_fin(tid, meta, theta)
        new_meta = meta.n if isinstance(meta, Tid) else None
        theta = theta.put_table(tid, replace(table, meta=new_meta, pos=mark))
        return done_with(Const(args[0]), new_theta=theta, rule_name=rule_name)
    if name == "getmetatable":
        v = args[0] if args else Nil()
        if not isinstance(v, Tid):
            return done_with(Const(Nil()), rule_name=rule_name)
        table = theta.table(v.n)
        if table.meta is None:
            return done_with(Const(Nil()), rule_name=rule_name)
        guard = index_metatable(v.n, "__metatable", theta)
        if not isinstance(guard, Nil):
            return done_with(Const(guard), rule_name=rule_name)
        return done_with(Const(Tid(table.meta)), rule_name=rule_name)
    if name == "collectgarbage":
        return done_with(Const(Num(0.0)), rule_name=rule_name, gc_request=True)
    raise LuaError.msg(f"attempt to call unknown builtin '{name}'")


# ---------------------------------------------------------------------------
# Program loading and GC-free execution
# ---------------------------------------------------------------------------


def load_term(term: Term) -> Configuration:
    """Build the initial configuration: allocate the global-environment
    table (holding the builtins) and patch the globals placeholder."""
    fields = tuple((Str(n), A.Builtin(n)) for n in BUILTINS)
    theta, gtid = alloc_table(ObjectStore(), fields)
    patched = _patch_globals(term, gtid)
    return Configuration(ValueStore(), theta, patched)


def _patch_globals(t: Term, gtid: int) -> Term:
    if isinstance(t, Globals):
        return Const(Tid(gtid), pos=t.pos)
    return A._rebuild(t, lambda c: _patch_globals(c, gtid))


def load_program(text: str, origin: str = "<inline>") -> Configuration:
    return load_term(desugar(parse(text, origin)))


@dataclass
class PureOutcome:
    kind: str  # "return" | "error" | "empty" | "fuel"
    values: Tuple[Value, ...] = ()
    error_value: Value = field(default_factory=Nil)
    output: List[str] = field(default_factory=list)
    steps: int = 0
    config: Optional[Configuration] = None


def run_pure(config: Configuration, fuel: int = 10_000) -> PureOutcome:
    """Iterate the deterministic step relation with no GC at all.

    ``collectgarbage()`` is a no-op here.  Fuel exhaustion stands in for
    divergence.
    """
    output: List[str] = []
    steps = 0
    while steps < fuel:
        res = step(config)
        if isinstance(res, Finished):
            return PureOutcome(res.kind, res.values, res.error_value,
                               output, steps, config)
        output.extend(res.output)
        config = res.config
        steps += 1
    return PureOutcome("fuel", output=output, steps=steps, config=config)
