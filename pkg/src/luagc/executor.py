"""Interleave program steps with garbage-collection steps under a schedule.

A :class:`Schedule` decides, before each program step, whether a GC cycle
fires, which unreachable subset it drops, and which collection mode is in
force (plain, finalizers, finalizers + weak tables).  A pending finalizer
call is spliced into the program term at the current evaluation point: in
statement position by sequencing, in expression position by wrapping the
hole in a one-argument thunk applied to the call.  Because the call then
lives in the term, resurrection, output and error propagation all follow
from the ordinary step relation; an error escaping a finalizer unwinds to
the program's own nearest protected frame.

``collectgarbage()`` requests a drain: maximal cycles run to a fixed
point, with at most one spliced finalizer in flight at a time so the
priority (reverse-chronological) order is observed.  When the program
reaches a final configuration its result is recorded first; leftover
finalizers then run in protected mode, visible in the trace only.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

from . import ast as A
from .ast import (
    Call,
    Cid,
    Const,
    ExprStat,
    FinStat,
    FinWrap,
    Function,
    Location,
    Return,
    Seq,
    Term,
    Tid,
    Value,
    _value_json,
    to_source,
    value_locations,
    walk,
)
from .gc import GcOutcome, enumerate_gc_steps, reach_set, run_cycle
from .heap import Configuration, HeapError, ObjectStore, ValueStore
from .interp import Finished, StuckTerm, decompose, plug, step

BOTTOM_FUEL = "⊥(fuel)"
BOTTOM_BUDGET = "⊥(budget)"


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """A GC firing policy.

    ``never`` runs the program under the plain step relation only — even
    ``collectgarbage()`` is inert and no end-of-program finalization
    happens.  The other policies decide per step whether a cycle fires;
    ``collectgarbage()`` always forces a drain under them.
    """

    policy: str = "never"  # never | eager | periodic | random | scripted
    mode: str = "simple"  # simple | fin | fin_weak
    period: int = 3
    seed: int = 0
    probability: float = 0.25
    script: Tuple[int, ...] = ()
    selector: str = "maximal"  # maximal | random-subset

    def wants_gc(self, step_index: int, rng: random.Random) -> bool:
        if self.policy == "never":
            return False
        if self.policy == "eager":
            return True
        if self.policy == "periodic":
            return self.period > 0 and step_index % self.period == 0
        if self.policy == "random":
            return rng.random() < self.probability
        if self.policy == "scripted":
            return step_index in self.script
        raise ValueError(f"unknown policy {self.policy!r}")

    def describe(self) -> str:
        base = self.policy
        if self.policy == "periodic":
            base += f"({self.period})"
        elif self.policy == "random":
            base += f"({self.seed},{self.probability})"
        elif self.policy == "scripted":
            base += "(" + ",".join(map(str, self.script)) + ")"
        return f"{base}/{self.mode}/{self.selector}"


# ---------------------------------------------------------------------------
# Canonical results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProgramResult:
    kind: str  # "return" | "error" | "empty" | "bottom" | "stuck"
    key: str  # canonical form; equal keys = equal observations

    def __str__(self) -> str:
        return self.key


class NotFinal(Exception):
    pass


def _canonicalize(
    roots: List[Value], sigma: ValueStore, theta: ObjectStore
) -> Tuple[list, dict]:
    """Depth-first renaming of the residual heap from the result values."""
    names: Dict[Location, str] = {}
    counters = {"ref": 0, "tid": 0, "cid": 0}
    order: List[Location] = []

    def visit(loc: Location) -> None:
        if loc in names:
            return
        kind = loc[0]
        prefix = {"ref": "r", "tid": "t", "cid": "c"}[kind]
        names[loc] = f"{prefix}{counters[kind]}"
        counters[kind] += 1
        order.append(loc)
        if kind == "ref":
            for n in value_locations(sigma.bindings[loc[1]]):
                visit(n)
        elif kind == "tid":
            obj = theta.table(loc[1])
            for k, v in obj.fields:
                for n in value_locations(k):
                    visit(n)
                for n in value_locations(v):
                    visit(n)
            if obj.meta is not None:
                visit(("tid", obj.meta))
        else:
            for n in theta.closure(loc[1]).locations():
                visit(n)

    for v in roots:
        for n in value_locations(v):
            visit(n)

    def cval(v: Value):
        if isinstance(v, Tid):
            return {"t": "loc", "v": names[("tid", v.n)]}
        if isinstance(v, Cid):
            return {"t": "loc", "v": names[("cid", v.n)]}
        return _value_json(v)

    stores: dict = {"sigma": [], "tables": [], "closures": []}
    for loc in order:
        kind, i = loc
        if kind == "ref":
            stores["sigma"].append([names[loc], cval(sigma.bindings[i])])
        elif kind == "tid":
            obj = theta.table(i)
            stores["tables"].append(
                [
                    names[loc],
                    [[cval(k), cval(v)] for k, v in obj.fields],
                    None if obj.meta is None else names[("tid", obj.meta)],
                    obj.pos if isinstance(obj.pos, int) else repr(obj.pos),
                ]
            )
        else:
            clo = theta.closure(i)
            stores["closures"].append(
                [names[loc], list(clo.params), to_source(_rename_term(clo.body, names))]
            )
    return [cval(v) for v in roots], stores


def _rename_term(t: Term, names: Dict[Location, str]) -> Term:
    def go(n: Term) -> Term:
        if isinstance(n, A.Ref):
            return A.Name("$" + names[("ref", n.r)])
        if isinstance(n, A.Const):
            if isinstance(n.value, Tid):
                return A.Name("$" + names[("tid", n.value.n)])
            if isinstance(n.value, Cid):
                return A.Name("$" + names[("cid", n.value.n)])
            return n
        return A._rebuild(n, go)

    return go(t)


def result(config: Configuration) -> ProgramResult:
    """Canonical result of a final configuration: the terminal term plus
    the reachable residue of the stores, ids renamed deterministically."""
    d = decompose(config.term)
    if not isinstance(d, Finished):
        raise NotFinal(f"configuration is not final: {to_source(config.term)}")
    return result_of_finished(d, config)


def result_of_finished(d: Finished, config: Configuration) -> ProgramResult:
    if d.kind == "empty":
        return ProgramResult("empty", "empty")
    if d.kind == "return":
        roots = list(d.values)
        label = "return"
    else:
        roots = [d.error_value]
        label = "error"
    values, stores = _canonicalize(roots, config.sigma, config.theta)
    key = json.dumps({"k": label, "v": values, "s": stores}, sort_keys=True)
    return ProgramResult(label, key)


BOTTOM_FUEL_RESULT = ProgramResult("bottom", BOTTOM_FUEL)
BOTTOM_BUDGET_RESULT = ProgramResult("bottom", BOTTOM_BUDGET)
STUCK_RESULT = ProgramResult("stuck", "stuck")


# ---------------------------------------------------------------------------
# Finalizer splicing
# ---------------------------------------------------------------------------


def finalizer_in_flight(term: Term) -> bool:
    return any(isinstance(n, (FinStat, FinWrap)) for n in walk(term))


def _is_statement(t: Term) -> bool:
    return isinstance(
        t,
        (A.Empty, A.Seq, A.Local, A.Assign, A.ExprStat, A.If, A.While,
         A.Break, A.Return, A.LoopFrame, A.ErrTerm, A.FinStat),
    )


def splice_finalizer(term: Term, cid: int, tid: int) -> Term:
    """Insert the pending finalizer call at the current evaluation point."""
    d = decompose(term)
    if isinstance(d, Finished):
        raise NotFinal("cannot splice a finalizer into a final configuration")
    call = Call(Const(Cid(cid)), (Const(Tid(tid)),))
    if _is_statement(d.term):
        spliced: Term = Seq(FinStat(ExprStat(call)), d.term)
    else:
        thunk = Function(("$",), Return((d.term,)))
        spliced = Call(thunk, (FinWrap(call),))
    return plug(d.frames, spliced)


def _apply_outcome(config: Configuration, outcome: GcOutcome) -> Configuration:
    config = Configuration(outcome.kept_sigma, outcome.kept_theta, config.term)
    if outcome.pending_finalizer is not None:
        cid, tid = outcome.pending_finalizer
        config = config.with_term(splice_finalizer(config.term, cid, tid))
    return config


def _trace_gc(trace: List[dict], step_index: int, outcome: GcOutcome) -> None:
    if outcome.discarded:
        trace.append(
            {
                "step": step_index,
                "kind": "collect",
                "discarded": [f"{k}{i}" for k, i in outcome.discarded],
            }
        )
    for tid, k, v in outcome.cleared_weak_fields:
        trace.append(
            {
                "step": step_index,
                "kind": "clear_weak_field",
                "table": tid,
                "key": repr(k),
                "value": repr(v),
            }
        )
    if outcome.marked_forbidden is not None and outcome.pending_finalizer is None:
        trace.append(
            {"step": step_index, "kind": "finalize_skip",
             "table": outcome.marked_forbidden}
        )
    if outcome.pending_finalizer is not None:
        cid, tid = outcome.pending_finalizer
        trace.append(
            {"step": step_index, "kind": "finalize", "table": tid, "closure": cid}
        )


# ---------------------------------------------------------------------------
# Scheduled runs
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    result: ProgramResult
    output: List[str] = field(default_factory=list)
    trace: List[dict] = field(default_factory=list)
    steps: int = 0
    final_config: Optional[Configuration] = None


class _Run:
    def __init__(self, config: Configuration, schedule: Schedule, fuel: int,
                 trace_steps: bool = False):
        self.config = config
        self.schedule = schedule
        self.fuel = fuel
        self.rng = random.Random(schedule.seed)
        self.output: List[str] = []
        self.trace: List[dict] = []
        self.steps = 0
        self.trace_steps = trace_steps
        self.drain_pending = False

    def _selector(self):
        if self.schedule.selector == "maximal":
            return None
        rng = self.rng

        def pick(garbage: List[Location]) -> Iterable[Location]:
            return [l for l in garbage if rng.random() < 0.5]

        return pick

    def _gc_cycle(self, selector) -> bool:
        """One cycle (splicing any selected finalizer); True if it changed."""
        allow_fin = not finalizer_in_flight(self.config.term)
        outcome = run_cycle(self.config, self.schedule.mode, selector,
                            allow_finalizer=allow_fin)
        if not outcome.changed:
            return False
        _trace_gc(self.trace, self.steps, outcome)
        self.config = _apply_outcome(self.config, outcome)
        return True

    def run(self) -> RunRecord:
        gc_on = self.schedule.policy != "never"
        while True:
            d = decompose(self.config.term)
            if isinstance(d, Finished):
                res = result_of_finished(d, self.config)
                if gc_on and self.schedule.mode != "simple":
                    self._end_drain()
                return RunRecord(res, self.output, self.trace, self.steps,
                                 self.config)
            if self.drain_pending and not finalizer_in_flight(self.config.term):
                if self._gc_cycle(None):
                    continue
                self.drain_pending = False
            if gc_on and self.schedule.wants_gc(self.steps, self.rng):
                self._gc_cycle(self._selector())
                if isinstance(decompose(self.config.term), Finished):
                    continue
            if self.steps >= self.fuel:
                return RunRecord(BOTTOM_FUEL_RESULT, self.output, self.trace,
                                 self.steps, self.config)
            res = step(self.config)
            assert not isinstance(res, Finished)
            self.output.extend(res.output)
            if self.trace_steps:
                self.trace.append(
                    {"step": self.steps, "kind": "l_step", "rule": res.rule,
                     "redex": res.redex_src[:120]}
                )
            self.steps += 1
            self.config = res.config
            if res.gc_request and gc_on:
                self.drain_pending = True

    def _end_drain(self) -> None:
        """After the result is recorded: finalize leftovers, protected."""
        final_term = self.config.term
        while True:
            outcome = run_cycle(self.config, self.schedule.mode)
            if not outcome.changed:
                return
            _trace_gc(self.trace, self.steps, outcome)
            self.config = Configuration(outcome.kept_sigma, outcome.kept_theta,
                                        final_term)
            if outcome.pending_finalizer is None:
                continue
            cid, tid = outcome.pending_finalizer
            call = ExprStat(Call(Const(Cid(cid)), (Const(Tid(tid)),)))
            self.config = self.config.with_term(
                Seq(FinStat(call), final_term)
            )
            while True:
                d = decompose(self.config.term)
                if isinstance(d, Finished):
                    break
                if self.steps >= self.fuel:
                    return
                res = step(self.config)
                assert not isinstance(res, Finished)
                self.output.extend(res.output)
                self.steps += 1
                self.config = res.config
                if isinstance(self.config.term, A.ErrTerm):
                    self.trace.append(
                        {"step": self.steps, "kind": "finalizer_error",
                         "table": tid,
                         "error": repr(self.config.term.value)}
                    )
                    self.config = self.config.with_term(final_term)
                    break


def run(
    config: Configuration,
    schedule: Schedule,
    fuel: int = 10_000,
    trace_steps: bool = False,
) -> RunRecord:
    """Execute a configuration under a schedule.  Reproducible: the same
    (program, schedule, fuel) triple yields the same record."""
    return _Run(config, schedule, fuel, trace_steps).run()


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleSampler:
    schedules: Tuple[Schedule, ...]


@dataclass(frozen=True)
class ExhaustiveExplorer:
    mode: str = "simple"
    step_bound: int = 200
    granularity: str = "maximal"  # maximal | subsets
    node_budget: int = 20_000


@dataclass
class ObservationSet:
    results: Dict[str, ProgramResult] = field(default_factory=dict)
    truncated: bool = False

    def add(self, r: ProgramResult) -> None:
        self.results[r.key] = r

    @property
    def keys(self) -> Set[str]:
        return set(self.results)

    def __len__(self) -> int:
        return len(self.results)


def observations(
    config: Configuration,
    explorer: Union[ScheduleSampler, ExhaustiveExplorer],
    fuel: int = 10_000,
) -> ObservationSet:
    """Observation set over the explored execution space.

    Exhaustive exploration enumerates, at every configuration, the plain
    step successor and every candidate GC step; it is sound only with
    respect to the explored space (``step_bound`` program steps per trace,
    ``node_budget`` configurations overall; exceeding the budget records a
    distinct truncation marker).
    """
    obs = ObservationSet()
    if isinstance(explorer, ScheduleSampler):
        for sched in explorer.schedules:
            obs.add(run(config, sched, fuel).result)
        return obs

    nodes = 0
    stack: List[Tuple[Configuration, int]] = [(config, 0)]
    while stack:
        if nodes >= explorer.node_budget:
            obs.add(BOTTOM_BUDGET_RESULT)
            obs.truncated = True
            break
        nodes += 1
        c, steps = stack.pop()
        try:
            d = decompose(c.term)
        except (HeapError, StuckTerm):
            obs.add(STUCK_RESULT)
            continue
        if isinstance(d, Finished):
            obs.add(result_of_finished(d, c))
            continue
        if steps >= explorer.step_bound:
            obs.add(BOTTOM_FUEL_RESULT)
            continue
        allow_fin = not finalizer_in_flight(c.term)
        try:
            outcomes = enumerate_gc_steps(
                c, explorer.mode,
                "maximal" if explorer.granularity == "maximal" else "subsets",
                allow_finalizer=allow_fin,
            )
        except (HeapError, StuckTerm):
            outcomes = []
        for o in outcomes:
            stack.append((_apply_outcome(c, o), steps))
        try:
            res = step(c)
        except (HeapError, StuckTerm):
            obs.add(STUCK_RESULT)
            continue
        assert not isinstance(res, Finished)
        c3 = res.config
        if res.gc_request:
            runner = _Run(c3, Schedule("scripted", explorer.mode),
                          fuel=explorer.step_bound)
            runner.drain_pending = True
            rec = _drain_only(runner)
            if rec is not None:
                obs.add(rec)
                continue
            c3 = runner.config
            steps += runner.steps
        stack.append((c3, steps + 1))
    return obs


def _drain_only(runner: _Run) -> Optional[ProgramResult]:
    """Advance a runner until its pending drain settles.  Returns a result
    if the program finished (or ran out of fuel) during the drain."""
    while runner.drain_pending:
        d = decompose(runner.config.term)
        if isinstance(d, Finished):
            return result_of_finished(d, runner.config)
        if not finalizer_in_flight(runner.config.term):
            if runner._gc_cycle(None):
                continue
            runner.drain_pending = False
            break
        if runner.steps >= runner.fuel:
            return BOTTOM_FUEL_RESULT
        res = step(runner.config)
        assert not isinstance(res, Finished)
        runner.output.extend(res.output)
        runner.steps += 1
        runner.config = res.config
        if res.gc_request:
            runner.drain_pending = True
    return None


# ---------------------------------------------------------------------------
# Reach-equivalence and postponement
# ---------------------------------------------------------------------------


def reach_equivalent(c1: Configuration, c2: Configuration) -> bool:
    """Same term, same reachable domains, equal bindings on them."""
    if c1.term != c2.term:
        return False
    r1 = reach_set(c1.term, c1.sigma, c1.theta)
    r2 = reach_set(c2.term, c2.sigma, c2.theta)
    if r1 != r2:
        return False
    for kind, i in r1:
        if kind == "ref":
            if c1.sigma.bindings[i] != c2.sigma.bindings[i]:
                return False
        elif kind == "tid":
            if c1.theta.table(i) != c2.theta.table(i):
                return False
        else:
            if c1.theta.closure(i) != c2.theta.closure(i):
                return False
    return True


@dataclass
class PostponementReport:
    pairs_checked: int = 0
    failures: List[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def check_postponement(
    config: Configuration,
    trials: int = 5,
    seed: int = 0,
    fuel: int = 2_000,
    max_pairs: Optional[int] = None,
) -> PostponementReport:
    """Sample (GC step, program step) adjacent pairs and verify that
    swapping them yields reach-equivalent endpoints.

    Only meaningful for plain collection (no finalizers / weak tables).
    """
    report = PostponementReport()
    for trial in range(trials):
        rng = random.Random(seed * 1_000_003 + trial)
        c = config
        steps = 0
        while steps < fuel:
            if max_pairs is not None and report.pairs_checked >= max_pairs:
                return report
            d = decompose(c.term)
            if isinstance(d, Finished):
                break
            advanced = False
            if rng.random() < 0.4:
                outcome = run_cycle(c, "simple")
                if outcome.changed:
                    pre = c
                    mid = Configuration(outcome.kept_sigma, outcome.kept_theta,
                                        c.term)
                    res = step(mid)
                    if not isinstance(res, Finished):
                        post = res.config
                        report.pairs_checked += 1
                        if not _swapped_matches(pre, outcome, post):
                            report.failures.append(
                                {"trial": trial, "step": steps,
                                 "pre": to_source(pre.term)[:160]}
                            )
                        c = post
                        steps += 1
                        advanced = True
            if not advanced:
                res = step(c)
                if isinstance(res, Finished):
                    break
                c = res.config
                steps += 1
    return report


def _swapped_matches(
    pre: Configuration, outcome: GcOutcome, post: Configuration
) -> bool:
    """Take the program step first, then discard the same bindings."""
    res = step(pre)
    if isinstance(res, Finished):
        return False
    c4 = res.config
    discard = set(outcome.discarded)
    # the discarded set must still be unreachable after the program step
    reached = reach_set(c4.term, c4.sigma, c4.theta)
    if discard & reached:
        return False
    sigma = ValueStore(
        {r: v for r, v in c4.sigma.bindings.items() if ("ref", r) not in discard},
        c4.sigma.next_id,
    )
    tables = {i: o for i, o in c4.theta.tables.items() if ("tid", i) not in discard}
    closures = {
        i: o for i, o in c4.theta.closures.items() if ("cid", i) not in discard
    }
    theta = ObjectStore(tables, closures, c4.theta.next_tid, c4.theta.next_cid)
    swapped = Configuration(sigma, theta, c4.term)
    return reach_equivalent(post, swapped)


# ---------------------------------------------------------------------------
# Bounded garbage check
# ---------------------------------------------------------------------------


def is_garbage(
    config: Configuration,
    loc: Location,
    explorer: Optional[ExhaustiveExplorer] = None,
    fuel: int = 5_000,
) -> bool:
    """Bounded check: do observations agree with and without the binding?

    Unreachable implies garbage; the converse (semantic garbage) is only
    certified up to the explorer budget.
    """
    explorer = explorer or ExhaustiveExplorer(step_bound=300, node_budget=5_000)
    kind, i = loc
    if kind == "ref":
        sigma = ValueStore(
            {r: v for r, v in config.sigma.bindings.items() if r != i},
            config.sigma.next_id,
        )
        without = Configuration(sigma, config.theta, config.term)
    else:
        tables = dict(config.theta.tables)
        closures = dict(config.theta.closures)
        (tables if kind == "tid" else closures).pop(i, None)
        theta = ObjectStore(tables, closures, config.theta.next_tid,
                            config.theta.next_cid)
        without = Configuration(config.sigma, theta, config.term)
    a = observations(config, explorer, fuel)
    b = observations(without, explorer, fuel)
    return a.keys == b.keys
