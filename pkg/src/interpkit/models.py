"""Finite structures and the exhaustive evaluator.

Interpretations are either dense tables (serializable, enumerable) or
callables (for bounded-arithmetic sorts too large to materialize).  The
evaluator is a recursive Tarskian loop plus soundness-preserving
optimizations, each of which only skips work that cannot change the verdict:

* quantifier-prefix scheduling: a maximal chain of like quantifiers whose
  matrix is a conjunction (or, under foralls, an implication with a
  conjunctive guard) is evaluated as one nested loop; conjuncts are checked
  as soon as their variables are bound, pruning the remaining subtree, and
  the chain's variables are reordered so each conjunct closes early
  (universals commute with universals, existentials with existentials);
* quantifier drivers: a conjunct that is a positive atom with the bound
  variable at a bare argument position restricts the loop to candidates read
  from an index over the dense predicate table (or from an equality with a
  closed term); every candidate is still checked against the full matrix;
* existentials distribute over disjunctions;
* conjunctions short-circuit, and BigAnd parts are evaluated cheapest-first
  by a static cost estimate;
* closed subsentences, variable-free terms, and quantifier verdicts (keyed
  on the values of the free variables) are cached; evaluators are shared
  per structure, so the caches stay warm across calls.

Index-backed predicate drivers only engage for sorts of at least
DRIVER_THRESHOLD elements (building the index costs a table pass);
equality drivers engage at any size.  ``use_drivers=False`` forces the
naive path (tests compare both).
"""

from __future__ import annotations

import itertools
import os
import weakref
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .syntax import (
    And,
    App,
    BigAnd,
    BigOr,
    Const,
    Eq,
    Exists,
    Forall,
    Formula,
    Iff,
    Implies,
    Language,
    Not,
    Or,
    Rel,
    SortError,
    Term,
    Var,
    conj,
    free_vars,
    sort_check,
    term_vars,
)

DRIVER_THRESHOLD = 64

_MISSING = object()


class EvalError(Exception):
    """Evaluation failed: unbound variable, range error, or bad table."""


class StructureError(Exception):
    """A structure violates its language's contract."""


# ---------------------------------------------------------------------------
# Interpretations


class FuncInterp:
    """Total function on tuples: nested dense table or a callable."""

    __slots__ = ("arity", "table", "fn")

    def __init__(
        self,
        arity: int,
        table: tuple | None = None,
        fn: Callable[..., int] | None = None,
    ) -> None:
        if (table is None) == (fn is None):
            raise StructureError("exactly one of table/fn required")
        self.arity = arity
        self.table = table
        self.fn = fn

    @property
    def dense(self) -> bool:
        return self.table is not None

    def lookup(self, args: Sequence[int]) -> int:
        if self.table is not None:
            node = self.table
            for a in args:
                node = node[a]
            return node
        return self.fn(*args)


class PredInterp:
    """Predicate on tuples: a frozenset of tuples or a callable."""

    __slots__ = ("arity", "tuples", "fn")

    def __init__(
        self,
        arity: int,
        tuples: Iterable[tuple[int, ...]] | None = None,
        fn: Callable[..., bool] | None = None,
    ) -> None:
        if (tuples is None) == (fn is None):
            raise StructureError("exactly one of tuples/fn required")
        self.arity = arity
        self.tuples = None if tuples is None else frozenset(map(tuple, tuples))
        self.fn = fn

    @property
    def dense(self) -> bool:
        return self.tuples is not None

    def test(self, args: tuple[int, ...]) -> bool:
        if self.tuples is not None:
            return args in self.tuples
        return bool(self.fn(*args))


def _nested(table, arity: int) -> tuple:
    """Freeze a nested list table into nested tuples."""
    if arity == 0:
        return table
    if arity == 1:
        return tuple(table)
    return tuple(_nested(row, arity - 1) for row in table)


def func_table(table, arity: int) -> FuncInterp:
    return FuncInterp(arity, table=_nested(table, arity))


def func_callable(arity: int, fn: Callable[..., int]) -> FuncInterp:
    return FuncInterp(arity, fn=fn)


def pred_table(tuples: Iterable[Sequence[int]], arity: int) -> PredInterp:
    return PredInterp(arity, tuples=[tuple(t) for t in tuples])


def pred_callable(arity: int, fn: Callable[..., bool]) -> PredInterp:
    return PredInterp(arity, fn=fn)


# ---------------------------------------------------------------------------
# Structures


@dataclass(eq=False)
class FiniteStructure:
    lang: Language
    sizes: dict[str, int]
    functions: dict[str, FuncInterp] = field(default_factory=dict)
    predicates: dict[str, PredInterp] = field(default_factory=dict)
    constants: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for sort in self.lang.sorts:
            if self.sizes.get(sort, 0) < 1:
                raise StructureError(f"sort {sort!r} needs a positive size")
        for sym in self.lang.functions:
            interp = self.functions.get(sym.name)
            if interp is None:
                raise StructureError(f"missing function table {sym.name!r}")
            if interp.arity != sym.arity:
                raise StructureError(f"function {sym.name!r} has wrong arity")
            if interp.dense:
                self._check_function_table(sym.name, interp)
        for sym in self.lang.predicates:
            interp = self.predicates.get(sym.name)
            if interp is None:
                raise StructureError(f"missing predicate table {sym.name!r}")
            if interp.arity != sym.arity:
                raise StructureError(f"predicate {sym.name!r} has wrong arity")
            if interp.dense:
                lims = [self.sizes[s] for s in sym.arg_sorts]
                for t in interp.tuples:
                    if len(t) != sym.arity or any(
                        not (0 <= v < lim) for v, lim in zip(t, lims)
                    ):
                        raise StructureError(
                            f"predicate {sym.name!r} tuple {t} out of range"
                        )
        for sym in self.lang.constants:
            if sym.name not in self.constants:
                raise StructureError(f"missing constant {sym.name!r}")
            v = self.constants[sym.name]
            if not (0 <= v < self.sizes[sym.sort]):
                raise StructureError(f"constant {sym.name!r} out of range")
        # lazy per-(predicate, pattern) candidate indexes for the evaluator
        self._indexes: dict = {}

    def _check_function_table(self, name: str, interp: FuncInterp) -> None:
        sym = self.lang.function[name]
        dims = [self.sizes[s] for s in sym.arg_sorts]
        lim = self.sizes[sym.result_sort]

        def walk(node, depth: int) -> None:
            if depth == len(dims):
                if not isinstance(node, int) or not (0 <= node < lim):
                    raise StructureError(
                        f"function {name!r} value {node!r} out of range"
                    )
                return
            if len(node) != dims[depth]:
                raise StructureError(
                    f"function {name!r} table not total at depth {depth}"
                )
            for sub in node:
                walk(sub, depth + 1)

        walk(interp.table, 0)

    # -- helpers ---------------------------------------------------------

    def universe(self, sort: str) -> range:
        return range(self.sizes[sort])

    @property
    def all_dense(self) -> bool:
        return all(f.dense for f in self.functions.values()) and all(
            p.dense for p in self.predicates.values()
        )

    def pred_index(
        self, pred: str, var_pos: int, fixed_positions: tuple[int, ...]
    ) -> dict[tuple[int, ...], tuple[int, ...]]:
        """Map values-at-fixed-positions -> values seen at var_pos (dense)."""
        key = (pred, var_pos, fixed_positions)
        got = self._indexes.get(key)
        if got is None:
            acc: dict[tuple[int, ...], set[int]] = {}
            for t in self.predicates[pred].tuples:
                acc.setdefault(
                    tuple(t[i] for i in fixed_positions), set()
                ).add(t[var_pos])
            got = {k: tuple(sorted(v)) for k, v in acc.items()}
            self._indexes[key] = got
        return got


def structure_equal(a: FiniteStructure, b: FiniteStructure) -> bool:
    """Structural equality of dense structures (same language, same tables)."""
    if a.lang != b.lang or a.sizes != b.sizes or a.constants != b.constants:
        return False
    if not (a.all_dense and b.all_dense):
        raise StructureError("structural equality needs dense tables")
    for name in a.lang.function:
        if a.functions[name].table != b.functions[name].table:
            return False
    for name in a.lang.predicate:
        if a.predicates[name].tuples != b.predicates[name].tuples:
            return False
    return True


# ---------------------------------------------------------------------------
# Evaluation


class _Plan:
    """Evaluation plan for a maximal like-quantifier prefix.

    ``order`` lists the (reordered) prefix variables; ``sched[i]`` holds the
    conjuncts whose variables are all bound once order[i] is; ``early`` holds
    conjuncts with no prefix variables at all; ``core`` is the universal
    chain's conclusion (None for existential chains).
    """

    __slots__ = ("universal", "order", "sched", "early", "core")

    def __init__(self, universal, order, sched, early, core) -> None:
        self.universal = universal
        self.order = order
        self.sched = sched
        self.early = early
        self.core = core


MEMO_CAP = 1_000_000


class _Evaluator:
    def __init__(self, m: FiniteStructure, use_drivers: bool) -> None:
        self.m = m
        self.use_drivers = use_drivers
        self._plans: dict[int, _Plan | tuple] = {}
        self._fv: dict[int, frozenset[str]] = {}
        self._fv_order: dict[int, tuple[str, ...]] = {}
        self._closed: dict[int, bool] = {}
        self._memo: dict[tuple, bool] = {}
        self._part_order: dict[int, tuple[Formula, ...]] = {}
        self._tvars: dict[int, frozenset[str]] = {}
        self._tval: dict[int, int] = {}
        self._sorts: dict[int, dict[str, str]] = {}
        # Strong references backing the id-keyed caches above: evaluators
        # outlive single calls (see _evaluator_for), so a cached id must
        # never be recycled by a garbage-collected formula or term.
        self._keep: list[object] = []

    def term(self, t: Term, env: dict[str, int]) -> int:
        if isinstance(t, Var):
            v = env.get(t.name, _MISSING)
            if v is _MISSING:
                raise EvalError(f"unbound variable {t.name!r}")
            return v
        if isinstance(t, Const):
            return self.m.constants[t.name]
        got = self._tval.get(id(t), _MISSING)
        if got is not _MISSING:
            return got
        args = tuple(self.term(a, env) for a in t.args)
        v = self.m.functions[t.func].lookup(args)
        if not self.tvars(t):
            # Variable-free applications (constant powers, commutator words)
            # recur thousands of times across candidate rows: pin the value.
            self._tval[id(t)] = v
        return v

    def eval(self, f: Formula, env: dict[str, int]) -> bool:
        if isinstance(f, Eq):
            return self.term(f.lhs, env) == self.term(f.rhs, env)
        if isinstance(f, Rel):
            args = tuple(self.term(a, env) for a in f.args)
            return self.m.predicates[f.pred].test(args)
        if isinstance(f, Not):
            return not self.eval(f.body, env)
        if isinstance(f, And):
            return self.eval(f.lhs, env) and self.eval(f.rhs, env)
        if isinstance(f, Or):
            return self.eval(f.lhs, env) or self.eval(f.rhs, env)
        if isinstance(f, Implies):
            return (not self.eval(f.lhs, env)) or self.eval(f.rhs, env)
        if isinstance(f, Iff):
            return self.eval(f.lhs, env) == self.eval(f.rhs, env)
        if isinstance(f, BigAnd):
            return all(self.eval(p, env) for p in self.part_order(f))
        if isinstance(f, BigOr):
            return any(self.eval(p, env) for p in f.parts)
        if isinstance(f, (Exists, Forall)):
            return self.quantifier(f, env)
        raise TypeError(f"not a formula: {f!r}")

    # -- caches ----------------------------------------------------------

    def fv(self, f: Formula) -> frozenset[str]:
        got = self._fv.get(id(f))
        if got is None:
            got = frozenset(free_vars(f))
            self._fv[id(f)] = got
            self._keep.append(f)
        return got

    def tvars(self, t: Term) -> frozenset[str]:
        got = self._tvars.get(id(t))
        if got is None:
            got = frozenset(term_vars(t))
            self._tvars[id(t)] = got
            self._keep.append(t)
        return got

    def sorts(self, f: Formula) -> dict[str, str]:
        """Sort-checked free-variable sorts, cached by formula identity."""
        got = self._sorts.get(id(f))
        if got is None:
            got = sort_check(self.m.lang, f)
            self._sorts[id(f)] = got
            self._keep.append(f)
        return got

    def part_order(self, f: BigAnd) -> tuple[Formula, ...]:
        """BigAnd parts, cheapest static cost estimate first (stable)."""
        got = self._part_order.get(id(f))
        if got is None:
            if self.use_drivers:
                ranked = sorted(
                    enumerate(f.parts),
                    key=lambda iv: (_cost(iv[1], self.m.sizes), iv[0]),
                )
                got = tuple(p for _i, p in ranked)
            else:
                got = f.parts
            self._part_order[id(f)] = got
            self._keep.append(f)
        return got

    # -- quantifiers -----------------------------------------------------

    def quantifier(self, f: Formula, env: dict[str, int]) -> bool:
        # Closed sentences are environment-independent: evaluate once.
        if not self.fv(f):
            got = self._closed.get(id(f))
            if got is None:
                got = self.quantifier_inner(f, env)
                self._closed[id(f)] = got
            return got
        if self.use_drivers:
            # The verdict depends only on the values of the free variables,
            # so memoize on those.  Guard subformulas (domain relativizers,
            # congruence premises) recur with identical environments many
            # thousands of times during quotient and corpus checks.
            names = self._fv_order.get(id(f))
            if names is None:
                names = tuple(sorted(self.fv(f)))
                self._fv_order[id(f)] = names
            key = (id(f), tuple(env.get(v, -1) for v in names))
            got = self._memo.get(key)
            if got is None:
                got = self.quantifier_inner(f, env)
                if len(self._memo) < MEMO_CAP:
                    self._memo[key] = got
            return got
        return self.quantifier_inner(f, env)

    def quantifier_inner(self, f: Formula, env: dict[str, int]) -> bool:
        plan = self._plans.get(id(f))
        if plan is None:
            plan = self.make_plan(f)
            self._plans[id(f)] = plan
        if isinstance(plan, tuple):  # distributed existential disjunction
            return any(self.quantifier(p, env) for p in plan)
        for c in plan.early:
            if not self.eval(c, env):
                return plan.universal
        return self.run_plan(plan, 0, env)

    def make_plan(self, f: Formula) -> "_Plan | tuple":
        universal = isinstance(f, Forall)
        if not self.use_drivers:
            # naive path: one plain loop per quantifier, body evaluated whole
            return _Plan(universal, [(f.var, f.sort)], [[]], [], f.body)
        prefix: list[tuple[str, str]] = []
        names: set[str] = set()
        pool: list[Formula] = []
        body: Formula = f

        def fresh(v: str) -> bool:
            # A variable may join the prefix only when nothing collected so
            # far mentions it: ∃x(G ∧ ∃y φ) ≡ ∃x∃y(G ∧ φ) needs y ∉ fv(G),
            # and a repeated name would shadow an outer prefix slot.
            return v not in names and all(v not in self.fv(c) for c in pool)

        if universal:
            # Collapse ∀x̄(G₁ → ∀ȳ(G₂ → … ψ)) into one prefix with all
            # guards pooled: drivers then prune each level in turn.
            while True:
                if isinstance(body, Forall) and fresh(body.var):
                    prefix.append((body.var, body.sort))
                    names.add(body.var)
                    body = body.body
                    continue
                if isinstance(body, Implies):
                    pool.extend(_conjuncts(body.lhs))
                    body = body.rhs
                    continue
                break
            return self.schedule(True, prefix, pool, body)
        # Existential: collapse ∃x̄(G ∧ ∃ȳ(H ∧ …)) chains the same way.
        while True:
            if isinstance(body, Exists):
                if fresh(body.var):
                    prefix.append((body.var, body.sort))
                    names.add(body.var)
                    body = body.body
                    continue
                break
            parts = _conjuncts(body)
            if len(parts) == 1:
                break
            ex = [p for p in parts if isinstance(p, Exists)]
            rest = [p for p in parts if not isinstance(p, Exists)]
            if (
                len(ex) == 1
                and ex[0].var not in names
                and all(ex[0].var not in self.fv(c) for c in rest)
                and all(ex[0].var not in self.fv(c) for c in pool)
            ):
                pool.extend(rest)
                body = ex[0]
                continue
            break
        if isinstance(body, (Or, BigOr)):
            # distribute the existential over the disjunction, keeping the
            # prefix and conjoining the pooled guards into every branch
            parts = (
                (body.lhs, body.rhs) if isinstance(body, Or) else body.parts
            )
            out = []
            for p in parts:
                g: Formula = conj(list(pool) + [p]) if pool else p
                for name, sort in reversed(prefix):
                    g = Exists(name, sort, g)
                out.append(g)
            return tuple(out)
        return self.schedule(False, prefix, pool + _conjuncts(body), None)

    def schedule(
        self,
        universal: bool,
        prefix: list[tuple[str, str]],
        conjuncts: list[Formula],
        core: Formula | None,
    ) -> "_Plan":
        prefix_names = [name for name, _ in prefix]
        remaining_vars = list(prefix)
        needs = [
            (i, c, set(self.fv(c)) & set(prefix_names))
            for i, c in enumerate(conjuncts)
        ]
        order: list[tuple[str, str]] = []
        bound: set[str] = set()
        early: list[Formula] = []
        sched_map: dict[int, list[Formula]] = {}
        pending = list(needs)
        while pending:
            pending.sort(key=lambda t: (len(t[2] - bound), t[0]))
            i, c, need = pending.pop(0)
            new = [nv for nv in remaining_vars if nv[0] in need - bound]
            for nv in new:
                order.append(nv)
                bound.add(nv[0])
                remaining_vars.remove(nv)
            if order:
                sched_map.setdefault(len(order) - 1, []).append(c)
            else:
                early.append(c)
        order.extend(remaining_vars)
        sched = [sched_map.get(i, []) for i in range(len(order))]
        return _Plan(universal, order, sched, early, core)

    def run_plan(self, plan: "_Plan", level: int, env: dict[str, int]) -> bool:
        if level == len(plan.order):
            if plan.core is None:
                return True
            return self.eval(plan.core, env)
        var, sort = plan.order[level]
        size = self.m.sizes[sort]
        checks = plan.sched[level]
        candidates: Iterable[int] = range(size)
        if self.use_drivers and checks:
            # Index-backed predicate drivers pay an index build; equality
            # drivers are free, so they engage at any sort size.
            found = self.driver(checks, var, env, size >= DRIVER_THRESHOLD)
            if found is not None:
                candidates = found
        old = env.get(var, _MISSING)
        universal = plan.universal
        try:
            for v in candidates:
                env[var] = v
                ok = True
                for c in checks:
                    if not self.eval(c, env):
                        ok = False
                        break
                if not ok:
                    continue
                sub = self.run_plan(plan, level + 1, env)
                if universal:
                    if not sub:
                        return False
                elif sub:
                    return True
            return universal
        finally:
            if old is _MISSING:
                env.pop(var, None)
            else:
                env[var] = old

    def enumerate_plan(
        self,
        plan: "_Plan",
        level: int,
        env: dict[str, int],
        names: tuple[str, ...],
        out: set[tuple[int, ...]],
    ) -> None:
        """Collect every assignment of plan.order satisfying the checks.

        Like run_plan for an existential prefix, but exhaustive: no early
        return, and each surviving leaf records the values of ``names``.
        """
        if level == len(plan.order):
            out.add(tuple(env[n] for n in names))
            return
        var, sort = plan.order[level]
        size = self.m.sizes[sort]
        checks = plan.sched[level]
        candidates: Iterable[int] = range(size)
        if self.use_drivers and checks:
            found = self.driver(checks, var, env, size >= DRIVER_THRESHOLD)
            if found is not None:
                candidates = found
        old = env.get(var, _MISSING)
        try:
            for v in candidates:
                env[var] = v
                ok = True
                for c in checks:
                    if not self.eval(c, env):
                        ok = False
                        break
                if ok:
                    self.enumerate_plan(plan, level + 1, env, names, out)
        finally:
            if old is _MISSING:
                env.pop(var, None)
            else:
                env[var] = old

    def driver(
        self,
        conjuncts: list[Formula],
        var: str,
        env: dict[str, int],
        allow_rel: bool,
    ) -> tuple[int, ...] | None:
        """Candidate values for var, or None when no conjunct can drive.

        Soundness: the returned set contains every value for which the
        driving atom can hold, so skipped values falsify that conjunct.
        """
        best: tuple[int, ...] | None = None
        for leaf in conjuncts:
            cand = None
            if isinstance(leaf, Rel) and allow_rel:
                cand = self.rel_driver(leaf, var, env)
            elif isinstance(leaf, Eq):
                cand = self.eq_driver(leaf, var, env)
            if cand is not None and (best is None or len(cand) < len(best)):
                best = cand
            if best is not None and len(best) <= 1:
                break
        return best

    def rel_driver(
        self, atom: Rel, var: str, env: dict[str, int]
    ) -> tuple[int, ...] | None:
        interp = self.m.predicates[atom.pred]
        if not interp.dense:
            return None
        var_pos = None
        fixed: list[int] = []
        for i, arg in enumerate(atom.args):
            if isinstance(arg, Var) and arg.name == var:
                if var_pos is None:
                    var_pos = i
                continue
            if var not in self.tvars(arg):
                fixed.append(i)
        if var_pos is None:
            return None
        try:
            key = tuple(self.term(atom.args[i], env) for i in fixed)
        except EvalError:
            return None
        index = self.m.pred_index(atom.pred, var_pos, tuple(fixed))
        return index.get(key, ())

    def eq_driver(
        self, atom: Eq, var: str, env: dict[str, int]
    ) -> tuple[int, ...] | None:
        for side, other in ((atom.lhs, atom.rhs), (atom.rhs, atom.lhs)):
            if (
                isinstance(side, Var)
                and side.name == var
                and var not in self.tvars(other)
            ):
                try:
                    return (self.term(other, env),)
                except EvalError:
                    continue
        return None


def _conjuncts(f: Formula) -> list[Formula]:
    out: list[Formula] = []
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, And):
            stack.append(g.rhs)
            stack.append(g.lhs)
        elif isinstance(g, BigAnd):
            stack.extend(reversed(g.parts))
        else:
            out.append(g)
    return out


def _disjunctive_split(
    parts: list[Formula], budget: int = 256
) -> list[list[Formula]]:
    """Branch a conjunct list over its top-level disjunctions.

    rows(C ∧ (A ∨ B)) = rows(C ∧ A) ∪ rows(C ∧ B), so define_set may solve
    each branch separately — turning a disjunction of equation systems into
    driver-friendly conjunctions.  Splitting stops once the branch count
    would exceed the budget; remaining disjunctions stay as plain checks.
    """
    done: list[list[Formula]] = []
    work = [parts]
    while work:
        cur = work.pop()
        for i, c in enumerate(cur):
            alts: tuple[Formula, ...] | None = None
            if isinstance(c, Or):
                alts = (c.lhs, c.rhs)
            elif isinstance(c, BigOr):
                alts = c.parts
            if alts and len(done) + len(work) + len(alts) <= budget:
                for alt in alts:
                    work.append(cur[:i] + _conjuncts(alt) + cur[i + 1 :])
                break
        else:
            done.append(cur)
    return done


def _cost(f: Formula, sizes: dict[str, int]) -> int:
    """Static work estimate for a formula over the given sort sizes."""
    if isinstance(f, (Eq, Rel)):
        return 1
    if isinstance(f, Not):
        return 1 + _cost(f.body, sizes)
    if isinstance(f, (And, Or, Implies, Iff)):
        return 1 + _cost(f.lhs, sizes) + _cost(f.rhs, sizes)
    if isinstance(f, (BigAnd, BigOr)):
        return 1 + sum(_cost(p, sizes) for p in f.parts)
    if isinstance(f, (Exists, Forall)):
        return 1 + sizes[f.sort] * _cost(f.body, sizes)
    raise TypeError(f"not a formula: {f!r}")


# One evaluator per (structure, mode), kept while the structure lives: the
# identity-keyed caches (plans, free variables, memo tables, closed-term
# values) then stay warm when the same formulas are evaluated repeatedly —
# e.g. one Θ sentence checked at hundreds of parameter tuples.  Structures
# are treated as immutable after construction.
_EVALUATORS: "weakref.WeakKeyDictionary[FiniteStructure, dict[bool, _Evaluator]]" = (
    weakref.WeakKeyDictionary()
)


def _evaluator_for(m: FiniteStructure, use_drivers: bool) -> _Evaluator:
    per = _EVALUATORS.get(m)
    if per is None:
        per = {}
        _EVALUATORS[m] = per
    ev = per.get(use_drivers)
    if ev is None:
        ev = _Evaluator(m, use_drivers)
        per[use_drivers] = ev
    return ev


def evaluate(
    m: FiniteStructure,
    f: Formula,
    a: Mapping[str, int] | None = None,
    use_drivers: bool = True,
) -> bool:
    """Classical Tarskian truth of f in m under assignment a."""
    a = dict(a or {})
    ev = _evaluator_for(m, use_drivers)
    for name, sort in ev.sorts(f).items():
        if name not in a:
            raise EvalError(f"unbound free variable {name!r}")
        if not (0 <= a[name] < m.sizes[sort]):
            raise EvalError(
                f"assignment {name}={a[name]} outside sort {sort!r}"
            )
    return ev.eval(f, a)


def define_set(
    m: FiniteStructure,
    f: Formula,
    params: Mapping[str, int] | None = None,
    result_vars: Sequence[str] | None = None,
    use_drivers: bool = True,
) -> set[tuple[int, ...]]:
    """The exact set {b-tuple : m |= f(b-tuple, params)}.

    Result variables default to the free variables not covered by params, in
    first-occurrence order; pass result_vars to fix the order explicitly.
    """
    params = dict(params or {})
    ev = _evaluator_for(m, use_drivers)
    fv = ev.sorts(f)
    if result_vars is None:
        result_vars = [v for v in fv if v not in params]
    else:
        result_vars = list(result_vars)
        if len(set(result_vars)) != len(result_vars):
            raise EvalError("duplicate result variables")
        for v in result_vars:
            if v not in fv:
                raise EvalError(f"result variable {v!r} not free in formula")
    for v in fv:
        if v not in params and v not in result_vars:
            raise EvalError(f"unbound free variable {v!r}")
    for name, val in params.items():
        if name in fv and not (0 <= val < m.sizes[fv[name]]):
            raise EvalError(f"assignment {name}={val} outside sort")
    out: set[tuple[int, ...]] = set()
    env = dict(params)
    if use_drivers and result_vars:
        # Treat the result block as an existential prefix: scheduling and
        # drivers prune the enumeration, and every pruned value falsifies
        # the pruning conjunct, so the collected set is exact.
        head = [(v, fv[v]) for v in result_vars]
        names = tuple(result_vars)
        for parts in _disjunctive_split(_conjuncts(f)):
            plan = ev.schedule(False, head, parts, None)
            if all(ev.eval(c, env) for c in plan.early):
                ev.enumerate_plan(plan, 0, env, names, out)
        return out
    ranges = [m.universe(fv[v]) for v in result_vars]
    for tup in itertools.product(*ranges):
        env.update(zip(result_vars, tup))
        if ev.eval(f, env):
            out.add(tup)
    return out


def evaluate_many(
    m: FiniteStructure,
    f: Formula,
    assignments: Sequence[Mapping[str, int]],
    use_drivers: bool = True,
) -> list[bool]:
    """Evaluate one formula under many assignments, in input order.

    Honors the INTERPKIT_WORKERS environment variable: with more than one
    worker and a fully dense (hence picklable) structure the assignments are
    partitioned across processes; otherwise evaluation is sequential.
    """
    workers = worker_count()
    if workers > 1 and m.all_dense and len(assignments) >= 4 * workers:
        from concurrent.futures import ProcessPoolExecutor

        chunks = [list(assignments[i::workers]) for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    _eval_chunk,
                    [(m, f, chunk, use_drivers) for chunk in chunks],
                )
            )
        merged: list[bool] = [False] * len(assignments)
        for lane, vals in enumerate(results):
            for j, val in enumerate(vals):
                merged[lane + j * workers] = val
        return merged
    ev = _evaluator_for(m, use_drivers)
    ev.sorts(f)
    return [ev.eval(f, dict(a)) for a in assignments]


def _eval_chunk(job) -> list[bool]:
    m, f, assignments, use_drivers = job
    ev = _evaluator_for(m, use_drivers)
    return [ev.eval(f, dict(a)) for a in assignments]


def worker_count() -> int:
    raw = os.environ.get("INTERPKIT_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Reducts and sort lowering


def reduct(m: FiniteStructure, lang: Language) -> FiniteStructure:
    """Restrict m to a sub-language (same sorts, fewer symbols)."""
    if set(lang.sorts) - set(m.lang.sorts):
        raise StructureError("reduct language mentions unknown sorts")
    for f in lang.functions:
        if m.lang.function.get(f.name) != f:
            raise StructureError(f"function {f.name!r} not in structure")
    for p in lang.predicates:
        if m.lang.predicate.get(p.name) != p:
            raise StructureError(f"predicate {p.name!r} not in structure")
    for c in lang.constants:
        if m.lang.constant.get(c.name) != c:
            raise StructureError(f"constant {c.name!r} not in structure")
    return FiniteStructure(
        lang=lang,
        sizes={s: m.sizes[s] for s in lang.sorts},
        functions={f.name: m.functions[f.name] for f in lang.functions},
        predicates={p.name: m.predicates[p.name] for p in lang.predicates},
        constants={c.name: m.constants[c.name] for c in lang.constants},
    )


@dataclass
class LoweredStructure:
    structure: FiniteStructure
    sort_predicates: dict[str, str]
    offsets: dict[str, int]
    junk: int

    def relativize(self, f: Formula) -> Formula:
        """Relativize quantifiers to the sort predicates (for sentences)."""

        def conv_term(t: Term) -> Term:
            if isinstance(t, Var):
                return Var(t.name, self.structure.lang.only_sort)
            if isinstance(t, App):
                return App(t.func, tuple(conv_term(a) for a in t.args))
            return t

        def walk(g: Formula) -> Formula:
            if isinstance(g, Eq):
                return Eq(conv_term(g.lhs), conv_term(g.rhs))
            if isinstance(g, Rel):
                return Rel(g.pred, tuple(conv_term(a) for a in g.args))
            if isinstance(g, Not):
                return Not(walk(g.body))
            if isinstance(g, (And, Or, Implies, Iff)):
                return type(g)(walk(g.lhs), walk(g.rhs))
            if isinstance(g, (BigAnd, BigOr)):
                return type(g)(tuple(walk(p) for p in g.parts))
            if isinstance(g, (Forall, Exists)):
                u = self.structure.lang.only_sort
                guard = Rel(
                    self.sort_predicates[g.sort], (Var(g.var, u),)
                )
                body = walk(g.body)
                if isinstance(g, Forall):
                    return Forall(g.var, u, Implies(guard, body))
                return Exists(g.var, u, And(guard, body))
            raise TypeError(f"not a formula: {g!r}")

        return walk(f)


def lower_multisorted(m: FiniteStructure) -> LoweredStructure:
    """One-sorted disjoint-union image of a multi-sorted structure.

    Functions are totalized outside their sorted domain by the junk element
    (global element 0).  Truth of sentences is preserved through
    ``relativize``; open formulas need their free variables guarded by the
    caller.
    """
    if m.lang.is_one_sorted:
        raise StructureError("structure is already one-sorted")
    offsets: dict[str, int] = {}
    total = 0
    for s in m.lang.sorts:
        offsets[s] = total
        total += m.sizes[s]
    uni = "u"
    sort_preds = {}
    for s in m.lang.sorts:
        name = f"is_{s}"
        if name in m.lang.symbol_names():
            raise StructureError(f"symbol name {name!r} already used")
        sort_preds[s] = name

    functions = []
    predicates = []
    constants = []
    for f in m.lang.functions:
        functions.append((f.name, f.arg_sorts, f.result_sort))
    for p in m.lang.predicates:
        predicates.append((p.name, p.arg_sorts))
    for c in m.lang.constants:
        constants.append((c.name, c.sort))

    lang = Language(
        sorts=(uni,),
        functions=tuple(
            # every symbol becomes all-universe
            _one_sorted_fn(name, len(args), uni)
            for name, args, _res in functions
        ),
        predicates=tuple(
            _one_sorted_pred(name, len(args), uni)
            for name, args in predicates
        )
        + tuple(_one_sorted_pred(sort_preds[s], 1, uni) for s in m.lang.sorts),
        constants=tuple(
            _one_sorted_const(name, uni) for name, _s in constants
        ),
    )

    def in_sort(sort: str, v: int) -> bool:
        return offsets[sort] <= v < offsets[sort] + m.sizes[sort]

    new_funcs: dict[str, FuncInterp] = {}
    for name, arg_sorts, res_sort in functions:
        old = m.functions[name]

        def make(old=old, arg_sorts=arg_sorts, res_sort=res_sort):
            def fn(*args: int) -> int:
                if not all(in_sort(s, v) for s, v in zip(arg_sorts, args)):
                    return 0
                inner = tuple(
                    v - offsets[s] for s, v in zip(arg_sorts, args)
                )
                return old.lookup(inner) + offsets[res_sort]

            return fn

        if old.dense:
            dims = [total] * len(arg_sorts)
            fn = make()
            new_funcs[name] = func_table(_build_table(fn, dims), len(arg_sorts))
        else:
            new_funcs[name] = func_callable(len(arg_sorts), make())

    new_preds: dict[str, PredInterp] = {}
    for name, arg_sorts in predicates:
        old = m.predicates[name]
        if old.dense:
            new_preds[name] = pred_table(
                [
                    tuple(v + offsets[s] for s, v in zip(arg_sorts, t))
                    for t in old.tuples
                ],
                len(arg_sorts),
            )
        else:

            def make(old=old, arg_sorts=arg_sorts):
                def fn(*args: int) -> bool:
                    if not all(
                        in_sort(s, v) for s, v in zip(arg_sorts, args)
                    ):
                        return False
                    return old.test(
                        tuple(v - offsets[s] for s, v in zip(arg_sorts, args))
                    )

                return fn

            new_preds[name] = pred_callable(len(arg_sorts), make())
    for s in m.lang.sorts:
        new_preds[sort_preds[s]] = pred_table(
            [(offsets[s] + i,) for i in range(m.sizes[s])], 1
        )

    new_consts = {
        name: m.constants[name] + offsets[sort] for name, sort in constants
    }

    lowered = FiniteStructure(
        lang=lang,
        sizes={uni: total},
        functions=new_funcs,
        predicates=new_preds,
        constants=new_consts,
    )
    return LoweredStructure(
        structure=lowered,
        sort_predicates=sort_preds,
        offsets=offsets,
        junk=0,
    )


def _one_sorted_fn(name: str, arity: int, uni: str):
    from .syntax import FunctionSymbol

    return FunctionSymbol(name, (uni,) * arity, uni)


def _one_sorted_pred(name: str, arity: int, uni: str):
    from .syntax import PredicateSymbol

    return PredicateSymbol(name, (uni,) * arity)


def _one_sorted_const(name: str, uni: str):
    from .syntax import ConstantSymbol

    return ConstantSymbol(name, uni)


def _build_table(fn: Callable[..., int], dims: list[int]):
    if not dims:
        return fn()
    head, *rest = dims
    return [
        _build_table(lambda *a, i=i: fn(i, *a), rest) for i in range(head)
    ]


def dense_function_table(m: FiniteStructure, name: str):
    """Materialize a function's nested table (also works for callables)."""
    sym = m.lang.function[name]
    dims = [m.sizes[s] for s in sym.arg_sorts]
    interp = m.functions[name]
    if interp.dense:
        return interp.table
    return _nested(
        _build_table(lambda *a: interp.lookup(a), dims), sym.arity
    )
