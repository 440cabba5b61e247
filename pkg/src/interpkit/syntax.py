"""Many-sorted first-order syntax: languages, terms, formulas.

Elements of finite structures are dense integers per sort; variables carry
their sort on the AST node.  The character ``#`` is reserved for
machine-generated names (fresh variables, tuple-split blocks ``v#i``, and
parameter blocks ``#p1``..``#pk``); the parser rejects it in user input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Union

RESERVED_CHAR = "#"


class SortError(Exception):
    """A term or formula is not well-sorted over the language."""


class CaptureError(Exception):
    """A substitution would capture a free variable."""


# ---------------------------------------------------------------------------
# Languages


@dataclass(frozen=True)
class FunctionSymbol:
    name: str
    arg_sorts: tuple[str, ...]
    result_sort: str

    @property
    def arity(self) -> int:
        return len(self.arg_sorts)


@dataclass(frozen=True)
class PredicateSymbol:
    name: str
    arg_sorts: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.arg_sorts)


@dataclass(frozen=True)
class ConstantSymbol:
    name: str
    sort: str


@dataclass(frozen=True)
class Language:
    sorts: tuple[str, ...]
    functions: tuple[FunctionSymbol, ...] = ()
    predicates: tuple[PredicateSymbol, ...] = ()
    constants: tuple[ConstantSymbol, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "sorts", tuple(self.sorts))
        object.__setattr__(self, "functions", tuple(self.functions))
        object.__setattr__(self, "predicates", tuple(self.predicates))
        object.__setattr__(self, "constants", tuple(self.constants))
        if not self.sorts:
            raise SortError("a language needs at least one sort")
        if len(set(self.sorts)) != len(self.sorts):
            raise SortError("duplicate sort names")
        names = [s.name for s in self.functions]
        names += [s.name for s in self.predicates]
        names += [s.name for s in self.constants]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SortError(f"symbol names not unique: {sorted(dupes)}")
        declared = set(self.sorts)
        for f in self.functions:
            for s in (*f.arg_sorts, f.result_sort):
                if s not in declared:
                    raise SortError(f"function {f.name} mentions unknown sort {s!r}")
        for p in self.predicates:
            for s in p.arg_sorts:
                if s not in declared:
                    raise SortError(f"predicate {p.name} mentions unknown sort {s!r}")
        for c in self.constants:
            if c.sort not in declared:
                raise SortError(f"constant {c.name} has unknown sort {c.sort!r}")

    @cached_property
    def function(self) -> dict[str, FunctionSymbol]:
        return {f.name: f for f in self.functions}

    @cached_property
    def predicate(self) -> dict[str, PredicateSymbol]:
        return {p.name: p for p in self.predicates}

    @cached_property
    def constant(self) -> dict[str, ConstantSymbol]:
        return {c.name: c for c in self.constants}

    @property
    def is_one_sorted(self) -> bool:
        return len(self.sorts) == 1

    @property
    def only_sort(self) -> str:
        if not self.is_one_sorted:
            raise SortError("language is not one-sorted")
        return self.sorts[0]

    def symbol_names(self) -> set[str]:
        return set(self.function) | set(self.predicate) | set(self.constant)


def make_language(
    sorts: Iterable[str],
    functions: Mapping[str, tuple[Iterable[str], str]] | None = None,
    predicates: Mapping[str, Iterable[str]] | None = None,
    constants: Mapping[str, str] | None = None,
) -> Language:
    """Convenience constructor from plain dicts.

    ``functions`` maps name -> (argument sorts, result sort); ``predicates``
    maps name -> argument sorts; ``constants`` maps name -> sort.
    """
    return Language(
        sorts=tuple(sorts),
        functions=tuple(
            FunctionSymbol(n, tuple(args), res)
            for n, (args, res) in (functions or {}).items()
        ),
        predicates=tuple(
            PredicateSymbol(n, tuple(args)) for n, args in (predicates or {}).items()
        ),
        constants=tuple(
            ConstantSymbol(n, s) for n, s in (constants or {}).items()
        ),
    )


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Var:
    name: str
    sort: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class App:
    func: str
    args: tuple["Term", ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "args", tuple(self.args))

    def __str__(self) -> str:
        return f"{self.func}({', '.join(str(a) for a in self.args)})"


Term = Union[Var, Const, App]


# ---------------------------------------------------------------------------
# Formulas


@dataclass(frozen=True)
class Eq:
    lhs: Term
    rhs: Term

    def __str__(self) -> str:
        return f"({self.lhs} = {self.rhs})"


@dataclass(frozen=True)
class Rel:
    pred: str
    args: tuple[Term, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "args", tuple(self.args))

    def __str__(self) -> str:
        return f"{self.pred}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Not:
    body: "Formula"

    def __str__(self) -> str:
        return f"~{self.body}"


@dataclass(frozen=True)
class And:
    lhs: "Formula"
    rhs: "Formula"

    def __str__(self) -> str:
        return f"({self.lhs} & {self.rhs})"


@dataclass(frozen=True)
class Or:
    lhs: "Formula"
    rhs: "Formula"

    def __str__(self) -> str:
        return f"({self.lhs} | {self.rhs})"


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"

    def __str__(self) -> str:
        return f"({self.lhs} -> {self.rhs})"


@dataclass(frozen=True)
class Iff:
    lhs: "Formula"
    rhs: "Formula"

    def __str__(self) -> str:
        return f"({self.lhs} <-> {self.rhs})"


@dataclass(frozen=True)
class BigAnd:
    parts: tuple["Formula", ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("big-conjunction over an empty list")

    def __str__(self) -> str:
        return f"({' & '.join(str(p) for p in self.parts)})"


@dataclass(frozen=True)
class BigOr:
    parts: tuple["Formula", ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("big-disjunction over an empty list")

    def __str__(self) -> str:
        return f"({' | '.join(str(p) for p in self.parts)})"


@dataclass(frozen=True)
class Forall:
    var: str
    sort: str
    body: "Formula"

    def __str__(self) -> str:
        return f"(forall {self.var}:{self.sort} . {self.body})"


@dataclass(frozen=True)
class Exists:
    var: str
    sort: str
    body: "Formula"

    def __str__(self) -> str:
        return f"(exists {self.var}:{self.sort} . {self.body})"


Formula = Union[
    Eq, Rel, Not, And, Or, Implies, Iff, BigAnd, BigOr, Forall, Exists
]

QUANTIFIERS = (Forall, Exists)
BINARY = (And, Or, Implies, Iff)


def conj(parts: Iterable[Formula]) -> Formula:
    """n-ary conjunction: one part passes through, two use And, more BigAnd."""
    items = tuple(parts)
    if not items:
        raise ValueError("conj of no formulas")
    if len(items) == 1:
        return items[0]
    if len(items) == 2:
        return And(items[0], items[1])
    return BigAnd(items)


def disj(parts: Iterable[Formula]) -> Formula:
    items = tuple(parts)
    if not items:
        raise ValueError("disj of no formulas")
    if len(items) == 1:
        return items[0]
    if len(items) == 2:
        return Or(items[0], items[1])
    return BigOr(items)


def forall_many(block: Iterable[tuple[str, str]], body: Formula) -> Formula:
    for name, sort in reversed(tuple(block)):
        body = Forall(name, sort, body)
    return body


def exists_many(block: Iterable[tuple[str, str]], body: Formula) -> Formula:
    for name, sort in reversed(tuple(block)):
        body = Exists(name, sort, body)
    return body


def subformulas(f: Formula) -> Iterator[Formula]:
    """All subformulas, preorder."""
    yield f
    if isinstance(f, Not):
        yield from subformulas(f.body)
    elif isinstance(f, BINARY):
        yield from subformulas(f.lhs)
        yield from subformulas(f.rhs)
    elif isinstance(f, (BigAnd, BigOr)):
        for p in f.parts:
            yield from subformulas(p)
    elif isinstance(f, QUANTIFIERS):
        yield from subformulas(f.body)


def term_vars(t: Term, out: dict[str, str] | None = None) -> dict[str, str]:
    """Variables of a term, name -> sort, in first-occurrence order."""
    if out is None:
        out = {}
    if isinstance(t, Var):
        if t.name in out and out[t.name] != t.sort:
            raise SortError(f"variable {t.name} used at two sorts")
        out.setdefault(t.name, t.sort)
    elif isinstance(t, App):
        for a in t.args:
            term_vars(a, out)
    return out


def free_vars(f: Formula) -> dict[str, str]:
    """Free variables, name -> sort, ordered by first occurrence."""
    out: dict[str, str] = {}

    def walk(g: Formula, bound: frozenset[str]) -> None:
        if isinstance(g, Eq):
            for name, sort in {**term_vars(g.lhs), **term_vars(g.rhs)}.items():
                if name not in bound:
                    if name in out and out[name] != sort:
                        raise SortError(f"variable {name} used at two sorts")
                    out.setdefault(name, sort)
        elif isinstance(g, Rel):
            for t in g.args:
                for name, sort in term_vars(t).items():
                    if name not in bound:
                        if name in out and out[name] != sort:
                            raise SortError(f"variable {name} used at two sorts")
                        out.setdefault(name, sort)
        elif isinstance(g, Not):
            walk(g.body, bound)
        elif isinstance(g, BINARY):
            walk(g.lhs, bound)
            walk(g.rhs, bound)
        elif isinstance(g, (BigAnd, BigOr)):
            for p in g.parts:
                walk(p, bound)
        elif isinstance(g, QUANTIFIERS):
            walk(g.body, bound | {g.var})
        else:
            raise TypeError(f"not a formula: {g!r}")

    walk(f, frozenset())
    return out


def _subst_term(t: Term, sub: Mapping[str, Term]) -> Term:
    if isinstance(t, Var):
        return sub.get(t.name, t)
    if isinstance(t, App):
        return App(t.func, tuple(_subst_term(a, sub) for a in t.args))
    return t


def substitute(f: Formula, sub: Mapping[str, Term]) -> Formula:
    """Substitute terms for free variables.

    Raises CaptureError if a replacement term would be captured by a
    quantifier.  Machine-generated names are globally fresh, so capture never
    happens on the code paths that build formulas programmatically.
    """
    if not sub:
        return f
    if isinstance(f, Eq):
        return Eq(_subst_term(f.lhs, sub), _subst_term(f.rhs, sub))
    if isinstance(f, Rel):
        return Rel(f.pred, tuple(_subst_term(a, sub) for a in f.args))
    if isinstance(f, Not):
        return Not(substitute(f.body, sub))
    if isinstance(f, And):
        return And(substitute(f.lhs, sub), substitute(f.rhs, sub))
    if isinstance(f, Or):
        return Or(substitute(f.lhs, sub), substitute(f.rhs, sub))
    if isinstance(f, Implies):
        return Implies(substitute(f.lhs, sub), substitute(f.rhs, sub))
    if isinstance(f, Iff):
        return Iff(substitute(f.lhs, sub), substitute(f.rhs, sub))
    if isinstance(f, BigAnd):
        return BigAnd(tuple(substitute(p, sub) for p in f.parts))
    if isinstance(f, BigOr):
        return BigOr(tuple(substitute(p, sub) for p in f.parts))
    if isinstance(f, QUANTIFIERS):
        inner = {k: v for k, v in sub.items() if k != f.var}
        for repl in inner.values():
            if f.var in term_vars(repl):
                raise CaptureError(
                    f"substituting under quantifier would capture {f.var!r}"
                )
        body = substitute(f.body, inner) if inner else f.body
        return type(f)(f.var, f.sort, body)
    raise TypeError(f"not a formula: {f!r}")


def rename_vars(f: Formula, mapping: Mapping[str, str]) -> Formula:
    """Rename variables (free and bound) by a name map; sorts are kept."""

    def rterm(t: Term) -> Term:
        if isinstance(t, Var):
            return Var(mapping.get(t.name, t.name), t.sort)
        if isinstance(t, App):
            return App(t.func, tuple(rterm(a) for a in t.args))
        return t

    if isinstance(f, Eq):
        return Eq(rterm(f.lhs), rterm(f.rhs))
    if isinstance(f, Rel):
        return Rel(f.pred, tuple(rterm(a) for a in f.args))
    if isinstance(f, Not):
        return Not(rename_vars(f.body, mapping))
    if isinstance(f, BINARY):
        return type(f)(rename_vars(f.lhs, mapping), rename_vars(f.rhs, mapping))
    if isinstance(f, (BigAnd, BigOr)):
        return type(f)(tuple(rename_vars(p, mapping) for p in f.parts))
    if isinstance(f, QUANTIFIERS):
        return type(f)(
            mapping.get(f.var, f.var), f.sort, rename_vars(f.body, mapping)
        )
    raise TypeError(f"not a formula: {f!r}")


def term_sort(lang: Language, t: Term) -> str:
    """The sort of a term; raises SortError on any mismatch."""
    if isinstance(t, Var):
        if t.sort not in lang.sorts:
            raise SortError(f"variable {t.name} has unknown sort {t.sort!r}")
        return t.sort
    if isinstance(t, Const):
        sym = lang.constant.get(t.name)
        if sym is None:
            raise SortError(f"unknown constant {t.name!r}")
        return sym.sort
    if isinstance(t, App):
        sym = lang.function.get(t.func)
        if sym is None:
            raise SortError(f"unknown function {t.func!r}")
        if len(t.args) != sym.arity:
            raise SortError(
                f"{t.func} expects {sym.arity} arguments, got {len(t.args)}"
            )
        for arg, want in zip(t.args, sym.arg_sorts):
            got = term_sort(lang, arg)
            if got != want:
                raise SortError(
                    f"argument of {t.func} has sort {got}, expected {want}"
                )
        return sym.result_sort
    raise TypeError(f"not a term: {t!r}")


def sort_check(lang: Language, f: Formula) -> dict[str, str]:
    """Check f is well-sorted over lang; return its free variables."""
    if isinstance(f, Eq):
        ls = term_sort(lang, f.lhs)
        rs = term_sort(lang, f.rhs)
        if ls != rs:
            raise SortError(f"equality between sorts {ls} and {rs}")
    elif isinstance(f, Rel):
        sym = lang.predicate.get(f.pred)
        if sym is None:
            raise SortError(f"unknown predicate {f.pred!r}")
        if len(f.args) != sym.arity:
            raise SortError(
                f"{f.pred} expects {sym.arity} arguments, got {len(f.args)}"
            )
        for arg, want in zip(f.args, sym.arg_sorts):
            got = term_sort(lang, arg)
            if got != want:
                raise SortError(
                    f"argument of {f.pred} has sort {got}, expected {want}"
                )
    elif isinstance(f, Not):
        sort_check(lang, f.body)
    elif isinstance(f, BINARY):
        sort_check(lang, f.lhs)
        sort_check(lang, f.rhs)
    elif isinstance(f, (BigAnd, BigOr)):
        for p in f.parts:
            sort_check(lang, p)
    elif isinstance(f, QUANTIFIERS):
        if f.sort not in lang.sorts:
            raise SortError(f"quantifier over unknown sort {f.sort!r}")
        for name, sort in free_vars(f.body).items():
            if name == f.var and sort != f.sort:
                raise SortError(
                    f"bound variable {f.var} used at sort {sort}, "
                    f"quantified at {f.sort}"
                )
        sort_check(lang, f.body)
    else:
        raise TypeError(f"not a formula: {f!r}")
    return free_vars(f)


def quantifier_depth(f: Formula) -> int:
    if isinstance(f, (Eq, Rel)):
        return 0
    if isinstance(f, Not):
        return quantifier_depth(f.body)
    if isinstance(f, BINARY):
        return max(quantifier_depth(f.lhs), quantifier_depth(f.rhs))
    if isinstance(f, (BigAnd, BigOr)):
        return max(quantifier_depth(p) for p in f.parts)
    if isinstance(f, QUANTIFIERS):
        return 1 + quantifier_depth(f.body)
    raise TypeError(f"not a formula: {f!r}")


class FreshNames:
    """Generator of reserved fresh variable names like ``x#1``, ``x#2``."""

    def __init__(self, stem: str = "x") -> None:
        self.stem = stem
        self.counter = 0

    def next(self) -> str:
        self.counter += 1
        return f"{self.stem}{RESERVED_CHAR}{self.counter}"
