"""Normal forms: atom unnesting and prenex form.

Unnesting rewrites every atom into one of the shapes P(x̄), f(x̄) = x₀,
x = y, x = c by naming subterms with fresh existential variables; the
translation of interpretation codes is defined on exactly these shapes.
Prenex form pulls all quantifiers to an outer prefix after eliminating
implications and biconditionals.  Both transforms preserve truth over every
(nonempty-sorted) finite structure; fresh names use the reserved ``#``
namespace, so they never collide with parser-accepted input.
"""

from __future__ import annotations

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
    QUANTIFIERS,
    Rel,
    RESERVED_CHAR,
    Term,
    Var,
    conj,
    exists_many,
    free_vars,
    subformulas,
    term_vars,
)


def _atom_shape(f: Formula) -> str | None:
    """The unnested shape of an atom, or None if it is nested.

    Accepted shapes (both orientations of the equations): "rel" P(x̄),
    "eq-var" x = y, "eq-const" x = c, "eq-func" f(x̄) = x₀.
    """
    if isinstance(f, Rel):
        if all(isinstance(a, Var) for a in f.args):
            return "rel"
        return None
    if isinstance(f, Eq):
        lhs, rhs = f.lhs, f.rhs
        if isinstance(lhs, Var) and isinstance(rhs, Var):
            return "eq-var"
        if isinstance(lhs, Var) and isinstance(rhs, Const):
            return "eq-const"
        if isinstance(lhs, Const) and isinstance(rhs, Var):
            return "eq-const"
        for a, b in ((lhs, rhs), (rhs, lhs)):
            if (
                isinstance(a, App)
                and isinstance(b, Var)
                and all(isinstance(x, Var) for x in a.args)
            ):
                return "eq-func"
        return None
    return None


def is_unnested(f: Formula) -> bool:
    """True when every atom of f has an unnested shape."""
    return all(
        _atom_shape(g) is not None
        for g in subformulas(f)
        if isinstance(g, (Eq, Rel))
    )


def all_var_names(f: Formula) -> set[str]:
    """Every variable name occurring in f, free or bound."""
    names: set[str] = set()
    for g in subformulas(f):
        if isinstance(g, (Eq,)):
            names |= set(term_vars(g.lhs)) | set(term_vars(g.rhs))
        elif isinstance(g, Rel):
            for a in g.args:
                names |= set(term_vars(a))
        elif isinstance(g, QUANTIFIERS):
            names.add(g.var)
    return names


class _NamePool:
    """Fresh ``stem#k`` names skipping anything already in use."""

    def __init__(self, used: set[str]) -> None:
        self.used = set(used)
        self.counters: dict[str, int] = {}

    def fresh(self, stem: str) -> str:
        k = self.counters.get(stem, 0)
        while True:
            k += 1
            name = f"{stem}{RESERVED_CHAR}{k}"
            if name not in self.used:
                self.counters[stem] = k
                self.used.add(name)
                return name


def unnest(f: Formula, lang: Language) -> Formula:
    """Rewrite f so that every atom is unnested; equivalent to f.

    Subterms are named left-to-right with existentially quantified fresh
    variables ``u#k``; already-unnested atoms are returned unchanged.
    """
    pool = _NamePool(all_var_names(f))

    def flatten(
        t: Term, conjs: list[Formula], block: list[tuple[str, str]]
    ) -> Var:
        if isinstance(t, Var):
            return t
        if isinstance(t, Const):
            sort = lang.constant[t.name].sort
            v = Var(pool.fresh("u"), sort)
            block.append((v.name, sort))
            conjs.append(Eq(v, t))
            return v
        args = tuple(flatten(a, conjs, block) for a in t.args)
        sort = lang.function[t.func].result_sort
        v = Var(pool.fresh("u"), sort)
        block.append((v.name, sort))
        conjs.append(Eq(App(t.func, args), v))
        return v

    def atom(g: Formula) -> Formula:
        if _atom_shape(g) is not None:
            return g
        conjs: list[Formula] = []
        block: list[tuple[str, str]] = []
        if isinstance(g, Rel):
            args = tuple(flatten(a, conjs, block) for a in g.args)
            conjs.append(Rel(g.pred, args))
            return exists_many(block, conj(conjs))
        lhs, rhs = g.lhs, g.rhs
        # Canonical orientations: f(x̄) = x₀ and x = c.
        if isinstance(rhs, App) and not isinstance(lhs, App):
            lhs, rhs = rhs, lhs
        if isinstance(lhs, Const) and not isinstance(rhs, Const):
            lhs, rhs = rhs, lhs
        if isinstance(lhs, App):
            args = tuple(flatten(a, conjs, block) for a in lhs.args)
            right = flatten(rhs, conjs, block)
            conjs.append(Eq(App(lhs.func, args), right))
        else:
            # both sides constants: name them with one shared variable
            sort = lang.constant[lhs.name].sort
            v = Var(pool.fresh("u"), sort)
            block.append((v.name, sort))
            conjs.extend((Eq(v, lhs), Eq(v, rhs)))
        return exists_many(block, conj(conjs))

    def walk(g: Formula) -> Formula:
        if isinstance(g, (Eq, Rel)):
            return atom(g)
        if isinstance(g, Not):
            return Not(walk(g.body))
        if isinstance(g, (And, Or, Implies, Iff)):
            return type(g)(walk(g.lhs), walk(g.rhs))
        if isinstance(g, (BigAnd, BigOr)):
            return type(g)(tuple(walk(p) for p in g.parts))
        if isinstance(g, QUANTIFIERS):
            return type(g)(g.var, g.sort, walk(g.body))
        raise TypeError(f"not a formula: {g!r}")

    return walk(f)


def eliminate_implications(f: Formula) -> Formula:
    """Replace -> and <-> by their and/or/not expansions."""
    if isinstance(f, (Eq, Rel)):
        return f
    if isinstance(f, Not):
        return Not(eliminate_implications(f.body))
    if isinstance(f, Implies):
        return Or(
            Not(eliminate_implications(f.lhs)), eliminate_implications(f.rhs)
        )
    if isinstance(f, Iff):
        lhs = eliminate_implications(f.lhs)
        rhs = eliminate_implications(f.rhs)
        return And(Or(Not(lhs), rhs), Or(Not(rhs), lhs))
    if isinstance(f, (And, Or)):
        return type(f)(
            eliminate_implications(f.lhs), eliminate_implications(f.rhs)
        )
    if isinstance(f, (BigAnd, BigOr)):
        return type(f)(tuple(eliminate_implications(p) for p in f.parts))
    if isinstance(f, QUANTIFIERS):
        return type(f)(f.var, f.sort, eliminate_implications(f.body))
    raise TypeError(f"not a formula: {f!r}")


def _freshen_bound(f: Formula, pool: _NamePool) -> Formula:
    """Give every bound variable a globally unique fresh name."""

    def rterm(t: Term, env: dict[str, str]) -> Term:
        if isinstance(t, Var):
            return Var(env.get(t.name, t.name), t.sort)
        if isinstance(t, App):
            return App(t.func, tuple(rterm(a, env) for a in t.args))
        return t

    def walk(g: Formula, env: dict[str, str]) -> Formula:
        if isinstance(g, Eq):
            return Eq(rterm(g.lhs, env), rterm(g.rhs, env))
        if isinstance(g, Rel):
            return Rel(g.pred, tuple(rterm(a, env) for a in g.args))
        if isinstance(g, Not):
            return Not(walk(g.body, env))
        if isinstance(g, (And, Or, Implies, Iff)):
            return type(g)(walk(g.lhs, env), walk(g.rhs, env))
        if isinstance(g, (BigAnd, BigOr)):
            return type(g)(tuple(walk(p, env) for p in g.parts))
        if isinstance(g, QUANTIFIERS):
            new = pool.fresh(g.var.split(RESERVED_CHAR, 1)[0] or "v")
            return type(g)(new, g.sort, walk(g.body, {**env, g.var: new}))
        raise TypeError(f"not a formula: {g!r}")

    return walk(f, {})


def prenex(f: Formula) -> Formula:
    """Equivalent formula with all quantifiers in an outer prefix.

    Implications and biconditionals are eliminated first (they flip
    quantifier polarity); bound variables are renamed apart, so the
    standard pull-out laws apply without capture.  A quantifier-free
    input is returned unchanged.
    """
    if not any(isinstance(g, QUANTIFIERS) for g in subformulas(f)):
        return f
    g = eliminate_implications(f)
    g = _freshen_bound(g, _NamePool(all_var_names(g) | set(free_vars(g))))

    def pull(h: Formula) -> tuple[list[tuple[type, str, str]], Formula]:
        if isinstance(h, (Eq, Rel)):
            return [], h
        if isinstance(h, Not):
            prefix, matrix = pull(h.body)
            flipped = [
                (Exists if q is Forall else Forall, v, s)
                for q, v, s in prefix
            ]
            return flipped, Not(matrix)
        if isinstance(h, (And, Or)):
            pl, ml = pull(h.lhs)
            pr, mr = pull(h.rhs)
            return pl + pr, type(h)(ml, mr)
        if isinstance(h, (BigAnd, BigOr)):
            prefix = []
            matrices = []
            for p in h.parts:
                pp, mp = pull(p)
                prefix += pp
                matrices.append(mp)
            return prefix, type(h)(tuple(matrices))
        if isinstance(h, QUANTIFIERS):
            prefix, matrix = pull(h.body)
            return [(type(h), h.var, h.sort)] + prefix, matrix
        raise TypeError(f"not a formula: {h!r}")

    prefix, matrix = pull(g)
    out = matrix
    for q, v, s in reversed(prefix):
        out = q(v, s, out)
    return out
