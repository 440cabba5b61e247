"""Interpretation codes: translation, admissibility sentences, composition.

A code Γ describes how to carve a model of the target language out of
n-tuples of a model of the source language: a domain formula U over one
n-block, an equivalence formula E over two n-blocks, and one member formula
per target symbol.  Member formulas use the canonical variables ``x{i}_{j}``
(j-th coordinate of block i) and ``y{j}`` (parameters); for a function
symbol the result block comes last, after the argument blocks.

Translation maps a target-language formula to a source-language formula by
splitting every variable v into the block ``v#1`` .. ``v#n`` and replacing
atoms by the member formulas; translated parameters are ``#p1`` .. ``#pk``
until a user-facing wrapper (regular translation, Θ, σ) renames them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .norms import _NamePool, all_var_names, is_unnested, unnest
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
    forall_many,
    rename_vars,
    sort_check,
    substitute,
)


class CodeError(Exception):
    """An interpretation code or a use of one is malformed."""


# Instantiated member formulas and Θ sentences, per code identity.  Reusing
# the same formula objects across calls lets evaluator-side identity caches
# (plans, free-variable sets, memo tables) stay warm when one code is checked
# against many parameter tuples.  Codes are treated as immutable once built.
_CODE_CACHE: dict[int, tuple["InterpretationCode", dict[tuple, object]]] = {}


def _code_cached(code: "InterpretationCode", key: tuple, build):
    entry = _CODE_CACHE.get(id(code))
    if entry is None or entry[0] is not code:
        entry = (code, {})
        _CODE_CACHE[id(code)] = entry
    got = entry[1].get(key)
    if got is None:
        got = build()
        entry[1][key] = got
    return got


def block_var(i: int, j: int) -> str:
    """Canonical name of coordinate j of block i."""
    return f"x{i}_{j}"


def param_var(j: int) -> str:
    """Canonical name of the j-th parameter."""
    return f"y{j}"


def trans_param(j: int) -> str:
    """Reserved parameter name used in raw translations."""
    return f"{RESERVED_CHAR}p{j}"


def rename_bound_away(f: Formula, forbidden: set[str]) -> Formula:
    """Rename bound variables whose names lie in ``forbidden``.

    Substitution and free-variable renaming are capture-raising; this
    pre-pass makes them safe when target names might shadow a binder.
    """
    binders = {g.var for g in _quantifiers(f)}
    if not (binders & forbidden):
        return f
    pool = _NamePool(all_var_names(f) | forbidden)

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
            env = dict(env)
            if g.var in forbidden:
                new = pool.fresh("r")
                env[g.var] = new
            else:
                env.pop(g.var, None)
                new = g.var
            return type(g)(new, g.sort, walk(g.body, env))
        raise TypeError(f"not a formula: {g!r}")

    return walk(f, {})


def _quantifiers(f: Formula):
    from .syntax import subformulas

    return (g for g in subformulas(f) if isinstance(g, QUANTIFIERS))


@dataclass
class InterpretationCode:
    """A code Γ for interpreting target-language models in source models."""

    source_lang: Language
    target_lang: Language
    dim: int
    dim_par: int
    domain: Formula
    equiv: Formula
    members: dict[str, Formula] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.source_lang.is_one_sorted:
            raise CodeError("source language must be one-sorted")
        if not self.target_lang.is_one_sorted:
            raise CodeError("target language must be one-sorted")
        if self.dim < 1:
            raise CodeError("dimension must be positive")
        if self.dim_par < 0:
            raise CodeError("parameter arity must be non-negative")
        self.members = dict(self.members)
        want = self.target_lang.symbol_names()
        got = set(self.members)
        if got != want:
            missing = sorted(want - got)
            extra = sorted(got - want)
            raise CodeError(
                f"member formulas mismatch: missing {missing}, extra {extra}"
            )
        self._check_member("U", self.domain, 1)
        self._check_member("E", self.equiv, 2)
        for name, f in self.members.items():
            self._check_member(name, f, self.blocks_for(name))

    def blocks_for(self, symbol: str) -> int:
        """Number of canonical blocks in the member formula for symbol."""
        lang = self.target_lang
        if symbol in lang.predicate:
            return lang.predicate[symbol].arity
        if symbol in lang.function:
            return lang.function[symbol].arity + 1
        if symbol in lang.constant:
            return 1
        raise CodeError(f"unknown target symbol {symbol!r}")

    def _check_member(self, label: str, f: Formula, blocks: int) -> None:
        allowed = {
            block_var(i, j)
            for i in range(1, blocks + 1)
            for j in range(1, self.dim + 1)
        } | {param_var(j) for j in range(1, self.dim_par + 1)}
        try:
            fv = sort_check(self.source_lang, f)
        except Exception as exc:
            raise CodeError(f"member {label!r}: {exc}") from exc
        stray = set(fv) - allowed
        if stray:
            raise CodeError(
                f"member {label!r} uses non-canonical variables "
                f"{sorted(stray)} (blocks={blocks}, dim={self.dim}, "
                f"dim_par={self.dim_par})"
            )

    @property
    def source_sort(self) -> str:
        return self.source_lang.only_sort

    def param_names(self) -> tuple[str, ...]:
        return tuple(param_var(j) for j in range(1, self.dim_par + 1))

    def block_names(self, i: int) -> tuple[str, ...]:
        return tuple(block_var(i, j) for j in range(1, self.dim + 1))

    def instantiate(
        self,
        f: Formula,
        blocks: Sequence[Sequence[str]],
        params: Sequence[str],
    ) -> Formula:
        """Substitute actual variable names for the canonical ones."""
        if len(params) != self.dim_par:
            raise CodeError(
                f"expected {self.dim_par} parameters, got {len(params)}"
            )
        s = self.source_sort
        mapping: dict[str, Term] = {}
        for i, blk in enumerate(blocks, start=1):
            if len(blk) != self.dim:
                raise CodeError(
                    f"block {i} has {len(blk)} names, dimension is {self.dim}"
                )
            for j, name in enumerate(blk, start=1):
                mapping[block_var(i, j)] = Var(name, s)
        for j, name in enumerate(params, start=1):
            mapping[param_var(j)] = Var(name, s)
        targets = {t.name for t in mapping.values()}
        return substitute(rename_bound_away(f, targets), mapping)

    def domain_at(self, block: Sequence[str], params: Sequence[str]) -> Formula:
        key = ("U", tuple(block), tuple(params))
        return _code_cached(
            self, key, lambda: self.instantiate(self.domain, [block], params)
        )

    def equiv_at(
        self, a: Sequence[str], b: Sequence[str], params: Sequence[str]
    ) -> Formula:
        key = ("E", tuple(a), tuple(b), tuple(params))
        return _code_cached(
            self, key, lambda: self.instantiate(self.equiv, [a, b], params)
        )

    def member_at(
        self, symbol: str, blocks: Sequence[Sequence[str]], params: Sequence[str]
    ) -> Formula:
        if len(blocks) != self.blocks_for(symbol):
            raise CodeError(
                f"member {symbol!r} takes {self.blocks_for(symbol)} blocks, "
                f"got {len(blocks)}"
            )
        key = ("M", symbol, tuple(map(tuple, blocks)), tuple(params))
        return _code_cached(
            self,
            key,
            lambda: self.instantiate(self.members[symbol], blocks, params),
        )


def identity_code(lang: Language) -> InterpretationCode:
    """The dimension-1, parameter-free code of a language in itself."""
    s = lang.only_sort
    x = Var(block_var(1, 1), s)
    members: dict[str, Formula] = {}
    for p in lang.predicates:
        members[p.name] = Rel(
            p.name, tuple(Var(block_var(i, 1), s) for i in range(1, p.arity + 1))
        )
    for f in lang.functions:
        args = tuple(Var(block_var(i, 1), s) for i in range(1, f.arity + 1))
        members[f.name] = Eq(App(f.name, args), Var(block_var(f.arity + 1, 1), s))
    for c in lang.constants:
        members[c.name] = Eq(x, Const(c.name))
    return InterpretationCode(
        source_lang=lang,
        target_lang=lang,
        dim=1,
        dim_par=0,
        domain=Eq(x, x),
        equiv=Eq(x, Var(block_var(2, 1), s)),
        members=members,
    )


# ---------------------------------------------------------------------------
# Translation


def translate_formula(
    f: Formula,
    code: InterpretationCode,
    context: Sequence[str] | None = None,
) -> Formula:
    """The Γ-translation of a target-language formula.

    Every variable v becomes the source block ``v#1`` .. ``v#n``; atoms map
    to the code's member formulas; quantifiers relativize to U; one U
    conjunct per free variable of f is appended at the end.  The result's
    free variables are the blocks of f's free variables plus the reserved
    parameters ``#p1`` .. ``#pk``.

    ``context`` widens the free-variable list the U conjuncts cover: a
    formula translated as a member of a composite code must constrain every
    block coordinate, including those it happens not to mention.
    """
    fv = sort_check(code.target_lang, f)
    if context is None:
        context = list(fv)
    else:
        context = list(context)
        missing = set(fv) - set(context)
        if missing:
            raise CodeError(
                f"context omits free variables {sorted(missing)}"
            )
    if not is_unnested(f):
        f = unnest(f, code.target_lang)
    n = code.dim
    s = code.source_sort
    params = [trans_param(j) for j in range(1, code.dim_par + 1)]

    def block(v: str) -> list[str]:
        return [f"{v}{RESERVED_CHAR}{l}" for l in range(1, n + 1)]

    def block_pairs(v: str) -> list[tuple[str, str]]:
        return [(name, s) for name in block(v)]

    def u_of(v: str) -> Formula:
        return code.domain_at(block(v), params)

    def walk(g: Formula) -> Formula:
        if isinstance(g, Rel):
            if g.pred not in code.members:
                raise CodeError(f"no member formula for predicate {g.pred!r}")
            return code.member_at(
                g.pred, [block(a.name) for a in g.args], params
            )
        if isinstance(g, Eq):
            lhs, rhs = g.lhs, g.rhs
            if isinstance(rhs, App) and not isinstance(lhs, App):
                lhs, rhs = rhs, lhs
            if isinstance(lhs, Const) and isinstance(rhs, Var):
                lhs, rhs = rhs, lhs
            if isinstance(lhs, Var) and isinstance(rhs, Var):
                return code.equiv_at(block(lhs.name), block(rhs.name), params)
            if isinstance(lhs, Var) and isinstance(rhs, Const):
                return code.member_at(rhs.name, [block(lhs.name)], params)
            if isinstance(lhs, App) and isinstance(rhs, Var):
                blocks = [block(a.name) for a in lhs.args] + [block(rhs.name)]
                return code.member_at(lhs.func, blocks, params)
            raise CodeError(f"atom not unnested: {g}")
        if isinstance(g, Not):
            return Not(walk(g.body))
        if isinstance(g, (And, Or, Implies, Iff)):
            return type(g)(walk(g.lhs), walk(g.rhs))
        if isinstance(g, (BigAnd, BigOr)):
            return type(g)(tuple(walk(p) for p in g.parts))
        if isinstance(g, Exists):
            return exists_many(
                block_pairs(g.var), And(u_of(g.var), walk(g.body))
            )
        if isinstance(g, Forall):
            return forall_many(
                block_pairs(g.var), Implies(u_of(g.var), walk(g.body))
            )
        raise TypeError(f"not a formula: {g!r}")

    core = walk(f)
    return conj([core] + [u_of(v) for v in context])


def translate_sentence_regular(
    s: Formula,
    code: InterpretationCode,
    phi: Formula,
    exists_variant: bool = False,
) -> Formula:
    """The parameter-closed translation ∀ȳ(φ(ȳ) → s_Γ(ȳ)).

    ``phi`` is a source-language formula over the user-facing parameter
    names ``y1`` .. ``yk``; with ``exists_variant`` the sentence becomes
    ∃ȳ(φ(ȳ) ∧ s_Γ(ȳ)) instead.
    """
    if sort_check(code.target_lang, s):
        raise CodeError("regular translation needs a sentence (no free vars)")
    params = code.param_names()
    phi_fv = sort_check(code.source_lang, phi)
    stray = set(phi_fv) - set(params)
    if stray:
        raise CodeError(
            f"phi must only use the parameter block {list(params)}, "
            f"found {sorted(stray)}"
        )
    g = translate_formula(s, code)
    g = rename_bound_away(g, set(params))
    g = rename_vars(
        g, {trans_param(j): param_var(j) for j in range(1, code.dim_par + 1)}
    )
    sort = code.source_sort
    block = [(name, sort) for name in params]
    if exists_variant:
        return exists_many(block, And(phi, g))
    return forall_many(block, Implies(phi, g))


# ---------------------------------------------------------------------------
# Admissibility


def _ublock(i: int, n: int) -> list[str]:
    return [f"{RESERVED_CHAR}u{i}_{j}" for j in range(1, n + 1)]


def _vblock(i: int, n: int) -> list[str]:
    return [f"{RESERVED_CHAR}v{i}_{j}" for j in range(1, n + 1)]


def admissibility_conditions(
    code: InterpretationCode, params: Sequence[str] | None = None
) -> list[Formula]:
    """The admissibility sentences for the code, parameter block free.

    In order: domain nonemptiness; E reflexive/symmetric/transitive on U;
    per constant, existence and uniqueness-mod-E; per function, totality
    and congruence; per predicate, congruence.
    """
    if params is None:
        params = code.param_names()
    params = list(params)
    if len(params) != code.dim_par:
        raise CodeError(
            f"expected {code.dim_par} parameter names, got {len(params)}"
        )
    n = code.dim
    s = code.source_sort

    def pairs(*names: Sequence[str]) -> list[tuple[str, str]]:
        return [(nm, s) for blk in names for nm in blk]

    u1, u2, u3 = _ublock(1, n), _ublock(2, n), _ublock(3, n)
    U = lambda blk: code.domain_at(blk, params)  # noqa: E731
    E = lambda a, b: code.equiv_at(a, b, params)  # noqa: E731

    out: list[Formula] = [
        exists_many(pairs(u1), U(u1)),
        forall_many(pairs(u1), Implies(U(u1), E(u1, u1))),
        forall_many(
            pairs(u1, u2),
            Implies(conj([U(u1), U(u2), E(u1, u2)]), E(u2, u1)),
        ),
        forall_many(
            pairs(u1, u2, u3),
            Implies(
                conj([U(u1), U(u2), U(u3), E(u1, u2), E(u2, u3)]),
                E(u1, u3),
            ),
        ),
    ]
    for c in code.target_lang.constants:
        c_at = lambda blk: code.member_at(c.name, [blk], params)  # noqa: E731
        out.append(exists_many(pairs(u1), And(U(u1), c_at(u1))))
        out.append(
            forall_many(
                pairs(u1, u2),
                Implies(
                    conj([U(u1), U(u2), c_at(u1), c_at(u2)]), E(u1, u2)
                ),
            )
        )
    for f in code.target_lang.functions:
        m = f.arity
        args = [_ublock(i, n) for i in range(1, m + 1)]
        res = _ublock(m + 1, n)
        f_at = lambda blks: code.member_at(f.name, blks, params)  # noqa: E731
        total = exists_many(pairs(res), And(U(res), f_at(args + [res])))
        if args:
            total = forall_many(
                pairs(*args), Implies(conj([U(b) for b in args]), total)
            )
        out.append(total)
        args2 = [_vblock(i, n) for i in range(1, m + 1)]
        res2 = _vblock(m + 1, n)
        guard = (
            [U(b) for b in args + [res]]
            + [U(b) for b in args2 + [res2]]
            + [E(a, b) for a, b in zip(args, args2)]
            + [f_at(args + [res]), f_at(args2 + [res2])]
        )
        out.append(
            forall_many(
                pairs(*(args + [res] + args2 + [res2])),
                Implies(conj(guard), E(res, res2)),
            )
        )
    for p in code.target_lang.predicates:
        q = p.arity
        args = [_ublock(i, n) for i in range(1, q + 1)]
        args2 = [_vblock(i, n) for i in range(1, q + 1)]
        p_at = lambda blks: code.member_at(p.name, blks, params)  # noqa: E731
        body = Iff(p_at(args), p_at(args2))
        if args:
            guard = (
                [U(b) for b in args]
                + [U(b) for b in args2]
                + [E(a, b) for a, b in zip(args, args2)]
            )
            out.append(
                forall_many(pairs(*(args + args2)), Implies(conj(guard), body))
            )
        else:
            out.append(body)
    return out


def theta(
    code: InterpretationCode, params: Sequence[str] | None = None
) -> Formula:
    """Θ_Γ: one formula equivalent to all admissibility conditions."""
    key = ("theta", None if params is None else tuple(params))
    return _code_cached(
        code, key, lambda: conj(admissibility_conditions(code, params))
    )


# ---------------------------------------------------------------------------
# Composition


def compose(
    gamma: InterpretationCode, delta: InterpretationCode
) -> InterpretationCode:
    """The code Γ∘Δ: Γ's member formulas pushed through Δ's translation.

    dim Γ∘Δ = dim Γ · dim Δ and dim_par Γ∘Δ = dim_par Γ · dim Δ + dim_par Δ;
    canonical block coordinate (i, j) of Γ splits into Δ-blocks occupying
    coordinates (j-1)·dimΔ+1 .. j·dimΔ of composite block i, Γ's translated
    parameters fill the first dim_parΓ·dimΔ parameter slots, and Δ's own
    parameters come last.
    """
    if gamma.source_lang != delta.target_lang:
        raise CodeError(
            "composition needs gamma's source language to equal "
            "delta's target language"
        )
    n1, k1 = gamma.dim, gamma.dim_par
    m, k2 = delta.dim, delta.dim_par

    def convert(f: Formula, blocks: int) -> Formula:
        # Translate in the member's full canonical context so every block
        # coordinate (and every parameter) picks up its U_Δ guard, whether
        # or not the formula happens to mention it.
        context = [
            block_var(i, j)
            for i in range(1, blocks + 1)
            for j in range(1, n1 + 1)
        ] + [param_var(j) for j in range(1, k1 + 1)]
        g = translate_formula(f, delta, context=context)
        mapping: dict[str, str] = {}
        for i in range(1, blocks + 1):
            for j in range(1, n1 + 1):
                for l in range(1, m + 1):
                    mapping[f"{block_var(i, j)}{RESERVED_CHAR}{l}"] = (
                        block_var(i, (j - 1) * m + l)
                    )
        for j in range(1, k1 + 1):
            for l in range(1, m + 1):
                mapping[f"{param_var(j)}{RESERVED_CHAR}{l}"] = (
                    param_var((j - 1) * m + l)
                )
        for j in range(1, k2 + 1):
            mapping[trans_param(j)] = param_var(k1 * m + j)
        g = rename_bound_away(g, set(mapping.values()))
        return rename_vars(g, mapping)

    return InterpretationCode(
        source_lang=delta.source_lang,
        target_lang=gamma.target_lang,
        dim=n1 * m,
        dim_par=k1 * m + k2,
        domain=convert(gamma.domain, 1),
        equiv=convert(gamma.equiv, 2),
        members={
            name: convert(f, gamma.blocks_for(name))
            for name, f in gamma.members.items()
        },
    )
