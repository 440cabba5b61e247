"""Verification of interpretations between finite structures.

Given a code Γ, an ambient structure b, and parameters, this module
builds the quotient structure U_Γ/E_Γ by definition chasing (every check
is an explicit enumeration, cross-checked against the evaluator on the
admissibility sentence Θ_Γ), searches for an isomorphism onto a claimed
target structure, spot-checks the translation biconditional on a formula
corpus, and assembles and verifies bi-interpretation witnesses: the
σ-parameter formulas, the θ-defined isomorphisms, and definability
transfer along the coordinate maps.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

from .codes import (
    InterpretationCode,
    block_var,
    compose,
    param_var,
    rename_bound_away,
    theta,
    trans_param,
    translate_formula,
)
from .models import (
    FiniteStructure,
    define_set,
    evaluate,
    evaluate_many,
    func_table,
    pred_table,
    structure_equal,
)
from .syntax import (
    App,
    Const,
    Eq,
    Exists,
    Formula,
    Iff,
    Implies,
    Rel,
    RESERVED_CHAR,
    Term,
    Var,
    conj,
    exists_many,
    forall_many,
    free_vars,
    rename_vars,
    sort_check,
    substitute,
)

ISO_CAP = 216
AUTOMORPHISM_CAP = 8  # |universe| bound for automorphism enumeration (8!)


class VerifyError(Exception):
    """A verification stage failed or was given inconsistent inputs."""


class AdmissibilityViolation(VerifyError):
    """An admissibility item fails; carries the 1-based item index."""

    def __init__(self, item: int, reason: str, witness: tuple):
        self.item = item
        self.reason = reason
        self.witness = witness
        super().__init__(
            f"admissibility item {item} fails ({reason}); witness {witness}"
        )


class EmptyDomain(AdmissibilityViolation):
    """U_Γ defines the empty set (admissibility item 1)."""

    def __init__(self):
        super().__init__(1, "empty domain", ())


class NoIsomorphism(VerifyError):
    """The quotient is not isomorphic to the claimed target."""


class TranslationMismatch(VerifyError):
    """The translation biconditional fails on a corpus formula."""

    def __init__(self, formula: Formula, assignment: tuple):
        self.formula = formula
        self.assignment = assignment
        super().__init__(
            f"translation biconditional fails for {formula} at {assignment}"
        )


class EmptyParameterSet(VerifyError):
    """The parameter formula of a regular interpretation defines ∅."""


class NotFunctional(VerifyError):
    def __init__(self, witness: tuple, reason: str):
        self.witness = witness
        super().__init__(f"theta relation is not functional ({reason}): {witness}")


class NotInjectiveOnClasses(VerifyError):
    def __init__(self, witness: tuple):
        self.witness = witness
        super().__init__(f"theta map identifies distinct classes: {witness}")


class NotSurjective(VerifyError):
    def __init__(self, witness: tuple):
        self.witness = witness
        super().__init__(f"theta map misses elements: {witness}")


class NotHomomorphic(VerifyError):
    def __init__(self, witness: tuple):
        self.witness = witness
        super().__init__(f"theta map does not preserve symbols: {witness}")


class UniverseTooLarge(VerifyError):
    """Isomorphism search refuses universes beyond ISO_CAP elements."""


# ---------------------------------------------------------------------------
# Admissibility item numbering (aligned with codes.admissibility_conditions)


def admissibility_index(code: InterpretationCode) -> dict[tuple, int]:
    """1-based item number per admissibility condition, by semantic label."""
    idx: dict[tuple, int] = {
        ("nonempty",): 1,
        ("reflexive",): 2,
        ("symmetric",): 3,
        ("transitive",): 4,
    }
    k = 5
    for c in code.target_lang.constants:
        idx[("constant", c.name, "exists")] = k
        idx[("constant", c.name, "unique")] = k + 1
        k += 2
    for f in code.target_lang.functions:
        idx[("function", f.name, "total")] = k
        idx[("function", f.name, "congruence")] = k + 1
        k += 2
    for p in code.target_lang.predicates:
        idx[("predicate", p.name)] = k
        k += 1
    return idx


# ---------------------------------------------------------------------------
# Witnesses


@dataclass
class InterpretationWitness:
    """The data certifying 𝔞 ≃ Γ(𝔟, p̄): quotient, classes, coordinate map.

    ``domain`` lists U_Γ(b, p̄) sorted; ``classes`` partitions it with each
    class sorted and classes ordered by their lexicographically least
    representative (the class representative); ``quotient`` is the induced
    target-language structure on class indices.  ``iso`` (class index →
    target element) and ``mu`` (domain tuple → target element) are filled
    in once an isomorphism with the target is found.
    """

    code: InterpretationCode
    structure: FiniteStructure
    params: tuple[int, ...]
    domain: tuple[tuple[int, ...], ...]
    classes: tuple[tuple[tuple[int, ...], ...], ...]
    class_of: dict[tuple[int, ...], int]
    quotient: FiniteStructure
    iso: tuple[int, ...] | None = None
    mu: dict[tuple[int, ...], int] | None = None
    _by_image: dict[int, list[tuple[int, ...]]] | None = field(
        default=None, repr=False
    )

    @property
    def reps(self) -> tuple[tuple[int, ...], ...]:
        return tuple(cls[0] for cls in self.classes)

    def preimages(self, element: int) -> list[tuple[int, ...]]:
        """μ⁻¹(element), sorted; requires the isomorphism stage."""
        if self.mu is None:
            raise VerifyError("witness has no coordinate map yet")
        if self._by_image is None:
            by: dict[int, list[tuple[int, ...]]] = {}
            for t in self.domain:
                by.setdefault(self.mu[t], []).append(t)
            self._by_image = by
        return self._by_image.get(element, [])


# ---------------------------------------------------------------------------
# Quotient construction (definition chasing + Θ cross-check)


def _param_env(code: InterpretationCode, params: Sequence[int]) -> dict[str, int]:
    return {param_var(j): params[j - 1] for j in range(1, code.dim_par + 1)}


def _with_all_vars(f: Formula, names: Sequence[str], sort: str) -> Formula:
    """Conjoin trivial equalities so every name in names occurs free."""
    fv = set(free_vars(f))
    extra = [Eq(Var(n, sort), Var(n, sort)) for n in names if n not in fv]
    return conj([f] + extra) if extra else f


def _blocks_of(row: tuple[int, ...], count: int, n: int) -> list[tuple[int, ...]]:
    return [row[i * n : (i + 1) * n] for i in range(count)]


def _flat(parts: Iterable[tuple[int, ...]]) -> tuple[int, ...]:
    out: list[int] = []
    for p in parts:
        out.extend(p)
    return tuple(out)


def _nested(fn, dims: Sequence[int]):
    if not dims:
        return fn(())
    return [
        _nested(lambda rest, i=i: fn((i,) + rest), dims[1:]) for i in range(dims[0])
    ]


def build_quotient(
    b: FiniteStructure,
    code: InterpretationCode,
    params: Sequence[int],
) -> InterpretationWitness:
    """The quotient structure U_Γ(b, p̄)/E_Γ with canonical representatives.

    Every admissibility item is checked by explicit enumeration; the
    outcome is then cross-checked against the evaluator's verdict on Θ_Γ,
    and any disagreement between the two routes raises VerifyError.
    """
    params = tuple(params)
    if b.lang != code.source_lang:
        raise VerifyError("structure is not over the code's source language")
    if len(params) != code.dim_par:
        raise VerifyError(
            f"expected {code.dim_par} parameters, got {len(params)}"
        )
    size = b.sizes[code.source_sort]
    for p in params:
        if not (0 <= p < size):
            raise VerifyError(f"parameter {p} outside the universe")
    violation: AdmissibilityViolation | None = None
    witness: InterpretationWitness | None = None
    try:
        witness = _semantic_quotient(b, code, params)
    except AdmissibilityViolation as exc:
        violation = exc
    theta_true = evaluate(b, theta(code), _param_env(code, params))
    if violation is None and not theta_true:
        raise VerifyError(
            "inconsistent routes: semantic checks pass but Θ_Γ is false"
        )
    if violation is not None:
        if theta_true:
            raise VerifyError(
                "inconsistent routes: Θ_Γ is true but semantic checks "
                f"found: {violation}"
            )
        raise violation
    assert witness is not None
    return witness


def _semantic_quotient(
    b: FiniteStructure,
    code: InterpretationCode,
    params: tuple[int, ...],
) -> InterpretationWitness:
    n = code.dim
    sort = code.source_sort
    penv = _param_env(code, params)
    pnames = code.param_names()
    items = admissibility_index(code)

    def ublock(i: int) -> list[str]:
        return list(code.block_names(i))

    def u_at(i: int) -> Formula:
        return code.domain_at(ublock(i), pnames)

    def rows_of(guards: list[Formula], blocks: int) -> set[tuple[int, ...]]:
        names = [block_var(i, j) for i in range(1, blocks + 1) for j in range(1, n + 1)]
        g = _with_all_vars(conj(guards), names, sort)
        return define_set(b, g, params=penv, result_vars=names)

    # Item 1: the domain.
    domain = sorted(rows_of([code.domain], 1))
    if not domain:
        raise EmptyDomain()

    # Items 2-4: E is an equivalence on U.
    e_rows = rows_of([u_at(1), u_at(2), code.equiv], 2)
    for t in domain:
        if t + t not in e_rows:
            raise AdmissibilityViolation(items[("reflexive",)], "E not reflexive", t)
    for row in e_rows:
        s, t = row[:n], row[n:]
        if t + s not in e_rows:
            raise AdmissibilityViolation(
                items[("symmetric",)], "E not symmetric", (s, t)
            )
    # Union-find over the (reflexive, symmetric) relation.
    parent = {t: t for t in domain}

    def find(t):
        while parent[t] != t:
            parent[t] = parent[parent[t]]
            t = parent[t]
        return t

    for row in e_rows:
        s, t = find(row[:n]), find(row[n:])
        if s != t:
            parent[max(s, t)] = min(s, t)
    groups: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
    for t in domain:
        groups.setdefault(find(t), []).append(t)
    classes = tuple(
        tuple(sorted(members)) for _, members in sorted(groups.items())
    )
    if len(e_rows) != sum(len(c) ** 2 for c in classes):
        # E is not transitively closed; hunt a concrete witness triple.
        for s, t, u in itertools.product(domain, repeat=3):
            if s + t in e_rows and t + u in e_rows and s + u not in e_rows:
                raise AdmissibilityViolation(
                    items[("transitive",)], "E not transitive", (s, t, u)
                )
        raise VerifyError("E row count inconsistent with classes")
    class_of = {t: k for k, cls in enumerate(classes) for t in cls}
    nclasses = len(classes)

    # Constants: nonempty, single class.
    const_values: dict[str, int] = {}
    for c in code.target_lang.constants:
        rows = sorted(rows_of([u_at(1), code.members[c.name]], 1))
        if not rows:
            raise AdmissibilityViolation(
                items[("constant", c.name, "exists")],
                f"constant {c.name} names nothing",
                (),
            )
        ks = {class_of[t] for t in rows}
        if len(ks) > 1:
            two = sorted(rows, key=class_of.__getitem__)
            raise AdmissibilityViolation(
                items[("constant", c.name, "unique")],
                f"constant {c.name} names several classes",
                (two[0], two[-1]),
            )
        const_values[c.name] = ks.pop()

    # Functions: total on U-tuples, single result class per argument class.
    func_tables: dict[str, object] = {}
    for f in code.target_lang.functions:
        r = f.arity
        guards = [u_at(i) for i in range(1, r + 2)] + [code.members[f.name]]
        rows = rows_of(guards, r + 1)
        by_combo: dict[tuple[int, ...], dict[int, tuple[int, ...]]] = {}
        seen_args: set[tuple[int, ...]] = set()
        for row in rows:
            blocks = _blocks_of(row, r + 1, n)
            combo = tuple(class_of[blk] for blk in blocks[:r])
            res_k = class_of[blocks[r]]
            seen_args.add(row[: r * n])
            hit = by_combo.setdefault(combo, {})
            hit.setdefault(res_k, row)
        for args in itertools.product(domain, repeat=r):
            if _flat(args) not in seen_args:
                raise AdmissibilityViolation(
                    items[("function", f.name, "total")],
                    f"function {f.name} undefined",
                    _flat(args),
                )
        table: dict[tuple[int, ...], int] = {}
        for combo, hits in by_combo.items():
            if len(hits) > 1:
                (k1, row1), (k2, row2) = sorted(hits.items())[:2]
                raise AdmissibilityViolation(
                    items[("function", f.name, "congruence")],
                    f"function {f.name} not well-defined on classes",
                    (row1, row2),
                )
            table[combo] = next(iter(hits))
        func_tables[f.name] = func_table(
            _nested(lambda combo: table[combo], [nclasses] * r), r
        )

    # Predicates: constant on class combinations.
    pred_tables: dict[str, object] = {}
    for p in code.target_lang.predicates:
        r = p.arity
        if r == 0:
            val = evaluate(b, code.members[p.name], penv)
            pred_tables[p.name] = pred_table([()] if val else [], 0)
            continue
        guards = [u_at(i) for i in range(1, r + 1)] + [code.members[p.name]]
        rows = rows_of(guards, r)
        per_combo: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
        for row in rows:
            combo = tuple(class_of[blk] for blk in _blocks_of(row, r, n))
            per_combo.setdefault(combo, []).append(row)
        for combo, hits in per_combo.items():
            full = 1
            for k in combo:
                full *= len(classes[k])
            if len(hits) != full:
                neg = next(
                    _flat(choice)
                    for choice in itertools.product(
                        *[classes[k] for k in combo]
                    )
                    if _flat(choice) not in rows
                )
                raise AdmissibilityViolation(
                    items[("predicate", p.name)],
                    f"predicate {p.name} not constant on classes",
                    (hits[0], neg),
                )
        pred_tables[p.name] = pred_table(sorted(per_combo), r)

    quotient = FiniteStructure(
        lang=code.target_lang,
        sizes={code.target_lang.only_sort: nclasses},
        functions=func_tables,
        predicates=pred_tables,
        constants=const_values,
    )
    return InterpretationWitness(
        code=code,
        structure=b,
        params=params,
        domain=tuple(domain),
        classes=classes,
        class_of=class_of,
        quotient=quotient,
    )


# ---------------------------------------------------------------------------
# Isomorphism search


def find_isomorphism(
    a: FiniteStructure, b: FiniteStructure
) -> tuple[int, ...] | None:
    """A symbol-preserving bijection a → b, or None.

    Deterministic: elements of a are mapped in index order, each to the
    least compatible element of b, so the first solution in lexicographic
    search order is returned.  Refuses universes beyond ISO_CAP.
    """
    if a.lang != b.lang:
        raise VerifyError("isomorphism search needs a shared language")
    if not a.lang.is_one_sorted:
        raise VerifyError("isomorphism search handles one-sorted structures")
    sort = a.lang.only_sort
    if max(a.sizes[sort], b.sizes[sort]) > ISO_CAP:
        raise UniverseTooLarge(
            f"universe exceeds the {ISO_CAP}-element isomorphism cap"
        )
    return next(_iso_search(a, b), None)


def _automorphisms(a: FiniteStructure) -> Iterator[tuple[int, ...]]:
    return _iso_search(a, a)


def _pred_rows(m: FiniteStructure, name: str) -> list[tuple[int, ...]] | None:
    """True tuples of a predicate, or None when enumeration is too big."""
    interp = m.predicates[name]
    if interp.dense:
        return list(interp.tuples)
    sym = m.lang.predicate[name]
    size = m.sizes[m.lang.only_sort]
    if size**sym.arity > 200_000:
        return None
    return [
        t
        for t in itertools.product(range(size), repeat=sym.arity)
        if interp.test(t)
    ]


def _init_colors(m: FiniteStructure) -> list[tuple]:
    size = m.sizes[m.lang.only_sort]
    sig: list[list] = [[] for _ in range(size)]
    for cname in sorted(m.lang.constant):
        for x in range(size):
            sig[x].append(int(m.constants[cname] == x))
    for pname in sorted(m.lang.predicate):
        sym = m.lang.predicate[pname]
        rows = _pred_rows(m, pname)
        if rows is None:
            continue
        counts = [[0] * size for _ in range(sym.arity)]
        for t in rows:
            for pos, x in enumerate(t):
                counts[pos][x] += 1
        for x in range(size):
            sig[x].extend(counts[pos][x] for pos in range(sym.arity))
    return [tuple(s) for s in sig]


def _round_colors(m: FiniteStructure, col: list[int]) -> list[tuple]:
    size = len(col)
    out: list[tuple] = []
    for x in range(size):
        sig: list = [col[x]]
        for fname in sorted(m.lang.function):
            sym = m.lang.function[fname]
            interp = m.functions[fname]
            if sym.arity == 1:
                sig.append(col[interp.lookup((x,))])
            elif sym.arity == 2:
                sig.append(col[interp.lookup((x, x))])
                left = Counter(col[interp.lookup((x, y))] for y in range(size))
                right = Counter(col[interp.lookup((y, x))] for y in range(size))
                sig.append(tuple(sorted(left.items())))
                sig.append(tuple(sorted(right.items())))
            # arity ≥ 3: skipped in the invariant; backtracking stays exact
        for pname in sorted(m.lang.predicate):
            if m.lang.predicate[pname].arity != 2:
                continue
            rows = _pred_rows(m, pname)
            if rows is None:
                continue
            left = Counter(col[t[1]] for t in rows if t[0] == x)
            right = Counter(col[t[0]] for t in rows if t[1] == x)
            sig.append(tuple(sorted(left.items())))
            sig.append(tuple(sorted(right.items())))
        out.append(tuple(sig))
    return out


def _joint_colors(
    a: FiniteStructure, b: FiniteStructure
) -> tuple[list[int], list[int]] | None:
    """Jointly refined invariant colors, or None when profiles diverge."""
    sig_a, sig_b = _init_colors(a), _init_colors(b)
    prev: tuple[list[int], list[int]] | None = None
    while True:
        ids = {s: i for i, s in enumerate(sorted(set(sig_a) | set(sig_b)))}
        col_a = [ids[s] for s in sig_a]
        col_b = [ids[s] for s in sig_b]
        if Counter(col_a) != Counter(col_b):
            return None
        if prev == (col_a, col_b):
            return col_a, col_b
        prev = (col_a, col_b)
        sig_a = _round_colors(a, col_a)
        sig_b = _round_colors(b, col_b)


def _result_index(
    m: FiniteStructure, fname: str
) -> dict[int, list[tuple[int, ...]]]:
    sym = m.lang.function[fname]
    size = m.sizes[m.lang.only_sort]
    interp = m.functions[fname]
    index: dict[int, list[tuple[int, ...]]] = {}
    for args in itertools.product(range(size), repeat=sym.arity):
        index.setdefault(interp.lookup(args), []).append(args)
    return index


def _iso_search(
    a: FiniteStructure, b: FiniteStructure
) -> Iterator[tuple[int, ...]]:
    sort = a.lang.only_sort
    size = a.sizes[sort]
    if size != b.sizes[sort]:
        return
    colors = _joint_colors(a, b)
    if colors is None:
        return
    col_a, col_b = colors
    by_color: dict[int, list[int]] = {}
    for y in range(size):
        by_color.setdefault(col_b[y], []).append(y)
    funcs = sorted(a.lang.function)
    preds = sorted(a.lang.predicate)
    small = all(
        size ** a.lang.function[f].arity <= 500_000 for f in funcs
    )
    res_index = (
        {f: _result_index(a, f) for f in funcs} if small else None
    )
    mapping = [-1] * size
    used = [False] * size

    def tuples_with(x: int, r: int, assigned: list[int]):
        for pos in range(r):
            for rest in itertools.product(assigned, repeat=r - 1):
                yield rest[:pos] + (x,) + rest[pos:]

    def consistent(x: int, y: int, assigned: list[int]) -> bool:
        for cname in a.lang.constant:
            ca, cb = a.constants[cname], b.constants[cname]
            if (ca == x) != (cb == y):
                return False
        for fname in funcs:
            sym = a.lang.function[fname]
            fa_i, fb_i = a.functions[fname], b.functions[fname]
            for args in tuples_with(x, sym.arity, assigned):
                fa = fa_i.lookup(args)
                fb = fb_i.lookup(tuple(mapping[z] for z in args))
                if mapping[fa] != -1:
                    if mapping[fa] != fb:
                        return False
                elif used[fb]:
                    return False
            if res_index is not None:
                for args in res_index[fname].get(x, ()):
                    if all(mapping[z] != -1 for z in args):
                        if fb_i.lookup(tuple(mapping[z] for z in args)) != y:
                            return False
        for pname in preds:
            sym = a.lang.predicate[pname]
            pa, pb = a.predicates[pname], b.predicates[pname]
            for args in tuples_with(x, sym.arity, assigned):
                if pa.test(args) != pb.test(tuple(mapping[z] for z in args)):
                    return False
        return True

    def full_check() -> bool:
        for fname in funcs:
            sym = a.lang.function[fname]
            fa_i, fb_i = a.functions[fname], b.functions[fname]
            for args in itertools.product(range(size), repeat=sym.arity):
                want = mapping[fa_i.lookup(args)]
                if fb_i.lookup(tuple(mapping[z] for z in args)) != want:
                    return False
        for pname in preds:
            sym = a.lang.predicate[pname]
            pa, pb = a.predicates[pname], b.predicates[pname]
            for args in itertools.product(range(size), repeat=sym.arity):
                if pa.test(args) != pb.test(tuple(mapping[z] for z in args)):
                    return False
        return True

    def extend(x: int, assigned: list[int]) -> Iterator[tuple[int, ...]]:
        if x == size:
            if full_check():
                yield tuple(mapping)
            return
        for y in by_color[col_a[x]]:
            if used[y]:
                continue
            mapping[x] = y
            used[y] = True
            assigned.append(x)
            if consistent(x, y, assigned):
                yield from extend(x + 1, assigned)
            assigned.pop()
            used[y] = False
            mapping[x] = -1

    yield from extend(0, [])


# ---------------------------------------------------------------------------
# Interpretation verification


def verify_interpretation(
    a: FiniteStructure,
    b: FiniteStructure,
    code: InterpretationCode,
    params: Sequence[int],
    corpus: Sequence[Formula] | None = None,
) -> InterpretationWitness:
    """Certify a ≃ Γ(b, p̄): quotient, isomorphism, coordinate map.

    With a corpus, the translation biconditional
    a ⊨ ψ(ā)  ⟺  b ⊨ ψ_Γ(b̄, p̄) is checked for every corpus formula ψ,
    every target tuple ā, and every preimage choice b̄.
    """
    if a.lang != code.target_lang:
        raise VerifyError("target structure is not over the code's target language")
    w = build_quotient(b, code, params)
    iso = find_isomorphism(w.quotient, a)
    if iso is None:
        raise NoIsomorphism(
            f"quotient ({len(w.classes)} classes) is not isomorphic "
            f"to the target ({a.sizes[a.lang.only_sort]} elements)"
        )
    mu = {t: iso[w.class_of[t]] for t in w.domain}
    w = replace(w, iso=iso, mu=mu)
    for psi in corpus or ():
        _check_translation(a, b, code, params, w, psi)
    return w


def _check_translation(
    a: FiniteStructure,
    b: FiniteStructure,
    code: InterpretationCode,
    params: tuple[int, ...],
    w: InterpretationWitness,
    psi: Formula,
) -> None:
    n = code.dim
    fvs = sorted(sort_check(a.lang, psi))
    penv = {trans_param(j): params[j - 1] for j in range(1, code.dim_par + 1)}
    translated = translate_formula(psi, code)
    if not fvs:
        want = evaluate(a, psi)
        got = evaluate(b, translated, penv)
        if got != want:
            raise TranslationMismatch(psi, ())
        return
    truths = define_set(a, _with_all_vars(psi, fvs, a.lang.only_sort),
                        result_vars=fvs)
    size = a.sizes[a.lang.only_sort]
    envs: list[dict[str, int]] = []
    keys: list[tuple[tuple[int, ...], tuple[tuple[int, ...], ...]]] = []
    for abar in itertools.product(range(size), repeat=len(fvs)):
        for combo in itertools.product(*[w.preimages(x) for x in abar]):
            env = dict(penv)
            for v, block in zip(fvs, combo):
                for l in range(1, n + 1):
                    env[f"{v}{RESERVED_CHAR}{l}"] = block[l - 1]
            envs.append(env)
            keys.append((abar, combo))
    got = evaluate_many(b, translated, envs)
    for (abar, combo), val in zip(keys, got):
        if val != (abar in truths):
            raise TranslationMismatch(psi, (abar, combo))


# ---------------------------------------------------------------------------
# Regular interpretations


@dataclass
class RegularReport:
    """Per-parameter outcomes of a regular interpretation check."""

    parameters: tuple[tuple[int, ...], ...]
    statuses: tuple[str, ...]
    witnesses: dict[tuple[int, ...], InterpretationWitness]
    ok: bool

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "parameters": [list(p) for p in self.parameters],
            "statuses": list(self.statuses),
        }


def verify_regular(
    a: FiniteStructure,
    b: FiniteStructure,
    code: InterpretationCode,
    phi: Formula,
    corpus: Sequence[Formula] | None = None,
) -> RegularReport:
    """Verify a ≃ Γ(b, p̄) for every p̄ satisfying the parameter formula."""
    pnames = list(code.param_names())
    fv = sort_check(code.source_lang, phi)
    stray = set(fv) - set(pnames)
    if stray:
        raise VerifyError(
            f"parameter formula must use only {pnames}, found {sorted(stray)}"
        )
    if pnames:
        pset = sorted(
            define_set(
                b,
                _with_all_vars(phi, pnames, code.source_sort),
                result_vars=pnames,
            )
        )
    else:
        pset = [()] if evaluate(b, phi) else []
    if not pset:
        raise EmptyParameterSet("the parameter formula defines the empty set")
    statuses: list[str] = []
    witnesses: dict[tuple[int, ...], InterpretationWitness] = {}
    for p in pset:
        try:
            witnesses[p] = verify_interpretation(a, b, code, p, corpus=corpus)
            statuses.append("pass")
        except VerifyError as exc:
            statuses.append(f"{type(exc).__name__}: {exc}")
    return RegularReport(
        parameters=tuple(pset),
        statuses=tuple(statuses),
        witnesses=witnesses,
        ok=all(s == "pass" for s in statuses),
    )


# ---------------------------------------------------------------------------
# Bi-interpretation


@dataclass
class BiInterpretationSpec:
    """Codes, parameters, and θ-formulas claiming a ≃ b bi-interpretation.

    gamma interprets a in b with params_gamma (from b); delta interprets
    b in a with params_delta (from a).  theta_a is an L(a)-formula over
    u1..uN, x and parameter names y1..y_{kΓ·mΔ}, z1..z_{kΔ} defining, at
    the assembled parameters p̄*, an isomorphism Γ∘Δ(a, p̄*) → a; theta_b
    plays the symmetric role over b.
    """

    gamma: InterpretationCode
    delta: InterpretationCode
    params_gamma: tuple[int, ...]
    params_delta: tuple[int, ...]
    theta_a: Formula
    theta_b: Formula


def assemble_bi_parameters(
    gamma: InterpretationCode,
    params_gamma: Sequence[int],
    delta: InterpretationCode,
    params_delta: Sequence[int],
    witness_gamma: InterpretationWitness,
    witness_delta: InterpretationWitness,
    validate: bool = True,
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """p̄* = (p̄₀, q̄) and q̄* = (q̄₀, p̄) with lex-least coordinate preimages.

    With ``validate``, when a parameter has several preimages the composite
    quotient is rebuilt at an alternative choice and required to be
    structurally equal to the canonical one.
    """
    p0, p_alt = _preimage_block(params_gamma, witness_delta)
    q0, q_alt = _preimage_block(params_delta, witness_gamma)
    p_star = p0 + tuple(params_delta)
    q_star = q0 + tuple(params_gamma)
    if validate:
        if p_alt is not None:
            _check_same_quotient(
                compose(gamma, delta),
                witness_delta.structure,
                p_star,
                p_alt + tuple(params_delta),
            )
        if q_alt is not None:
            _check_same_quotient(
                compose(delta, gamma),
                witness_gamma.structure,
                q_star,
                q_alt + tuple(params_gamma),
            )
    return p_star, q_star


def _preimage_block(
    params: Sequence[int], witness: InterpretationWitness
) -> tuple[tuple[int, ...], tuple[int, ...] | None]:
    """Flattened lex-least preimages, plus one alternative when it exists."""
    chosen: list[tuple[int, ...]] = []
    alternative: list[tuple[int, ...]] = []
    differs = False
    for p in params:
        pre = witness.preimages(p)
        if not pre:
            raise VerifyError(
                f"witness inconsistent: no preimage for parameter {p}"
            )
        chosen.append(pre[0])
        if len(pre) > 1 and not differs:
            alternative.append(pre[1])
            differs = True
        else:
            alternative.append(pre[0])
    flat = _flat(chosen)
    return flat, (_flat(alternative) if differs else None)


def _check_same_quotient(
    comp: InterpretationCode,
    ambient: FiniteStructure,
    params_a: tuple[int, ...],
    params_b: tuple[int, ...],
) -> None:
    w1 = build_quotient(ambient, comp, params_a)
    w2 = build_quotient(ambient, comp, params_b)
    if not structure_equal(w1.quotient, w2.quotient):
        raise VerifyError(
            "composite quotients differ across preimage choices "
            f"{params_a} vs {params_b}"
        )


def check_theta_isomorphism(
    a: FiniteStructure,
    comp: InterpretationCode,
    p_star: Sequence[int],
    theta_formula: Formula,
    param_names: Sequence[str] | None = None,
) -> tuple[InterpretationWitness, dict[int, int]]:
    """Verify θ defines an isomorphism Γ∘Δ(a, p̄*) → a; return its map.

    The five checks of the definable-isomorphism lemma, executed
    semantically: the θ-relation is the graph of a total function on the
    composite domain, constant on classes, injective on classes,
    surjective, and symbol-preserving.  ``param_names`` are the free
    parameter names of the θ-formula, in the order matching p̄*
    (defaults to the composite code's canonical parameter names).
    """
    p_star = tuple(p_star)
    if param_names is None:
        param_names = list(comp.param_names())
    if len(param_names) != len(p_star):
        raise VerifyError("parameter name/value count mismatch")
    w = build_quotient(a, comp, p_star)
    sort = comp.source_sort
    n = comp.dim
    unames = [f"u{i}" for i in range(1, n + 1)]
    expected = set(unames) | {"x"} | set(param_names)
    fv = sort_check(a.lang, theta_formula)
    stray = set(fv) - expected
    if stray:
        raise VerifyError(
            f"theta formula uses unexpected variables {sorted(stray)}"
        )
    penv = dict(zip(param_names, p_star))
    g = _with_all_vars(theta_formula, unames + ["x"], sort)
    rel = define_set(a, g, params=penv, result_vars=unames + ["x"])
    dom_set = set(w.domain)
    values: dict[tuple[int, ...], set[int]] = {}
    for row in rel:
        u, x = row[:n], row[n]
        if u not in dom_set:
            raise NotFunctional((u, x), "defined outside the domain")
        values.setdefault(u, set()).add(x)
    tmap: dict[int, int] = {}
    for t in w.domain:
        got = values.get(t)
        if not got:
            raise NotFunctional((t,), "no value on a domain tuple")
        if len(got) > 1:
            raise NotFunctional((t,) + tuple(sorted(got)[:2]), "several values")
        x = got.pop()
        k = w.class_of[t]
        if k in tmap and tmap[k] != x:
            raise NotFunctional(
                (w.reps[k], t, tmap[k], x), "not constant on a class"
            )
        tmap.setdefault(k, x)
    seen: dict[int, int] = {}
    for k, x in sorted(tmap.items()):
        if x in seen:
            raise NotInjectiveOnClasses((w.reps[seen[x]], w.reps[k], x))
        seen[x] = k
    size = a.sizes[a.lang.only_sort]
    missing = [x for x in range(size) if x not in seen]
    if missing:
        raise NotSurjective(tuple(missing))
    q = w.quotient
    for cname in a.lang.constant:
        if tmap[q.constants[cname]] != a.constants[cname]:
            raise NotHomomorphic(("constant", cname))
    nclasses = len(w.classes)
    for fname in a.lang.function:
        sym = a.lang.function[fname]
        qi, ai = q.functions[fname], a.functions[fname]
        for args in itertools.product(range(nclasses), repeat=sym.arity):
            want = ai.lookup(tuple(tmap[k] for k in args))
            if tmap[qi.lookup(args)] != want:
                raise NotHomomorphic(("function", fname, args))
    for pname in a.lang.predicate:
        sym = a.lang.predicate[pname]
        qi, ai = q.predicates[pname], a.predicates[pname]
        for args in itertools.product(range(nclasses), repeat=sym.arity):
            if qi.test(args) != ai.test(tuple(tmap[k] for k in args)):
                raise NotHomomorphic(("predicate", pname, args))
    return w, tmap


@dataclass
class BiReport:
    """Outcome of the full bi-interpretation verification."""

    ok: bool
    p_star: tuple[int, ...]
    q_star: tuple[int, ...]
    witness_ab: InterpretationWitness
    witness_ba: InterpretationWitness
    composite_a: InterpretationWitness
    composite_b: InterpretationWitness
    theta_a_map: dict[int, int]
    theta_b_map: dict[int, int]
    compatibility_a: str
    compatibility_b: str

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "p_star": list(self.p_star),
            "q_star": list(self.q_star),
            "classes_a": len(self.composite_a.classes),
            "classes_b": len(self.composite_b.classes),
            "compatibility_a": self.compatibility_a,
            "compatibility_b": self.compatibility_b,
        }


def verify_bi_interpretation(
    spec: BiInterpretationSpec,
    a: FiniteStructure,
    b: FiniteStructure,
    corpus_a: Sequence[Formula] | None = None,
    corpus_b: Sequence[Formula] | None = None,
) -> BiReport:
    """Run the whole bi-interpretation pipeline and certify both θ-maps."""
    wg = verify_interpretation(
        a, b, spec.gamma, spec.params_gamma, corpus=corpus_a
    )
    wd = verify_interpretation(
        b, a, spec.delta, spec.params_delta, corpus=corpus_b
    )
    p_star, q_star = assemble_bi_parameters(
        spec.gamma, spec.params_gamma, spec.delta, spec.params_delta, wg, wd
    )
    comp_a = compose(spec.gamma, spec.delta)
    comp_b = compose(spec.delta, spec.gamma)
    ys_a, zs_a = _sigma_names(comp_a, spec.delta)
    ys_b, zs_b = _sigma_names(comp_b, spec.gamma)
    wa, amap = check_theta_isomorphism(
        a, comp_a, p_star, spec.theta_a, param_names=ys_a + zs_a
    )
    wb, bmap = check_theta_isomorphism(
        b, comp_b, q_star, spec.theta_b, param_names=ys_b + zs_b
    )
    compat_a = _theta_compatibility(a, spec.gamma, spec.delta, wg, wd, wa, amap)
    compat_b = _theta_compatibility(b, spec.delta, spec.gamma, wd, wg, wb, bmap)
    return BiReport(
        ok=True,
        p_star=p_star,
        q_star=q_star,
        witness_ab=wg,
        witness_ba=wd,
        composite_a=wa,
        composite_b=wb,
        theta_a_map=amap,
        theta_b_map=bmap,
        compatibility_a=compat_a,
        compatibility_b=compat_b,
    )


def _theta_compatibility(
    a: FiniteStructure,
    outer: InterpretationCode,
    inner: InterpretationCode,
    w_outer: InterpretationWitness,
    w_inner: InterpretationWitness,
    w_comp: InterpretationWitness,
    tmap: dict[int, int],
) -> str:
    """Compare the θ-map with μ_outer ∘ μ_inner, per coordinate blocks.

    Exact agreement is reported as "exact"; otherwise, for universes of at
    most AUTOMORPHISM_CAP elements, an automorphism correction is searched
    (the coordinate map may legitimately differ from θ by an automorphism);
    larger universes report "skipped".
    """
    m = inner.dim
    mu_comp: dict[tuple[int, ...], int] = {}
    for t in w_comp.domain:
        chunks = _blocks_of(t, outer.dim, m)
        bs = []
        for chunk in chunks:
            if w_inner.mu is None or chunk not in w_inner.mu:
                raise VerifyError(
                    "composite domain tuple has a block outside the inner domain"
                )
            bs.append(w_inner.mu[chunk])
        bt = tuple(bs)
        if w_outer.mu is None or bt not in w_outer.mu:
            raise VerifyError(
                "composite domain tuple projects outside the outer domain"
            )
        mu_comp[t] = w_outer.mu[bt]
    if all(tmap[w_comp.class_of[t]] == mu_comp[t] for t in w_comp.domain):
        return "exact"
    if a.sizes[a.lang.only_sort] > AUTOMORPHISM_CAP:
        return "skipped"
    for alpha in _automorphisms(a):
        if all(
            tmap[w_comp.class_of[t]] == alpha[mu_comp[t]]
            for t in w_comp.domain
        ):
            return f"automorphism {list(alpha)}"
    raise VerifyError(
        "theta map is not an automorphism twist of the composed coordinate map"
    )


# ---------------------------------------------------------------------------
# The σ-formula of the definable-isomorphism lemma


def sigma_formula(
    gamma: InterpretationCode,
    delta: InterpretationCode,
    theta_a: Formula,
) -> Formula:
    """σ_A(ȳ, z̄): the parameter tuples where θ_A defines an isomorphism.

    The conjunction Θ_Δ(z̄) ∧ Θ_{Γ∘Δ}(ȳ,z̄) ∧ θ₁ ∧ θ₂ ∧ θ₃ ∧ ⋀_c θ_c ∧
    ⋀_f θ_f ∧ ⋀_P θ_P in the printed schema shapes, over free parameters
    ȳ = y1..y_{dim_parΓ·dimΔ} and z̄ = z1..z_{dim_parΔ}.
    """
    comp = compose(gamma, delta)
    return _sigma_from_composite(comp, delta, theta_a)


def _sigma_names(comp: InterpretationCode, delta: InterpretationCode):
    k2 = delta.dim_par
    k1m = comp.dim_par - k2
    ys = [f"y{j}" for j in range(1, k1m + 1)]
    zs = [f"z{j}" for j in range(1, k2 + 1)]
    return ys, zs


def _sigma_from_composite(
    comp: InterpretationCode,
    delta: InterpretationCode,
    theta_a: Formula,
) -> Formula:
    lang = comp.target_lang
    sort = comp.source_sort
    n = comp.dim
    ys, zs = _sigma_names(comp, delta)
    pnames = ys + zs
    unames = [f"u{i}" for i in range(1, n + 1)]
    fv = sort_check(lang, theta_a)
    stray = set(fv) - (set(unames) | {"x"} | set(pnames))
    if stray:
        raise VerifyError(
            f"theta formula uses unexpected variables {sorted(stray)} "
            f"(expected u1..u{n}, x, and parameters {pnames})"
        )

    def ub(i: int) -> list[str]:
        return [f"{RESERVED_CHAR}u{i}_{j}" for j in range(1, n + 1)]

    def xv(i: int | None = None) -> str:
        return f"{RESERVED_CHAR}x" if i is None else f"{RESERVED_CHAR}x{i}"

    def pairs(*blocks: Sequence[str]) -> list[tuple[str, str]]:
        return [(nm, sort) for blk in blocks for nm in blk]

    def theta_at(block: Sequence[str], x_term) -> Formula:
        mapping: dict[str, Term] = {
            u: Var(nm, sort) for u, nm in zip(unames, block)
        }
        mapping["x"] = x_term
        forbidden = set(block)
        if isinstance(x_term, Var):
            forbidden.add(x_term.name)
        return substitute(rename_bound_away(theta_a, forbidden), mapping)

    U = lambda blk: comp.domain_at(blk, pnames)  # noqa: E731
    E = lambda s, t: comp.equiv_at(s, t, pnames)  # noqa: E731

    u1, u2 = ub(1), ub(2)
    x1, x2 = xv(1), xv(2)
    parts: list[Formula] = [theta(delta, zs), theta(comp, pnames)]
    parts.append(
        forall_many(
            pairs(u1),
            Iff(U(u1), Exists(xv(), sort, theta_at(u1, Var(xv(), sort)))),
        )
    )
    parts.append(
        forall_many(
            pairs(u1, u2) + [(x1, sort), (x2, sort)],
            Implies(
                conj(
                    [
                        U(u1),
                        U(u2),
                        theta_at(u1, Var(x1, sort)),
                        theta_at(u2, Var(x2, sort)),
                    ]
                ),
                Iff(E(u1, u2), Eq(Var(x1, sort), Var(x2, sort))),
            ),
        )
    )
    parts.append(
        forall_many(
            [(xv(), sort)],
            exists_many(pairs(u1), theta_at(u1, Var(xv(), sort))),
        )
    )
    for c in lang.constants:
        parts.append(
            forall_many(
                pairs(u1),
                Implies(
                    comp.member_at(c.name, [u1], pnames),
                    theta_at(u1, Const(c.name)),
                ),
            )
        )
    for f in lang.functions:
        r = f.arity
        blocks = [ub(i) for i in range(r + 1)]  # u0 is the result block
        xvars = [xv(i) for i in range(r + 1)]
        guard = [
            theta_at(blocks[i], Var(xvars[i], sort)) for i in range(r + 1)
        ] + [comp.member_at(f.name, [blocks[i] for i in range(1, r + 1)] + [blocks[0]], pnames)]
        body = Eq(
            App(f.name, tuple(Var(xvars[i], sort) for i in range(1, r + 1))),
            Var(xvars[0], sort),
        )
        parts.append(
            forall_many(
                pairs(*blocks) + [(xvars[i], sort) for i in range(r + 1)],
                Implies(conj(guard), body),
            )
        )
    for p in lang.predicates:
        r = p.arity
        blocks = [ub(i) for i in range(1, r + 1)]
        xvars = [xv(i) for i in range(1, r + 1)]
        body = Iff(
            comp.member_at(p.name, blocks, pnames),
            Rel(p.name, tuple(Var(x, sort) for x in xvars)),
        )
        if r == 0:
            parts.append(body)
            continue
        guard = [theta_at(blocks[i], Var(xvars[i], sort)) for i in range(r)]
        parts.append(
            forall_many(
                pairs(*blocks) + [(x, sort) for x in xvars],
                Implies(conj(guard), body),
            )
        )
    return conj(parts)


# ---------------------------------------------------------------------------
# Definability transfer


@dataclass
class TransferResult:
    """A formula over a defining S, with its concrete parameter values."""

    formula: Formula
    parameters: dict[str, int]
    arity: int


def transfer_definable(
    S: Iterable[tuple[int, ...]],
    spec: BiInterpretationSpec,
    a: FiniteStructure,
    b: FiniteStructure,
    sigma: Formula,
    r_params: Sequence[int] = (),
    arity: int | None = None,
    witnesses: tuple[InterpretationWitness, InterpretationWitness] | None = None,
) -> TransferResult:
    """Pull a definition of μ_Γ⁻¹(S) over b back to a definition of S over a.

    ``sigma`` is an L(b)-formula over blocks x{i}_{j} (i ≤ m = arity of S,
    j ≤ dim Γ) and parameter names r1..rt; it must define exactly μ_Γ⁻¹(S)
    at the given parameter values (checked by enumeration).  The result is
    ∃c̄₁..c̄_m (⋀ θ_A(c̄ᵢ, xᵢ, p̄*) ∧ Σ_Δ(c̄₁..c̄_m, r̄₀, q̄)), whose defined
    set is verified to equal S.
    """
    S = {tuple(t) for t in S}
    if arity is None:
        if not S:
            raise VerifyError("empty S needs an explicit arity")
        arity = len(next(iter(S)))
    m = arity
    if any(len(t) != m for t in S):
        raise VerifyError("S mixes tuple lengths")
    if witnesses is None:
        wg = verify_interpretation(a, b, spec.gamma, spec.params_gamma)
        wd = verify_interpretation(b, a, spec.delta, spec.params_delta)
    else:
        wg, wd = witnesses
    ng, md = spec.gamma.dim, spec.delta.dim
    r_params = tuple(r_params)
    rnames = [f"r{k}" for k in range(1, len(r_params) + 1)]
    block_names = [
        block_var(i, j) for i in range(1, m + 1) for j in range(1, ng + 1)
    ]
    fv = sort_check(b.lang, sigma)
    stray = set(fv) - set(block_names) - set(rnames)
    if stray:
        raise VerifyError(
            f"defining formula uses unexpected variables {sorted(stray)}"
        )
    renv = dict(zip(rnames, r_params))
    defined = define_set(
        b,
        _with_all_vars(sigma, block_names, b.lang.only_sort),
        params=renv,
        result_vars=block_names,
    )
    expected = set()
    for t in S:
        for combo in itertools.product(*[wg.preimages(x) for x in t]):
            expected.add(_flat(combo))
    if defined != expected:
        diff = sorted(defined.symmetric_difference(expected))[:3]
        raise VerifyError(
            f"formula does not define the preimage of S; differs at {diff}"
        )
    p_star, _ = assemble_bi_parameters(
        spec.gamma, spec.params_gamma, spec.delta, spec.params_delta,
        wg, wd, validate=False,
    )
    comp = compose(spec.gamma, spec.delta)
    n = comp.dim
    sort = comp.source_sort
    ys, zs = _sigma_names(comp, spec.delta)
    unames = [f"u{i}" for i in range(1, n + 1)]
    r0: list[tuple[int, ...]] = []
    for rv in r_params:
        pre = wd.preimages(rv)
        if not pre:
            raise VerifyError(f"no preimage for transfer parameter {rv}")
        r0.append(pre[0])

    translated = translate_formula(sigma, spec.delta, context=sorted(fv))
    mapping: dict[str, str] = {}
    for i in range(1, m + 1):
        for j in range(1, ng + 1):
            for l in range(1, md + 1):
                mapping[f"{block_var(i, j)}{RESERVED_CHAR}{l}"] = (
                    f"c{i}_{(j - 1) * md + l}"
                )
    for k in range(1, len(r_params) + 1):
        for l in range(1, md + 1):
            mapping[f"r{k}{RESERVED_CHAR}{l}"] = f"r{k}_{l}"
    for j in range(1, spec.delta.dim_par + 1):
        mapping[trans_param(j)] = f"z{j}"
    translated = rename_bound_away(translated, set(mapping.values()))
    translated = rename_vars(translated, mapping)

    def theta_at(block: Sequence[str], x_name: str) -> Formula:
        sub = {u: Var(nm, sort) for u, nm in zip(unames, block)}
        sub["x"] = Var(x_name, sort)
        return substitute(spec.theta_a, sub)

    cblocks = [[f"c{i}_{j}" for j in range(1, n + 1)] for i in range(1, m + 1)]
    xnames = [f"x{i}" for i in range(1, m + 1)]
    body = conj(
        [theta_at(cblocks[i], xnames[i]) for i in range(m)] + [translated]
    )
    out = exists_many(
        [(nm, sort) for blk in cblocks for nm in blk], body
    )
    env: dict[str, int] = {}
    for nm, v in zip(ys, p_star[: len(ys)]):
        env[nm] = v
    for nm, v in zip(zs, p_star[len(ys) :]):
        env[nm] = v
    for k, pre in enumerate(r0, start=1):
        for l, v in enumerate(pre, start=1):
            env[f"r{k}_{l}"] = v
    got = define_set(
        a,
        _with_all_vars(out, xnames, sort),
        params=env,
        result_vars=xnames,
    )
    if got != S:
        diff = sorted(got.symmetric_difference(S))[:3]
        raise VerifyError(f"transferred formula defines a different set: {diff}")
    return TransferResult(formula=out, parameters=env, arity=m)
