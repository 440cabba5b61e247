"""Concrete finite groups, rings, and the UT₃ ↔ Z/n interpretation pair.

Builders for the ground-truth test matrix: cyclic, dihedral, and symmetric
groups, direct products, the rings Z/n, and the groups UT₃(Z/n) of upper
unitriangular 3×3 matrices over Z/n (stored as coordinate triples under
the multiplication law (a₁+a₂, b₁+b₂, c₁+c₂+a₁b₂)).  malcev_codes bundles
the mutual interpretation between UT₃(Z/n) and Z/n: the ring is recovered
on the center with ring product defined through commutators, the group is
coordinatized over the ring in dimension 3, and the θ-formulas name the
explicit coordinate maps of the correspondence.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .models import FiniteStructure, func_table, reduct
from .parsing import parse_formula
from .syntax import Formula, Language, make_language


class CatalogError(Exception):
    """A builder precondition or axiom validation failed."""


GROUP_LANG: Language = make_language(
    sorts=["g"],
    functions={"mult": (["g", "g"], "g"), "inv": (["g"], "g")},
    predicates={},
    constants={"e": "g"},
)

UT3_LANG: Language = make_language(
    sorts=["g"],
    functions={"mult": (["g", "g"], "g"), "inv": (["g"], "g")},
    predicates={},
    constants={"e": "g", "t12": "g", "t23": "g"},
)

RING_LANG: Language = make_language(
    sorts=["r"],
    functions={
        "plus": (["r", "r"], "r"),
        "times": (["r", "r"], "r"),
        "neg": (["r"], "r"),
    },
    predicates={},
    constants={"zero": "r", "one": "r"},
)


# ---------------------------------------------------------------------------
# Group builders


def _group_structure(
    size: int, mult, inv, e: int, lang: Language = GROUP_LANG, **constants
) -> FiniteStructure:
    return FiniteStructure(
        lang=lang,
        sizes={lang.only_sort: size},
        functions={
            "mult": func_table(
                [[mult(i, j) for j in range(size)] for i in range(size)], 2
            ),
            "inv": func_table([inv(i) for i in range(size)], 1),
        },
        predicates={},
        constants={"e": e, **constants},
    )


def validate_group(m: FiniteStructure) -> None:
    """Check the group axioms exhaustively; raise CatalogError on failure."""
    size = m.sizes[m.lang.only_sort]
    mult = m.functions["mult"].lookup
    inv = m.functions["inv"].lookup
    e = m.constants["e"]
    for i in range(size):
        if mult((e, i)) != i or mult((i, e)) != i:
            raise CatalogError(f"identity fails at {i}")
        if mult((i, inv((i,)))) != e or mult((inv((i,)), i)) != e:
            raise CatalogError(f"inverse fails at {i}")
    for i, j, k in itertools.product(range(size), repeat=3):
        if mult((mult((i, j)), k)) != mult((i, mult((j, k)))):
            raise CatalogError(f"associativity fails at {(i, j, k)}")


def cyclic_group(n: int) -> FiniteStructure:
    """Z/n written multiplicatively: element i is the i-th power."""
    if n < 1:
        raise CatalogError("cyclic group needs n >= 1")
    return _group_structure(
        n, lambda i, j: (i + j) % n, lambda i: (-i) % n, 0
    )


def dihedral_group(n: int) -> FiniteStructure:
    """Order 2n: 0..n-1 are rotations rᵏ, n..2n-1 are reflections srᵏ.

    Composition follows rs = sr⁻¹: rᵃ·rᵇ = rᵃ⁺ᵇ, rᵃ·srᵇ = sr^{b−a},
    srᵃ·rᵇ = sr^{a+b}, srᵃ·srᵇ = r^{b−a}.
    """
    if n < 1:
        raise CatalogError("dihedral group needs n >= 1")

    def mult(i: int, j: int) -> int:
        fi = 1 if i >= n else 0
        a = i - n if i >= n else i
        fj = 1 if j >= n else 0
        b = j - n if j >= n else j
        if not fi and not fj:
            return (a + b) % n
        if not fi and fj:
            return n + (b - a) % n
        if fi and not fj:
            return n + (a + b) % n
        return (b - a) % n

    def inv(i: int) -> int:
        return (-i) % n if i < n else i

    return _group_structure(2 * n, mult, inv, 0)


def symmetric_group(n: int) -> FiniteStructure:
    """S_n for n ≤ 4; elements are permutation tuples in lexicographic order.

    mult(p, q) = p∘q, i.e. apply q first: (p∘q)(i) = p(q(i)).
    """
    if not 1 <= n <= 4:
        raise CatalogError("symmetric group supported for 1 <= n <= 4")
    perms = list(itertools.permutations(range(n)))
    index = {p: i for i, p in enumerate(perms)}

    def mult(i: int, j: int) -> int:
        p, q = perms[i], perms[j]
        return index[tuple(p[q[k]] for k in range(n))]

    def inv(i: int) -> int:
        p = perms[i]
        out = [0] * n
        for k, v in enumerate(p):
            out[v] = k
        return index[tuple(out)]

    return _group_structure(len(perms), mult, inv, 0)


def direct_product(a: FiniteStructure, b: FiniteStructure) -> FiniteStructure:
    """Componentwise product; pair (i, j) is element i·|b| + j."""
    if a.lang != GROUP_LANG or b.lang != GROUP_LANG:
        raise CatalogError("direct products take plain group structures")
    na, nb = a.sizes["g"], b.sizes["g"]
    am, bm = a.functions["mult"].lookup, b.functions["mult"].lookup
    ai, bi = a.functions["inv"].lookup, b.functions["inv"].lookup

    def mult(i: int, j: int) -> int:
        xi, yi = divmod(i, nb)
        xj, yj = divmod(j, nb)
        return am((xi, xj)) * nb + bm((yi, yj))

    def inv(i: int) -> int:
        x, y = divmod(i, nb)
        return ai((x,)) * nb + bi((y,))

    return _group_structure(
        na * nb, mult, inv, a.constants["e"] * nb + b.constants["e"]
    )


def build_group(spec: str) -> FiniteStructure:
    """Build a group from a spec string: c<n>, d<n>, s<n>, ut3<n>, joined by x.

    Examples: "c12", "d4" (order 8), "s3", "c2xc4", "ut3_2" (reduced to the
    plain group language).  Validation runs on every result.
    """
    parts = spec.lower().split("x")
    built: list[FiniteStructure] = []
    for part in parts:
        part = part.strip()
        if part.startswith("ut3"):
            n = int(part[3:].lstrip("_") or "2")
            built.append(reduct(build_ut3(n), GROUP_LANG))
        elif part.startswith("c"):
            built.append(cyclic_group(int(part[1:])))
        elif part.startswith("d"):
            built.append(dihedral_group(int(part[1:])))
        elif part.startswith("s"):
            built.append(symmetric_group(int(part[1:])))
        else:
            raise CatalogError(f"unknown group spec {part!r}")
    out = built[0]
    for extra in built[1:]:
        out = direct_product(out, extra)
    validate_group(out)
    return out


CATALOG_GROUP_SPECS: tuple[str, ...] = (
    "c2", "c3", "c4", "c5", "c6", "c8", "c12",
    "c2xc2", "c2xc4", "c2xc6", "c3xc3",
    "d3", "d4", "d5", "d6",
    "s3", "s4",
    "ut3_2",
)


def catalog_groups() -> dict[str, FiniteStructure]:
    """The fixed test matrix: named groups of order ≤ 24."""
    return {spec: build_group(spec) for spec in CATALOG_GROUP_SPECS}


# ---------------------------------------------------------------------------
# Rings


def build_ring(n: int) -> FiniteStructure:
    """The ring Z/n with plus, times, neg, zero, one; validated."""
    if not 1 <= n <= 216:
        raise CatalogError("ring size out of range")
    m = FiniteStructure(
        lang=RING_LANG,
        sizes={"r": n},
        functions={
            "plus": func_table(
                [[(i + j) % n for j in range(n)] for i in range(n)], 2
            ),
            "times": func_table(
                [[(i * j) % n for j in range(n)] for i in range(n)], 2
            ),
            "neg": func_table([(-i) % n for i in range(n)], 1),
        },
        predicates={},
        constants={"zero": 0, "one": 1 % n},
    )
    _validate_ring(m)
    return m


def _validate_ring(m: FiniteStructure) -> None:
    n = m.sizes["r"]
    plus = m.functions["plus"].lookup
    times = m.functions["times"].lookup
    neg = m.functions["neg"].lookup
    zero, one = m.constants["zero"], m.constants["one"]
    for i in range(n):
        if plus((i, zero)) != i or times((i, one)) != i:
            raise CatalogError(f"ring identity fails at {i}")
        if plus((i, neg((i,)))) != zero:
            raise CatalogError(f"additive inverse fails at {i}")
    for i, j, k in itertools.product(range(n), repeat=3):
        if plus((plus((i, j)), k)) != plus((i, plus((j, k)))):
            raise CatalogError("plus not associative")
        if times((times((i, j)), k)) != times((i, times((j, k)))):
            raise CatalogError("times not associative")
        if times((i, plus((j, k)))) != plus((times((i, j)), times((i, k)))):
            raise CatalogError("distributivity fails")
    for i, j in itertools.product(range(n), repeat=2):
        if plus((i, j)) != plus((j, i)) or times((i, j)) != times((j, i)):
            raise CatalogError("commutativity fails")


# ---------------------------------------------------------------------------
# UT₃(Z/n)


def ut3_encode(n: int, a: int, b: int, c: int) -> int:
    return (a % n) * n * n + (b % n) * n + (c % n)


def ut3_decode(n: int, i: int) -> tuple[int, int, int]:
    a, rest = divmod(i, n * n)
    b, c = divmod(rest, n)
    return a, b, c


def build_ut3(n: int) -> FiniteStructure:
    """UT₃(Z/n) on coordinate triples: (a₁,b₁,c₁)·(a₂,b₂,c₂) =
    (a₁+a₂, b₁+b₂, c₁+c₂+a₁b₂); inverse (a,b,c)⁻¹ = (−a,−b,ab−c).

    Element index of (a,b,c) is a·n² + b·n + c, so e = 0, t12 = n²,
    t23 = n, and the central (0,0,c) is index c.
    """
    if not 2 <= n <= 6:
        raise CatalogError("build_ut3 supports 2 <= n <= 6")

    def mult(i: int, j: int) -> int:
        a1, b1, c1 = ut3_decode(n, i)
        a2, b2, c2 = ut3_decode(n, j)
        return ut3_encode(n, a1 + a2, b1 + b2, c1 + c2 + a1 * b2)

    def inv(i: int) -> int:
        a, b, c = ut3_decode(n, i)
        return ut3_encode(n, -a, -b, a * b - c)

    return _group_structure(
        n**3,
        mult,
        inv,
        ut3_encode(n, 0, 0, 0),
        lang=UT3_LANG,
        t12=ut3_encode(n, 1, 0, 0),
        t23=ut3_encode(n, 0, 1, 0),
    )


# ---------------------------------------------------------------------------
# The mutual interpretation UT₃(Z/n) ↔ Z/n


def _comm(u: str, v: str) -> str:
    """The commutator [u, v] = u·v·u⁻¹·v⁻¹ as a term string."""
    return f"mult(mult(mult({u}, {v}), inv({u})), inv({v}))"


def _power(base: str, k: int) -> str:
    if k <= 0:
        return "e"
    out = base
    for _ in range(k - 1):
        out = f"mult({base}, {out})"
    return out


_CENTER_Z = "forall w. (mult(z, w) = mult(w, z))"


def _centralizer_abelian(y: str) -> str:
    return (
        "forall z. forall w. ((mult(z, {y}) = mult({y}, z) & "
        "mult(w, {y}) = mult({y}, w)) -> mult(z, w) = mult(w, z))"
    ).format(y=y)


def _commutator_set_is_center(y: str, other: str) -> str:
    """[y, C(other)] = Z(G), as two inclusions with explicit witnesses."""
    com = _comm(y, "w")
    into = (
        f"forall w. (mult(w, {other}) = mult({other}, w) -> "
        f"(forall v. (mult({com}, v) = mult(v, {com}))))"
    )
    onto = (
        f"forall u. ((forall v. (mult(u, v) = mult(v, u))) -> "
        f"(exists w. (mult(w, {other}) = mult({other}, w) & {com} = u)))"
    )
    return f"({into}) & ({onto})"


def malcev_properties(y1: str = "t12", y2: str = "t23") -> dict[str, str]:
    """The four defining properties of the parameter pair, as text.

    (a) C(y1) ∩ C(y2) is exactly the center; (b) both centralizers are
    abelian; (c) [y1, C(y2)] and [y2, C(y1)] both equal the center as
    sets; (d) single commutators reach the whole center and land in it
    (in UT₃ the derived subgroup is the set of commutators).
    """
    a = (
        f"forall z. ((mult(z, {y1}) = mult({y1}, z) & "
        f"mult(z, {y2}) = mult({y2}, z)) <-> ({_CENTER_Z}))"
    )
    b = f"({_centralizer_abelian(y1)}) & ({_centralizer_abelian(y2)})"
    c = (
        f"({_commutator_set_is_center(y1, y2)}) & "
        f"({_commutator_set_is_center(y2, y1)})"
    )
    com_uv = _comm("u", "v")
    d = (
        f"(forall u. forall v. (forall w. (mult({com_uv}, w) = "
        f"mult(w, {com_uv})))) & "
        f"(forall z. ((forall w. (mult(z, w) = mult(w, z))) -> "
        f"(exists u. (exists v. ({com_uv} = z)))))"
    )
    return {"a": a, "b": b, "c": c, "d": d}


@dataclass
class MalcevBundle:
    """The interpretation pair between Z/n and UT₃(Z/n), ready to verify.

    gamma recovers the ring on the center of the group (dimension 1,
    parameters y1, y2 standing for t12, t23); delta coordinatizes the
    group over the ring (dimension 3, parameter-free).  theta_a and
    theta_b name the coordinate maps for the two composites; phi is the
    parameter formula (properties (a)-(d) plus naming conjuncts),
    phi_orbit the same without the naming conjuncts.
    """

    n: int
    ring: FiniteStructure
    group: FiniteStructure
    gamma: "InterpretationCode"
    delta: "InterpretationCode"
    params_gamma: tuple[int, int]
    theta_a: Formula
    theta_b: Formula
    phi: Formula
    phi_orbit: Formula
    properties: dict[str, Formula]


def malcev_codes(n: int) -> MalcevBundle:
    """The mutual interpretation between the ring Z/n and UT₃(Z/n)."""
    from .codes import InterpretationCode

    if not 2 <= n <= 5:
        raise CatalogError("malcev_codes supports 2 <= n <= 5")
    ring = build_ring(n)
    group = build_ut3(n)
    gp = lambda s: parse_formula(s, UT3_LANG)  # noqa: E731
    rp = lambda s: parse_formula(s, RING_LANG)  # noqa: E731

    center = (
        "mult(x1_1, y1) = mult(y1, x1_1) & mult(x1_1, y2) = mult(y2, x1_1)"
    )
    # x ⊡ y = [x′, y′] with x′ ∈ C(y1) of first coordinate x and
    # y′ ∈ C(y2) of second coordinate y: [x′, y2] = x and [y1, y′] = y.
    times_member = (
        "exists xp. (exists yp. ("
        "mult(xp, y1) = mult(y1, xp) & mult(yp, y2) = mult(y2, yp) & "
        f"{_comm('xp', 'y2')} = x1_1 & {_comm('y1', 'yp')} = x2_1 & "
        f"x3_1 = {_comm('xp', 'yp')}))"
    )
    gamma = InterpretationCode(
        source_lang=UT3_LANG,
        target_lang=RING_LANG,
        dim=1,
        dim_par=2,
        domain=gp(center),
        equiv=gp("x1_1 = x2_1"),
        members={
            "plus": gp("x3_1 = mult(x1_1, x2_1)"),
            "times": gp(times_member),
            "neg": gp("x2_1 = inv(x1_1)"),
            "zero": gp("x1_1 = e"),
            "one": gp(f"x1_1 = {_comm('y1', 'y2')}"),
        },
    )
    delta = InterpretationCode(
        source_lang=RING_LANG,
        target_lang=UT3_LANG,
        dim=3,
        dim_par=0,
        domain=rp("x1_1 = x1_1 & x1_2 = x1_2 & x1_3 = x1_3"),
        equiv=rp("x1_1 = x2_1 & x1_2 = x2_2 & x1_3 = x2_3"),
        members={
            "mult": rp(
                "x3_1 = plus(x1_1, x2_1) & x3_2 = plus(x1_2, x2_2) & "
                "x3_3 = plus(plus(x1_3, x2_3), times(x1_1, x2_2))"
            ),
            "inv": rp(
                "x2_1 = neg(x1_1) & x2_2 = neg(x1_2) & "
                "x2_3 = plus(times(x1_1, x1_2), neg(x1_3))"
            ),
            "e": rp("x1_1 = zero & x1_2 = zero & x1_3 = zero"),
            "t12": rp("x1_1 = one & x1_2 = zero & x1_3 = zero"),
            "t23": rp("x1_1 = zero & x1_2 = one & x1_3 = zero"),
        },
    )
    theta_a = rp("u1 = zero & u2 = zero & u3 = x")
    theta_b = gp(_theta_b_text(n))
    props_text = malcev_properties()
    properties = {k: gp(v) for k, v in props_text.items()}
    orbit_text = malcev_properties("y1", "y2")
    phi_orbit = gp(
        " & ".join(f"({orbit_text[k]})" for k in ("a", "b", "c", "d"))
    )
    phi = gp(
        " & ".join(f"({orbit_text[k]})" for k in ("a", "b", "c", "d"))
        + " & y1 = t12 & y2 = t23"
    )
    return MalcevBundle(
        n=n,
        ring=ring,
        group=group,
        gamma=gamma,
        delta=delta,
        params_gamma=(group.constants["t12"], group.constants["t23"]),
        theta_a=theta_a,
        theta_b=theta_b,
        phi=phi,
        phi_orbit=phi_orbit,
        properties=properties,
    )


def _theta_b_text(n: int) -> str:
    """θ_B(u1,u2,u3,x): x is the group element whose coordinate triple
    (a,b,c) is represented by the central elements u1,u2,u3 = t13^a,b,c.

    Rendered as a disjunction over the n³ group elements, with every
    element written as the term t12^a · t23^b · t13^{c−ab} over the
    constants (t13 = [t12, t23])."""
    t13 = _comm("t12", "t23")
    parts = []
    for a, b, c in itertools.product(range(n), repeat=3):
        g = _mult_chain(
            _power("t12", a), _power("t23", b), _power(t13, (c - a * b) % n)
        )
        parts.append(
            f"(u1 = {_power(t13, a)} & u2 = {_power(t13, b)} & "
            f"u3 = {_power(t13, c)} & x = {g})"
        )
    return " | ".join(parts)


def _mult_chain(*terms: str) -> str:
    useful = [t for t in terms if t != "e"]
    if not useful:
        return "e"
    out = useful[0]
    for t in useful[1:]:
        out = f"mult({out}, {t})"
    return out


# ---------------------------------------------------------------------------
# Formula corpora


_RING_CORPUS: tuple[str, ...] = (
    "forall x. forall y. (plus(x, y) = plus(y, x))",
    "forall x. forall y. forall z. (plus(plus(x, y), z) = plus(x, plus(y, z)))",
    "forall x. (plus(x, zero) = x)",
    "forall x. (plus(x, neg(x)) = zero)",
    "forall x. forall y. (times(x, y) = times(y, x))",
    "forall x. forall y. forall z. (times(times(x, y), z) = times(x, times(y, z)))",
    "forall x. (times(x, one) = x)",
    "forall x. forall y. forall z. (times(x, plus(y, z)) = plus(times(x, y), times(x, z)))",
    "forall x. (times(x, zero) = zero)",
    "exists x. (~(x = zero))",
    "plus(one, one) = zero",
    "plus(plus(one, one), one) = zero",
    "plus(plus(one, one), plus(one, one)) = zero",
    "exists x. (times(x, x) = one & ~(x = one))",
    "forall x. (times(x, x) = x -> (x = zero | x = one))",
    "exists x. (~(x = zero) & times(x, x) = zero)",
    "forall x. ((exists y. (times(x, y) = one)) | times(x, x) = zero | x = zero)",
    "exists y. (plus(y, y) = x)",
    "exists y. (times(y, y) = x)",
    "plus(x, x) = zero",
    "times(x, x) = x",
    "exists y. (times(x, y) = one)",
    "times(x, y) = times(y, x)",
    "plus(x, y) = zero",
    "exists z. (plus(times(x, z), y) = zero)",
    "forall z. (times(x, z) = times(y, z) -> x = y)",
    "times(x, y) = one",
    "forall y. (times(x, y) = zero -> y = zero)",
    "neg(x) = x",
    "forall x. (exists y. (plus(x, y) = zero & (exists z. (plus(y, z) = x))))",
)

_GROUP_CORPUS: tuple[str, ...] = (
    "forall x. (mult(x, e) = x)",
    "forall x. (mult(x, inv(x)) = e)",
    "forall x. forall y. forall z. (mult(mult(x, y), z) = mult(x, mult(y, z)))",
    "exists x. (~(x = e))",
    "forall x. forall y. (mult(x, y) = mult(y, x))",
    "mult(t12, t23) = mult(t23, t12)",
    f"forall w. (mult({_comm('t12', 't23')}, w) = mult(w, {_comm('t12', 't23')}))",
    "mult(x, x) = e",
    "exists y. (mult(y, y) = x)",
    "mult(x, y) = mult(y, x)",
    "exists z. (mult(x, z) = y)",
    "forall w. (mult(x, w) = mult(w, x))",
)


def ring_corpus() -> list[Formula]:
    """Thirty ring formulas (≤ 2 free variables, quantifier depth ≤ 3)."""
    return [parse_formula(s, RING_LANG) for s in _RING_CORPUS]


def group_corpus() -> list[Formula]:
    """Group-side spot-check formulas over the UT₃ language."""
    return [parse_formula(s, UT3_LANG) for s in _GROUP_CORPUS]
