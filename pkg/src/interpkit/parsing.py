"""Formula parser and printer.

Grammar::

    formula := "forall" var [":" sort] "." formula
             | "exists" var [":" sort] "." formula
             | disj
    disj    := conj {"|" conj}
    conj    := impl {"&" impl}
    impl    := neg [("->" | "<->") impl]
    neg     := "~" neg | atom
    atom    := term "=" term | pred "(" terms ")" | "(" formula ")"

Note the operator nesting follows the grammar exactly: ``&`` combines
implications, ``|`` combines conjunctions, so ``a -> b & c -> d`` reads as
``(a -> b) & (c -> d)``.  print_formula emits fully parenthesized text, so
printed output never depends on these conventions.

Chains of three or more ``&``/``|`` at one level become BigAnd/BigOr nodes;
exactly two become And/Or, which makes parse(print(f)) structurally equal
to f for ASTs built through the smart constructors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .syntax import (
    RESERVED_CHAR,
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
    Term,
    Var,
    sort_check,
)


class ParseError(Exception):
    def __init__(self, message: str, pos: int) -> None:
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


_KEYWORDS = {"forall", "exists"}
_PUNCT = {
    "(": "LPAREN",
    ")": "RPAREN",
    ",": "COMMA",
    ".": "DOT",
    ":": "COLON",
    "=": "EQ",
    "&": "AMP",
    "|": "PIPE",
    "~": "TILDE",
}


def tokenize(text: str, allow_reserved: bool = False) -> list[Token]:
    out: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if text.startswith("<->", i):
            out.append(Token("IFF", "<->", i))
            i += 3
            continue
        if text.startswith("->", i):
            out.append(Token("ARROW", "->", i))
            i += 2
            continue
        if ch in _PUNCT:
            out.append(Token(_PUNCT[ch], ch, i))
            i += 1
            continue
        if ch.isalpha() or ch == "_" or (ch == RESERVED_CHAR and allow_reserved):
            j = i
            while j < n and (
                text[j].isalnum()
                or text[j] == "_"
                or (text[j] == RESERVED_CHAR and allow_reserved)
            ):
                j += 1
            word = text[i:j]
            if word in _KEYWORDS:
                out.append(Token(word.upper(), word, i))
            else:
                out.append(Token("IDENT", word, i))
            i = j
            continue
        if ch == RESERVED_CHAR:
            raise ParseError(f"character {RESERVED_CHAR!r} is reserved", i)
        raise ParseError(f"unexpected character {ch!r}", i)
    out.append(Token("EOF", "", n))
    return out


class _Parser:
    def __init__(
        self,
        tokens: list[Token],
        lang: Language,
        var_sorts: Mapping[str, str],
    ) -> None:
        self.tokens = tokens
        self.i = 0
        self.lang = lang
        self.var_sorts = dict(var_sorts)
        self.bound: list[tuple[str, str]] = []

    # -- token plumbing ------------------------------------------------

    @property
    def cur(self) -> Token:
        return self.tokens[self.i]

    def take(self, kind: str) -> Token:
        tok = self.cur
        if tok.kind != kind:
            raise ParseError(f"expected {kind}, found {tok.text or 'end'!r}", tok.pos)
        self.i += 1
        return tok

    def at(self, kind: str) -> bool:
        return self.cur.kind == kind

    # -- grammar -------------------------------------------------------

    def formula(self) -> Formula:
        if self.at("FORALL") or self.at("EXISTS"):
            univ = self.at("FORALL")
            self.i += 1
            name = self.take("IDENT").text
            if self.at("COLON"):
                self.i += 1
                sort = self.take("IDENT").text
                if sort not in self.lang.sorts:
                    raise ParseError(f"unknown sort {sort!r}", self.cur.pos)
            elif self.lang.is_one_sorted:
                sort = self.lang.only_sort
            else:
                raise ParseError(
                    f"quantified variable {name!r} needs a sort annotation "
                    "in a multi-sorted language",
                    self.cur.pos,
                )
            self.take("DOT")
            self.bound.append((name, sort))
            body = self.formula()
            self.bound.pop()
            return (Forall if univ else Exists)(name, sort, body)
        return self.disj()

    def disj(self) -> Formula:
        parts = [self.conj()]
        while self.at("PIPE"):
            self.i += 1
            parts.append(self.conj())
        if len(parts) == 1:
            return parts[0]
        if len(parts) == 2:
            return Or(parts[0], parts[1])
        return BigOr(tuple(parts))

    def conj(self) -> Formula:
        parts = [self.impl()]
        while self.at("AMP"):
            self.i += 1
            parts.append(self.impl())
        if len(parts) == 1:
            return parts[0]
        if len(parts) == 2:
            return And(parts[0], parts[1])
        return BigAnd(tuple(parts))

    def impl(self) -> Formula:
        lhs = self.neg()
        if self.at("ARROW"):
            self.i += 1
            return Implies(lhs, self.impl())
        if self.at("IFF"):
            self.i += 1
            return Iff(lhs, self.impl())
        return lhs

    def neg(self) -> Formula:
        if self.at("TILDE"):
            self.i += 1
            return Not(self.neg())
        return self.atom()

    def atom(self) -> Formula:
        if self.at("LPAREN"):
            # Either a parenthesized formula or a parenthesized term is
            # possible here only for formulas: terms never start with "(".
            self.i += 1
            inner = self.formula()
            self.take("RPAREN")
            return inner
        tok = self.cur
        if tok.kind != "IDENT":
            raise ParseError(f"expected a formula, found {tok.text or 'end'!r}", tok.pos)
        # Predicate atom?
        if (
            tok.text in self.lang.predicate
            and self.tokens[self.i + 1].kind == "LPAREN"
        ):
            self.i += 2
            args = self.terms()
            self.take("RPAREN")
            sym = self.lang.predicate[tok.text]
            if len(args) != sym.arity:
                raise ParseError(
                    f"{tok.text} expects {sym.arity} arguments, got {len(args)}",
                    tok.pos,
                )
            return Rel(tok.text, tuple(args))
        lhs = self.term()
        self.take("EQ")
        rhs = self.term()
        return Eq(lhs, rhs)

    def terms(self) -> list[Term]:
        out = [self.term()]
        while self.at("COMMA"):
            self.i += 1
            out.append(self.term())
        return out

    def term(self) -> Term:
        tok = self.take("IDENT")
        name = tok.text
        if self.at("LPAREN"):
            if name not in self.lang.function:
                raise ParseError(f"unknown function {name!r}", tok.pos)
            self.i += 1
            args = self.terms()
            self.take("RPAREN")
            return App(name, tuple(args))
        if name in self.lang.constant:
            return Const(name)
        if name in self.lang.function:
            raise ParseError(f"function {name!r} used without arguments", tok.pos)
        if name in self.lang.predicate:
            raise ParseError(f"predicate {name!r} used as a term", tok.pos)
        # A variable: innermost binding wins, then the caller-supplied sorts,
        # then the unique sort of a one-sorted language.
        for bname, bsort in reversed(self.bound):
            if bname == name:
                return Var(name, bsort)
        if name in self.var_sorts:
            return Var(name, self.var_sorts[name])
        if self.lang.is_one_sorted:
            return Var(name, self.lang.only_sort)
        raise ParseError(
            f"cannot infer the sort of free variable {name!r}; "
            "pass var_sorts or annotate",
            tok.pos,
        )


def parse_formula(
    text: str,
    lang: Language,
    var_sorts: Mapping[str, str] | None = None,
    allow_reserved: bool = False,
) -> Formula:
    """Parse text into a well-sorted Formula over lang.

    ``var_sorts`` assigns sorts to free variables (only needed for
    multi-sorted languages).  ``allow_reserved`` admits the ``#`` character
    in identifiers, for re-parsing machine-generated formulas.
    """
    tokens = tokenize(text, allow_reserved=allow_reserved)
    parser = _Parser(tokens, lang, var_sorts or {})
    f = parser.formula()
    tok = parser.cur
    if tok.kind != "EOF":
        raise ParseError(f"trailing input {tok.text!r}", tok.pos)
    sort_check(lang, f)
    return f


def print_formula(f: Formula) -> str:
    """Deterministic fully parenthesized rendering; inverse of parse."""
    return str(f)
