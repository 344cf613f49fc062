"""Recursive-descent parser for the bounded LTL text syntax.

Grammar (loosest binding first)::

    or      := and ("|" and)*
    and     := temp ("&" temp)*
    temp    := unary (("U" | "R") temp)?        # right associative
    unary   := ("!" | "X" | "G" | "F") unary | primary
    primary := atom | "true" | "false" | "(" or ")"

``G`` and ``F`` are desugared on the spot, so the returned tree only contains
the core node kinds (plus :class:`Not`, which :func:`to_pnf` removes).
"""
from __future__ import annotations

import re
from typing import Iterable, NamedTuple, Optional

from .formula import FALSE, TRUE, And, Atom, Formula, Next, Not, Or, Release, Until

KEYWORDS = {"X", "G", "F", "U", "R", "true", "false"}

_TOKEN_RE = re.compile(r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_.]*)|(?P<op>[!&|()]))")


class FormulaSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownAtomError(KeyError):
    def __init__(self, atom_id: str, offset: int):
        super().__init__(f"unknown atomic proposition {atom_id!r} at byte offset {offset}")
        self.atom_id = atom_id
        self.offset = offset


class _Tok(NamedTuple):
    kind: str  # "ident", "kw", "op", "eof"
    text: str
    offset: int


def _tokenize(text: str) -> list:
    toks = []
    pos = 0
    while True:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise FormulaSyntaxError(f"unexpected character {text[bad]!r}", _byte_offset(text, bad))
        start = m.start(m.lastgroup)
        word = m.group(m.lastgroup)
        if m.lastgroup == "ident":
            kind = "kw" if word in KEYWORDS else "ident"
        else:
            kind = "op"
        toks.append(_Tok(kind, word, _byte_offset(text, start)))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text.encode())))
    return toks


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode())


class _Parser:
    def __init__(self, text: str, known: Optional[set]):
        self.toks = _tokenize(text)
        self.i = 0
        self.known = known

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.take()
        if tok.text != text or tok.kind == "ident":
            raise FormulaSyntaxError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.offset)
        return tok

    def parse(self) -> Formula:
        f = self.disjunction()
        tok = self.peek()
        if tok.kind != "eof":
            raise FormulaSyntaxError(f"unexpected {tok.text!r}", tok.offset)
        return f

    def disjunction(self) -> Formula:
        args = [self.conjunction()]
        while self.peek().text == "|" and self.peek().kind == "op":
            self.take()
            args.append(self.conjunction())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conjunction(self) -> Formula:
        args = [self.temporal()]
        while self.peek().text == "&" and self.peek().kind == "op":
            self.take()
            args.append(self.temporal())
        return args[0] if len(args) == 1 else And(tuple(args))

    def temporal(self) -> Formula:
        left = self.unary()
        tok = self.peek()
        if tok.kind == "kw" and tok.text in ("U", "R"):
            self.take()
            right = self.temporal()
            return Until(left, right) if tok.text == "U" else Release(left, right)
        return left

    def unary(self) -> Formula:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "!":
            self.take()
            return Not(self.unary())
        if tok.kind == "kw" and tok.text in ("X", "G", "F"):
            self.take()
            child = self.unary()
            if tok.text == "X":
                return Next(child)
            if tok.text == "G":
                return Release(FALSE, child)
            return Until(TRUE, child)
        return self.primary()

    def primary(self) -> Formula:
        tok = self.take()
        if tok.kind == "op" and tok.text == "(":
            f = self.disjunction()
            self.expect(")")
            return f
        if tok.kind == "kw" and tok.text == "true":
            return TRUE
        if tok.kind == "kw" and tok.text == "false":
            return FALSE
        if tok.kind == "ident":
            if self.known is not None and tok.text not in self.known:
                raise UnknownAtomError(tok.text, tok.offset)
            return Atom(tok.text)
        what = tok.text or "end of input"
        raise FormulaSyntaxError(f"unexpected {what!r}", tok.offset)


def parse_formula(text: str, known_atoms: Optional[Iterable[str]] = None) -> Formula:
    """Parse ``text`` into an (un-normalized) formula.

    ``known_atoms`` restricts the admissible proposition ids; ``None`` accepts
    any identifier.
    """
    known = None if known_atoms is None else set(known_atoms)
    return _Parser(text, known).parse()
