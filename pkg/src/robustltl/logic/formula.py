"""Bounded LTL syntax trees.

Formulas are immutable and hashable so the encoder can share work between
structurally identical subformulas. ``Always`` and ``Eventually`` are not node
kinds; :func:`always` and :func:`eventually` build their release/until forms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union


class Formula:
    __slots__ = ()

    def __str__(self) -> str:
        return pretty(self)


@dataclass(frozen=True, repr=False)
class TrueF(Formula):
    def __repr__(self) -> str:
        return "TRUE"


@dataclass(frozen=True, repr=False)
class FalseF(Formula):
    def __repr__(self) -> str:
        return "FALSE"


TRUE = TrueF()
FALSE = FalseF()


@dataclass(frozen=True)
class Atom(Formula):
    id: str


@dataclass(frozen=True)
class NegAtom(Formula):
    id: str


@dataclass(frozen=True)
class Not(Formula):
    """General negation; only present before :func:`to_pnf`."""

    child: Formula


@dataclass(frozen=True)
class And(Formula):
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) < 2:
            raise ValueError("And needs at least two operands")


@dataclass(frozen=True)
class Or(Formula):
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) < 2:
            raise ValueError("Or needs at least two operands")


@dataclass(frozen=True)
class Next(Formula):
    child: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Release(Formula):
    left: Formula
    right: Formula


AnyFormula = Union[TrueF, FalseF, Atom, NegAtom, Not, And, Or, Next, Until, Release]


def always(f: Formula) -> Release:
    return Release(FALSE, f)


def eventually(f: Formula) -> Until:
    return Until(TRUE, f)


def children(f: Formula) -> tuple:
    if isinstance(f, (And, Or)):
        return f.args
    if isinstance(f, (Not, Next)):
        return (f.child,)
    if isinstance(f, (Until, Release)):
        return (f.left, f.right)
    return ()


def walk(f: Formula) -> Iterator[Formula]:
    """Pre-order traversal."""
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def atoms(f: Formula) -> set:
    return {n.id for n in walk(f) if isinstance(n, (Atom, NegAtom))}


def is_pnf(f: Formula) -> bool:
    return not any(isinstance(n, Not) for n in walk(f))


def depth(f: Formula) -> int:
    ch = children(f)
    return 0 if not ch else 1 + max(depth(c) for c in ch)


def to_pnf(f: Formula) -> Formula:
    """Push negations down to the atoms using the standard dualities."""
    return _pnf(f, False)


def _pnf(f: Formula, neg: bool) -> Formula:
    if isinstance(f, Not):
        return _pnf(f.child, not neg)
    if isinstance(f, TrueF):
        return FALSE if neg else TRUE
    if isinstance(f, FalseF):
        return TRUE if neg else FALSE
    if isinstance(f, Atom):
        return NegAtom(f.id) if neg else f
    if isinstance(f, NegAtom):
        return Atom(f.id) if neg else f
    if isinstance(f, And):
        args = tuple(_pnf(a, neg) for a in f.args)
        return Or(args) if neg else And(args)
    if isinstance(f, Or):
        args = tuple(_pnf(a, neg) for a in f.args)
        return And(args) if neg else Or(args)
    if isinstance(f, Next):
        return Next(_pnf(f.child, neg))
    if isinstance(f, Until):
        l, r = _pnf(f.left, neg), _pnf(f.right, neg)
        return Release(l, r) if neg else Until(l, r)
    if isinstance(f, Release):
        l, r = _pnf(f.left, neg), _pnf(f.right, neg)
        return Until(l, r) if neg else Release(l, r)
    raise TypeError(f"not a formula: {f!r}")


# precedence: | < & < U,R < unary < primary
_PREC_OR, _PREC_AND, _PREC_TEMP, _PREC_UNARY, _PREC_PRIMARY = 1, 2, 3, 4, 5


def _prec(f: Formula) -> int:
    if isinstance(f, Or):
        return _PREC_OR
    if isinstance(f, And):
        return _PREC_AND
    if isinstance(f, Release) and f.left == FALSE:
        return _PREC_UNARY
    if isinstance(f, Until) and f.left == TRUE:
        return _PREC_UNARY
    if isinstance(f, (Until, Release)):
        return _PREC_TEMP
    if isinstance(f, (Not, NegAtom, Next)):
        return _PREC_UNARY
    return _PREC_PRIMARY


def _wrap(f: Formula, min_prec: int) -> str:
    s = pretty(f)
    return s if _prec(f) >= min_prec else f"({s})"


def pretty(f: Formula) -> str:
    """Render in the concrete syntax accepted by :func:`parse_formula`."""
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Atom):
        return f.id
    if isinstance(f, NegAtom):
        return "!" + f.id
    if isinstance(f, Not):
        return "!" + _wrap(f.child, _PREC_UNARY)
    if isinstance(f, Next):
        return "X " + _wrap(f.child, _PREC_UNARY)
    if isinstance(f, Release) and f.left == FALSE:
        return "G " + _wrap(f.right, _PREC_UNARY)
    if isinstance(f, Until) and f.left == TRUE:
        return "F " + _wrap(f.right, _PREC_UNARY)
    if isinstance(f, (Until, Release)):
        op = "U" if isinstance(f, Until) else "R"
        return f"{_wrap(f.left, _PREC_UNARY)} {op} {_wrap(f.right, _PREC_TEMP)}"
    if isinstance(f, And):
        return " & ".join(_wrap(a, _PREC_TEMP) for a in f.args)
    if isinstance(f, Or):
        return " | ".join(_wrap(a, _PREC_AND) for a in f.args)
    raise TypeError(f"not a formula: {f!r}")
