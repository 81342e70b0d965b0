"""Text format for congestion games.

::

    # two parallel links
    players = 2
    resource a costs = [0, 6] capacity = none
    resource b costs = [0, 6] capacity = none
    structure = ep { par(arc(a), arc(b)) }

Other structures::

    structure = kuniform k = [1, 2, 1]
    structure = explicit { player 0 = [[a, b], [c]]  player 1 = [[c]] }

EP expressions are ``arc(id)``, ``par(A, B)`` and ``ext(id, A)``. Costs are
integers, decimals or fractions ``p/q``; ``#`` starts a comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .game import (
    Arc,
    CongestionGame,
    CostFunction,
    EP,
    Explicit,
    Extension,
    GameError,
    KUniform,
    Parallel,
)

_TOKEN = re.compile(
    r"\s+|#[^\n]*|(?P<num>-?\d+(?:/\d+|\.\d+)?)|(?P<word>[A-Za-z_][\w\-]*)|(?P<sym>[=\[\](),{}])"
)


class GameFileError(GameError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int


def tokenize(text: str) -> list[Token]:
    out, pos, line = [], 0, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise GameFileError(f"unexpected character {text[pos]!r}", line)
        if m.lastgroup:
            out.append(Token(m.lastgroup, m.group(), line))
        line += m.group().count("\n")
        pos = m.end()
    return out


class _Parser:
    def __init__(self, tokens: list[Token]) -> None:
        self.toks = tokens
        self.pos = 0

    @property
    def line(self) -> int | None:
        if self.pos < len(self.toks):
            return self.toks[self.pos].line
        return self.toks[-1].line if self.toks else None

    def peek(self) -> Token | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self, what: str) -> Token:
        tok = self.peek()
        if tok is None:
            raise GameFileError(f"unexpected end of file, expected {what}", self.line)
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next(repr(text))
        if tok.text != text:
            raise GameFileError(f"expected {text!r}, got {tok.text!r}", tok.line)
        return tok

    def ident(self) -> Token:
        tok = self.next("an identifier")
        if tok.kind == "sym" or (tok.kind == "num" and not tok.text.isdigit()):
            raise GameFileError(f"expected an identifier, got {tok.text!r}", tok.line)
        return tok

    def integer(self, field: str) -> int:
        tok = self.next(field)
        if tok.kind != "num" or not tok.text.lstrip("-").isdigit():
            raise GameFileError(f"{field}: expected an integer, got {tok.text!r}", tok.line)
        return int(tok.text)

    def number(self, field: str) -> Fraction:
        tok = self.next(field)
        if tok.kind != "num":
            raise GameFileError(f"{field}: expected a number, got {tok.text!r}", tok.line)
        return Fraction(tok.text)

    def listof(self, item):
        self.expect("[")
        out = []
        if self.peek() and self.peek().text == "]":
            self.next("]")
            return out
        while True:
            out.append(item())
            tok = self.next("',' or ']'")
            if tok.text == "]":
                return out
            if tok.text != ",":
                raise GameFileError(f"expected ',' or ']', got {tok.text!r}", tok.line)


@dataclass
class _Resource:
    name: str
    costs: list[Fraction]
    capacity: int | None
    line: int


def parse_game(text: str) -> CongestionGame:
    p = _Parser(tokenize(text))
    players: int | None = None
    resources: list[_Resource] = []
    structure = None
    while p.peek() is not None:
        head = p.ident()
        if head.text == "players":
            if players is not None:
                raise GameFileError("players given twice", head.line)
            p.expect("=")
            players = p.integer("players")
            if players < 1:
                raise GameFileError("players must be >= 1", head.line)
        elif head.text == "resource":
            name = p.ident().text
            if any(r.name == name for r in resources):
                raise GameFileError(f"resource {name!r} defined twice", head.line)
            p.expect("costs")
            p.expect("=")
            costs = p.listof(lambda: p.number(f"resource {name} costs"))
            cap = None
            if p.peek() is not None and p.peek().text == "capacity":
                p.next("capacity")
                p.expect("=")
                tok = p.peek()
                if tok is not None and tok.text == "none":
                    p.next("none")
                else:
                    cap = p.integer(f"resource {name} capacity")
            resources.append(_Resource(name, costs, cap, head.line))
        elif head.text == "structure":
            if structure is not None:
                raise GameFileError("structure given twice", head.line)
            p.expect("=")
            structure = (head.line, _parse_structure(p))
        else:
            raise GameFileError(f"unknown statement {head.text!r}", head.line)

    if players is None:
        raise GameFileError("missing 'players = <int>'")
    if not resources:
        raise GameFileError("no resources defined")
    if structure is None:
        raise GameFileError("missing 'structure = ...'")
    index = {r.name: e for e, r in enumerate(resources)}
    costs = []
    for r in resources:
        try:
            costs.append(CostFunction(tuple(r.costs), r.capacity))
        except GameError as exc:
            raise GameFileError(f"resource {r.name}: {exc}", r.line) from None
    line, build = structure
    try:
        return CongestionGame(
            players, tuple(costs), build(index, players), tuple(r.name for r in resources)
        )
    except GameFileError:
        raise
    except GameError as exc:
        raise GameFileError(str(exc), line) from None


def _lookup(index: dict[str, int], tok: Token) -> int:
    if tok.text not in index:
        raise GameFileError(f"unknown resource {tok.text!r}", tok.line)
    return index[tok.text]


def _parse_structure(p: _Parser):
    kind = p.ident()
    if kind.text == "ep":
        p.expect("{")
        expr = _parse_ep(p)
        p.expect("}")
        return lambda index, n: EP(expr(index))
    if kind.text == "kuniform":
        p.expect("k")
        p.expect("=")
        k = p.listof(lambda: p.integer("k"))
        return lambda index, n: KUniform(tuple(k))
    if kind.text == "explicit":
        p.expect("{")
        sets: dict[int, list[list[Token]]] = {}
        while p.peek() is not None and p.peek().text != "}":
            tok = p.expect("player")
            i = p.integer("player")
            if i in sets:
                raise GameFileError(f"player {i} given twice", tok.line)
            p.expect("=")
            sets[i] = p.listof(lambda: p.listof(p.ident))
        p.expect("}")

        def build(index, n):
            if sorted(sets) != list(range(n)):
                raise GameError(f"explicit structure must list players 0..{n - 1}")
            return Explicit(
                tuple(
                    tuple(frozenset(_lookup(index, t) for t in S) for S in sets[i])
                    for i in range(n)
                )
            )

        return build
    raise GameFileError(f"unknown structure {kind.text!r}", kind.line)


def _parse_ep(p: _Parser):
    head = p.ident()
    p.expect("(")
    if head.text == "arc":
        r = p.ident()
        p.expect(")")
        return lambda index: Arc(_lookup(index, r))
    if head.text == "par":
        a = _parse_ep(p)
        p.expect(",")
        b = _parse_ep(p)
        p.expect(")")
        return lambda index: Parallel(a(index), b(index))
    if head.text == "ext":
        r = p.ident()
        p.expect(",")
        a = _parse_ep(p)
        p.expect(")")
        return lambda index: Extension(_lookup(index, r), a(index))
    raise GameFileError(f"unknown EP expression {head.text!r}", head.line)


def load_game(path: str | Path) -> CongestionGame:
    return parse_game(Path(path).read_text(encoding="utf-8"))


def _num(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def dump_game(g: CongestionGame) -> str:
    """Inverse of ``parse_game`` (up to whitespace and comments)."""
    names = g.resource_names or tuple(f"r{e}" for e in range(g.m))
    lines = [f"players = {g.n}"]
    for name, c in zip(names, g.resources):
        cap = "none" if c.capacity is None else str(c.capacity)
        lines.append(f"resource {name} costs = [{', '.join(map(_num, c.values))}] capacity = {cap}")
    s = g.structure
    if isinstance(s, EP):
        lines.append(f"structure = ep {{ {_dump_ep(s.network, names)} }}")
    elif isinstance(s, KUniform):
        lines.append(f"structure = kuniform k = [{', '.join(map(str, s.k))}]")
    else:
        lines.append("structure = explicit {")
        for i, S in enumerate(s.strategies):
            body = ", ".join("[" + ", ".join(names[e] for e in sorted(r)) + "]" for r in S)
            lines.append(f"  player {i} = [{body}]")
        lines.append("}")
    return "\n".join(lines) + "\n"


def _dump_ep(net, names) -> str:
    if isinstance(net, Arc):
        return f"arc({names[net.resource]})"
    if isinstance(net, Parallel):
        return f"par({_dump_ep(net.left, names)}, {_dump_ep(net.right, names)})"
    return f"ext({names[net.resource]}, {_dump_ep(net.sub, names)})"
